"""Winding numbers, hole degrees and bulk-vortex detection.

Bad regions follow a discrete ball construction.  Low-modulus nodes are
grouped into grid-connected clusters.  Each cluster is wrapped in its
smallest enclosing disk, and overlapping disks are merged until all are
disjoint.  On a lattice coarser than the core size a vortex need not depress
any nodal modulus.  Corners of plaquettes with nonzero gauge-invariant
vorticity are therefore added to the low-modulus set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import AmbiguousWinding, LoopBroken, ZeroOnLoop
from .geometry import INTERIOR, DiscreteLoop, PerforatedDomain, circle_loop
from .gl import GLState
from .london import wrap_angle

MODULUS_FLOOR = 1e-8


def _grid_values(u) -> np.ndarray:
    return u.u_grid() if isinstance(u, GLState) else np.asarray(u)


def winding_value(u, loop: DiscreteLoop, floor: float = MODULUS_FLOOR) -> float:
    """Unrounded winding: the sum of wrapped phase steps over ``2*pi``."""
    vals = _grid_values(u)[loop.nodes[:, 0], loop.nodes[:, 1]]
    mod = np.abs(vals)
    if np.any(mod < floor):
        k = int(np.argmin(mod))
        raise ZeroOnLoop(f"|u| = {mod[k]:.3e} below floor at loop node {tuple(loop.nodes[k])}")
    steps = np.angle(np.roll(vals, -1) * np.conj(vals))
    return float(steps.sum() / (2 * np.pi))


def winding_number(u, loop: DiscreteLoop, floor: float = MODULUS_FLOOR) -> int:
    """Degree of ``u`` along ``loop``.

    ``u`` is a complex array over the grid nodes or a :class:`GLState`.

    Raises
    ------
    ZeroOnLoop
        If ``|u|`` drops below ``floor`` at a loop node.
    AmbiguousWinding
        If the unrounded value is more than 0.2 from an integer.
    """
    w = winding_value(u, loop, floor)
    k = int(np.floor(w + 0.5))
    if abs(w - k) > 0.2:
        raise AmbiguousWinding(f"winding {w:.3f} is not close to an integer")
    return k


@dataclass(frozen=True)
class HoleDegrees:
    """Hole windings measured on loops of radius ``multiple * delta``.

    ``degrees[k]`` belongs to ``radii[k]``; an entry is ``None`` when the loop
    could not be measured.
    """

    radii: tuple[float, ...]
    degrees: tuple[tuple[int | None, ...], ...]
    min_modulus: tuple[tuple[float, ...], ...]

    @property
    def consistent(self) -> bool:
        return len(set(self.degrees)) <= 1 and all(d is not None for row in self.degrees for d in row)

    def disagreements(self) -> list[int]:
        """Holes whose degree differs between radii."""
        if not self.degrees:
            return []
        n = len(self.degrees[0])
        return [j for j in range(n) if len({row[j] for row in self.degrees}) > 1]

    def at(self, k: int = 0) -> tuple[int | None, ...]:
        return self.degrees[k]

    def to_dict(self):
        return {
            "radii_over_delta": list(self.radii),
            "degrees": [list(r) for r in self.degrees],
            "min_modulus": [list(r) for r in self.min_modulus],
            "consistent": self.consistent,
        }


def hole_degrees(state: GLState, radii=(2.0, 4.0)) -> HoleDegrees:
    """Winding around every hole on loops of radius ``m * delta`` for each multiple ``m``.

    Raises
    ------
    LoopBroken
        If a loop cannot be drawn through interior nodes.
    """
    grid = state.grid
    dom = grid.domain
    ug = state.u_grid()
    degs, mins = [], []
    for m in radii:
        row, mrow = [], []
        for a in dom.holes:
            loop = circle_loop(grid, a, m * dom.hole_radius, allowed=(INTERIOR,))
            mod = np.abs(ug[loop.nodes[:, 0], loop.nodes[:, 1]])
            mrow.append(float(mod.min()))
            try:
                row.append(winding_number(ug, loop))
            except (ZeroOnLoop, AmbiguousWinding):
                row.append(None)
        degs.append(tuple(row))
        mins.append(tuple(mrow))
    return HoleDegrees(tuple(float(r) for r in radii), tuple(degs), tuple(mins))


def plaquette_vorticity(state: GLState) -> tuple[np.ndarray, np.ndarray]:
    """Integer vorticity of every cell with four interior corners.

    Returns the cell indices and their vorticities.  The value is the sum of
    gauge-invariant wrapped phase steps plus the cell flux, over 2 pi.
    """
    lat = state.lattice
    cells = lat.gl_cells
    unk = lat.grid.unknown_index.ravel()
    edges = lat.cell_edges[cells]
    p = unk[lat.edge_p[edges]]
    q = unk[lat.edge_q[edges]]
    A = state.A[edges]
    steps = wrap_angle(np.angle(state.u[q] * np.conj(state.u[p])) - A)
    flux = np.sum(A * lat.cell_signs[cells], axis=1)
    total = np.sum(steps * lat.cell_signs[cells], axis=1) + flux
    return cells, np.rint(total / (2 * np.pi)).astype(np.int64)


def smallest_enclosing_disk(points: np.ndarray) -> tuple[np.ndarray, float]:
    """Welzl's algorithm (iterative form) on a fixed pseudo-random order."""
    pts = np.asarray(points, float)
    pts = pts[np.random.default_rng(0).permutation(len(pts))]
    if len(pts) == 0:
        raise ValueError("no points")

    def circle2(a, b):
        c = (a + b) / 2
        return c, float(np.hypot(*(a - c)))

    def circle3(a, b, c):
        ax, ay = a
        bx, by = b
        cx, cy = c
        d = 2 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
        if abs(d) < 1e-300:
            # collinear: widest pair
            pairs = [circle2(a, b), circle2(a, c), circle2(b, c)]
            return max(pairs, key=lambda t: t[1])
        ux = ((ax**2 + ay**2) * (by - cy) + (bx**2 + by**2) * (cy - ay) + (cx**2 + cy**2) * (ay - by)) / d
        uy = ((ax**2 + ay**2) * (cx - bx) + (bx**2 + by**2) * (ax - cx) + (cx**2 + cy**2) * (bx - ax)) / d
        ctr = np.array([ux, uy])
        return ctr, float(np.hypot(*(a - ctr)))

    def inside(c, r, p):
        return np.hypot(*(p - c)) <= r * (1 + 1e-12) + 1e-14

    c, r = pts[0].copy(), 0.0
    for i in range(1, len(pts)):
        if inside(c, r, pts[i]):
            continue
        c, r = pts[i].copy(), 0.0
        for j in range(i):
            if inside(c, r, pts[j]):
                continue
            c, r = circle2(pts[i], pts[j])
            for k in range(j):
                if not inside(c, r, pts[k]):
                    c, r = circle3(pts[i], pts[j], pts[k])
    return c, r


def _merge_two(c1, r1, c2, r2):
    d = float(np.hypot(*(c2 - c1)))
    if d + r2 <= r1:
        return c1, r1
    if d + r1 <= r2:
        return c2, r2
    r = (d + r1 + r2) / 2
    c = c1 + (c2 - c1) * ((r - r1) / d)
    return c, r


@dataclass(frozen=True)
class BadRegion:
    center: tuple[float, float]
    radius: float
    degree: int | None
    min_modulus: float
    degree_method: str

    def to_dict(self):
        return {"center": list(self.center), "radius": self.radius, "degree": self.degree,
                "min_modulus": self.min_modulus, "degree_method": self.degree_method}


def find_bad_regions(state: GLState, theta: float = 0.5, use_vorticity: bool = True) -> list[BadRegion]:
    """Cover the low-modulus set by disjoint disks and attach a degree to each.

    A node is bad when ``|u| <= 1 - theta``.  With ``use_vorticity`` the
    corners of plaquettes with nonzero vorticity are bad as well.  A region's
    degree is the winding on a loop of radius ``r + 2h`` when that loop runs
    through interior nodes with nonzero modulus.  Otherwise it is the total
    plaquette vorticity inside the disk.
    """
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    grid = state.grid
    lat = state.lattice
    h = grid.h
    ug = state.u_grid()
    interior = grid.labels == INTERIOR
    bad = interior & (np.abs(ug) <= 1 - theta)
    cells, vort = plaquette_vorticity(state)
    if use_vorticity:
        for c in cells[vort != 0]:
            i, j = lat.cell_ij[c]
            bad[i:i + 2, j:j + 2] = True
    if not bad.any():
        return []
    labels, n = ndimage.label(bad)
    X, Y = grid.coords
    disks = []
    for k in range(1, n + 1):
        sel = labels == k
        pts = np.column_stack([X[sel], Y[sel]])
        c, r = smallest_enclosing_disk(pts)
        disks.append([c, r + h / 2, float(np.abs(ug[sel]).min())])
    merged = True
    while merged:
        merged = False
        for a in range(len(disks)):
            for b in range(a + 1, len(disks)):
                ca, ra, ma = disks[a]
                cb, rb, mb = disks[b]
                if np.hypot(*(ca - cb)) < ra + rb:
                    c, r = _merge_two(ca, ra, cb, rb)
                    disks[a] = [c, r, min(ma, mb)]
                    disks.pop(b)
                    merged = True
                    break
            if merged:
                break
    centers = lat.cell_centers[cells]
    regions = []
    for c, r, m in sorted(disks, key=lambda t: (t[0][0], t[0][1])):
        degree, method = None, "none"
        try:
            loop = circle_loop(grid, c, r + 2 * h, allowed=(INTERIOR,))
            degree = winding_number(ug, loop)
            method = "loop"
        except (LoopBroken, ZeroOnLoop, AmbiguousWinding):
            inside = np.hypot(centers[:, 0] - c[0], centers[:, 1] - c[1]) <= r + h
            if inside.any():
                degree = int(vort[inside].sum())
                method = "plaquettes"
        regions.append(BadRegion((float(c[0]), float(c[1])), float(r), degree, m, method))
    return regions


def _touches_hole_collar(region: BadRegion, domain: PerforatedDomain) -> bool:
    for a in domain.holes:
        if np.hypot(region.center[0] - a[0], region.center[1] - a[1]) - region.radius < 4 * domain.hole_radius:
            return True
    return False


def _inside_perforated(region: BadRegion, domain: PerforatedDomain) -> bool:
    cx, cy = region.center
    if float(domain.outer.distance_inside(cx, cy)) <= region.radius:
        return False
    return all(np.hypot(cx - a[0], cy - a[1]) > region.radius + domain.hole_radius for a in domain.holes)


@dataclass(frozen=True)
class VortexReport:
    hole_degrees: tuple[int | None, ...]
    per_radius: HoleDegrees
    bad_regions: tuple[BadRegion, ...]
    bulk_degree_sum: int

    def to_dict(self):
        return {
            "hole_degrees": list(self.hole_degrees),
            "per_radius": self.per_radius.to_dict(),
            "bad_regions": [r.to_dict() for r in self.bad_regions],
            "bulk_degree_sum": self.bulk_degree_sum,
        }


def vortex_report(state: GLState, radii=(2.0, 4.0), theta: float = 0.5) -> VortexReport:
    dom = state.grid.domain
    per = hole_degrees(state, radii)
    regions = tuple(find_bad_regions(state, theta))
    bulk = sum(abs(r.degree or 0) for r in regions if _inside_perforated(r, dom))
    return VortexReport(per.at(0), per, regions, int(bulk))


@dataclass(frozen=True)
class BulkVortexCheck:
    passed: bool
    offending: tuple[BadRegion, ...]

    def to_dict(self):
        return {"passed": self.passed, "offending": [r.to_dict() for r in self.offending]}


def assert_no_bulk_vortices(report: VortexReport, domain: PerforatedDomain) -> BulkVortexCheck:
    """Pass iff every bad region touches a hole collar or carries degree zero.

    A region whose degree could not be measured counts as offending unless
    it touches a hole collar.
    """
    bad = tuple(r for r in report.bad_regions
                if not _touches_hole_collar(r, domain) and r.degree != 0)
    return BulkVortexCheck(not bad, bad)
