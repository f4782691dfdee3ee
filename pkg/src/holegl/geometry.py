"""Perforated domains, classified Cartesian grids, lattices and discrete loops.

A :class:`PerforatedDomain` is a disk or rectangle with circular holes of a
common radius.  :func:`build_grid` lays a uniform node grid over it and tags
each node.  Interior nodes are the unknowns of every elliptic solve.  The
Dirichlet-labelled nodes are the ghost nodes just across the boundary.  For
each axis edge that leaves the interior, the grid also records where the edge
crosses the boundary (the *cut*), so solvers can place boundary data exactly
on the circle instead of at the ghost node.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import (
    HoleOverlap,
    HoleTooCloseToBoundary,
    LoopBroken,
    NonPositiveRadius,
    ResolutionTooCoarse,
)

EXTERIOR = 0
INTERIOR = 1
DIRICHLET_OUTER = 2
DIRICHLET_HOLE = 3
HOLE_INTERIOR = 4

LABEL_NAMES = {
    EXTERIOR: "exterior",
    INTERIOR: "interior",
    DIRICHLET_OUTER: "dirichlet_outer",
    DIRICHLET_HOLE: "dirichlet_hole",
    HOLE_INTERIOR: "hole_interior",
}

#: Smallest cut fraction kept; closer cuts are clamped to bound the conditioning.
MIN_CUT_FRACTION = 1e-3

# Axis directions (di, dj) in the order +x, -x, +y, -y.
AXIS_STEPS = ((1, 0), (-1, 0), (0, 1), (0, -1))


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DiskRegion:
    center: tuple[float, float]
    radius: float

    def contains(self, x, y):
        """Strict interior test, vectorized."""
        return (x - self.center[0]) ** 2 + (y - self.center[1]) ** 2 < self.radius**2

    def bounds(self):
        cx, cy = self.center
        r = self.radius
        return (cx - r, cy - r), (cx + r, cy + r)

    def distance_inside(self, x, y):
        """Distance from an inside point to the boundary."""
        return self.radius - np.hypot(x - self.center[0], y - self.center[1])

    def project(self, x, y):
        """Nearest boundary point (radial projection)."""
        dx = np.asarray(x, float) - self.center[0]
        dy = np.asarray(y, float) - self.center[1]
        r = np.hypot(dx, dy)
        r = np.where(r == 0, 1.0, r)
        return self.center[0] + self.radius * dx / r, self.center[1] + self.radius * dy / r

    def crossing(self, px, py, dx, dy):
        """Fraction t in (0, 1] where p + t*d leaves the disk (p inside)."""
        ox = px - self.center[0]
        oy = py - self.center[1]
        a = dx * dx + dy * dy
        b = 2.0 * (ox * dx + oy * dy)
        c = ox * ox + oy * oy - self.radius**2
        return (-b + np.sqrt(b * b - 4 * a * c)) / (2 * a)

    def area(self) -> float:
        return float(np.pi * self.radius**2)

    def to_dict(self):
        return {"kind": "disk", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class RectangleRegion:
    corner_lo: tuple[float, float]
    corner_hi: tuple[float, float]

    def contains(self, x, y):
        (x0, y0), (x1, y1) = self.corner_lo, self.corner_hi
        return (x > x0) & (x < x1) & (y > y0) & (y < y1)

    def bounds(self):
        return self.corner_lo, self.corner_hi

    def distance_inside(self, x, y):
        (x0, y0), (x1, y1) = self.corner_lo, self.corner_hi
        return np.minimum(np.minimum(x - x0, x1 - x), np.minimum(y - y0, y1 - y))

    def project(self, x, y):
        (x0, y0), (x1, y1) = self.corner_lo, self.corner_hi
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        cx = np.clip(x, x0, x1)
        cy = np.clip(y, y0, y1)
        inside = (x > x0) & (x < x1) & (y > y0) & (y < y1)
        # points inside snap to the nearest wall
        dists = np.stack([x - x0, x1 - x, y - y0, y1 - y])
        wall = np.argmin(dists, axis=0)
        px = np.where(wall == 0, x0, np.where(wall == 1, x1, x))
        py = np.where(wall == 2, y0, np.where(wall == 3, y1, y))
        return np.where(inside, px, cx), np.where(inside, py, cy)

    def crossing(self, px, py, dx, dy):
        (x0, y0), (x1, y1) = self.corner_lo, self.corner_hi
        with np.errstate(divide="ignore", invalid="ignore"):
            tx = np.where(dx > 0, (x1 - px) / dx, np.where(dx < 0, (x0 - px) / dx, np.inf))
            ty = np.where(dy > 0, (y1 - py) / dy, np.where(dy < 0, (y0 - py) / dy, np.inf))
        return np.minimum(tx, ty)

    def area(self) -> float:
        (x0, y0), (x1, y1) = self.corner_lo, self.corner_hi
        return float((x1 - x0) * (y1 - y0))

    def to_dict(self):
        return {"kind": "rectangle", "corner_lo": list(self.corner_lo), "corner_hi": list(self.corner_hi)}


@dataclass(frozen=True)
class PerforatedDomain:
    """Outer region minus closed disks of radius ``hole_radius`` around ``holes``."""

    outer: DiskRegion | RectangleRegion
    holes: tuple[tuple[float, float], ...]
    hole_radius: float

    @property
    def delta(self) -> float:
        return self.hole_radius

    @property
    def n_holes(self) -> int:
        return len(self.holes)

    def hole_area(self) -> float:
        return float(np.pi * self.hole_radius**2)

    def cutoff_radius(self) -> float:
        """Largest R such that the disks B(a_j, R) are disjoint and inside the outer region."""
        if not self.holes:
            return float("inf")
        centers = np.asarray(self.holes, float)
        r = float(np.min(self.outer.distance_inside(centers[:, 0], centers[:, 1])))
        for i in range(len(centers)):
            for j in range(i + 1, len(centers)):
                r = min(r, 0.5 * float(np.hypot(*(centers[i] - centers[j]))))
        return r

    def with_radius(self, hole_radius: float) -> "PerforatedDomain":
        return PerforatedDomain(self.outer, self.holes, hole_radius)

    def to_dict(self):
        return {
            "outer": self.outer.to_dict(),
            "holes": [list(a) for a in self.holes],
            "hole_radius": self.hole_radius,
        }


def disk_domain(holes: Sequence[Sequence[float]] = (), delta: float = 0.05,
                center=(0.0, 0.0), radius: float = 1.0) -> PerforatedDomain:
    """Convenience constructor for a perforated disk; the result is validated."""
    dom = PerforatedDomain(
        DiskRegion((float(center[0]), float(center[1])), float(radius)),
        tuple((float(a[0]), float(a[1])) for a in holes),
        float(delta),
    )
    return validate_domain(dom)


def rectangle_domain(corner_lo, corner_hi, holes=(), delta: float = 0.05) -> PerforatedDomain:
    dom = PerforatedDomain(
        RectangleRegion((float(corner_lo[0]), float(corner_lo[1])),
                        (float(corner_hi[0]), float(corner_hi[1]))),
        tuple((float(a[0]), float(a[1])) for a in holes),
        float(delta),
    )
    return validate_domain(dom)


def validate_domain(domain: PerforatedDomain) -> PerforatedDomain:
    """Return ``domain`` unchanged if its geometric invariants hold.

    Raises
    ------
    NonPositiveRadius
        If the hole radius or the outer size is not positive.
    HoleTooCloseToBoundary
        If some hole is closer than ``2*delta`` to the outer boundary.
    HoleOverlap
        If two hole centers are closer than ``4*delta``.
    """
    delta = domain.hole_radius
    outer = domain.outer
    if isinstance(outer, DiskRegion):
        if not outer.radius > 0:
            raise NonPositiveRadius("outer disk radius must be positive")
    else:
        (x0, y0), (x1, y1) = outer.corner_lo, outer.corner_hi
        if not (x1 > x0 and y1 > y0):
            raise NonPositiveRadius("rectangle corners must satisfy lo < hi")
    if not delta > 0:
        raise NonPositiveRadius(f"hole radius must be positive, got {delta}", hole=0 if domain.holes else None)
    for j, (ax, ay) in enumerate(domain.holes):
        inside = bool(outer.contains(ax, ay))
        clearance = float(outer.distance_inside(ax, ay)) - delta
        if not inside or clearance < 2 * delta - 1e-12:
            raise HoleTooCloseToBoundary(
                f"hole {j} at ({ax}, {ay}) has clearance {clearance:.4g} < 2*delta", hole=j
            )
    for i in range(domain.n_holes):
        for j in range(i + 1, domain.n_holes):
            sep = float(np.hypot(domain.holes[i][0] - domain.holes[j][0],
                                 domain.holes[i][1] - domain.holes[j][1]))
            if sep < 4 * delta - 1e-12:
                raise HoleOverlap(f"holes {i} and {j} are {sep:.4g} apart (< 4*delta)", hole=j)
    return domain


@dataclass(frozen=True)
class CutEdges:
    """Axis edges from an interior node to a ghost node across the boundary.

    ``theta`` is the fraction of the edge from the interior node to the
    boundary crossing; ``boundary`` is -1 for the outer boundary and the hole
    index otherwise.
    """

    node: np.ndarray       # flat index of the interior node
    unknown: np.ndarray    # unknown index of the interior node
    ghost: np.ndarray      # flat index of the ghost node
    theta: np.ndarray
    boundary: np.ndarray
    point: np.ndarray      # (n, 2) crossing coordinates

    def __len__(self):
        return len(self.node)


@dataclass(frozen=True, eq=False)
class ClassifiedGrid:
    """Uniform node grid with one label per node.

    Node ``(i, j)`` sits at ``origin + h*(i, j)``; arrays are indexed ``[i, j]``
    and flat indices use C order.
    """

    domain: PerforatedDomain
    h: float
    origin: tuple[float, float]
    dims: tuple[int, int]
    labels: np.ndarray
    hole_index: np.ndarray
    unknown_index: np.ndarray
    cuts: CutEdges
    ignore_holes: bool = False

    @property
    def n_unknowns(self) -> int:
        return int(np.count_nonzero(self.labels == INTERIOR))

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        nx, ny = self.dims
        x = self.origin[0] + self.h * np.arange(nx)
        y = self.origin[1] + self.h * np.arange(ny)
        X, Y = np.meshgrid(x, y, indexing="ij")
        return _frozen(X), _frozen(Y)

    @cached_property
    def interior_flat(self) -> np.ndarray:
        """Flat node indices of interior nodes in unknown order."""
        flat = np.flatnonzero(self.labels.ravel() == INTERIOR)
        order = self.unknown_index.ravel()[flat]
        out = np.empty_like(flat)
        out[order] = flat
        return _frozen(out)

    def node_position(self, i, j):
        return self.origin[0] + self.h * np.asarray(i), self.origin[1] + self.h * np.asarray(j)

    def label_counts(self) -> dict:
        counts = {name: int(np.count_nonzero(self.labels == code)) for code, name in LABEL_NAMES.items()}
        for j in range(self.domain.n_holes):
            counts[f"dirichlet_hole[{j}]"] = int(
                np.count_nonzero((self.labels == DIRICHLET_HOLE) & (self.hole_index == j)))
            counts[f"hole_interior[{j}]"] = int(
                np.count_nonzero((self.labels == HOLE_INTERIOR) & (self.hole_index == j)))
        return counts

    def hole_nodes(self, j: int) -> np.ndarray:
        """Boolean mask of nodes (boundary ring and inside) belonging to hole ``j``."""
        return (self.hole_index == j) & ((self.labels == DIRICHLET_HOLE) | (self.labels == HOLE_INTERIOR))

    def same_layout(self, other: "ClassifiedGrid") -> bool:
        return (
            self is other
            or (self.h == other.h and self.origin == other.origin and self.dims == other.dims
                and self.ignore_holes == other.ignore_holes and self.domain == other.domain)
        )

    def without_holes(self) -> "ClassifiedGrid":
        """Grid over the same outer region with the holes treated as interior."""
        if self.ignore_holes:
            return self
        return build_grid(self.domain, self.h, ignore_holes=True)

    @cached_property
    def lattice(self) -> "Lattice":
        return build_lattice(self)

    def dump_labels_csv(self, path) -> None:
        """Write ``x,y,label`` rows for every node (debug aid)."""
        X, Y = self.coords
        with open(path, "w") as fh:
            fh.write("x,y,label\n")
            for x, y, lab, hj in zip(X.ravel(), Y.ravel(), self.labels.ravel(), self.hole_index.ravel()):
                name = LABEL_NAMES[int(lab)]
                if hj >= 0:
                    name = f"{name}[{hj}]"
                fh.write(f"{x:.10g},{y:.10g},{name}\n")


def build_grid(domain: PerforatedDomain, h: float, ignore_holes: bool = False) -> ClassifiedGrid:
    """Lay a uniform grid of spacing ``h`` over ``domain`` and classify the nodes.

    Interior nodes lie strictly inside the outer region and outside every
    closed hole disk.  Non-interior nodes that share an axis edge with an
    interior node become Dirichlet ghosts; the remaining nodes inside a hole
    are ``hole_interior`` and everything else is ``exterior``.

    Raises
    ------
    ResolutionTooCoarse
        If ``h > delta/4`` while holes are present.
    """
    validate_domain(domain)
    h = float(h)
    delta = domain.hole_radius
    if not h > 0:
        raise ResolutionTooCoarse("grid spacing must be positive")
    if domain.holes and not ignore_holes and h > delta / 4 * (1 + 1e-12):
        raise ResolutionTooCoarse(f"h={h} exceeds delta/4={delta / 4}")

    outer = domain.outer
    (x0, y0), (x1, y1) = outer.bounds()
    if isinstance(outer, DiskRegion):
        k = int(np.ceil(outer.radius / h)) + 2
        origin = (outer.center[0] - k * h, outer.center[1] - k * h)
        dims = (2 * k + 1, 2 * k + 1)
    else:
        origin = (x0 - 2 * h, y0 - 2 * h)
        dims = (int(np.ceil((x1 - x0) / h)) + 5, int(np.ceil((y1 - y0) / h)) + 5)
    nx, ny = dims
    X, Y = np.meshgrid(origin[0] + h * np.arange(nx), origin[1] + h * np.arange(ny), indexing="ij")

    in_outer = outer.contains(X, Y)
    in_hole = np.full(dims, -1, dtype=np.int64)
    if not ignore_holes:
        for j, (ax, ay) in enumerate(domain.holes):
            inside = (X - ax) ** 2 + (Y - ay) ** 2 <= delta**2
            in_hole[inside] = j
    interior = in_outer & (in_hole < 0)

    near_interior = np.zeros(dims, dtype=bool)
    near_interior[:-1, :] |= interior[1:, :]
    near_interior[1:, :] |= interior[:-1, :]
    near_interior[:, :-1] |= interior[:, 1:]
    near_interior[:, 1:] |= interior[:, :-1]

    labels = np.full(dims, EXTERIOR, dtype=np.int8)
    labels[interior] = INTERIOR
    ghost = ~interior & near_interior
    labels[ghost & (in_hole >= 0)] = DIRICHLET_HOLE
    labels[ghost & (in_hole < 0)] = DIRICHLET_OUTER
    labels[~interior & ~near_interior & (in_hole >= 0)] = HOLE_INTERIOR

    unknown = np.full(dims, -1, dtype=np.int64)
    unknown[interior] = np.arange(int(interior.sum()))

    cuts = _find_cuts(domain, h, X, Y, interior, in_hole, unknown)

    grid = ClassifiedGrid(
        domain=domain,
        h=h,
        origin=(float(origin[0]), float(origin[1])),
        dims=(int(nx), int(ny)),
        labels=_frozen(labels),
        hole_index=_frozen(np.where(labels == INTERIOR, -1, in_hole)),
        unknown_index=_frozen(unknown),
        cuts=cuts,
        ignore_holes=ignore_holes,
    )
    return grid


def _find_cuts(domain, h, X, Y, interior, in_hole, unknown) -> CutEdges:
    nx, ny = interior.shape
    delta = domain.hole_radius
    nodes, ghosts, thetas, bnds, pts = [], [], [], [], []
    I, J = np.nonzero(interior)
    for di, dj in AXIS_STEPS:
        qi, qj = I + di, J + dj
        valid = (qi >= 0) & (qi < nx) & (qj >= 0) & (qj < ny)
        if not np.all(valid):
            raise ResolutionTooCoarse("interior node on the grid edge")
        leaving = ~interior[qi, qj]
        if not np.any(leaving):
            continue
        pi_, pj_ = I[leaving], J[leaving]
        gi, gj = qi[leaving], qj[leaving]
        px, py = X[pi_, pj_], Y[pi_, pj_]
        dx, dy = di * h, dj * h
        hole = in_hole[gi, gj]
        t = np.empty(len(pi_))
        to_outer = hole < 0
        if np.any(to_outer):
            t[to_outer] = domain.outer.crossing(px[to_outer], py[to_outer], dx, dy)
        for j in np.unique(hole[~to_outer]):
            sel = hole == j
            ax, ay = domain.holes[j]
            ox, oy = px[sel] - ax, py[sel] - ay
            a = dx * dx + dy * dy
            b = 2.0 * (ox * dx + oy * dy)
            c = ox * ox + oy * oy - delta**2
            # p is outside the disk; the entering crossing is the smaller root
            t[sel] = (-b - np.sqrt(np.maximum(b * b - 4 * a * c, 0.0))) / (2 * a)
        t = np.clip(t, MIN_CUT_FRACTION, 1.0)
        nodes.append(np.ravel_multi_index((pi_, pj_), (nx, ny)))
        ghosts.append(np.ravel_multi_index((gi, gj), (nx, ny)))
        thetas.append(t)
        bnds.append(hole)
        pts.append(np.column_stack([px + t * dx, py + t * dy]))
    if nodes:
        node = np.concatenate(nodes)
        order = np.lexsort((np.concatenate(ghosts), node))
        node = node[order]
        ghost = np.concatenate(ghosts)[order]
        theta = np.concatenate(thetas)[order]
        bnd = np.concatenate(bnds)[order]
        pt = np.concatenate(pts)[order]
    else:
        node = ghost = bnd = np.zeros(0, dtype=np.int64)
        theta = np.zeros(0)
        pt = np.zeros((0, 2))
    return CutEdges(
        node=_frozen(node),
        unknown=_frozen(unknown.ravel()[node]),
        ghost=_frozen(ghost),
        theta=_frozen(theta),
        boundary=_frozen(bnd.astype(np.int64)),
        point=_frozen(pt),
    )


# ---------------------------------------------------------------------------
# Lattice: edges and plaquettes used by the gauge-field discretization


@dataclass(frozen=True, eq=False)
class Lattice:
    """Edge and plaquette topology of a classified grid.

    Cells are grid squares whose center lies inside the outer region.  The
    edge set holds every side of such a cell plus every axis edge joining two
    interior nodes.  An edge runs from ``edge_p`` to ``edge_q`` (in the +x or +y
    direction).  ``cell_edges``/``cell_signs`` list each cell's four edges with
    the counterclockwise orientation.
    """

    grid: ClassifiedGrid
    node_flat: np.ndarray          # interior nodes (order of unknowns)
    cell_ij: np.ndarray            # (nc, 2) lower-left corner of each cell
    cell_id: np.ndarray            # (nx-1, ny-1) -> cell index or -1
    edge_p: np.ndarray             # flat node index of the edge start
    edge_q: np.ndarray
    edge_dir: np.ndarray           # 0 for +x, 1 for +y
    xedge_id: np.ndarray           # (nx-1, ny) -> edge index or -1
    yedge_id: np.ndarray           # (nx, ny-1) -> edge index or -1
    cell_edges: np.ndarray         # (nc, 4) bottom, right, top, left
    cell_signs: np.ndarray         # (nc, 4) +1, +1, -1, -1
    kinetic_edges: np.ndarray      # edges with both ends interior
    kinetic_p: np.ndarray          # unknown index of the start node
    kinetic_q: np.ndarray
    graph_nodes: np.ndarray        # flat indices of all nodes touched by edges
    graph_p: np.ndarray            # edge endpoints in graph-node numbering
    graph_q: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.node_flat)

    @property
    def n_edges(self) -> int:
        return len(self.edge_p)

    @property
    def n_cells(self) -> int:
        return len(self.cell_ij)

    @cached_property
    def cell_centers(self) -> np.ndarray:
        g = self.grid
        return _frozen(np.column_stack([
            g.origin[0] + g.h * (self.cell_ij[:, 0] + 0.5),
            g.origin[1] + g.h * (self.cell_ij[:, 1] + 0.5),
        ]))

    @cached_property
    def edge_midpoints(self) -> np.ndarray:
        X, Y = self.grid.coords
        xp, yp = X.ravel()[self.edge_p], Y.ravel()[self.edge_p]
        xq, yq = X.ravel()[self.edge_q], Y.ravel()[self.edge_q]
        return _frozen(np.column_stack([(xp + xq) / 2, (yp + yq) / 2]))

    @cached_property
    def gl_cells(self) -> np.ndarray:
        """Cells whose four corners are interior nodes."""
        g = self.grid
        lab = g.labels
        i, j = self.cell_ij[:, 0], self.cell_ij[:, 1]
        ok = ((lab[i, j] == INTERIOR) & (lab[i + 1, j] == INTERIOR)
              & (lab[i + 1, j + 1] == INTERIOR) & (lab[i, j + 1] == INTERIOR))
        return _frozen(np.flatnonzero(ok))

    def circulation(self, edge_values: np.ndarray) -> np.ndarray:
        """Counterclockwise sum of edge values around every cell."""
        return np.sum(edge_values[self.cell_edges] * self.cell_signs, axis=1)

    def region_boundary(self, cells: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Edges and signs of the counterclockwise boundary of a set of cells."""
        coef = np.zeros(self.n_edges)
        np.add.at(coef, self.cell_edges[cells].ravel(), self.cell_signs[cells].ravel())
        idx = np.flatnonzero(np.abs(coef) > 0.5)
        return idx, coef[idx]

    def disk_cells(self, center, radius: float) -> np.ndarray:
        c = self.cell_centers
        return np.flatnonzero(np.hypot(c[:, 0] - center[0], c[:, 1] - center[1]) < radius)

    def incidence(self):
        """Sparse edge-by-graph-node difference operator (``q`` minus ``p``)."""
        ne = self.n_edges
        rows = np.concatenate([np.arange(ne), np.arange(ne)])
        cols = np.concatenate([self.graph_q, self.graph_p])
        vals = np.concatenate([np.ones(ne), -np.ones(ne)])
        return sp.csr_matrix((vals, (rows, cols)), shape=(ne, len(self.graph_nodes)))


def build_lattice(grid: ClassifiedGrid) -> Lattice:
    nx, ny = grid.dims
    X, Y = grid.coords
    cx = X[:-1, :-1] + grid.h / 2
    cy = Y[:-1, :-1] + grid.h / 2
    cell_mask = grid.domain.outer.contains(cx, cy)
    interior = grid.labels == INTERIOR

    xmask = np.zeros((nx - 1, ny), dtype=bool)
    xmask[:, :-1] |= cell_mask
    xmask[:, 1:] |= cell_mask
    xmask |= interior[:-1, :] & interior[1:, :]
    ymask = np.zeros((nx, ny - 1), dtype=bool)
    ymask[:-1, :] |= cell_mask
    ymask[1:, :] |= cell_mask
    ymask |= interior[:, :-1] & interior[:, 1:]

    xi, xj = np.nonzero(xmask)
    yi, yj = np.nonzero(ymask)
    n_x = len(xi)
    xedge_id = np.full((nx - 1, ny), -1, dtype=np.int64)
    xedge_id[xi, xj] = np.arange(n_x)
    yedge_id = np.full((nx, ny - 1), -1, dtype=np.int64)
    yedge_id[yi, yj] = n_x + np.arange(len(yi))

    edge_p = np.concatenate([np.ravel_multi_index((xi, xj), grid.dims),
                             np.ravel_multi_index((yi, yj), grid.dims)])
    edge_q = np.concatenate([np.ravel_multi_index((xi + 1, xj), grid.dims),
                             np.ravel_multi_index((yi, yj + 1), grid.dims)])
    edge_dir = np.concatenate([np.zeros(n_x, dtype=np.int64), np.ones(len(yi), dtype=np.int64)])

    ci, cj = np.nonzero(cell_mask)
    cell_id = np.full((nx - 1, ny - 1), -1, dtype=np.int64)
    cell_id[ci, cj] = np.arange(len(ci))
    cell_edges = np.column_stack([
        xedge_id[ci, cj], yedge_id[ci + 1, cj], xedge_id[ci, cj + 1], yedge_id[ci, cj],
    ])
    cell_signs = np.tile(np.array([1.0, 1.0, -1.0, -1.0]), (len(ci), 1))

    unk = grid.unknown_index.ravel()
    kin = np.flatnonzero((unk[edge_p] >= 0) & (unk[edge_q] >= 0))

    graph_nodes = np.unique(np.concatenate([edge_p, edge_q]))
    lookup = np.full(nx * ny, -1, dtype=np.int64)
    lookup[graph_nodes] = np.arange(len(graph_nodes))

    return Lattice(
        grid=grid,
        node_flat=grid.interior_flat,
        cell_ij=_frozen(np.column_stack([ci, cj])),
        cell_id=_frozen(cell_id),
        edge_p=_frozen(edge_p),
        edge_q=_frozen(edge_q),
        edge_dir=_frozen(edge_dir),
        xedge_id=_frozen(xedge_id),
        yedge_id=_frozen(yedge_id),
        cell_edges=_frozen(cell_edges),
        cell_signs=_frozen(cell_signs),
        kinetic_edges=_frozen(kin),
        kinetic_p=_frozen(unk[edge_p[kin]]),
        kinetic_q=_frozen(unk[edge_q[kin]]),
        graph_nodes=_frozen(graph_nodes),
        graph_p=_frozen(lookup[edge_p]),
        graph_q=_frozen(lookup[edge_q]),
    )


# ---------------------------------------------------------------------------
# Discrete loops


@dataclass(frozen=True)
class DiscreteLoop:
    """Closed counterclockwise chain of grid nodes around ``center``.

    ``nodes`` is an ``(n, 2)`` array of node indices; the loop closes from the
    last node back to the first.  Consecutive nodes are 8-neighbors.
    """

    nodes: np.ndarray
    center: tuple[float, float]
    radius: float

    def __len__(self):
        return len(self.nodes)

    def flat(self, dims) -> np.ndarray:
        return np.ravel_multi_index((self.nodes[:, 0], self.nodes[:, 1]), dims)

    def reversed(self) -> "DiscreteLoop":
        return DiscreteLoop(_frozen(self.nodes[::-1].copy()), self.center, self.radius)

    def geometric_winding(self, grid: ClassifiedGrid) -> float:
        """Total angle swept about ``center`` divided by 2*pi."""
        x, y = grid.node_position(self.nodes[:, 0], self.nodes[:, 1])
        ang = np.arctan2(y - self.center[1], x - self.center[0])
        d = np.diff(np.append(ang, ang[0]))
        d = (d + np.pi) % (2 * np.pi) - np.pi
        return float(d.sum() / (2 * np.pi))


def circle_loop(grid: ClassifiedGrid, center, R: float,
                allowed=(INTERIOR, DIRICHLET_OUTER)) -> DiscreteLoop:
    """Rasterize the circle of radius ``R`` about ``center`` into a node loop.

    The circle is sampled densely and each sample is rounded to its nearest
    node (ties toward the lower index); repeated nodes and back-tracks are
    removed.

    Raises
    ------
    LoopBroken
        If the loop leaves the grid, touches a node whose label is not in
        ``allowed``, or fails to close into a simple chain.
    """
    h = grid.h
    cx, cy = float(center[0]), float(center[1])
    if not R > 0:
        raise LoopBroken("loop radius must be positive")
    n_samples = max(64, int(np.ceil(16 * np.pi * R / h)))
    phi = 2 * np.pi * np.arange(n_samples) / n_samples
    fx = (cx + R * np.cos(phi) - grid.origin[0]) / h
    fy = (cy + R * np.sin(phi) - grid.origin[1]) / h
    ii = np.ceil(fx - 0.5).astype(np.int64)
    jj = np.ceil(fy - 0.5).astype(np.int64)
    nx, ny = grid.dims
    if ii.min() < 0 or jj.min() < 0 or ii.max() >= nx or jj.max() >= ny:
        raise LoopBroken("loop leaves the grid")

    chain: list[tuple[int, int]] = []
    for p in zip(ii.tolist(), jj.tolist()):
        if chain and chain[-1] == p:
            continue
        if len(chain) >= 2 and chain[-2] == p:
            chain.pop()
            continue
        chain.append(p)
    while len(chain) > 1 and chain[-1] == chain[0]:
        chain.pop()
    # remove back-tracks across the seam
    while len(chain) > 2 and chain[-1] == chain[1]:
        chain.pop(0)
        chain.pop()
    nodes = np.array(chain, dtype=np.int64)
    if len(nodes) < 4:
        raise LoopBroken("loop radius too small for the grid")
    if len({tuple(p) for p in chain}) != len(chain):
        raise LoopBroken("rasterized loop is not simple")
    step = np.abs(np.diff(np.vstack([nodes, nodes[:1]]), axis=0))
    if np.any(step.max(axis=1) > 1):
        raise LoopBroken("rasterized loop has a gap")
    labels = grid.labels[nodes[:, 0], nodes[:, 1]]
    if not np.all(np.isin(labels, allowed)):
        bad = nodes[~np.isin(labels, allowed)][0]
        raise LoopBroken(
            f"loop crosses a {LABEL_NAMES[int(grid.labels[bad[0], bad[1]])]} node at {tuple(bad)}")
    return DiscreteLoop(_frozen(nodes), (cx, cy), float(R))
