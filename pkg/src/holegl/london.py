"""London limit: induced field for prescribed hole degrees and its energy.

For a degree vector ``D`` the induced field ``h`` solves the screened
equation in the perforated domain.  It equals ``h_ext`` on the outer
boundary and an unknown constant ``H_j`` on hole ``j``.  Each ``H_j`` is fixed
by the flux-quantization condition

    flux_j(h) + H_j * |hole_j| = 2*pi*D_j,

with ``flux_j`` as in :func:`holegl.elliptic.boundary_flux`.  By linearity,
``h = h_ext * xi_tilde + sum_j H_j * zeta_j``, where ``xi_tilde`` carries the
outer data and ``zeta_j`` is the unit field of hole ``j``.  The energy

    l(D) = 1/2 int_{perforated} |grad h|^2 + 1/2 int_{outer region} (h - h_ext)^2

is therefore an exact quadratic polynomial in ``D``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .bessel import k0
from .elliptic import (
    DEFAULT_TOL,
    ScalarField,
    boundary_flux,
    combine,
    dirichlet_inner,
    pcg,
    solve_basis_zeta,
    solve_screened,
)
from .errors import AtThreshold, BoxTooSmall, NonIntegerCirculation, SingularFluxSystem
from .geometry import EXTERIOR, INTERIOR, ClassifiedGrid, Lattice, PerforatedDomain

MAX_CONDITION = 1e12


def applied_field(sigma: float, delta: float) -> float:
    """External field ``sigma * |log delta|``."""
    return float(sigma) * abs(np.log(delta))


def _as_degrees(D, n: int) -> tuple[int, ...]:
    D = tuple(int(d) for d in np.atleast_1d(np.asarray(D, dtype=np.int64)))
    if len(D) != n:
        raise ValueError(f"degree vector has length {len(D)}, expected {n}")
    return D


@dataclass(frozen=True, eq=False)
class LondonBasis:
    """Fields and flux data shared by every London solve on one grid.

    ``outer_field`` solves the homogeneous screened problem with outer value
    1 and hole values 0; ``zetas[j]`` has value 1 on hole ``j`` and 0 on every
    other boundary.  ``constraint`` is the matrix of the flux conditions in
    the unknowns ``H``.
    """

    domain: PerforatedDomain
    grid: ClassifiedGrid
    outer_field: ScalarField
    zetas: tuple[ScalarField, ...]
    flux_matrix: np.ndarray
    outer_field_flux: np.ndarray
    constraint: np.ndarray
    condition: float

    @property
    def n_holes(self) -> int:
        return len(self.zetas)


def london_basis(domain: PerforatedDomain, grid: ClassifiedGrid, tol: float = DEFAULT_TOL) -> LondonBasis:
    """Solve the ``N + 1`` basis problems and set up the flux conditions.

    Raises
    ------
    SingularFluxSystem
        If the flux-condition matrix has condition number above 1e12.
    """
    n = domain.n_holes
    outer_field = solve_screened(grid, 0.0, 1.0, np.zeros(n), tol=tol)
    zetas = tuple(solve_basis_zeta(domain, grid, i, tol=tol) for i in range(n))
    flux = np.array([[boundary_flux(zetas[k], j) for k in range(n)] for j in range(n)]).reshape(n, n)
    outer_flux = np.array([boundary_flux(outer_field, j) for j in range(n)])
    constraint = flux + domain.hole_area() * np.eye(n)
    cond = float(np.linalg.cond(constraint)) if n else 1.0
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularFluxSystem(cond)
    return LondonBasis(domain, grid, outer_field, zetas, flux, outer_flux, constraint, cond)


@dataclass(frozen=True, eq=False)
class LondonSolution:
    """Induced field ``h`` for degrees ``D`` with hole constants ``H``."""

    h: ScalarField
    H: tuple[float, ...]
    D: tuple[int, ...]
    h_ext: float
    delta: float
    basis: LondonBasis

    @property
    def sigma(self) -> float:
        return self.h_ext / abs(np.log(self.delta))

    @property
    def grid(self) -> ClassifiedGrid:
        return self.h.grid

    @property
    def domain(self) -> PerforatedDomain:
        return self.basis.domain

    def constraint_residuals(self) -> np.ndarray:
        """``flux_j + H_j |hole| - 2 pi D_j`` for every hole."""
        area = self.domain.hole_area()
        return np.array([
            boundary_flux(self.h, j) + self.H[j] * area - 2 * np.pi * self.D[j]
            for j in range(len(self.D))
        ])


def solve_london(domain: PerforatedDomain, grid: ClassifiedGrid, h_ext: float, D,
                 basis: LondonBasis | None = None) -> LondonSolution:
    """Induced field for the degree vector ``D`` at external field ``h_ext``.

    Pass a precomputed ``basis`` to reuse the basis solves across many
    ``(h_ext, D)`` pairs.
    """
    if basis is None:
        basis = london_basis(domain, grid)
    elif basis.grid is not grid and not basis.grid.same_layout(grid):
        raise ValueError("basis was built on another grid")
    if not np.isfinite(h_ext):
        raise ValueError("h_ext must be finite")
    D = _as_degrees(D, domain.n_holes)
    rhs = 2 * np.pi * np.asarray(D, float) - h_ext * basis.outer_field_flux
    H = np.linalg.solve(basis.constraint, rhs) if D else np.zeros(0)
    h = combine((basis.outer_field,) + basis.zetas, (h_ext,) + tuple(H))
    return LondonSolution(h=h, H=tuple(float(x) for x in H), D=D, h_ext=float(h_ext),
                          delta=domain.hole_radius, basis=basis)


@dataclass(frozen=True)
class EnergyBreakdown:
    gradient_term: float
    field_term: float

    @property
    def total(self) -> float:
        return self.gradient_term + self.field_term

    def to_dict(self):
        return {"gradient_term": self.gradient_term, "field_term": self.field_term, "total": self.total}


def london_energy(sol: LondonSolution) -> EnergyBreakdown:
    """Gradient energy over the perforated domain plus field energy over the outer region.

    Inside each hole ``h`` is the constant ``H_j``, so the hole's field
    energy is ``|hole| (H_j - h_ext)**2 / 2``.
    """
    h = sol.h
    grid = h.grid
    grad = 0.5 * dirichlet_inner(h, h)
    inner = h.values[grid.labels == INTERIOR] - sol.h_ext
    field_term = 0.5 * grid.h**2 * float(np.sum(inner**2))
    area = sol.domain.hole_area()
    field_term += 0.5 * area * float(np.sum((np.asarray(sol.H) - sol.h_ext) ** 2))
    return EnergyBreakdown(gradient_term=grad, field_term=field_term)


@dataclass(frozen=True)
class QuadraticEnergyForm:
    """``l(D) = 1/2 D^T Q D + b^T D + c``."""

    Q: np.ndarray
    b: np.ndarray
    c: float

    def evaluate(self, D) -> np.ndarray | float:
        """Energy at one degree vector or at each row of a 2-D array."""
        D = np.asarray(D, float)
        if D.ndim == 1:
            return float(0.5 * D @ self.Q @ D + self.b @ D + self.c)
        return 0.5 * np.einsum("ki,ij,kj->k", D, self.Q, D) + D @ self.b + self.c

    def vertex(self) -> np.ndarray:
        """Real minimizer ``-Q^{-1} b``."""
        return -np.linalg.solve(self.Q, self.b)

    def shifted(self, constant: float) -> "QuadraticEnergyForm":
        return QuadraticEnergyForm(self.Q, self.b, self.c + constant)

    def to_dict(self):
        return {"Q": self.Q.tolist(), "b": self.b.tolist(), "c": self.c}


def energy_quadratic_form(domain: PerforatedDomain, grid: ClassifiedGrid, h_ext: float,
                          basis: LondonBasis | None = None) -> QuadraticEnergyForm:
    """Recover ``Q``, ``b``, ``c`` from energies at ``0``, ``e_i`` and ``e_i + e_j``."""
    if basis is None:
        basis = london_basis(domain, grid)
    n = domain.n_holes
    eye = np.eye(n, dtype=np.int64)

    def energy(D):
        return london_energy(solve_london(domain, grid, h_ext, D, basis)).total

    l0 = energy(np.zeros(n, dtype=np.int64))
    l1 = np.array([energy(eye[i]) for i in range(n)])
    Q = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            Q[i, j] = Q[j, i] = energy(eye[i] + eye[j]) - l1[i] - l1[j] + l0
    b = l1 - l0 - 0.5 * np.diag(Q)
    return QuadraticEnergyForm(Q=Q, b=b, c=float(l0))


class DegreeArgmin(NamedTuple):
    degrees: tuple[int, ...]
    energy: float
    is_unique: bool


def minimize_degrees(form: QuadraticEnergyForm, box_radius: int = 2) -> DegreeArgmin:
    """Exhaustive integer search in a box around the rounded real vertex.

    Ties (two best energies within 1e-6 relative) are reported through
    ``is_unique=False``; the lexicographically first minimizer is returned.

    Raises
    ------
    BoxTooSmall
        If the best point lies on the surface of the box.
    """
    try:
        np.linalg.cholesky(form.Q)
    except np.linalg.LinAlgError as exc:
        raise ValueError("Q is not positive definite") from exc
    n = len(form.b)
    center = np.rint(form.vertex()).astype(np.int64)
    offsets = np.array(list(itertools.product(range(-box_radius, box_radius + 1), repeat=n)),
                       dtype=np.int64).reshape(-1, n)
    points = center + offsets
    values = form.evaluate(points)
    order = np.lexsort(tuple(points[:, k] for k in reversed(range(n))) + (values,))
    best = order[0]
    if np.any(np.abs(offsets[best]) == box_radius):
        raise BoxTooSmall(f"argmin {tuple(points[best])} lies on the search box surface")
    best_val = float(values[best])
    unique = True
    if len(order) > 1:
        unique = not (float(values[order[1]]) - best_val <= 1e-6 * abs(best_val))
    return DegreeArgmin(tuple(int(v) for v in points[best]), best_val, unique)


def xi0_at_holes(xi0: ScalarField, domain: PerforatedDomain) -> np.ndarray:
    """Bilinear interpolation of ``xi0`` at the hole centers."""
    if not domain.holes:
        return np.zeros(0)
    return xi0.interpolate(np.asarray(domain.holes, float))


def predicted_degrees(xi0: ScalarField, domain: PerforatedDomain, sigma: float,
                      tol: float = 1e-9) -> tuple[int, ...]:
    """Nearest integer to ``sigma * (1 - xi0(a_j))`` for every hole.

    Raises
    ------
    AtThreshold
        If some value lies within ``tol`` of a half-integer.
    """
    z = sigma * (1.0 - xi0_at_holes(xi0, domain))
    out = []
    for j, v in enumerate(z):
        frac = v - np.floor(v)
        if abs(frac - 0.5) <= tol:
            raise AtThreshold(j, float(v))
        out.append(int(np.floor(v + 0.5)))
    return tuple(out)


def threshold_set(xi0: ScalarField, domain: PerforatedDomain, sigma_max: float) -> list[tuple[float, int]]:
    """All ``sigma <= sigma_max`` with ``sigma * (1 - xi0(a_j))`` a half-integer."""
    if not sigma_max > 0:
        raise ValueError("sigma_max must be positive")
    out = []
    for j, x in enumerate(xi0_at_holes(xi0, domain)):
        gap = 1.0 - x
        if gap <= 0:
            continue
        k = 0
        while (k + 0.5) / gap <= sigma_max:
            out.append((float((k + 0.5) / gap), j))
            k += 1
    out.sort()
    return out


def smoothstep_cutoff(s: np.ndarray, r_in: float, r_out: float) -> np.ndarray:
    """1 below ``r_in``, 0 above ``r_out``, quintic smoothstep in between."""
    t = np.clip((s - r_in) / (r_out - r_in), 0.0, 1.0)
    return 1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)


def h2_ansatz(domain: PerforatedDomain, grid: ClassifiedGrid, D) -> ScalarField:
    """Sum over holes of ``D_j K0(|x - a_j|)`` truncated at the hole radius and cut off.

    The cutoff equals 1 up to ``R/4`` and 0 beyond ``R/2``, where ``R`` is the
    largest radius giving disjoint balls inside the outer region.
    """
    D = _as_degrees(D, domain.n_holes)
    R = domain.cutoff_radius()
    delta = domain.hole_radius

    def fn(x, y):
        total = np.zeros(np.shape(x))
        for dj, (ax, ay) in zip(D, domain.holes):
            if dj == 0:
                continue
            s = np.maximum(np.hypot(x - ax, y - ay), delta)
            total = total + dj * k0(s) * smoothstep_cutoff(s, R / 4, R / 2)
        return total

    from .elliptic import field_from_function

    f = field_from_function(grid, fn)
    # hole nodes carry the exact boundary value
    values = f.values.copy()
    for j, dj in enumerate(D):
        values[grid.hole_nodes(j)] = dj * k0(delta)
    return ScalarField(grid, values, f.cut_values)


# ---------------------------------------------------------------------------
# Reconstruction of the phase and vector potential


def cell_average(grid: ClassifiedGrid, values: np.ndarray) -> np.ndarray:
    """Average of the non-exterior corner values of every grid cell."""
    ok = (grid.labels != EXTERIOR).astype(float)
    v = np.where(ok > 0, values, 0.0)
    s = v[:-1, :-1] + v[1:, :-1] + v[:-1, 1:] + v[1:, 1:]
    w = ok[:-1, :-1] + ok[1:, :-1] + ok[:-1, 1:] + ok[1:, 1:]
    return np.where(w > 0, s / np.maximum(w, 1), 0.0)


def edge_rotated_gradient(lattice: Lattice, cell_values: np.ndarray) -> np.ndarray:
    """Line integrals of the rotated gradient of a cell-centered potential.

    For an x-edge the value is (cell below) - (cell above); for a y-edge it is
    (cell right) - (cell left).  The counterclockwise circulation around a
    cell is then ``h**2`` times the 5-point Laplacian of the potential there.
    ``cell_values`` has shape ``(nx-1, ny-1)``; cells outside count as zero.
    """
    nx, ny = lattice.grid.dims
    padded = np.zeros((nx + 1, ny + 1))
    padded[1:-1, 1:-1] = cell_values   # padded[i+1, j+1] = cell (i, j)
    p_i, p_j = np.unravel_index(lattice.edge_p, (nx, ny))
    out = np.empty(lattice.n_edges)
    xe = lattice.edge_dir == 0
    i, j = p_i[xe], p_j[xe]
    out[xe] = padded[i + 1, j] - padded[i + 1, j + 1]
    ye = ~xe
    i, j = p_i[ye], p_j[ye]
    out[ye] = padded[i + 1, j + 1] - padded[i, j + 1]
    return out


def solve_cell_poisson(lattice: Lattice, source: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Solve the 5-point ``Lap P = source`` on the lattice cells with ``P = 0`` outside.

    ``source`` has one entry per lattice cell; the result has the full cell
    array shape ``(nx-1, ny-1)``.
    """
    cid = lattice.cell_id
    n = lattice.n_cells
    ci, cj = lattice.cell_ij[:, 0], lattice.cell_ij[:, 1]
    rows, cols = [], []
    mx, my = cid.shape
    for di, dj in ((1, 0), (0, 1)):
        ni, nj = ci + di, cj + dj
        ok = (ni < mx) & (nj < my)
        nb = np.full(n, -1)
        nb[ok] = cid[ni[ok], nj[ok]]
        keep = nb >= 0
        rows.append(np.flatnonzero(keep))
        cols.append(nb[keep])
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    off = -np.ones(len(r))
    mat = sp.coo_matrix(
        (np.concatenate([np.full(n, 4.0), off, off]),
         (np.concatenate([np.arange(n), r, c]), np.concatenate([np.arange(n), c, r]))),
        shape=(n, n)).tocsr()
    h = lattice.grid.h
    x, _ = pcg(mat, -h * h * np.asarray(source, float), tol=tol)
    out = np.zeros(cid.shape)
    out[ci, cj] = x
    return out


def graph_least_squares(n_nodes: int, p: np.ndarray, q: np.ndarray, target: np.ndarray,
                        tol: float = DEFAULT_TOL) -> np.ndarray:
    """Node potential ``psi`` minimizing the sum of ``(psi_q - psi_p - target)**2``.

    One node per connected component is pinned to zero.
    """
    ne = len(p)
    G = sp.csr_matrix(
        (np.concatenate([np.ones(ne), -np.ones(ne)]),
         (np.concatenate([np.arange(ne), np.arange(ne)]), np.concatenate([q, p]))),
        shape=(ne, n_nodes))
    L = (G.T @ G).tocsr()
    rhs = G.T @ target
    ncomp, comp = connected_components(L, directed=False)
    pinned = np.zeros(n_nodes, dtype=bool)
    for k in range(ncomp):
        pinned[np.flatnonzero(comp == k)[0]] = True
    free = np.flatnonzero(~pinned)
    psi = np.zeros(n_nodes)
    if len(free):
        sub = L[free][:, free].tocsr()
        psi[free], _ = pcg(sub, rhs[free], tol=tol)
    return psi


def wrap_angle(x):
    """Wrap angles to ``[-pi, pi)``."""
    return (np.asarray(x) + np.pi) % (2 * np.pi) - np.pi


@dataclass(frozen=True, eq=False)
class S1Reconstruction:
    """Phase and vector potential of the London minimizer on the lattice.

    ``phase`` is given modulo 2 pi at the interior nodes.  ``phase_increments``
    holds the single-valued increment of the multi-valued phase along every
    kinetic edge.  ``A`` holds edge line integrals on every lattice edge, and
    ``stream`` is the cell potential with ``A`` as its rotated gradient.
    """

    lattice: Lattice
    phase: np.ndarray
    phase_increments: np.ndarray
    A: np.ndarray
    stream: np.ndarray
    field_cells: np.ndarray
    circulations: tuple[float, ...]
    loop_radius: float

    @property
    def u(self) -> np.ndarray:
        return np.exp(1j * self.phase)


def hole_circulation(lattice: Lattice, edge_values: np.ndarray, center, radius: float) -> float:
    """Counterclockwise sum of edge values around the cells within ``radius`` of ``center``."""
    edges, signs = lattice.region_boundary(lattice.disk_cells(center, radius))
    return float(np.sum(edge_values[edges] * signs))


def reconstruct_s1_minimizer(sol: LondonSolution, grid: ClassifiedGrid | None = None,
                             loop_radius: float | None = None) -> S1Reconstruction:
    """Rebuild the unit-modulus order parameter and the vector potential.

    The stream function solves the cell Poisson problem with the cell
    averages of ``h`` as source and zero outside, and ``A`` is its rotated
    gradient.  The target phase increments are ``A`` minus the rotated
    gradient of ``h``.  Their circulation around hole ``j`` should be
    ``2 pi D_j``.  The phase is ``sum_j D_j arg(x - a_j)`` plus a
    single-valued least-squares correction.

    Raises
    ------
    NonIntegerCirculation
        If a hole circulation misses ``2 pi D_j`` by more than ``0.1 * 2 pi``.
    """
    grid = grid or sol.grid
    if not grid.same_layout(sol.grid):
        raise ValueError("grid differs from the solution grid")
    lattice = grid.lattice
    domain = sol.domain
    h_cells = cell_average(grid, sol.h.values)
    cells_in = h_cells[lattice.cell_ij[:, 0], lattice.cell_ij[:, 1]]
    stream = solve_cell_poisson(lattice, cells_in)
    A = edge_rotated_gradient(lattice, stream)
    target = A - edge_rotated_gradient(lattice, h_cells)

    if loop_radius is None:
        loop_radius = 0.5 * domain.cutoff_radius() if domain.holes else 0.0
    circ = tuple(hole_circulation(lattice, target, a, loop_radius) for a in domain.holes)
    for j, c in enumerate(circ):
        turns = c / (2 * np.pi)
        if abs(turns - sol.D[j]) > 0.1:
            raise NonIntegerCirculation(
                f"hole {j}: circulation {turns:.4f} * 2pi does not match degree {sol.D[j]}")

    X, Y = grid.coords
    xs = X.ravel()[lattice.node_flat]
    ys = Y.ravel()[lattice.node_flat]
    kin = lattice.kinetic_edges
    p, q = lattice.kinetic_p, lattice.kinetic_q
    vortex_phase = np.zeros(lattice.n_nodes)
    winding_inc = np.zeros(len(kin))
    for dj, (ax, ay) in zip(sol.D, domain.holes):
        if dj == 0:
            continue
        ang = np.arctan2(ys - ay, xs - ax)
        vortex_phase += dj * ang
        winding_inc += dj * wrap_angle(ang[q] - ang[p])
    psi = graph_least_squares(lattice.n_nodes, p, q, target[kin] - winding_inc)
    increments = winding_inc + psi[q] - psi[p]
    phase = wrap_angle(vortex_phase + psi)
    return S1Reconstruction(
        lattice=lattice,
        phase=phase,
        phase_increments=increments,
        A=A,
        stream=stream,
        field_cells=h_cells,
        circulations=circ,
        loop_radius=float(loop_radius),
    )
