"""Lattice-gauge Ginzburg-Landau energy, its gradient and a descent solver.

The order parameter ``u`` lives on the interior nodes of the perforated
domain, with natural boundary conditions.  The vector potential is stored as
line integrals ``A_pq`` on the lattice edges covering the whole outer region,
holes included.  The discrete energy is

    1/2 sum_{kinetic edges} |u_q exp(-i A_pq) - u_p|^2
  + h^2 / (4 eps^2) sum_{nodes} (1 - |u|^2)^2
  + 1/2 sum_{cells} h^2 (circ A / h^2 - h_ext)^2,

where ``circ A`` is the counterclockwise edge sum around a cell.  It is
exactly invariant under ``u -> u exp(i phi)``, ``A_pq -> A_pq + phi_q - phi_p``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import LineSearchStalled
from .geometry import Lattice
from .london import (
    LondonSolution,
    S1Reconstruction,
    applied_field,
    edge_rotated_gradient,
    graph_least_squares,
    reconstruct_s1_minimizer,
)


@dataclass(frozen=True, eq=False)
class GLState:
    """Order parameter on interior nodes and edge potentials on a lattice."""

    lattice: Lattice
    u: np.ndarray
    A: np.ndarray
    eps: float
    delta: float
    sigma: float

    def __post_init__(self):
        u = np.asarray(self.u, dtype=complex)
        A = np.asarray(self.A, dtype=float)
        if u.shape != (self.lattice.n_nodes,) or A.shape != (self.lattice.n_edges,):
            raise ValueError("u or A does not match the lattice")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "A", A)

    @property
    def h_ext(self) -> float:
        return applied_field(self.sigma, self.delta)

    @property
    def grid(self):
        return self.lattice.grid

    def u_grid(self) -> np.ndarray:
        """Order parameter on the full node array, zero off the interior."""
        out = np.zeros(self.grid.dims, dtype=complex).ravel()
        out[self.lattice.node_flat] = self.u
        return out.reshape(self.grid.dims)

    def with_fields(self, u=None, A=None) -> "GLState":
        return replace(self, u=self.u if u is None else u, A=self.A if A is None else A)


def uniform_state(lattice: Lattice, eps: float, delta: float, sigma: float,
                  u_value: complex = 1.0) -> GLState:
    """Constant order parameter and zero potential (the Meissner start)."""
    return GLState(lattice, np.full(lattice.n_nodes, u_value, dtype=complex),
                   np.zeros(lattice.n_edges), eps, delta, sigma)


def dump_state_csv(state: GLState, directory) -> None:
    """Write ``nodes.csv`` (x, y, re_u, im_u) and ``edges.csv`` (x, y, direction, A)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lat = state.lattice
    X, Y = state.grid.coords
    flat = lat.node_flat
    nodes = np.column_stack([X.ravel()[flat], Y.ravel()[flat], state.u.real, state.u.imag])
    np.savetxt(directory / "nodes.csv", nodes, delimiter=",", fmt="%.12g",
               header="x,y,re_u,im_u", comments="")
    mid = lat.edge_midpoints
    edges = np.column_stack([mid, lat.edge_dir, state.A])
    np.savetxt(directory / "edges.csv", edges, delimiter=",", fmt="%.12g",
               header="x,y,direction,A", comments="")


@dataclass(frozen=True)
class GLEnergyBreakdown:
    kinetic: float
    potential: float
    magnetic: float

    @property
    def total(self) -> float:
        return self.kinetic + self.potential + self.magnetic

    def to_dict(self):
        return {"kinetic": self.kinetic, "potential": self.potential,
                "magnetic": self.magnetic, "total": self.total}


@dataclass(frozen=True)
class GLGradient:
    """Partial derivatives: ``du = dE/dRe(u) + i dE/dIm(u)`` per node and ``dA`` per edge."""

    du: np.ndarray
    dA: np.ndarray

    def max_norm(self) -> float:
        parts = [np.abs(self.du.real), np.abs(self.du.imag), np.abs(self.dA)]
        return float(max((p.max() if p.size else 0.0) for p in parts))


def _terms(lat: Lattice, u, A, eps, h_ext):
    h = lat.grid.h
    kin = lat.kinetic_edges
    z = u[lat.kinetic_q] * np.exp(-1j * A[kin]) - u[lat.kinetic_p]
    kinetic = 0.5 * float(np.sum(z.real**2 + z.imag**2))
    rho2 = u.real**2 + u.imag**2
    potential = h * h / (4 * eps * eps) * float(np.sum((1.0 - rho2) ** 2))
    circ = np.sum(A[lat.cell_edges] * lat.cell_signs, axis=1)
    excess = circ - h * h * h_ext
    magnetic = 0.5 * float(np.sum(excess**2)) / (h * h)
    return z, rho2, excess, GLEnergyBreakdown(kinetic, potential, magnetic)


def _energy_only(lat, u, A, eps, h_ext) -> float:
    return _terms(lat, u, A, eps, h_ext)[3].total


def _gradient(lat, u, A, eps, h_ext, z, rho2, excess):
    h = lat.grid.h
    n = lat.n_nodes
    kin = lat.kinetic_edges
    p, q = lat.kinetic_p, lat.kinetic_q
    phase = np.exp(1j * A[kin])
    zq = z * phase
    du = -(np.bincount(p, weights=z.real, minlength=n) + 1j * np.bincount(p, weights=z.imag, minlength=n))
    du += np.bincount(q, weights=zq.real, minlength=n) + 1j * np.bincount(q, weights=zq.imag, minlength=n)
    du += (h * h / (eps * eps)) * (rho2 - 1.0) * u
    dA = np.bincount(lat.cell_edges.ravel(),
                     weights=(lat.cell_signs * (excess / (h * h))[:, None]).ravel(),
                     minlength=lat.n_edges)
    w = np.conj(u[p]) * u[q] / phase
    dA[kin] -= w.imag
    return GLGradient(du, dA)


def gl_energy(state: GLState) -> GLEnergyBreakdown:
    """Kinetic, potential and magnetic parts of the lattice energy."""
    return _terms(state.lattice, state.u, state.A, state.eps, state.h_ext)[3]


def gl_gradient(state: GLState) -> GLGradient:
    """Analytic gradient of :func:`gl_energy` with respect to Re u, Im u and A."""
    z, rho2, excess, _ = _terms(state.lattice, state.u, state.A, state.eps, state.h_ext)
    return _gradient(state.lattice, state.u, state.A, state.eps, state.h_ext, z, rho2, excess)


# ---------------------------------------------------------------------------
# Minimization


@dataclass(frozen=True)
class Schedule:
    """Stopping rule and line-search settings for :func:`minimize_gl`.

    ``grad_tol=None`` means ``1e-8 * max(1, |E0|)``, with ``E0`` the starting
    energy.
    """

    max_iters: int = 20000
    grad_tol: float | None = None
    armijo: float = 1e-4
    min_step: float = 1e-14
    preconditioned: bool = True
    perturbation: float = 0.0


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    energy: float
    grad_norm: float
    step: float


@dataclass(frozen=True, eq=False)
class GLResult:
    state: GLState
    trace: tuple[TraceRow, ...]
    converged: bool
    stalled: bool

    @property
    def energy(self) -> float:
        return self.trace[-1].energy

    @property
    def iterations(self) -> int:
        return self.trace[-1].iteration

    def trace_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("iter,energy,grad_norm,step\n")
            for row in self.trace:
                fh.write(f"{row.iteration},{row.energy:.15g},{row.grad_norm:.6g},{row.step:.6g}\n")


class _Problem:
    """Flat real-vector view ``x = [Re u, Im u, A]`` of the lattice energy."""

    def __init__(self, state: GLState):
        self.state = state
        self.lat = state.lattice
        self.n = state.lattice.n_nodes
        self.eps = state.eps
        self.h_ext = state.h_ext
        h = self.lat.grid.h
        self.coef = h * h / (4 * self.eps**2)
        self.degree = (np.bincount(self.lat.kinetic_p, minlength=self.n)
                       + np.bincount(self.lat.kinetic_q, minlength=self.n)).astype(float)
        cells_per_edge = np.bincount(self.lat.cell_edges.ravel(), minlength=self.lat.n_edges)
        self.curl_diag = cells_per_edge / (h * h)

    def split(self, x):
        n = self.n
        return x[:n] + 1j * x[n:2 * n], x[2 * n:]

    def join(self, u, A):
        return np.concatenate([u.real, u.imag, A])

    def energy(self, x) -> float:
        u, A = self.split(x)
        return _energy_only(self.lat, u, A, self.eps, self.h_ext)

    def energy_grad(self, x):
        u, A = self.split(x)
        z, rho2, excess, parts = _terms(self.lat, u, A, self.eps, self.h_ext)
        g = _gradient(self.lat, u, A, self.eps, self.h_ext, z, rho2, excess)
        return parts.total, self.join(g.du, g.dA)

    def precondition(self, x, g):
        """Approximate inverse Hessian: 2x2 blocks per node, diagonal on edges."""
        u, A = self.split(x)
        gu, gA = self.split(g)
        rho2 = u.real**2 + u.imag**2
        k_rad = self.degree + self.coef * np.abs(12 * rho2 - 4) + 1e-12
        k_tan = self.degree + self.coef * np.abs(4 * (rho2 - 1)) + 1e-12
        rho = np.sqrt(rho2)
        e = np.where(rho > 1e-12, u / np.where(rho > 1e-12, rho, 1.0), 1.0)
        g_rad = (np.conj(e) * gu).real
        g_tan = (np.conj(e) * gu).imag
        su = e * (g_rad / k_rad + 1j * g_tan / k_tan)
        kin = self.lat.kinetic_edges
        a_diag = self.curl_diag.copy()
        a_diag[kin] += np.abs(u[self.lat.kinetic_p]) * np.abs(u[self.lat.kinetic_q])
        a_diag = np.maximum(a_diag, 1e-12)
        return self.join(su, gA / a_diag)


def minimize_gl(init: GLState, schedule: Schedule | None = None, rng=None) -> GLResult:
    """Preconditioned nonlinear conjugate gradients (Polak-Ribiere+) with Armijo backtracking.

    The search stops when the max-norm of the raw gradient drops to
    ``grad_tol`` or after ``max_iters`` iterations.  When no step shorter
    than ``min_step`` decreases the energy, the best iterate is returned with
    ``stalled=True`` and a :class:`LineSearchStalled` warning is issued.
    """
    schedule = schedule or Schedule()
    prob = _Problem(init)
    x = prob.join(init.u, init.A)
    if schedule.perturbation > 0:
        rng = rng if rng is not None else np.random.default_rng(0)
        x = x.copy()
        x[:2 * prob.n] += schedule.perturbation * rng.standard_normal(2 * prob.n)
    f, g = prob.energy_grad(x)
    tol = schedule.grad_tol if schedule.grad_tol is not None else 1e-8 * max(1.0, abs(f))
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    trace = [TraceRow(0, f, gnorm, 0.0)]
    precond = prob.precondition if schedule.preconditioned else (lambda _x, v: v)
    s = precond(x, g)
    d = -s
    gs_old = float(g @ s)
    alpha = 1.0
    converged = gnorm <= tol
    stalled = False
    it = 0
    fresh = True
    while not converged and it < schedule.max_iters:
        it += 1
        slope = float(g @ d)
        if slope >= 0:
            d = -s
            slope = -float(g @ s)
            fresh = True
        step, f_new = _line_search(prob.energy, x, f, d, slope, alpha, schedule)
        if step == 0.0:
            if not fresh:
                # retry once along the preconditioned steepest descent direction
                d = -s
                fresh = True
                it -= 1
                continue
            stalled = True
            break
        x = x + step * d
        alpha = step
        f_prev = f
        f, g_new = prob.energy_grad(x)
        s_new = precond(x, g_new)
        gs_new = float(g_new @ s_new)
        beta = max(0.0, (gs_new - float(g_new @ s)) / gs_old) if gs_old > 0 else 0.0
        d = -s_new + beta * d
        g, s, gs_old = g_new, s_new, gs_new
        fresh = beta == 0.0
        gnorm = float(np.max(np.abs(g)))
        trace.append(TraceRow(it, f, gnorm, step))
        converged = gnorm <= tol
        if f > f_prev:  # never happens with Armijo; guard against roundoff surprises
            raise RuntimeError("energy increased across an accepted step")
    if stalled:
        warnings.warn(LineSearchStalled(
            f"line search stalled at iteration {it} (energy {f:.12g}, grad {gnorm:.3e})"))
    u, A = prob.split(x)
    return GLResult(init.with_fields(u=u.copy(), A=A.copy()), tuple(trace), converged, stalled)


def _line_search(energy, x, f0, d, slope, alpha0, schedule):
    """Armijo backtracking; accepted steps are refined by quadratic interpolation.

    The refinement may also lengthen the step (up to 10x per trial, a few
    trials), so a step that shrank in a stiff phase can recover.
    """
    c1 = schedule.armijo
    alpha = alpha0
    fa = energy(x + alpha * d)
    while True:
        if fa <= f0 + c1 * alpha * slope and fa <= f0:
            for _ in range(6):
                denom = fa - f0 - alpha * slope
                a_star = -slope * alpha * alpha / (2 * denom) if denom > 0 else np.inf
                capped = a_star > 10 * alpha
                if capped:
                    a_star = 10 * alpha
                if not (a_star > 0.0 and abs(a_star - alpha) > 0.05 * alpha):
                    break
                fs = energy(x + a_star * d)
                if not fs < fa:
                    break
                alpha, fa = a_star, fs
                if not capped:
                    break
            return alpha, fa
        denom = fa - f0 - alpha * slope
        a_new = -slope * alpha * alpha / (2 * denom) if denom > 0 and np.isfinite(denom) else 0.1 * alpha
        alpha = float(np.clip(a_new, 0.1 * alpha, 0.5 * alpha))
        if alpha < schedule.min_step:
            return 0.0, f0
        fa = energy(x + alpha * d)


# ---------------------------------------------------------------------------
# Seeding, gauge fixing and the decomposition diagnostic


def seed_from_london(sol: LondonSolution, eps: float, collar_factor: float = 3.0,
                     floor: float = 0.1, recon: S1Reconstruction | None = None) -> GLState:
    """Order parameter ``rho * exp(i Phi)`` and the reconstructed potential.

    ``rho`` rises linearly from ``floor`` on a hole boundary to 1 at distance
    ``collar_factor * eps``.
    """
    recon = recon or reconstruct_s1_minimizer(sol)
    lat = recon.lattice
    X, Y = lat.grid.coords
    xs = X.ravel()[lat.node_flat]
    ys = Y.ravel()[lat.node_flat]
    dist = np.full(lat.n_nodes, np.inf)
    for ax, ay in sol.domain.holes:
        dist = np.minimum(dist, np.hypot(xs - ax, ys - ay) - sol.delta)
    rho = floor + (1.0 - floor) * np.clip(dist / (collar_factor * eps), 0.0, 1.0)
    return GLState(lat, rho * np.exp(1j * recon.phase), recon.A.copy(), float(eps), sol.delta, sol.sigma)


def gauge_transform(state: GLState, phi_graph: np.ndarray) -> GLState:
    """Apply ``u -> u exp(i phi)``, ``A_pq -> A_pq + phi_q - phi_p``.

    ``phi_graph`` is indexed by the lattice graph nodes.
    """
    lat = state.lattice
    A = state.A + phi_graph[lat.graph_q] - phi_graph[lat.graph_p]
    pos = np.searchsorted(lat.graph_nodes, lat.node_flat)
    pos = np.minimum(pos, len(lat.graph_nodes) - 1)
    present = lat.graph_nodes[pos] == lat.node_flat
    phi_nodes = np.where(present, phi_graph[pos], 0.0)
    return state.with_fields(u=state.u * np.exp(1j * phi_nodes), A=A)


def lattice_divergence(state: GLState) -> np.ndarray:
    """Net edge field out of every graph node (zero in the Coulomb gauge)."""
    lat = state.lattice
    n = len(lat.graph_nodes)
    return (np.bincount(lat.graph_p, weights=state.A, minlength=n)
            - np.bincount(lat.graph_q, weights=state.A, minlength=n))


def project_coulomb_gauge(state: GLState, tol: float = 1e-13) -> GLState:
    """Gauge-transform ``state`` so the edge field has zero lattice divergence."""
    lat = state.lattice
    phi = graph_least_squares(len(lat.graph_nodes), lat.graph_p, lat.graph_q, -state.A, tol=tol)
    return gauge_transform(state, phi)


@dataclass(frozen=True)
class DecompositionReport:
    gl_total: float
    london_total: float
    F_term: float
    cross_term: float

    @property
    def residual(self) -> float:
        return self.gl_total - self.london_total - self.F_term - self.cross_term

    def to_dict(self):
        return {"gl_total": self.gl_total, "london_total": self.london_total,
                "F_term": self.F_term, "cross_term": self.cross_term, "residual": self.residual}


def energy_decomposition_check(gl: GLState, sol: LondonSolution,
                               recon: S1Reconstruction | None = None) -> DecompositionReport:
    """Split the GL energy around the London minimizer with degrees ``sol.D``.

    With ``v = u conj(u_D)`` and ``B = A - A_D``, the report holds the lattice
    energy of ``(u_D, A_D)``, the free energy of ``(v, B)`` without applied
    field, and the cross term ``-int rot_grad(h_D) . Im(conj(v) grad v)``.
    """
    recon = recon or reconstruct_s1_minimizer(sol, gl.grid)
    lat = gl.lattice
    london_state = gl.with_fields(u=np.exp(1j * recon.phase), A=recon.A)
    v = gl.u * np.exp(-1j * recon.phase)
    B = gl.A - recon.A
    free = _terms(lat, v, B, gl.eps, 0.0)[3]
    rot = edge_rotated_gradient(lat, recon.field_cells)[lat.kinetic_edges]
    cross = -float(np.sum(rot * np.imag(np.conj(v[lat.kinetic_p]) * v[lat.kinetic_q])))
    return DecompositionReport(
        gl_total=gl_energy(gl).total,
        london_total=gl_energy(london_state).total,
        F_term=free.total,
        cross_term=cross,
    )
