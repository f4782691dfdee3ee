import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import i0 as sp_i0, i1 as sp_i1, k0 as sp_k0, k1 as sp_k1

from holegl.elliptic import (
    assemble_screened,
    boundary_flux,
    constant_field,
    dirichlet_inner,
    field_from_function,
    h1_inner,
    l2_inner,
    outer_flux,
    pcg,
    solve_basis_zeta,
    solve_cg,
    solve_radial,
    solve_screened,
    solve_xi0,
)
from holegl.errors import DomainError, GridMismatch, NoConvergence
from holegl.geometry import DIRICHLET_HOLE, DIRICHLET_OUTER, INTERIOR, build_grid, disk_domain

XI0_ORIGIN = 1.0 / sp_i0(1.0)          # 0.789848...
XI0_HALF = sp_i0(0.5) / sp_i0(1.0)     # 0.839990...


@pytest.fixture(scope="module")
def plain_disk():
    dom = disk_domain([], delta=0.05)
    return dom, build_grid(dom, 0.02)


def test_constant_solution_is_exact(plain_disk):
    _, grid = plain_disk
    u = solve_screened(grid, f=1.0, outer_bc=1.0, tol=1e-14)
    assert np.max(np.abs(u.interior_values() - 1.0)) < 1e-12


def test_operator_symmetric_with_positive_diagonal(coarse_grid):
    sysm = assemble_screened(coarse_grid, 0.0, 1.0, [0.0])
    M = sysm.matrix
    assert abs(M - M.T).max() == 0.0
    assert np.all(M.diagonal() > 0)


def test_xi0_at_origin_and_half_radius(central_domain, central_grid, central_xi0):
    vals = central_xi0.interpolate(np.array([[0.0, 0.0], [0.5, 0.0], [0.0, -0.5]]))
    h2 = central_grid.h**2
    assert abs(vals[0] - XI0_ORIGIN) <= 10 * h2
    assert np.all(np.abs(vals[1:] - XI0_HALF) <= 10 * h2)


def test_xi0_bounds(central_domain, central_xi0):
    inner = central_xi0.interior_values()
    assert np.all(inner > 0) and np.all(inner < 1)
    grid = central_xi0.grid
    ghosts = central_xi0.values[grid.labels == DIRICHLET_OUTER]
    assert np.all(ghosts == 1.0)
    assert np.all(central_xi0.cut_values == 1.0)


def test_xi0_rejects_foreign_grid(central_domain, coarse_grid):
    with pytest.raises(GridMismatch):
        solve_xi0(central_domain, coarse_grid)


def test_pcg_tiny_system_matches_direct():
    A = np.array([[4.0, 1.0, 0.0], [1.0, 3.0, -0.5], [0.0, -0.5, 2.0]])
    b = np.array([1.0, -2.0, 0.5])
    x, info = pcg(sp.csr_matrix(A), b, tol=1e-14)
    assert np.allclose(x, np.linalg.solve(A, b), rtol=0, atol=1e-12)
    assert info.residual <= 1e-14 * 1.01


def test_cg_converges_on_xi0_problem(plain_disk):
    dom, grid = plain_disk
    field = solve_cg(assemble_screened(grid, 0.0, 1.0), tol=1e-10, max_iter=5000)
    assert field.info.residual <= 1e-10 * 1.01
    assert field.info.iterations < 5000


def test_cg_iteration_cap_raises(plain_disk):
    _, grid = plain_disk
    with pytest.raises(NoConvergence) as info:
        solve_cg(assemble_screened(grid, 0.0, 1.0), tol=1e-10, max_iter=1)
    assert info.value.iterations >= 1


def test_zeta_bounds_and_boundary_values():
    dom = disk_domain([(-0.4, 0.0), (0.4, 0.1)], delta=0.05)
    grid = build_grid(dom, 0.0125)
    for i in range(2):
        z = solve_basis_zeta(dom, grid, i)
        assert z.values.min() >= 0.0 and z.values.max() <= 1.0
        other = (grid.labels == DIRICHLET_HOLE) & (grid.hole_index == 1 - i)
        mine = (grid.labels == DIRICHLET_HOLE) & (grid.hole_index == i)
        assert np.all(z.values[other] == 0.0)
        assert np.all(z.values[mine] == 1.0)


def test_zeta_matches_radial_oracle(central_domain, central_grid):
    z = solve_basis_zeta(central_domain, central_grid, 0)
    prof = solve_radial(0.05, 1.0, "screened", bc=(1.0, 0.0))
    X, Y = central_grid.coords
    m = central_grid.labels == INTERIOR
    err = np.abs(z.values[m] - prof.value(np.hypot(X[m], Y[m])))
    assert err.max() <= central_grid.h


def test_flux_of_constant_is_zero(coarse_grid):
    c = solve_screened(coarse_grid, f=1.0, outer_bc=1.0, hole_bc=[1.0], tol=1e-14)
    assert abs(boundary_flux(c, 0)) <= 1e-10
    assert abs(outer_flux(c)) <= 1e-10


def test_flux_of_bessel_profile(central_domain, central_grid):
    delta = 0.05
    outer = sp_k0(1.0) / sp_k0(delta)
    u = solve_screened(central_grid, 0.0, outer, [1.0])
    exact = 2 * math.pi * delta * sp_k1(delta) / sp_k0(delta)
    assert boundary_flux(u, 0) == pytest.approx(exact, rel=0.02)


def test_flux_matches_radial_derivative(central_domain, central_grid):
    z = solve_basis_zeta(central_domain, central_grid, 0)
    prof = solve_radial(0.05, 1.0, "screened", bc=(1.0, 0.0))
    exact = -2 * math.pi * 0.05 * float(prof.derivative(0.05))
    assert boundary_flux(z, 0) == pytest.approx(exact, rel=0.02)


def test_flux_balance(coarse_domain, coarse_grid):
    f = field_from_function(coarse_grid, lambda x, y: 1.0 + x * y)
    u = solve_screened(coarse_grid, f, lambda x, y: 0.5 + 0.2 * x, [2.0], tol=1e-13)
    total = boundary_flux(u, 0) + outer_flux(u)
    rhs = l2_inner(u, constant_field(coarse_grid, 1.0)) - l2_inner(f, constant_field(coarse_grid, 1.0))
    assert total == pytest.approx(rhs, abs=1e-8 * max(1.0, abs(rhs)))


def test_unit_area(plain_disk):
    _, grid = plain_disk
    one = constant_field(grid, 1.0)
    assert abs(l2_inner(one, one) - math.pi) <= 4 * grid.h


def test_xi0_energy_matches_radial_quadrature(plain_disk):
    dom, grid = plain_disk
    xi = solve_xi0(dom, grid)
    exact = 2 * math.pi * sp_i1(1.0) / sp_i0(1.0)
    assert h1_inner(xi, xi) == pytest.approx(exact, rel=0.02)


def test_inner_products_symmetric_and_bilinear(coarse_grid, rng):
    a = field_from_function(coarse_grid, lambda x, y: np.sin(3 * x) + y)
    b = field_from_function(coarse_grid, lambda x, y: x * x - y)
    c = field_from_function(coarse_grid, lambda x, y: np.cos(x + 2 * y))
    for inner in (l2_inner, dirichlet_inner, h1_inner):
        assert inner(a, b) == inner(b, a)
        lhs = inner(a + c.scaled(2.5), b)
        assert lhs == pytest.approx(inner(a, b) + 2.5 * inner(c, b), rel=1e-12)


def test_inner_product_grid_mismatch(coarse_grid, plain_disk):
    a = constant_field(coarse_grid, 1.0)
    b = constant_field(plain_disk[1], 1.0)
    with pytest.raises(GridMismatch):
        l2_inner(a, b)


@given(st.lists(st.floats(-3.0, 3.0), min_size=3, max_size=3))
@settings(max_examples=15, deadline=None)
def test_discrete_maximum_principle(data):
    dom = disk_domain([(0.3, 0.0), (-0.3, -0.2)], delta=0.1)
    grid = build_grid(dom, 0.025)
    outer, h1, h2 = data
    u = solve_screened(grid, 0.0, outer, [h1, h2])
    lo, hi = min(data), max(data)
    vals = u.interior_values()
    tol = 1e-9 * max(1.0, abs(lo), abs(hi))
    assert vals.min() >= min(lo, 0.0) - tol and vals.max() <= max(hi, 0.0) + tol


def test_radial_screened_matches_bessel():
    d = 0.05
    prof = solve_radial(d, 1.0, "screened", bc=(1.0, 0.0))
    det = sp_i0(d) * sp_k0(1.0) - sp_i0(1.0) * sp_k0(d)
    c1, c2 = sp_k0(1.0) / det, -sp_i0(1.0) / det
    r = np.linspace(d, 1.0, 400)
    assert np.max(np.abs(prof.value(r) - (c1 * sp_i0(r) + c2 * sp_k0(r)))) <= 1e-8


def test_radial_poisson_matches_log():
    prof = solve_radial(0.1, 1.0, "poisson", bc=(1.0, 0.0))
    r = np.linspace(0.1, 1.0, 300)
    assert np.max(np.abs(prof.value(r) - np.log(r) / np.log(0.1))) <= 1e-8


def test_radial_constant_solution():
    prof = solve_radial(0.05, 1.0, "screened", bc=(1.0, 1.0), f=1.0)
    assert np.max(np.abs(prof.values - 1.0)) <= 1e-8


def test_radial_regular_at_origin():
    prof = solve_radial(0.0, 1.0, "screened", bc=(0.0, 1.0))
    r = np.linspace(0.0, 1.0, 100)
    assert np.max(np.abs(prof.value(r) - sp_i0(r) / sp_i0(1.0))) <= 1e-8


@pytest.mark.parametrize("r_in,r_out", [(-0.1, 1.0), (1.0, 1.0), (0.5, 0.2)])
def test_radial_rejects_bad_interval(r_in, r_out):
    with pytest.raises(DomainError):
        solve_radial(r_in, r_out)


def test_field_csv_dump(tmp_path, coarse_grid):
    u = constant_field(coarse_grid, 2.0)
    path = tmp_path / "u.csv"
    u.dump_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0].replace(" ", "") == "x,y,value"
    assert len(lines) > 1
