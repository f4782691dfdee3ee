import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from holegl.elliptic import boundary_flux, solve_basis_zeta
from holegl.errors import ZeroOnLoop
from holegl.geometry import build_grid, circle_loop, disk_domain
from holegl.gl import GLState, Schedule, minimize_gl, uniform_state
from holegl.vortex import (
    assert_no_bulk_vortices,
    find_bad_regions,
    hole_degrees,
    plaquette_vorticity,
    smallest_enclosing_disk,
    vortex_report,
    winding_number,
    winding_value,
)


@pytest.fixture(scope="module")
def plain():
    dom = disk_domain([], delta=0.05)
    grid = build_grid(dom, 0.02)
    return dom, grid


def planted(grid, vortices, core=0.0):
    """Product of unit-modulus (or tanh-profile) vortices ``[(x, y, degree), ...]`` on the node array."""
    X, Y = grid.coords
    u = np.ones(grid.dims, dtype=complex)
    for x0, y0, d in vortices:
        z = (X - x0) + 1j * (Y - y0)
        r = np.abs(z)
        phase = np.where(r > 0, z / np.where(r > 0, r, 1), 1.0)
        u *= phase ** d if d >= 0 else np.conj(phase) ** (-d)
        if core > 0:
            u *= np.tanh(r / core)
    return u


def as_state(grid, u_grid, A=None, eps=0.01, sigma=0.0):
    lat = grid.lattice
    u = u_grid.ravel()[lat.node_flat]
    return GLState(lat, u, np.zeros(lat.n_edges) if A is None else A, eps, grid.domain.hole_radius, sigma)


@pytest.mark.parametrize("d", [-2, -1, 0, 1, 2, 3])
def test_planted_degrees(plain, d):
    _, grid = plain
    u = planted(grid, [(0.1, -0.05, d)])
    loop = circle_loop(grid, (0.1, -0.05), 0.3)
    assert winding_number(u, loop) == d


def test_constant_field_has_zero_winding(plain):
    _, grid = plain
    loop = circle_loop(grid, (0.0, 0.0), 0.5)
    assert winding_number(np.ones(grid.dims, complex), loop) == 0


def test_conjugation_negates(plain):
    _, grid = plain
    u = planted(grid, [(0.0, 0.0, 2)])
    loop = circle_loop(grid, (0.0, 0.0), 0.4)
    assert winding_number(np.conj(u), loop) == -2
    assert winding_number(u, loop.reversed()) == -2


def test_zero_on_loop(plain):
    _, grid = plain
    u = planted(grid, [(0.0, 0.0, 1)])
    loop = circle_loop(grid, (0.0, 0.0), 0.4)
    u[loop.nodes[3, 0], loop.nodes[3, 1]] = 0.0
    with pytest.raises(ZeroOnLoop):
        winding_number(u, loop)


def test_degree_additivity(plain):
    _, grid = plain
    u = planted(grid, [(-0.3, 0.0, 2), (0.3, 0.1, -1)])
    big = winding_number(u, circle_loop(grid, (0.0, 0.0), 0.7))
    left = winding_number(u, circle_loop(grid, (-0.3, 0.0), 0.2))
    right = winding_number(u, circle_loop(grid, (0.3, 0.1), 0.2))
    assert (left, right) == (2, -1)
    assert big == left + right


@given(st.floats(0.1, 5.0), st.floats(-3.0, 3.0), st.integers(-2, 3))
@settings(max_examples=25, deadline=None)
def test_winding_gauge_invariant(freq, shift, d):
    dom = disk_domain([], delta=0.05)
    grid = build_grid(dom, 0.025)
    X, Y = grid.coords
    u = planted(grid, [(0.05, 0.0, d)])
    phi = shift + np.sin(freq * X) * np.cos(freq * Y)
    loop = circle_loop(grid, (0.05, 0.0), 0.35)
    assert winding_number(u * np.exp(1j * phi), loop) == winding_number(u, loop) == d


def test_unrounded_value_is_integer_for_smooth_field(plain):
    _, grid = plain
    u = planted(grid, [(0.0, 0.0, 3)])
    w = winding_value(u, circle_loop(grid, (0.0, 0.0), 0.5))
    assert abs(w - 3) < 1e-12


def test_plaquette_vorticity_locates_vortex(plain):
    _, grid = plain
    state = as_state(grid, planted(grid, [(0.011, 0.013, 1), (-0.4, 0.3, -1)]))
    cells, vort = plaquette_vorticity(state)
    assert vort.sum() == 0
    assert sorted(vort[vort != 0].tolist()) == [-1, 1]
    c = grid.lattice.cell_centers[cells[vort == 1][0]]
    assert np.hypot(c[0] - 0.011, c[1] - 0.013) < grid.h


def test_smallest_enclosing_disk(rng):
    pts = rng.normal(size=(200, 2))
    c, r = smallest_enclosing_disk(pts)
    assert np.all(np.hypot(*(pts - c).T) <= r * (1 + 1e-9))
    # the minimal disk touches at least two points
    assert np.sum(np.isclose(np.hypot(*(pts - c).T), r, rtol=1e-9)) >= 2


def test_no_bad_regions_in_uniform_state(plain):
    _, grid = plain
    assert find_bad_regions(as_state(grid, np.ones(grid.dims, complex))) == []


def test_single_planted_bulk_vortex(plain):
    _, grid = plain
    core = 0.04
    state = as_state(grid, planted(grid, [(0.2, 0.1, 1)], core=core))
    regions = find_bad_regions(state)
    assert len(regions) == 1
    reg = regions[0]
    assert reg.degree == 1
    assert np.hypot(reg.center[0] - 0.2, reg.center[1] - 0.1) < 2 * grid.h
    assert reg.radius < 3 * core
    assert reg.min_modulus < 0.5


def test_close_vortices_merge(plain):
    _, grid = plain
    core = 0.04
    state = as_state(grid, planted(grid, [(0.0, 0.0, 1), (0.07, 0.0, 1)], core=core))
    regions = find_bad_regions(state)
    assert len(regions) == 1
    assert regions[0].degree == 2


def test_regions_are_disjoint(plain):
    _, grid = plain
    vort = [(-0.5, 0.0, 1), (-0.44, 0.05, -1), (0.3, 0.3, 1), (0.3, -0.4, 2), (0.0, 0.6, -1)]
    regions = find_bad_regions(as_state(grid, planted(grid, vort, core=0.03)))
    for a in range(len(regions)):
        for b in range(a + 1, len(regions)):
            ra, rb = regions[a], regions[b]
            assert math.dist(ra.center, rb.center) >= ra.radius + rb.radius


@pytest.fixture(scope="module")
def holed():
    dom = disk_domain([(-0.3, 0.0)], delta=0.05)
    return dom, build_grid(dom, 0.0125)


def test_bulk_vortex_fails_check(holed):
    dom, grid = holed
    state = as_state(grid, planted(grid, [(-0.3, 0.0, 2), (0.4, 0.2, 1)], core=0.03))
    report = vortex_report(state)
    assert report.hole_degrees == (2,)
    check = assert_no_bulk_vortices(report, dom)
    assert not check.passed
    assert len(check.offending) == 1
    assert math.dist(check.offending[0].center, (0.4, 0.2)) < 0.05
    assert report.bulk_degree_sum == 1


def test_hole_vortex_alone_passes(holed):
    dom, grid = holed
    state = as_state(grid, planted(grid, [(-0.3, 0.0, 2)]))
    report = vortex_report(state)
    assert report.per_radius.degrees == ((2,), (2,))
    assert report.per_radius.consistent
    assert assert_no_bulk_vortices(report, dom).passed
    assert report.bulk_degree_sum == 0


def test_annulus_vortex_flags_disagreement(holed):
    dom, grid = holed
    # a bulk vortex at distance 3 delta sits between the two measuring loops
    state = as_state(grid, planted(grid, [(-0.3, 0.0, 1), (-0.15, 0.0, 1)], core=0.01))
    per = hole_degrees(state)
    assert per.degrees == ((1,), (2,))
    assert per.disagreements() == [0]
    assert not per.consistent


def test_meissner_run_at_weak_field_has_no_regions():
    dom = disk_domain([(0.0, 0.0)], delta=0.1)
    grid = build_grid(dom, 0.025)
    init = uniform_state(grid.lattice, dom.hole_radius**3, dom.hole_radius, 0.5)
    res = minimize_gl(init, Schedule(max_iters=2000))
    report = vortex_report(res.state)
    assert report.bad_regions == ()
    assert report.hole_degrees == (0,)
    assert assert_no_bulk_vortices(report, dom).passed


def test_zeta_flux_scaling_band():
    """Mean normal derivative of zeta times delta |log delta| stays within a factor-2 band."""
    values = []
    for delta in (0.16, 0.08, 0.04):
        dom = disk_domain([(0.05, -0.1)], delta=delta)
        grid = build_grid(dom, delta / 4)
        flux = boundary_flux(solve_basis_zeta(dom, grid, 0), 0)
        mean_normal = flux / (2 * math.pi * delta)
        values.append(mean_normal * delta * abs(math.log(delta)))
    assert max(values) / min(values) <= 2.0
