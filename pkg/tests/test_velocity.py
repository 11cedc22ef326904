"""Velocity grid, Maxwellian, projector and moment-functional checks."""
import numpy as np
import pytest

from boltzlab.velocity import (HighMoments, Projector, build_grid,
                               build_invariant_basis, high_moments, inner,
                               maxwellian, maxwellian_at, moments, norm,
                               project_transported, sqrt_maxwellian,
                               transported_projection_bound)

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# grid construction
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("extent,n", [(6.0, 2), (6.0, 7), (-1.0, 8), (0.0, 12)])
def test_build_grid_rejects_bad_arguments(extent, n):
    with pytest.raises(ValueError):
        build_grid(extent, n)


def test_uniform_rule_weight_identity():
    g = build_grid(6.0, 12)
    assert g.n_nodes == 1728
    assert np.isclose(g.weights.sum(), (2 * 6.0) ** 3, rtol=0, atol=1e-9)
    # coincidentally (2V)^3 = 1728 here as well
    assert np.isclose(g.weights.sum(), 1728.0)


def test_maxwellian_mass_fine_grid(grid168):
    # Poisson-summation floor of the midpoint rule at h=1 sits at 1.6e-8,
    # just above the 1e-8 one might hope for; see the decisions ledger.
    mass = np.dot(grid168.weights, maxwellian(grid168))
    assert abs(mass - 1.0) <= 2e-8


def test_maxwellian_tail_reported():
    g = build_grid(6.0, 12)
    assert g.boundary_maxwellian < 1.6e-8


def test_tol_quad_default_acceptance(grid126, grid168):
    assert grid126.tol_quad <= 1e-3
    # the (16,8) battery is dominated by the fourth-moment defect 3.8e-6,
    # above the hoped-for 1e-6 (ledger); it still shrinks monotonically
    assert grid168.tol_quad <= 1e-5
    assert grid168.quadrature_battery < grid126.quadrature_battery


# ---------------------------------------------------------------------------
# maxwellian
# ---------------------------------------------------------------------------

def test_maxwellian_formula_values():
    assert np.isclose(maxwellian_at([0.0, 0.0, 0.0]), TWO_PI ** -1.5,
                      rtol=1e-14)
    assert np.isclose(maxwellian_at([1.0, 0.0, 0.0]),
                      TWO_PI ** -1.5 * np.exp(-0.5), rtol=1e-14)


def test_maxwellian_positive_peak(grid126):
    mu = maxwellian(grid126)
    assert np.all(mu > 0)
    peak = grid126.xi[np.argmax(mu)]
    assert np.linalg.norm(peak, np.inf) <= grid126.spacing


def test_maxwellian_second_moment(grid168):
    mu = maxwellian(grid168)
    m2 = np.dot(grid168.weights, mu * grid168.xi[:, 0] ** 2)
    assert abs(m2 - 1.0) <= grid168.tol_quad


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------

def test_moments_of_equilibrium(grid126):
    m = moments(grid126, sqrt_maxwellian(grid126))
    assert abs(m.a - 1.0) <= grid126.tol_quad
    assert np.max(np.abs(m.b)) <= grid126.tol_quad
    assert abs(m.c) <= grid126.tol_quad


def test_moments_energy_mode(grid126):
    r2 = np.sum(grid126.xi ** 2, axis=1)
    f = (r2 - 3.0) * sqrt_maxwellian(grid126)
    m = moments(grid126, f)
    assert abs(m.c - 1.0) <= grid126.tol_quad


def test_moments_zero(grid126):
    m = moments(grid126, np.zeros(grid126.n_nodes))
    assert m.a == 0 and np.all(m.b == 0) and m.c == 0


def test_moments_shape_mismatch(grid126):
    with pytest.raises(ValueError):
        moments(grid126, np.zeros(17))


# ---------------------------------------------------------------------------
# invariant basis and projector
# ---------------------------------------------------------------------------

def test_basis_orthonormal(grid126):
    basis = build_invariant_basis(grid126)
    gram = basis.gram()
    assert np.max(np.abs(gram - np.eye(5))) < 1e-12
    assert np.linalg.matrix_rank(basis.gram("raw")) == 5


def test_projector_fixes_equilibrium(grid126):
    proj = Projector(build_invariant_basis(grid126))
    smu = sqrt_maxwellian(grid126)
    assert norm(grid126, proj.macro(smu) - smu) <= 1e-12 * norm(grid126, smu)


def test_projector_annihilates_shear_mode(grid126):
    # xi1 xi2 sqrt(mu) is odd per axis: midpoint-grid parity kills every
    # basis coefficient exactly
    proj = Projector(build_invariant_basis(grid126))
    f = grid126.xi[:, 0] * grid126.xi[:, 1] * sqrt_maxwellian(grid126)
    assert norm(grid126, proj.macro(f)) <= grid126.tol_quad * norm(grid126, f)
    assert norm(grid126, proj.micro(f) - f) <= grid126.tol_quad * norm(grid126, f)


def test_projector_idempotent_selfadjoint(grid126, rng):
    proj = Projector(build_invariant_basis(grid126))
    f = rng.standard_normal(grid126.n_nodes)
    g = rng.standard_normal(grid126.n_nodes)
    pf = proj.macro(f)
    assert norm(grid126, proj.macro(pf) - pf) <= 1e-12 * norm(grid126, f)
    assert abs(inner(grid126, pf, g) - inner(grid126, f, proj.macro(g))) \
        <= 1e-12 * norm(grid126, f) * norm(grid126, g)
    # complement splits f exactly and orthogonally
    assert np.allclose(pf + proj.micro(f), f, rtol=0, atol=1e-14)
    assert abs(inner(grid126, pf, proj.micro(g))) \
        <= 1e-12 * norm(grid126, f) * norm(grid126, g)


def test_micro_moments_vanish(grid126, rng):
    proj = Projector(build_invariant_basis(grid126))
    f = rng.standard_normal(grid126.n_nodes)
    m = moments(grid126, proj.micro(f))
    assert abs(m.a) <= 1e-12 * norm(grid126, f)
    assert np.max(np.abs(m.b)) <= 1e-12 * norm(grid126, f)
    assert abs(m.c) <= 1e-12 * norm(grid126, f)


def test_macro_moments_preserved(grid126, rng):
    proj = Projector(build_invariant_basis(grid126))
    f = rng.standard_normal(grid126.n_nodes)
    mf = moments(grid126, f).as_array()
    mpf = moments(grid126, proj.macro(f)).as_array()
    assert np.max(np.abs(mf - mpf)) <= 1e-12 * norm(grid126, f)


def _projector_mode_gap(grid):
    """Operator-norm distance between the two projector modes."""
    basis = build_invariant_basis(grid)
    orth = Projector(basis, "orthonormal")
    ana = Projector(basis, "analytic")
    rng = np.random.default_rng(7)
    v = rng.standard_normal(grid.n_nodes)
    gap = 0.0
    for _ in range(40):
        w = orth.macro(v) - ana.macro(v)
        gap = norm(grid, w) / norm(grid, v)
        v = rng.standard_normal(grid.n_nodes)  # fresh probes: cheap sup proxy
    probes = [rng.standard_normal(grid.n_nodes) for _ in range(60)]
    return max(norm(grid, orth.macro(p) - ana.macro(p)) / norm(grid, p)
               for p in probes)


def test_projector_modes_agree_and_converge(grid126, grid168):
    gap_coarse = _projector_mode_gap(grid126)
    gap_fine = _projector_mode_gap(grid168)
    assert gap_coarse <= 10.0 * grid126.tol_quad
    assert gap_fine < gap_coarse


# ---------------------------------------------------------------------------
# transported projection P(xi_i f)
# ---------------------------------------------------------------------------

def test_transported_projection_zero(grid126):
    proj = Projector(build_invariant_basis(grid126))
    out = project_transported(proj, np.zeros(grid126.n_nodes))
    assert np.all(out == 0)


def test_transported_projection_momentum_mode(grid126):
    proj = Projector(build_invariant_basis(grid126))
    smu = sqrt_maxwellian(grid126)
    target = grid126.xi[:, 0] * smu
    for route in ("projector", "moment"):
        out = project_transported(proj, smu, direction=0, route=route)
        assert norm(grid126, out - target) <= grid126.tol_quad * norm(
            grid126, target)


def test_transported_projection_routes_agree(grid126, rng):
    proj = Projector(build_invariant_basis(grid126))
    f = rng.standard_normal(grid126.n_nodes)
    a = project_transported(proj, f, route="projector")
    b = project_transported(proj, f, route="moment")
    scale = norm(grid126, grid126.xi[:, 0] * f)
    assert norm(grid126, a - b) <= 10.0 * grid126.tol_quad * scale


def test_transported_projection_bounded(grid86):
    c = transported_projection_bound(Projector(build_invariant_basis(grid86)))
    assert 0.0 < c < 10.0


# ---------------------------------------------------------------------------
# high-order moments
# ---------------------------------------------------------------------------

def test_stress_of_equilibrium(grid126):
    stress, heat = high_moments(grid126, sqrt_maxwellian(grid126))
    expected = np.eye(3) - 1.0
    assert np.max(np.abs(stress - expected)) <= grid126.tol_quad
    assert np.max(np.abs(heat)) <= grid126.tol_quad


def test_heat_of_momentum_mode(grid126):
    f = grid126.xi[:, 0] * sqrt_maxwellian(grid126)
    _, heat = high_moments(grid126, f)
    # E[xi1^2 |xi|^2] = 5 for the unit Gaussian makes this vanish
    assert abs(heat[0]) <= grid126.tol_quad


def test_high_moments_zero_and_linear(grid126, rng):
    hm = HighMoments(grid126)
    z = np.zeros(grid126.n_nodes)
    assert np.all(hm.stress(z) == 0) and np.all(hm.heat(z) == 0)
    f = rng.standard_normal(grid126.n_nodes)
    g = rng.standard_normal(grid126.n_nodes)
    a, b = 0.37, -1.2
    lhs_s = hm.stress(a * f + b * g)
    rhs_s = a * hm.stress(f) + b * hm.stress(g)
    lhs_h = hm.heat(a * f + b * g)
    rhs_h = a * hm.heat(f) + b * hm.heat(g)
    scale = max(np.max(np.abs(rhs_s)), np.max(np.abs(rhs_h)))
    assert np.max(np.abs(lhs_s - rhs_s)) <= 1e-13 * scale
    assert np.max(np.abs(lhs_h - rhs_h)) <= 1e-13 * scale
