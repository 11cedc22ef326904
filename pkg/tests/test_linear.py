"""Per-mode linear dynamics: operators, integrators, fits and the sweep."""
import numpy as np
import pytest

from boltzlab.linear import (ModeOperator, SemigroupPropagator, assemble_mode,
                             default_initial_recipe, evolve_mode, fit_decay,
                             micro_equation_residual)
from boltzlab.velocity import inner, norm, sqrt_maxwellian


@pytest.fixture(scope="module")
def op_half(asm86):
    return assemble_mode(asm86, [0.5, 0.0, 0.0])


# ---------------------------------------------------------------------------
# the mode operator
# ---------------------------------------------------------------------------

def test_transport_is_skew(op_half, asm86, rng):
    grid = asm86.grid
    for _ in range(20):
        f = (rng.standard_normal(grid.n_nodes)
             + 1j * rng.standard_normal(grid.n_nodes))
        q = inner(grid, f, op_half.apply(f))
        lf = inner(grid, f, asm86.apply_L(f)).real
        assert abs(q.real + lf) <= 1e-12 * norm(grid, f) ** 2
        # imaginary part is exactly the transport quadratic form
        kxi = -inner(grid, f, op_half.kxi * f).real
        assert abs(q.imag - kxi) <= 1e-12 * norm(grid, f) ** 2


def test_zero_mode_is_minus_l(asm86, rng):
    op = assemble_mode(asm86, [0.0, 0.0, 0.0])
    f = rng.standard_normal(asm86.grid.n_nodes)
    assert np.allclose(op.apply(f), -asm86.apply_L(f), rtol=0, atol=1e-13)
    q = inner(asm86.grid, f, op.apply(f))
    assert q.real <= asm86.null_residual * norm(asm86.grid, f) ** 2


def test_transport_diagonal_action(asm86):
    op = assemble_mode(asm86, [1.0, 0.0, 0.0])
    j = 137
    f = np.zeros(asm86.grid.n_nodes, dtype=complex)
    f[j] = 1.0
    out = op.apply(f) + asm86.apply_L(f)
    expect = np.zeros_like(f)
    expect[j] = -1j * asm86.grid.xi[j, 0]
    assert np.allclose(out, expect, rtol=0, atol=1e-14)


def test_dense_matches_apply(op_half, rng):
    a = op_half.dense()
    f = (rng.standard_normal(a.shape[0])
         + 1j * rng.standard_normal(a.shape[0]))
    assert np.allclose(a @ f, op_half.apply(f), rtol=1e-12, atol=1e-12)


# ---------------------------------------------------------------------------
# integration routes
# ---------------------------------------------------------------------------

def test_equilibrium_mode_stationary(asm86):
    op = assemble_mode(asm86, [0.0, 0.0, 0.0])
    smu = sqrt_maxwellian(asm86.grid).astype(complex)
    traj = evolve_mode(op, smu, np.linspace(0.0, 2.0, 5))
    drift = np.abs(traj.norms - traj.norms[0]) / traj.norms[0]
    assert np.max(drift) <= 1e-10


def test_zero_mode_macro_conserved(asm86):
    op = assemble_mode(asm86, [0.0, 0.0, 0.0])
    f0 = default_initial_recipe(asm86)
    traj = evolve_mode(op, f0, np.linspace(0.0, 2.0, 5))
    macro = asm86.projector.macro(traj.states)
    drift = norm(asm86.grid, macro - macro[0])
    assert np.max(drift) <= 1e-9 * traj.norms[0]


def test_norm_monotone(op_half, asm86, rng):
    f0 = (rng.standard_normal(asm86.grid.n_nodes)
          + 1j * rng.standard_normal(asm86.grid.n_nodes))
    traj = evolve_mode(op_half, f0, np.linspace(0.0, 1.5, 16))
    assert np.all(np.diff(traj.norms) <= 1e-9 * traj.norms[0])


def test_microscopic_zero_mode_decay(asm86, rng):
    # at k = 0 the microscopic part decays at least at lambda0 * nu_min
    from boltzlab.collision import estimate_lambda0

    op = assemble_mode(asm86, [0.0, 0.0, 0.0])
    f0 = asm86.projector.micro(rng.standard_normal(asm86.grid.n_nodes)
                               ).astype(complex)
    t_end = 0.5
    traj = evolve_mode(op, f0, np.linspace(0.0, t_end, 9))
    fit = fit_decay(traj.times, traj.norms)
    floor = estimate_lambda0(asm86) * asm86.nu.min()
    assert fit.rate >= floor * 0.9


def test_semigroup_matches_rk4(op_half, asm86):
    f0 = default_initial_recipe(asm86)
    times = np.linspace(0.0, 1.0, 5)
    prop = SemigroupPropagator(op_half)
    tr_eig = prop.trajectory(f0, times)
    tr_rk = evolve_mode(op_half, f0, times)
    diff = np.max(np.abs(tr_eig.states - tr_rk.states))
    assert diff <= 1e-5 * np.max(np.abs(tr_eig.states))


def test_semigroup_size_guard(asm168):
    with pytest.raises(ValueError):
        SemigroupPropagator(assemble_mode(asm168, [0.5, 0.0, 0.0]))


def test_evolve_rejects_bad_times(op_half, asm86):
    f0 = default_initial_recipe(asm86)
    with pytest.raises(ValueError):
        evolve_mode(op_half, f0, [0.5, 1.0])
    with pytest.raises(ValueError):
        evolve_mode(op_half, f0, [0.0, 1.0, 0.5])


# ---------------------------------------------------------------------------
# the microscopic mode equation
# ---------------------------------------------------------------------------

def test_micro_residual_zero_trajectory(op_half, asm86):
    z = np.zeros(asm86.grid.n_nodes, dtype=complex)
    traj = evolve_mode(op_half, z, np.linspace(0.0, 0.4, 5))
    assert micro_equation_residual(traj, op_half) == 0.0


def test_micro_residual_macro_stationary(asm86):
    op = assemble_mode(asm86, [0.0, 0.0, 0.0])
    smu = sqrt_maxwellian(asm86.grid).astype(complex)
    traj = evolve_mode(op, smu, np.linspace(0.0, 0.4, 5))
    assert micro_equation_residual(traj, op) <= asm86.null_residual


def test_micro_residual_second_order(op_half, asm86):
    # sample spacing must resolve the stiffest collision scale (~max nu)
    # before the centered difference enters its quadratic regime
    f0 = default_initial_recipe(asm86)
    res = {}
    for n in (17, 33):     # spacing halves, integrator step fixed
        times = np.linspace(0.0, 0.08, n)
        traj = evolve_mode(op_half, f0, times, dt=2e-4)
        res[n] = micro_equation_residual(traj, op_half)
    assert res[17] / res[33] >= 3.0


def test_micro_residual_needs_samples(op_half, asm86):
    f0 = default_initial_recipe(asm86)
    traj = evolve_mode(op_half, f0, np.linspace(0.0, 0.2, 2))
    with pytest.raises(ValueError):
        micro_equation_residual(traj, op_half)


# ---------------------------------------------------------------------------
# fits
# ---------------------------------------------------------------------------

def test_fit_recovers_synthetic_rate():
    t = np.linspace(0.0, 10.0, 64)
    fit = fit_decay(t, 2.0 * np.exp(-0.3 * t))
    assert abs(fit.rate - 0.3) <= 1e-10
    assert abs(fit.prefactor - 2.0) <= 1e-9
    assert fit.r_squared > 1.0 - 1e-12 and not fit.flagged


def test_fit_flags_underflow():
    t = np.linspace(0.0, 10.0, 32)
    vals = np.exp(-0.5 * t)
    vals[-3:] = 0.0
    fit = fit_decay(t, vals)
    assert fit.flagged and fit.n_used == 29


def test_fit_window_too_small():
    with pytest.raises(ValueError):
        fit_decay(np.array([0.0, 1.0]), np.array([1.0, 0.0]))
