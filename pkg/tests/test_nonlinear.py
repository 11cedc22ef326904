"""Nonlinear stepper, moment system, energy functionals, Lyapunov audits."""
import numpy as np
import pytest

from boltzlab.littlewood_paley import (LatticeField, SpatialLattice,
                                       build_partition)
from boltzlab.nonlinear import (SimConfig, SimState, SimulationUnstableError,
                                energy_functionals, initial_norm_combination,
                                lyapunov_audit, lyapunov_inequality_trace,
                                measure_coupling_constant, moment_fields,
                                moment_system_residual, random_shell_field,
                                run_simulation, spatial_mean_invariants, step)
from boltzlab.harness.initial_data import synthesize_initial_data
from boltzlab.velocity import sqrt_maxwellian


@pytest.fixture(scope="module")
def lattice():
    return SpatialLattice(1, 64.0 * 2.0 * np.pi, 64)


@pytest.fixture(scope="module")
def audit_lattice():
    return SpatialLattice(1, 16.0 * np.pi, 64)


@pytest.fixture(scope="module")
def small_f0(lattice, asm86_half):
    return synthesize_initial_data(lattice, asm86_half.grid, -1.5, seed=11,
                                   amplitude=1e-3)


# ---------------------------------------------------------------------------
# stepping basics
# ---------------------------------------------------------------------------

def test_zero_state_stays_zero(lattice, asm86_half):
    cfg = SimConfig(dt=np.inf)
    z = np.zeros((lattice.n_modes, asm86_half.grid.n_nodes), dtype=complex)
    st = SimState(lattice, asm86_half, z, 0.0, cfg)
    st2 = step(st, st.stable_dt())
    assert np.all(st2.fhat == 0)


def test_reality_preserved(lattice, asm86_half, small_f0):
    cfg = SimConfig(dt=np.inf, gamma_on=True)
    st = SimState(lattice, asm86_half, small_f0.astype(complex), 0.0, cfg)
    for _ in range(3):
        st = step(st, st.stable_dt())
    assert st.reality_defect() <= 1e-12
    phys = lattice.to_physical(st.fhat)
    assert np.max(np.abs(phys.imag)) <= 1e-12 * np.max(np.abs(phys.real))


def test_step_rejects_oversize_dt(lattice, asm86_half, small_f0):
    cfg = SimConfig(dt=np.inf)
    st = SimState(lattice, asm86_half, small_f0.astype(complex), 0.0, cfg)
    with pytest.raises(ValueError):
        step(st, 10.0 * st.stable_dt())


def test_instability_tripwire(lattice, asm86_half, small_f0):
    # an anti-dissipative compact part makes the collision stage grow fast
    cfg = SimConfig(dt=np.inf, gamma_on=False, growth_abort=1.1)
    bad = asm86_half.__class__(
        asm86_half.grid, asm86_half.params, asm86_half.nu,
        np.diag(10.0 * asm86_half.nu), asm86_half.basis,
        asm86_half.projector, None, None)
    st = SimState(lattice, bad, small_f0.astype(complex), 0.0, cfg)
    with pytest.raises(SimulationUnstableError):
        for _ in range(200):
            st = step(st, st.stable_dt())


def test_single_mode_matches_mode_integrator(lattice, asm86_half, small_f0):
    # Strang splitting against the unsplit 4-stage mode integrator at a
    # step small enough for the splitting error to drop below 1e-8
    from boltzlab.linear import assemble_mode, evolve_mode

    j = 5
    fh = np.zeros_like(small_f0)
    fh[j] = small_f0[j]
    fh[-j] = small_f0[-j]
    cfg = SimConfig(dt=1e-4, gamma_on=False)
    run = run_simulation(asm86_half, lattice, fh, 0.1, cfg, n_snapshots=2)
    op = assemble_mode(asm86_half, [lattice.k_axis[j], 0.0, 0.0])
    tr = evolve_mode(op, fh[j], run.times, dt=1e-4)
    scale = np.max(np.abs(tr.states[-1]))
    assert np.max(np.abs(run.snapshots[-1][j] - tr.states[-1])) <= 1e-8 * scale


def test_mean_invariants_conserved(lattice, asm86_half, small_f0):
    cfg = SimConfig(dt=np.inf, gamma_on=True, conserve=True)
    run = run_simulation(asm86_half, lattice, small_f0, 0.5, cfg,
                         n_snapshots=5)
    first = spatial_mean_invariants(run.state(0))
    last = spatial_mean_invariants(run.state(len(run.snapshots) - 1))
    drift_bound = asm86_half.null_residual * run.times[-1] * 1e-3
    assert np.max(np.abs(last - first)) <= drift_bound


# ---------------------------------------------------------------------------
# moment fields
# ---------------------------------------------------------------------------

def test_moment_fields_equilibrium(lattice, asm86_half):
    grid = asm86_half.grid
    fhat = np.zeros((lattice.n_modes, grid.n_nodes), dtype=complex)
    fhat[0] = sqrt_maxwellian(grid)          # spatially uniform sqrt(mu)
    st = SimState(lattice, asm86_half, fhat, 0.0, SimConfig(dt=np.inf))
    mf = moment_fields(st)
    assert np.max(np.abs(mf.a - 1.0)) <= grid.tol_quad
    assert np.max(np.abs(mf.b)) <= grid.tol_quad
    assert np.max(np.abs(mf.c)) <= grid.tol_quad
    assert np.max(np.abs(mf.a.imag if np.iscomplexobj(mf.a) else 0.0)) == 0.0


def test_moment_fields_zero(lattice, asm86_half):
    grid = asm86_half.grid
    st = SimState(lattice, asm86_half,
                  np.zeros((lattice.n_modes, grid.n_nodes), dtype=complex),
                  0.0, SimConfig(dt=np.inf))
    mf = moment_fields(st)
    for arr in (mf.a, mf.b, mf.c, mf.stress, mf.heat):
        assert np.all(arr == 0)


def test_moment_system_residuals_linear_run(lattice, asm86_half, small_f0):
    # gamma off: mass/energy lines are exact identities of the discrete
    # dynamics, so their residuals are pure centered-differencing error
    cfg = SimConfig(dt=5e-4, gamma_on=False)
    run = run_simulation(asm86_half, lattice, small_f0, 0.05, cfg,
                         n_snapshots=100)
    res = moment_system_residual(run)
    # the mass line carries no Gaussian-moment identities at all
    assert res["mass"] <= 1e-6
    # momentum/energy lines are floored by the discrete macro/micro split
    assert res["momentum"] <= asm86_half.grid.tol_quad
    assert res["energy"] <= asm86_half.grid.tol_quad
    # differencing order: twice the stride, near four times the residual
    res2 = moment_system_residual(run, use_every=2)
    assert res2["mass"] >= 3.0 * res["mass"]


def test_moment_system_residuals_static_state(lattice, asm86_half):
    grid = asm86_half.grid
    fhat = np.zeros((lattice.n_modes, grid.n_nodes), dtype=complex)
    fhat[0] = sqrt_maxwellian(grid)
    cfg = SimConfig(dt=2e-3, gamma_on=False)
    run = run_simulation(asm86_half, lattice, fhat, 0.02, cfg,
                         n_snapshots=10)
    res = moment_system_residual(run, relative=False)
    for val in res.values():
        assert val <= 1e-12


# ---------------------------------------------------------------------------
# energy functionals
# ---------------------------------------------------------------------------

def test_energy_zero_run(lattice, asm86_half):
    cfg = SimConfig(dt=np.inf, gamma_on=False)
    z = np.zeros((lattice.n_modes, asm86_half.grid.n_nodes), dtype=complex)
    run = run_simulation(asm86_half, lattice, z, 0.05, cfg, n_snapshots=4)
    partition = build_partition(lattice)
    rep = energy_functionals(run, partition)
    assert rep.total == 0.0


def test_energy_constant_series_scaling(lattice, asm86_half, small_f0):
    from boltzlab.nonlinear import SimRun

    partition = build_partition(lattice)
    cfg = SimConfig(dt=1.0)
    for t_end in (1.0, 4.0):
        times = np.linspace(0.0, t_end, 9)
        run = SimRun(lattice, asm86_half, cfg, times,
                     [small_f0.copy() for _ in times])
        rep = energy_functionals(run, partition)
        if t_end == 1.0:
            base = rep
    assert np.isclose(rep.energy, base.energy, rtol=1e-12)
    assert np.isclose(rep.dissipation, 2.0 * base.dissipation, rtol=1e-12)


def test_energy_monotone_prefixes(lattice, asm86_half, small_f0):
    from boltzlab.nonlinear import SimRun

    partition = build_partition(lattice)
    cfg = SimConfig(dt=np.inf, gamma_on=True)
    run = run_simulation(asm86_half, lattice, small_f0, 0.5, cfg,
                         n_snapshots=10)
    vals = []
    for n in range(2, len(run.snapshots) + 1):
        sub = SimRun(lattice, asm86_half, run.config, run.times[:n],
                     run.snapshots[:n])
        rep = energy_functionals(sub, partition)
        vals.append((rep.energy, rep.dissipation))
    arr = np.asarray(vals)
    assert np.all(np.diff(arr[:, 0]) >= -1e-12)
    assert np.all(np.diff(arr[:, 1]) >= -1e-12)


# ---------------------------------------------------------------------------
# Lyapunov audits
# ---------------------------------------------------------------------------

def test_audit_eta_zero_reduces_to_base(audit_lattice, asm86_half, rng):
    partition = build_partition(audit_lattice)
    snap = random_shell_field(audit_lattice, asm86_half.grid, partition, -2,
                              rng)
    entry = lyapunov_audit(snap, audit_lattice, asm86_half, partition, -2,
                           "low", 0.0)
    assert np.isclose(entry.lyapunov, entry.base, rtol=1e-14)
    assert entry.equivalence_ratio == 1.0


def test_audit_equivalence_small_eta(audit_lattice, asm86_half, rng):
    partition = build_partition(audit_lattice)
    c = measure_coupling_constant(audit_lattice, asm86_half, partition,
                                  [-3, -2], "low", n_fields=30, seed=4)
    assert c > 0
    eta = min(1.0, 0.5 / c)
    for _ in range(30):
        snap = random_shell_field(audit_lattice, asm86_half.grid, partition,
                                  -2, rng)
        e = lyapunov_audit(snap, audit_lattice, asm86_half, partition, -2,
                           "low", eta)
        assert 1.0 - c * eta - 1e-12 <= e.equivalence_ratio \
            <= 1.0 + c * eta + 1e-12


def test_audit_regime_validation(audit_lattice, asm86_half, rng):
    partition = build_partition(audit_lattice)
    snap = random_shell_field(audit_lattice, asm86_half.grid, partition, -2,
                              rng)
    with pytest.raises(ValueError):
        lyapunov_audit(snap, audit_lattice, asm86_half, partition, 1, "low",
                       0.1)
    with pytest.raises(ValueError):
        lyapunov_audit(snap, audit_lattice, asm86_half, partition, -2,
                       "high", 0.1)


def test_audit_dissipation_lower_bound(audit_lattice, asm86_half, rng):
    from boltzlab.nonlinear import default_eta

    partition = build_partition(audit_lattice)
    eta = default_eta(audit_lattice, asm86_half, partition, "low",
                      n_fields=10, seed=2)
    worst = np.inf
    for q in (-3, -2, -1, 0):
        for _ in range(25):
            snap = random_shell_field(audit_lattice, asm86_half.grid,
                                      partition, q, rng)
            e = lyapunov_audit(snap, audit_lattice, asm86_half, partition, q,
                               "low", eta)
            floor = 4.0 ** q * 2.0 * e.base + e.micro_nu_sq
            worst = min(worst, e.dissipation / floor)
    assert worst > 0.0


def test_linear_lyapunov_inequality(audit_lattice, asm86_half):
    # with the quadratic term off, dL/dt + D <= 0 up to differencing error
    # for the unshifted stress coupling (the printed high-regime +2c shift
    # breaks the exact antiderivative relation; see the audit artifact)
    partition = build_partition(audit_lattice)
    f0 = synthesize_initial_data(audit_lattice, asm86_half.grid, -1.5,
                                 seed=9)
    cfg = SimConfig(dt=np.inf, gamma_on=False)
    run = run_simulation(asm86_half, audit_lattice, f0, 0.6, cfg,
                         n_snapshots=120)
    for q, regime in ((-2, "low"), (0, "low"), (0, "high"), (1, "high")):
        tr = lyapunov_inequality_trace(run, partition, q, regime, 0.05,
                                       stress_shift=False)
        scale = float(np.max(tr.dissipation))
        dt = float(np.diff(run.times)[0])
        assert np.max(tr.strict_lhs()) <= 50.0 * dt ** 2 * scale


def test_initial_norm_combination(lattice, asm86_half, small_f0):
    partition = build_partition(lattice)
    fld = LatticeField(lattice, small_f0, asm86_half.grid)
    combo = initial_norm_combination(partition, fld)
    assert combo > 0
