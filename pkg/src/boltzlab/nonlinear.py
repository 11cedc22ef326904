"""Nonlinear evolution on a periodic interval times the velocity lattice.

The state is the spectral field f_hat(k, xi); space is one-dimensional
(wavevectors (k, 0, 0)) while velocity keeps all three dimensions, so every
structural identity of the full problem survives at desk scale.  Time
stepping is Strang splitting: exact transport phases around a classical
4-stage explicit collision step whose quadratic term is evaluated pointwise
in physical space on a 3/2 zero-padded grid.

On top of the stepper live the audits: mixed-norm energy/dissipation
functionals, the fluid-moment system residuals, and the frequency-localized
Lyapunov functionals with their dissipation counterparts in the low- and
high-frequency regimes.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .collision import CollisionAssembly, collision_product, estimate_lambda0
from .littlewood_paley import (DyadicPartition, FieldSeries, LatticeField,
                               SpatialLattice, _crop_axis, _pad_axis,
                               chemin_lerner_norm)
from .velocity import HighMoments, moments
from .velocity import norm as vnorm


class SimulationUnstableError(RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class SimConfig:
    dt: float
    conserve: bool = True
    gamma_on: bool = True
    gamma_precision: str = "single"
    growth_abort: float = 1.10        # per-step norm growth tripwire


@dataclass
class SimState:
    """Spectral field on lattice x grid at one instant."""

    lattice: SpatialLattice
    assembly: CollisionAssembly
    fhat: np.ndarray                  # (n_modes, n_nodes) complex
    t: float
    config: SimConfig

    def __post_init__(self):
        if self.lattice.dim != 1:
            raise ValueError("the nonlinear stepper runs in one space dimension")
        want = (self.lattice.n_modes, self.assembly.grid.n_nodes)
        if self.fhat.shape != want:
            raise ValueError(f"state shape {self.fhat.shape} != {want}")

    @property
    def grid(self):
        return self.assembly.grid

    def weighted_norm(self) -> float:
        return float(np.sqrt(self.lattice.volume
                             * np.sum(np.abs(self.fhat) ** 2
                                      @ self.grid.weights)))

    def reality_defect(self) -> float:
        """Relative deviation of f_hat from Hermitian symmetry."""
        sym = self.lattice.hermitize(self.fhat)
        scale = max(np.max(np.abs(self.fhat)), 1e-300)
        return float(np.max(np.abs(self.fhat - sym)) / scale)

    def physical(self) -> np.ndarray:
        """Real-space field (n_modes, n_nodes), real part enforced."""
        return self.lattice.to_physical(self.fhat).real

    def min_reconstructed_density(self) -> float:
        """min over (x, xi) of mu + sqrt(mu) f: positivity diagnostic."""
        from .velocity import maxwellian, sqrt_maxwellian

        grid = self.grid
        f_phys = self.physical()
        dens = maxwellian(grid)[None, :] + sqrt_maxwellian(grid)[None, :] * f_phys
        return float(dens.min())

    def stable_dt(self) -> float:
        return 1.5 / float(self.assembly.nu.max())


def collision_rhs(assembly: CollisionAssembly, lattice: SpatialLattice,
                  fhat: np.ndarray, config: SimConfig) -> np.ndarray:
    """Right side of the collision stage: -L f + quadratic term (spectral).

    The quadratic term is evaluated pointwise in x on the 3/2-padded grid
    and truncated back, so its retained modes are alias-free.
    """
    out = -(assembly.nu[None, :] * fhat - fhat @ assembly.k_mat.T)
    if config.gamma_on:
        n_pad = 3 * lattice.n_modes // 2
        fpad = _pad_axis(fhat, 0, n_pad)
        fphys = np.fft.ifft(fpad, axis=0, norm="forward").real
        gam = collision_product(assembly, fphys, fphys,
                                conserve=config.conserve,
                                precision=config.gamma_precision)
        gspec = np.fft.fft(gam, axis=0, norm="forward")
        out = out + _crop_axis(gspec, 0, lattice.n_modes)
    return out


def step(state: SimState, dt: float | None = None) -> SimState:
    """One Strang step: half transport, explicit collision stage, half transport."""
    cfg = state.config
    dt = cfg.dt if dt is None else dt
    dt_max = state.stable_dt()
    if dt > dt_max * (1.0 + 1e-12):
        raise ValueError(f"step {dt} above collision stability bound {dt_max}")
    lattice, assembly = state.lattice, state.assembly
    k1d = lattice.k_axis
    phase = np.exp(-1j * (0.5 * dt) * k1d[:, None]
                   * assembly.grid.xi[None, :, 0])

    norm_before = state.weighted_norm()
    f = phase * state.fhat
    r1 = collision_rhs(assembly, lattice, f, cfg)
    r2 = collision_rhs(assembly, lattice, f + 0.5 * dt * r1, cfg)
    r3 = collision_rhs(assembly, lattice, f + 0.5 * dt * r2, cfg)
    r4 = collision_rhs(assembly, lattice, f + dt * r3, cfg)
    f = f + (dt / 6.0) * (r1 + 2.0 * r2 + 2.0 * r3 + r4)
    f = phase * f
    f = lattice.hermitize(f)

    new = SimState(lattice, assembly, f, state.t + dt, cfg)
    norm_after = new.weighted_norm()
    if norm_after > cfg.growth_abort * max(norm_before, 1e-300):
        raise SimulationUnstableError(
            f"norm grew by {norm_after / norm_before:.3f}x in one step at "
            f"t={state.t:.4f}",
            {"t": state.t, "norm_before": norm_before,
             "norm_after": norm_after, "dt": dt})
    return new


@dataclass
class SimRun:
    """Stored snapshots of one nonlinear (or linear) run."""

    lattice: SpatialLattice
    assembly: CollisionAssembly
    config: SimConfig
    times: np.ndarray
    snapshots: list                  # list of (n_modes, n_nodes) arrays

    def state(self, i: int) -> SimState:
        return SimState(self.lattice, self.assembly, self.snapshots[i],
                        float(self.times[i]), self.config)

    def field_series(self, transform=None) -> FieldSeries:
        grid = self.assembly.grid
        fields = []
        for snap in self.snapshots:
            data = snap if transform is None else transform(snap)
            fields.append(LatticeField(self.lattice, data, grid))
        return FieldSeries(self.times, fields)

    def norm_table(self) -> list:
        out = []
        for t, snap in zip(self.times, self.snapshots):
            st = SimState(self.lattice, self.assembly, snap, float(t),
                          self.config)
            out.append({"t": float(t), "norm": st.weighted_norm(),
                        "reality_defect": st.reality_defect()})
        return out


def run_simulation(assembly: CollisionAssembly, lattice: SpatialLattice,
                   f0hat: np.ndarray, t_end: float,
                   config: SimConfig | None = None,
                   n_snapshots: int = 200) -> SimRun:
    """Advance to t_end with snapshots on a uniform cadence."""
    if config is None:
        config = SimConfig(dt=np.inf)
    state = SimState(lattice, assembly, lattice.hermitize(f0hat), 0.0, config)
    dt = min(config.dt, state.stable_dt())
    n_steps = max(1, int(np.ceil(t_end / dt - 1e-12)))
    dt = t_end / n_steps
    config = replace(config, dt=dt)
    state = replace(state, config=config)
    cadence = max(1, n_steps // max(1, n_snapshots))

    times = [0.0]
    snaps = [state.fhat.copy()]
    for i in range(n_steps):
        state = step(state)
        if (i + 1) % cadence == 0 or i == n_steps - 1:
            times.append(state.t)
            snaps.append(state.fhat.copy())
    return SimRun(lattice, assembly, config, np.asarray(times), snaps)


# ---------------------------------------------------------------------------
# energy functionals
# ---------------------------------------------------------------------------

@dataclass
class EnergyReport:
    energy_low: float          # sup-in-time low-band B^{1/2} norm of f
    energy_high: float         # sup-in-time high-band B^{3/2} norm of f
    diss_macro_low: float      # L^2-in-time low-band B^{3/2} norm of Pf
    diss_micro_low: float      # nu-weighted L^2-in-time low-band B^{1/2} of (I-P)f
    diss_high: float           # nu-weighted L^2-in-time high-band B^{3/2} of f

    @property
    def energy(self) -> float:
        return self.energy_low + self.energy_high

    @property
    def dissipation(self) -> float:
        return self.diss_macro_low + self.diss_micro_low + self.diss_high

    @property
    def total(self) -> float:
        return self.energy + self.dissipation


def energy_functionals(run: SimRun, partition: DyadicPartition
                       ) -> EnergyReport:
    """Mixed-norm energy and dissipation functionals of a stored run."""
    if len(run.snapshots) < 2:
        raise ValueError("energy functionals need at least 2 snapshots")
    proj = run.assembly.projector
    nu = run.assembly.nu
    inf = np.inf
    full = run.field_series()
    macro = run.field_series(transform=proj.macro)
    micro = run.field_series(transform=proj.micro)
    return EnergyReport(
        energy_low=chemin_lerner_norm(partition, full, inf, 0.5, band="low"),
        energy_high=chemin_lerner_norm(partition, full, inf, 1.5, band="high"),
        diss_macro_low=chemin_lerner_norm(partition, macro, 2.0, 1.5,
                                          band="low"),
        diss_micro_low=chemin_lerner_norm(partition, micro, 2.0, 0.5,
                                          band="low", weight=nu),
        diss_high=chemin_lerner_norm(partition, full, 2.0, 1.5, band="high",
                                     weight=nu),
    )


def initial_norm_combination(partition: DyadicPartition,
                             fld: LatticeField) -> float:
    """Low B^{1/2} + high B^{3/2} norm of initial data (smallness measure)."""
    from .littlewood_paley import besov_norm

    return (besov_norm(partition, fld, 0.5, band="low")
            + besov_norm(partition, fld, 1.5, band="high"))


# ---------------------------------------------------------------------------
# moment fields and the fluid-moment system
# ---------------------------------------------------------------------------

@dataclass
class MomentFields:
    a: np.ndarray            # (n_x,)
    b: np.ndarray            # (n_x, 3)
    c: np.ndarray            # (n_x,)
    stress: np.ndarray       # (n_x, 3, 3) of the microscopic part
    heat: np.ndarray         # (n_x, 3) of the microscopic part


def moment_fields(state: SimState) -> MomentFields:
    grid = state.grid
    f_phys = state.physical()
    m = moments(grid, f_phys)
    micro = state.assembly.projector.micro(f_phys)
    hm = HighMoments(grid)
    return MomentFields(m.a, m.b, m.c, hm.stress(micro), hm.heat(micro))


def spatial_mean_invariants(state: SimState) -> np.ndarray:
    """Box averages of (a, b, c): conserved along collisional transport."""
    m = moments(state.grid, state.fhat[0].real)       # k = 0 mode is the mean
    return np.concatenate([[m.a], m.b, [m.c]])


def moment_system_residual(run: SimRun, use_every: int = 1,
                           relative: bool = True) -> dict:
    """Centered-difference residuals of the five fluid-moment equations.

    Snapshots must be uniformly spaced.  Residuals are maxima over interior
    times, space and components; with ``relative`` they are normalized by
    the largest participating term of each equation (use absolute values
    for states with no dynamics at all).
    """
    times = run.times
    dt = np.diff(times)
    if times.size < 3:
        raise ValueError("need at least 3 snapshots")
    if not np.allclose(dt, dt[0], rtol=1e-8):
        raise ValueError("snapshots are not uniformly spaced")
    h = float(dt[0]) * use_every

    lattice = run.lattice
    grid = run.assembly.grid
    proj = run.assembly.projector
    hm = HighMoments(grid)
    kax = lattice.k_axis

    idx = list(range(use_every, times.size - use_every, use_every))
    if not idx:
        raise ValueError("not enough snapshots at this stride")

    def spectral_moments(snap):
        m = moments(grid, snap)
        micro = proj.micro(snap)
        return (m.a, m.b, m.c, hm.stress(micro), hm.heat(micro), micro)

    def dx(spec):
        return 1j * kax[(slice(None),) + (None,) * (spec.ndim - 1)] * spec

    def phys(spec):
        return np.fft.ifft(spec, axis=0, norm="forward").real

    resid = {name: 0.0 for name in
             ("mass", "momentum", "energy", "stress", "heat")}
    scale = {name: 0.0 for name in resid}

    for n in idx:
        am, bm, cm, tm, lm, _ = spectral_moments(run.snapshots[n - use_every])
        ap, bp, cp, tp, lp, _ = spectral_moments(run.snapshots[n + use_every])
        a0, b0, c0, t0, l0, micro0 = spectral_moments(run.snapshots[n])

        # r = xi . grad_x micro + L micro, spectral in x
        r_spec = (1j * kax[:, None] * grid.xi[None, :, 0] * micro0
                  + run.assembly.apply_L(micro0))
        t_r = hm.stress(r_spec)
        l_r = hm.heat(r_spec)
        if run.config.gamma_on:
            snap_phys = phys(run.snapshots[n])
            gam = collision_product(run.assembly, snap_phys, snap_phys,
                                    conserve=run.config.conserve)
            gam_spec = np.fft.fft(gam, axis=0, norm="forward")
        else:
            gam_spec = np.zeros_like(micro0)
        t_h = hm.stress(gam_spec)
        l_h = hm.heat(gam_spec)

        two_h = 2.0 * h
        eye = np.eye(3)

        eq1 = phys((ap - am) / two_h + dx(b0[:, 0]))
        terms1 = [phys((ap - am) / two_h), phys(dx(b0[:, 0]))]

        eq2 = phys((bp - bm) / two_h
                   + dx(a0 + 2.0 * c0)[:, None] * eye[0][None, :]
                   + dx(t0[:, 0, :]))
        terms2 = [phys((bp - bm) / two_h), phys(dx(t0[:, 0, :]))]

        eq3 = phys((cp - cm) / two_h + dx(b0[:, 0]) / 3.0
                   + (5.0 / 3.0) * dx(l0[:, 0]))
        terms3 = [phys((cp - cm) / two_h), phys(dx(b0[:, 0]) / 3.0),
                  phys((5.0 / 3.0) * dx(l0[:, 0]))]

        dt_term4 = ((tp + 2.0 * cp[:, None, None] * eye[None])
                    - (tm + 2.0 * cm[:, None, None] * eye[None])) / two_h
        sym_grad_b = (dx(b0)[:, None, :] * eye[0][None, :, None]
                      + dx(b0)[:, :, None] * eye[0][None, None, :])
        eq4 = phys(dt_term4 + sym_grad_b + t_r - t_h)
        terms4 = [phys(dt_term4), phys(sym_grad_b), phys(t_r), phys(t_h)]

        eq5 = phys((lp - lm) / two_h + dx(c0)[:, None] * eye[0][None, :]
                   + l_r - l_h)
        terms5 = [phys((lp - lm) / two_h), phys(l_r), phys(l_h)]

        for name, eq, terms in (("mass", eq1, terms1),
                                ("momentum", eq2, terms2),
                                ("energy", eq3, terms3),
                                ("stress", eq4, terms4),
                                ("heat", eq5, terms5)):
            resid[name] = max(resid[name], float(np.max(np.abs(eq))))
            scale[name] = max(scale[name],
                              max(float(np.max(np.abs(t))) for t in terms))

    if not relative:
        return dict(resid)
    return {name: resid[name] / max(scale[name], 1e-300) for name in resid}


# ---------------------------------------------------------------------------
# hypocoercivity audits
# ---------------------------------------------------------------------------

def _xinner(lattice: SpatialLattice, u: np.ndarray, v: np.ndarray) -> float:
    """(u, v)_x for real fields given spectrally; sums all trailing axes."""
    return float(lattice.volume * np.sum(np.conj(u) * v).real)


@dataclass
class LyapunovAuditEntry:
    q: int
    regime: str
    eta: float
    lyapunov: float
    dissipation: float
    base: float                          # (1/2) ||Delta_q f||^2
    equivalence_ratio: float             # lyapunov / base
    micro_nu_sq: float                   # ||sqrt(nu) Delta_q (I-P) f||^2
    grad_macro_sq: float                 # ||Delta_q grad(a,b,c)||^2
    coupling: float                      # the eta-multiplied bracket in L
    coupling_with_c: float               # same with the +2c delta_ij variant
    terms: dict


def lyapunov_audit(snapshot: np.ndarray, lattice: SpatialLattice,
                   assembly: CollisionAssembly, partition: DyadicPartition,
                   q: int, regime: str, eta: float,
                   stress_shift: bool | None = None) -> LyapunovAuditEntry:
    """Evaluate the shell-q Lyapunov functional and dissipation verbatim.

    regime "low" is admissible for q <= 0 and couples the moment gradients
    at unit strength; regime "high" (q >= -1) carries the 2^{-2q} prefactor
    and, as printed, includes the +2 Delta_q c delta_ij shift inside the
    stress coupling (the low form omits it).  ``stress_shift`` overrides
    the printed per-regime choice; both coupling variants are always
    reported.  Note the shifted functional is not the exact antiderivative
    of the printed dissipation, so only the unshifted variant obeys the
    linear-run decay inequality to differencing accuracy.
    """
    if regime not in ("low", "high"):
        raise ValueError(f"unknown regime {regime!r}")
    if regime == "low" and q > 0:
        raise ValueError("low-regime audit needs q <= 0")
    if regime == "high" and q < -1:
        raise ValueError("high-regime audit needs q >= -1")
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")

    grid = assembly.grid
    hm = HighMoments(grid)
    proj = assembly.projector
    kax = lattice.k_axis

    fq = snapshot * partition.phi(q)[:, None]
    m = moments(grid, fq)
    a, b, c = m.a, m.b, m.c
    micro = proj.micro(fq)
    stress = hm.stress(micro)                    # (n_x, 3, 3) spectral
    heat = hm.heat(micro)                        # (n_x, 3)

    def dx(spec):
        return 1j * kax[(slice(None),) + (None,) * (spec.ndim - 1)] * spec

    vol = lattice.volume
    base = 0.5 * vol * float(np.sum((np.abs(fq) ** 2) @ grid.weights))
    micro_nu_sq = vol * float(np.sum((np.abs(micro) ** 2)
                                     @ (grid.weights * assembly.nu)))

    # cross terms of the functional
    t_ab = _xinner(lattice, dx(a)[:, None] * np.eye(3)[0][None, :], b)
    t_cl = _xinner(lattice, dx(c)[:, None] * np.eye(3)[0][None, :], heat)
    eye = np.eye(3)
    sym_grad_b = (dx(b)[:, None, :] * eye[0][None, :, None]
                  + dx(b)[:, :, None] * eye[0][None, None, :])
    t_bt = _xinner(lattice, sym_grad_b, stress)
    stress_shifted = stress + 2.0 * c[:, None, None] * eye[None]
    t_bt_c = _xinner(lattice, sym_grad_b, stress_shifted)

    coupling = t_ab + 60.0 * t_cl + 3.0 * t_bt
    coupling_with_c = t_ab + 60.0 * t_cl + 3.0 * t_bt_c
    prefactor = 1.0 if regime == "low" else 2.0 ** (-2 * q)
    if stress_shift is None:
        stress_shift = regime == "high"
    used_coupling = coupling_with_c if stress_shift else coupling
    lyap = base + eta * prefactor * used_coupling

    # dissipation, verbatim
    lam0 = estimate_lambda0(assembly)
    k2 = kax ** 2
    grad_a_sq = vol * float(np.sum(k2 * np.abs(a) ** 2))
    grad_b_sq = vol * float(np.sum(k2[:, None] * np.abs(b) ** 2))
    grad_c_sq = vol * float(np.sum(k2 * np.abs(c) ** 2))
    grad_macro_sq = grad_a_sq + grad_b_sq + grad_c_sq
    grad_weighted = grad_a_sq + grad_b_sq + 60.0 * grad_c_sq

    d_cross_ca = 2.0 * _xinner(lattice, dx(c), dx(a))
    div_stress = dx(stress[:, 0, :])             # (grad . Theta)_j, 1d space
    d_cross_theta = -_xinner(lattice, div_stress,
                             dx(5.0 * a + 12.0 * c)[:, None]
                             * eye[0][None, :])
    div_heat = dx(heat[:, 0])
    d_heat = -100.0 * vol * float(np.sum(np.abs(div_heat) ** 2))
    if regime == "low":
        grad_stress = dx(stress)                 # d/dx_1 of every component
        d_stress = -6.0 * vol * float(np.sum(np.abs(grad_stress) ** 2))
    else:
        d_stress = -6.0 * vol * float(np.sum(np.abs(div_stress) ** 2))

    r_spec = (1j * kax[:, None] * grid.xi[None, :, 0] * micro
              + assembly.apply_L(micro))
    heat_r = hm.heat(r_spec)
    stress_r = hm.stress(r_spec)
    d_r_heat = 60.0 * _xinner(lattice, heat_r,
                              dx(c)[:, None] * eye[0][None, :])
    d_r_stress = 3.0 * _xinner(lattice, stress_r, sym_grad_b)

    bracket = (grad_weighted + d_cross_ca + d_cross_theta + d_heat
               + d_stress + d_r_heat + d_r_stress)
    diss = lam0 * micro_nu_sq + eta * prefactor * bracket

    return LyapunovAuditEntry(
        q, regime, eta, lyap, diss, base,
        lyap / base if base > 0 else np.nan, micro_nu_sq, grad_macro_sq,
        coupling, coupling_with_c,
        {"t_ab": t_ab, "t_cl": t_cl, "t_bt": t_bt, "t_bt_c": t_bt_c,
         "grad_weighted": grad_weighted, "d_cross_ca": d_cross_ca,
         "d_cross_theta": d_cross_theta, "d_heat": d_heat,
         "d_stress": d_stress, "d_r_heat": d_r_heat,
         "d_r_stress": d_r_stress, "lambda0": lam0})


def random_shell_field(lattice: SpatialLattice, grid, partition:
                       DyadicPartition, q: int, rng) -> np.ndarray:
    """Random real-in-space field spectrally supported on shell q."""
    data = (rng.standard_normal((lattice.n_modes, grid.n_nodes))
            + 1j * rng.standard_normal((lattice.n_modes, grid.n_nodes)))
    data *= partition.phi(q)[:, None]
    return lattice.hermitize(data)


def measure_coupling_constant(lattice: SpatialLattice,
                              assembly: CollisionAssembly,
                              partition: DyadicPartition, shells,
                              regime: str, n_fields: int = 100,
                              seed: int = 0) -> float:
    """Empirical constant C with |coupling bracket| <= C * (1/2)||Delta_q f||^2.

    Feeds the coupling-strength formula eta = min(1, 1/(2C), lambda0/(2C)).
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for q in shells:
        for _ in range(n_fields):
            snap = random_shell_field(lattice, assembly.grid, partition, q,
                                      rng)
            entry = lyapunov_audit(snap, lattice, assembly, partition, q,
                                   regime, 0.0)
            prefactor = 1.0 if regime == "low" else 2.0 ** (-2 * q)
            used = (entry.coupling if regime == "low"
                    else entry.coupling_with_c)
            if entry.base > 0:
                worst = max(worst, prefactor * abs(used) / entry.base)
    return worst


def default_eta(lattice: SpatialLattice, assembly: CollisionAssembly,
                partition: DyadicPartition, regime: str,
                n_fields: int = 25, seed: int = 0) -> float:
    if regime == "low":
        shells = [qq for qq in partition.shells if qq <= 0]
    else:
        shells = [qq for qq in partition.shells if qq >= -1]
    c = measure_coupling_constant(lattice, assembly, partition, shells,
                                  regime, n_fields, seed)
    lam0 = estimate_lambda0(assembly)
    return min(1.0, 0.5 / c, 0.5 * lam0 / c) if c > 0 else 1.0


@dataclass
class LyapunovTrace:
    q: int
    regime: str
    eta: float
    times: np.ndarray
    lyapunov: np.ndarray
    dissipation: np.ndarray
    dldt: np.ndarray                 # centered differences, interior times
    rhs_gamma: np.ndarray            # |(Delta_q Gamma, Delta_q (I-P) f)|
    rhs_stress: np.ndarray           # sum |Theta_ij(Delta_q h)|^2 terms
    rhs_heat: np.ndarray

    @property
    def interior(self) -> slice:
        return slice(1, -1)

    def strict_lhs(self) -> np.ndarray:
        """dL/dt + D at interior times; <= 0 for linear dynamics."""
        return self.dldt + self.dissipation[self.interior]

    def rhs_total(self) -> np.ndarray:
        return (self.rhs_gamma + self.rhs_stress
                + self.rhs_heat)[self.interior]

    def c_margin(self) -> float:
        """Smallest C with dL/dt + D <= C * RHS at all interior times."""
        lhs = self.strict_lhs()
        rhs = self.rhs_total()
        good = rhs > 1e-300
        if not np.any(good):
            return 0.0 if np.all(lhs <= 0) else np.inf
        return float(max(0.0, np.max(lhs[good] / rhs[good])))


def lyapunov_inequality_trace(run: SimRun, partition: DyadicPartition,
                              q: int, regime: str, eta: float,
                              stress_shift: bool | None = None
                              ) -> LyapunovTrace:
    """Track the shell-q Lyapunov inequality along a stored run."""
    times = run.times
    dt = np.diff(times)
    if not np.allclose(dt, dt[0], rtol=1e-8):
        raise ValueError("trace needs uniformly spaced snapshots")
    lattice = run.lattice
    assembly = run.assembly
    grid = assembly.grid
    hm = HighMoments(grid)
    vol = lattice.volume
    prefactor = 1.0 if regime == "low" else 2.0 ** (-2 * q)

    lyap, diss, rg, rs, rh = [], [], [], [], []
    for snap in run.snapshots:
        entry = lyapunov_audit(snap, lattice, assembly, partition, q,
                               regime, eta, stress_shift=stress_shift)
        lyap.append(entry.lyapunov)
        diss.append(entry.dissipation)
        if run.config.gamma_on:
            fphys = np.fft.ifft(snap, axis=0, norm="forward").real
            gam = collision_product(assembly, fphys, fphys,
                                    conserve=run.config.conserve)
            gam_spec = np.fft.fft(gam, axis=0, norm="forward")
            gam_q = gam_spec * partition.phi(q)[:, None]
            fq = snap * partition.phi(q)[:, None]
            micro_q = assembly.projector.micro(fq)
            inner = vol * np.sum((np.conj(gam_q) * micro_q)
                                 @ grid.weights).real
            stress_h = hm.stress(gam_q)
            heat_h = hm.heat(gam_q)
            rg.append(abs(inner))
            rs.append(prefactor * vol
                      * float(np.sum(np.abs(stress_h) ** 2)))
            rh.append(prefactor * vol * float(np.sum(np.abs(heat_h) ** 2)))
        else:
            rg.append(0.0)
            rs.append(0.0)
            rh.append(0.0)

    lyap = np.asarray(lyap)
    dldt = (lyap[2:] - lyap[:-2]) / (times[2:] - times[:-2])
    return LyapunovTrace(q, regime, eta, times, lyap, np.asarray(diss),
                         dldt, np.asarray(rg), np.asarray(rs),
                         np.asarray(rh))
