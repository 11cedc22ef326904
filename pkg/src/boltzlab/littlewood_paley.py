"""Dyadic frequency analysis on a periodic spatial lattice.

Implements the smooth dyadic partition of unity, frequency-localized blocks,
homogeneous Besov norms with low/high-frequency restrictions, mixed
velocity-space and time-velocity-space (Chemin-Lerner) norms, paraproduct
decomposition of products, and the Bernstein/interpolation diagnostics.

Spectral convention: fields are stored as Fourier coefficients u_hat(k, xi)
with the forward-normalized transform (u_hat = mean over x of u e^{-ik.x}),
so Parseval reads  ||u||_{L^2_x}^2 = box_volume * sum_k |u_hat(k)|^2.
Pointwise products are evaluated on a 3/2 zero-padded grid, so quadratic
aliasing never pollutes retained modes; the Nyquist bin is kept empty to
make padding and reality unambiguous.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .velocity import VelocityGrid


class BandNotCoveredError(ValueError):
    """Requested frequency band has no shells on this lattice."""


class DegenerateInputError(ValueError):
    """Norm ratio undefined for an identically-zero field."""


# ---------------------------------------------------------------------------
# lattice
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpatialLattice:
    """Periodic box (period ``box_length``) with ``n_modes`` points per axis."""

    dim: int
    box_length: float
    n_modes: int

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError("spatial dimension must be 1, 2 or 3")
        if self.n_modes < 4 or self.n_modes & (self.n_modes - 1):
            raise ValueError("modes per axis must be a power of two >= 4")

    @cached_property
    def k_axis(self) -> np.ndarray:
        return (2.0 * np.pi / self.box_length) * np.fft.fftfreq(
            self.n_modes, d=1.0 / self.n_modes)

    @cached_property
    def k_vectors(self) -> np.ndarray:
        """(*k_shape, dim) wavevectors."""
        grids = np.meshgrid(*([self.k_axis] * self.dim), indexing="ij")
        return np.stack(grids, axis=-1)

    @cached_property
    def k_mag(self) -> np.ndarray:
        return np.sqrt(np.sum(self.k_vectors ** 2, axis=-1))

    @property
    def k_shape(self) -> tuple:
        return (self.n_modes,) * self.dim

    @property
    def volume(self) -> float:
        return self.box_length ** self.dim

    @cached_property
    def k_min(self) -> float:
        return 2.0 * np.pi / self.box_length

    @cached_property
    def k_max(self) -> float:
        # Nyquist bins are kept empty, so the largest usable magnitude
        # comes from modes with per-axis index < n/2
        m = self.k_min * (self.n_modes // 2 - 1)
        return float(np.sqrt(self.dim) * m)

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True on modes whose any axis index equals the Nyquist bin."""
        idx = np.fft.fftfreq(self.n_modes, d=1.0 / self.n_modes).astype(int)
        mask = np.zeros(self.k_shape, dtype=bool)
        for ax in range(self.dim):
            sl = [slice(None)] * self.dim
            sl[ax] = idx == -(self.n_modes // 2)
            mask[tuple(sl)] = True
        return mask

    # -- transforms ---------------------------------------------------------
    def to_physical(self, data: np.ndarray) -> np.ndarray:
        axes = tuple(range(self.dim))
        return np.fft.ifftn(data, axes=axes, norm="forward")

    def to_spectral(self, values: np.ndarray) -> np.ndarray:
        axes = tuple(range(self.dim))
        return np.fft.fftn(values, axes=axes, norm="forward")

    def hermitize(self, data: np.ndarray) -> np.ndarray:
        """Project onto fields that are real in physical space."""
        flipped = data
        for ax in range(self.dim):
            flipped = np.flip(np.roll(flipped, -1, axis=ax), axis=ax)
        out = 0.5 * (data + np.conj(flipped))
        return np.where(self.nyquist_mask[(...,) + (None,) * (data.ndim - self.dim)],
                        0.0, out)


@dataclass
class LatticeField:
    """Spectral amplitudes on lattice x velocity grid.

    ``data`` has shape lattice.k_shape (+ velocity axis when a grid is
    attached); scalar spatial fields simply omit the trailing axis.
    """

    lattice: SpatialLattice
    data: np.ndarray
    grid: VelocityGrid | None = None

    def __post_init__(self):
        want = self.lattice.k_shape
        if self.data.shape[:self.lattice.dim] != want:
            raise ValueError("field data does not match the lattice")
        if self.grid is not None and self.data.shape[-1] != self.grid.n_nodes:
            raise ValueError("field data does not match the velocity grid")

    @property
    def is_scalar(self) -> bool:
        return self.data.ndim == self.lattice.dim

    def copy(self) -> "LatticeField":
        return LatticeField(self.lattice, self.data.copy(), self.grid)


def _sq_velocity_norm(field: LatticeField, weight: np.ndarray | None = None):
    """|.|^2 reduced over velocity (weighted when a grid is attached)."""
    mag2 = np.abs(field.data) ** 2
    if field.grid is None:
        if field.is_scalar:
            return mag2
        return np.sum(mag2, axis=-1)
    w = field.grid.weights if weight is None else field.grid.weights * weight
    return mag2 @ w


def l2_norm(field: LatticeField, weight: np.ndarray | None = None) -> float:
    """|| . ||_{L^2_xi L^2_x} (optionally with a velocity weight)."""
    return float(np.sqrt(field.lattice.volume
                         * np.sum(_sq_velocity_norm(field, weight))))


# ---------------------------------------------------------------------------
# dyadic partition
# ---------------------------------------------------------------------------

def smooth_step(t):
    """C^infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    out[t >= 1.0] = 1.0
    mid = (t > 0.0) & (t < 1.0)
    tm = t[mid]
    with np.errstate(over="ignore", divide="ignore"):
        a = np.exp(-1.0 / tm)
        b = np.exp(-1.0 / (1.0 - tm))
        out[mid] = np.where(a + b > 0.0, a / (a + b), 0.0)
    return out


def chi_profile(r):
    """Radial bump: 1 on |r| <= 3/4, 0 on |r| >= 4/3, smooth in between."""
    r = np.abs(np.asarray(r, dtype=float))
    return 1.0 - smooth_step((r - 0.75) / (4.0 / 3.0 - 0.75))


def phi_profile(r):
    """Annulus profile chi(r/2) - chi(r), supported in 3/4 <= |r| <= 8/3."""
    r = np.asarray(r, dtype=float)
    return chi_profile(0.5 * r) - chi_profile(r)


@dataclass
class DyadicPartition:
    """Sampled dyadic multipliers on a lattice, covering [q_min, q_max]."""

    lattice: SpatialLattice
    q_min: int
    q_max: int
    phi_tables: dict = field(repr=False, default=None)

    @property
    def shells(self) -> range:
        return range(self.q_min, self.q_max + 1)

    def phi(self, q: int) -> np.ndarray:
        if q not in self.phi_tables:
            raise KeyError(f"shell {q} outside covered range "
                           f"[{self.q_min}, {self.q_max}]")
        return self.phi_tables[q]

    def low_pass(self, q: int) -> np.ndarray:
        """chi(2^{-q} k): the cumulative multiplier S_q."""
        return chi_profile(self.lattice.k_mag * 2.0 ** (-q))


def build_partition(lattice: SpatialLattice, min_shells: int = 7
                    ) -> DyadicPartition:
    """Dyadic partition whose shells tile every nonzero lattice frequency.

    q_min is low enough that chi(2^{-q_min} k) vanishes on the whole
    lattice, making the telescoping partition identity exact from the
    lowest mode up.
    """
    q_min = int(np.floor(np.log2(0.75 * lattice.k_min)))
    q_max = int(np.ceil(np.log2(lattice.k_max * 2.0 / 3.0)))
    if q_max - q_min + 1 < min_shells:
        raise ValueError(
            f"lattice covers only {q_max - q_min + 1} dyadic shells "
            f"(needs >= {min_shells}); enlarge the box or the mode count")
    r = lattice.k_mag
    tables = {q: chi_profile(r * 2.0 ** (-(q + 1))) - chi_profile(r * 2.0 ** (-q))
              for q in range(q_min, q_max + 1)}
    return DyadicPartition(lattice, q_min, q_max, tables)


def dyadic_block(partition: DyadicPartition, fld: LatticeField, q: int
                 ) -> LatticeField:
    """Delta_q u: multiply every velocity slot by phi(2^{-q} k)."""
    mult = partition.phi(q)
    extra = fld.data.ndim - fld.lattice.dim
    return LatticeField(fld.lattice,
                        fld.data * mult[(...,) + (None,) * extra], fld.grid)


def block_norms(partition: DyadicPartition, fld: LatticeField,
                weight: np.ndarray | None = None) -> dict:
    """{q: ||Delta_q u||_{L^2_xi L^2_x}} over the covered shells."""
    sq = _sq_velocity_norm(fld, weight)
    vol = fld.lattice.volume
    return {q: float(np.sqrt(vol * np.sum(partition.phi(q) ** 2 * sq)))
            for q in partition.shells}


# ---------------------------------------------------------------------------
# shell spectra and Besov norms
# ---------------------------------------------------------------------------

@dataclass
class ShellSpectrum:
    """Per-shell norms with provenance metadata; absent shells stay absent."""

    entries: list          # [(q, value)]
    metadata: dict

    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.entries])

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("q,value\n")
            for q, v in self.entries:
                fh.write(f"{q},{v!r}\n")
        with open(str(path) + ".json", "w") as fh:
            json.dump(self.metadata, fh, sort_keys=True, indent=1)


def _band_shells(partition: DyadicPartition, band: str):
    if band == "all":
        shells = list(partition.shells)
    elif band == "low":
        shells = [q for q in partition.shells if q <= 0]
    elif band == "high":
        shells = [q for q in partition.shells if q >= -1]
    else:
        raise ValueError(f"unknown band {band!r}")
    if not shells:
        raise BandNotCoveredError(
            f"band {band!r} has no shells in covered range "
            f"[{partition.q_min}, {partition.q_max}]")
    return shells


def _aggregate(values: np.ndarray, r: float) -> float:
    if np.isinf(r):
        return float(values.max(initial=0.0))
    return float(np.sum(values ** r) ** (1.0 / r))


def shell_spectrum(partition: DyadicPartition, fld: LatticeField, s: float,
                   weight: np.ndarray | None = None, label: str = "",
                   time: float | None = None, r: float | None = None,
                   band: str = "all") -> ShellSpectrum:
    norms = block_norms(partition, fld, weight)
    entries = [(q, 2.0 ** (q * s) * norms[q]) for q in partition.shells]
    return ShellSpectrum(entries, {"s": s, "r": r, "band": band,
                                   "field": label, "time": time,
                                   "weighted": weight is not None})


def besov_norm(partition: DyadicPartition, fld: LatticeField, s: float,
               r: float = 1.0, band: str = "all",
               weight: np.ndarray | None = None) -> float:
    """Homogeneous Besov norm: l^r over shells of 2^{qs} ||Delta_q u||.

    band "low" keeps shells q <= 0, "high" keeps q >= -1 (the two bands
    deliberately share shells -1 and 0).
    """
    shells = _band_shells(partition, band)
    norms = block_norms(partition, fld, weight)
    vals = np.array([2.0 ** (q * s) * norms[q] for q in shells])
    return _aggregate(vals, r)


# ---------------------------------------------------------------------------
# time series and Chemin-Lerner norms
# ---------------------------------------------------------------------------

@dataclass
class FieldSeries:
    """Snapshots u(t_i) on a common lattice/grid, increasing times."""

    times: np.ndarray
    fields: list                     # list[LatticeField]

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.fields) != self.times.size or self.times.size == 0:
            raise ValueError("need matching non-empty times and fields")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")


def chemin_lerner_norm(partition: DyadicPartition, series: FieldSeries,
                       rho1: float, s: float, r: float = 1.0,
                       band: str = "all", rho2: float = 2.0,
                       weight: np.ndarray | None = None) -> float:
    """Mixed time-velocity-space norm.

    Per shell, the per-snapshot L^2_xi L^2_x block norms (with optional
    velocity weight, e.g. sqrt(nu)) are aggregated in time -- supremum for
    rho1 = infinity, trapezoid quadrature of the rho1-th power otherwise --
    and only then summed over shells with the 2^{qs} weight.  The velocity
    exponent is fixed to 2.
    """
    if rho2 != 2.0:
        raise NotImplementedError("velocity exponent is fixed to 2")
    shells = _band_shells(partition, band)
    per_shell = np.array(
        [[block_norms(partition, fld, weight)[q] for fld in series.fields]
         for q in shells])                       # (n_shell, n_time)
    if np.isinf(rho1):
        agg = per_shell.max(axis=1)
    else:
        if series.times.size == 1:
            raise ValueError("time quadrature needs at least two snapshots")
        agg = np.trapezoid(per_shell ** rho1, series.times,
                           axis=1) ** (1.0 / rho1)
    vals = np.array([2.0 ** (q * s) * a for q, a in zip(shells, agg)])
    return _aggregate(vals, r)


# ---------------------------------------------------------------------------
# dealiased products and the paraproduct decomposition
# ---------------------------------------------------------------------------

def _pad_axis(data: np.ndarray, axis: int, n_to: int) -> np.ndarray:
    n = data.shape[axis]
    shape = list(data.shape)
    shape[axis] = n_to
    out = np.zeros(shape, dtype=data.dtype)
    half = n // 2
    src_lo = [slice(None)] * data.ndim
    src_lo[axis] = slice(0, half)
    src_hi = [slice(None)] * data.ndim
    src_hi[axis] = slice(n - half + 1, n)        # skip the (empty) Nyquist bin
    dst_lo = list(src_lo)
    dst_hi = [slice(None)] * data.ndim
    dst_hi[axis] = slice(n_to - half + 1, n_to)
    out[tuple(dst_lo)] = data[tuple(src_lo)]
    out[tuple(dst_hi)] = data[tuple(src_hi)]
    return out


def _crop_axis(data: np.ndarray, axis: int, n_to: int) -> np.ndarray:
    n = data.shape[axis]
    shape = list(data.shape)
    shape[axis] = n_to
    out = np.zeros(shape, dtype=data.dtype)
    half = n_to // 2
    sl_lo = [slice(None)] * data.ndim
    sl_lo[axis] = slice(0, half)
    sl_hi = [slice(None)] * data.ndim
    sl_hi[axis] = slice(n - half + 1, n)
    dl_hi = [slice(None)] * data.ndim
    dl_hi[axis] = slice(n_to - half + 1, n_to)
    out[tuple(sl_lo)] = data[tuple(sl_lo)]
    out[tuple(dl_hi)] = data[tuple(sl_hi)]
    return out


def dealiased_product(lattice: SpatialLattice, a: np.ndarray, b: np.ndarray
                      ) -> np.ndarray:
    """Spectral coefficients of the pointwise product, 3/2-rule padded."""
    n_pad = 3 * lattice.n_modes // 2
    ap, bp = a, b
    for ax in range(lattice.dim):
        ap = _pad_axis(ap, ax, n_pad)
        bp = _pad_axis(bp, ax, n_pad)
    axes = tuple(range(lattice.dim))
    prod = (np.fft.ifftn(ap, axes=axes, norm="forward")
            * np.fft.ifftn(bp, axes=axes, norm="forward"))
    spec = np.fft.fftn(prod, axes=axes, norm="forward")
    for ax in range(lattice.dim):
        spec = _crop_axis(spec, ax, lattice.n_modes)
    return spec


def bony(partition: DyadicPartition, f: LatticeField, g: LatticeField):
    """Paraproduct split of the pointwise product f g.

    Returns (T_f g, T_g f, R(f, g)) with
      T_f g = sum_j S_{j-1} f * Delta_j g,
      R     = sum over |j - j'| <= 1 of Delta_{j'} f * Delta_j g.
    The identity f g = T_f g + T_g f + R holds exactly for fields whose
    spectrum lies in the covered annulus (no mean, no Nyquist content).
    """
    if f.lattice != g.lattice:
        raise ValueError("paraproduct operands live on different lattices")
    lat = f.lattice
    extra_f = (...,) + (None,) * (f.data.ndim - lat.dim)
    extra_g = (...,) + (None,) * (g.data.ndim - lat.dim)
    out_dtype = np.result_type(f.data, g.data)
    t_fg = np.zeros(np.broadcast_shapes(f.data.shape, g.data.shape),
                    dtype=out_dtype)
    t_gf = np.zeros_like(t_fg)
    rem = np.zeros_like(t_fg)
    shells = list(partition.shells)
    blocks_f = {j: f.data * partition.phi(j)[extra_f] for j in shells}
    blocks_g = {j: g.data * partition.phi(j)[extra_g] for j in shells}
    for j in shells:
        s_fm = f.data * partition.low_pass(j - 1)[extra_f]
        s_gm = g.data * partition.low_pass(j - 1)[extra_g]
        t_fg += dealiased_product(lat, s_fm, blocks_g[j])
        t_gf += dealiased_product(lat, s_gm, blocks_f[j])
        for jp in (j - 1, j, j + 1):
            if jp in blocks_f:
                rem += dealiased_product(lat, blocks_f[jp], blocks_g[j])
    mk = lambda d: LatticeField(lat, d, f.grid or g.grid)
    return mk(t_fg), mk(t_gf), mk(rem)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

@dataclass
class BernsteinReport:
    q: int
    ratio: float
    lower: float = 0.75
    upper: float = 8.0 / 3.0

    @property
    def ok(self) -> bool:
        return self.lower - 1e-12 <= self.ratio <= self.upper + 1e-12


def bernstein_check(partition: DyadicPartition, fld: LatticeField, q: int
                    ) -> BernsteinReport:
    """Gradient-to-scale ratio ||grad Delta_q u|| / (2^q ||Delta_q u||)."""
    blk = dyadic_block(partition, fld, q)
    base = l2_norm(blk)
    if base == 0.0:
        raise DegenerateInputError("empty shell: Bernstein ratio undefined")
    grad_sq = _sq_velocity_norm(blk) * blk.lattice.k_mag ** 2
    grad = np.sqrt(blk.lattice.volume * np.sum(grad_sq))
    return BernsteinReport(q, float(grad / (2.0 ** q * base)))


def interpolation_check(partition: DyadicPartition, fld: LatticeField,
                        s: float, s_tilde: float, theta: float) -> float:
    """Ratio in the convexity inequality between Besov norms.

    || u ||_{B^{theta s + (1-theta) s~}_{2,1}} over
    || u ||_{B^s_{2,inf}}^theta * || u ||_{B^{s~}_{2,inf}}^{1-theta}.
    """
    if not s < s_tilde:
        raise ValueError("need s < s_tilde")
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must lie in (0, 1)")
    s_mid = theta * s + (1.0 - theta) * s_tilde
    num = besov_norm(partition, fld, s_mid, r=1.0)
    den = (besov_norm(partition, fld, s, r=np.inf) ** theta
           * besov_norm(partition, fld, s_tilde, r=np.inf) ** (1.0 - theta))
    if den == 0.0:
        raise DegenerateInputError("zero field: interpolation ratio undefined")
    return float(num / den)
