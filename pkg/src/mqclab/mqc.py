"""Coherence-order decomposition, MQC spectra and cluster-size estimators.

Spectra come from two independent routes: a direct sum of ``|rho_ij|^2`` (or
of the reference/state overlap) over each order block, and the experimental
route of z-rotations followed by a discrete Fourier transform over the phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import Aliasing, DimensionMismatch, GridMismatch, NegativeAmplitude, NoCrossing, NumericalError
from .evolution import DensityOperator, z_rotate

POPULATED_FLOOR = 1e-12
NEGATIVE_TOLERANCE = 1e-9
IMAG_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class MqcSpectrum:
    """Amplitudes ``A(q)`` on the symmetric integer grid ``q = -q_max .. q_max``."""

    amplitudes: np.ndarray = field(repr=False)
    normalized: bool = False
    total: float = float("nan")

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=float)
        if a.ndim != 1 or a.size % 2 != 1:
            raise GridMismatch(f"amplitudes need odd length (symmetric grid), got {a.shape}")
        a.flags.writeable = False
        object.__setattr__(self, "amplitudes", a)
        if math.isnan(self.total):
            object.__setattr__(self, "total", float(a.sum()))

    @property
    def q_max(self) -> int:
        return (self.amplitudes.size - 1) // 2

    @property
    def orders(self) -> np.ndarray:
        return np.arange(-self.q_max, self.q_max + 1)

    def __getitem__(self, q: int) -> float:
        if abs(q) > self.q_max:
            return 0.0
        return float(self.amplitudes[q + self.q_max])

    def normalize(self) -> "MqcSpectrum":
        """Rescale so that ``sum_q A(q) = 1``; ``total`` keeps the raw sum."""
        raw = float(self.amplitudes.sum())
        if not raw > 0:
            raise NumericalError(f"cannot normalize a spectrum with total {raw}")
        return MqcSpectrum(self.amplitudes / raw, normalized=True, total=raw)

    def asymmetry(self) -> float:
        a = self.amplitudes
        return float(np.max(np.abs(a - a[::-1])))


@dataclass(frozen=True)
class ClusterEstimate:
    """Cluster-size estimates from one spectrum.

    ``k_width`` is ``sigma**2`` from the 1/e half-width and is ``nan`` when the
    spectrum never falls below ``A(0)/e``. ``k_m2_exp`` and ``k_m2_gauss``
    convert the second moment under exponential and Gaussian profile shapes.
    """

    k_width: float
    k_m2_exp: float
    k_m2_gauss: float
    sigma: float
    second_moment: float

    @property
    def width_available(self) -> bool:
        return not math.isnan(self.k_width)


# -- decomposition ----------------------------------------------------------


def decompose_orders(rho: DensityOperator) -> dict[int, np.ndarray]:
    """Split ``rho`` into order blocks ``rho_q`` (elements with ``M_i - M_j = q``).

    Only intended for small systems: every block is a full dense matrix.
    """
    q = rho.basis.order_matrix()
    n = rho.basis.n_spins
    return {k: np.where(q == k, rho.matrix, 0) for k in range(-n, n + 1)}


def _block_sums(weights: np.ndarray, basis) -> np.ndarray:
    """Sum ``weights_ij`` over each order block; returns values on ``q = -N..N``."""
    g = basis.level_indicator
    if np.iscomplexobj(weights):
        level = g.T @ weights.real @ g + 1j * (g.T @ weights.imag @ g)
    else:
        level = g.T @ weights @ g
    n = basis.n_spins
    # level[a, b]: states with a and b up spins, order a - b
    out = np.zeros(2 * n + 1, dtype=level.dtype)
    for k in range(-n, n + 1):
        out[k + n] = np.trace(level, offset=-k)
    return out


def _checked(values: np.ndarray, what: str) -> np.ndarray:
    if np.iscomplexobj(values):
        residue = float(np.max(np.abs(values.imag)))
        if residue > IMAG_TOLERANCE:
            raise NumericalError(f"{what}: imaginary residue {residue:.3e} exceeds {IMAG_TOLERANCE}")
        values = values.real
    low = float(values.min())
    if low < -NEGATIVE_TOLERANCE:
        raise NegativeAmplitude(
            f"{what}: amplitude {low:.3e} below -{NEGATIVE_TOLERANCE} "
            "(reference and state conventions do not match)"
        )
    return np.where(values < 0, 0.0, values)


def mqc_spectrum_direct(rho: DensityOperator) -> MqcSpectrum:
    """``A(q) = sum |rho_ij|^2`` over the order-``q`` block."""
    m = rho.matrix
    a = _block_sums((m.real**2 + m.imag**2), rho.basis)
    return MqcSpectrum(np.where(a < 0, 0.0, a))


def overlap_amplitudes_direct(rho_ref: DensityOperator, rho: DensityOperator) -> np.ndarray:
    """Signed real overlaps ``Tr{rho_ref_q^dagger rho_q}`` for ``q = -N..N``."""
    if rho_ref.matrix.shape != rho.matrix.shape:
        raise DimensionMismatch("reference and state have different dimensions")
    a = _block_sums(rho_ref.matrix.conj() * rho.matrix, rho.basis)
    residue = float(np.max(np.abs(a.imag)))
    if residue > IMAG_TOLERANCE:
        raise NumericalError(f"overlap spectrum: imaginary residue {residue:.3e}")
    return a.real


def overlap_spectrum_direct(rho_ref: DensityOperator, rho: DensityOperator) -> MqcSpectrum:
    """Blockwise overlap with a reference state as a spectrum."""
    return MqcSpectrum(_checked(overlap_amplitudes_direct(rho_ref, rho), "overlap spectrum"))


def phase_signal(rho_ref: DensityOperator, rho: DensityOperator, n_phases: int) -> np.ndarray:
    """``S(phi_k) = Tr{rho_ref z_rotate(rho, phi_k)}`` on ``phi_k = 2 pi k / n_phases``."""
    ref_t = rho_ref.matrix.T
    phis = 2 * np.pi * np.arange(n_phases) / n_phases
    return np.array([np.sum(ref_t * z_rotate(rho, phi).matrix) for phi in phis])


def overlap_amplitudes_phase(rho_ref: DensityOperator, rho: DensityOperator, n_phases: int | None = None) -> np.ndarray:
    """Signed amplitudes from the DFT of the phase-cycled signal, ``q = -N..N``."""
    if rho_ref.matrix.shape != rho.matrix.shape:
        raise DimensionMismatch("reference and state have different dimensions")
    q_max = rho.basis.n_spins
    if n_phases is None:
        n_phases = 4 * q_max
    if n_phases <= 2 * q_max:
        raise Aliasing(f"n_phases={n_phases} must exceed 2*q_max={2 * q_max}", "n_phases")
    coeffs = np.fft.fft(phase_signal(rho_ref, rho, n_phases)) / n_phases
    coeffs = coeffs[np.arange(-q_max, q_max + 1) % n_phases]
    residue = float(np.max(np.abs(coeffs.imag)))
    if residue > IMAG_TOLERANCE:
        raise NumericalError(f"phase-cycled spectrum: imaginary residue {residue:.3e}")
    return coeffs.real


def mqc_spectrum_phase(rho_ref: DensityOperator, rho: DensityOperator, n_phases: int | None = None) -> MqcSpectrum:
    """Spectrum from z-rotation phase cycling and a DFT over the phase."""
    return MqcSpectrum(_checked(overlap_amplitudes_phase(rho_ref, rho, n_phases), "phase-cycled spectrum"))


def binomial_profile(k: int) -> MqcSpectrum:
    """Normalized transition-count profile ``(2K)! / ((K+q)! (K-q)!)`` on ``q = -K..K``."""
    if k < 1:
        raise NumericalError(f"cluster size must be >= 1, got {k}")
    q = np.arange(-k, k + 1)
    log_n = gammaln(2 * k + 1) - gammaln(k + q + 1) - gammaln(k - q + 1)
    w = np.exp(log_n - log_n.max())
    with np.errstate(over="ignore"):
        total = float(np.exp(log_n.max()) * w.sum())
    return MqcSpectrum(w / w.sum(), normalized=True, total=total)


# -- estimators ----------------------------------------------------------------


def _populated(a: np.ndarray) -> np.ndarray:
    return a > POPULATED_FLOOR * max(float(a.max()), 0.0)


def width_at_1_over_e(spec: MqcSpectrum) -> float:
    """Half-width ``q*`` where ``A(q*) = A(0)/e``.

    Log-amplitude is interpolated linearly between consecutive populated
    orders on the non-negative side; the odd orders are skipped when they are
    all empty.
    """
    a = spec.amplitudes
    q_max = spec.q_max
    a0 = a[q_max]
    if not a0 > 0:
        raise NumericalError("A(0) must be positive to define a 1/e width")
    side = a[q_max:]
    populated = _populated(a)[q_max:]
    orders = np.arange(q_max + 1)
    if not np.any(populated[1::2]):
        keep = (orders % 2 == 0) & populated
    else:
        keep = populated
    qs, vals = orders[keep], side[keep]
    target = a0 / math.e
    below = np.nonzero(vals <= target)[0]
    if below.size == 0:
        raise NoCrossing(f"spectrum stays above A(0)/e up to q={q_max}", q_max=q_max)
    i = int(below[0])
    if vals[i] == target:
        return float(qs[i])
    q1, q2 = qs[i - 1], qs[i]
    l1, l2 = math.log(vals[i - 1]), math.log(vals[i])
    return float(q1 + (math.log(target) - l1) * (q2 - q1) / (l2 - l1))


def second_moment(spec: MqcSpectrum) -> float:
    a = spec.amplitudes
    q = spec.orders
    return float(np.sum(q**2 * a) / np.sum(a))


def cluster_size(spec: MqcSpectrum) -> ClusterEstimate:
    m2 = second_moment(spec)
    try:
        sigma = width_at_1_over_e(spec)
    except NoCrossing:
        sigma = float("nan")
    return ClusterEstimate(
        k_width=sigma**2,
        k_m2_exp=m2 / 2,
        k_m2_gauss=2 * m2,
        sigma=sigma,
        second_moment=m2,
    )


def fidelity_profile(spec_perturbed: MqcSpectrum, spec_ideal: MqcSpectrum, floor: float = POPULATED_FLOOR) -> dict[int, float]:
    """Per-order ratios ``A_perturbed(q) / A_ideal(q)`` for populated ideal orders."""
    if spec_perturbed.amplitudes.shape != spec_ideal.amplitudes.shape:
        raise GridMismatch(
            f"grids differ: q_max {spec_perturbed.q_max} vs {spec_ideal.q_max}"
        )
    out = {}
    for q, ap, ai in zip(spec_ideal.orders, spec_perturbed.amplitudes, spec_ideal.amplitudes):
        if ai >= floor:
            out[int(q)] = float(ap / ai)
    return out
