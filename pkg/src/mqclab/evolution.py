"""Exact unitary evolution of deviation density operators.

Every Hamiltonian is diagonalized once; propagators for any duration reuse
the cached eigendecomposition. Operations return fresh objects and never
mutate their inputs.

:class:`SectorEvolver` is the fast path used by the protocol runners. It
propagates states that are odd under the global spin flip inside the
spin-flip (and, for even ``N``, up-spin parity) sectors, where each block is a
quarter or half of the full dimension. States enter and leave it as ordinary
dense :class:`DensityOperator` objects.
"""

from __future__ import annotations

import threading
import weakref
from dataclasses import dataclass, field

import numpy as np

from .errors import BadConfig, DimensionMismatch, EigFailure, ValidationError
from .spin_core import Basis, Operator, SpinSystem, build_h0, build_hdd, build_heff

CONCATENATED = "concatenated"
EFFECTIVE = "effective"
MODES = (CONCATENATED, EFFECTIVE)


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Traceless Hermitian deviation density matrix on ``basis``."""

    matrix: np.ndarray = field(repr=False)
    basis: Basis

    def __post_init__(self):
        dim = self.basis.dimension
        if self.matrix.shape != (dim, dim):
            raise DimensionMismatch(
                f"matrix shape {self.matrix.shape} does not match basis dimension {dim}"
            )
        self.matrix.flags.writeable = False

    @property
    def purity(self) -> float:
        """``Tr{rho^2}``."""
        m = self.matrix
        return float(np.vdot(m, m).real)

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))


@dataclass(frozen=True, eq=False)
class Propagator:
    unitary: np.ndarray = field(repr=False)
    generator: Operator | None
    duration: float

    def __post_init__(self):
        self.unitary.flags.writeable = False

    def unitarity_error(self) -> float:
        u = self.unitary
        return float(np.max(np.abs(u @ u.conj().T - np.eye(u.shape[0]))))


def thermal_state(basis: Basis) -> DensityOperator:
    """High-temperature equilibrium ``rho0 ~ Iz``, normalized to unit purity."""
    m = basis.m_values
    scale = np.sqrt(np.sum(m**2))
    return DensityOperator(np.diag(m / scale).astype(complex), basis)


# -- eigendecomposition cache ---------------------------------------------

_eig_cache: "weakref.WeakKeyDictionary[Operator, tuple]" = weakref.WeakKeyDictionary()
_eig_lock = threading.Lock()


def _eigh(matrix: np.ndarray):
    try:
        if not np.any(matrix.imag):
            w, v = np.linalg.eigh(matrix.real)
        else:
            w, v = np.linalg.eigh(matrix)
    except np.linalg.LinAlgError as exc:
        raise EigFailure(f"Hermitian eigensolve did not converge: {exc}") from exc
    return w, v


def eigendecomposition(h: Operator):
    """Cached ``(eigenvalues, eigenvectors)`` of a Hermitian operator."""
    with _eig_lock:
        cached = _eig_cache.get(h)
        if cached is None:
            cached = _eigh(h.matrix)
            _eig_cache[h] = cached
    return cached


def _exp_from_eig(w, v, t):
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def make_propagator(h: Operator, t: float) -> Propagator:
    """``U = exp(-i H t)``."""
    if not h.hermitian:
        raise ValidationError("generator must be Hermitian")
    if t == 0:
        return Propagator(np.eye(h.dimension, dtype=complex), h, 0.0)
    w, v = eigendecomposition(h)
    return Propagator(_exp_from_eig(w, v, t), h, float(t))


def evolve(rho: DensityOperator, u: Propagator) -> DensityOperator:
    """``U rho U^dagger``."""
    if u.unitary.shape != rho.matrix.shape:
        raise DimensionMismatch(
            f"propagator shape {u.unitary.shape} does not match state {rho.matrix.shape}"
        )
    uu = u.unitary
    return DensityOperator(uu @ rho.matrix @ uu.conj().T, rho.basis)


def z_rotate(rho: DensityOperator, phi: float) -> DensityOperator:
    """Rotation about z: ``rho_ij -> rho_ij exp(i phi (M_i - M_j))``."""
    phase = np.exp(1j * phi * rho.basis.m_values)
    return DensityOperator(rho.matrix * phase[:, None] * phase.conj()[None, :], rho.basis)


# -- Hamiltonian and cycle caches --------------------------------------------


class _SystemCache:
    def __init__(self, sys: SpinSystem):
        self._sys = sys
        self._lock = threading.Lock()
        self._h0 = None
        self._hdd = None
        self._heff: dict[float, Operator] = {}
        self.cycles: dict[tuple, Propagator] = {}

    @property
    def h0(self) -> Operator:
        with self._lock:
            if self._h0 is None:
                self._h0 = build_h0(self._sys)
            return self._h0

    @property
    def hdd(self) -> Operator:
        with self._lock:
            if self._hdd is None:
                self._hdd = build_hdd(self._sys)
            return self._hdd

    def heff(self, p: float) -> Operator:
        if p == 0.0:
            return self.h0
        if p == 1.0:
            return self.hdd
        with self._lock:
            if p not in self._heff:
                self._heff[p] = build_heff(self._sys, p)
            return self._heff[p]


_system_caches: "weakref.WeakKeyDictionary[SpinSystem, _SystemCache]" = weakref.WeakKeyDictionary()
_system_lock = threading.Lock()


def hamiltonians(sys: SpinSystem) -> _SystemCache:
    """Per-system cache of ``H0``, ``Hdd`` and ``H_eff(p)``."""
    with _system_lock:
        cache = _system_caches.get(sys)
        if cache is None:
            cache = _SystemCache(sys)
            _system_caches[sys] = cache
    return cache


def cycle_timing(cfg) -> tuple[float, float]:
    """Validated ``(tau0, tau_sigma)`` of a protocol configuration."""
    tau0, tau_sigma = float(cfg.tau0), float(cfg.tau_sigma)
    if not tau0 > 0:
        raise BadConfig(f"tau0 must be positive, got {tau0}", "protocol.tau0")
    if not tau_sigma >= 0:
        raise BadConfig(f"tau_sigma must be non-negative, got {tau_sigma}", "protocol.tau_sigma")
    return tau0, tau_sigma


def cycle_propagator(sys: SpinSystem, cfg, mode: str = CONCATENATED) -> Propagator:
    """Propagator of one perturbation cycle.

    ``concatenated``: ``exp(-i Hdd tau_sigma) exp(-i H0 tau0)``.
    ``effective``: ``exp(-i H_eff tau_c)`` with ``tau_c = tau0 + tau_sigma``.
    """
    tau0, tau_sigma = cycle_timing(cfg)
    if mode not in MODES:
        raise BadConfig(f"mode must be one of {MODES}, got {mode!r}", "protocol.mode")
    cache = hamiltonians(sys)
    key = (mode, tau0, tau_sigma)
    cached = cache.cycles.get(key)
    if cached is not None:
        return cached
    tau_c = tau0 + tau_sigma
    if mode == CONCATENATED:
        u = make_propagator(cache.h0, tau0)
        if tau_sigma > 0:
            udd = make_propagator(cache.hdd, tau_sigma)
            u = Propagator(udd.unitary @ u.unitary, None, tau_c)
    else:
        u = make_propagator(cache.heff(tau_sigma / tau_c), tau_c)
    cache.cycles[key] = u
    return u


def run_cycles(
    rho: DensityOperator, sys: SpinSystem, cfg, n_cycles: int, mode: str = CONCATENATED
) -> DensityOperator:
    """Apply ``n_cycles`` perturbation cycles; the cycle propagator is built once."""
    if n_cycles < 0:
        raise BadConfig(f"n_cycles must be non-negative, got {n_cycles}", "n_cycles")
    u = cycle_propagator(sys, cfg, mode)
    for _ in range(n_cycles):
        rho = evolve(rho, u)
    return rho


def forward_evolve(rho: DensityOperator, sys: SpinSystem, t: float) -> DensityOperator:
    """Evolution under ``H0`` for time ``t``."""
    return evolve(rho, make_propagator(hamiltonians(sys).h0, t))


def backward_evolve(rho: DensityOperator, sys: SpinSystem, t: float) -> DensityOperator:
    """Evolution under ``-H0`` for time ``t``: undoes :func:`forward_evolve`."""
    if t < 0:
        raise ValidationError(f"backward duration must be non-negative, got {t}", "t")
    return evolve(rho, make_propagator(hamiltonians(sys).h0, -t))


# -- symmetry-sector fast path ---------------------------------------------


class SectorEvolver:
    """Propagation of flip-odd states in the symmetry-adapted basis.

    Both Hamiltonians commute with the global flip ``X`` (all spins inverted)
    and preserve the parity of the up-spin count. The thermal state and
    everything reached from it satisfy ``X rho X = -rho``. With
    ``e(+-) = (|s> +- |~s>)/sqrt(2)`` the Hamiltonians are block diagonal and
    such states only have the ``(+, -)`` block, so the state is carried as one
    matrix ``B = rho[R, R] - rho[R, ~R]`` per group of representatives ``R``.
    Each step costs two products of size ``2**(N-2)`` per parity group
    (even ``N``) or ``2**(N-1)`` (odd ``N``).
    """

    def __init__(self, sys: SpinSystem):
        self.sys = sys
        self.basis = sys.basis
        n = sys.n_spins
        dim = self.basis.dimension
        states = np.arange(dim)
        reps = states[states < (states ^ (dim - 1))]
        if n % 2 == 0:
            parity = self.basis.up_counts[reps] % 2
            self.groups = [reps[parity == g] for g in (0, 1)]
        else:
            self.groups = [reps]
        self.groups = [(r, r ^ (dim - 1)) for r in self.groups]
        self._cycles: dict[tuple, list] = {}
        self._labels = None
        self._lock = threading.Lock()

    def reduce_operator(self, h: Operator) -> list[tuple[np.ndarray, np.ndarray]]:
        """``(H_plus, H_minus)`` per group for a flip-invariant Hamiltonian."""
        m = h.matrix.real if not np.any(h.matrix.imag) else h.matrix
        out = []
        for r, rbar in self.groups:
            direct = m[np.ix_(r, r)]
            crossed = m[np.ix_(r, rbar)]
            out.append((direct + crossed, direct - crossed))
        return out

    def reduce_state(self, rho: DensityOperator, atol: float = 1e-12) -> list[np.ndarray]:
        m = rho.matrix
        blocks = []
        scale = max(float(np.max(np.abs(m))), 1.0)
        for r, rbar in self.groups:
            rr, rrbar = m[np.ix_(r, r)], m[np.ix_(r, rbar)]
            if (
                np.max(np.abs(m[np.ix_(rbar, rbar)] + rr)) > atol * scale
                or np.max(np.abs(m[np.ix_(rbar, r)] + rrbar)) > atol * scale
            ):
                raise ValidationError("state is not odd under the global spin flip")
            blocks.append(rr - rrbar)
        return blocks

    def expand_state(self, blocks: list[np.ndarray]) -> DensityOperator:
        dim = self.basis.dimension
        m = np.zeros((dim, dim), dtype=complex)
        for (r, rbar), b in zip(self.groups, blocks):
            bh = b.conj().T
            rr = 0.5 * (b + bh)
            rrbar = 0.5 * (bh - b)
            m[np.ix_(r, r)] = rr
            m[np.ix_(r, rbar)] = rrbar
            m[np.ix_(rbar, rbar)] = -rr
            m[np.ix_(rbar, r)] = -rrbar
        return DensityOperator(m, self.basis)

    def overlap_amplitudes(self, ref_blocks: list[np.ndarray], blocks: list[np.ndarray]) -> np.ndarray:
        """Real blockwise overlap ``Tr{ref_q^dagger rho_q}`` on ``q = -N..N`` without expanding.

        ``(r, r)`` elements carry order ``u_a - u_b`` and ``(r, ~r)`` elements
        ``u_a + u_b - N`` (``u`` = up-spin count of the representative); the
        two mirrored blocks repeat the same products at opposite order.
        """
        n = self.sys.n_spins
        size = 2 * n + 1
        out = np.zeros(size)
        for labels, ref, b in zip(self._order_labels(), ref_blocks, blocks):
            ref_h, b_h = ref.conj().T, b.conj().T
            pairs = ((ref + ref_h, b + b_h), (ref_h - ref, b_h - b))
            for lab, (x, y) in zip(labels, pairs):
                # the imaginary parts cancel between q and -q (X-odd, Hermitian states)
                w = x.real * y.real + x.imag * y.imag
                out += np.bincount(lab, 0.25 * w.ravel(), size)
        return out + out[::-1]

    def _order_labels(self):
        """Per group, flat order index (``q + N``) of every ``(r, r)`` and ``(r, ~r)`` element."""
        with self._lock:
            if self._labels is None:
                n = self.sys.n_spins
                labels = []
                for r, _ in self.groups:
                    u = self.basis.up_counts[r]
                    direct = (u[:, None] - u[None, :] + n).ravel()
                    crossed = (u[:, None] + u[None, :]).ravel()
                    labels.append((direct, crossed))
                self._labels = labels
            return self._labels

    @staticmethod
    def _expm(h: np.ndarray, t: float) -> np.ndarray:
        if t == 0:
            return np.eye(h.shape[0], dtype=complex)
        w, v = _eigh(h)
        return _exp_from_eig(w, v, t)

    def propagators(self, key: tuple) -> list[tuple[np.ndarray, np.ndarray]]:
        """Sector propagators for ``("h0", t)`` or ``(mode, tau0, tau_sigma)``."""
        with self._lock:
            cached = self._cycles.get(key)
        if cached is not None:
            return cached
        cache = hamiltonians(self.sys)
        if key[0] == "h0":
            t = key[1]
            props = [(self._expm(hp, t), self._expm(hm, t)) for hp, hm in self.reduce_operator(cache.h0)]
        else:
            mode, tau0, tau_sigma = key
            if mode not in MODES:
                raise BadConfig(f"mode must be one of {MODES}, got {mode!r}", "protocol.mode")
            tau_c = tau0 + tau_sigma
            if mode == CONCATENATED:
                base = self.propagators(("h0", tau0))
                if tau_sigma == 0:
                    props = base
                else:
                    pert = [
                        (self._expm(hp, tau_sigma), self._expm(hm, tau_sigma))
                        for hp, hm in self.reduce_operator(cache.hdd)
                    ]
                    props = [(dp @ up, dm @ um) for (up, um), (dp, dm) in zip(base, pert)]
            else:
                p = tau_sigma / tau_c
                if p == 0:
                    props = self.propagators(("h0", tau0))
                else:
                    props = [
                        (self._expm(hp, tau_c), self._expm(hm, tau_c))
                        for hp, hm in self.reduce_operator(cache.heff(p))
                    ]
        with self._lock:
            self._cycles[key] = props
        return props

    def h0_step(self, t: float):
        return self.propagators(("h0", float(t)))

    def cycle_step(self, cfg, mode: str = CONCATENATED):
        tau0, tau_sigma = cycle_timing(cfg)
        return self.propagators((mode, tau0, tau_sigma))

    @staticmethod
    def step(blocks: list[np.ndarray], props) -> list[np.ndarray]:
        return [up @ b @ um.conj().T for b, (up, um) in zip(blocks, props)]


_evolvers: "weakref.WeakKeyDictionary[SpinSystem, SectorEvolver]" = weakref.WeakKeyDictionary()


def sector_evolver(sys: SpinSystem) -> SectorEvolver:
    with _system_lock:
        ev = _evolvers.get(sys)
        if ev is None:
            ev = SectorEvolver(sys)
            _evolvers[sys] = ev
    return ev
