"""Spin-1/2 bases, coupling networks and the three dipolar Hamiltonians.

Index convention: bit ``b`` of a basis-state index is the orientation of spin
``b`` (1 = up). Couplings are angular frequencies in rad/s; only products
``d * t`` enter the dynamics.

All Hamiltonians are real symmetric in this basis. They are stored as dense
complex arrays so that the rest of the package handles one dtype.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import BadWeight, CapExceeded, UnknownKind, ValidationError

DEFAULT_MAX_SPINS = 12
HARD_MAX_SPINS = 14


def spin_cap() -> int:
    """Soft cap on the number of spins, raised by ``MQCLAB_MAX_SPINS`` up to the hard cap."""
    raw = os.environ.get("MQCLAB_MAX_SPINS")
    if not raw:
        return DEFAULT_MAX_SPINS
    try:
        cap = int(raw)
    except ValueError:
        raise ValidationError(f"not an integer: {raw!r}", "MQCLAB_MAX_SPINS") from None
    return max(1, min(cap, HARD_MAX_SPINS))


def _check_cap(n_spins: int, cap: int | None) -> None:
    cap = spin_cap() if cap is None else min(cap, HARD_MAX_SPINS)
    if n_spins < 1:
        raise ValidationError(f"need at least one spin, got {n_spins}", "n_spins")
    if n_spins > cap:
        raise CapExceeded(
            f"{n_spins} spins exceeds the cap of {cap} (hard cap {HARD_MAX_SPINS}; "
            "set MQCLAB_MAX_SPINS to raise the soft cap)",
            "n_spins",
        )


class NetworkKind(str, enum.Enum):
    CHAIN = "chain"
    LATTICE3D = "lattice3d"
    COMPLETE_RANDOM = "complete_random"


@dataclass(frozen=True, eq=False)
class Basis:
    """Zeeman product basis of ``n_spins`` spins.

    ``m_values[i]`` is the total magnetic quantum number of basis state ``i``.
    """

    n_spins: int
    m_values: np.ndarray = field(repr=False)

    @property
    def dimension(self) -> int:
        return self.m_values.shape[0]

    @cached_property
    def up_counts(self) -> np.ndarray:
        """Number of up spins per basis state (``M + N/2``) as integers."""
        return np.rint(self.m_values + self.n_spins / 2).astype(np.int64)

    @cached_property
    def level_indicator(self) -> np.ndarray:
        """``G[i, k] = 1`` when state ``i`` has ``k`` up spins; shape ``(dim, N+1)``."""
        g = np.zeros((self.dimension, self.n_spins + 1))
        g[np.arange(self.dimension), self.up_counts] = 1.0
        return g

    def order_matrix(self) -> np.ndarray:
        """Integer coherence order ``M_i - M_j`` for every matrix element."""
        u = self.up_counts
        return u[:, None] - u[None, :]


def build_basis(n_spins: int, cap: int | None = None) -> Basis:
    _check_cap(n_spins, cap)
    states = np.arange(2**n_spins)
    ups = np.zeros(states.shape, dtype=np.int64)
    for b in range(n_spins):
        ups += (states >> b) & 1
    m_values = ups - n_spins / 2
    m_values.flags.writeable = False
    return Basis(n_spins, m_values)


@dataclass(frozen=True, eq=False)
class SpinSystem:
    """A network of ``n_spins`` spins with symmetric couplings ``d_ij`` (rad/s)."""

    couplings: np.ndarray = field(repr=False)
    network_kind: NetworkKind | None = None
    seed: int = 0
    cap: int | None = None

    def __post_init__(self):
        d = np.asarray(self.couplings, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValidationError(f"couplings must be square, got shape {d.shape}", "couplings")
        if not np.array_equal(d, d.T):
            raise ValidationError("couplings must be exactly symmetric", "couplings")
        if np.any(np.diag(d) != 0):
            raise ValidationError("couplings must have a zero diagonal", "couplings")
        _check_cap(d.shape[0], self.cap)
        d = d.copy()
        d.flags.writeable = False
        object.__setattr__(self, "couplings", d)

    @property
    def n_spins(self) -> int:
        return self.couplings.shape[0]

    @cached_property
    def basis(self) -> Basis:
        return build_basis(self.n_spins, cap=HARD_MAX_SPINS)

    def pairs(self):
        """Yield ``(i, j, d_ij)`` for every coupled pair with ``i < j``."""
        n = self.n_spins
        for i in range(n):
            for j in range(i + 1, n):
                if self.couplings[i, j] != 0.0:
                    yield i, j, self.couplings[i, j]


def _cubic_sites(n: int) -> np.ndarray:
    side = 1
    while side**3 < n:
        side += 1
    sites = [(x, y, z) for z in range(side) for y in range(side) for x in range(side)]
    return np.array(sites[:n], dtype=float)


def make_network(
    kind: str | NetworkKind,
    n_spins: int,
    d0: float,
    seed: int = 0,
    *,
    angular: bool = False,
    cap: int | None = None,
) -> SpinSystem:
    """Build one of the stand-in coupling networks.

    ``chain``: nearest neighbours coupled with ``d0``.
    ``lattice3d``: first ``n_spins`` sites of a unit cubic lattice, ``d0 / r**3``;
    with ``angular=True`` each pair also gets ``1 - 3 cos^2(theta)`` for a field along z.
    ``complete_random``: all pairs, uniform on ``[-d0, d0]``, reproducible from ``seed``.
    """
    try:
        kind = NetworkKind(kind)
    except ValueError:
        raise UnknownKind(f"unknown network kind {kind!r}", "network.kind") from None
    if not d0 > 0:
        raise ValidationError(f"d0 must be positive, got {d0}", "network.d0_rad_s")
    _check_cap(n_spins, cap)

    d = np.zeros((n_spins, n_spins))
    if kind is NetworkKind.CHAIN:
        idx = np.arange(n_spins - 1)
        d[idx, idx + 1] = d0
        d[idx + 1, idx] = d0
    elif kind is NetworkKind.LATTICE3D:
        sites = _cubic_sites(n_spins)
        for i in range(n_spins):
            for j in range(i + 1, n_spins):
                r = sites[j] - sites[i]
                dist = np.linalg.norm(r)
                value = d0 / dist**3
                if angular:
                    value *= 1.0 - 3.0 * (r[2] / dist) ** 2
                d[i, j] = d[j, i] = value
    else:
        rng = np.random.default_rng(seed)
        upper = np.triu(rng.uniform(-d0, d0, size=(n_spins, n_spins)), k=1)
        d = upper + upper.T
    return SpinSystem(d, kind, seed, cap)


@dataclass(frozen=True, eq=False)
class Operator:
    """Dense operator on the Zeeman basis."""

    matrix: np.ndarray = field(repr=False)
    hermitian: bool = True

    def __post_init__(self):
        self.matrix.flags.writeable = False

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def norm(self) -> float:
        return float(np.max(np.abs(self.matrix))) if self.matrix.size else 0.0


def _bit(states: np.ndarray, b: int) -> np.ndarray:
    return (states >> b) & 1


def build_hdd(sys: SpinSystem) -> Operator:
    """Secular dipolar coupling ``sum d_ij [2 Iz Iz - (Ix Ix + Iy Iy)]``."""
    dim = 2**sys.n_spins
    states = np.arange(dim)
    h = np.zeros((dim, dim), dtype=complex)
    diag = np.zeros(dim)
    for i, j, dij in sys.pairs():
        bi, bj = _bit(states, i), _bit(states, j)
        # 2 m_i m_j with m = +-1/2
        diag += dij * 0.5 * np.where(bi == bj, 1.0, -1.0)
        flip = states[bi != bj]
        h[flip ^ ((1 << i) | (1 << j)), flip] += -0.5 * dij
    h[states, states] += diag
    return Operator(h)


def build_h0(sys: SpinSystem) -> Operator:
    """Double-quantum flip-flip Hamiltonian ``-(1/2) sum d_ij (I+ I+ + I- I-)``."""
    dim = 2**sys.n_spins
    states = np.arange(dim)
    h = np.zeros((dim, dim), dtype=complex)
    for i, j, dij in sys.pairs():
        both_down = states[(_bit(states, i) == 0) & (_bit(states, j) == 0)]
        both_up = both_down | (1 << i) | (1 << j)
        h[both_up, both_down] += -0.5 * dij
        h[both_down, both_up] += -0.5 * dij
    return Operator(h)


def build_heff(sys: SpinSystem, p: float) -> Operator:
    """Average Hamiltonian ``(1 - p) H0 + p Hdd`` of a perturbed cycle."""
    if not 0.0 <= p <= 1.0:
        raise BadWeight(f"perturbation weight must lie in [0, 1], got {p}", "p")
    if p == 0.0:
        return build_h0(sys)
    if p == 1.0:
        return build_hdd(sys)
    return Operator((1.0 - p) * build_h0(sys).matrix + p * build_hdd(sys).matrix)


def total_iz(basis: Basis) -> Operator:
    return Operator(np.diag(basis.m_values.astype(complex)))
