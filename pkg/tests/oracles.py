"""Independent reference implementations used as test oracles.

Operators are built from Kronecker products of Pauli matrices and
propagated with scipy's expm, sharing no code with the package.
"""

import numpy as np
from scipy.linalg import expm

SX = np.array([[0, 1], [1, 0]], dtype=complex) / 2
SY = np.array([[0, -1j], [1j, 0]], dtype=complex) / 2
# index bit 1 means spin up, so |0> is down: Iz = diag(-1/2, +1/2)
SZ = np.array([[-1, 0], [0, 1]], dtype=complex) / 2


def site_op(op, site, n):
    """``op`` acting on spin ``site``; bit ``site`` of the state index is that spin."""
    out = np.array([[1.0 + 0j]])
    for b in reversed(range(n)):
        out = np.kron(out, op if b == site else np.eye(2))
    return out


def hdd_oracle(d):
    n = d.shape[0]
    h = np.zeros((2**n, 2**n), dtype=complex)
    for i in range(n):
        for j in range(i + 1, n):
            zz = site_op(SZ, i, n) @ site_op(SZ, j, n)
            xx = site_op(SX, i, n) @ site_op(SX, j, n)
            yy = site_op(SY, i, n) @ site_op(SY, j, n)
            h += d[i, j] * (2 * zz - xx - yy)
    return h


def h0_oracle(d):
    n = d.shape[0]
    h = np.zeros((2**n, 2**n), dtype=complex)
    for i in range(n):
        for j in range(i + 1, n):
            xx = site_op(SX, i, n) @ site_op(SX, j, n)
            yy = site_op(SY, i, n) @ site_op(SY, j, n)
            h -= d[i, j] * (xx - yy)
    return h


def iz_oracle(n):
    return sum(site_op(SZ, i, n) for i in range(n))


def rho0_oracle(n):
    iz = iz_oracle(n)
    return iz / np.sqrt(np.trace(iz @ iz).real)


def evolve_oracle(h, rho, t):
    u = expm(-1j * h * t)
    return u @ rho @ u.conj().T


def order_spectrum_oracle(rho, n):
    """Loop-based ``sum |rho_ij|^2`` per order, ``q = -n..n``."""
    m = np.diag(iz_oracle(n)).real
    out = np.zeros(2 * n + 1)
    for i in range(2**n):
        for j in range(2**n):
            out[int(round(m[i] - m[j])) + n] += abs(rho[i, j]) ** 2
    return out


def two_spin_spectrum(dt):
    """Closed form for N=2 under H0 from the normalized thermal state."""
    return {0: np.cos(dt) ** 2, 2: np.sin(dt) ** 2 / 2, -2: np.sin(dt) ** 2 / 2}
