"""Independent reference computations shared by the test modules."""

import math

import numpy as np
from scipy.integrate import trapezoid


def hermite_functions(n_max: int, x: np.ndarray) -> np.ndarray:
    """psi_n(x) for n < n_max, rows indexed by n (stable three-term recurrence)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros((n_max, x.size))
    out[0] = math.pi ** -0.25 * np.exp(-0.5 * x * x)
    if n_max > 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for n in range(1, n_max - 1):
        out[n + 1] = math.sqrt(2.0 / (n + 1)) * x * out[n] - math.sqrt(n / (n + 1)) * out[n - 1]
    return out


def wavefunction(amps: np.ndarray, x: np.ndarray) -> np.ndarray:
    return amps @ hermite_functions(amps.size, x)


def chi_from_wavefunction(amps: np.ndarray, q: float, p: float, half_width: float = 25.0, n: int = 6001) -> complex:
    """chi(q, p) = int psi*(x + q/2) psi(x - q/2) exp(i p x) dx."""
    x = np.linspace(-half_width, half_width, n)
    a = wavefunction(amps, x + q / 2)
    b = wavefunction(amps, x - q / 2)
    return complex(trapezoid(np.conj(a) * b * np.exp(1j * p * x), x))


def kraus_loss(rho: np.ndarray, eta: float) -> np.ndarray:
    """Amplitude damping with transmissivity eta via its Kraus operators."""
    d = rho.shape[0]
    out = np.zeros_like(rho)
    for k in range(d):
        A = np.zeros((d, d))
        for m in range(k, d):
            A[m - k, m] = math.sqrt(math.comb(m, k)) * eta ** ((m - k) / 2) * (1 - eta) ** (k / 2)
        out += A @ rho @ A.T
    return out


def coherent_amps(alpha: complex, dim: int) -> np.ndarray:
    n = np.arange(dim)
    logf = np.array([math.lgamma(k + 1) for k in n])
    mag = np.exp(-abs(alpha) ** 2 / 2 + n * math.log(abs(alpha)) - 0.5 * logf) if alpha != 0 else (n == 0) * 1.0
    return mag * np.exp(1j * np.angle(alpha) * n)
