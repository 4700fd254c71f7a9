"""Truncated Fock-space linear algebra for a single bosonic mode.

Conventions: hbar = 1, q = (a + a^dag)/sqrt(2), p = (a - a^dag)/(sqrt(2) i).
Operators are plain complex ``numpy`` arrays of shape (dim, dim).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import DimensionMismatchError, InvalidDimensionError, InvalidInputError

#: dB per unit of squeezing parameter, 10*log10(e^2).
DB_PER_NEPER = 20.0 / math.log(10.0)


def db_to_xi(db: float) -> float:
    """Squeezing parameter for a squeezing level given in dB (sign preserved)."""
    return db / DB_PER_NEPER


def xi_to_db(xi: float) -> float:
    return xi * DB_PER_NEPER


@dataclass(frozen=True)
class FockVector:
    """Pure state as complex amplitudes over Fock levels 0..dim-1."""

    amps: np.ndarray

    def __post_init__(self):
        a = np.array(self.amps, dtype=np.complex128).ravel()
        if a.size < 1:
            raise InvalidDimensionError("FockVector needs at least one level")
        a.setflags(write=False)
        object.__setattr__(self, "amps", a)

    @property
    def dim(self) -> int:
        return self.amps.size

    @classmethod
    def basis(cls, n: int, dim: int) -> "FockVector":
        if not 0 <= n < dim:
            raise InvalidDimensionError(f"level {n} outside truncation {dim}")
        v = np.zeros(dim, dtype=np.complex128)
        v[n] = 1.0
        return cls(v)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def normalize(self) -> "FockVector":
        nrm = self.norm()
        if nrm == 0.0:
            raise InvalidInputError("cannot normalize the zero vector")
        return FockVector(self.amps / nrm)

    def tail_mass(self, levels: int = 5) -> float:
        """Population of the top ``levels`` Fock levels (truncation adequacy)."""
        p = np.abs(self.amps[-levels:]) ** 2
        return float(p.sum())

    def resize(self, dim: int) -> "FockVector":
        """Zero-pad or cut to ``dim`` levels (no renormalization)."""
        out = np.zeros(dim, dtype=np.complex128)
        k = min(dim, self.dim)
        out[:k] = self.amps[:k]
        return FockVector(out)

    def density(self) -> "DensityOperator":
        return DensityOperator(np.outer(self.amps, self.amps.conj()))


@dataclass(frozen=True)
class DensityOperator:
    entries: np.ndarray
    check: bool = field(default=True, compare=False)

    def __post_init__(self):
        rho = np.array(self.entries, dtype=np.complex128)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise InvalidDimensionError("density operator must be square")
        if self.check:
            if np.abs(rho - rho.conj().T).max() > 1e-12:
                raise InvalidInputError("density operator is not Hermitian")
            if abs(np.trace(rho).real - 1.0) > 1e-10:
                raise InvalidInputError(f"trace {np.trace(rho).real} != 1")
            if np.linalg.eigvalsh(rho).min() < -1e-10:
                raise InvalidInputError("density operator has negative eigenvalues")
        rho.setflags(write=False)
        object.__setattr__(self, "entries", rho)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


def _check_dim(dim: int, minimum: int = 2) -> None:
    if int(dim) != dim or dim < minimum:
        raise InvalidDimensionError(f"dimension must be an integer >= {minimum}, got {dim}")


def annihilation_op(dim: int) -> np.ndarray:
    _check_dim(dim)
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(np.complex128)


def creation_op(dim: int) -> np.ndarray:
    return annihilation_op(dim).T.copy()


def number_op(dim: int) -> np.ndarray:
    _check_dim(dim, 1)
    return np.diag(np.arange(dim, dtype=float)).astype(np.complex128)


def quadrature_ops(dim: int) -> tuple[np.ndarray, np.ndarray]:
    a = annihilation_op(dim)
    ad = a.conj().T
    q = (a + ad) / math.sqrt(2.0)
    p = (a - ad) / (math.sqrt(2.0) * 1j)
    return q, p


def guard_levels(magnitude: float) -> int:
    """Extra working levels used when exponentiating a non-diagonal generator."""
    return max(20, int(math.ceil(6.0 * magnitude)))


def expm_projected(generator, dim: int, guard: int) -> np.ndarray:
    """exp(generator(D_work)) at D_work = dim + guard, projected back to ``dim``.

    ``generator`` is a callable that returns the anti-Hermitian (times i,
    i.e. exponent) matrix at a given working dimension.
    """
    _check_dim(dim, 1)
    work = dim + guard
    return expm(generator(work))[:dim, :dim]


def displacement_op(beta: complex, dim: int) -> np.ndarray:
    """D(beta) = exp(beta a^dag - beta* a)."""
    _check_dim(dim, 1)
    beta = complex(beta)
    if beta == 0:
        return np.eye(dim, dtype=np.complex128)

    def gen(d):
        a = annihilation_op(d)
        return beta * a.conj().T - beta.conjugate() * a

    return expm_projected(gen, dim, guard_levels(abs(beta)))


def squeeze_op(xi: complex, dim: int) -> np.ndarray:
    """S(xi) = exp(xi*/2 a^2 - xi/2 a^dag^2); real xi > 0 squeezes q."""
    _check_dim(dim, 1)
    xi = complex(xi)
    if xi == 0:
        return np.eye(dim, dtype=np.complex128)

    def gen(d):
        a = annihilation_op(d)
        a2 = a @ a
        return 0.5 * xi.conjugate() * a2 - 0.5 * xi * a2.conj().T

    # two-photon generator leaks fast near the cutoff; widen the band
    return expm_projected(gen, dim, max(guard_levels(abs(xi)), dim // 2))


def phase_rotation_op(gamma: float, dim: int) -> np.ndarray:
    """U_p(gamma) = exp(-i gamma n), exactly diagonal."""
    _check_dim(dim, 1)
    return np.diag(np.exp(-1j * gamma * np.arange(dim)))


def apply(op: np.ndarray, state: FockVector) -> FockVector:
    if op.shape != (state.dim, state.dim):
        raise DimensionMismatchError(f"operator {op.shape} vs state dim {state.dim}")
    return FockVector(op @ state.amps)


def overlap_fidelity(a: FockVector, b: FockVector) -> float:
    """|<a|b>|^2 for normalized pure states."""
    if a.dim != b.dim:
        raise DimensionMismatchError(f"dims differ: {a.dim} vs {b.dim}")
    f = abs(np.vdot(a.amps, b.amps)) ** 2
    return float(min(max(f, 0.0), 1.0))


def mean_photon_number(s: FockVector) -> float:
    p = np.abs(s.amps) ** 2
    return float(np.dot(np.arange(s.dim), p))


def laguerre_displacement_element(alpha: complex, m: int, n: int) -> complex:
    """<m|D(alpha)|n> from the closed Laguerre formula (independent of expm)."""
    from scipy.special import eval_genlaguerre, gammaln

    alpha = complex(alpha)
    x = abs(alpha) ** 2
    if m >= n:
        pref = math.exp(0.5 * (gammaln(n + 1) - gammaln(m + 1)) - x / 2)
        return pref * alpha ** (m - n) * eval_genlaguerre(n, m - n, x)
    pref = math.exp(0.5 * (gammaln(m + 1) - gammaln(n + 1)) - x / 2)
    return pref * (-alpha.conjugate()) ** (n - m) * eval_genlaguerre(m, n - m, x)
