"""Catalog of non-Gaussian states and bosonic code-words.

Every family is a small frozen dataclass (a ``StateSpec``); ``build_state``
compiles it into a normalized :class:`~gconv.fock.FockVector`.

Squeezing levels quoted in dB convert with ``xi = dB / (20 log10 e)``;
GKP widths use ``delta = 10**(-dB/20)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from functools import lru_cache
from typing import Union

import numpy as np
from scipy.linalg import expm
from scipy.optimize import bisect
from scipy.sparse import diags
from scipy.sparse.linalg import expm_multiply
from scipy.special import comb

from . import fock
from .errors import BracketError, InvalidSpecError, TruncationError
from .fock import FockVector

DEFAULT_DIM = 200
TAIL_TOL = 1e-8
# three-photon squeezing has no cutoff-independent limit; see Trisqueezed
TRISQUEEZED_TAIL_TOL = 1e-3
TRISQUEEZED_CUTOFF = 60


@dataclass(frozen=True)
class SqueezedCoherent:
    alpha: complex = 0.0
    r: float = 0.0
    phi: float = 0.0
    family = "squeezed_coherent"


@dataclass(frozen=True)
class CatCode:
    """Rotation-symmetric code-word built on a squeezed-coherent primitive.

    ``N=1`` gives the even (``mu=0``) and odd (``mu=1``) cat states.
    """

    N: int = 1
    alpha: complex = 2.0
    mu: int = 0
    r: float = 0.0
    phi: float = 0.0
    family = "cat"


@dataclass(frozen=True)
class BinomialCode:
    N: int = 2
    K: int = 2
    mu: int = 0
    family = "binomial"


@dataclass(frozen=True)
class Pass:
    """Photon-added (``L > 0``) or photon-subtracted (``L < 0``) squeezed state."""

    L: int = -2
    alpha: complex = 0.0
    xi: complex = 0.5
    phi: float = 0.0
    family = "pass"


@dataclass(frozen=True)
class CubicPhase:
    c: float = 0.1
    xi: float = 0.0
    family = "cubic"


@dataclass(frozen=True)
class Trisqueezed:
    """exp(i (t* a^3 + t a^dag^3)) |0>, exponentiated at ``cutoff`` levels.

    The three-photon generator has no well defined infinite-dimensional
    limit, so the cutoff is part of the state definition.
    """

    t: complex = 0.1
    cutoff: int = TRISQUEEZED_CUTOFF
    family = "trisqueezed"


@dataclass(frozen=True)
class Gkp:
    delta: float = 0.5
    mu: int = 0
    n_max: int | None = None
    family = "gkp"


@dataclass(frozen=True)
class FockBasis:
    n: int = 0
    family = "fock"


StateSpec = Union[SqueezedCoherent, CatCode, BinomialCode, Pass, CubicPhase, Trisqueezed, Gkp, FockBasis]

FAMILIES = {
    cls.family: cls
    for cls in (SqueezedCoherent, CatCode, BinomialCode, Pass, CubicPhase, Trisqueezed, Gkp, FockBasis)
}
_COMPLEX_FIELDS = {"alpha", "xi", "t"}


def gkp_delta_from_db(db: float) -> float:
    return 10.0 ** (-db / 20.0)


def gkp_db_from_delta(delta: float) -> float:
    return -20.0 * math.log10(delta)


# ---------------------------------------------------------------- validation


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise InvalidSpecError(msg)


def validate(spec: StateSpec) -> None:
    if isinstance(spec, (CatCode, BinomialCode, Gkp)):
        _require(spec.mu in (0, 1), f"mu must be 0 or 1, got {spec.mu}")
    if isinstance(spec, (CatCode, BinomialCode)):
        _require(int(spec.N) == spec.N and spec.N >= 1, f"N must be >= 1, got {spec.N}")
    if isinstance(spec, BinomialCode):
        _require(int(spec.K) == spec.K and spec.K >= 1, f"K must be >= 1, got {spec.K}")
    if isinstance(spec, Pass):
        _require(int(spec.L) == spec.L and spec.L != 0 and -5 <= spec.L <= 5,
                 f"L must be a nonzero integer in [-5, 5], got {spec.L}")
    if isinstance(spec, Gkp):
        _require(spec.delta > 0, f"delta must be positive, got {spec.delta}")
        _require(spec.n_max is None or spec.n_max >= 0, "n_max must be >= 0")
    if isinstance(spec, Trisqueezed):
        _require(spec.cutoff >= 4, "trisqueezed cutoff must be >= 4")
    if isinstance(spec, FockBasis):
        _require(int(spec.n) == spec.n and spec.n >= 0, f"n must be >= 0, got {spec.n}")
    if not isinstance(spec, tuple(FAMILIES.values())):
        raise InvalidSpecError(f"unknown state spec {spec!r}")


# ---------------------------------------------------------------- builders


def _vacuum(dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=np.complex128)
    v[0] = 1.0
    return v


def _squeezed_coherent(alpha: complex, r: complex, phi: float, dim: int) -> np.ndarray:
    v = fock.squeeze_op(r * np.exp(-2j * phi), dim)[:, 0]
    if alpha != 0:
        v = _displace_vec(alpha, v)
    return v


def _displace_vec(beta: complex, v: np.ndarray) -> np.ndarray:
    """D(beta) v via a Krylov exponential at an enlarged working dimension."""
    dim = v.size
    work = dim + fock.guard_levels(abs(beta))
    s = np.sqrt(np.arange(1, work))
    a = diags(s, 1, format="csc", dtype=np.complex128)
    gen = beta * a.T - np.conj(beta) * a
    padded = np.zeros(work, dtype=np.complex128)
    padded[:dim] = v
    return expm_multiply(gen, padded)[:dim]


def _cat(spec: CatCode, dim: int) -> np.ndarray:
    theta = _squeezed_coherent(complex(spec.alpha), spec.r, spec.phi, dim)
    n = np.arange(dim)
    out = np.zeros(dim, dtype=np.complex128)
    for m in range(2 * spec.N):
        out += (-1) ** (spec.mu * m) * np.exp(1j * m * math.pi / spec.N * n) * theta
    return out


def _binomial(spec: BinomialCode, dim: int) -> np.ndarray:
    out = np.zeros(dim, dtype=np.complex128)
    for k in range(spec.K + 1):
        if k % 2 != spec.mu:
            continue
        level = k * spec.N
        if level >= dim:
            raise TruncationError(f"binomial level {level} exceeds dim {dim}")
        out[level] = math.sqrt(comb(spec.K, k, exact=True))
    return out


def _pass(spec: Pass, dim: int) -> np.ndarray:
    k = abs(spec.L)
    work = dim + k
    v = _squeezed_coherent(complex(spec.alpha), complex(spec.xi), spec.phi, work)
    a = fock.annihilation_op(work)
    op = a if spec.L < 0 else a.T
    for _ in range(k):
        v = op @ v
    return v[:dim]


def _cubic(spec: CubicPhase, dim: int) -> np.ndarray:
    work = dim + max(40, dim // 2)
    v = fock.squeeze_op(spec.xi, work)[:, 0]
    if spec.c != 0:
        q, _ = fock.quadrature_ops(work)
        # q^3 is real-symmetric: exponentiate through its eigenbasis
        w, U = np.linalg.eigh((q @ q @ q).real)
        v = U @ (np.exp(1j * spec.c * w) * (U.T @ v))
    return v[:dim]


def _trisqueezed(spec: Trisqueezed, dim: int) -> np.ndarray:
    t = complex(spec.t)
    if t == 0:
        return _vacuum(dim)
    cut = int(spec.cutoff)
    a = fock.annihilation_op(cut)
    a3 = a @ a @ a
    v = expm(1j * (t.conjugate() * a3 + t * a3.conj().T))[:, 0]
    out = np.zeros(dim, dtype=np.complex128)
    k = min(dim, cut)
    out[:k] = v[:k]
    return out


def default_gkp_terms(delta: float) -> int:
    return int(math.ceil(4.0 / (math.sqrt(math.pi) * delta))) + 3


def _gkp(spec: Gkp, dim: int) -> np.ndarray:
    n_max = default_gkp_terms(spec.delta) if spec.n_max is None else int(spec.n_max)
    sq = fock.squeeze_op(-math.log(spec.delta), dim)[:, 0]
    out = np.zeros(dim, dtype=np.complex128)
    for n in range(-n_max, n_max + 1):
        k = 2 * n + spec.mu
        weight = math.exp(-0.5 * math.pi * spec.delta ** 2 * k ** 2)
        if weight < 1e-12:
            continue
        out += weight * _displace_vec(math.sqrt(math.pi / 2) * k, sq)
    return out


_BUILDERS = {
    SqueezedCoherent: lambda s, d: _squeezed_coherent(complex(s.alpha), s.r, s.phi, d),
    CatCode: _cat,
    BinomialCode: _binomial,
    Pass: _pass,
    CubicPhase: _cubic,
    Trisqueezed: _trisqueezed,
    Gkp: _gkp,
    FockBasis: lambda s, d: FockVector.basis(s.n, d).amps.copy(),
}


def tail_tolerance(spec: StateSpec) -> float:
    return TRISQUEEZED_TAIL_TOL if isinstance(spec, Trisqueezed) else TAIL_TOL


@lru_cache(maxsize=256)
def _build_cached(spec: StateSpec, dim: int, tail_tol: float) -> FockVector:
    raw = _BUILDERS[type(spec)](spec, dim)
    nrm = np.linalg.norm(raw)
    if not np.isfinite(nrm) or nrm == 0:
        raise InvalidSpecError(f"{spec!r} produced a null vector at dim {dim}")
    state = FockVector(raw / nrm)
    tail = state.tail_mass(5)
    if tail > tail_tol:
        raise TruncationError(
            f"{describe(spec)}: tail mass {tail:.2e} in top 5 of {dim} levels exceeds {tail_tol:.0e}; "
            "increase dim"
        )
    return state


def build_state(spec: StateSpec, dim: int = DEFAULT_DIM, tail_tol: float | None = None) -> FockVector:
    """Compile ``spec`` into a normalized Fock vector of length ``dim``.

    Raises ``TruncationError`` when the top five levels carry more than the
    family's tail tolerance, and ``InvalidSpecError`` for bad parameters.
    """
    validate(spec)
    if dim < 6:
        raise TruncationError(f"dim {dim} too small for the tail check")
    tol = tail_tolerance(spec) if tail_tol is None else tail_tol
    return _build_cached(spec, int(dim), float(tol))


def logical_z_op(N: int, dim: int) -> np.ndarray:
    """Z_N = exp(i (pi/N) n)."""
    if N < 1:
        raise InvalidSpecError("N must be >= 1")
    return np.diag(np.exp(1j * math.pi / N * np.arange(dim)))


def isoenergetic_alpha(N: int, K: int, mu: int, bracket=(1.0, 3.5), dim: int = DEFAULT_DIM) -> float:
    """Cat amplitude whose code-word has the binomial code-word's mean photon number."""
    lo, hi = map(float, bracket)
    if not hi > lo:
        raise BracketError(f"degenerate bracket {bracket}")
    target = fock.mean_photon_number(build_state(BinomialCode(N, K, mu), dim))

    def gap(alpha):
        return fock.mean_photon_number(build_state(CatCode(N, alpha, mu), dim)) - target

    g_lo, g_hi = gap(lo), gap(hi)
    if g_lo * g_hi > 0:
        raise BracketError(f"no sign change of <n>_cat - <n>_bin on {bracket}")
    return float(bisect(gap, lo, hi, xtol=1e-7))


# ---------------------------------------------------------------- records


def _fmt(v) -> str:
    if isinstance(v, complex):
        if v.imag == 0:
            return repr(v.real)
        return repr(v).strip("()")
    return repr(v)


def to_record(spec: StateSpec) -> dict:
    """Flat JSON-friendly record; complex numbers become ``[re, im]``."""
    rec = {"family": spec.family}
    for k, v in asdict(spec).items():
        if isinstance(v, complex) or k in _COMPLEX_FIELDS:
            v = complex(v)
            rec[k] = [v.real, v.imag]
        else:
            rec[k] = v
    return rec


def from_record(rec: dict) -> StateSpec:
    rec = dict(rec)
    family = rec.pop("family", None)
    cls = FAMILIES.get(family)
    if cls is None:
        raise InvalidSpecError(f"unknown family {family!r}; expected one of {sorted(FAMILIES)}")
    names = {f.name for f in fields(cls)}
    unknown = set(rec) - names - {"db"}
    if unknown:
        raise InvalidSpecError(f"unknown keys for {family}: {sorted(unknown)}")
    kwargs = {}
    for k, v in rec.items():
        if k == "db":
            continue
        if k in _COMPLEX_FIELDS:
            if isinstance(v, (list, tuple)):
                v = complex(v[0], v[1])
            v = complex(v)
            if v.imag == 0:
                v = v.real
        kwargs[k] = v
    if "db" in rec:
        if cls is Gkp:
            kwargs["delta"] = gkp_delta_from_db(float(rec["db"]))
        elif cls in (Pass, CubicPhase):
            kwargs["xi"] = fock.db_to_xi(float(rec["db"]))
        elif cls is SqueezedCoherent:
            kwargs["r"] = fock.db_to_xi(float(rec["db"]))
        else:
            raise InvalidSpecError(f"'db' is not meaningful for {family}")
    spec = cls(**kwargs)
    validate(spec)
    return spec


def _parse_value(key: str, text: str):
    text = text.strip()
    if key in _COMPLEX_FIELDS:
        try:
            v = complex(text.replace("i", "j"))
        except ValueError as exc:
            raise InvalidSpecError(f"bad value for {key}: {text!r}") from exc
        return v.real if v.imag == 0 else v
    if key in ("N", "K", "mu", "L", "n", "n_max", "cutoff"):
        try:
            return int(text)
        except ValueError as exc:
            raise InvalidSpecError(f"bad integer for {key}: {text!r}") from exc
    try:
        return float(text)
    except ValueError as exc:
        raise InvalidSpecError(f"bad number for {key}: {text!r}") from exc


def parse_spec(text: str) -> StateSpec:
    """Parse ``"family=cat N=2 alpha=1 mu=0"`` (commas also separate pairs)."""
    rec = {}
    for token in text.replace(",", " ").split():
        if "=" not in token:
            raise InvalidSpecError(f"expected key=value, got {token!r}")
        k, v = token.split("=", 1)
        rec[k.strip()] = v.strip() if k.strip() == "family" else _parse_value(k.strip(), v)
    return from_record(rec)


def describe(spec: StateSpec) -> str:
    parts = [f"{k}={_fmt(v)}" for k, v in asdict(spec).items()]
    return f"family={spec.family} " + " ".join(parts)
