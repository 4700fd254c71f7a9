"""Single-mode Gaussian CPTP maps acting on characteristic functions.

A channel (X, Y, l) sends mean vectors m -> X m + l and covariance matrices
V -> X V X^T + Y/2 (vacuum covariance I/2).  On characteristic functions

    chi_out(r) = exp(-1/4 (Omega r)^T Y (Omega r) + i l^T Omega r) chi_in(Omega^T X^T Omega r).

Complete positivity requires Y +- i (Omega - X Omega X^T) >= 0.
"""

from __future__ import annotations

import functools
import math
import threading
from dataclasses import dataclass, field

import numpy as np

from . import statelib
from .fock import db_to_xi
from .errors import ConventionError, InvalidInputError, RejectedChannelError
from .phasespace import (
    CharEvaluator,
    CharFn,
    GridChar,
    PhaseGrid,
    char_fn,
    default_grid,
)

OMEGA = np.array([[0.0, 1.0], [-1.0, 0.0]])
CP_TOL = 1e-9
SYMMETRY_TOL = 1e-12
# |chi_target| below this contributes nothing measurable to the overlap sum
SUPPORT_CUT = 1e-12
# overlaps may leave [0, 1] by this much through quadrature and spline error
OVERLAP_SLACK = 1e-4


def _as_matrix(a, name: str) -> np.ndarray:
    m = np.array(a, dtype=float)
    if m.shape != (2, 2):
        raise InvalidInputError(f"{name} must be 2x2, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return m


def _check_symmetric(Y: np.ndarray) -> None:
    if abs(Y[0, 1] - Y[1, 0]) > SYMMETRY_TOL:
        raise InvalidInputError(f"Y is not symmetric: {Y[0, 1]} vs {Y[1, 0]}")


@dataclass(frozen=True)
class GaussianChannel:
    X: np.ndarray
    Y: np.ndarray
    l: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        X = _as_matrix(self.X, "X")
        Y = _as_matrix(self.Y, "Y")
        _check_symmetric(Y)
        l = np.array(self.l, dtype=float).ravel()
        if l.shape != (2,) or not np.all(np.isfinite(l)):
            raise InvalidInputError(f"l must be a finite 2-vector, got {self.l!r}")
        for name, arr in (("X", X), ("Y", Y), ("l", l)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def identity(cls) -> "GaussianChannel":
        return cls(np.eye(2), np.zeros((2, 2)), np.zeros(2))

    @classmethod
    def squeeze(cls, big_xi: float) -> "GaussianChannel":
        """The unitary S(big_xi) as a channel: X = diag(e^-big_xi, e^big_xi)."""
        return cls(np.diag([math.exp(-big_xi), math.exp(big_xi)]), np.zeros((2, 2)), np.zeros(2))

    @property
    def warp(self) -> np.ndarray:
        """Omega^T X^T Omega, the matrix applied to r before sampling chi_in."""
        return OMEGA.T @ self.X.T @ OMEGA

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.X, np.eye(2)) and not self.Y.any() and not self.l.any())

    def then(self, other: "GaussianChannel") -> "GaussianChannel":
        """Channel equal to applying ``self`` first and ``other`` second."""
        X2 = other.X
        return GaussianChannel(X2 @ self.X, X2 @ self.Y @ X2.T + other.Y, X2 @ self.l + other.l)

    def to_record(self) -> dict:
        X, Y, l = self.X, self.Y, self.l
        return {
            "x00": float(X[0, 0]), "x01": float(X[0, 1]), "x10": float(X[1, 0]), "x11": float(X[1, 1]),
            "y00": float(Y[0, 0]), "y01": float(Y[0, 1]), "y11": float(Y[1, 1]),
            "l0": float(l[0]), "l1": float(l[1]),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "GaussianChannel":
        try:
            X = [[rec["x00"], rec["x01"]], [rec["x10"], rec["x11"]]]
            Y = [[rec["y00"], rec["y01"]], [rec["y01"], rec["y11"]]]
            l = [rec["l0"], rec["l1"]]
        except KeyError as exc:
            raise InvalidInputError(f"channel record lacks {exc}") from None
        return cls(X, Y, l)


# ---------------------------------------------------------------- complete positivity


@dataclass(frozen=True)
class CpReport:
    feasible: bool
    min_eig_plus: float
    min_eig_minus: float
    det_slack: float

    def __bool__(self) -> bool:
        return self.feasible


def is_cp(X, Y, tol: float = CP_TOL) -> CpReport:
    """Eigenvalue test of Y +- i(Omega - X Omega X^T) >= -tol.

    ``det_slack`` is det Y - (1 - det X)^2, the scalar form of the same test.
    """
    X = _as_matrix(X, "X")
    Y = _as_matrix(Y, "Y")
    _check_symmetric(Y)
    Ys = 0.5 * (Y + Y.T)
    sigma = OMEGA - X @ OMEGA @ X.T
    lo_p = float(np.linalg.eigvalsh(Ys + 1j * sigma)[0])
    lo_m = float(np.linalg.eigvalsh(Ys - 1j * sigma)[0])
    slack = float(np.linalg.det(Ys) - (1.0 - np.linalg.det(X)) ** 2)
    return CpReport(lo_p >= -tol and lo_m >= -tol, lo_p, lo_m, slack)


def is_cp_det_form(X, Y, tol: float = CP_TOL) -> bool:
    """Y >= 0 and det Y >= (1 - det X)^2, within ``tol``."""
    X = _as_matrix(X, "X")
    Y = _as_matrix(Y, "Y")
    _check_symmetric(Y)
    Ys = 0.5 * (Y + Y.T)
    psd = np.linalg.eigvalsh(Ys)[0] >= -tol
    return bool(psd and np.linalg.det(Ys) >= (1.0 - np.linalg.det(X)) ** 2 - tol)


def repair(X, Y_raw) -> np.ndarray:
    """Smallest isotropic lift of clip(Y_raw) that makes (X, Y) CP.

    Negative eigenvalues of Y_raw are clipped to 0, then s*I is added with the
    least s >= 0 such that det(Y + s I) >= (1 - det X)^2.
    """
    X = _as_matrix(X, "X")
    Y = _as_matrix(Y_raw, "Y")
    Y = 0.5 * (Y + Y.T)
    lam, vec = np.linalg.eigh(Y)
    lam = np.clip(lam, 0.0, None)
    need = (1.0 - np.linalg.det(X)) ** 2
    if lam[0] * lam[1] < need:
        # (l1 + s)(l2 + s) = need, positive root
        b = lam[0] + lam[1]
        s = 0.5 * (-b + math.sqrt((lam[0] - lam[1]) ** 2 + 4.0 * need))
        lam = lam + max(s, 0.0)
        # round-off can leave the product a hair short
        while lam[0] * lam[1] < need:
            lam = lam + 1e-15 * max(1.0, lam[1])
    return (vec * lam) @ vec.T


# ---------------------------------------------------------------- action on chi


class ChannelledChar:
    """chi of Phi(rho), evaluated lazily from a pointwise chi of rho."""

    def __init__(self, inner: CharEvaluator, ch: GaussianChannel):
        self.inner = inner
        self.ch = ch

    def prefactor(self, q, p) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        # Omega r = (p, -q)
        a, b = p, -q
        Y, l = self.ch.Y, self.ch.l
        quad = Y[0, 0] * a * a + 2.0 * Y[0, 1] * a * b + Y[1, 1] * b * b
        return np.exp(-0.25 * quad + 1j * (l[0] * a + l[1] * b))

    def __call__(self, q, p):
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        M = self.ch.warp
        wq = M[0, 0] * q + M[0, 1] * p
        wp = M[1, 0] * q + M[1, 1] * p
        return self.prefactor(q, p) * self.inner(wq, wp)


def apply_channel(cf_in: CharEvaluator, ch: GaussianChannel, tol: float = CP_TOL) -> ChannelledChar:
    report = is_cp(ch.X, ch.Y, tol)
    if not report:
        raise RejectedChannelError(
            f"channel is not completely positive (min eigenvalues {report.min_eig_plus:.3g}, "
            f"{report.min_eig_minus:.3g}; det slack {report.det_slack:.3g})"
        )
    return ChannelledChar(cf_in, ch)


# ---------------------------------------------------------------- channel families

# log-eigenvalue range for Y; the lower end maps to an exactly zero eigenvalue
Y_LOG_BOUNDS = (-12.0, 4.0)
X_BOUNDS = (-8.0, 8.0)
L_BOUNDS = (-4.0, 4.0)
SQUEEZE_BOUNDS = (-2.5, 2.5)
SHEAR_BOUNDS = (-4.0, 4.0)


def _rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class ChannelFamily:
    """A parameterized set of CP channels searched by the optimizer."""

    name: str
    param_names: tuple
    bounds: tuple
    identity_params: tuple

    @property
    def size(self) -> int:
        return len(self.param_names)

    def channel(self, params) -> GaussianChannel:
        return _BUILDERS[self.name](np.asarray(params, dtype=float))

    def params_for_noiseless(self, ch: GaussianChannel) -> tuple:
        """Full-family parameters of a channel with Y = 0 (used for warm starts)."""
        if self.name != "full_cptp" or ch.Y.any():
            raise InvalidInputError("only noiseless channels embed into full_cptp parameters")
        floor = Y_LOG_BOUNDS[0]
        return tuple(float(v) for v in ch.X.ravel()) + (floor, floor, 0.0) + tuple(float(v) for v in ch.l)


def _full_cptp(v: np.ndarray) -> GaussianChannel:
    X = v[0:4].reshape(2, 2)
    floor = math.exp(Y_LOG_BOUNDS[0])
    lam = np.exp(v[4:6]) - floor
    R = _rotation(v[6])
    Y = repair(X, (R * lam) @ R.T)
    return GaussianChannel(X, 0.5 * (Y + Y.T), v[7:9])


def _symplectic_displacement(v: np.ndarray) -> GaussianChannel:
    # Iwasawa form: rotation * diagonal squeeze * shear, det X = 1
    theta, a, shear = v[0:3]
    X = _rotation(theta) @ np.diag([math.exp(-a), math.exp(a)]) @ np.array([[1.0, shear], [0.0, 1.0]])
    return GaussianChannel(X, np.zeros((2, 2)), v[3:5])


def _squeeze_only(v: np.ndarray) -> GaussianChannel:
    return GaussianChannel.squeeze(float(v[0]))


_BUILDERS = {
    "full_cptp": _full_cptp,
    "symplectic_displacement": _symplectic_displacement,
    "squeeze_only": _squeeze_only,
}

FULL_CPTP = ChannelFamily(
    "full_cptp",
    ("x00", "x01", "x10", "x11", "ylog0", "ylog1", "yangle", "l0", "l1"),
    (X_BOUNDS,) * 4 + (Y_LOG_BOUNDS,) * 2 + ((0.0, math.pi),) + (L_BOUNDS,) * 2,
    (1.0, 0.0, 0.0, 1.0, Y_LOG_BOUNDS[0], Y_LOG_BOUNDS[0], 0.0, 0.0, 0.0),
)
SYMPLECTIC_DISPLACEMENT = ChannelFamily(
    "symplectic_displacement",
    ("theta", "squeeze", "shear", "l0", "l1"),
    ((-math.pi, math.pi), SQUEEZE_BOUNDS, SHEAR_BOUNDS, L_BOUNDS, L_BOUNDS),
    (0.0, 0.0, 0.0, 0.0, 0.0),
)
SQUEEZE_ONLY = ChannelFamily("squeeze_only", ("Xi",), (SQUEEZE_BOUNDS,), (0.0,))

CHANNEL_FAMILIES = {f.name: f for f in (FULL_CPTP, SYMPLECTIC_DISPLACEMENT, SQUEEZE_ONLY)}


def get_family(name: str) -> ChannelFamily:
    key = name.strip().lower().replace("-", "_")
    if key not in CHANNEL_FAMILIES:
        raise InvalidInputError(f"unknown channel family {name!r}; choose from {sorted(CHANNEL_FAMILIES)}")
    return CHANNEL_FAMILIES[key]


# ---------------------------------------------------------------- fidelity


CALIBRATION_GRID = PhaseGrid(8.0, 257)
CALIBRATION_STATES = (
    statelib.FockBasis(0),
    statelib.CatCode(N=1, alpha=2.0, mu=0),
    statelib.BinomialCode(N=2, K=2, mu=0),
    statelib.CubicPhase(c=0.1, xi=-db_to_xi(5.0)),
    statelib.Trisqueezed(t=0.1),
)
CALIBRATION_WARN = 1e-4
CALIBRATION_ABORT = 1e-3

_calibration_lock = threading.Lock()
_kappa: float | None = None
_calibration_report: dict | None = None


def _raw_overlap(chi_a: np.ndarray, chi_b: np.ndarray, grid: PhaseGrid) -> complex:
    """h^2 sum chi_a(r) chi_b(-r) on a symmetric grid."""
    h = grid.spacing
    return complex(np.sum(chi_a * chi_b[::-1, ::-1]) * h * h)


def calibrate(force: bool = False) -> float:
    """Fix the overlap prefactor on the vacuum and cross-check it.

    kappa is chosen so that the vacuum has unit self-overlap.  Each cross-check
    state must then give unit self-overlap to CALIBRATION_WARN (recorded) and
    to CALIBRATION_ABORT (otherwise ConventionError).
    """
    global _kappa, _calibration_report
    with _calibration_lock:
        if _kappa is not None and not force:
            return _kappa
        vac = char_fn(statelib.build_state(statelib.FockBasis(0)), CALIBRATION_GRID).values
        kappa = 1.0 / _raw_overlap(vac, vac, CALIBRATION_GRID).real
        checks = {}
        for spec in CALIBRATION_STATES:
            state = statelib.build_state(spec)
            grid = default_grid(spec)
            chi = char_fn(state, grid).values
            checks[statelib.describe(spec)] = kappa * _raw_overlap(chi, chi, grid).real
        worst = max(abs(v - 1.0) for v in checks.values())
        if worst > CALIBRATION_ABORT:
            raise ConventionError(
                f"overlap prefactor {kappa:.8g} fixed on the vacuum fails on other states: {checks}"
            )
        _kappa = kappa
        _calibration_report = {"kappa": kappa, "self_overlaps": checks, "consistent": worst <= CALIBRATION_WARN}
        return kappa


def calibration_report() -> dict:
    calibrate()
    return dict(_calibration_report)


@functools.lru_cache(maxsize=64)
def _sampled(spec, dim: int, grid: PhaseGrid) -> CharFn:
    return char_fn(statelib.build_state(spec, dim), grid)


@functools.lru_cache(maxsize=32)
def _spline(spec, dim: int, grid: PhaseGrid) -> GridChar:
    return GridChar(_sampled(spec, dim, grid))


@functools.lru_cache(maxsize=64)
def _target_support(spec, dim: int, grid: PhaseGrid):
    chi_t = _sampled(spec, dim, grid).values
    flipped = chi_t[::-1, ::-1]
    mask = np.abs(flipped) > SUPPORT_CUT * np.abs(flipped).max()
    Q, P = grid.mesh()
    return Q[mask], P[mask], flipped[mask]


@functools.lru_cache(maxsize=256)
def fidelity_grid(input_spec, target_spec, dim: int = statelib.DEFAULT_DIM) -> PhaseGrid:
    """Integration grid covering both characteristic functions."""
    return default_grid(input_spec, target_spec, dim=dim)


def fidelity_after_map(
    input_spec,
    ch: GaussianChannel,
    target_spec,
    grid: PhaseGrid | None = None,
    dim: int = statelib.DEFAULT_DIM,
) -> float:
    """Overlap Tr[Phi(rho_in) rho_target] for a pure target, clamped to [0, 1].

    The integrand kappa chi_out(r) chi_target(-r) is summed over ``grid``.  With
    the identity channel the grid nodes are used directly; otherwise chi_in is
    sampled at the warped points through a cubic spline of its grid values.
    """
    kappa = calibrate()
    if grid is None:
        grid = fidelity_grid(input_spec, target_spec, dim)
    h2 = grid.spacing ** 2
    if ch.is_identity():
        chi_in = _sampled(input_spec, dim, grid).values
        chi_t = _sampled(target_spec, dim, grid).values
        value = kappa * _raw_overlap(chi_in, chi_t, grid).real
    else:
        out = apply_channel(_spline(input_spec, dim, grid), ch)
        q, p, chi_t_neg = _target_support(target_spec, dim, grid)
        value = kappa * h2 * float(np.sum(out(q, p) * chi_t_neg).real)
    if value < -OVERLAP_SLACK or value > 1.0 + OVERLAP_SLACK:
        raise ConventionError(f"overlap {value} outside [0, 1] beyond quadrature tolerance")
    return float(min(max(value, 0.0), 1.0))
