"""Characteristic functions, Wigner functions and Wigner log-negativity.

Phase-space points are r = (q, p) with hbar = 1.  The symmetrically ordered
characteristic function is chi(r) = Tr[D(beta) rho] with
beta = (q + i p)/sqrt(2), which is the exponential exp(-i r^T Omega r_hat).
Wigner functions are normalized so that the vacuum is exp(-q^2 - p^2)/pi.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass, field
from typing import Callable, Union

import numba
import numpy as np
from scipy.integrate import trapezoid
from scipy.ndimage import map_coordinates, spline_filter
from scipy.optimize import brentq

from . import statelib
from .errors import BracketError, GuardBandError, InvalidInputError
from .fock import DensityOperator, FockVector, mean_photon_number

DEFAULT_POINTS = 257
MIN_HALF_EXTENT = 6.0
# |chi| level treated as the edge of its support, and the slack added past it
SUPPORT_TOL = 3e-3
# a hard cut in chi rings through the Wigner transform; cut lower for W output
WIGNER_SUPPORT_TOL = 1e-5
SUPPORT_MARGIN = 0.5
# exp(-|beta|^2/2) underflows past ~1400; smaller grids are plenty anyway
MAX_BETA_SQ = 1400.0


@dataclass(frozen=True)
class PhaseGrid:
    """Square grid on [-half_extent, half_extent]^2 with an odd node count."""

    half_extent: float
    points: int = DEFAULT_POINTS

    def __post_init__(self):
        if not self.half_extent > 0:
            raise InvalidInputError("half_extent must be positive")
        if self.points < 3 or self.points % 2 == 0:
            raise InvalidInputError(f"points per axis must be odd and >= 3, got {self.points}")

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.half_extent, self.half_extent, self.points)

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_extent / (self.points - 1)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """(Q, P) arrays indexed [i_q, i_p]."""
        x = self.axis
        return np.meshgrid(x, x, indexing="ij")

    @property
    def resolves(self) -> bool:
        """Spacing <= pi / (2 half_extent): the Fourier pair fits without aliasing."""
        return self.spacing <= math.pi / (2.0 * self.half_extent) + 1e-15

    def to_record(self) -> dict:
        return {"half_extent": self.half_extent, "points": self.points}


def support_radius(state: State, tol: float = SUPPORT_TOL, angles: int = 64, step: float = 0.25) -> float:
    """Radius beyond which |chi| stays below ``tol`` on a fan of probe rays.

    chi(-r) = chi(r)* so rays over half a turn cover the plane.
    """
    r_max = math.sqrt(2.0 * MAX_BETA_SQ) - step
    radii = np.arange(0.0, r_max, step)
    theta = np.linspace(0.0, math.pi, angles, endpoint=False)
    rr, tt = np.meshgrid(radii, theta, indexing="ij")
    mag = np.abs(char_values(state, rr * np.cos(tt), rr * np.sin(tt))).max(axis=1)
    above = np.nonzero(mag > tol)[0]
    return float(radii[above[-1]] + step) if above.size else 0.0


def default_grid(
    *specs, dim: int = statelib.DEFAULT_DIM, points: int | None = None, tol: float = SUPPORT_TOL
) -> PhaseGrid:
    """Grid covering the characteristic-function support of every spec given.

    The half extent is the probed support radius (|chi| > ``tol``) plus a
    margin, and the node count keeps the grid resolved for the Wigner
    transform.  Pass ``tol=WIGNER_SUPPORT_TOL`` when W itself is wanted.
    """
    extent = MIN_HALF_EXTENT
    for spec in specs:
        state = spec if isinstance(spec, (FockVector, DensityOperator)) else statelib.build_state(spec, dim)
        extent = max(extent, support_radius(state, tol) + SUPPORT_MARGIN)
    extent = math.ceil(extent * 4.0) / 4.0
    if points is None:
        need = int(math.ceil(4.0 * extent ** 2 / math.pi)) + 1
        points = max(DEFAULT_POINTS, need + (need + 1) % 2)
    return PhaseGrid(extent, points)


# ---------------------------------------------------------------- kernels


@numba.njit(cache=True)
def _radial_sums(c_lo, c_up, xs):
    """Diagonal sums of normalized Laguerre functions for each |beta|^2 in ``xs``.

    f_n^(k)(x) = sqrt(n!/(n+k)!) x^(k/2) e^(-x/2) L_n^(k)(x) is generated by the
    forward three-term recurrence in n, started in log space.
    A[u, k] = sum_n c_lo[k, n] f_n^(k)(x_u), likewise B with c_up.
    """
    d = c_lo.shape[0]
    nx = xs.shape[0]
    A = np.zeros((nx, d), np.complex128)
    B = np.zeros((nx, d), np.complex128)
    lgam = np.empty(d)
    for k in range(d):
        lgam[k] = math.lgamma(k + 1.0)
    for u in range(nx):
        x = xs[u]
        if x == 0.0:
            s = 0j
            for n in range(d):
                s += c_lo[0, n]
            A[u, 0] = s
            continue
        lx = math.log(x)
        for k in range(d):
            nmax = d - k
            f0 = math.exp(-0.5 * x + 0.5 * k * lx - 0.5 * lgam[k])
            sa = c_lo[k, 0] * f0
            sb = c_up[k, 0] * f0
            if nmax > 1:
                f1 = (1.0 + k - x) * f0 / math.sqrt(k + 1.0)
                sa += c_lo[k, 1] * f1
                sb += c_up[k, 1] * f1
                for n in range(1, nmax - 1):
                    f2 = ((2.0 * n + 1.0 + k - x) * f1 - math.sqrt(n * (n + k + 0.0)) * f0) / math.sqrt(
                        (n + 1.0) * (n + k + 1.0)
                    )
                    sa += c_lo[k, n + 1] * f2
                    sb += c_up[k, n + 1] * f2
                    f0 = f1
                    f1 = f2
            A[u, k] = sa
            B[u, k] = sb
    return A, B


@numba.njit(cache=True)
def _angular_sum(A, B, inverse, zs):
    # chi = sum_k A_k z^k + sum_{k>=1} B_k (-z*)^k, z = beta/|beta|
    npts = zs.shape[0]
    d = A.shape[1]
    out = np.empty(npts, np.complex128)
    for i in range(npts):
        u = inverse[i]
        z = zs[i]
        w = -np.conj(z)
        acc = A[u, 0]
        zk = 1.0 + 0j
        wk = 1.0 + 0j
        for k in range(1, d):
            zk *= z
            wk *= w
            acc += A[u, k] * zk + B[u, k] * wk
        out[i] = acc
    return out


def _diagonal_coefficients(rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = rho.shape[0]
    c_lo = np.zeros((d, d), dtype=np.complex128)
    c_up = np.zeros((d, d), dtype=np.complex128)
    for k in range(d):
        c_lo[k, : d - k] = np.diagonal(rho, offset=k)
        c_up[k, : d - k] = np.diagonal(rho, offset=-k)
    return c_lo, c_up


State = Union[FockVector, DensityOperator]


def _density_support(state: State) -> np.ndarray:
    """Density matrix restricted to levels with non-negligible weight."""
    if isinstance(state, FockVector):
        a = state.amps
        big = np.nonzero(np.abs(a) > 1e-17 * np.abs(a).max())[0]
        a = a[: big[-1] + 1]
        return np.outer(a, a.conj())
    rho = state.entries
    diag = np.abs(np.diag(rho))
    big = np.nonzero(diag > 1e-34 * diag.max())[0]
    k = big[-1] + 1
    return np.asarray(rho[:k, :k])


def char_values(state: State, q, p) -> np.ndarray:
    """chi at arbitrary phase-space points (exact displacement matrix elements)."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    betas = ((q + 1j * p) / math.sqrt(2.0)).ravel()
    if betas.size and np.max(np.abs(betas)) ** 2 > MAX_BETA_SQ:
        raise GuardBandError(
            f"displacement |beta|^2 = {np.max(np.abs(betas)) ** 2:.0f} beyond the guard band {MAX_BETA_SQ:.0f}"
        )
    c_lo, c_up = _diagonal_coefficients(_density_support(state))
    x = np.abs(betas) ** 2
    xs, inverse = np.unique(x, return_inverse=True)
    A, B = _radial_sums(c_lo, c_up, xs)
    mag = np.sqrt(x)
    zs = np.where(mag > 0, betas / np.where(mag > 0, mag, 1.0), 1.0 + 0j)
    return _angular_sum(A, B, inverse.ravel().astype(np.int64), zs).reshape(q.shape)


@dataclass(frozen=True)
class CharFn:
    grid: PhaseGrid
    values: np.ndarray = field(repr=False)

    def check(self, tol: float = 1e-8) -> None:
        v = self.values
        c = self.grid.points // 2
        if abs(v[c, c] - 1.0) > tol:
            raise InvalidInputError(f"chi(0) = {v[c, c]} is not 1")
        if np.abs(v - np.conj(v[::-1, ::-1])).max() > tol:
            raise InvalidInputError("chi violates chi(-r) = chi(r)*")


@dataclass(frozen=True)
class WignerFn:
    grid: PhaseGrid
    values: np.ndarray = field(repr=False)
    aliasing: bool = False
    imag_residue: float = 0.0

    def integral(self) -> float:
        x = self.grid.axis
        return float(trapezoid(trapezoid(self.values, x, axis=1), x))


def char_fn(state: State, grid: PhaseGrid) -> CharFn:
    """chi_rho sampled on ``grid``; the Hermitian half is mirrored."""
    Q, P = grid.mesh()
    flat_q, flat_p = Q.ravel(), P.ravel()
    half = flat_q.size // 2 + 1
    vals = np.empty(flat_q.size, dtype=np.complex128)
    vals[:half] = char_values(state, flat_q[:half], flat_p[:half])
    vals[half:] = np.conj(vals[: flat_q.size - half][::-1])
    return CharFn(grid, vals.reshape(Q.shape))


def _fourier_kernel(grid: PhaseGrid) -> np.ndarray:
    x = grid.axis
    return np.exp(1j * np.outer(x, x))


def wigner_from_char(cf: CharFn) -> WignerFn:
    """W(q, p) = (2 pi)^-2 int chi(q', p') exp(-i (p' q - q' p)) dq' dp'."""
    grid = cf.grid
    E = _fourier_kernel(grid)
    h = grid.spacing
    w = (h * h / (4.0 * math.pi ** 2)) * (E.conj() @ cf.values.T @ E)
    residue = float(np.abs(w.imag).max())
    aliasing = not grid.resolves
    if aliasing:
        warnings.warn("grid spacing exceeds pi/(2 half_extent); Wigner function may alias", stacklevel=2)
    return WignerFn(grid, np.ascontiguousarray(w.real), aliasing, residue)


def char_from_wigner(wf: WignerFn) -> CharFn:
    """Inverse of :func:`wigner_from_char` on the same grid."""
    grid = wf.grid
    E = _fourier_kernel(grid)
    h = grid.spacing
    chi = (h * h) * (E.conj() @ wf.values.T.astype(np.complex128) @ E)
    return CharFn(grid, chi)


def wigner(state: State, grid: PhaseGrid) -> WignerFn:
    return wigner_from_char(char_fn(state, grid))


def wigner_log_negativity(w: WignerFn) -> float:
    """log of the integrated |W| (natural log)."""
    x = w.grid.axis
    total = trapezoid(trapezoid(np.abs(w.values), x, axis=1), x)
    return float(math.log(total))


def radial_cut(w: WignerFn, radius: float, samples: int = 360) -> tuple[np.ndarray, np.ndarray]:
    """W along the circle |r| = radius, by cubic interpolation."""
    theta = np.linspace(0.0, 2 * math.pi, samples, endpoint=False)
    grid = w.grid
    idx_q = (radius * np.cos(theta) + grid.half_extent) / grid.spacing
    idx_p = (radius * np.sin(theta) + grid.half_extent) / grid.spacing
    vals = map_coordinates(w.values, [idx_q, idx_p], order=3, mode="constant", cval=0.0)
    return theta, vals


# ---------------------------------------------------------------- evaluators

CharEvaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]


class ExactChar:
    """Pointwise chi of a Fock-basis state, exact at any point."""

    def __init__(self, state: State):
        self.state = state

    def __call__(self, q, p):
        return char_values(self.state, q, p)


class GridChar:
    """Pointwise chi by cubic-spline interpolation of a sampled CharFn.

    Points outside the grid evaluate to zero, so the grid has to cover the
    support of chi.  Exact on grid nodes.
    """

    def __init__(self, cf: CharFn, order: int = 3):
        self.cf = cf
        self.order = order
        self._re = spline_filter(cf.values.real, order=order, mode="constant")
        self._im = spline_filter(cf.values.imag, order=order, mode="constant")

    def __call__(self, q, p):
        g = self.cf.grid
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        coords = [((q + g.half_extent) / g.spacing).ravel(), ((p + g.half_extent) / g.spacing).ravel()]
        kw = dict(order=self.order, mode="constant", cval=0.0, prefilter=False)
        re = map_coordinates(self._re, coords, **kw)
        im = map_coordinates(self._im, coords, **kw)
        return (re + 1j * im).reshape(q.shape)


# ---------------------------------------------------------------- negativity matching

NEGATIVITY_GRID = PhaseGrid(10.0, 301)


def state_log_negativity(spec, grid: PhaseGrid = NEGATIVITY_GRID, dim: int = statelib.DEFAULT_DIM) -> float:
    return wigner_log_negativity(wigner(statelib.build_state(spec, dim), grid))


def match_triplicity(
    c: float,
    xi: float,
    bracket=(0.005, 0.25),
    grid: PhaseGrid = NEGATIVITY_GRID,
    dim: int = statelib.DEFAULT_DIM,
    cutoff: int = statelib.TRISQUEEZED_CUTOFF,
    xtol: float = 1e-5,
) -> float:
    """Real triplicity t whose trisqueezed state has the WLN of cubic(c, xi)."""
    lo, hi = map(float, bracket)
    if not hi > lo:
        raise BracketError(f"degenerate bracket {bracket}")
    target = state_log_negativity(statelib.CubicPhase(c, xi), grid, dim)

    def gap(t):
        return state_log_negativity(statelib.Trisqueezed(t, cutoff), grid, dim) - target

    g_lo, g_hi = gap(lo), gap(hi)
    if g_lo * g_hi > 0:
        raise BracketError(f"no WLN crossing on {bracket} for c={c}, xi={xi}")
    return float(brentq(gap, lo, hi, xtol=xtol))


# ---------------------------------------------------------------- export

_BIN_MAGIC = b"GCGRID1\0"


def to_csv(fn: Union[CharFn, WignerFn], path, header: str = "") -> None:
    """Three (or four, for complex chi) columns: q, p, value[, imag]."""
    Q, P = fn.grid.mesh()
    vals = fn.values
    if np.iscomplexobj(vals):
        cols = np.column_stack([Q.ravel(), P.ravel(), vals.real.ravel(), vals.imag.ravel()])
        names = "q,p,re,im"
    else:
        cols = np.column_stack([Q.ravel(), P.ravel(), vals.ravel()])
        names = "q,p,value"
    lines = [f"# {header}"] if header else []
    with open(path, "w") as fh:
        for line in lines:
            fh.write(line + "\n")
        fh.write(names + "\n")
        np.savetxt(fh, cols, delimiter=",", fmt="%.17g")


def to_binary(fn: Union[CharFn, WignerFn], path) -> None:
    """Header: magic, half_extent (f64), points (u32), ncomp (u32); payload row-major f64."""
    vals = fn.values
    comps = [vals.real, vals.imag] if np.iscomplexobj(vals) else [vals]
    with open(path, "wb") as fh:
        fh.write(_BIN_MAGIC)
        fh.write(struct.pack("<dII", fn.grid.half_extent, fn.grid.points, len(comps)))
        for c in comps:
            fh.write(np.ascontiguousarray(c, dtype="<f8").tobytes())


def from_binary(path) -> Union[CharFn, WignerFn]:
    with open(path, "rb") as fh:
        if fh.read(8) != _BIN_MAGIC:
            raise InvalidInputError(f"{path}: not a grid file")
        extent, points, ncomp = struct.unpack("<dII", fh.read(16))
        raw = np.frombuffer(fh.read(), dtype="<f8").reshape(ncomp, points, points)
    grid = PhaseGrid(extent, points)
    if ncomp == 2:
        return CharFn(grid, raw[0] + 1j * raw[1])
    return WignerFn(grid, raw[0].copy())
