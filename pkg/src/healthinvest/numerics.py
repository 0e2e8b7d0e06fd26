"""Numerical primitives: normal CDF, quadrature, root finding, scalar minimization."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import optimize, special
from scipy.interpolate import PchipInterpolator


class QuadratureError(RuntimeError):
    """Adaptive quadrature hit its depth cap before meeting the tolerance."""

    def __init__(self, estimate: float, error_bound: float):
        super().__init__(f"quadrature did not converge: estimate={estimate!r}, error bound={error_bound:.3g}")
        self.estimate = estimate
        self.error_bound = error_bound


class BracketError(ValueError):
    """The supplied bracket does not enclose a sign change."""

    def __init__(self, lo: float, hi: float, f_lo: float, f_hi: float, context: str = ""):
        msg = f"no sign change on [{lo!r}, {hi!r}]: f(lo)={f_lo!r}, f(hi)={f_hi!r}"
        if context:
            msg = f"{context}: {msg}"
        super().__init__(msg)
        self.lo, self.hi, self.f_lo, self.f_hi = lo, hi, f_lo, f_hi


class QuadratureMethod(Enum):
    TRAPEZOID = "trapezoid"
    ADAPTIVE_SIMPSON = "adaptive_simpson"


@dataclass(frozen=True)
class QuadratureSpec:
    method: QuadratureMethod = QuadratureMethod.ADAPTIVE_SIMPSON
    abs_tol: float = 1e-10
    max_depth: int = 50

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")
        if self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")


@dataclass(frozen=True)
class BracketSpec:
    lo: float
    hi: float
    tol: float = 1e-10
    max_iter: int = 200

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("bracket requires lo < hi")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


def normal_cdf(x):
    """Standard normal CDF through the complementary error function."""
    out = 0.5 * special.erfc(-np.asarray(x, dtype=float) / math.sqrt(2.0))
    return float(out) if np.ndim(out) == 0 else out


def normal_pdf(x):
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return float(out) if out.ndim == 0 else out


# ---- quadrature -------------------------------------------------------------


def _simpson_adaptive(f, a, fa, m, fm, b, fb, whole, tol, depth):
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    delta = left + right - whole
    if abs(delta) <= 15.0 * tol:
        return left + right + delta / 15.0, abs(delta) / 15.0
    if depth <= 0:
        raise QuadratureError(left + right + delta / 15.0, abs(delta) / 15.0)
    lv, le = _simpson_adaptive(f, a, fa, lm, flm, m, fm, left, tol / 2.0, depth - 1)
    rv, re = _simpson_adaptive(f, m, fm, rm, frm, b, fb, right, tol / 2.0, depth - 1)
    return lv + rv, le + re


def integrate(f: Callable[[float], float], a: float, b: float, spec: QuadratureSpec = QuadratureSpec()) -> float:
    """Integrate a scalar function over ``[a, b]``.

    The adaptive Simpson rule refines until the Richardson error estimate is
    below ``spec.abs_tol``. The trapezoid rule doubles its panel count until
    successive estimates agree to ``spec.abs_tol`` (at most ``2**max_depth``
    panels, capped at 2**22).
    """
    if b < a:
        raise ValueError("integrate requires a <= b")
    if a == b:
        return 0.0
    if spec.method is QuadratureMethod.TRAPEZOID:
        n = 1
        prev = 0.5 * (b - a) * (f(a) + f(b))
        for _ in range(min(spec.max_depth, 22)):
            n *= 2
            xs = a + (b - a) * (np.arange(1, n, 2) / n)
            cur = 0.5 * prev + (b - a) / n * sum(f(float(x)) for x in xs)
            if abs(cur - prev) <= spec.abs_tol:
                return cur
            prev = cur
        raise QuadratureError(cur, abs(cur - prev))
    # Simpson: split into a few panels first so that narrow features are seen.
    edges = np.linspace(a, b, 9)
    total = 0.0
    tol = spec.abs_tol / 8.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        lo, hi = float(lo), float(hi)
        m = 0.5 * (lo + hi)
        flo, fm, fhi = f(lo), f(m), f(hi)
        whole = (hi - lo) / 6.0 * (flo + 4.0 * fm + fhi)
        v, _ = _simpson_adaptive(f, lo, flo, m, fm, hi, fhi, whole, tol, spec.max_depth)
        total += v
    return total


@lru_cache(maxsize=16)
def _leggauss(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(a, b, n: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on ``[a, b]``, broadcast over array limits.

    Returns arrays of shape ``broadcast(a, b).shape + (n,)``.
    """
    x, w = _leggauss(n)
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    half = 0.5 * (b - a)
    return 0.5 * (a + b) + half * x, half * w


def composite_gauss_legendre(a: float, b: float, panels: int, order: int = 16) -> tuple[np.ndarray, np.ndarray]:
    edges = np.linspace(a, b, panels + 1)
    nodes, weights = gauss_legendre(edges[:-1], edges[1:], order)
    return nodes.ravel(), weights.ravel()


# ---- roots and minima -------------------------------------------------------


def find_root(f: Callable[[float], float], spec: BracketSpec, smallest: bool = True) -> float:
    """Bisection on a bracket with a sign change.

    With ``smallest=True`` the iteration keeps ``f(lo) < 0 <= f(hi)`` for an
    increasing ``f`` so that a flat zero stretch resolves to its left end.
    """
    lo, hi = float(spec.lo), float(spec.hi)
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0 and not smallest:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise BracketError(lo, hi, flo, fhi)
    increasing = flo < 0.0
    for _ in range(spec.max_iter):
        if hi - lo <= spec.tol:
            break
        mid = 0.5 * (lo + hi)
        fm = f(mid) if increasing else -f(mid)
        if fm > 0.0 or (smallest and fm == 0.0):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def find_root_brent(f: Callable[[float], float], spec: BracketSpec) -> float:
    """Brent's method behind the same bracket contract as :func:`find_root`."""
    flo, fhi = f(spec.lo), f(spec.hi)
    if flo == 0.0:
        return float(spec.lo)
    if fhi == 0.0:
        return float(spec.hi)
    if np.sign(flo) == np.sign(fhi):
        raise BracketError(spec.lo, spec.hi, flo, fhi)
    return float(optimize.brentq(f, spec.lo, spec.hi, xtol=spec.tol, rtol=4 * np.finfo(float).eps,
                                 maxiter=spec.max_iter))


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def minimize_scalar(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-10) -> tuple[float, float]:
    """Golden-section search for the minimum of a unimodal ``f`` on ``[lo, hi]``."""
    a, b = float(lo), float(hi)
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    if not (np.isfinite(fc) and np.isfinite(fd)):
        raise ValueError("objective is not finite inside the bracket")
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
        if not (np.isfinite(fc) and np.isfinite(fd)):
            raise ValueError("objective became non-finite during the search")
    x = 0.5 * (a + b)
    return x, f(x)


def monotone_interpolator(x, y, extrapolate: bool = False) -> PchipInterpolator:
    """Shape-preserving piecewise cubic through ``(x, y)``."""
    return PchipInterpolator(np.asarray(x, float), np.asarray(y, float), extrapolate=extrapolate)
