"""Deterministic health trajectories and the mortality force they induce."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .numerics import QuadratureSpec, gauss_legendre, integrate
from .params import ModelParams


class Phase(Enum):
    PRE_INVESTMENT = "pre"
    POST_INVESTMENT = "post"


@dataclass(frozen=True)
class HealthPhase:
    tag: Phase
    h0: float

    def __post_init__(self):
        if not self.h0 > 0:
            raise ValueError("h0 must be positive")

    def health(self, params: ModelParams, s):
        if self.tag is Phase.PRE_INVESTMENT:
            return health_pre(params, self.h0, s)
        return health_post(params, self.h0, s)


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def health_pre(params: ModelParams, h0, s):
    """Health ``s`` years after ``h0`` without investment: pure exponential decay."""
    return _out(np.asarray(h0, float) * np.exp(-params.delta * np.asarray(s, float)))


def health_post(params: ModelParams, h_at_invest, s):
    """Health ``s`` years after investing with health ``h_at_invest``.

    Decays at rate delta toward the steady state f(I)/delta.
    """
    decay = np.exp(-params.delta * np.asarray(s, float))
    level = params.f_of_I / params.delta
    return _out(np.asarray(h_at_invest, float) * decay + level * (1.0 - decay))


def mortality(params: ModelParams, h):
    """Mortality force ``m0 + m1 * h**(-kappa)``."""
    h = np.asarray(h, float)
    if np.any(h <= 0):
        raise ValueError("health must be positive")
    return _out(params.m0 + params.m1 * h ** (-params.kappa))


def integrated_mortality_pre(params: ModelParams, h0, s):
    """Exact integral of the mortality force over ``[0, s]`` without investment."""
    s = np.asarray(s, float)
    dk = params.delta * params.kappa
    return _out(params.m0 * s + params.m1 * np.asarray(h0, float) ** (-params.kappa) / dk * np.expm1(dk * s))


def integrated_mortality_post(params: ModelParams, h_at_invest: float, s: float,
                              spec: QuadratureSpec | None = None) -> float:
    """Integral of the mortality force over ``[0, s]`` after investing.

    No elementary antiderivative exists; adaptive Simpson with absolute
    tolerance ``1e-10 * (1 + s)`` unless ``spec`` overrides it.
    """
    if s < 0:
        raise ValueError("s must be non-negative")
    if s == 0:
        return 0.0
    spec = spec or QuadratureSpec(abs_tol=1e-10 * (1.0 + s))
    f_level = params.f_of_I / params.delta

    def integrand(u: float) -> float:
        d = np.exp(-params.delta * u)
        return params.m0 + params.m1 * (h_at_invest * d + f_level * (1.0 - d)) ** (-params.kappa)

    return integrate(integrand, 0.0, float(s), spec)


def integrated_mortality_post_gl(params: ModelParams, h_at_invest, s, n: int = 64):
    """Vectorized Gauss-Legendre version of :func:`integrated_mortality_post`."""
    u, w = gauss_legendre(np.zeros_like(np.asarray(s, float)), s, n)
    hu = health_post(params, np.asarray(h_at_invest, float)[..., None], u)
    return _out(np.sum(w * (params.m0 + params.m1 * hu ** (-params.kappa)), axis=-1))
