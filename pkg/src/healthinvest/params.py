"""Model constants for the consumption/portfolio problem with a health investment option.

Every rate is annualized and time is measured in years.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

logger = logging.getLogger(__name__)


class ParameterError(ValueError):
    """Raised when a parameter set violates a model constraint."""


@dataclass(frozen=True)
class ModelParams:
    """Market, preference, mortality and health-production constants.

    Defaults are the baseline calibration: a healthy/sick agent facing a
    Merton market, Cobb-Douglas utility over consumption and health, and a
    mortality force ``m0 + m1 * h**(-kappa)``.
    """

    r: float = 0.048
    mu: float = 0.108
    sigma: float = 0.20
    rho: float = 0.05
    m0: float = 0.0237
    m1: float = 0.0017
    kappa: float = 1.80
    delta: float = 0.0055
    alpha: float = 0.2258
    beta: float = 0.19
    invest_amount: float = 2.0
    horizon: float = 20.0

    # ---- derived constants -------------------------------------------------

    @property
    def theta(self) -> float:
        """Market price of risk (mu - r) / sigma."""
        return (self.mu - self.r) / self.sigma

    @property
    def f_of_I(self) -> float:
        """Health production rate I**beta bought by the investment."""
        return self.invest_amount ** self.beta

    @property
    def p(self) -> float:
        """Exponent alpha / (alpha - 1) of the dual utility (negative)."""
        return self.alpha / (self.alpha - 1.0)

    @property
    def u_hat_coef(self) -> float:
        """(1 - alpha) * alpha**(alpha / (1 - alpha))."""
        a = self.alpha
        return (1.0 - a) * a ** (a / (1.0 - a))

    def g_profile(self) -> Callable[[float], float]:
        return lambda t: g_value(self, t)

    def replace(self, **changes: float) -> "ModelParams":
        return validate(replace(self, **changes))

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class DerivedParams:
    theta: float
    f_of_I: float
    g_profile: Callable[[float], float]


def derived(params: ModelParams) -> DerivedParams:
    return DerivedParams(params.theta, params.f_of_I, params.g_profile())


def validate(params: ModelParams) -> ModelParams:
    """Check every model constraint and return ``params`` unchanged.

    Raises
    ------
    ParameterError
        Naming the first violated constraint.
    """
    for fld in fields(params):
        v = getattr(params, fld.name)
        if not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ParameterError(f"{fld.name} must be a finite number, got {v!r}")
    positive = ("sigma", "delta", "kappa", "invest_amount", "horizon", "r")
    for name in positive:
        if getattr(params, name) <= 0:
            raise ParameterError(f"{name} must be positive")
    for name in ("alpha", "beta"):
        v = getattr(params, name)
        if not 0.0 < v < 1.0:
            raise ParameterError(f"{name} must lie in (0,1)")
    for name in ("m0", "m1"):
        if getattr(params, name) < 0:
            raise ParameterError(f"{name} must be non-negative")
    return params


def g_value(params: ModelParams, t):
    """Present value at time ``t`` of the investment payments up to the horizon.

    ``(I / r) * (1 - exp(-r (T - t)))``; accepts scalars or arrays.
    """
    t_arr = np.asarray(t, dtype=float)
    T = params.horizon
    if np.any(t_arr < -1e-12) or np.any(t_arr > T + 1e-12):
        raise ValueError(f"t must lie in [0, {T}]")
    out = params.invest_amount / params.r * -np.expm1(-params.r * (T - t_arr))
    return float(out) if out.ndim == 0 else out


def g_rate(params: ModelParams, t):
    """Time derivative of :func:`g_value` (equals ``-I exp(-r (T - t))``)."""
    t_arr = np.asarray(t, dtype=float)
    out = -params.invest_amount * np.exp(-params.r * (params.horizon - t_arr))
    return float(out) if out.ndim == 0 else out


_FIELD_NAMES = {f.name for f in fields(ModelParams)}


def params_from_mapping(data: Mapping[str, Any]) -> ModelParams:
    """Build parameters from flat keys; missing keys take baseline defaults.

    Unknown keys raise :class:`ParameterError`.
    """
    unknown = sorted(set(data) - _FIELD_NAMES)
    if unknown:
        raise ParameterError(f"unknown parameter keys: {', '.join(unknown)}")
    defaults = ModelParams()
    for name in sorted(_FIELD_NAMES - set(data)):
        logger.info("parameter %s not given, using default %s", name, getattr(defaults, name))
    kwargs = {k: float(v) for k, v in data.items()}
    return validate(replace(defaults, **kwargs))


def load_params(path: str | Path) -> ModelParams:
    """Read a flat JSON object of parameters."""
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ParameterError("parameter file must hold a JSON object")
    return params_from_mapping(data)


TABLE1 = validate(ModelParams())
