"""
Heat kernel g(t, x) = (2 pi t)^(-d/2) exp(-|x|^2 / (2t)) 1{t > 0} and the
closed-form kernel integrals used by the chaos expansion and tail formulas.

All functions are pure. Arrays are accepted wherever a scalar is, with
points carried on the last axis.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from app.core.exceptions import DomainError


@dataclass(frozen=True)
class KernelParams:
    d: int
    t: float

    def __post_init__(self) -> None:
        if int(self.d) != self.d or self.d < 1:
            raise DomainError("Spatial dimension d must be an integer >= 1")
        if not (math.isfinite(self.t) and self.t > 0):
            raise DomainError("Time t must be finite and positive")


def squared_norm(x) -> np.ndarray:
    """
    |x|^2 over the last (coordinate) axis; a scalar is read as |x|.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return x * x
    return np.sum(x * x, axis=-1)


def log_heat_kernel_r2(t, r2, d: int):
    """
    log g at time lag ``t`` and squared distance ``r2``; -inf where t <= 0.
    """
    t = np.asarray(t, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    positive = t > 0
    t_safe = np.where(positive, t, 1.0)
    value = -0.5 * d * np.log(2.0 * math.pi * t_safe) - r2 / (2.0 * t_safe)
    value = np.where(positive, value, -np.inf)
    return value if value.ndim else float(value)


def heat_kernel_r2(t, r2, d: int):
    value = np.exp(log_heat_kernel_r2(t, r2, d))
    return value if np.ndim(value) else float(value)


def log_heat_kernel(t, x, d: int):
    """
    log g(t, x); -inf where t <= 0.
    """
    return log_heat_kernel_r2(t, squared_norm(x), d)


def heat_kernel(t, x, d: int):
    """
    g(t, x) evaluated in log-space; exactly 0 for t <= 0.

    Array arguments carry coordinates on the last axis (length d).
    """
    return heat_kernel_r2(t, squared_norm(x), d)


def theta(p: float, d: int) -> float:
    """theta_p = 1 - (d/2)(p - 1); may be negative."""
    return 1.0 - 0.5 * d * (p - 1.0)


def kernel_power_space_integral(p: float, s: float, d: int) -> float:
    """
    Integral over R^d of g(s, y)^p dy = (2 pi s)^(-d(p-1)/2) p^(-d/2).
    """
    if s <= 0 or p <= 0:
        raise DomainError("kernel_power_space_integral needs s > 0 and p > 0")
    return (2.0 * math.pi * s) ** (-0.5 * d * (p - 1.0)) * p ** (-0.5 * d)


def singularity_time_integral(alpha: float, t0: float, d: int) -> float:
    """
    Integral over (0, t0) of s^(-(d/2)(alpha-1)) ds; math.inf when theta_alpha <= 0.
    """
    if t0 <= 0:
        raise DomainError("singularity_time_integral needs t0 > 0")
    th = theta(alpha, d)
    if th <= 0:
        return math.inf
    return t0**th / th


def single_jump_tail(alpha: float, t: float, d: int, R: float) -> float:
    """
    Single-large-jump heuristic for Pareto(alpha) noise:
    R^(-alpha) times the integral of g(s, y)^alpha over (0, t) x R^d.
    """
    if R <= 0:
        raise DomainError("Threshold R must be positive")
    space_time, _ = integrate.quad(
        lambda s: kernel_power_space_integral(alpha, s, d), 0.0, t, limit=200
    )
    return space_time * R ** (-alpha)
