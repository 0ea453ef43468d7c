import math
from dataclasses import dataclass
from functools import total_ordering

import numpy as np

from app.core.exceptions import DomainError

# largest x with exp(x) finite in float64
LOG_FLOAT_MAX = math.log(np.finfo(float).max)

LAMBERT_W_MAX_ITER = 100
LAMBERT_W_TOL = 1e-15


def log_plus(x):
    """
    log(x v e); saturates at 1 for x <= e.
    """
    x = np.asarray(x, dtype=float)
    value = np.log(np.maximum(x, math.e))
    return value if value.ndim else float(value)


def lambert_w(x):
    """
    Principal branch of W on the positive axis, solving W e^W = x.

    Halley iteration seeded with log1p(x) below e and log x - log log x above.
    """
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("lambert_w needs x > 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(x < math.e, np.log1p(x), np.log(x) - np.log(np.log(x)))

    for _ in range(LAMBERT_W_MAX_ITER):
        ew = np.exp(w)
        f = w * ew - x
        w1 = w + 1.0
        dw = f / (ew * w1 - (w + 2.0) * f / (2.0 * w1))
        w = w - dw
        if np.all(np.abs(dw) <= LAMBERT_W_TOL * (1.0 + np.abs(w))):
            break
    return w if w.ndim else float(w)


# -------------------------------------------------
# Iterated exponentials and logarithms
# -------------------------------------------------
@total_ordering
@dataclass(frozen=True, eq=False)
class ExpTower:
    """
    Symbolic exp^(level)(residual) for values past the float range.

    Every tower exceeds every finite float. Towers compare by level first,
    then by residual.
    """

    level: int
    residual: float

    def __post_init__(self) -> None:
        if self.level < 1:
            raise DomainError("ExpTower level must be >= 1")
        if not self.residual > LOG_FLOAT_MAX:
            raise DomainError("ExpTower residual must overflow exp")

    def _key(self) -> tuple[int, float]:
        return self.level, self.residual

    def __eq__(self, other) -> bool:
        if isinstance(other, ExpTower):
            return self._key() == other._key()
        if isinstance(other, (int, float, np.floating, np.integer)):
            return False
        return NotImplemented

    def __lt__(self, other) -> bool:
        if isinstance(other, ExpTower):
            return self._key() < other._key()
        if isinstance(other, (int, float, np.floating, np.integer)):
            # +inf is the only float at least as large as a tower
            return math.isinf(other) and other > 0
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self._key())

    def log(self) -> "ExpTower | float":
        if self.level == 1:
            return self.residual
        return ExpTower(self.level - 1, self.residual)

    def describe(self) -> dict:
        return {"overflow": {"level": self.level, "residual": self.residual}}


def iterated_exp(n: int, x: float) -> "float | ExpTower":
    """
    exp^(n)(x); returns an ExpTower once a level would overflow.
    """
    if n < 0:
        raise DomainError("Iteration level must be >= 0")
    value = float(x)
    for i in range(n):
        if value > LOG_FLOAT_MAX:
            return ExpTower(n - i, value)
        value = math.exp(value)
    return value


def iterated_log(n: int, r):
    """
    log^(n)(r) with log^(1) = log_plus; accepts arrays or an ExpTower.
    """
    if n < 0:
        raise DomainError("Iteration level must be >= 0")
    if isinstance(r, ExpTower):
        value: ExpTower | float = r
        while n > 0 and isinstance(value, ExpTower):
            value = value.log()
            n -= 1
        if isinstance(value, ExpTower):
            return value
        r = value
    value = np.asarray(r, dtype=float)
    for _ in range(n):
        value = np.log(np.maximum(value, math.e))
    return value if value.ndim else float(value)
