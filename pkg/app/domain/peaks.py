import math
from dataclasses import dataclass, field

import numpy as np

from app.core.exceptions import DomainError
from app.domain.enums import FieldMode, FRegime, Norm, ScaledFlavor
from app.domain.kernel import theta
from app.utils.special import iterated_log, log_plus


def point_norms(points: np.ndarray, norm: Norm = Norm.EUCLIDEAN) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if Norm(norm) == Norm.SUP:
        return np.max(np.abs(points), axis=1)
    return np.linalg.norm(points, axis=1)


# -------------------------------------------------
# Growth gauges
# -------------------------------------------------
@dataclass(frozen=True)
class GrowthGauge:
    """
    f(x) = x^a (log x)^b for x > 1.
    """

    a: float
    b: float = 0.0

    def __post_init__(self) -> None:
        if self.a < 0:
            raise DomainError("Gauge exponent a must be >= 0")
        if self.a == 0 and self.b < 0:
            raise DomainError("x^0 (log x)^b with b < 0 is nowhere nondecreasing")

    @property
    def x0(self) -> float:
        """Point from which f is nondecreasing (and log x >= 1)."""
        if self.a == 0:
            return math.e
        return max(math.e, math.exp(-self.b / self.a))

    def log_value(self, x):
        x = np.asarray(x, dtype=float)
        return self.a * np.log(x) + self.b * np.log(np.log(x))

    def __call__(self, x):
        return np.exp(self.log_value(x))


# -------------------------------------------------
# Peak-set thresholds
# -------------------------------------------------
@dataclass(frozen=True)
class PeakVariant:
    """
    Threshold family defining a peak set {x : Y(t, x) >= threshold(|x|)}.

    ``gamma``: |x|^gamma.
    ``scaled``: |x|^{A} (prod_{p<N} log^(p)|x|)^{B} (log^(N)|x|)^{gamma/d} with
    (A, B) = (d^2/2, d/2) for mult_c and add_c_light, (d/alpha, 1/alpha) for add_c / add_d.
    ``F_M``: |x|^{d/alpha} exp(M (log+|x|)^{1/(1+theta_alpha)}) for EMb / EM and
    |x|^{d^2/(2+d)} exp(M log+|x| log^(3)|x| / log^(2)|x|) for EMc.
    """

    kind: str
    gamma: float = 0.0
    N: int = 1
    flavor: ScaledFlavor | None = None
    M: float = 0.0
    regime: FRegime | None = None
    alpha: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("gamma", "scaled", "F_M"):
            raise DomainError(f"Unknown peak-set variant '{self.kind}'")
        if self.gamma < 0:
            raise DomainError("gamma must be >= 0")
        if self.kind == "scaled":
            if self.flavor is None:
                raise DomainError("Scaled peak sets need a flavor")
            object.__setattr__(self, "flavor", ScaledFlavor(self.flavor))
            if self.N < 1:
                raise DomainError("N must be >= 1")
            if self.flavor in (ScaledFlavor.ADD_C, ScaledFlavor.ADD_D) and not (
                self.alpha and self.alpha > 0
            ):
                raise DomainError("Heavy-tailed additive scaled peak sets need alpha > 0")
        if self.kind == "F_M":
            if self.regime is None:
                raise DomainError("F_M peak sets need a regime")
            object.__setattr__(self, "regime", FRegime(self.regime))
            if self.regime != FRegime.EMC and not (self.alpha and self.alpha > 0):
                raise DomainError("F_M regimes EMb and EM need alpha > 0")
            if self.M < 0:
                raise DomainError("M must be >= 0")

    # field mode and continuum flag the variant is defined for; None means any
    @property
    def expected_field(self) -> tuple[FieldMode | None, bool | None]:
        if self.kind == "scaled":
            return {
                ScaledFlavor.MULT_C: (FieldMode.MULTIPLICATIVE, True),
                ScaledFlavor.ADD_C: (FieldMode.ADDITIVE, True),
                ScaledFlavor.ADD_C_LIGHT: (FieldMode.ADDITIVE, True),
                ScaledFlavor.ADD_D: (FieldMode.ADDITIVE, False),
            }[self.flavor]
        if self.kind == "F_M":
            return FieldMode.MULTIPLICATIVE, self.regime == FRegime.EMB
        return None, None

    def log_threshold(self, r, d: int):
        """
        log threshold at radii ``r``; -inf at r = 0 unless the power is 0.
        """
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            log_r = np.log(r)
        if self.kind == "gamma":
            power, correction = self.gamma, 0.0
        elif self.kind == "scaled":
            if self.flavor in (ScaledFlavor.MULT_C, ScaledFlavor.ADD_C_LIGHT):
                power, weight = d * d / 2.0, d / 2.0
            else:
                power, weight = d / self.alpha, 1.0 / self.alpha
            correction = sum(
                weight * np.log(iterated_log(p, r)) for p in range(1, self.N)
            ) + (self.gamma / d) * np.log(iterated_log(self.N, r))
        elif self.regime == FRegime.EMC:
            power = d * d / (2.0 + d)
            correction = (
                self.M * log_plus(r) * iterated_log(3, r) / iterated_log(2, r)
            )
        else:
            theta_alpha = theta(self.alpha, d)
            power = d / self.alpha
            correction = self.M * log_plus(r) ** (1.0 / (1.0 + theta_alpha))
        scaled = np.zeros_like(r) if power == 0 else power * log_r
        return scaled + correction

    def describe(self) -> dict:
        payload = {"kind": self.kind, "gamma": self.gamma}
        if self.kind == "scaled":
            payload.update(N=self.N, flavor=self.flavor.value, alpha=self.alpha)
        if self.kind == "F_M":
            payload.update(M=self.M, regime=self.regime.value, alpha=self.alpha)
        return payload


# -------------------------------------------------
# Peak sets
# -------------------------------------------------
@dataclass(frozen=True, eq=False)
class PeakSet:
    """
    Occupied unit lattice cubes q + [0, 1)^d of a set, known out to sup-norm ``radius``.

    A lattice point p occupies the cube with corner p itself.
    """

    d: int
    cubes: np.ndarray
    radius: float
    threshold: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        cubes = np.asarray(self.cubes, dtype=np.int64).reshape(-1, self.d)
        cubes = np.unique(cubes, axis=0) if cubes.size else cubes
        if cubes.size and np.max(np.abs(cubes)) > self.radius + 1:
            raise DomainError("Peak-set cubes lie outside the declared radius")
        object.__setattr__(self, "cubes", cubes)

    @classmethod
    def from_points(cls, points, radius: float, threshold: dict | None = None) -> "PeakSet":
        points = np.asarray(points, dtype=float)
        d = 1 if points.ndim == 1 else points.shape[1]
        cubes = np.floor(points).astype(np.int64).reshape(-1, d)
        return cls(d=d, cubes=cubes, radius=radius, threshold=threshold or {})

    def __len__(self) -> int:
        return int(self.cubes.shape[0])

    @property
    def sup_norms(self) -> np.ndarray:
        if len(self) == 0:
            return np.empty(0)
        return np.max(np.abs(self.cubes), axis=1).astype(float)

    @property
    def max_shell(self) -> int:
        """Largest n with e^n <= radius."""
        return int(math.floor(math.log(self.radius) + 1e-9)) if self.radius >= 1 else 0

    def union(self, other: "PeakSet") -> "PeakSet":
        if other.d != self.d:
            raise DomainError("Cannot join peak sets of different dimension")
        return PeakSet(
            d=self.d,
            cubes=np.concatenate([self.cubes, other.cubes]),
            radius=min(self.radius, other.radius),
            threshold=self.threshold,
        )

    def beyond(self, r_min: float) -> "PeakSet":
        """Drops the cubes with sup-norm <= r_min."""
        return PeakSet(
            d=self.d,
            cubes=self.cubes[self.sup_norms > r_min],
            radius=self.radius,
            threshold=self.threshold,
        )
