"""
Spectrally positive Levy measures.

Every measure lives on (0, inf) and exposes its tail function
lambda((z, inf)), exact interval masses, power/log moments over intervals and
the generalized inverse of the tail used for inverse-transform sampling.
Values are immutable; "infinite" integrals are returned as ``math.inf``.
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np
from numpy.polynomial.legendre import leggauss

from app.core.exceptions import DomainError, QuadratureRequiredError
from app.domain.enums import Interpolation, MeasureKind


# -------------------------------------------------
# Closed-form power integrals
# -------------------------------------------------
def _pow_int(q, x, y):
    """
    Integral of u^q over [x, y] (elementwise, 0 <= x <= y <= inf); inf when divergent.
    """
    q = np.asarray(q, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    e = q + 1.0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        is_log = np.abs(e) < 1e-12
        log_case = np.log(y) - np.log(x)
        e_safe = np.where(is_log, 1.0, e)
        hi = np.where(np.isinf(y), np.where(e_safe < 0, 0.0, np.inf), y**e_safe)
        lo = np.where(x == 0, np.where(e_safe > 0, 0.0, np.inf), x**e_safe)
        power_case = np.where(
            np.isinf(hi) | np.isinf(lo), np.inf, (hi - lo) / e_safe
        )
        value = np.where(is_log, log_case, power_case)
        value = np.where(y <= x, 0.0, value)
    return value


def _pow_log_int(q: float, x: float, y: float) -> float:
    """
    Integral of u^q |log u| over [x, y]; inf when divergent.
    """
    if y <= x:
        return 0.0
    if x < 1.0 < y:
        return _pow_log_int(q, x, 1.0) + _pow_log_int(q, 1.0, y)
    e = q + 1.0

    def primitive(u: float) -> float:
        # antiderivative of u^q log u
        if abs(e) < 1e-12:
            return 0.5 * math.log(u) ** 2
        return u**e * (math.log(u) / e - 1.0 / (e * e))

    if y <= 1.0:
        if x == 0.0:
            if e <= 0:
                return math.inf
            return -primitive(y)
        return -(primitive(y) - primitive(x))
    if math.isinf(y):
        if e >= 0:
            return math.inf
        return -primitive(x)
    return primitive(y) - primitive(x)


def _in_interval(z, lo, hi, lo_closed, hi_closed):
    z = np.asarray(z, dtype=float)
    above = z >= lo if lo_closed else z > lo
    below = z <= hi if hi_closed else z < hi
    return above & below


# -------------------------------------------------
# Base Type
# -------------------------------------------------
class LevyMeasure(ABC):
    """
    A Levy measure on (0, inf) with finite integral of (1 ^ z^2).
    """

    kind: ClassVar[MeasureKind]

    @abstractmethod
    def tail(self, z):
        """lambda((z, inf)); z <= 0 gives the total mass."""

    @abstractmethod
    def atom_mass(self, z: float) -> float:
        """lambda({z})."""

    @abstractmethod
    def integral(
        self,
        p: float,
        lo: float,
        hi: float,
        *,
        lo_closed: bool = False,
        hi_closed: bool = False,
        log_weight: bool = False,
    ) -> float:
        """Integral of z^p |log z|^{log_weight} over the interval; inf if divergent."""

    @abstractmethod
    def inverse_tail(self, y):
        """inf{z > 0 : tail(z) <= y}, clipped to the support."""

    @property
    @abstractmethod
    def support(self) -> tuple[float, float]:
        """Closed hull of the support."""

    @abstractmethod
    def describe(self) -> dict:
        """Serializable description."""

    @property
    def extrapolated(self) -> bool:
        return False

    @property
    def needs_quadrature(self) -> bool:
        return False

    def atoms(self) -> tuple[np.ndarray, np.ndarray] | None:
        """(sizes, weights) for purely atomic measures, else None."""
        return None

    # -----------------------------------------
    # Derived quantities
    # -----------------------------------------
    def total_mass(self) -> float:
        return float(self.tail(0.0))

    def left_tail(self, z: float) -> float:
        """lambda([z, inf))."""
        return float(self.tail(z)) + self.atom_mass(z)

    def mass(self, lo: float, hi: float, *, lo_closed: bool = False) -> float:
        """lambda((lo, hi]) or lambda([lo, hi])."""
        if hi <= lo and not (lo_closed and hi == lo):
            return 0.0
        upper = 0.0 if math.isinf(hi) else float(self.tail(hi))
        lower = self.left_tail(lo) if lo_closed else float(self.tail(lo))
        if math.isinf(lower):
            return math.inf
        return max(lower - upper, 0.0)

    def levy_integrability(self) -> float:
        """Integral of (1 ^ z^2) lambda(dz) = m_2 + M_0."""
        small = self.integral(2.0, 0.0, 1.0)
        large = self.integral(0.0, 1.0, math.inf, lo_closed=True)
        return small + large

    def sample_sizes(
        self,
        lo: float,
        hi: float,
        n: int,
        rng: np.random.Generator,
        *,
        lo_closed: bool = False,
    ) -> np.ndarray:
        """
        n i.i.d. sizes from lambda restricted to the interval, by inverse transform.
        """
        if n == 0:
            return np.empty(0)
        mass = self.mass(lo, hi, lo_closed=lo_closed)
        upper = 0.0 if math.isinf(hi) else float(self.tail(hi))
        u = 1.0 - rng.random(n)
        sizes = np.asarray(self.inverse_tail(upper + u * mass), dtype=float)
        return np.clip(sizes, lo, hi)

    def _validate(self) -> None:
        if not math.isfinite(self.levy_integrability()):
            raise DomainError(
                f"{self.kind.value}: integral of min(1, z^2) against the measure is infinite"
            )


# -------------------------------------------------
# Pareto Tail
# -------------------------------------------------
@dataclass(frozen=True)
class ParetoTail(LevyMeasure):
    """
    lambda((z, inf)) = z^(-alpha) for z > 1, no mass on (0, 1].
    """

    alpha: float
    kind: ClassVar[MeasureKind] = MeasureKind.PARETO_TAIL

    def __post_init__(self) -> None:
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise DomainError("ParetoTail needs a finite alpha > 0")

    def tail(self, z):
        z = np.asarray(z, dtype=float)
        with np.errstate(divide="ignore"):
            value = np.where(z <= 1.0, 1.0, np.maximum(z, 1.0) ** (-self.alpha))
        return value if value.ndim else float(value)

    def atom_mass(self, z: float) -> float:
        return 0.0

    def integral(
        self,
        p: float,
        lo: float,
        hi: float,
        *,
        lo_closed: bool = False,
        hi_closed: bool = False,
        log_weight: bool = False,
    ) -> float:
        a = max(lo, 1.0)
        if hi <= a:
            return 0.0
        q = p - self.alpha - 1.0
        if log_weight:
            return self.alpha * _pow_log_int(q, a, hi)
        return float(self.alpha * _pow_int(q, a, hi))

    def inverse_tail(self, y):
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore"):
            value = np.where(y >= 1.0, 1.0, np.minimum(y, 1.0) ** (-1.0 / self.alpha))
        return value if value.ndim else float(value)

    @property
    def support(self) -> tuple[float, float]:
        return (1.0, math.inf)

    def describe(self) -> dict:
        return {"kind": self.kind.value, "alpha": self.alpha}


# -------------------------------------------------
# Dirac Mixture
# -------------------------------------------------
@dataclass(frozen=True)
class DiracMixture(LevyMeasure):
    """
    Finite sum of point masses w_i delta_{z_i}. An empty mixture is the zero measure.
    """

    atoms_: tuple[tuple[float, float], ...]
    kind: ClassVar[MeasureKind] = MeasureKind.DIRAC_MIXTURE
    _sizes: np.ndarray = field(init=False, repr=False, compare=False)
    _weights: np.ndarray = field(init=False, repr=False, compare=False)
    _suffix: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        merged: dict[float, float] = {}
        for z, w in self.atoms_:
            if not (z > 0 and math.isfinite(z)):
                raise DomainError("DiracMixture atoms need finite sizes z > 0")
            if not (w > 0 and math.isfinite(w)):
                raise DomainError("DiracMixture atoms need finite weights w > 0")
            merged[float(z)] = merged.get(float(z), 0.0) + float(w)
        sizes = np.array(sorted(merged), dtype=float)
        weights = np.array([merged[z] for z in sizes], dtype=float)
        # suffix[j] = sum of weights of atoms j, j+1, ...
        suffix = np.concatenate([np.cumsum(weights[::-1])[::-1], [0.0]])
        object.__setattr__(self, "atoms_", tuple(zip(sizes.tolist(), weights.tolist())))
        object.__setattr__(self, "_sizes", sizes)
        object.__setattr__(self, "_weights", weights)
        object.__setattr__(self, "_suffix", suffix)

    def tail(self, z):
        idx = np.searchsorted(self._sizes, np.asarray(z, dtype=float), side="right")
        value = self._suffix[idx]
        return value if np.ndim(value) else float(value)

    def atom_mass(self, z: float) -> float:
        hit = self._sizes == z
        return float(self._weights[hit].sum())

    def integral(
        self,
        p: float,
        lo: float,
        hi: float,
        *,
        lo_closed: bool = False,
        hi_closed: bool = False,
        log_weight: bool = False,
    ) -> float:
        inside = _in_interval(self._sizes, lo, hi, lo_closed, hi_closed)
        z = self._sizes[inside]
        terms = self._weights[inside] * z**p
        if log_weight:
            terms = terms * np.abs(np.log(z))
        return float(terms.sum())

    def inverse_tail(self, y):
        y = np.asarray(y, dtype=float)
        if self._sizes.size == 0:
            return np.zeros_like(y) if y.ndim else 0.0
        # tail at atom j is suffix[j + 1], decreasing in j
        at_atoms = self._suffix[1:]
        idx = np.searchsorted(-at_atoms, -y, side="left")
        idx = np.clip(idx, 0, self._sizes.size - 1)
        value = np.where(y >= self._suffix[0], self._sizes[0], self._sizes[idx])
        return value if value.ndim else float(value)

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        return self._sizes.copy(), self._weights.copy()

    @property
    def support(self) -> tuple[float, float]:
        if self._sizes.size == 0:
            return (0.0, 0.0)
        return (float(self._sizes[0]), float(self._sizes[-1]))

    def describe(self) -> dict:
        return {"kind": self.kind.value, "atoms": [list(a) for a in self.atoms_]}


# -------------------------------------------------
# Piecewise Density
# -------------------------------------------------
@dataclass(frozen=True)
class PiecewiseDensity(LevyMeasure):
    """
    Density interpolated between knots (z_k, f_k).

    Log-linear interpolation makes every segment an exact power law
    f_k (z / z_k)^{s_k}. With ``extend_tails`` the first and last slopes are
    continued to 0 and inf, and quantities touching those parts are flagged
    as extrapolated. Linear interpolation has bounded support; its moments
    use Gauss-Legendre quadrature with ``quadrature_points`` nodes per segment.
    """

    knots: tuple[tuple[float, float], ...]
    interpolation: Interpolation = Interpolation.LOG_LINEAR
    extend_tails: bool = False
    quadrature_points: int | None = None
    kind: ClassVar[MeasureKind] = MeasureKind.PIECEWISE_DENSITY

    def __post_init__(self) -> None:
        object.__setattr__(self, "interpolation", Interpolation(self.interpolation))
        if len(self.knots) < 2:
            raise DomainError("PiecewiseDensity needs at least two knots")
        z = np.array([k[0] for k in self.knots], dtype=float)
        f = np.array([k[1] for k in self.knots], dtype=float)
        if np.any(z <= 0) or np.any(np.diff(z) <= 0) or not np.all(np.isfinite(z)):
            raise DomainError("Knot positions must be finite, positive and increasing")
        if self.interpolation == Interpolation.LOG_LINEAR:
            if np.any(f <= 0):
                raise DomainError("Log-linear interpolation needs positive densities")
        elif np.any(f < 0):
            raise DomainError("Densities must be nonnegative")
        if self.interpolation == Interpolation.LINEAR and self.extend_tails:
            raise DomainError("Tail extension is only defined for log-linear interpolation")
        if self.quadrature_points is not None and self.quadrature_points < 2:
            raise DomainError("quadrature_points must be >= 2")
        object.__setattr__(self, "knots", tuple((float(a), float(b)) for a, b in zip(z, f)))
        self._build(z, f)
        # compact support away from 0 is always integrable
        if self.extend_tails:
            self._validate()

    # -----------------------------------------
    # Segment tables
    # -----------------------------------------
    def _build(self, z: np.ndarray, f: np.ndarray) -> None:
        if self.interpolation == Interpolation.LOG_LINEAR:
            slopes = np.log(f[1:] / f[:-1]) / np.log(z[1:] / z[:-1])
            a, b = list(z[:-1]), list(z[1:])
            ref_f, ref_z, s = list(f[:-1]), list(z[:-1]), list(slopes)
            if self.extend_tails:
                a, b = [0.0] + a + [z[-1]], [z[0]] + b + [math.inf]
                ref_f = [f[0]] + ref_f + [f[-1]]
                ref_z = [z[0]] + ref_z + [z[-1]]
                s = [slopes[0]] + s + [slopes[-1]]
            seg = {
                "a": np.array(a),
                "b": np.array(b),
                "f": np.array(ref_f),
                "z": np.array(ref_z),
                "s": np.array(s),
            }
        else:
            seg = {
                "a": z[:-1].copy(),
                "b": z[1:].copy(),
                "f": f[:-1].copy(),
                "m": (f[1:] - f[:-1]) / (z[1:] - z[:-1]),
            }
        seg_mass = self._segment_mass(seg, seg["a"], seg["b"])
        tail_at_end = np.concatenate([np.cumsum(seg_mass[::-1])[::-1][1:], [0.0]])
        object.__setattr__(self, "_seg", seg)
        object.__setattr__(self, "_seg_mass", seg_mass)
        object.__setattr__(self, "_tail_end", tail_at_end)

    def _segment_mass(self, seg: dict, x, y) -> np.ndarray:
        """Mass of each segment between x and y (broadcast over segments)."""
        if self.interpolation == Interpolation.LOG_LINEAR:
            zr = seg["z"]
            with np.errstate(divide="ignore", invalid="ignore"):
                return seg["f"] * zr * _pow_int(seg["s"], x / zr, y / zr)
        u = np.asarray(x, dtype=float) - seg["a"]
        v = np.asarray(y, dtype=float) - seg["a"]
        return seg["f"] * (v - u) + 0.5 * seg["m"] * (v * v - u * u)

    @property
    def extrapolated(self) -> bool:
        return self.extend_tails

    @property
    def needs_quadrature(self) -> bool:
        return self.interpolation == Interpolation.LINEAR

    # -----------------------------------------
    # Measure interface
    # -----------------------------------------
    def tail(self, z):
        z = np.asarray(z, dtype=float)
        seg = self._seg
        idx = np.searchsorted(seg["a"], z, side="right") - 1
        total = self._seg_mass.sum() if np.all(np.isfinite(self._seg_mass)) else math.inf
        j = np.clip(idx, 0, seg["a"].size - 1)
        sub = {k: v[j] for k, v in seg.items()}
        partial = self._segment_mass(sub, np.maximum(z, sub["a"]), sub["b"])
        value = np.where(
            idx < 0,
            total,
            np.where(z >= seg["b"][-1], 0.0, self._tail_end[j] + partial),
        )
        return value if value.ndim else float(value)

    def atom_mass(self, z: float) -> float:
        return 0.0

    def integral(
        self,
        p: float,
        lo: float,
        hi: float,
        *,
        lo_closed: bool = False,
        hi_closed: bool = False,
        log_weight: bool = False,
    ) -> float:
        seg = self._seg
        x = np.maximum(seg["a"], lo)
        y = np.minimum(seg["b"], hi)
        active = y > x
        if not np.any(active):
            return 0.0
        if self.interpolation == Interpolation.LOG_LINEAR:
            total = 0.0
            for j in np.flatnonzero(active):
                zr, q = seg["z"][j], seg["s"][j] + p
                scale = seg["f"][j] * zr ** (-seg["s"][j])
                if log_weight:
                    piece = scale * _pow_log_int(q, x[j], y[j])
                else:
                    piece = scale * float(_pow_int(q, x[j], y[j]))
                total += piece
            return float(total)
        if p == 0.0 and not log_weight:
            return float(self._segment_mass(seg, x, y)[active].sum())
        if self.quadrature_points is None:
            raise QuadratureRequiredError(
                "needs quadrature grid: moments of a linearly interpolated density "
                "require quadrature_points (e.g. quadrature_points = 32 in the levy table)"
            )
        nodes, weights = leggauss(self.quadrature_points)
        total = 0.0
        for j in np.flatnonzero(active):
            pieces = [(x[j], y[j])]
            if log_weight and x[j] < 1.0 < y[j]:
                pieces = [(x[j], 1.0), (1.0, y[j])]
            for u, v in pieces:
                zq = 0.5 * (v - u) * nodes + 0.5 * (v + u)
                dens = seg["f"][j] + seg["m"][j] * (zq - seg["a"][j])
                vals = dens * zq**p
                if log_weight:
                    vals = vals * np.abs(np.log(zq))
                total += 0.5 * (v - u) * float(np.dot(weights, vals))
        return float(total)

    def inverse_tail(self, y):
        y = np.asarray(y, dtype=float)
        seg = self._seg
        tail_end = self._tail_end
        j = np.searchsorted(-tail_end, -y, side="left")
        j = np.clip(j, 0, tail_end.size - 1)
        r = y - tail_end[j]
        a, b, f0 = seg["a"][j], seg["b"][j], seg["f"][j]
        b = np.asarray(b, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if self.interpolation == Interpolation.LOG_LINEAR:
                zr, s = seg["z"][j], seg["s"][j]
                e = s + 1.0
                bb = b / zr
                rr = r / (f0 * zr)
                is_log = np.abs(e) < 1e-12
                e_safe = np.where(is_log, 1.0, e)
                top = np.where(np.isinf(bb), 0.0, bb**e_safe)
                power = (top - rr * e_safe) ** (1.0 / e_safe)
                x = np.where(is_log, bb * np.exp(-rr), power) * zr
            else:
                width = b - a
                c0 = np.maximum(self._seg_mass[j] - r, 0.0)
                m = seg["m"][j]
                x = a + 2.0 * c0 / (f0 + np.sqrt(f0 * f0 + 2.0 * m * c0))
                x = np.minimum(x, a + width)
        lo, hi = self.support
        value = np.clip(np.nan_to_num(x, nan=lo, posinf=hi), lo, hi)
        value = np.where(y >= self.total_mass(), lo, value)
        return value if value.ndim else float(value)

    @property
    def support(self) -> tuple[float, float]:
        return (float(self._seg["a"][0]), float(self._seg["b"][-1]))

    def describe(self) -> dict:
        return {
            "kind": self.kind.value,
            "knots": [list(k) for k in self.knots],
            "interpolation": self.interpolation.value,
            "extend_tails": self.extend_tails,
            "quadrature_points": self.quadrature_points,
        }


# -------------------------------------------------
# Restriction Wrapper
# -------------------------------------------------
@dataclass(frozen=True)
class Restricted(LevyMeasure):
    """
    base restricted to the interval (lo, hi].
    """

    base: LevyMeasure
    lo: float = 0.0
    hi: float = math.inf
    kind: ClassVar[MeasureKind] = MeasureKind.RESTRICTED

    def __post_init__(self) -> None:
        if self.lo < 0 or self.hi <= self.lo:
            raise DomainError("Restricted needs 0 <= lo < hi")

    def _upper(self) -> float:
        return 0.0 if math.isinf(self.hi) else float(self.base.tail(self.hi))

    def tail(self, z):
        z = np.asarray(z, dtype=float)
        clipped = np.maximum(z, self.lo)
        base_tail = np.asarray(self.base.tail(clipped), dtype=float)
        value = np.where(z < self.hi, np.maximum(base_tail - self._upper(), 0.0), 0.0)
        return value if value.ndim else float(value)

    def atom_mass(self, z: float) -> float:
        if self.lo < z <= self.hi:
            return self.base.atom_mass(z)
        return 0.0

    def integral(
        self,
        p: float,
        lo: float,
        hi: float,
        *,
        lo_closed: bool = False,
        hi_closed: bool = False,
        log_weight: bool = False,
    ) -> float:
        if lo > self.lo:
            new_lo, new_lo_closed = lo, lo_closed
        else:
            new_lo, new_lo_closed = self.lo, False
        if hi < self.hi:
            new_hi, new_hi_closed = hi, hi_closed
        elif hi > self.hi:
            new_hi, new_hi_closed = self.hi, True
        else:
            new_hi, new_hi_closed = hi, hi_closed
        if new_hi < new_lo:
            return 0.0
        return self.base.integral(
            p,
            new_lo,
            new_hi,
            lo_closed=new_lo_closed,
            hi_closed=new_hi_closed,
            log_weight=log_weight,
        )

    def inverse_tail(self, y):
        y = np.asarray(y, dtype=float)
        value = np.asarray(self.base.inverse_tail(y + self._upper()), dtype=float)
        lo, hi = self.support
        value = np.clip(value, lo, hi)
        return value if value.ndim else float(value)

    def atoms(self) -> tuple[np.ndarray, np.ndarray] | None:
        base_atoms = self.base.atoms()
        if base_atoms is None:
            return None
        sizes, weights = base_atoms
        keep = (sizes > self.lo) & (sizes <= self.hi)
        return sizes[keep], weights[keep]

    @property
    def extrapolated(self) -> bool:
        return self.base.extrapolated

    @property
    def needs_quadrature(self) -> bool:
        return self.base.needs_quadrature

    @property
    def support(self) -> tuple[float, float]:
        base_lo, base_hi = self.base.support
        return (max(self.lo, base_lo), min(self.hi, base_hi))

    def describe(self) -> dict:
        return {
            "kind": self.kind.value,
            "base": self.base.describe(),
            "interval": [self.lo, "infinite" if math.isinf(self.hi) else self.hi],
        }


def zero_measure() -> DiracMixture:
    return DiracMixture(())
