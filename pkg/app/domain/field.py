import math
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from app.core.exceptions import DomainError, UnsupportedRegimeError
from app.domain.enums import FieldMode
from app.domain.levy import LevyMeasure


@dataclass(frozen=True)
class PoissonAtom:
    """
    One space-time-mark point (tau, eta, zeta) of the noise.
    """

    tau: float
    eta: tuple[float, ...]
    zeta: float

    def __post_init__(self) -> None:
        if not self.zeta > 0:
            raise DomainError("Atom jump size zeta must be positive")
        if not self.tau > 0:
            raise DomainError("Atom time tau must be positive")
        object.__setattr__(self, "eta", tuple(float(c) for c in np.atleast_1d(self.eta)))


@dataclass(frozen=True)
class Window:
    """
    Axis-aligned box [lower, upper] in R^d.
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self) -> None:
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lower) != len(upper):
            raise DomainError("Window bounds must have the same dimension")
        if any(hi <= lo for lo, hi in zip(lower, upper)):
            raise DomainError("Window upper bounds must exceed lower bounds")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def centered(cls, half_width: float, d: int) -> "Window":
        return cls(lower=(-half_width,) * d, upper=(half_width,) * d)

    @property
    def d(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    def padded(self, radius: float) -> "Window":
        return Window(
            lower=tuple(v - radius for v in self.lower),
            upper=tuple(v + radius for v in self.upper),
        )

    def halved(self) -> "Window":
        """Same center, half the side lengths."""
        center = 0.5 * (np.asarray(self.lower) + np.asarray(self.upper))
        half = 0.25 * (np.asarray(self.upper) - np.asarray(self.lower))
        return Window(lower=tuple(center - half), upper=tuple(center + half))

    def strictly_contains(self, points: np.ndarray) -> bool:
        points = np.asarray(points, dtype=float).reshape(-1, self.d)
        return bool(
            np.all(points > np.asarray(self.lower)) and np.all(points < np.asarray(self.upper))
        )


@dataclass(frozen=True, eq=False)
class AtomSet:
    """
    Atoms of one Poisson sample, sorted by time (ties broken lexicographically
    by position) and stored column-wise.
    """

    tau: np.ndarray
    eta: np.ndarray
    zeta: np.ndarray
    t: float
    d: int
    interval: tuple[float, float] = (0.0, math.inf)
    box: Window | None = None

    def __post_init__(self) -> None:
        tau = np.asarray(self.tau, dtype=float).reshape(-1)
        eta = np.asarray(self.eta, dtype=float).reshape(-1, self.d)
        zeta = np.asarray(self.zeta, dtype=float).reshape(-1)
        if not (tau.size == eta.shape[0] == zeta.size):
            raise DomainError("Atom columns must have equal length")
        if np.any(zeta <= 0):
            raise DomainError("Atom jump sizes must be positive")
        if np.any(tau <= 0) or np.any(tau > self.t):
            raise DomainError("Atom times must lie in (0, t]")
        keys = [eta[:, i] for i in range(self.d - 1, -1, -1)] + [tau]
        order = np.lexsort(keys) if tau.size else np.arange(0)
        object.__setattr__(self, "tau", tau[order])
        object.__setattr__(self, "eta", eta[order])
        object.__setattr__(self, "zeta", zeta[order])

    @classmethod
    def empty(cls, t: float, d: int) -> "AtomSet":
        return cls(tau=np.empty(0), eta=np.empty((0, d)), zeta=np.empty(0), t=t, d=d)

    @classmethod
    def from_atoms(cls, atoms: list[PoissonAtom], t: float, d: int) -> "AtomSet":
        if not atoms:
            return cls.empty(t, d)
        return cls(
            tau=np.array([a.tau for a in atoms]),
            eta=np.array([a.eta for a in atoms]),
            zeta=np.array([a.zeta for a in atoms]),
            t=t,
            d=d,
        )

    def __len__(self) -> int:
        return int(self.tau.size)

    def __iter__(self) -> Iterator[PoissonAtom]:
        for i in range(len(self)):
            yield PoissonAtom(tau=self.tau[i], eta=tuple(self.eta[i]), zeta=self.zeta[i])

    def select(self, mask: np.ndarray) -> "AtomSet":
        return replace(self, tau=self.tau[mask], eta=self.eta[mask], zeta=self.zeta[mask])

    def scaled(self, factor: float) -> "AtomSet":
        return replace(self, zeta=self.zeta * factor)


@dataclass(frozen=True)
class FieldConfig:
    """
    Everything needed to simulate the solution field at a fixed time t.

    ``chain_cap`` 0 means no cap on the number of large atoms per chain.
    ``padding`` None chooses the padding radius from ``margin_tolerance``;
    0 restricts the noise to the window itself.
    """

    d: int
    t: float
    measure: LevyMeasure
    mode: FieldMode
    window: Window
    margin_tolerance: float = 1e-6
    small_jump_cutoff: float = 0.01
    picard_levels: int = 4
    picard_cone: float = 4.0
    chain_cap: int = 0
    seed: int = 0
    padding: float | None = None
    compensate_small_jumps: bool = False
    large_jump_cone: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", FieldMode(self.mode))
        if int(self.d) != self.d or self.d < 1:
            raise DomainError("d must be an integer >= 1")
        if not (self.t > 0 and math.isfinite(self.t)):
            raise DomainError("t must be finite and positive")
        if self.window.d != self.d:
            raise DomainError("Window dimension does not match d")
        if not 0 < self.margin_tolerance < 1:
            raise DomainError("margin_tolerance must lie in (0, 1)")
        if not 0 < self.small_jump_cutoff <= 1:
            raise DomainError("small_jump_cutoff must lie in (0, 1]")
        if self.picard_levels < 0:
            raise DomainError("picard_levels must be >= 0")
        if not self.picard_cone > 0:
            raise DomainError("picard_cone must be positive")
        if self.chain_cap < 0:
            raise DomainError("chain_cap must be >= 0")
        if self.padding is not None and self.padding < 0:
            raise DomainError("padding must be >= 0")

    @property
    def has_small_jumps(self) -> bool:
        """lambda((0, 1)) > 0."""
        return self.measure.integral(0.0, 0.0, 1.0) > 0

    def small_jump_first_moment(self) -> float:
        """m_1 of lambda restricted to (0, 1)."""
        return self.measure.integral(1.0, 0.0, 1.0)

    def require_multiplicative_regime(self) -> None:
        if self.has_small_jumps and math.isinf(self.small_jump_first_moment()):
            raise UnsupportedRegimeError(
                "multiplicative mode needs m_1(lambda) < inf or no jumps in (0, 1); "
                f"d={self.d} with infinite-variation small jumps is outside the "
                "supported regime (it requires compensated Picard iterations)"
            )

    def truncation(self) -> dict:
        return {
            "chain_cap": self.chain_cap,
            "picard_levels": self.picard_levels,
            "picard_cone": self.picard_cone,
            "small_jump_cutoff": self.small_jump_cutoff,
        }

    def with_seed(self, seed: int) -> "FieldConfig":
        return replace(self, seed=seed)


@dataclass(frozen=True, eq=False)
class FieldSample:
    """
    Field values at space points for fixed t.

    For cube-sup tables ``points`` holds unit-cube lower corners, ``values``
    the grid maxima over each cube and ``argmax`` the maximizing grid points.
    """

    points: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)
    argmax: np.ndarray | None = None

    @property
    def d(self) -> int:
        return int(np.asarray(self.points).shape[1])

    @property
    def is_cube_table(self) -> bool:
        return self.argmax is not None

    def csv_rows(self) -> tuple[list[str], list[list[float]]]:
        header = [f"x{i + 1}" for i in range(self.d)] + ["value"]
        rows = [list(map(float, p)) + [float(v)] for p, v in zip(self.points, self.values)]
        return header, rows
