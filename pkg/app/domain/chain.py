from dataclasses import dataclass

import numpy as np

from app.core.exceptions import DomainError


@dataclass(frozen=True, eq=False)
class BackwardChain:
    """
    Atoms traced backwards in time from (t, x).

    Step i moves from (tau_{i-1}, eta_{i-1}) to (tau_i, eta_i) with
    tau_i = tau_{i-1} - gaps[i] and eta_i = eta_{i-1} - displacements[i].
    ``final_gap`` is the gap that carried the chain past time 0.
    """

    t: float
    origin: np.ndarray
    gaps: np.ndarray
    displacements: np.ndarray
    marks: np.ndarray | None = None
    terminated: bool = True
    final_gap: float = np.inf

    def __post_init__(self) -> None:
        origin = np.atleast_1d(np.asarray(self.origin, dtype=float))
        gaps = np.asarray(self.gaps, dtype=float).reshape(-1)
        disp = np.asarray(self.displacements, dtype=float).reshape(gaps.size, origin.size)
        if np.any(gaps <= 0):
            raise DomainError("Chain gaps must be positive")
        if np.any(np.sum(disp * disp, axis=1) > gaps * (1.0 + 1e-12)):
            raise DomainError("Chain displacements must satisfy |d eta| <= sqrt(d tau)")
        if gaps.size and gaps.sum() > self.t:
            raise DomainError("Retained chain steps must stay inside (0, t)")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "gaps", gaps)
        object.__setattr__(self, "displacements", disp)
        if self.marks is not None:
            object.__setattr__(self, "marks", np.asarray(self.marks, dtype=float).reshape(-1))

    def __len__(self) -> int:
        return int(self.gaps.size)

    @property
    def d(self) -> int:
        return int(self.origin.size)

    @property
    def times(self) -> np.ndarray:
        return self.t - np.cumsum(self.gaps)

    @property
    def positions(self) -> np.ndarray:
        return self.origin - np.cumsum(self.displacements, axis=0)

    def in_event_A(self, N: int) -> bool:
        """Exactly N steps, each gap <= t/N, then a gap longer than t."""
        return (
            len(self) == N
            and bool(np.all(self.gaps <= self.t / N))
            and self.final_gap > self.t
        )
