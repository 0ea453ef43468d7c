from dataclasses import dataclass

from app.core.exceptions import DomainError

INTEGRANDS = ("running_count", "constant")


@dataclass(frozen=True)
class DecouplingToy:
    """
    Poisson atoms (t_i, zeta_i) on (0, horizon] with Pareto(mark_alpha) marks
    on [1, inf), integrated against H(t, zeta) = zeta * min(N(t-), cap) where
    N counts earlier atoms; ``constant`` uses H(t, zeta) = zeta.

    The decoupled variable replaces N by an independent copy of the counting
    process while keeping the same atoms.
    """

    rate: float = 5.0
    horizon: float = 1.0
    mark_alpha: float = 1.5
    cap: int = 3
    integrand: str = "running_count"

    def __post_init__(self) -> None:
        if not (self.rate > 0 and self.horizon > 0 and self.mark_alpha > 0):
            raise DomainError("Toy rate, horizon and mark_alpha must be positive")
        if self.cap < 1:
            raise DomainError("cap must be >= 1")
        if self.integrand not in INTEGRANDS:
            raise DomainError(f"integrand must be one of {INTEGRANDS}")

    def describe(self) -> dict:
        return {
            "rate": self.rate,
            "horizon": self.horizon,
            "mark_alpha": self.mark_alpha,
            "cap": self.cap,
            "integrand": self.integrand,
        }
