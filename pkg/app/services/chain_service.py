import math

import numpy as np
from scipy import special

from app.core.exceptions import DomainError, UnsupportedRegimeError
from app.core.logging import get_logger
from app.domain.chain import BackwardChain
from app.domain.kernel import log_heat_kernel_r2
from app.domain.levy import LevyMeasure, ParetoTail
from app.schemas.reports import ChainScanReport, ChainScanRow

logger = get_logger(__name__)


def _ball_displacements(gaps: np.ndarray, d: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform points in the balls of radius sqrt(gap)."""
    direction = rng.standard_normal((gaps.size, d))
    norms = np.linalg.norm(direction, axis=1, keepdims=True)
    direction = direction / np.where(norms > 0, norms, 1.0)
    radius = np.sqrt(gaps) * rng.random(gaps.size) ** (1.0 / d)
    return direction * radius[:, None]


class ChainService:
    """
    Backward atom chains: gap laws, the event A_N and the lower-bound scan.
    """

    @staticmethod
    def gap_distribution_constant(*, d: int) -> float:
        """C = pi^(d/2) / Gamma(d/2 + 2), the volume rate of the backward cone."""
        if d < 1:
            raise DomainError("d must be >= 1")
        return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 2.0)

    @staticmethod
    def _large_rate(measure: LevyMeasure) -> float:
        rate = measure.left_tail(1.0)
        if not rate > 0:
            raise DomainError("Backward chains need lambda([1, inf)) > 0")
        return rate

    # -----------------------------------------
    # Gap samplers
    # -----------------------------------------
    @classmethod
    def sample_gaps(
        cls, *, d: int, size, rng: np.random.Generator, rate: float = 1.0
    ) -> np.ndarray:
        """Gaps with CDF 1 - exp(-rate C x^(1 + d/2))."""
        c = rate * cls.gap_distribution_constant(d=d)
        u = rng.random(size)
        return (-np.log1p(-u) / c) ** (1.0 / (1.0 + d / 2.0))

    @classmethod
    def sample_conditional_gaps(
        cls, *, t: float, N: int, d: int, size, rng: np.random.Generator, rate: float = 1.0
    ) -> np.ndarray:
        """Gaps from the law above conditioned on being <= t/N."""
        k = 1.0 + d / 2.0
        c = rate * cls.gap_distribution_constant(d=d)
        u = rng.random(size)
        return (-np.log1p(u * np.expm1(-c * (t / N) ** k)) / c) ** (1.0 / k)

    @classmethod
    def sample_backward_chain(
        cls,
        *,
        t: float,
        x,
        d: int,
        measure: LevyMeasure,
        rng: np.random.Generator,
    ) -> BackwardChain:
        """
        Gaps drawn one by one until their running sum passes t; the last gap
        is kept as ``final_gap``. Marks come from lambda restricted to [1, inf).
        """
        rate = cls._large_rate(measure)
        gaps: list[float] = []
        elapsed = 0.0
        while True:
            gap = float(cls.sample_gaps(d=d, size=1, rng=rng, rate=rate)[0])
            if elapsed + gap > t:
                final_gap = gap
                break
            gaps.append(gap)
            elapsed += gap
        gap_array = np.asarray(gaps, dtype=float)
        displacements = _ball_displacements(gap_array, d, rng)
        marks = measure.sample_sizes(1.0, math.inf, gap_array.size, rng, lo_closed=True)
        return BackwardChain(
            t=t,
            origin=np.broadcast_to(np.asarray(x, dtype=float), (d,)).copy(),
            gaps=gap_array,
            displacements=displacements,
            marks=marks,
            terminated=True,
            final_gap=final_gap,
        )

    @classmethod
    def sample_conditional_chain(
        cls,
        *,
        t: float,
        N: int,
        d: int,
        rng: np.random.Generator,
        x=None,
        measure: LevyMeasure | None = None,
    ) -> BackwardChain:
        """
        A chain with law conditioned on A_N: N gaps from the density f_N on
        (0, t/N) and uniform displacements in the sqrt(gap)-balls.
        """
        if N < 1:
            raise DomainError("N must be >= 1")
        rate = 1.0 if measure is None else cls._large_rate(measure)
        gaps = cls.sample_conditional_gaps(t=t, N=N, d=d, size=N, rng=rng, rate=rate)
        displacements = _ball_displacements(gaps, d, rng)
        marks = (
            None
            if measure is None
            else measure.sample_sizes(1.0, math.inf, N, rng, lo_closed=True)
        )
        origin = np.zeros(d) if x is None else np.broadcast_to(np.asarray(x, dtype=float), (d,))
        return BackwardChain(
            t=t,
            origin=np.array(origin, dtype=float),
            gaps=gaps,
            displacements=displacements,
            marks=marks,
            terminated=True,
        )

    # -----------------------------------------
    # The event A_N
    # -----------------------------------------
    @classmethod
    def prob_A_N(cls, *, t: float, N: int, d: int, rate: float = 1.0) -> float:
        """exp(-C t^k) (1 - exp(-C (t/N)^k))^N with k = 1 + d/2."""
        if N < 1 or not t > 0:
            raise DomainError("prob_A_N needs N >= 1 and t > 0")
        k = 1.0 + d / 2.0
        c = rate * cls.gap_distribution_constant(d=d)
        log_p = -c * t**k + N * math.log(-math.expm1(-c * (t / N) ** k))
        return math.exp(log_p)

    @classmethod
    def estimate_prob_A_N(
        cls,
        *,
        t: float,
        N: int,
        d: int,
        replications: int,
        rng: np.random.Generator,
        rate: float = 1.0,
    ) -> tuple[float, float]:
        """
        Empirical frequency of A_N over i.i.d. gap sequences, with its binomial stderr.
        """
        gaps = cls.sample_gaps(d=d, size=(replications, N + 1), rng=rng, rate=rate)
        hits = np.all(gaps[:, :N] <= t / N, axis=1) & (gaps[:, N] > t)
        p = float(hits.mean())
        return p, math.sqrt(p * (1.0 - p) / replications)

    # -----------------------------------------
    # Pareto products
    # -----------------------------------------
    @staticmethod
    def product_pareto_tail(*, N: int, alpha: float, c: float, R) -> np.ndarray | float:
        """
        P(Y_1 ... Y_N > R) for i.i.d. Y_i with P(Y > y) = c y^(-alpha) on
        y >= c^(1/alpha): the exponent sum is Gamma(N, 1) distributed.
        """
        if N < 1 or not alpha > 0 or not c > 0:
            raise DomainError("product_pareto_tail needs N >= 1, alpha > 0 and c > 0")
        R = np.asarray(R, dtype=float)
        if np.any(R <= 0):
            raise DomainError("R must be positive")
        x = alpha * np.log(R) - N * math.log(c)
        value = np.where(x <= 0, 1.0, special.gammaincc(N, np.maximum(x, 0.0)))
        return value if value.ndim else float(value)

    # -----------------------------------------
    # Lower-bound scan
    # -----------------------------------------
    @classmethod
    def chain_log_kernel(cls, *, gaps: np.ndarray, displacements: np.ndarray, d: int) -> np.ndarray:
        """Sum over steps of log g(gap, displacement); rows are chains."""
        r2 = np.sum(displacements * displacements, axis=-1)
        return np.sum(log_heat_kernel_r2(gaps, r2, d), axis=-1)

    @classmethod
    def lower_bound_scan(
        cls,
        *,
        t: float,
        x,
        d: int,
        measure: LevyMeasure,
        R: float,
        N_range: tuple[int, int],
        replications: int,
        rng: np.random.Generator,
    ) -> ChainScanReport:
        """
        For each N: P(A_N) in closed form and by simulation, and the conditional
        probability that the chain product prod g(gap_i, disp_i) zeta_i exceeds R.

        For ParetoTail marks the conditional probability is averaged exactly
        over the marks (product_pareto_tail at R / kernel product), otherwise
        marks are sampled.
        """
        if measure.integral(0.0, 0.0, 1.0) > 0:
            raise UnsupportedRegimeError(
                "lower_bound_scan needs lambda((0, 1)) = 0 (pure large-jump noise)"
            )
        if not R > 0:
            raise DomainError("R must be positive")
        n_lo, n_hi = N_range
        if n_lo < 1 or n_hi < n_lo:
            raise DomainError("N_range must satisfy 1 <= N_lo <= N_hi")
        rate = cls._large_rate(measure)
        exact_marks = isinstance(measure, ParetoTail)

        rows: list[ChainScanRow] = []
        for N in range(n_lo, n_hi + 1):
            gaps = cls.sample_conditional_gaps(
                t=t, N=N, d=d, size=(replications, N), rng=rng, rate=rate
            )
            disp = _ball_displacements(gaps.reshape(-1), d, rng).reshape(replications, N, d)
            log_kernel = cls.chain_log_kernel(gaps=gaps, displacements=disp, d=d)
            if exact_marks:
                # marks are Pareto(alpha) normalized on [1, inf) with tail y^(-alpha)
                threshold = np.exp(np.log(R) - log_kernel)
                cond = float(
                    np.mean(
                        cls.product_pareto_tail(N=N, alpha=measure.alpha, c=1.0, R=threshold)
                    )
                )
            else:
                marks = measure.sample_sizes(
                    1.0, math.inf, replications * N, rng, lo_closed=True
                ).reshape(replications, N)
                log_product = log_kernel + np.sum(np.log(marks), axis=1)
                cond = float(np.mean(log_product > math.log(R)))
            p_closed = cls.prob_A_N(t=t, N=N, d=d, rate=rate)
            p_mc, _ = cls.estimate_prob_A_N(
                t=t, N=N, d=d, replications=replications, rng=rng, rate=rate
            )
            rows.append(
                ChainScanRow(
                    N=N,
                    p_AN_closed=p_closed,
                    p_AN_mc=p_mc,
                    cond_estimate=cond,
                    summand=p_closed * cond,
                )
            )

        summands = np.array([row.summand for row in rows])
        # np.argmax returns the first maximum, i.e. the smallest N on ties
        optimal = rows[int(np.argmax(summands))].N
        logger.info(
            "chain_scan_completed",
            extra={"replications": replications},
        )
        return ChainScanReport(
            R=R,
            replications=replications,
            rows=rows,
            optimal_N=optimal,
            lower_bound=float(summands.sum()),
        )
