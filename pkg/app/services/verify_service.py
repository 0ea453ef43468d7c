import math
from functools import partial
from typing import Callable, Literal

import numpy as np
from scipy import stats

from app.core.logging import get_logger
from app.domain.levy import DiracMixture, ParetoTail
from app.schemas.reports import LemmaCheckResult, VerifyReport
from app.services.chain_service import ChainService
from app.services.lemma_service import LemmaService
from app.services.levy_service import LevyService
from app.utils.special import lambert_w
from app.workers.replication_runner import ReplicationRunner

logger = get_logger(__name__)

Scale = Literal["quick", "full"]
Check = Callable[[np.random.Generator], LemmaCheckResult]

MC_SIGMAS = 4.0
KS_P_VALUE = 0.01
DECOMPOSITION_PIECES = 10
DECOMPOSITION_MASS_LIMIT = 2.0 + 1e-12
DECOMPOSITION_TAIL_TOLERANCE = 1e-9
LAMBERT_RESIDUAL_LIMIT = 1e-12
LAMBERT_X0_LIMIT = 10.0

GAMMA_SERIES_TRIPLES = (
    (1.0, 1.0, 1.0),
    (1.0, 0.5, 1.0),
    (0.5, 1.0, 1.0),
    (2.0, 1.0, 1.0),
    (1.0, 1.0, 0.5),
    (1.0, 2.0, 2.0),
    (1.5, 0.5, 1.0),
    (0.8, 1.5, 1.2),
    (2.0, 0.3, 0.5),
    (1.0, 1.0, 2.0),
)
CHAIN_LAW_GRID = tuple((d, t, N) for d in (1, 2) for t in (0.5, 1.0) for N in (1, 2, 3))

# (replications for chain laws, Monte Carlo products, iterated-integral samples, max quadrature N)
SIZES = {
    "quick": (100_000, 1_000_000, 1_000_000, 2),
    "full": (1_000_000, 10_000_000, 10_000_000, 3),
}


class VerificationService:
    """
    Aggregates the numerical checks of special functions, chain laws,
    decompositions and probabilistic inequalities into one report.
    """

    # -----------------------------------------
    # Individual checks
    # -----------------------------------------
    @staticmethod
    def lambert_w_check(_rng: np.random.Generator) -> LemmaCheckResult:
        x = np.geomspace(1.01, 1e12, 10_000)
        result = LemmaService.lambert_w_bounds_check(x_grid=x)
        w = lambert_w(x)
        residual = float(np.max(np.abs(w * np.exp(w) - x) / x))
        x0 = result.details["x0"]
        result.details["definition_residual"] = residual
        result.passed = (
            result.passed
            and residual <= LAMBERT_RESIDUAL_LIMIT
            and x0 is not None
            and x0 <= LAMBERT_X0_LIMIT
        )
        return result

    @staticmethod
    def product_pareto_check(rng: np.random.Generator, *, samples: int) -> LemmaCheckResult:
        exact = ChainService.product_pareto_tail(N=2, alpha=1.0, c=1.0, R=10.0)
        closed = (1.0 + math.log(10.0)) / 10.0
        R = np.array([10.0, 100.0])
        formula = ChainService.product_pareto_tail(N=3, alpha=1.0, c=1.0, R=R)
        hits = np.zeros(R.size)
        done = 0
        while done < samples:
            size = min(1_000_000, samples - done)
            log_product = -np.sum(np.log(rng.random((size, 3))), axis=1)
            hits += np.sum(log_product[:, None] > np.log(R)[None, :], axis=0)
            done += size
        freq = hits / samples
        stderr = np.sqrt(formula * (1.0 - formula) / samples)
        slack = MC_SIGMAS * stderr - np.abs(freq - formula)
        exact_ok = abs(exact - closed) <= 1e-12
        return LemmaCheckResult(
            lemma="product_pareto",
            inputs={"N": 3, "alpha": 1.0, "c": 1.0, "R": R.tolist(), "samples": samples},
            lhs=freq.tolist(),
            rhs=np.asarray(formula).tolist(),
            margin=float(slack.min()),
            passed=bool(exact_ok and np.all(slack >= 0)),
            details={"exact_N2_R10": exact, "closed_N2_R10": closed},
        )

    @staticmethod
    def chain_law_check(
        rng: np.random.Generator, *, d: int, t: float, N: int, replications: int
    ) -> LemmaCheckResult:
        closed = ChainService.prob_A_N(t=t, N=N, d=d)
        freq, _ = ChainService.estimate_prob_A_N(
            t=t, N=N, d=d, replications=replications, rng=rng
        )
        stderr = math.sqrt(closed * (1.0 - closed) / replications)
        slack = MC_SIGMAS * stderr - abs(freq - closed)
        return LemmaCheckResult(
            lemma="prob_A_N",
            inputs={"d": d, "t": t, "N": N, "replications": replications},
            lhs=[freq],
            rhs=[closed],
            margin=slack,
            passed=slack >= 0,
        )

    @staticmethod
    def conditional_gap_check(rng: np.random.Generator, *, size: int) -> LemmaCheckResult:
        d, t, N = 1, 1.0, 2
        c = ChainService.gap_distribution_constant(d=d)
        k = 1.0 + d / 2.0
        norm = -math.expm1(-c * (t / N) ** k)
        gaps = ChainService.sample_conditional_gaps(t=t, N=N, d=d, size=size, rng=rng)

        def cdf(x):
            x = np.clip(x, 0.0, t / N)
            return -np.expm1(-c * x**k) / norm

        result = stats.kstest(np.asarray(gaps).reshape(-1), cdf)
        return LemmaCheckResult(
            lemma="conditional_gaps_ks",
            inputs={"d": d, "t": t, "N": N, "size": size},
            lhs=[float(result.statistic)],
            rhs=[float(result.pvalue)],
            margin=float(result.pvalue) - KS_P_VALUE,
            passed=bool(result.pvalue > KS_P_VALUE),
        )

    @staticmethod
    def decomposition_check(_rng: np.random.Generator) -> LemmaCheckResult:
        z = np.geomspace(1e-2, 1e2, 100)
        worst_mass = 0.0
        worst_tail = 0.0
        for measure in (ParetoTail(1.0), DiracMixture(((1.0, 5.0),))):
            parts = LevyService.decompose(measure=measure, pieces=DECOMPOSITION_PIECES)
            worst_mass = max([worst_mass, *parts.piece_masses()])
            target = np.asarray(measure.tail(z), dtype=float)
            gap = np.abs(np.asarray(parts.tail(z), dtype=float) - target)
            worst_tail = max(worst_tail, float(np.max(gap / np.maximum(1.0, target))))
        return LemmaCheckResult(
            lemma="decomposition",
            inputs={"pieces": DECOMPOSITION_PIECES, "thresholds": int(z.size)},
            lhs=[worst_mass, worst_tail],
            rhs=[DECOMPOSITION_MASS_LIMIT, DECOMPOSITION_TAIL_TOLERANCE],
            margin=min(
                DECOMPOSITION_MASS_LIMIT - worst_mass, DECOMPOSITION_TAIL_TOLERANCE - worst_tail
            ),
            passed=worst_mass <= DECOMPOSITION_MASS_LIMIT
            and worst_tail <= DECOMPOSITION_TAIL_TOLERANCE,
        )

    @staticmethod
    def iter_int_quadrature_check(
        _rng: np.random.Generator, *, N: int, alpha: float, beta: float, R: float
    ) -> LemmaCheckResult:
        return LemmaService.iter_int_check(N=N, alpha=alpha, beta=beta, R=R)

    @staticmethod
    def iter_int_monte_carlo_check(rng: np.random.Generator, *, samples: int) -> LemmaCheckResult:
        return LemmaService.iter_int_check(
            N=5, alpha=0.5, beta=1.0, R=10.0, method="monte_carlo", samples=samples, rng=rng
        )

    @staticmethod
    def gamma_series_check(
        _rng: np.random.Generator, *, alpha: float, beta: float, gamma: float
    ) -> LemmaCheckResult:
        return LemmaService.gamma_series_bound_check(
            alpha=alpha, beta=beta, gamma=gamma, z_grid=np.geomspace(0.01, 20.0, 25)
        )

    @staticmethod
    def paley_zygmund_check(rng: np.random.Generator) -> LemmaCheckResult:
        return LemmaService.paley_zygmund_audit(n_laws=100, rng=rng)

    @staticmethod
    def decoupling_check(
        rng: np.random.Generator, *, theta: float, replications: int
    ) -> LemmaCheckResult:
        return LemmaService.decoupling_check(theta=theta, replications=replications, rng=rng)

    # -----------------------------------------
    # Aggregation
    # -----------------------------------------
    @classmethod
    def checks(cls, *, scale: Scale, replications: int) -> list[Check]:
        chain_reps, products, iter_samples, max_quadrature_N = SIZES[scale]
        checks: list[Check] = [cls.lambert_w_check, cls.decomposition_check]
        checks += [
            partial(cls.iter_int_quadrature_check, N=N, alpha=a, beta=b, R=R)
            for N in range(1, max_quadrature_N + 1)
            for a in (0.0, 0.5)
            for b in (0.0, 1.0)
            for R in (2.0, 10.0)
        ]
        checks.append(partial(cls.iter_int_monte_carlo_check, samples=iter_samples))
        checks.append(partial(cls.product_pareto_check, samples=products))
        checks += [
            partial(cls.chain_law_check, d=d, t=t, N=N, replications=chain_reps)
            for d, t, N in CHAIN_LAW_GRID
        ]
        checks.append(partial(cls.conditional_gap_check, size=100_000))
        checks += [
            partial(cls.gamma_series_check, alpha=a, beta=b, gamma=g)
            for a, b, g in GAMMA_SERIES_TRIPLES
        ]
        checks.append(cls.paley_zygmund_check)
        checks += [
            partial(cls.decoupling_check, theta=theta, replications=replications)
            for theta in (0.05, 0.1)
        ]
        return checks

    @classmethod
    def run(
        cls,
        *,
        seed: int,
        scale: Scale = "quick",
        replications: int = 100_000,
        threads: int | None = None,
    ) -> VerifyReport:
        """
        Check j draws from the stream of replication j, so the report does not
        depend on the thread budget.
        """
        checks = cls.checks(scale=scale, replications=replications)
        results = ReplicationRunner.map(
            lambda i, rng: checks[i](rng), seed=seed, count=len(checks), threads=threads
        )
        failed = [r.lemma for r in results if not r.passed]
        logger.info(
            "verification_completed",
            extra={"replications": len(results), "error_code": ",".join(failed) or None},
        )
        return VerifyReport(checks=results, all_passed=not failed)
