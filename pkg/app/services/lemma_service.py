import math

import numpy as np
from scipy import integrate, special

from app.core.exceptions import DomainError
from app.core.logging import get_logger
from app.domain.decoupling import DecouplingToy
from app.schemas.reports import LemmaCheckResult
from app.utils.special import lambert_w

logger = get_logger(__name__)

SERIES_TOLERANCE = 1e-16
SERIES_BLOCK = 512
SERIES_MAX_TERMS = 10**7
BOUND_TOLERANCE = 1e-9
EXACT_TOLERANCE = 1e-12
ITER_INT_REL_TOLERANCE = 1e-6
# lower cut of the log-coordinates in the quadrature oracle
ORACLE_LOG_FLOOR = -60.0
MC_CHUNK = 1_000_000
DECOUPLING_SIGMAS = 4.0


def _default_c_grid() -> np.ndarray:
    return np.unique(np.concatenate([np.geomspace(1e-3, 1e3, 241), [1.0]]))


class LemmaService:
    """
    Special-function identities and probabilistic inequalities, checked numerically.
    """

    # -----------------------------------------
    # Lambert W
    # -----------------------------------------
    @staticmethod
    def lambert_w_bounds_check(*, x_grid) -> LemmaCheckResult:
        """
        log x - log log x <= W(x) <= log x - (1/2) log log x on the grid;
        reports the smallest grid x from which both bounds hold onward.
        """
        x = np.sort(np.asarray(x_grid, dtype=float).reshape(-1))
        if x.size == 0 or np.any(x <= 1):
            raise DomainError("lambert_w_bounds_check needs grid points x > 1")
        w = np.asarray(lambert_w(x))
        log_x = np.log(x)
        loglog_x = np.log(log_x)
        lower = log_x - loglog_x
        upper = log_x - 0.5 * loglog_x
        slack = np.minimum(w - lower, upper - w)
        holds = slack >= -EXACT_TOLERANCE * np.maximum(1.0, np.abs(w))
        failures = np.flatnonzero(~holds)
        start = 0 if failures.size == 0 else int(failures[-1]) + 1
        x0 = float(x[start]) if start < x.size else None
        residual = np.abs(w * np.exp(w) - x) / x
        return LemmaCheckResult(
            lemma="lambert_w_bounds",
            inputs={"x_min": float(x[0]), "x_max": float(x[-1]), "points": int(x.size)},
            lhs=lower.tolist(),
            rhs=upper.tolist(),
            margin=float(slack[start:].min()) if x0 is not None else float(slack[-1]),
            passed=x0 is not None,
            details={"x0": x0, "max_relative_residual": float(residual.max())},
        )

    # -----------------------------------------
    # Iterated integral
    # -----------------------------------------
    @staticmethod
    def _check_iter_int_args(N: int, alpha: float, beta: float, R: float) -> None:
        if N < 1 or not alpha > -1 or not beta > -1 or not R > 1:
            raise DomainError("iterated integral needs N >= 1, alpha > -1, beta > -1, R > 1")

    @classmethod
    def iter_int_closed(
        cls, *, N: int, alpha: float, beta: float, R: float
    ) -> tuple[float, list[float]]:
        """
        Sum over i < N of c_{N,i} (log R)^i with
        c_{N,i} = N^i Gamma(N - i + beta) / (i! (N - i - 1)! (alpha + 1)^(N - i + beta)).
        """
        cls._check_iter_int_args(N, alpha, beta, R)
        i = np.arange(N, dtype=float)
        log_c = (
            i * math.log(N)
            + special.gammaln(N - i + beta)
            - special.gammaln(i + 1.0)
            - special.gammaln(N - i)
            - (N - i + beta) * math.log1p(alpha)
        )
        sign = special.gammasgn(N - i + beta)
        coefficients = sign * np.exp(log_c)
        value = float(np.sum(coefficients * math.log(R) ** i))
        return value, coefficients.tolist()

    @classmethod
    def iter_int_oracle(
        cls,
        *,
        N: int,
        alpha: float,
        beta: float,
        R: float,
        method: str = "quadrature",
        samples: int = 10**7,
        rng: np.random.Generator | None = None,
    ) -> tuple[float, float]:
        """
        (value, error estimate) of the defining N-fold integral, computed
        independently of the closed form.
        """
        cls._check_iter_int_args(N, alpha, beta, R)
        if method == "quadrature":
            return cls._iter_int_quadrature(N, alpha, beta, R)
        if method == "monte_carlo":
            if rng is None:
                raise DomainError("Monte Carlo oracle needs an rng")
            return cls._iter_int_monte_carlo(N, alpha, beta, R, samples, rng)
        raise DomainError(f"Unknown oracle method '{method}'")

    @staticmethod
    def _iter_int_quadrature(N: int, alpha: float, beta: float, R: float) -> tuple[float, float]:
        """
        nquad in v_i = log y_i: exp((alpha + 1) s) (-s)^beta on s = sum v <= 0,
        v_i in [ORACLE_LOG_FLOOR, log R].
        """
        if N > 3:
            raise DomainError("Quadrature oracle supports N <= 3; use monte_carlo")
        log_r = math.log(R)

        def integrand(*v):
            s = math.fsum(v)
            return math.exp((alpha + 1.0) * s) * (-s) ** beta if s < 0 else 0.0

        def innermost(*outer):
            return [ORACLE_LOG_FLOOR, max(ORACLE_LOG_FLOOR, min(log_r, -math.fsum(outer)))]

        def outer_range(*_):
            return [ORACLE_LOG_FLOOR, log_r]

        def kink(*outer):
            # the innermost upper limit switches from log R to -sum(outer) here
            point = -log_r - math.fsum(outer)
            points = [point] if ORACLE_LOG_FLOOR < point < log_r else None
            return {"limit": 200, "epsabs": 1e-12, "epsrel": 1e-11, "points": points}

        plain = {"limit": 200, "epsabs": 1e-12, "epsrel": 1e-11}
        ranges = [innermost] + [outer_range] * (N - 1)
        opts = [plain] + [kink] + [plain] * (N - 2) if N > 1 else [plain]
        value, error = integrate.nquad(integrand, ranges, opts=opts)
        return float(value), float(error)

    @staticmethod
    def _iter_int_monte_carlo(
        N: int, alpha: float, beta: float, R: float, samples: int, rng: np.random.Generator
    ) -> tuple[float, float]:
        """
        Importance sampling with y_i = R U^(1/(alpha+1)), i.e. density proportional to y^alpha.
        """
        log_scale = N * ((alpha + 1.0) * math.log(R) - math.log1p(alpha))
        total = 0.0
        total_sq = 0.0
        done = 0
        while done < samples:
            size = min(MC_CHUNK, samples - done)
            u = rng.random((size, N))
            log_p = N * math.log(R) + np.sum(np.log(u), axis=1) / (alpha + 1.0)
            inside = log_p <= 0
            weight = np.zeros(size)
            weight[inside] = (-log_p[inside]) ** beta
            total += float(weight.sum())
            total_sq += float(np.dot(weight, weight))
            done += size
        mean = total / samples
        var = max(total_sq / samples - mean * mean, 0.0)
        scale = math.exp(log_scale)
        return scale * mean, scale * math.sqrt(var / samples)

    @classmethod
    def iter_int_check(
        cls,
        *,
        N: int,
        alpha: float,
        beta: float,
        R: float,
        method: str = "quadrature",
        samples: int = 10**7,
        rng: np.random.Generator | None = None,
    ) -> LemmaCheckResult:
        """Closed form against an oracle: relative 1e-6 (quadrature) or 3 sigma (Monte Carlo)."""
        closed, coefficients = cls.iter_int_closed(N=N, alpha=alpha, beta=beta, R=R)
        oracle, error = cls.iter_int_oracle(
            N=N, alpha=alpha, beta=beta, R=R, method=method, samples=samples, rng=rng
        )
        if method == "quadrature":
            allowed = ITER_INT_REL_TOLERANCE * abs(closed)
        else:
            allowed = 3.0 * error
        gap = abs(closed - oracle)
        return LemmaCheckResult(
            lemma="iter_int",
            inputs={"N": N, "alpha": alpha, "beta": beta, "R": R, "method": method},
            lhs=[closed],
            rhs=[oracle],
            margin=allowed - gap,
            passed=gap <= allowed,
            details={"coefficients": coefficients, "oracle_error": error},
        )

    # -----------------------------------------
    # Gamma series
    # -----------------------------------------
    @staticmethod
    def log_gamma_series(*, alpha: float, beta: float, gamma: float, z: float) -> float:
        """
        log of sum over N >= 0 of z^N / Gamma(alpha N + beta)^(1/gamma), truncated
        once terms fall below SERIES_TOLERANCE times the partial sum.
        """
        if not (alpha > 0 and beta > 0 and gamma > 0):
            raise DomainError("Gamma series needs alpha, beta, gamma > 0")
        if z < 0:
            raise DomainError("Gamma series needs z >= 0")
        if z == 0:
            return -float(special.gammaln(beta)) / gamma
        log_z = math.log(z)
        log_tol = math.log(SERIES_TOLERANCE)
        partial = -math.inf
        start = 0
        while start < SERIES_MAX_TERMS:
            n = np.arange(start, start + SERIES_BLOCK, dtype=float)
            log_terms = n * log_z - special.gammaln(alpha * n + beta) / gamma
            partial = float(special.logsumexp([partial, special.logsumexp(log_terms)]))
            last = log_terms[-1]
            if last < partial + log_tol and last < log_terms[-2]:
                return partial
            start += SERIES_BLOCK
        raise DomainError("Gamma series did not converge within the term budget")

    @classmethod
    def gamma_series_bound_check(
        cls, *, alpha: float, beta: float, gamma: float, z_grid, c_grid=None
    ) -> LemmaCheckResult:
        """
        Smallest grid C with series(z) <= (gamma/alpha) C exp(C z^(gamma/alpha))
        on every grid z, compared in log space.
        """
        z = np.asarray(z_grid, dtype=float).reshape(-1)
        grid = _default_c_grid() if c_grid is None else np.sort(np.asarray(c_grid, dtype=float))
        lhs = np.array(
            [cls.log_gamma_series(alpha=alpha, beta=beta, gamma=gamma, z=float(v)) for v in z]
        )
        power = z ** (gamma / alpha)
        found = None
        for c in grid:
            rhs = math.log(gamma / alpha) + math.log(c) + c * power
            if np.all(lhs <= rhs + BOUND_TOLERANCE):
                found = float(c)
                break
        c_used = found if found is not None else float(grid[-1])
        rhs = math.log(gamma / alpha) + math.log(c_used) + c_used * power
        return LemmaCheckResult(
            lemma="gamma_series",
            inputs={"alpha": alpha, "beta": beta, "gamma": gamma, "z_max": float(z.max())},
            lhs=lhs.tolist(),
            rhs=rhs.tolist(),
            margin=float(np.min(rhs - lhs)),
            passed=found is not None,
            details={"C": found, "c_grid": [float(grid[0]), float(grid[-1]), int(grid.size)]},
        )

    # -----------------------------------------
    # Paley-Zygmund
    # -----------------------------------------
    @staticmethod
    def paley_zygmund_check(
        *, values, probs, alpha: float, delta: float, p: float
    ) -> LemmaCheckResult:
        """
        Both Paley-Zygmund variants for a discrete law, with exact moments:
        P(X > delta E X) >= (1 - delta)^q E[X]^q / E[X^p]^(1/(p-1)) and
        E[X^alpha] >= 2^(-alpha-q) E[X]^(alpha+q) / E[X^p]^(1/(p-1)), q = p/(p-1).
        """
        if not (0 < alpha < 1 and 0 < delta < 1 and p > 1):
            raise DomainError("Paley-Zygmund check needs alpha, delta in (0, 1) and p > 1")
        x = np.asarray(values, dtype=float)
        w = np.asarray(probs, dtype=float)
        if np.any(x <= 0) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise DomainError("Law must have positive support and probabilities summing to 1")
        q = p / (p - 1.0)
        mean = float(np.dot(w, x))
        moment_p = float(np.dot(w, x**p))
        moment_alpha = float(np.dot(w, x**alpha))
        prob = float(w[x > delta * mean].sum())
        bound_prob = (1.0 - delta) ** q * mean**q / moment_p ** (1.0 / (p - 1.0))
        bound_alpha = 2.0 ** (-alpha - q) * mean ** (alpha + q) / moment_p ** (1.0 / (p - 1.0))
        lhs = [prob, moment_alpha]
        rhs = [bound_prob, bound_alpha]
        slack = [l - r + EXACT_TOLERANCE * max(1.0, r) for l, r in zip(lhs, rhs)]
        return LemmaCheckResult(
            lemma="paley_zygmund",
            inputs={"alpha": alpha, "delta": delta, "p": p, "support": int(x.size)},
            lhs=lhs,
            rhs=rhs,
            margin=float(min(l - r for l, r in zip(lhs, rhs))),
            passed=all(s >= 0 for s in slack),
        )

    @staticmethod
    def random_discrete_law(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Up to 10 lognormal atoms with Dirichlet weights."""
        size = int(rng.integers(1, 11))
        values = rng.lognormal(mean=0.0, sigma=1.5, size=size)
        probs = rng.dirichlet(np.ones(size))
        return values, probs / probs.sum()

    @classmethod
    def paley_zygmund_audit(cls, *, n_laws: int, rng: np.random.Generator) -> LemmaCheckResult:
        results = []
        for _ in range(n_laws):
            values, probs = cls.random_discrete_law(rng)
            alpha, delta = rng.uniform(0.05, 0.95, size=2)
            p = float(rng.uniform(1.1, 4.0))
            results.append(
                cls.paley_zygmund_check(
                    values=values, probs=probs, alpha=float(alpha), delta=float(delta), p=p
                )
            )
        passed = sum(r.passed for r in results)
        return LemmaCheckResult(
            lemma="paley_zygmund_audit",
            inputs={"n_laws": n_laws},
            lhs=[float(passed)],
            rhs=[float(n_laws)],
            margin=min(r.margin for r in results) if results else 0.0,
            passed=passed == n_laws,
            details={"failures": [r.inputs for r in results if not r.passed]},
        )

    # -----------------------------------------
    # Decoupling
    # -----------------------------------------
    @staticmethod
    def simulate_decoupling_toy(
        *, toy: DecouplingToy, replications: int, rng: np.random.Generator
    ) -> tuple[np.ndarray, np.ndarray]:
        """
        (X, X') per replication, built from the same atoms.
        """
        mean = toy.rate * toy.horizon
        counts = rng.poisson(mean, size=replications)
        reps = np.repeat(np.arange(replications), counts)
        times = rng.uniform(0.0, toy.horizon, size=reps.size)
        marks = rng.random(reps.size) ** (-1.0 / toy.mark_alpha)
        order = np.lexsort((times, reps))
        reps, times, marks = reps[order], times[order], marks[order]
        offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])

        if toy.integrand == "constant":
            weight = np.ones(reps.size)
            weight_copy = weight
        else:
            earlier = np.arange(reps.size) - offsets[reps]
            weight = np.minimum(earlier, toy.cap).astype(float)

            counts_copy = rng.poisson(mean, size=replications)
            reps_copy = np.repeat(np.arange(replications), counts_copy)
            times_copy = rng.uniform(0.0, toy.horizon, size=reps_copy.size)
            span = 2.0 * toy.horizon
            keys_copy = np.sort(reps_copy * span + times_copy)
            positions = np.searchsorted(keys_copy, reps * span + times, side="left")
            offsets_copy = np.concatenate([[0], np.cumsum(counts_copy)[:-1]])
            weight_copy = np.minimum(positions - offsets_copy[reps], toy.cap).astype(float)

        x = np.bincount(reps, weights=marks * weight, minlength=replications)
        x_copy = np.bincount(reps, weights=marks * weight_copy, minlength=replications)
        return x, x_copy

    @classmethod
    def decoupling_check(
        cls,
        *,
        theta: float,
        replications: int,
        rng: np.random.Generator,
        toy: DecouplingToy | None = None,
        R_grid=None,
    ) -> LemmaCheckResult:
        """
        P(X > R) <= 7 theta P(X > R/3) + 2 P(X' > R/6) + P(X' > theta R/6) / theta,
        each side estimated by Monte Carlo; holds within 4 combined stderr at every R.
        """
        if not theta > 0:
            raise DomainError("theta must be positive")
        toy = toy or DecouplingToy()
        x, x_copy = cls.simulate_decoupling_toy(toy=toy, replications=replications, rng=rng)
        R = (
            np.quantile(x, [0.5, 0.75, 0.9, 0.95, 0.99])
            if R_grid is None
            else np.asarray(R_grid, dtype=float)
        )
        R = R[R > 0]
        n = float(replications)

        def freq(sample: np.ndarray, level: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            p = np.mean(sample[:, None] > level[None, :], axis=0)
            return p, np.sqrt(p * (1.0 - p) / n)

        p1, s1 = freq(x, R)
        p2, s2 = freq(x, R / 3.0)
        p3, s3 = freq(x_copy, R / 6.0)
        p4, s4 = freq(x_copy, theta * R / 6.0)
        rhs = 7.0 * theta * p2 + 2.0 * p3 + p4 / theta
        stderr = np.sqrt(s1**2 + (7.0 * theta * s2) ** 2 + (2.0 * s3) ** 2 + (s4 / theta) ** 2)
        slack = rhs + DECOUPLING_SIGMAS * stderr - p1
        logger.info(
            "decoupling_check_completed",
            extra={"replications": replications},
        )
        return LemmaCheckResult(
            lemma="decoupling",
            inputs={"theta": theta, "replications": replications, **toy.describe()},
            lhs=p1.tolist(),
            rhs=rhs.tolist(),
            margin=float(slack.min()) if slack.size else 0.0,
            passed=bool(np.all(slack >= 0)),
            details={"R_grid": R.tolist(), "stderr": stderr.tolist()},
        )
