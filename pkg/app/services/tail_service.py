import math
from typing import Callable

import numpy as np
from scipy import integrate, stats

from app.core.exceptions import DomainError, InsufficientDataError
from app.core.logging import get_logger
from app.domain.enums import FitForm, GaugeExponent, IntegralVerdict, Norm
from app.domain.field import FieldSample
from app.domain.kernel import theta
from app.domain.peaks import GrowthGauge, point_norms
from app.schemas.reports import (
    HillPoint,
    IntegralClassification,
    SlowVariationFit,
    SurvivalPoint,
    TailReport,
)
from app.utils.special import iterated_log, log_plus

logger = get_logger(__name__)

MIN_EXCEEDANCES = 30
MIN_FIT_POINTS = 5
EXPONENT_TIE_TOLERANCE = 1e-12

# numerical classifier: fit window in log x and decision tolerance
NUMERIC_FIT_RANGE = (math.log(1e6), math.log(1e8))
NUMERIC_FIT_POINTS = 64
NUMERIC_TOLERANCE = 1e-6


def _positive_sorted_desc(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=float).reshape(-1)
    if x.size == 0:
        raise InsufficientDataError("No samples")
    if np.any(~(x > 0)):
        raise DomainError("Tail estimators need positive samples")
    return np.sort(x)[::-1]


class TailService:
    """
    Heavy-tail statistics of field samples and the integral-test classifier.
    """

    # -----------------------------------------
    # Hill estimator
    # -----------------------------------------
    @staticmethod
    def hill_estimator(*, samples, k: int) -> float:
        """
        1 / mean_{i <= k} log(X_(i) / X_(k+1)) over the descending order statistics.
        """
        x = _positive_sorted_desc(samples)
        if not 1 <= k < x.size:
            raise DomainError(f"Hill estimator needs 1 <= k < {x.size}, got k={k}")
        logs = np.log(x[: k + 1])
        spacing = float(np.mean(logs[:k] - logs[k]))
        if spacing <= 0:
            raise InsufficientDataError("Zero log-spacings: Hill estimator undefined")
        return 1.0 / spacing

    @staticmethod
    def default_hill_k(n: int) -> int:
        """Convention: floor(n^0.6), clipped to [1, n - 1]."""
        return int(min(max(math.floor(n**0.6), 1), n - 1))

    @staticmethod
    def default_hill_grid(n: int, points: int = 60) -> np.ndarray:
        grid = np.unique(np.geomspace(1, n - 1, points).astype(int))
        return grid[(grid >= 1) & (grid < n)]

    @classmethod
    def hill_trajectory(cls, *, samples, ks=None) -> list[HillPoint]:
        """
        Hill estimates along k; k with zero log-spacing are left out.
        """
        x = _positive_sorted_desc(samples)
        if x.size < 2:
            raise InsufficientDataError("Hill trajectory needs at least two samples")
        ks = cls.default_hill_grid(x.size) if ks is None else np.asarray(ks, dtype=int)
        if np.any(ks < 1) or np.any(ks >= x.size):
            raise DomainError(f"Hill k values must lie in [1, {x.size - 1}]")
        logs = np.log(x)
        cumulative = np.cumsum(logs)
        spacing = cumulative[ks - 1] / ks - logs[ks]
        return [
            HillPoint(k=int(k), alpha=float(1.0 / s))
            for k, s in zip(ks, spacing)
            if s > 0
        ]

    # -----------------------------------------
    # Survival function
    # -----------------------------------------
    @staticmethod
    def survival_curve(*, samples, R_grid) -> list[SurvivalPoint]:
        """
        Empirical P(X > R) with binomial standard errors.
        """
        x = np.sort(np.asarray(samples, dtype=float).reshape(-1))
        R = np.asarray(R_grid, dtype=float).reshape(-1)
        if x.size == 0:
            raise InsufficientDataError("No samples")
        if np.any(np.diff(R) <= 0):
            raise DomainError("R_grid must be strictly increasing")
        n = x.size
        exceed = n - np.searchsorted(x, R, side="right")
        surv = exceed / n
        stderr = np.sqrt(surv * (1.0 - surv) / n)
        return [
            SurvivalPoint(R=float(r), survival=float(s), stderr=float(e), exceedances=int(c))
            for r, s, e, c in zip(R, surv, stderr, exceed)
        ]

    @staticmethod
    def default_R_grid(samples, points: int = 40) -> np.ndarray:
        """Geometric grid from the sample median to just below the maximum."""
        x = np.asarray(samples, dtype=float)
        lo = float(np.quantile(x, 0.5))
        hi = float(np.max(x))
        if not (lo > 0 and hi > lo):
            raise InsufficientDataError("Samples too concentrated for a survival grid")
        return np.geomspace(lo, hi, points + 1)[:-1]

    # -----------------------------------------
    # Slowly varying correction
    # -----------------------------------------
    @staticmethod
    def sv_regressor(R, *, form: FitForm, alpha: float, d: int | None = None) -> np.ndarray:
        """
        Form A: (log+ R)^(1/(1 + theta_alpha)).
        Form B: log+ R * log^(3) R / log^(2) R.
        """
        R = np.asarray(R, dtype=float)
        if FitForm(form) == FitForm.A:
            if d is None:
                raise DomainError("Form A regressor needs the dimension d")
            theta_alpha = theta(alpha, d)
            if not theta_alpha > -1:
                raise DomainError("Form A needs theta_alpha > -1")
            return np.asarray(log_plus(R)) ** (1.0 / (1.0 + theta_alpha))
        return np.asarray(log_plus(R) * iterated_log(3, R) / iterated_log(2, R))

    @classmethod
    def slow_variation_fit(
        cls,
        *,
        survival: list[SurvivalPoint],
        alpha: float,
        form: FitForm,
        fit_range: tuple[float, float] | None = None,
        d: int | None = None,
    ) -> SlowVariationFit:
        """
        Least squares of log S(R) + alpha log R on the form's regressor, over
        the points with 0 < S < 1 and at least MIN_EXCEEDANCES exceedances.
        """
        form = FitForm(form)
        lo, hi = fit_range if fit_range is not None else (0.0, math.inf)
        used = [
            p
            for p in survival
            if 0 < p.survival < 1
            and p.exceedances >= MIN_EXCEEDANCES
            and p.R > 0
            and lo <= p.R <= hi
        ]
        if len(used) < MIN_FIT_POINTS:
            raise InsufficientDataError(
                f"slow_variation_fit needs {MIN_FIT_POINTS} usable points, got {len(used)}"
            )
        R = np.array([p.R for p in used])
        surv = np.array([p.survival for p in used])
        response = np.log(surv) + alpha * np.log(R)
        regressor = cls.sv_regressor(R, form=form, alpha=alpha, d=d)
        if np.ptp(regressor) == 0:
            raise InsufficientDataError("Regressor is constant over the fit range")
        fit = stats.linregress(regressor, response)
        return SlowVariationFit(
            form=form,
            alpha=alpha,
            slope=float(fit.slope),
            slope_stderr=float(fit.stderr),
            intercept=float(fit.intercept),
            r_squared=float(fit.rvalue**2),
            fit_range=(float(R.min()), float(R.max())),
            points=len(used),
        )

    # -----------------------------------------
    # Integral test
    # -----------------------------------------
    @staticmethod
    def gauge_exponent(*, d: int, exponent: GaugeExponent, alpha: float | None = None) -> float:
        if GaugeExponent(exponent) == GaugeExponent.TWO_OVER_D:
            return 2.0 / d
        if alpha is None or not alpha > 0:
            raise DomainError("Exponent 'alpha' needs alpha > 0")
        return float(alpha)

    @classmethod
    def classify_integral(
        cls,
        *,
        gauge: GrowthGauge,
        d: int,
        exponent: GaugeExponent,
        alpha: float | None = None,
    ) -> IntegralClassification:
        """
        Verdict for the integral of x^(d-1) f(x)^(-e) over (1, inf) with f = x^a (log x)^b.
        """
        e = cls.gauge_exponent(d=d, exponent=exponent, alpha=alpha)
        growth = d - e * gauge.a
        log_power = -e * gauge.b
        if abs(growth) <= EXPONENT_TIE_TOLERANCE:
            diverges = e * gauge.b <= 1.0 + EXPONENT_TIE_TOLERANCE
        else:
            diverges = growth > 0
        return IntegralClassification(
            verdict=IntegralVerdict.DIVERGES if diverges else IntegralVerdict.CONVERGES,
            method="exact",
            growth_rate=growth,
            log_power=log_power,
        )

    @classmethod
    def classify_integral_numeric(
        cls,
        *,
        f: Callable | GrowthGauge,
        d: int,
        exponent: GaugeExponent,
        alpha: float | None = None,
    ) -> IntegralClassification:
        """
        Quadrature fallback for arbitrary nondecreasing gauges.

        With x = e^u the integrand becomes exp(h(u)), h(u) = d u - e log f(e^u).
        h is fitted as c + r u - s log u over x in [1e6, 1e8]; the integral
        diverges when r > 0, converges when r < 0, and otherwise diverges iff s <= 1.
        Partial integrals from x = e to 1e6 and to 1e8 are reported alongside.
        """
        e = cls.gauge_exponent(d=d, exponent=exponent, alpha=alpha)
        if isinstance(f, GrowthGauge):
            log_f = f.log_value
        else:

            def log_f(x):
                return np.log(np.asarray(f(x), dtype=float))

        def h(u):
            u = np.asarray(u, dtype=float)
            return d * u - e * np.asarray(log_f(np.exp(u)), dtype=float)

        u = np.linspace(*NUMERIC_FIT_RANGE, NUMERIC_FIT_POINTS)
        design = np.column_stack([np.ones_like(u), u, -np.log(u)])
        coeffs, *_ = np.linalg.lstsq(design, h(u), rcond=None)
        _, rate, log_power = (float(c) for c in coeffs)
        if rate > NUMERIC_TOLERANCE:
            diverges = True
        elif rate < -NUMERIC_TOLERANCE:
            diverges = False
        else:
            diverges = log_power <= 1.0 + NUMERIC_TOLERANCE

        def integrand(v: float) -> float:
            return float(np.exp(h(v)))

        near, _ = integrate.quad(integrand, 1.0, NUMERIC_FIT_RANGE[0], limit=200)
        far, _ = integrate.quad(integrand, NUMERIC_FIT_RANGE[0], NUMERIC_FIT_RANGE[1], limit=200)
        return IntegralClassification(
            verdict=IntegralVerdict.DIVERGES if diverges else IntegralVerdict.CONVERGES,
            method="numerical",
            growth_rate=rate,
            log_power=-log_power,
            partial_integrals=(near, near + far),
        )

    # -----------------------------------------
    # Running maxima
    # -----------------------------------------
    @staticmethod
    def running_max_profile(
        *, sample: FieldSample, radii, norm: Norm = Norm.EUCLIDEAN
    ) -> list[tuple[float, float]]:
        """
        (r, max of the field over evaluated points with |y| <= r); nan before
        the first point. Cube tables are located at their grid argmax.
        """
        radii = np.asarray(radii, dtype=float).reshape(-1)
        if np.any(np.diff(radii) <= 0):
            raise DomainError("radii must be strictly increasing")
        where = sample.argmax if sample.is_cube_table else sample.points
        norms = point_norms(where, norm)
        order = np.argsort(norms, kind="stable")
        norms = norms[order]
        running = np.maximum.accumulate(np.asarray(sample.values, dtype=float)[order])
        idx = np.searchsorted(norms, radii, side="right") - 1
        values = np.where(idx >= 0, running[np.maximum(idx, 0)], np.nan)
        return [(float(r), float(v)) for r, v in zip(radii, values)]

    # -----------------------------------------
    # Report
    # -----------------------------------------
    @classmethod
    def build_tail_report(
        cls,
        *,
        samples,
        R_grid=None,
        ks=None,
        fit_form: FitForm | None = None,
        alpha: float | None = None,
        d: int | None = None,
        fit_range: tuple[float, float] | None = None,
        reference_tail: Callable[[float], float] | None = None,
        top: int = 20,
    ) -> TailReport:
        """
        Hill estimates use the positive samples (Y_+); survival frequencies
        are taken over all samples.
        """
        values = np.asarray(samples, dtype=float).reshape(-1)
        positive = values[values > 0]
        if positive.size == 0:
            raise InsufficientDataError("No positive samples")
        x = np.sort(positive)[::-1]
        R = cls.default_R_grid(values) if R_grid is None else np.asarray(R_grid, dtype=float)
        hill = cls.hill_trajectory(samples=x, ks=ks)
        k0 = cls.default_hill_k(x.size)
        try:
            summary = HillPoint(k=k0, alpha=cls.hill_estimator(samples=x, k=k0))
        except InsufficientDataError:
            summary = None
        survival = cls.survival_curve(samples=values, R_grid=R)

        sv_fit = None
        if fit_form is not None:
            if alpha is None:
                raise DomainError("slow_variation_fit needs alpha")
            try:
                sv_fit = cls.slow_variation_fit(
                    survival=survival, alpha=alpha, form=fit_form, fit_range=fit_range, d=d
                )
            except InsufficientDataError as exc:
                logger.warning("sv_fit_skipped", extra={"error_code": exc.error_code})

        reference = None
        if reference_tail is not None:
            reference = [(float(r), float(reference_tail(float(r)))) for r in R]
        return TailReport(
            sample_size=int(values.size),
            top_order_statistics=[float(v) for v in x[:top]],
            hill=hill,
            hill_summary=summary,
            survival=survival,
            sv_fit=sv_fit,
            reference_tail=reference,
        )
