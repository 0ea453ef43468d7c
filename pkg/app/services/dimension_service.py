import math
from itertools import product

import numpy as np

from app.core.exceptions import AnnulusRangeError, DomainError, VariantMismatchError
from app.core.logging import get_logger
from app.domain.enums import FieldMode, Norm, PointMap
from app.domain.field import FieldSample
from app.domain.kernel import theta as theta_exponent
from app.domain.peaks import PeakSet, PeakVariant, point_norms
from app.schemas.reports import (
    DimensionReport,
    HausdorffSummary,
    MinkowskiSummary,
    ShellCount,
    ThicknessVerdict,
)
from app.utils.special import iterated_log, log_plus

logger = get_logger(__name__)

MIN_OLS_SHELLS = 3
RHO_SPACING = 0.01
BOUNDED_SET_VERDICT = "negative (bounded set)"


def _shell_index(norms: np.ndarray) -> np.ndarray:
    """n with e^(n-1) < r <= e^n; r <= 1 maps to shell 0."""
    with np.errstate(divide="ignore"):
        n = np.ceil(np.log(norms) - 1e-12)
    return np.maximum(n, 0).astype(np.int64)


class DimensionService:
    """
    Shell counts, macroscopic dimension summaries and peak-set extraction.
    """

    # -----------------------------------------
    # Shell counts
    # -----------------------------------------
    @staticmethod
    def annulus_counts(
        *, peak_set: PeakSet, n_range: tuple[int, int], norm: Norm = Norm.SUP
    ) -> list[ShellCount]:
        """
        Occupied unit cubes per shell S_n = {e^(n-1) < |q| <= e^n}.
        """
        n_lo, n_hi = n_range
        if n_lo < 0 or n_hi < n_lo:
            raise DomainError("n_range must satisfy 0 <= n_lo <= n_hi")
        max_n = peak_set.max_shell
        if n_hi > max_n:
            raise AnnulusRangeError(
                f"Shell n={n_hi} lies beyond radius {peak_set.radius:g}; "
                f"max admissible n is {max_n}",
                max_n=max_n,
            )
        counts = np.zeros(n_hi + 1, dtype=np.int64)
        if len(peak_set):
            shells = _shell_index(point_norms(peak_set.cubes, norm))
            shells = shells[shells <= n_hi]
            counts = np.bincount(shells, minlength=n_hi + 1)
        return [
            ShellCount(
                n=n,
                count=int(counts[n]),
                a_n=math.log(max(int(counts[n]), 1)) / n if n > 0 else 0.0,
            )
            for n in range(n_lo, n_hi + 1)
        ]

    @staticmethod
    def _trailing(counts: list[ShellCount], window: tuple[int, int] | None) -> list[ShellCount]:
        if not counts:
            return []
        if window is None:
            n_max = counts[-1].n
            window = (max(math.ceil(n_max / 2), 1), n_max)
        lo, hi = window
        return [c for c in counts if lo <= c.n <= hi and c.n > 0]

    # -----------------------------------------
    # Dimension summaries
    # -----------------------------------------
    @classmethod
    def minkowski_dim(
        cls, *, counts: list[ShellCount], window: tuple[int, int] | None = None
    ) -> MinkowskiSummary:
        """
        max a_n and the OLS slope of log C_n on n over a trailing window of
        shells (by default n >= n_max / 2).
        """
        used = cls._trailing(counts, window)
        span = (used[0].n, used[-1].n) if used else (0, 0)
        if all(c.count == 0 for c in counts):
            return MinkowskiSummary(
                window=span, max_summary=None, ols_slope=None, verdict=BOUNDED_SET_VERDICT
            )
        max_summary = max((c.a_n for c in used), default=None)
        occupied = [c for c in used if c.count > 0]
        slope = None
        if len(occupied) >= MIN_OLS_SHELLS:
            n = np.array([c.n for c in occupied], dtype=float)
            log_c = np.log([c.count for c in occupied])
            slope = float(np.polyfit(n, log_c, 1)[0])
        return MinkowskiSummary(window=span, max_summary=max_summary, ols_slope=slope)

    @classmethod
    def hausdorff_dim_upper(
        cls,
        *,
        counts: list[ShellCount],
        rho_grid=None,
        tail_threshold: float = 1.0,
        window: tuple[int, int] | None = None,
        d: int = 1,
    ) -> HausdorffSummary:
        """
        Upper-bound estimate from unit-cube covers, nu_n(rho) = C_n e^(-n rho).

        rho* is the smallest grid rho at which the tail of the partial sums
        flattens over the trailing window: the fitted log-linear trend of the
        terms is nonincreasing and the last occupied term is at most
        tail_threshold times the first. A grid point where every trailing term
        is at most tail_threshold also qualifies. Sums are over all listed
        shells.
        """
        grid = (
            np.round(np.arange(0.0, d + 0.5 + RHO_SPACING / 2, RHO_SPACING), 10)
            if rho_grid is None
            else np.asarray(rho_grid, dtype=float)
        )
        if np.any(np.diff(grid) <= 0):
            raise DomainError("rho_grid must be strictly increasing")
        n_all = np.array([c.n for c in counts], dtype=float)
        c_all = np.array([c.count for c in counts], dtype=float)
        sums = [float(np.sum(c_all * np.exp(-n_all * rho))) for rho in grid]

        used = cls._trailing(counts, window)
        n_win = np.array([c.n for c in used], dtype=float)
        c_win = np.array([c.count for c in used], dtype=float)
        occupied = c_win > 0
        n_occ, log_occ = n_win[occupied], np.log(c_win[occupied])
        trend = float(np.polyfit(n_occ, log_occ, 1)[0]) if n_occ.size >= 2 else None

        rho_star = math.inf
        for rho in grid:
            terms = c_win * np.exp(-n_win * rho)
            bounded = bool(np.all(terms <= tail_threshold))
            flattening = (
                trend is not None
                and rho >= trend
                and log_occ[-1] - n_occ[-1] * rho
                <= math.log(tail_threshold) + log_occ[0] - n_occ[0] * rho
            )
            if bounded or flattening:
                rho_star = float(rho)
                break
        return HausdorffSummary(
            threshold=tail_threshold,
            rho_grid=[float(r) for r in grid],
            sums=sums,
            rho_star=rho_star,
        )

    # -----------------------------------------
    # Peak sets
    # -----------------------------------------
    @staticmethod
    def extract_peak_set(
        *,
        sample: FieldSample,
        variant: PeakVariant,
        radius: float | None = None,
        norm: Norm = Norm.EUCLIDEAN,
    ) -> PeakSet:
        """
        Points (or cubes, judged at their grid argmax) where log Y >= log threshold(|x|).
        """
        mode, continuum = variant.expected_field
        field_mode = sample.meta.get("mode")
        if mode is not None and field_mode is not None and FieldMode(field_mode) != mode:
            raise VariantMismatchError(
                f"Variant {variant.describe()} expects a {mode.value} field, got {field_mode}"
            )
        if continuum is not None and continuum != sample.is_cube_table:
            expected = "a cube-sup table" if continuum else "lattice values"
            raise VariantMismatchError(f"Variant {variant.describe()} expects {expected}")

        where = sample.argmax if sample.is_cube_table else sample.points
        values = np.asarray(sample.values, dtype=float)
        with np.errstate(divide="ignore"):
            log_values = np.where(values > 0, np.log(np.maximum(values, 1e-300)), -np.inf)
        member = log_values >= variant.log_threshold(point_norms(where, norm), sample.d)

        cubes = np.floor(np.asarray(sample.points, dtype=float)).astype(np.int64)
        if radius is None:
            radius = float(np.max(np.abs(cubes))) if cubes.size else 0.0
        return PeakSet(
            d=sample.d,
            cubes=cubes[member],
            radius=radius,
            threshold=variant.describe(),
        )

    @staticmethod
    def peak_set_from_points(points, radius: float | None = None) -> PeakSet:
        points = np.asarray(points, dtype=float)
        if radius is None:
            radius = float(np.ceil(np.max(np.abs(points)))) if points.size else 0.0
        return PeakSet.from_points(points, radius=radius)

    # -----------------------------------------
    # Radial maps
    # -----------------------------------------
    @staticmethod
    def transform_points(
        *,
        points,
        point_map: PointMap,
        N: int = 1,
        d: int | None = None,
        alpha: float | None = None,
        q: float = 1.0,
        norm: Norm = Norm.EUCLIDEAN,
    ) -> np.ndarray:
        """
        x -> (x / |x|) phi(|x|), with phi one of
        (log^(N) r)^(1/d), exp((log+ r)^(1/(1+theta_alpha))),
        exp(log+ r log^(3) r / log^(2) r) or r^q.
        """
        points = np.asarray(points, dtype=float)
        flat = points[:, None] if points.ndim == 1 else points
        dim = flat.shape[1]
        r = point_norms(flat, norm)
        if np.any(r == 0):
            raise DomainError("transform_points is undefined at the origin")
        point_map = PointMap(point_map)
        if point_map == PointMap.ITERLOG_THEN_ROOT:
            phi = np.asarray(iterated_log(N, r)) ** (1.0 / (d or dim))
        elif point_map == PointMap.F_TRANSFORM_A:
            if alpha is None:
                raise DomainError("F_transform_A needs alpha")
            theta_alpha = theta_exponent(alpha, d or dim)
            phi = np.exp(np.asarray(log_plus(r)) ** (1.0 / (1.0 + theta_alpha)))
        elif point_map == PointMap.F_TRANSFORM_H:
            phi = np.exp(log_plus(r) * iterated_log(3, r) / iterated_log(2, r))
        else:
            phi = r**q
        mapped = flat / r[:, None] * np.asarray(phi)[:, None]
        return mapped.reshape(points.shape)

    # -----------------------------------------
    # Thickness
    # -----------------------------------------
    @staticmethod
    def _thickness_grid(n: int, theta: float) -> tuple[float, float, int]:
        """(e^(n-1), side e^(theta n), points per axis)."""
        side = math.exp(theta * n)
        count = math.floor(math.exp(n * (1 - theta)) - math.exp(n * (1 - theta) - 1))
        return math.exp(n - 1), side, max(count, 0)

    @classmethod
    def theta_thick_check(
        cls,
        *,
        peak_set: PeakSet,
        theta: float,
        n_range: tuple[int, int],
        burn_in: int | None = None,
    ) -> ThicknessVerdict:
        """
        For each shell n checks that every grid cube [x_i, x_i + e^(theta n))^d,
        x_i = e^(n-1) + i e^(theta n), meets an occupied unit cube.
        """
        if not 0 < theta < 1:
            raise DomainError("theta must lie in (0, 1)")
        n_lo, n_hi = n_range
        if n_lo < 1 or n_hi < n_lo:
            raise DomainError("n_range must satisfy 1 <= n_lo <= n_hi")
        if n_hi > peak_set.max_shell:
            raise AnnulusRangeError(
                f"Thickness shell n={n_hi} lies beyond the set's radius; "
                f"max admissible n is {peak_set.max_shell}",
                max_n=peak_set.max_shell,
            )
        burn_in = (n_lo + n_hi) // 2 if burn_in is None else burn_in
        d = peak_set.d
        cubes = peak_set.cubes.astype(float)
        offsets = np.array(list(product(range(3), repeat=d)), dtype=np.int64)

        per_shell: list[tuple[int, int, int]] = []
        first_failure = None
        for n in range(n_lo, n_hi + 1):
            start, side, count = cls._thickness_grid(n, theta)
            total = count**d
            if total == 0:
                per_shell.append((n, 0, 0))
                continue
            # unit cube q meets grid cube i iff x_i - 1 < q < x_i + side
            lo = np.floor((cubes - side - start) / side).astype(np.int64) + 1
            hi = np.ceil((cubes + 1.0 - start) / side).astype(np.int64) - 1
            lo = np.maximum(lo, 1)
            hi = np.minimum(hi, count)
            hit = np.zeros(total, dtype=bool)
            for offset in offsets:
                idx = lo + offset
                ok = np.all(idx <= hi, axis=1)
                if np.any(ok):
                    flat = np.ravel_multi_index(tuple((idx[ok] - 1).T), (count,) * d)
                    hit[flat] = True
            failures = int(total - hit.sum())
            per_shell.append((n, failures, total))
            if failures and first_failure is None and n >= burn_in:
                first_failure = (n, int(np.flatnonzero(~hit)[0]) + 1)

        thick = first_failure is None
        return ThicknessVerdict(
            theta=theta,
            burn_in=burn_in,
            thick=thick,
            first_failure=first_failure,
            failures_per_shell=per_shell,
        )

    # -----------------------------------------
    # Planted sets
    # -----------------------------------------
    @staticmethod
    def planted_set(
        *, lam: float, d: int, n_max: int, rng: np.random.Generator
    ) -> PeakSet:
        """
        Lattice points kept independently with probability min(1, |x|^(-lam)),
        out to sup-norm e^(n_max). Drawn shell by shell.
        """
        if lam < 0 or d < 1 or n_max < 0:
            raise DomainError("planted_set needs lam >= 0, d >= 1 and n_max >= 0")
        kept: list[np.ndarray] = []
        for n in range(0, n_max + 1):
            outer = math.floor(math.exp(n))
            inner = math.exp(n - 1) if n > 0 else -1.0
            if d == 1:
                positive = np.arange(math.floor(inner) + 1, outer + 1, dtype=np.int64)
                lattice = np.concatenate([positive, -positive[positive > 0]])[:, None]
            else:
                axis = np.arange(-outer, outer + 1, dtype=np.int64)
                grid = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1)
                grid = grid.reshape(-1, d)
                lattice = grid[np.max(np.abs(grid), axis=1) > inner]
            r = np.linalg.norm(lattice, axis=1)
            with np.errstate(divide="ignore"):
                prob = np.minimum(1.0, np.where(r > 0, r ** (-lam), 1.0))
            kept.append(lattice[rng.random(r.size) < prob])
        cubes = np.concatenate(kept) if kept else np.empty((0, d), dtype=np.int64)
        return PeakSet(
            d=d,
            cubes=cubes,
            radius=math.exp(n_max),
            threshold={"kind": "planted", "lambda": lam},
        )

    # -----------------------------------------
    # Report
    # -----------------------------------------
    @classmethod
    def dimension_report(
        cls,
        *,
        peak_set: PeakSet,
        n_range: tuple[int, int] | None = None,
        rho_grid=None,
        tail_threshold: float = 1.0,
        window: tuple[int, int] | None = None,
        compare_norms: bool = False,
    ) -> DimensionReport:
        n_range = n_range or (1, peak_set.max_shell)
        counts = cls.annulus_counts(peak_set=peak_set, n_range=n_range)
        minkowski = cls.minkowski_dim(counts=counts, window=window)
        hausdorff = cls.hausdorff_dim_upper(
            counts=counts,
            rho_grid=rho_grid,
            tail_threshold=tail_threshold,
            window=window,
            d=peak_set.d,
        )
        comparison = None
        if compare_norms:
            euclidean = cls.annulus_counts(
                peak_set=peak_set, n_range=n_range, norm=Norm.EUCLIDEAN
            )
            comparison = cls.minkowski_dim(counts=euclidean, window=window)
        logger.info(
            "dimension_report_built",
            extra={"artifact": f"shells {n_range[0]}..{n_range[1]}"},
        )
        return DimensionReport(
            d=peak_set.d,
            counts=counts,
            minkowski=minkowski,
            hausdorff=hausdorff,
            norm_comparison=comparison,
            variant=peak_set.threshold or None,
        )
