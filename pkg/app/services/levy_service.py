import math
from dataclasses import dataclass

import numpy as np

from app.core.exceptions import DomainError, InfiniteMassError
from app.domain.enums import ConditionId, MomentKind
from app.domain.levy import (
    DiracMixture,
    LevyMeasure,
    ParetoTail,
    PiecewiseDensity,
    Restricted,
    zero_measure,
)
from app.schemas.reports import ConditionVerdict, MomentDiagnostic, as_moment

# expected atom count above which a sampling interval is refused
MAX_EXPECTED_ATOMS = 1e7
H_SLOPE_TOLERANCE = 0.05
SUP_GRID_D1 = (0.5, 1.0, 1.5, 1.9, 1.99)


@dataclass(frozen=True)
class Decomposition:
    """
    Pieces lambda_1, ..., lambda_K of total mass <= 2 each, plus the
    un-split lower part of the measure below ``threshold``.
    """

    pieces: tuple[LevyMeasure, ...]
    remainder: LevyMeasure
    remainder_mass: float
    covered_mass: float
    threshold: float

    def tail(self, z):
        total = np.asarray(self.remainder.tail(z), dtype=float)
        for piece in self.pieces:
            total = total + np.asarray(piece.tail(z), dtype=float)
        return total if total.ndim else float(total)

    def piece_masses(self) -> list[float]:
        return [piece.total_mass() for piece in self.pieces]


class LevyService:
    """
    Moments, standing conditions, jump sampling and decomposition of Levy measures.
    """

    # -----------------------------------------
    # Tail and moments
    # -----------------------------------------
    @staticmethod
    def tail(*, measure: LevyMeasure, z: float) -> float:
        if not z > 0:
            raise DomainError("tail needs z > 0")
        return float(measure.tail(z))

    @staticmethod
    def truncated_moment(*, measure: LevyMeasure, kind: MomentKind, p: float) -> float:
        """
        mu_p over (0, inf), m_p over (0, 1), M_p over [1, inf), m_log_p with
        weight |log z| on (0, 1), m_paren_log_p with that weight only when p = 1.
        """
        if p < 0:
            raise DomainError("Moment order p must be >= 0")
        kind = MomentKind(kind)
        if kind == MomentKind.MU_P:
            return measure.integral(p, 0.0, math.inf)
        if kind == MomentKind.M_P:
            return measure.integral(p, 0.0, 1.0)
        if kind == MomentKind.BIG_M_P:
            return measure.integral(p, 1.0, math.inf, lo_closed=True)
        if kind == MomentKind.M_LOG_P:
            return measure.integral(p, 0.0, 1.0, log_weight=True)
        return measure.integral(p, 0.0, 1.0, log_weight=p == 1.0)

    @classmethod
    def _diagnostic(
        cls, measure: LevyMeasure, name: str, kind: MomentKind, p: float
    ) -> tuple[MomentDiagnostic, float]:
        value = cls.truncated_moment(measure=measure, kind=kind, p=p)
        diag = MomentDiagnostic(
            name=name, value=as_moment(value), extrapolated=measure.extrapolated
        )
        return diag, value

    # -----------------------------------------
    # Standing conditions
    # -----------------------------------------
    @classmethod
    def check_condition(
        cls,
        *,
        measure: LevyMeasure,
        d: int,
        condition: ConditionId,
        alpha: float | None = None,
    ) -> ConditionVerdict:
        if d < 1:
            raise DomainError("d must be >= 1")
        condition = ConditionId(condition)
        if condition == ConditionId.SUP:
            return cls._check_sup(measure, d)
        if alpha is None or not alpha > 0:
            raise DomainError(f"Condition {condition.value} needs alpha > 0")
        if condition == ConditionId.HEAVY:
            return cls._check_heavy(measure, d, alpha)
        return cls._check_light(measure, d, alpha)

    @classmethod
    def _check_heavy(cls, measure: LevyMeasure, d: int, alpha: float) -> ConditionVerdict:
        p = 1.0 + 2.0 / d
        log_diag, log_value = cls._diagnostic(measure, f"m_log_{p:g}", MomentKind.M_LOG_P, p)
        exponent, exact, note = cls._tail_exponent(measure)
        diagnostics = [log_diag]
        if exponent is None:
            regular = False
        else:
            diagnostics.append(
                MomentDiagnostic(name="tail_exponent", value=exponent, extrapolated=not exact)
            )
            tolerance = 1e-12 if exact else H_SLOPE_TOLERANCE
            regular = abs(exponent - alpha) <= tolerance
        holds = math.isfinite(log_value) and regular
        return ConditionVerdict(
            condition=ConditionId.HEAVY,
            d=d,
            alpha=alpha,
            holds=holds,
            diagnostics=diagnostics,
            note=note,
        )

    @staticmethod
    def _tail_exponent(measure: LevyMeasure) -> tuple[float | None, bool, str | None]:
        """
        (estimated alpha, exact?, note) for lambda([R, inf)) ~ C R^(-alpha).
        """
        base, hi = measure, math.inf
        while isinstance(base, Restricted):
            hi = min(hi, base.hi)
            base = base.base
        if not math.isinf(measure.support[1]) or not math.isinf(hi):
            return None, True, "bounded support: no power-law tail"
        if isinstance(base, ParetoTail):
            return base.alpha, True, None
        if isinstance(base, PiecewiseDensity):
            z_top = base.knots[-1][0]
            grid = np.geomspace(z_top / 10.0, z_top, 25)
            tails = np.asarray(measure.tail(grid), dtype=float)
            if np.any(tails <= 0):
                return None, False, "tail vanishes in the top decade"
            slope = np.polyfit(np.log(grid), np.log(tails), 1)[0]
            return float(-slope), False, "log-log slope fit over the top knot decade"
        return None, True, "no regular-variation check for this measure kind"

    @classmethod
    def _check_light(cls, measure: LevyMeasure, d: int, alpha: float) -> ConditionVerdict:
        p = 1.0 + 2.0 / d
        log_diag, log_value = cls._diagnostic(measure, f"m_log_{p:g}", MomentKind.M_LOG_P, p)
        big_diag, big_value = cls._diagnostic(measure, f"M_{alpha:g}", MomentKind.BIG_M_P, alpha)
        total = log_value + big_value
        return ConditionVerdict(
            condition=ConditionId.LIGHT,
            d=d,
            alpha=alpha,
            holds=bool(0 < total < math.inf),
            diagnostics=[log_diag, big_diag],
        )

    @classmethod
    def _check_sup(cls, measure: LevyMeasure, d: int) -> ConditionVerdict:
        if d == 1:
            diagnostics, holds = [], False
            for q in SUP_GRID_D1:
                diag, value = cls._diagnostic(measure, f"m_{q:g}", MomentKind.M_P, q)
                diagnostics.append(diag)
                holds = holds or math.isfinite(value)
            note = "needs m_q < inf for some q in (0, 2)"
        else:
            q = 2.0 / d
            diag, value = cls._diagnostic(
                measure, f"m_paren_log_{q:g}", MomentKind.M_PAREN_LOG_P, q
            )
            diagnostics, holds, note = [diag], math.isfinite(value), None
        return ConditionVerdict(
            condition=ConditionId.SUP, d=d, holds=holds, diagnostics=diagnostics, note=note
        )

    # -----------------------------------------
    # Sampling
    # -----------------------------------------
    @staticmethod
    def smallest_admissible_z_lo(
        *, measure: LevyMeasure, z_hi: float, exposure: float
    ) -> float:
        """
        Smallest z_lo keeping exposure * lambda((z_lo, z_hi]) <= MAX_EXPECTED_ATOMS.
        """
        upper = 0.0 if math.isinf(z_hi) else float(measure.tail(z_hi))
        budget = MAX_EXPECTED_ATOMS / max(exposure, 1e-300)
        return float(measure.inverse_tail(upper + budget))

    @classmethod
    def sample_jumps(
        cls,
        *,
        measure: LevyMeasure,
        size_interval: tuple[float, float],
        time_window: float,
        space_volume: float,
        rng: np.random.Generator,
    ) -> np.ndarray:
        """
        Jump sizes of a Poisson sample on (z_lo, z_hi] over the given window.
        """
        z_lo, z_hi = size_interval
        if time_window < 0 or space_volume < 0:
            raise DomainError("Window sizes must be nonnegative")
        mass = measure.mass(z_lo, z_hi)
        exposure = time_window * space_volume
        if math.isinf(mass):
            smallest = cls.smallest_admissible_z_lo(measure=measure, z_hi=z_hi, exposure=exposure)
            raise InfiniteMassError(
                f"lambda(({z_lo:g}, {z_hi:g}]) is infinite; smallest admissible "
                f"z_lo is about {smallest:.6g}",
                smallest_z_lo=smallest,
            )
        mean = exposure * mass
        count = int(rng.poisson(mean)) if mean > 0 else 0
        return measure.sample_sizes(z_lo, z_hi, count, rng)

    # -----------------------------------------
    # Decomposition
    # -----------------------------------------
    @classmethod
    def decompose(cls, *, measure: LevyMeasure, pieces: int) -> Decomposition:
        """
        Splits the measure along mass coordinates: piece k takes the mass between
        tail levels k - 1 and k, i.e. lambda restricted to (z_k, z_{k-1}] with
        z_v = inverse_tail(v). A unit cell lying inside a single atom is widened
        to two units (or the atom's end), so each piece has mass <= 2.
        """
        if pieces < 1:
            raise DomainError("decompose needs K >= 1")
        total = measure.total_mass()
        atoms = measure.atoms()
        if atoms is not None:
            return cls._decompose_atomic(atoms, total, pieces)

        result: list[LevyMeasure] = []
        a = 0.0
        while len(result) < pieces and a < total:
            b = min(a + 1.0, total)
            hi = math.inf if a == 0.0 else float(measure.inverse_tail(a))
            lo = measure.support[0] if b >= total else float(measure.inverse_tail(b))
            if hi > lo:
                result.append(Restricted(measure, lo, hi))
            a = b
        threshold = 0.0 if a >= total else float(measure.inverse_tail(a))
        if a >= total:
            remainder: LevyMeasure = zero_measure()
        elif a == 0.0:
            remainder = measure
        else:
            remainder = Restricted(measure, 0.0, threshold)
        return Decomposition(
            pieces=tuple(result),
            remainder=remainder,
            remainder_mass=total - a if math.isfinite(total) else math.inf,
            covered_mass=a,
            threshold=threshold,
        )

    @staticmethod
    def _decompose_atomic(
        atoms: tuple[np.ndarray, np.ndarray], total: float, pieces: int
    ) -> Decomposition:
        sizes, weights = atoms
        # atom j occupies mass coordinates [start_j, end_j), largest atoms first
        end = np.cumsum(weights[::-1])[::-1]
        start = end - weights

        def cell(lo: float, hi: float) -> DiracMixture:
            overlap = np.minimum(end, hi) - np.maximum(start, lo)
            keep = overlap > 0
            return DiracMixture(tuple(zip(sizes[keep].tolist(), overlap[keep].tolist())))

        result: list[LevyMeasure] = []
        a = 0.0
        while len(result) < pieces and a < total:
            b = min(a + 1.0, total)
            inside = np.flatnonzero((start <= a) & (end >= b))
            if inside.size:
                b = min(a + 2.0, float(end[inside[0]]))
            result.append(cell(a, b))
            a = b
        covered = a
        remainder = cell(covered, total) if covered < total else zero_measure()
        below = start < covered
        threshold = float(sizes[below].min()) if np.any(below) else 0.0
        return Decomposition(
            pieces=tuple(result),
            remainder=remainder,
            remainder_mass=max(total - covered, 0.0),
            covered_mass=covered,
            threshold=threshold,
        )
