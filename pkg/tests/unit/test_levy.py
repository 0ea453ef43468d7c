import math

import numpy as np
import pytest

from app.core.exceptions import DomainError, InfiniteMassError, QuadratureRequiredError
from app.domain.enums import ConditionId, Interpolation, MomentKind
from app.domain.levy import DiracMixture, ParetoTail, PiecewiseDensity, Restricted
from app.services.levy_service import LevyService


def inverse_square_density():
    # density z^-2 on (0, inf): tail 1/z, infinite mass
    return PiecewiseDensity(knots=((1.0, 1.0), (2.0, 0.25)), extend_tails=True)


# -----------------------------------------
# Tails and moments
# -----------------------------------------
def test_tail_values():
    assert LevyService.tail(measure=ParetoTail(2.0), z=2.0) == 0.25
    assert LevyService.tail(measure=DiracMixture(((1.0, 3.0),)), z=0.5) == 3.0
    assert LevyService.tail(measure=DiracMixture(((1.0, 3.0),)), z=1.0) == 0.0


def test_tail_rejects_nonpositive_threshold():
    with pytest.raises(DomainError):
        LevyService.tail(measure=ParetoTail(1.0), z=0.0)


def test_truncated_moments():
    pareto_two = ParetoTail(2.0)
    moment = LevyService.truncated_moment
    assert moment(measure=pareto_two, kind=MomentKind.BIG_M_P, p=1.0) == pytest.approx(2.0)
    assert moment(measure=pareto_two, kind=MomentKind.M_P, p=1.0) == 0.0
    assert moment(measure=ParetoTail(0.5), kind=MomentKind.BIG_M_P, p=2.0) == math.inf
    with pytest.raises(DomainError):
        LevyService.truncated_moment(measure=pareto_two, kind=MomentKind.MU_P, p=-1.0)


def test_small_jump_moments_of_inverse_square_density():
    measure = inverse_square_density()
    second = LevyService.truncated_moment(measure=measure, kind=MomentKind.M_P, p=2.0)
    assert second == pytest.approx(1.0)
    assert LevyService.truncated_moment(measure=measure, kind=MomentKind.M_P, p=1.0) == math.inf
    assert measure.extrapolated


@pytest.mark.parametrize(
    "measure, p",
    [
        (DiracMixture(((0.5, 2.0), (1.0, 1.0), (3.0, 0.5))), 1.0),
        (DiracMixture(((0.5, 2.0), (1.0, 1.0), (3.0, 0.5))), 2.5),
        (PiecewiseDensity(knots=((0.2, 3.0), (1.0, 1.0), (5.0, 0.1))), 0.5),
        (PiecewiseDensity(knots=((0.2, 3.0), (1.0, 1.0), (5.0, 0.1))), 2.0),
        (ParetoTail(3.0), 1.5),
        (Restricted(ParetoTail(1.0), 0.5, 4.0), 1.0),
    ],
)
def test_small_and_large_moments_partition_the_full_moment(measure, p):
    small = LevyService.truncated_moment(measure=measure, kind=MomentKind.M_P, p=p)
    large = LevyService.truncated_moment(measure=measure, kind=MomentKind.BIG_M_P, p=p)
    full = LevyService.truncated_moment(measure=measure, kind=MomentKind.MU_P, p=p)

    assert math.isfinite(full)
    assert small + large == pytest.approx(full, rel=1e-10)


def test_dirac_mixture_merges_and_orders_atoms():
    measure = DiracMixture(((2.0, 1.0), (1.0, 0.5), (2.0, 1.0)))
    sizes, weights = measure.atoms()
    assert sizes.tolist() == [1.0, 2.0]
    assert weights.tolist() == [0.5, 2.0]
    assert measure.atom_mass(2.0) == 2.0
    assert measure.left_tail(2.0) == 2.0


def test_invalid_measures_raise():
    with pytest.raises(DomainError):
        ParetoTail(0.0)
    with pytest.raises(DomainError):
        DiracMixture(((0.0, 1.0),))
    with pytest.raises(DomainError):
        PiecewiseDensity(knots=((2.0, 1.0), (1.0, 1.0)))
    with pytest.raises(DomainError):
        Restricted(ParetoTail(1.0), 2.0, 1.0)
    # density z^-4 near 0 is not Levy-integrable
    with pytest.raises(DomainError):
        PiecewiseDensity(knots=((1.0, 1.0), (2.0, 1.0 / 16.0)), extend_tails=True)


def test_linear_density_moments_need_quadrature():
    measure = PiecewiseDensity(knots=((1.0, 1.0), (3.0, 0.0)), interpolation=Interpolation.LINEAR)
    assert measure.total_mass() == pytest.approx(1.0)
    with pytest.raises(QuadratureRequiredError):
        measure.integral(1.0, 0.0, math.inf)
    with_grid = PiecewiseDensity(
        knots=((1.0, 1.0), (3.0, 0.0)), interpolation=Interpolation.LINEAR, quadrature_points=16
    )
    # density (3 - z) / 2 on [1, 3]
    assert with_grid.integral(1.0, 0.0, math.inf) == pytest.approx(5.0 / 3.0)


def test_restricted_measure():
    measure = Restricted(ParetoTail(1.0), 2.0, 4.0)
    assert measure.total_mass() == pytest.approx(0.25)
    assert measure.tail(3.0) == pytest.approx(1.0 / 3.0 - 0.25)
    assert measure.tail(5.0) == 0.0
    assert measure.support == (2.0, 4.0)


# -----------------------------------------
# Standing conditions
# -----------------------------------------
def test_heavy_condition_holds_for_matching_pareto():
    verdict = LevyService.check_condition(
        measure=ParetoTail(0.5), d=1, condition=ConditionId.HEAVY, alpha=0.5
    )
    assert verdict.holds
    assert verdict.diagnostics[0].finite


def test_light_condition_fails_without_moment():
    verdict = LevyService.check_condition(
        measure=ParetoTail(0.5), d=1, condition=ConditionId.LIGHT, alpha=2.0
    )
    assert not verdict.holds
    assert any(not diag.finite for diag in verdict.diagnostics)


def test_sup_condition():
    verdict = LevyService.check_condition(
        measure=DiracMixture(((1.0, 1.0),)), d=2, condition=ConditionId.SUP
    )
    assert verdict.holds


def test_condition_without_alpha_raises():
    with pytest.raises(DomainError):
        LevyService.check_condition(measure=ParetoTail(1.0), d=1, condition=ConditionId.HEAVY)


# -----------------------------------------
# Sampling
# -----------------------------------------
def test_sample_jumps_stay_in_interval(rng):
    sizes = LevyService.sample_jumps(
        measure=ParetoTail(1.0),
        size_interval=(2.0, 10.0),
        time_window=1.0,
        space_volume=1000.0,
        rng=rng,
    )
    assert sizes.size > 0
    assert np.all((sizes >= 2.0) & (sizes <= 10.0))


def test_sample_jumps_match_tail(rng):
    sizes = LevyService.sample_jumps(
        measure=ParetoTail(1.0),
        size_interval=(1.0, math.inf),
        time_window=1.0,
        space_volume=200_000.0,
        rng=rng,
    )
    # P(Z > 4 | Z > 1) = 1/4
    assert np.mean(sizes > 4.0) == pytest.approx(0.25, abs=0.01)


def test_sample_jumps_count_is_poisson(rng):
    # lambda((2, 10]) = 1/2 - 1/10, exposure 5
    mean = 5.0 * 0.4
    n = 20_000
    counts = np.array(
        [
            LevyService.sample_jumps(
                measure=ParetoTail(1.0),
                size_interval=(2.0, 10.0),
                time_window=1.0,
                space_volume=5.0,
                rng=rng,
            ).size
            for _ in range(n)
        ]
    )

    assert counts.mean() == pytest.approx(mean, abs=4.0 * math.sqrt(mean / n))
    assert counts.var(ddof=1) == pytest.approx(mean, rel=0.1)


def test_sample_jumps_infinite_mass_reports_cutoff(rng):
    with pytest.raises(InfiniteMassError) as exc:
        LevyService.sample_jumps(
            measure=inverse_square_density(),
            size_interval=(0.0, 1.0),
            time_window=1.0,
            space_volume=1.0,
            rng=rng,
        )
    assert exc.value.exit_code == 2
    assert exc.value.smallest_z_lo == pytest.approx(1e-7, rel=1e-6)


# -----------------------------------------
# Decomposition
# -----------------------------------------
def test_decompose_pareto_single_piece():
    parts = LevyService.decompose(measure=ParetoTail(1.0), pieces=1)
    assert parts.piece_masses() == pytest.approx([1.0])
    assert parts.remainder.total_mass() == 0.0


def test_decompose_large_atom():
    parts = LevyService.decompose(measure=DiracMixture(((1.0, 5.0),)), pieces=3)
    assert parts.piece_masses() == pytest.approx([2.0, 2.0, 1.0])


def test_decompose_infinite_mass_density():
    measure = inverse_square_density()
    parts = LevyService.decompose(measure=measure, pieces=3)
    supports = [piece.support for piece in parts.pieces]
    assert supports[0] == pytest.approx((1.0, math.inf))
    assert supports[1] == pytest.approx((0.5, 1.0))
    assert supports[2] == pytest.approx((1.0 / 3.0, 0.5))
    assert parts.piece_masses() == pytest.approx([1.0, 1.0, 1.0])
    z = np.geomspace(0.01, 100.0, 50)
    assert np.allclose(parts.tail(z), measure.tail(z), rtol=1e-9)


def test_decompose_rejects_zero_pieces():
    with pytest.raises(DomainError):
        LevyService.decompose(measure=ParetoTail(1.0), pieces=0)
