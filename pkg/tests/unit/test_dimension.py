import math

import numpy as np
import pytest

from app.core.exceptions import AnnulusRangeError, DomainError, VariantMismatchError
from app.core.seeding import make_rng
from app.domain.enums import FieldMode, Norm, PointMap, ScaledFlavor
from app.domain.field import FieldSample
from app.domain.peaks import PeakSet, PeakVariant
from app.services.dimension_service import BOUNDED_SET_VERDICT, RHO_SPACING, DimensionService


def lattice_set(n_max: int) -> PeakSet:
    outer = math.floor(math.exp(n_max))
    points = np.arange(-outer, outer + 1)[:, None]
    return DimensionService.peak_set_from_points(points, radius=math.exp(n_max))


def powers_of_two_set(n_max: int) -> PeakSet:
    powers = [2**k for k in range(0, 64) if 2**k <= math.exp(n_max)]
    points = np.array(powers + [-p for p in powers])[:, None]
    return DimensionService.peak_set_from_points(points, radius=math.exp(n_max))


# -----------------------------------------
# Shell counts
# -----------------------------------------
def test_annulus_count_of_positive_integers():
    points = np.arange(1, 21)[:, None]
    peak_set = DimensionService.peak_set_from_points(points, radius=math.exp(3))
    counts = DimensionService.annulus_counts(peak_set=peak_set, n_range=(3, 3))
    assert counts[0].count == 13
    assert counts[0].a_n == pytest.approx(math.log(13) / 3)


def test_annulus_counts_of_empty_set():
    empty = PeakSet(d=2, cubes=np.empty((0, 2)), radius=math.exp(5))
    counts = DimensionService.annulus_counts(peak_set=empty, n_range=(1, 5))
    assert [c.count for c in counts] == [0] * 5
    assert all(c.a_n == 0.0 for c in counts)


def test_annulus_counts_of_powers_of_two():
    counts = DimensionService.annulus_counts(peak_set=powers_of_two_set(12), n_range=(1, 12))
    assert {c.count for c in counts} <= {2, 4}


def test_annulus_counts_beyond_radius():
    with pytest.raises(AnnulusRangeError) as exc:
        DimensionService.annulus_counts(peak_set=lattice_set(4), n_range=(1, 6))
    assert exc.value.max_n == 4


def test_sup_and_euclidean_shells_differ():
    peak_set = DimensionService.peak_set_from_points(np.array([[5, 5]]), radius=math.exp(3))
    sup = DimensionService.annulus_counts(peak_set=peak_set, n_range=(2, 2), norm=Norm.SUP)
    euclid = DimensionService.annulus_counts(peak_set=peak_set, n_range=(2, 2), norm=Norm.EUCLIDEAN)
    # both norms of (5, 5) lie in (e, e^2]
    assert sup[0].count == euclid[0].count == 1


# -----------------------------------------
# Dimension summaries
# -----------------------------------------
def test_full_lattice_has_dimension_one():
    report = DimensionService.dimension_report(peak_set=lattice_set(12))
    assert report.minkowski.max_summary == pytest.approx(1.0, abs=0.05)
    assert report.minkowski.ols_slope == pytest.approx(1.0, abs=0.05)
    assert abs(report.hausdorff.rho_star - 1.0) <= RHO_SPACING + 1e-12
    assert report.minkowski.window == (6, 12)


def test_powers_of_two_have_dimension_zero():
    counts = DimensionService.annulus_counts(peak_set=powers_of_two_set(12), n_range=(1, 12))
    summary = DimensionService.minkowski_dim(counts=counts)
    assert summary.ols_slope == pytest.approx(0.0, abs=0.1)


def test_empty_set_is_bounded():
    empty = PeakSet(d=1, cubes=np.empty((0, 1)), radius=math.exp(6))
    report = DimensionService.dimension_report(peak_set=empty)
    assert report.minkowski.verdict == BOUNDED_SET_VERDICT
    assert report.minkowski.max_summary is None
    assert report.hausdorff.rho_star == 0.0


def test_planted_set_dimension():
    planted = DimensionService.planted_set(lam=0.3, d=1, n_max=12, rng=make_rng(2024))
    report = DimensionService.dimension_report(peak_set=planted)
    assert report.minkowski.max_summary == pytest.approx(0.7, abs=0.15)
    assert report.minkowski.ols_slope == pytest.approx(0.7, abs=0.15)
    assert report.hausdorff.rho_star == pytest.approx(0.7, abs=0.15)


@pytest.mark.slow
def test_planted_set_dimension_to_shell_16():
    planted = DimensionService.planted_set(lam=0.3, d=1, n_max=16, rng=make_rng(2025))
    report = DimensionService.dimension_report(peak_set=planted)
    assert report.minkowski.ols_slope == pytest.approx(0.7, abs=0.15)


def test_hausdorff_grid_must_increase():
    counts = DimensionService.annulus_counts(peak_set=lattice_set(3), n_range=(1, 3))
    with pytest.raises(DomainError):
        DimensionService.hausdorff_dim_upper(counts=counts, rho_grid=[0.5, 0.2])


def split_by_parity(peak_set: PeakSet) -> tuple[PeakSet, PeakSet]:
    even = peak_set.cubes[:, 0] % 2 == 0
    return (
        PeakSet(d=peak_set.d, cubes=peak_set.cubes[even], radius=peak_set.radius),
        PeakSet(d=peak_set.d, cubes=peak_set.cubes[~even], radius=peak_set.radius),
    )


def test_annulus_counts_add_over_disjoint_union():
    planted = DimensionService.planted_set(lam=0.3, d=1, n_max=10, rng=make_rng(31))
    even, odd = split_by_parity(planted)

    joined = even.union(odd)

    assert len(joined) == len(planted)
    whole = DimensionService.annulus_counts(peak_set=joined, n_range=(1, 10))
    left = DimensionService.annulus_counts(peak_set=even, n_range=(1, 10))
    right = DimensionService.annulus_counts(peak_set=odd, n_range=(1, 10))
    assert [c.count for c in whole] == [a.count + b.count for a, b in zip(left, right)]


def test_union_needs_matching_dimension():
    with pytest.raises(DomainError):
        lattice_set(3).union(PeakSet(d=2, cubes=np.empty((0, 2)), radius=math.exp(3)))


@pytest.mark.parametrize("seed", range(5))
def test_minkowski_summary_is_monotone_under_inclusion(seed):
    rng = make_rng(400, seed)
    outer = DimensionService.planted_set(lam=0.3, d=1, n_max=10, rng=rng)
    inner = PeakSet(
        d=1, cubes=outer.cubes[rng.random(len(outer)) < 0.4], radius=outer.radius
    )

    big = DimensionService.dimension_report(peak_set=outer)
    small = DimensionService.dimension_report(peak_set=inner)

    assert all(a.count >= b.count for a, b in zip(big.counts, small.counts))
    assert big.minkowski.max_summary >= small.minkowski.max_summary


def test_bounded_sets_do_not_change_dimension():
    planted = DimensionService.planted_set(lam=0.3, d=1, n_max=12, rng=make_rng(55))
    base = DimensionService.dimension_report(peak_set=planted)
    n_min = base.minkowski.window[0]
    # every cube of sup-norm up to e^(n_min - 1) lies below the trailing window
    reach = math.floor(math.exp(n_min - 1))
    ball = PeakSet(d=1, cubes=np.arange(-reach, reach + 1)[:, None], radius=planted.radius)

    added = DimensionService.dimension_report(peak_set=planted.union(ball))
    removed = DimensionService.dimension_report(peak_set=planted.beyond(reach))

    for report in (added, removed):
        assert report.minkowski == base.minkowski
        assert report.hausdorff.rho_star == base.hausdorff.rho_star
    assert np.all(planted.beyond(reach).sup_norms > reach)


def test_hausdorff_never_exceeds_minkowski_by_more_than_grid_step():
    sets = [
        lattice_set(12),
        powers_of_two_set(12),
        DimensionService.planted_set(lam=0.3, d=1, n_max=12, rng=make_rng(8)),
        DimensionService.planted_set(lam=0.6, d=1, n_max=12, rng=make_rng(9)),
        DimensionService.planted_set(lam=0.5, d=2, n_max=6, rng=make_rng(10)),
    ]
    sets.append(sets[1].union(sets[2]))
    for peak_set in sets:
        report = DimensionService.dimension_report(peak_set=peak_set)
        assert report.hausdorff.rho_star <= report.minkowski.max_summary + RHO_SPACING + 1e-12


# -----------------------------------------
# Peak-set extraction
# -----------------------------------------
def constant_field(points, value=1.0, mode="additive"):
    points = np.asarray(points, dtype=float)
    return FieldSample(points=points, values=np.full(points.shape[0], value), meta={"mode": mode})


def test_constant_field_gamma_zero_keeps_everything():
    sample = constant_field(np.arange(-5, 6)[:, None])
    peak_set = DimensionService.extract_peak_set(sample=sample, variant=PeakVariant(kind="gamma"))
    assert len(peak_set) == 11


def test_constant_field_gamma_one_keeps_unit_ball():
    sample = constant_field(np.arange(-5, 6)[:, None])
    peak_set = DimensionService.extract_peak_set(
        sample=sample, variant=PeakVariant(kind="gamma", gamma=1.0)
    )
    assert sorted(peak_set.cubes[:, 0].tolist()) == [-1, 0, 1]


def test_power_field_threshold_crossing():
    points = np.arange(1, 21, dtype=float)[:, None]
    sample = FieldSample(points=points, values=points[:, 0] ** 0.6, meta={"mode": "additive"})
    low = DimensionService.extract_peak_set(
        sample=sample, variant=PeakVariant(kind="gamma", gamma=0.5)
    )
    high = DimensionService.extract_peak_set(
        sample=sample, variant=PeakVariant(kind="gamma", gamma=0.7)
    )
    assert len(low) == 20
    assert high.cubes[:, 0].tolist() == [1]


def test_variant_field_mismatch():
    sample = constant_field(np.arange(1, 5)[:, None])
    variant = PeakVariant(kind="scaled", flavor=ScaledFlavor.MULT_C)
    with pytest.raises(VariantMismatchError):
        DimensionService.extract_peak_set(sample=sample, variant=variant)


def test_light_tailed_additive_flavor_uses_gaussian_exponent():
    r = np.array([math.exp(5.0), math.exp(9.0)])
    light = PeakVariant(kind="scaled", flavor=ScaledFlavor.ADD_C_LIGHT, gamma=0.5)
    mult = PeakVariant(kind="scaled", flavor=ScaledFlavor.MULT_C, gamma=0.5)
    heavy = PeakVariant(kind="scaled", flavor=ScaledFlavor.ADD_C, gamma=0.5, alpha=1.0)

    # d = 2: exponent d^2/2 = 2 against d/alpha = 2 at alpha = 1
    assert np.allclose(light.log_threshold(r, 2), mult.log_threshold(r, 2))
    assert np.allclose(light.log_threshold(r, 2), heavy.log_threshold(r, 2))
    # d = 3: 4.5 against 3
    assert np.all(light.log_threshold(r, 3) > heavy.log_threshold(r, 3))
    assert light.log_threshold(r, 1)[0] == pytest.approx(0.5 * 5.0 + 0.5 * math.log(5.0))
    assert light.expected_field == (FieldMode.ADDITIVE, True)


def test_light_tailed_flavor_needs_no_alpha_but_heavy_does():
    PeakVariant(kind="scaled", flavor="add_c_light")
    with pytest.raises(DomainError):
        PeakVariant(kind="scaled", flavor="add_c")


def test_light_tailed_flavor_rejects_lattice_values():
    sample = constant_field(np.arange(1, 5)[:, None])
    variant = PeakVariant(kind="scaled", flavor=ScaledFlavor.ADD_C_LIGHT)
    with pytest.raises(VariantMismatchError):
        DimensionService.extract_peak_set(sample=sample, variant=variant)


def test_cube_tables_are_judged_at_argmax():
    sample = FieldSample(
        points=np.array([[0.0], [4.0]]),
        values=np.array([1.0, 4.2]),
        meta={"mode": "additive"},
        argmax=np.array([[0.5], [4.5]]),
    )
    peak_set = DimensionService.extract_peak_set(
        sample=sample, variant=PeakVariant(kind="gamma", gamma=1.0)
    )
    # 4.2 clears |4| but not |4.5|
    assert peak_set.cubes.tolist() == [[0]]


# -----------------------------------------
# Radial maps
# -----------------------------------------
def test_transform_points():
    x = np.array([[math.exp(4.0)]])
    mapped = DimensionService.transform_points(points=x, point_map=PointMap.ITERLOG_THEN_ROOT)
    assert mapped[0, 0] == pytest.approx(4.0)
    y = np.array([[-3.0, 4.0]])
    assert np.allclose(
        DimensionService.transform_points(points=y, point_map=PointMap.POWER, q=1.0), y
    )
    z = np.array([[math.exp(math.exp(3.0))]])
    mapped = DimensionService.transform_points(
        points=z, point_map=PointMap.ITERLOG_THEN_ROOT, N=2
    )
    assert mapped[0, 0] == pytest.approx(3.0)


def test_transform_points_rejects_origin():
    with pytest.raises(DomainError):
        DimensionService.transform_points(points=np.zeros((1, 2)), point_map=PointMap.POWER)


# -----------------------------------------
# Thickness
# -----------------------------------------
def test_full_lattice_is_thick():
    verdict = DimensionService.theta_thick_check(peak_set=lattice_set(8), theta=0.5, n_range=(2, 8))
    assert verdict.thick
    assert all(failures == 0 for _, failures, _ in verdict.failures_per_shell)


def test_empty_set_is_not_thick():
    empty = PeakSet(d=1, cubes=np.empty((0, 1)), radius=math.exp(8))
    verdict = DimensionService.theta_thick_check(peak_set=empty, theta=0.5, n_range=(2, 8))
    assert not verdict.thick
    assert verdict.first_failure == (verdict.burn_in, 1)
    for _, failures, total in verdict.failures_per_shell:
        assert failures == total


def test_planted_set_thickness_threshold():
    planted = DimensionService.planted_set(lam=0.3, d=1, n_max=14, rng=make_rng(77))
    thick = DimensionService.theta_thick_check(peak_set=planted, theta=0.6, n_range=(1, 14))
    thin = DimensionService.theta_thick_check(peak_set=planted, theta=0.1, n_range=(1, 14))
    assert thick.thick
    assert not thin.thick


def test_thickness_shell_beyond_radius():
    with pytest.raises(AnnulusRangeError):
        DimensionService.theta_thick_check(peak_set=lattice_set(4), theta=0.5, n_range=(1, 6))
