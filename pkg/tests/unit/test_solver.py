import math
from dataclasses import replace
from itertools import combinations

import numpy as np
import pytest

from app.core.exceptions import DomainError, UnsupportedRegimeError
from app.core.seeding import make_rng
from app.domain.enums import FieldMode
from app.domain.field import AtomSet, FieldConfig, PoissonAtom, Window
from app.domain.kernel import heat_kernel
from app.domain.levy import DiracMixture, ParetoTail, PiecewiseDensity
from app.services.solver_service import FieldSolverService


def make_config(measure=None, *, mode=FieldMode.ADDITIVE, d=1, half_width=3.0, **kwargs):
    return FieldConfig(
        d=d,
        t=1.0,
        measure=measure or ParetoTail(1.0),
        mode=mode,
        window=Window.centered(half_width, d),
        **kwargs,
    )


def brute_force_multiplicative(atoms: AtomSet, t: float, x: np.ndarray, d: int) -> float:
    """Sum over all time-ordered chains of atoms."""
    total = 1.0
    n = len(atoms)
    for k in range(1, n + 1):
        for chain in combinations(range(n), k):
            weight = 1.0
            for a, b in zip(chain, chain[1:]):
                weight *= atoms.zeta[a] * heat_kernel(
                    atoms.tau[b] - atoms.tau[a], atoms.eta[b] - atoms.eta[a], d
                )
            last = chain[-1]
            weight *= atoms.zeta[last] * heat_kernel(t - atoms.tau[last], x - atoms.eta[last], d)
            total += weight
    return total


# -----------------------------------------
# Additive
# -----------------------------------------
def test_single_atom_additive_field():
    config = make_config()
    atoms = AtomSet.from_atoms([PoissonAtom(tau=0.5, eta=(0.0,), zeta=3.0)], t=1.0, d=1)
    sample = FieldSolverService.evaluate(atoms=atoms, config=config, points=np.zeros((1, 1)))
    assert sample.values[0] == pytest.approx(3.0 / math.sqrt(math.pi), rel=1e-12)
    assert sample.values[0] == pytest.approx(1.69257, abs=1e-5)


def test_additive_field_ignores_atoms_below_cutoff():
    config = make_config(DiracMixture(((0.001, 1.0), (2.0, 1.0))), small_jump_cutoff=0.01)
    atoms = AtomSet.from_atoms(
        [PoissonAtom(tau=0.5, eta=(0.0,), zeta=0.001), PoissonAtom(tau=0.5, eta=(0.0,), zeta=2.0)],
        t=1.0,
        d=1,
    )
    sample = FieldSolverService.evaluate(atoms=atoms, config=config, points=[[0.0]])
    assert sample.values[0] == pytest.approx(2.0 / math.sqrt(math.pi))
    assert sample.meta["used_atom_count"] == 1
    assert sample.meta["small_jump_bias"] == pytest.approx(0.001)


def test_evaluation_points_must_lie_inside_window():
    config = make_config()
    with pytest.raises(DomainError):
        FieldSolverService.evaluate(
            atoms=AtomSet.empty(1.0, 1), config=config, points=np.array([[3.0]])
        )


def test_sample_field_is_deterministic():
    config = make_config(half_width=5.0, seed=42)
    points = np.array([[-1.0], [0.0], [2.5]])
    a = FieldSolverService.sample_field(config=config, points=points)
    b = FieldSolverService.sample_field(config=config, points=points, rng=make_rng(42))
    assert np.array_equal(a.values, b.values)
    assert np.all(a.values >= 0)


def test_sampled_atoms_fill_padded_box(rng):
    config = make_config(half_width=2.0)
    atoms = FieldSolverService.sample_config_atoms(config=config, rng=rng)
    radius = FieldSolverService.padding_radius(config=config, intensity=1.0)
    assert radius == pytest.approx(math.sqrt(2.0 * math.log(1e6)))
    assert atoms.box.lower[0] == pytest.approx(-2.0 - radius)
    assert np.all(np.diff(atoms.tau) >= 0)
    assert np.all(atoms.zeta >= 1.0)


def test_zero_padding_keeps_window():
    config = make_config(padding=0.0)
    assert FieldSolverService.padding_radius(config=config, intensity=1e9) == 0.0


# -----------------------------------------
# Multiplicative
# -----------------------------------------
def test_multiplicative_without_atoms_is_one():
    config = make_config(mode=FieldMode.MULTIPLICATIVE)
    sample = FieldSolverService.evaluate(
        atoms=AtomSet.empty(1.0, 1), config=config, points=[[0.0], [1.0]]
    )
    assert sample.values.tolist() == [1.0, 1.0]


def test_multiplicative_single_atom():
    config = make_config(mode=FieldMode.MULTIPLICATIVE)
    atoms = AtomSet.from_atoms([PoissonAtom(tau=0.5, eta=(0.0,), zeta=2.0)], t=1.0, d=1)
    sample = FieldSolverService.evaluate(atoms=atoms, config=config, points=[[0.0]])
    assert sample.values[0] == pytest.approx(1.0 + 2.0 / math.sqrt(math.pi))


@pytest.mark.parametrize("d", [1, 2])
def test_multiplicative_dp_matches_chain_sum(d):
    rng = make_rng(7, d)
    n = 8
    atoms = AtomSet(
        tau=rng.random(n),
        eta=rng.uniform(-1.0, 1.0, size=(n, d)),
        zeta=1.0 + 3.0 * rng.random(n),
        t=1.0,
        d=d,
    )
    config = make_config(mode=FieldMode.MULTIPLICATIVE, d=d)
    x = np.full(d, 0.25)
    sample = FieldSolverService.evaluate(atoms=atoms, config=config, points=x[None, :])
    expected = brute_force_multiplicative(atoms, 1.0, x, d)
    assert sample.values[0] == pytest.approx(expected, rel=1e-10)


def test_chain_cap_one_keeps_single_atom_chains():
    rng = make_rng(3)
    atoms = AtomSet(
        tau=rng.random(5), eta=rng.uniform(-1, 1, size=(5, 1)), zeta=np.full(5, 2.0), t=1.0, d=1
    )
    config = make_config(mode=FieldMode.MULTIPLICATIVE, chain_cap=1)
    sample = FieldSolverService.evaluate(atoms=atoms, config=config, points=[[0.0]])
    expected = 1.0 + sum(
        2.0 * heat_kernel(1.0 - tau, -eta, 1) for tau, eta in zip(atoms.tau, atoms.eta)
    )
    assert sample.values[0] == pytest.approx(expected)


def test_small_jumps_without_picard_levels_leave_compensator():
    config = make_config(
        DiracMixture(((0.5, 1.0),)), mode=FieldMode.MULTIPLICATIVE, picard_levels=0
    )
    sample = FieldSolverService.evaluate(
        atoms=AtomSet.empty(1.0, 1), config=config, points=[[0.0]]
    )
    assert sample.values[0] == pytest.approx(math.exp(-0.5))
    assert sample.meta["compensator"] == pytest.approx(0.5)


def test_single_small_jump_first_picard_level():
    config = make_config(
        DiracMixture(((0.5, 1.0),)), mode=FieldMode.MULTIPLICATIVE, picard_levels=1
    )
    atoms = AtomSet.from_atoms([PoissonAtom(tau=0.5, eta=(0.0,), zeta=0.5)], t=1.0, d=1)
    sample = FieldSolverService.evaluate(atoms=atoms, config=config, points=[[0.0]])
    expected = (1.0 + 0.5 / math.sqrt(math.pi)) * math.exp(-0.5)
    assert sample.values[0] == pytest.approx(expected)


def pareto_density_half():
    """Density 0.5 z^-1.5 on (0, inf): tail z^-0.5 everywhere, m_1 on (0, 1) = 1."""
    return PiecewiseDensity(knots=((1.0, 0.5), (4.0, 0.0625)), extend_tails=True)


def test_picard_settings_are_inert_without_small_jumps(rng):
    config = make_config(ParetoTail(0.5), mode=FieldMode.MULTIPLICATIVE, half_width=1.0)
    atoms = FieldSolverService.sample_config_atoms(config=config, rng=rng)
    points = np.array([[-0.5], [0.0], [0.5]])

    coarse = FieldSolverService.evaluate(
        atoms=atoms, config=replace(config, picard_levels=1, picard_cone=0.5), points=points
    )
    fine = FieldSolverService.evaluate(
        atoms=atoms, config=replace(config, picard_levels=16, picard_cone=16.0), points=points
    )

    assert np.array_equal(coarse.values, fine.values)


def test_picard_settings_act_on_small_jumps(rng):
    config = make_config(pareto_density_half(), mode=FieldMode.MULTIPLICATIVE, half_width=1.0)
    atoms = FieldSolverService.sample_config_atoms(config=config, rng=rng)
    points = np.array([[-0.5], [0.0], [0.5]])
    assert np.any(atoms.zeta < 1.0)

    coarse = FieldSolverService.evaluate(
        atoms=atoms, config=replace(config, picard_levels=1, picard_cone=0.5), points=points
    )
    fine = FieldSolverService.evaluate(
        atoms=atoms, config=replace(config, picard_levels=8, picard_cone=8.0), points=points
    )

    # every Picard level and every widening of the cone adds nonnegative terms
    assert np.all(fine.values >= coarse.values * (1.0 - 1e-12))
    assert np.all(fine.values > coarse.values)
    assert coarse.meta["small_atom_count"] == fine.meta["small_atom_count"] > 0


def test_infinite_variation_small_jumps_are_unsupported(rng):
    density = PiecewiseDensity(knots=((1.0, 1.0), (2.0, 0.25)), extend_tails=True)
    config = make_config(density, mode=FieldMode.MULTIPLICATIVE)
    with pytest.raises(UnsupportedRegimeError) as exc:
        FieldSolverService.sample_config_atoms(config=config, rng=rng)
    assert exc.value.exit_code == 2


# -----------------------------------------
# Suprema, truncation and coverage
# -----------------------------------------
def test_cube_sups_bound_cube_corners():
    config = make_config(half_width=4.0)
    atoms = AtomSet.from_atoms([PoissonAtom(tau=0.9, eta=(0.5,), zeta=1.0)], t=1.0, d=1)
    table = FieldSolverService.cube_sups(
        config=config, atoms=atoms, cube_origins=np.array([[-2.0], [0.0]]), resolution=5
    )
    corners = FieldSolverService.evaluate(atoms=atoms, config=config, points=[[-2.0], [0.0]])
    assert np.all(table.values >= corners.values)
    assert table.argmax[1, 0] == pytest.approx(0.5)
    assert table.is_cube_table


def test_cube_sups_need_two_grid_points():
    config = make_config()
    with pytest.raises(DomainError):
        FieldSolverService.cube_sups(
            config=config, atoms=AtomSet.empty(1.0, 1), cube_origins=[[0.0]], resolution=1
        )


def test_truncation_decay():
    value = FieldSolverService.truncation_decay(p=2.0, m=12, beta=10.0, d=1)
    assert value == pytest.approx(0.08338, abs=1e-5)
    with pytest.raises(DomainError):
        FieldSolverService.truncation_decay(p=3.0, m=12, beta=10.0, d=1)


def test_schedule_truncation_reaches_tolerance():
    m, beta = FieldSolverService.schedule_truncation(p=1.5, d=1, tolerance=1e-3)
    assert FieldSolverService.truncation_decay(p=1.5, m=m, beta=beta, d=1) <= 1e-3
    assert FieldSolverService.truncation_decay(p=1.5, m=m // 2, beta=beta / 2, d=1) > 1e-3


def test_window_coverage():
    config = make_config(half_width=50.0)
    assert FieldSolverService.window_coverage(config=config, x=np.zeros(1)) == pytest.approx(1.0)
    edge = FieldSolverService.window_coverage(config=config, x=np.array([49.999999]))
    assert edge == pytest.approx(0.5, abs=1e-3)


def test_field_sup_over_one_cube():
    config = make_config(half_width=4.0)
    atoms = AtomSet.from_atoms([PoissonAtom(tau=0.9, eta=(0.5,), zeta=1.0)], t=1.0, d=1)

    value, where = FieldSolverService.field_sup(
        config=config, cube=[[0.0]], resolution=5, atoms=atoms
    )

    grid = np.linspace(0.0, 1.0, 5)[:, None]
    on_grid = FieldSolverService.evaluate(atoms=atoms, config=config, points=grid).values
    assert value == pytest.approx(on_grid.max())
    assert where[0] == pytest.approx(0.5)


def test_field_sup_samples_from_config_seed():
    config = make_config(half_width=4.0, seed=9)

    value, _ = FieldSolverService.field_sup(config=config, cube=[[1.0]], resolution=3)

    atoms = FieldSolverService.sample_config_atoms(config=config, rng=make_rng(9))
    again, _ = FieldSolverService.field_sup(config=config, cube=[[1.0]], resolution=3, atoms=atoms)
    assert value == again


# -----------------------------------------
# Invariants
# -----------------------------------------
def test_additive_field_is_linear_in_jump_sizes(rng):
    config = make_config(half_width=2.0)
    atoms = FieldSolverService.sample_config_atoms(config=config, rng=rng)
    points = np.array([[-1.5], [0.0], [0.7]])

    base = FieldSolverService.evaluate(atoms=atoms, config=config, points=points).values
    tripled = FieldSolverService.evaluate(atoms=atoms.scaled(3.0), config=config, points=points)

    assert np.allclose(tripled.values, 3.0 * base, rtol=1e-12, atol=0.0)


def test_additive_field_adds_over_disjoint_atom_sets(rng):
    config = make_config(half_width=2.0)
    atoms = FieldSolverService.sample_config_atoms(config=config, rng=rng)
    points = np.array([[-1.0], [0.0], [1.0]])
    early = atoms.tau < 0.5

    whole = FieldSolverService.evaluate(atoms=atoms, config=config, points=points).values
    parts = sum(
        FieldSolverService.evaluate(atoms=atoms.select(mask), config=config, points=points).values
        for mask in (early, ~early)
    )

    # the kernel cutoff radius depends on the atom count
    assert np.allclose(whole, parts, rtol=0.0, atol=1e-5)


def test_chain_cap_is_monotone(rng):
    config = make_config(mode=FieldMode.MULTIPLICATIVE, half_width=1.0)
    atoms = FieldSolverService.sample_config_atoms(config=config, rng=rng)
    points = np.array([[-0.5], [0.0], [0.5]])

    values = [
        FieldSolverService.evaluate(
            atoms=atoms, config=replace(config, chain_cap=cap), points=points
        ).values
        for cap in (1, 2, 3, 5, 8)
    ]
    exact = FieldSolverService.evaluate(atoms=atoms, config=config, points=points).values
    full = FieldSolverService.evaluate(
        atoms=atoms, config=replace(config, chain_cap=len(atoms)), points=points
    ).values

    for lower, upper in zip(values, values[1:]):
        assert np.all(upper >= lower * (1.0 - 1e-12))
    assert np.all(exact >= values[-1] * (1.0 - 1e-12))
    assert np.allclose(full, exact, rtol=1e-9)


def test_doubling_the_padding_leaves_interior_values(rng):
    config = make_config(DiracMixture(((1.0, 1.0),)), half_width=2.0)
    radius = FieldSolverService.padding_radius(config=config, intensity=1.0)
    wide = replace(config, padding=2.0 * radius)
    box = config.window.padded(radius)
    points = np.array([[-1.0], [0.0], [1.0]])

    for _ in range(50):
        atoms = FieldSolverService.sample_config_atoms(config=wide, rng=rng)
        inside = np.all(
            (atoms.eta >= np.asarray(box.lower)) & (atoms.eta <= np.asarray(box.upper)), axis=1
        )
        full = FieldSolverService.evaluate(atoms=atoms, config=wide, points=points).values
        trimmed = FieldSolverService.evaluate(
            atoms=atoms.select(inside), config=config, points=points
        ).values
        assert np.all(np.abs(full - trimmed) <= config.margin_tolerance * np.maximum(trimmed, 1.0))


def test_additive_mean_matches_first_moment_times_coverage(rng):
    config = make_config(DiracMixture(((1.0, 2.0),)), half_width=1.0)
    x = np.zeros((1, 1))
    n = 4000

    values = np.array(
        [
            FieldSolverService.sample_field(config=config, points=x, rng=rng).values[0]
            for _ in range(n)
        ]
    )

    radius = FieldSolverService.padding_radius(config=config, intensity=2.0)
    coverage = FieldSolverService.window_coverage(
        config=config, x=np.zeros(1), box=config.window.padded(radius)
    )
    first_moment = config.measure.integral(1.0, config.small_jump_cutoff, math.inf, lo_closed=True)
    expected = config.t * first_moment * coverage
    assert first_moment == pytest.approx(2.0)
    assert values.mean() == pytest.approx(expected, abs=4.0 * values.std(ddof=1) / math.sqrt(n))
