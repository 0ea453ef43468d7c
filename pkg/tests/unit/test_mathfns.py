import math

import numpy as np
import pytest

from app.core.exceptions import DomainError
from app.domain.decoupling import DecouplingToy
from app.services.lemma_service import LemmaService
from app.utils.special import ExpTower, iterated_exp, iterated_log, lambert_w, log_plus


# -----------------------------------------
# Special functions
# -----------------------------------------
def test_lambert_w_values():
    assert lambert_w(math.e) == pytest.approx(1.0, abs=1e-12)
    assert lambert_w(2.0 * math.e**2) == pytest.approx(2.0, abs=1e-12)
    assert lambert_w(1.0) == pytest.approx(0.5671432904, abs=1e-10)


def test_lambert_w_solves_definition():
    x = np.geomspace(1e-3, 1e12, 10_000)
    w = lambert_w(x)
    assert np.max(np.abs(w * np.exp(w) - x) / x) <= 1e-12


def test_lambert_w_rejects_nonpositive():
    with pytest.raises(DomainError):
        lambert_w(0.0)


def test_log_plus_saturates():
    assert log_plus(1.0) == pytest.approx(1.0)
    assert log_plus(math.exp(3.0)) == pytest.approx(3.0)
    assert np.allclose(log_plus(np.array([0.5, 2.0])), 1.0)


def test_iterated_exp_and_log():
    assert iterated_exp(2, 1.0) == pytest.approx(15.1543, abs=1e-4)
    assert iterated_exp(0, 5.0) == 5.0
    assert iterated_log(2, math.exp(math.exp(3.0))) == pytest.approx(3.0)
    assert iterated_log(0, 7.0) == 7.0


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_iterated_log_undoes_iterated_exp(n):
    for r in np.linspace(math.e, 30.0, 25):
        assert iterated_log(n, iterated_exp(n, r)) == pytest.approx(r, rel=1e-12)


def test_iterated_exp_overflows_to_tower():
    # exp(exp(exp(10))) = exp(exp(22026.47...))
    tower = iterated_exp(3, 10.0)
    assert isinstance(tower, ExpTower)
    assert tower.level == 2
    assert tower.residual == pytest.approx(math.exp(10.0))
    assert tower > 1e308
    assert tower < math.inf
    assert iterated_log(1, tower) == ExpTower(1, tower.residual)
    assert iterated_log(2, tower) == pytest.approx(math.exp(10.0))
    assert iterated_log(3, tower) == pytest.approx(10.0)


def test_towers_compare_by_level_then_residual():
    assert ExpTower(1, 800.0) < ExpTower(1, 900.0) < ExpTower(2, 710.0)
    with pytest.raises(DomainError):
        ExpTower(1, 10.0)


# -----------------------------------------
# Lambert W bounds
# -----------------------------------------
def test_lambert_w_bounds_at_100():
    result = LemmaService.lambert_w_bounds_check(x_grid=[100.0])
    assert result.passed
    assert result.lhs[0] == pytest.approx(3.078, abs=1e-3)
    assert result.rhs[0] == pytest.approx(3.841, abs=1e-3)


def test_lambert_w_bounds_sweep():
    result = LemmaService.lambert_w_bounds_check(x_grid=np.geomspace(1.01, 1e8, 2_000))
    assert result.passed
    assert result.details["x0"] <= math.e * 1.01
    with pytest.raises(DomainError):
        LemmaService.lambert_w_bounds_check(x_grid=[0.5, 2.0])


# -----------------------------------------
# Iterated integral
# -----------------------------------------
def test_iter_int_closed_form_values():
    assert LemmaService.iter_int_closed(N=1, alpha=0.0, beta=0.0, R=5.0)[0] == pytest.approx(1.0)
    value, _ = LemmaService.iter_int_closed(N=2, alpha=0.0, beta=0.0, R=10.0)
    assert value == pytest.approx(1.0 + 2.0 * math.log(10.0))
    assert value == pytest.approx(5.605170, abs=1e-6)
    _, coefficients = LemmaService.iter_int_closed(N=3, alpha=0.0, beta=0.0, R=10.0)
    assert coefficients[2] == pytest.approx(4.5)


def test_iter_int_quadrature_oracle():
    result = LemmaService.iter_int_check(N=2, alpha=0.5, beta=1.0, R=10.0)
    assert result.passed


def test_iter_int_monte_carlo_oracle(rng):
    result = LemmaService.iter_int_check(
        N=3, alpha=0.0, beta=0.0, R=10.0, method="monte_carlo", samples=200_000, rng=rng
    )
    assert result.passed


def test_iter_int_argument_checks():
    with pytest.raises(DomainError):
        LemmaService.iter_int_closed(N=0, alpha=0.0, beta=0.0, R=10.0)
    with pytest.raises(DomainError):
        LemmaService.iter_int_oracle(N=4, alpha=0.0, beta=0.0, R=10.0)
    with pytest.raises(DomainError):
        LemmaService.iter_int_oracle(N=2, alpha=0.0, beta=0.0, R=10.0, method="monte_carlo")


# -----------------------------------------
# Gamma series
# -----------------------------------------
def test_gamma_series_exponential_case():
    # sum z^N / N! = e^z
    series = LemmaService.log_gamma_series
    assert series(alpha=1.0, beta=1.0, gamma=1.0, z=2.0) == pytest.approx(2.0)
    assert series(alpha=1.0, beta=2.0, gamma=1.0, z=0.0) == pytest.approx(0.0)


def test_gamma_series_bound_found():
    result = LemmaService.gamma_series_bound_check(
        alpha=0.5, beta=1.0, gamma=1.0, z_grid=np.linspace(0.0, 20.0, 21)
    )
    assert result.passed
    assert result.details["C"] == pytest.approx(1.0)


def test_gamma_series_domain():
    with pytest.raises(DomainError):
        LemmaService.log_gamma_series(alpha=0.0, beta=1.0, gamma=1.0, z=1.0)
    with pytest.raises(DomainError):
        LemmaService.log_gamma_series(alpha=1.0, beta=1.0, gamma=1.0, z=-1.0)


# -----------------------------------------
# Paley-Zygmund
# -----------------------------------------
def test_paley_zygmund_constant_law():
    result = LemmaService.paley_zygmund_check(
        values=[3.0], probs=[1.0], alpha=0.5, delta=0.5, p=2.0
    )
    assert result.passed
    assert result.lhs[0] == 1.0


def test_paley_zygmund_two_point_law():
    result = LemmaService.paley_zygmund_check(
        values=[1.0, 10.0], probs=[0.9, 0.1], alpha=0.5, delta=0.5, p=2.0
    )
    assert result.passed
    # E X = 1.9, E X^2 = 10.9
    assert result.rhs[0] == pytest.approx(0.25 * 1.9**2 / 10.9)


def test_paley_zygmund_audit(rng):
    result = LemmaService.paley_zygmund_audit(n_laws=100, rng=rng)
    assert result.passed
    assert result.lhs == [100.0]


def test_paley_zygmund_rejects_bad_parameters():
    with pytest.raises(DomainError):
        LemmaService.paley_zygmund_check(values=[1.0], probs=[1.0], alpha=0.5, delta=1.0, p=2.0)


# -----------------------------------------
# Decoupling
# -----------------------------------------
def test_constant_integrand_copies_are_identical(rng):
    toy = DecouplingToy(integrand="constant")
    x, x_copy = LemmaService.simulate_decoupling_toy(toy=toy, replications=1_000, rng=rng)
    assert np.array_equal(x, x_copy)


@pytest.mark.parametrize("theta", [0.05, 0.1])
def test_decoupling_inequality_holds(theta, rng):
    result = LemmaService.decoupling_check(theta=theta, replications=20_000, rng=rng)
    assert result.passed
    assert len(result.details["R_grid"]) == 5


def test_decoupling_toy_validation():
    with pytest.raises(DomainError):
        DecouplingToy(cap=0)
    with pytest.raises(DomainError):
        DecouplingToy(integrand="square")
