import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpsynth.errors import BudgetError, ParameterError
from dpsynth.privacy import (
    PrivacyAccountant,
    eps_from_rho_delta,
    gaussian_measure,
    gumbel_topk,
    rho_from_eps_delta,
)


@pytest.mark.parametrize("eps,delta", [(1.0, 1e-6), (0.25, 1e-6), (2.0, 1e-9), (4.0, math.exp(-1))])
def test_rho_back_substitution(eps, delta):
    rho = rho_from_eps_delta(eps, delta)
    assert rho > 0
    assert eps_from_rho_delta(rho, delta) == pytest.approx(eps, rel=1e-9)
    assert rho < eps


def test_rho_closed_form_values():
    # independently computed from the closed form, then back-substituted
    log_inv = math.log(1e6)
    expect = (math.sqrt(log_inv + 1.0) - math.sqrt(log_inv)) ** 2
    assert rho_from_eps_delta(1.0, 1e-6) == pytest.approx(expect, rel=1e-12)
    assert rho_from_eps_delta(4.0, math.exp(-1)) == pytest.approx((math.sqrt(5) - 1) ** 2, rel=1e-12)


def test_rho_domain_errors():
    with pytest.raises(ParameterError):
        rho_from_eps_delta(0.0, 1e-6)
    with pytest.raises(ParameterError):
        rho_from_eps_delta(1.0, 0.0)
    with pytest.raises(ParameterError):
        rho_from_eps_delta(1.0, 1.0)


@settings(max_examples=60, deadline=None)
@given(
    st.floats(min_value=0.01, max_value=10.0),
    st.floats(min_value=0.01, max_value=10.0),
    st.floats(min_value=1e-9, max_value=0.1),
    st.floats(min_value=1e-9, max_value=0.1),
)
def test_rho_monotone(eps1, eps2, d1, d2):
    lo_e, hi_e = sorted((eps1, eps2))
    lo_d, hi_d = sorted((d1, d2))
    assert rho_from_eps_delta(lo_e, lo_d) <= rho_from_eps_delta(hi_e, lo_d) + 1e-15
    assert rho_from_eps_delta(lo_e, lo_d) <= rho_from_eps_delta(lo_e, hi_d) + 1e-15


def test_accountant_exact_fill():
    acct = PrivacyAccountant(rho_total=1.0, epsilon=1.0, delta=1e-6)
    acct.charge("a", 0.5)
    acct.charge("b", 0.5)
    assert acct.spent == pytest.approx(1.0)


def test_accountant_atomic_rejection():
    acct = PrivacyAccountant(rho_total=1.0, epsilon=1.0, delta=1e-6)
    acct.charge("a", 0.6)
    with pytest.raises(BudgetError) as exc:
        acct.charge("b", 0.6)
    assert exc.value.shortfall == pytest.approx(0.2)
    assert [rho for _, rho in acct.ledger] == [0.6]


def test_accountant_empty_remaining():
    acct = PrivacyAccountant(rho_total=0.7, epsilon=1.0, delta=1e-6)
    assert acct.remaining == pytest.approx(0.7)


def test_gaussian_noise_scale():
    # n=100, rho=0.5 -> sd 0.01 by direct substitution
    rng = np.random.default_rng(0)
    draws = np.array(
        [gaussian_measure(0.5, 100, 0.5, rng).value - 0.5 for _ in range(20_000)]
    )
    assert draws.std() == pytest.approx(0.01, rel=0.05)


def test_gaussian_zero_noise_hook():
    rng = np.random.default_rng(0)
    m = gaussian_measure(0.375, 10, 0.1, rng, zero_noise=True)
    assert m.value == 0.375


def test_gaussian_clamped():
    rng = np.random.default_rng(0)
    for _ in range(100):
        m = gaussian_measure(0.99, 10, 0.001, rng)
        assert 0.0 <= m.value <= 1.0


def test_gaussian_charges_before_release():
    acct = PrivacyAccountant(rho_total=0.1, epsilon=1.0, delta=1e-6)
    rng = np.random.default_rng(0)
    with pytest.raises(BudgetError):
        gaussian_measure(0.5, 100, 0.2, rng, accountant=acct)
    assert acct.ledger == []


def test_gumbel_topk_noiseless_ties():
    rng = np.random.default_rng(0)
    out = gumbel_topk([0.1, 0.9, 0.9, 0.5], 3, 1.0, 10, rng, zero_noise=True)
    assert out == [1, 2, 3]  # ties broken by lower index


def test_gumbel_topk_full_permutation():
    rng = np.random.default_rng(0)
    out = gumbel_topk([0.3, 0.1, 0.2], 3, 1.0, 10, rng)
    assert sorted(out) == [0, 1, 2]


def test_gumbel_topk_k_out_of_range():
    rng = np.random.default_rng(0)
    with pytest.raises(ParameterError):
        gumbel_topk([0.1, 0.2], 3, 1.0, 10, rng)


def test_gumbel_race_probability():
    # scale K/(sqrt(2 rho) n) = 0.01 via K=1, n=100, rho=0.5
    rng = np.random.default_rng(1)
    errors = [0.9, 0.1, 0.1, 0.1]
    wins = sum(gumbel_topk(errors, 1, 0.5, 100, rng)[0] == 0 for _ in range(10_000))
    assert wins >= 9_900


def test_gumbel_distinct_indices():
    rng = np.random.default_rng(2)
    for _ in range(50):
        out = gumbel_topk(np.zeros(10), 5, 1.0, 10, rng)
        assert len(set(out)) == 5
