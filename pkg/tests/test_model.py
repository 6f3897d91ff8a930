import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import ndtr

from bermcub.model import (BlackScholes, MertonJump1D, PayoffKind, PayoffSpec,
                           evaluate_payoff, increment_distribution)

from frozen import MERTON_CDF_AT_ZERO, PHI_0_44


def test_avg_put_at_90_is_ten():
    p = PayoffSpec.equal_average(PayoffKind.PUT_ON_AVG, 100.0, 7)
    assert evaluate_payoff(p, np.log(np.full(7, 90.0))) == pytest.approx(10.0, abs=1e-12)


def test_atm_vanilla_put_is_zero():
    assert evaluate_payoff(PayoffSpec(PayoffKind.VANILLA_PUT, 100.0), [math.log(100)]) == 0.0


def test_min_put_picks_smallest():
    p = PayoffSpec(PayoffKind.PUT_ON_MIN, 100.0)
    assert evaluate_payoff(p, np.log([80.0, 120.0])) == pytest.approx(20.0)


def test_unclipped_payoff_can_be_negative():
    p = PayoffSpec(PayoffKind.VANILLA_PUT, 100.0)
    assert p.evaluate([math.log(150.0)], clip=False) == pytest.approx(-50.0)
    assert p.evaluate([math.log(150.0)]) == 0.0


def test_dimension_mismatch_is_rejected():
    with pytest.raises(ValueError):
        PayoffSpec.equal_average(PayoffKind.PUT_ON_AVG, 100.0, 3).evaluate(np.zeros(4))
    with pytest.raises(ValueError):
        PayoffSpec(PayoffKind.VANILLA_PUT, 1.0).evaluate(np.zeros(2))


@pytest.mark.parametrize("kwargs", [dict(rate=0.0, sigma=(0.2,)), dict(rate=0.05, sigma=(0.0,)),
                                    dict(rate=0.05, sigma=())])
def test_invalid_models(kwargs):
    with pytest.raises(ValueError):
        BlackScholes(**kwargs)


def test_invalid_weights():
    with pytest.raises(ValueError):
        PayoffSpec(PayoffKind.PUT_ON_AVG, 1.0, (0.7, 0.7))
    with pytest.raises(ValueError):
        PayoffSpec(PayoffKind.PUT_ON_AVG, -1.0, (0.5, 0.5))


def test_drift_is_risk_neutral():
    m = BlackScholes(0.06, (0.4, 1.0))
    assert np.allclose(m.drift, [0.06 - 0.08, 0.06 - 0.5])


def test_driftless_cdf_at_zero_is_half():
    m = BlackScholes(0.06, (math.sqrt(0.12),))
    assert increment_distribution(m, 3.7).cdf_at_zero()[0] == pytest.approx(0.5, abs=1e-12)


def test_cdf_at_zero_negative_drift():
    m = BlackScholes(0.06, (1.0,))
    assert increment_distribution(m, 1.0).cdf_at_zero()[0] == pytest.approx(PHI_0_44, abs=1e-14)


def test_merton_poisson_mixture():
    m = MertonJump1D.from_drift(0.0, 1.0, 1.0, 1.0)
    assert m.alpha == pytest.approx(0.0, abs=1e-15)
    assert increment_distribution(m, 1.0).cdf_at_zero() == pytest.approx(MERTON_CDF_AT_ZERO, abs=1e-13)


@given(r=st.floats(0.001, 0.2), sig=st.floats(0.05, 1.5), t=st.floats(0.01, 5.0))
def test_discounted_price_is_martingale_bs(r, sig, t):
    m = BlackScholes(r, (sig,))
    assert increment_distribution(m, t).expected_exp()[0] == pytest.approx(math.exp(r * t), rel=1e-10)


@given(r=st.floats(0.001, 0.2), sig=st.floats(0.05, 1.0), jump=st.floats(0.01, 1.0),
       lam=st.floats(0.0, 3.0), t=st.floats(0.01, 5.0))
def test_discounted_price_is_martingale_merton(r, sig, jump, lam, t):
    m = MertonJump1D(r, sig, jump, lam)
    assert increment_distribution(m, t).expected_exp()[0] == pytest.approx(math.exp(r * t), rel=1e-10)


@given(r=st.floats(0.01, 1), dr=st.floats(0.01, 1), t=st.floats(0.05, 3))
def test_cdf_at_zero_decreases_with_drift(r, dr, t):
    # same vol, larger rate means larger drift
    lo = BlackScholes(r, (1.0,))
    hi = BlackScholes(r + dr, (1.0,))
    assert increment_distribution(hi, t).cdf_at_zero()[0] < increment_distribution(lo, t).cdf_at_zero()[0]


def test_merton_cdf_matches_sampling():
    m = MertonJump1D(0.05, 0.3, 0.2, 2.0)
    law = increment_distribution(m, 0.5)
    x = law.sample(np.random.default_rng(3), 200_000)[:, 0]
    for q in (-0.5, 0.0, 0.3):
        emp = np.mean(x <= q)
        assert abs(emp - law.cdf(q)) < 4 * math.sqrt(emp * (1 - emp) / len(x))


@given(x=st.lists(st.floats(-3, 3), min_size=3, max_size=3),
       kind=st.sampled_from(list(PayoffKind)))
def test_payoff_nonnegative(x, kind):
    if kind in (PayoffKind.VANILLA_PUT, PayoffKind.VANILLA_CALL):
        p, x = PayoffSpec(kind, 1.0), x[:1]
    elif kind in (PayoffKind.PUT_ON_AVG, PayoffKind.CALL_ON_AVG):
        p = PayoffSpec.equal_average(kind, 1.0, 3)
    else:
        p = PayoffSpec(kind, 1.0)
    assert evaluate_payoff(p, x) >= 0.0


def test_bs_cdf_componentwise():
    m = BlackScholes(0.05, (0.2, 0.5))
    law = increment_distribution(m, 2.0)
    expect = ndtr((np.array([0.1, -0.2]) - m.drift * 2.0) / (m.vol * math.sqrt(2.0)))
    assert np.allclose(law.cdf([0.1, -0.2]), expect)
