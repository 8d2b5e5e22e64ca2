import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alch.extrapolate import CONSTANT, NO_CONVERGENCE, NON_MONOTONE, OK, LimitExtrapolator, extrapolate_limit, fit_window

R = np.linspace(4.0, 10.0, 61)


def test_single_exponential_recovered():
    res = extrapolate_limit(R, 2.0 + 3.0 * np.exp(-1.2 * R), window=(4, 10))
    assert abs(res.limit - 2.0) < 1e-9
    assert abs(res.slope - 1.2) < 1e-6
    assert res.flags == OK


def test_constant_series():
    res = extrapolate_limit(R, np.full(R.size, 0.7))
    assert res.limit == 0.7
    assert res.flags == CONSTANT
    assert res.residual == 0.0


def test_log_prefactor_limit_and_bias():
    res = extrapolate_limit(R, (R + 1) * np.exp(-1.5 * R), window=(4, 10))
    assert abs(res.limit) < 1e-4
    assert res.bias > 0


def test_non_monotone_falls_back_to_plain():
    y = 1.0 + 1e-3 * np.sin(5 * R)
    res = extrapolate_limit(R, y)
    assert res.flags == NON_MONOTONE
    assert res.limit == y[-1]


def test_slow_drift_is_not_an_exponential():
    y = 1.0 + 1e-6 * R
    res = extrapolate_limit(R, y)
    assert res.flags == NO_CONVERGENCE
    assert res.limit == y[-1]


def test_plain_mode_and_vectorised_tail():
    Y = np.stack([1 + np.exp(-R), 3 - 2 * np.exp(-2 * R)], axis=-1).reshape(R.size, 1, 2)
    res = extrapolate_limit(R, Y, window=(4, 10))
    assert res.limit.shape == (1, 2)
    np.testing.assert_allclose(res.limit, [[1.0, 3.0]], atol=1e-9)
    plain = extrapolate_limit(R, Y, mode="plain")
    np.testing.assert_array_equal(plain.limit, Y[-1])


@pytest.mark.parametrize("kw, msg", [
    ({"mode": "pade"}, "unknown mode"),
    ({"window": (9.9, 10)}, "fit window"),
])
def test_errors(kw, msg):
    with pytest.raises(ValueError, match=msg):
        extrapolate_limit(R, np.exp(-R), **kw)


def test_rejects_nonfinite_and_short_input():
    with pytest.raises(ValueError, match="non-finite"):
        extrapolate_limit(R, np.full(R.size, np.nan))
    with pytest.raises(ValueError, match="r-samples"):
        fit_window(np.arange(3.0))


def test_default_window_is_last_third():
    idx = fit_window(R)
    assert R[idx[0]] == pytest.approx(8.0)
    assert idx[-1] == R.size - 1


@settings(max_examples=40, deadline=None)
@given(L=st.floats(-5, 5), C=st.floats(0.1, 5), b=st.floats(0.3, 2.0), s=st.floats(0.01, 100))
def test_scale_equivariance(L, C, b, s):
    y = L + C * np.exp(-b * R)
    r1 = extrapolate_limit(R, y, window=(4, 10))
    r2 = extrapolate_limit(R, s * y, window=(4, 10))
    tol = 1e-7 * (1 + abs(L) + C) * s
    assert abs(r2.limit - s * r1.limit) <= tol
    if r1.flags == OK:
        assert abs(r1.limit - L) < 1e-6 * (1 + abs(L) + C)


def test_estimator_api():
    est = LimitExtrapolator(window=(4, 10)).fit(R, 1 + np.exp(-R))
    assert abs(est.limit_ - 1.0) < 1e-9
    assert est.get_params()["window"] == (4, 10)
    assert abs(est.transform(5 - np.exp(-0.8 * R)) - 5.0) < 1e-8
