import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from dbsampling import airy
from dbsampling.errors import BranchMismatch

AI0, BI0 = special.airy(0.0)[0], special.airy(0.0)[2]


def _wi_oracle(x):
    ai, aip, bi, bip = special.airy(x)
    return math.pi * (AI0 * bi - BI0 * ai), math.pi * (AI0 * bip - BI0 * aip)


def test_origin():
    e = airy.wi_eval(0.0)
    assert (e.wi, e.wi_prime, e.branch) == (0.0, 1.0, "series")


def test_known_values():
    assert airy.wi_eval(1.0).wi == pytest.approx(1.0853396480829824, rel=1e-14)
    # wi(-1) = -(1 - 1/12 + 10/7! - 80/10! + ...)
    partial = 1 - 1 / 12 + 10 / math.factorial(7) - 80 / math.factorial(10)
    assert airy.wi_eval(-1.0).wi == pytest.approx(-partial, abs=1e-6)
    assert airy.wi_eval(-1.0).wi == pytest.approx(_wi_oracle(-1.0)[0], rel=1e-14)


def test_c0():
    ref = 2 * math.sqrt(math.pi) / (3 ** (2 / 3) * special.gamma(2 / 3))
    assert airy.C0 == pytest.approx(ref, rel=1e-15)
    assert airy.C0 == pytest.approx(1.2585417, abs=1e-7)


@settings(max_examples=200, deadline=None)
@given(x=st.floats(-80.0, 4.0))
def test_wi_against_scipy(x):
    w, d = airy.wi(np.array([x]))
    rw, rd = _wi_oracle(x)
    # absolute error relative to the oscillation envelope on the negative axis
    env = max(1.0, abs(x)) ** 0.25
    assert abs(w[0] - rw) < 1e-9 * max(env, abs(rw))
    assert abs(d[0] - rd) < 1e-9 * max(env, abs(rd))


def test_branches_join():
    assert airy.branch_mismatch() < airy.BRANCH_TOL
    assert airy.wi_eval(-airy.X_SWITCH - 0.5).branch == "asymptotic"
    with pytest.raises(BranchMismatch):
        airy.wi(np.array([-3.0]), x_switch=2.0)


def test_w_beta_identities():
    x = np.linspace(0.1, 30, 50)
    np.testing.assert_allclose(airy.w_beta(0.0, x), airy.wi(-x)[1])
    y = airy.zeros("wi", n_max=10).values[1:]
    np.testing.assert_allclose(airy.w_beta(2.3, y), airy.wi(-y)[1], atol=1e-9)


@pytest.mark.parametrize("beta", [0.0, 0.7, -1.5])
def test_w_beta_large_x_form(beta):
    x = np.linspace(20, 400, 300)
    zeta = 2 / 3 * x**1.5
    model = airy.C0 * x**0.25 * (np.cos(zeta + math.pi / 12) - beta * np.sin(zeta + math.pi / 12))
    scaled = np.abs(airy.w_beta(beta, x) - model) * x**1.25
    assert scaled.max() < 1.0


def test_zero_table():
    t = airy.zeros("wi", n_max=50)
    assert t.values[0] == 0.0
    np.testing.assert_allclose(t.values[1:3], [2.66635269, 4.34247757], rtol=1e-8)
    assert t.residuals.max() < 1e-10
    assert np.all(np.diff(t.values) > 0)
    np.testing.assert_allclose(_wi_oracle(-t.values[1:])[0], 0, atol=1e-9)
    for beta, x0 in ((0.0, 1.51490605), (1.0, 0.87991369), (-1.0, 2.13507226)):
        tb = airy.zeros("w", beta, 50)
        assert tb.values[0] == pytest.approx(x0, rel=1e-8)
        assert tb.residuals.max() < 1e-10
    lines = t.to_csv().splitlines()
    assert lines[0] == "n,value,residual" and len(lines) == 52


@settings(max_examples=15, deadline=None)
@given(beta=st.floats(-4, 4))
def test_zeros_interlace_wi_zeros(beta):
    x = airy.zeros("w", beta, 20).values
    y = airy.zeros("wi", n_max=21).values
    # w(beta, .) changes sign exactly once between consecutive wi zeros
    assert np.all(np.diff(x) > 0)
    assert np.all(np.abs(x - airy.zero_model("w", np.arange(21), beta)) < 0.2)
    assert np.all((x[1:] > y[1:-1]) & (x[1:] < y[2:]))


def test_norms_and_spectrum():
    lam = np.array([3.0, 50.0, 400.0])
    np.testing.assert_allclose(airy.airy_norm(lam, 1.0), [1.50298098, 3.8900008, 7.78032415], rtol=1e-7)
    np.testing.assert_allclose(airy.airy_norm(-lam, 1.0), airy.airy_norm(lam, 1.0))
    assert airy.airy_norm(0.0, 1.7) == 1.7
    n = np.arange(40, 61)
    s = airy.airy_spectrum(1.0, 0.0, 60)
    np.testing.assert_allclose(airy.airy_norm(s.lambdas[-21:], 1.0) / airy.norm_model(n, 1.0), 1, atol=3e-3)
    for gamma in (0.0, 0.4, math.pi / 2, 2.9):
        s = airy.airy_spectrum(1.3, gamma, 40)
        big = np.abs(s.n) >= 10
        rel = s.lambdas[big] / airy.eigenvalue_model(s.n[big], 1.3, gamma) - 1
        assert np.max(np.abs(rel)) < 1e-3


def test_fundamental_parity_and_series():
    lam = np.linspace(0.5, 40, 17)
    x = 0.8
    u1p, u2p = airy.fundamental(lam, x)
    u1m, u2m = airy.fundamental(-lam, x)
    np.testing.assert_allclose(u1m, u1p)
    np.testing.assert_allclose(u2m, -u2p)
    # the entire series and the real-axis formula agree where both are accurate
    e1, e2 = airy.fundamental(lam + 1e-300j, x)
    np.testing.assert_allclose(e1.real, u1p, atol=1e-10)
    np.testing.assert_allclose(e2.real, u2p, atol=1e-10)


def test_dirichlet_norm_identity():
    b = 1.4
    y = airy.zeros("wi", n_max=8).values[1:]
    lam = (y / b) ** 1.5
    np.testing.assert_allclose(airy.airy_norm(lam, b), 2 / 3 * b * airy.wi(-y)[1] ** 2, rtol=1e-10)


def test_sample_weight_growth():
    s = airy.airy_spectrum(1.0, 0.0, 100)
    sel = (s.n >= 20) & (s.n <= 100)
    slope = np.polyfit(np.log(1 + s.n[sel]), np.log(np.sqrt(s.k_diag[sel])), 1)[0]
    assert slope == pytest.approx(1 / 6, abs=0.02)
