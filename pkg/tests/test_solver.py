import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from dbsampling import airy
from dbsampling.errors import NonDiagonalHamiltonian
from dbsampling.hamiltonian import ConstantDiagonal, GridGeneral, Hamiltonian, PolynomialDiagonal
from dbsampling.solver import (SIGNATURE, fundamental_solution, norm_squared, prufer, prufer_flow,
                               solve, transfer_matrix)


def _closed_constant(g0, z, x):
    h1, h2 = 0.5 + g0, 0.5 - g0
    k = math.sqrt(h1 * h2)
    return np.cos(k * z * x), math.sqrt(h1 / h2) * np.sin(k * z * x)


def test_zero_parameter_is_constant():
    u = fundamental_solution(Hamiltonian.airy(1.0), 0.0, 0.7)
    assert (u.u1, u.u2) == (1, 0)


def test_quarter_turn():
    u = fundamental_solution(Hamiltonian.constant(0.0, 2.0), math.pi, 1.0)
    assert u.u1 == pytest.approx(0, abs=1e-14)
    assert u.u2 == pytest.approx(1, abs=1e-14)


@settings(max_examples=30, deadline=None)
@given(g0=st.floats(-0.45, 0.45), re=st.floats(-50, 50), im=st.floats(-3, 3), x=st.floats(0, 2))
def test_constant_matches_closed_form(g0, re, im, x):
    z = complex(re, im)
    u = solve(Hamiltonian.constant(g0, 2.0), [z], [x])[0, 0]
    c, s = _closed_constant(g0, z, x)
    scale = math.exp(abs(im) * x)
    assert abs(u[0] - c) < 1e-11 * scale and abs(u[1] - s) < 1e-11 * scale


def test_airy_matches_closed_form_complex():
    rng = np.random.default_rng(4)
    z = rng.uniform(-20, 20, 30) + 1j * rng.uniform(-2, 2, 30)
    x = np.linspace(0.05, 1.0, 5)
    u = solve(Hamiltonian.airy(1.0), z, x)
    for k, xk in enumerate(x):
        ref = np.stack(airy.fundamental(z, xk), axis=-1)
        np.testing.assert_allclose(u[k], ref, rtol=1e-9, atol=1e-10)


def test_general_grid_against_ivp():
    xs = np.linspace(0, 1, 6)
    seg = GridGeneral(0.0, 1.0, xs, 0.6 + 0.1 * xs, 0.4 - 0.1 * xs, 0.15 * np.sin(3 * xs))
    H = Hamiltonian((seg,))
    z = 7.0 + 0.5j

    def rhs(x, u):
        # J u' = -z H u  =>  u' = z J H u
        return z * SIGNATURE @ H.matrix(np.array([x]))[0] @ u

    ref = solve_ivp(rhs, (0, 1), np.array([1, 0], complex), rtol=1e-12, atol=1e-13,
                    method="DOP853", max_step=0.01).y[:, -1]
    np.testing.assert_allclose(solve(H, [z], [1.0])[0, 0], ref, rtol=1e-9, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(re=st.floats(-30, 30), im=st.floats(-2, 2), x0=st.floats(0, 1), x1=st.floats(1, 2))
def test_transfer_matrix_is_unimodular_and_composes(re, im, x0, x1):
    H = Hamiltonian((ConstantDiagonal(0.0, 0.6, 0.2), PolynomialDiagonal(0.6, 2.0, (0.3, 0.4), (0.5,))))
    z = complex(re, im)
    T01 = transfer_matrix(H, z, 0.0, x0)
    T12 = transfer_matrix(H, z, x0, x1)
    T02 = transfer_matrix(H, z, 0.0, x1)
    scale = np.abs(T02).max() * max(np.abs(T01).max(), 1) * max(np.abs(T12).max(), 1)
    assert abs(np.linalg.det(T02) - 1) < 1e-9 * np.abs(T02).max() ** 2
    np.testing.assert_allclose(T12 @ T01, T02, atol=1e-9 * scale)


@settings(max_examples=25, deadline=None)
@given(re=st.floats(-40, 40), im=st.floats(-2, 2))
def test_conjugation_symmetry(re, im):
    H = Hamiltonian.airy(1.5)
    z = complex(re, im)
    u = solve(H, [z, z.conjugate()], [0.4, 1.5])
    np.testing.assert_allclose(u[:, 1], np.conj(u[:, 0]), rtol=1e-12, atol=1e-13)


def test_prufer_zero_and_free():
    st0 = prufer_flow(Hamiltonian.airy(1.0), 0.0, 1.0)
    assert (st0.theta, st0.logR) == (0.0, 0.0)
    H = Hamiltonian.constant(0.0, 2.0)
    for lam in (0.3, -7.0, 123.4):
        s = prufer_flow(H, lam, 1.3)
        assert s.theta == pytest.approx(lam * 1.3 / 2, rel=1e-14)
        assert s.logR == pytest.approx(0.0, abs=1e-13)


@pytest.mark.parametrize("H", [Hamiltonian.airy(1.0), Hamiltonian.constant(0.3, 1.0),
                               Hamiltonian((ConstantDiagonal(0, 0.4, -0.2), PolynomialDiagonal(0.4, 1.0, (1.0, 1.0), (0.2, 0.5))))])
def test_prufer_consistent_with_solution(H):
    lam = np.array([-40.0, -3.0, 0.5, 11.0, 60.0])
    for x in (0.25, 0.8, 1.0):
        theta, logr, _ = prufer(H, lam, x)
        u = solve(H, lam, [x])[0].real
        r = np.exp(logr)
        np.testing.assert_allclose(r * np.cos(theta), u[:, 0], atol=1e-8)
        np.testing.assert_allclose(r * np.sin(theta), u[:, 1], atol=1e-8)


def test_prufer_rejects_general():
    seg = GridGeneral(0.0, 1.0, [0, 1], [0.5, 0.5], [0.5, 0.5], [0.1, 0.1])
    with pytest.raises(NonDiagonalHamiltonian):
        prufer_flow(Hamiltonian((seg,)), 1.0, 1.0)


def test_norms():
    assert norm_squared(Hamiltonian.constant(0.0, 2.0), 17.3) == pytest.approx(1.0, rel=1e-12)
    assert norm_squared(Hamiltonian.airy(1.3), 0.0) == pytest.approx(1.3, rel=1e-12)
    lam = np.array([-250.0, -3.0, 0.7, 42.0, 400.0])
    np.testing.assert_allclose(norm_squared(Hamiltonian.airy(1.0), lam), airy.airy_norm(lam, 1.0), rtol=1e-9)


@settings(max_examples=20, deadline=None)
@given(g0=st.floats(-0.45, 0.45), lam=st.floats(-80, 80), l=st.floats(0.1, 2.0))
def test_constant_norm_closed_form(g0, lam, l):
    # int_0^l h1 cos^2 + h2 alpha^2 sin^2 = h1 l
    val = norm_squared(Hamiltonian.constant(g0, 2.0), lam, l)
    assert val == pytest.approx((0.5 + g0) * l, rel=1e-9)


def test_norm_lower_bound():
    # |g| <= 1/2 - delta on [a, c]: ||u(lam, .)||^2 / R(lam, a)^2 stays bounded below
    from dbsampling.hamiltonian import DiagonalFunction

    H = Hamiltonian((DiagonalFunction(0.0, 2.0, lambda x: 0.3 * np.sin(3 * x)),))
    lam = np.linspace(-200, 200, 1000)
    _, logr, _ = prufer(H, lam, 0.8)
    ratio = np.sqrt(prufer(H, lam, 2.0)[2]) / np.exp(logr)
    assert ratio.min() > 0.1
