import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dbsampling.errors import CoincidenceInstability, ConfigurationError
from dbsampling.hamiltonian import ConstantDiagonal, Hamiltonian, PolynomialDiagonal
from dbsampling.kernels import (TaperWeight, calibrate_pw_normalization, kernel_eval, kernel_slice_csv,
                                oversampling_kernel, pw_kernels, reproducing_kernel)
from dbsampling.solver import norm_squared, solve

FREE = Hamiltonian.constant(0.0, 2.0)
MIXED = Hamiltonian((ConstantDiagonal(0.0, 0.7, 0.2), PolynomialDiagonal(0.7, 2.0, (0.5, 0.3), (0.4,))))
cplx = st.builds(complex, st.floats(-8, 8), st.floats(-1.5, 1.5))


def _gl(H, lo, hi, z, w, weight=lambda x: 1.0, kinks=(), panels=40):
    """Independent ``int u(z)^t H u(conj w) weight dx`` on Gauss-Legendre panels split at the kinks."""
    t, wt = np.polynomial.legendre.leggauss(20)
    cuts = [lo, hi] + [k for k in list(kinks) + list(H.breakpoints) if lo < k < hi]
    e = np.unique(np.concatenate([np.linspace(lo, hi, panels + 1), cuts]))
    x = np.concatenate([0.5 * (b - a) * t + 0.5 * (a + b) for a, b in zip(e[:-1], e[1:])])
    q = np.concatenate([0.5 * (b - a) * wt for a, b in zip(e[:-1], e[1:])]) * weight(x)
    u = solve(H, np.array([z, np.conj(w)]), x)
    return np.einsum("m,mi,mij,mj->", q, u[:, 0], H.matrix(x), u[:, 1])


def test_free_closed_form():
    z = np.array([0.3 + 0.1j, -4.0, 2.0 - 1j])
    w = np.array([1.1 - 0.4j, 0.0, 7.5 + 0.2j])
    t = z[:, None] - np.conj(w)
    np.testing.assert_allclose(reproducing_kernel(FREE, 1.3, z, w), np.sin(0.65 * t) / t, rtol=1e-11)


def test_diagonal_is_norm():
    lam = np.array([-30.0, -1.0, 0.0, 2.5, 48.0])
    k = reproducing_kernel(MIXED, 2.0, lam, lam)
    np.testing.assert_allclose(np.diag(k).real, norm_squared(MIXED, lam), rtol=1e-10)


@settings(max_examples=30, deadline=None)
@given(z=cplx, w=cplx, l=st.floats(0.2, 2.0))
def test_hermitian_symmetry(z, w, l):
    a = reproducing_kernel(MIXED, l, z, w)
    b = reproducing_kernel(MIXED, l, w, z)
    assert abs(a - np.conj(b)) <= 1e-10 * max(1.0, abs(a))


@settings(max_examples=20, deadline=None)
@given(z=cplx, w=cplx)
def test_forms_agree(z, w):
    d = reproducing_kernel(MIXED, 1.6, z, w, form="integral")
    if abs(z - np.conj(w)) > 1e-3:
        q = reproducing_kernel(MIXED, 1.6, z, w, form="quotient")
        assert abs(q - d) < 1e-9 * max(1.0, abs(d))
    else:
        with pytest.raises(CoincidenceInstability):
            reproducing_kernel(MIXED, 1.6, np.conj(w), w, form="quotient")
    assert abs(d - _gl(MIXED, 0, 1.6, z, w)) < 1e-9 * max(1.0, abs(d))


def test_near_coincidence_uses_direct_form():
    w = 2.0 + 0.3j
    z = np.conj(w) + 1e-9
    ev = kernel_eval(MIXED, z, w)
    assert ev.form_used == "integral"
    ref = reproducing_kernel(MIXED, 2.0, np.conj(w), w, form="integral")
    assert abs(ev.value - ref) < 1e-8


def test_oversampling_free_closed_form():
    tp = TaperWeight(0.8, 1.4, 2.0)
    z = np.array([0.2 + 0.5j, 3.0, -6.0 - 1j])
    lam = np.array([-2 * math.pi, 1.0, 9.0])
    t = z[:, None] - lam
    ref = (np.cos(0.5 * t * tp.a) - np.cos(0.5 * t * tp.c)) / (0.5 * (tp.c - tp.a) * t * t)
    np.testing.assert_allclose(oversampling_kernel(FREE, tp, z, lam), ref, rtol=1e-10)


@settings(max_examples=20, deadline=None)
@given(z=cplx, w=cplx)
def test_oversampling_against_quadrature(z, w):
    tp = TaperWeight(0.5, 1.3, 2.0)
    j = oversampling_kernel(MIXED, tp, z, w)
    ref = _gl(MIXED, 0, tp.c, z, w, weight=tp, kinks=(tp.a,))
    assert abs(j - ref) < 1e-9 * max(1.0, abs(ref))
    assert abs(oversampling_kernel(MIXED, tp, w, z) - np.conj(j)) < 1e-9 * max(1.0, abs(j))


def test_oversampling_diagonal_positive():
    tp = TaperWeight.midpoint(0.6, 2.0)
    w = np.array([-3 + 0.4j, 0.0, 5.5 - 1j])
    d = np.diag(oversampling_kernel(MIXED, tp, w, w, check=True))
    assert np.all(np.abs(d.imag) < 1e-12 * d.real) and np.all(d.real > 0)


def test_oversampling_reproduces_on_subspace():
    tp = TaperWeight(0.8, 1.4, 2.0)
    w0, z = 0.3 + 0.2j, -1.7 + 0.6j
    # <F, J(., z)> with F = K_a(., w0); the element of F lives on [0, a] where R = 1
    inner = _gl(FREE, 0, tp.a, z, w0, weight=tp)
    assert abs(inner - reproducing_kernel(FREE, tp.a, z, w0)) < 1e-10


def test_taper_contracts():
    with pytest.raises(ConfigurationError):
        TaperWeight(1.0, 0.8, 2.0)
    with pytest.raises(ConfigurationError):
        oversampling_kernel(FREE, TaperWeight(0.5, 1.0, 3.0), 0.0, 0.0)
    sing = Hamiltonian((ConstantDiagonal(0.0, 1.0), PolynomialDiagonal(1.0, 2.0, (1.0,), (0.0,))))
    with pytest.raises(ConfigurationError):
        oversampling_kernel(sing, TaperWeight(0.8, 1.5, 2.0), 0.0, 0.0)
    tp = TaperWeight(0.5, 1.5, 2.0)
    np.testing.assert_allclose(tp(np.array([0.2, 1.0, 1.7])), [1.0, 0.5, 0.0])
    assert tp.derivative(1.0) == -1.0


def test_pw_kernels():
    ga, gab = pw_kernels(1.0, 2.0, math.pi, 0.0)
    assert gab == pytest.approx(-4 / math.pi**2, rel=1e-14)
    assert ga == pytest.approx(0.0, abs=1e-15)
    assert pw_kernels(1.0, 2.0, 0.4 + 0.1j, 0.4 - 0.1j) == pytest.approx((1.0, 3.0))
    # the small-argument branch joins the closed form
    t = np.array([0.99e-4, 1.01e-4])
    g = pw_kernels(0.7, 1.9, t, 0.0)[1]
    assert abs(g[0] - g[1]) < 1e-7
    # a -> b degenerates to the sinc kernel of type b
    b = 1.5
    ga_b, gab = pw_kernels(b - 1e-7, b, np.array([0.3, 2.0 + 0.5j]), 0.1)
    sinc = pw_kernels(b, b + 1.0, np.array([0.3, 2.0 + 0.5j]), 0.1)[0]
    np.testing.assert_allclose(gab / (2 * b), sinc, rtol=1e-6)


def test_calibration_factor():
    cal = calibrate_pw_normalization(0.5, 1.0, N=100)
    assert cal.factor == pytest.approx(2.0, rel=1e-10)
    assert cal.variation < 1e-6 and len(cal.grid) == 100


def test_slice_csv():
    text = kernel_slice_csv(np.array([1 + 2j]), np.array([3 - 4j]))
    assert text.splitlines() == ["re_z,im_z,re_val,im_val", "1.0,2.0,3.0,-4.0"]


@settings(max_examples=15, deadline=None)
@given(z=cplx, w=cplx)
def test_oversampling_symmetries_and_split(z, w):
    tp = TaperWeight(0.5, 1.3, 2.0)
    j = oversampling_kernel(MIXED, tp, z, w)
    scale = max(1.0, abs(j))
    assert abs(j - oversampling_kernel(MIXED, tp, np.conj(w), np.conj(z))) < 1e-9 * scale
    # J - K_a is the tapered integral over [a, b]
    tail = _gl(MIXED, tp.a, tp.b, z, w, weight=tp, kinks=(tp.c,))
    assert abs(j - reproducing_kernel(MIXED, tp.a, z, w) - tail) < 1e-9 * scale


def test_degenerate_taper_is_continuous():
    z, w = 1.3 + 0.2j, -0.4
    vals = [oversampling_kernel(FREE, TaperWeight(0.8, c, 2.0), z, w) for c in (1.99, 1.999999, 2.0)]
    assert np.all(np.isfinite(vals))
    assert abs(vals[1] - vals[2]) < 1e-5 and abs(vals[0] - vals[2]) < 1e-2
