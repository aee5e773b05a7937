import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dbsampling.errors import EmptyDomain, GapInPartition, NonPositiveSemidefinite
from dbsampling.hamiltonian import (ConstantDiagonal, DiagonalFunction, GridGeneral, Hamiltonian,
                                    PolynomialDiagonal, detect_singular_intervals,
                                    exponential_type, trace_normalize, validate)


def test_constant_identity_like():
    v = validate(Hamiltonian.constant(0.0, 2.0))
    assert v.diagonal and v.trace_normalized
    assert v.singular_intervals == []


def test_rank_one_is_a_singular_interval():
    H = Hamiltonian((PolynomialDiagonal(0.0, 1.0, (1.0,), (0.0,)),))
    (si,) = validate(H).singular_intervals
    assert (si.lo, si.hi) == (0.0, 1.0)
    assert si.phi == pytest.approx(0.0)


def test_airy_not_trace_normalized():
    v = validate(Hamiltonian.airy(1.0))
    assert v.diagonal and not v.trace_normalized


def test_singular_tail_inside_regular_h():
    H = Hamiltonian((ConstantDiagonal(0.0, 0.5, 0.1), PolynomialDiagonal(0.5, 1.0, (1.0,), (0.0,))))
    (si,) = detect_singular_intervals(H)
    assert (si.lo, si.hi, si.phi) == (0.5, 1.0, 0.0)


def test_vertical_direction():
    H = Hamiltonian((PolynomialDiagonal(0.0, 1.0, (0.0,), (1.0,)),))
    (si,) = detect_singular_intervals(H)
    assert si.phi == pytest.approx(math.pi / 2)


def test_full_rank_has_no_singular_interval():
    assert detect_singular_intervals(Hamiltonian.constant(0.3, 1.0)) == []


def test_off_diagonal_rank_one_angle():
    # H = xi xi^t with xi = (cos t, sin t)
    t = 0.7
    c, s = math.cos(t), math.sin(t)
    seg = GridGeneral(0.0, 1.0, [0.0, 1.0], [c * c] * 2, [s * s] * 2, [c * s] * 2)
    (si,) = detect_singular_intervals(Hamiltonian((seg,)))
    assert si.phi == pytest.approx(t)


def test_validation_errors():
    with pytest.raises(EmptyDomain):
        validate(Hamiltonian(()))
    with pytest.raises(GapInPartition):
        validate(Hamiltonian((ConstantDiagonal(0, 1), ConstantDiagonal(1.5, 2))))
    with pytest.raises(NonPositiveSemidefinite):
        validate(Hamiltonian((PolynomialDiagonal(0, 1, (1.0,), (-0.5,)),)))
    with pytest.raises(NonPositiveSemidefinite):
        ConstantDiagonal(0, 1, 0.7)
    with pytest.raises(NonPositiveSemidefinite):
        validate(Hamiltonian((GridGeneral(0, 1, [0, 1], [1, 1], [1, 1], [2, 2]),)))


def test_trace_normalize_airy():
    b = 1.5
    tn = trace_normalize(Hamiltonian.airy(b))
    H1 = tn.hamiltonian
    assert H1.b == pytest.approx(b + b * b / 2)
    y = np.linspace(0.01, H1.b - 0.01, 9)
    h1, h2, h3 = H1.entries(y)
    r = np.sqrt(1 + 2 * y)
    np.testing.assert_allclose(h1, 1 / r, rtol=1e-12)
    np.testing.assert_allclose(h2, (r - 1) / r, rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(tn.x_of_y(tn.y_of_x(np.linspace(0, b, 7))), np.linspace(0, b, 7), atol=1e-12)


def test_trace_normalize_fixed_point():
    H = Hamiltonian.constant(0.2, 2.0)
    tn = trace_normalize(H)
    assert tn.hamiltonian is H
    np.testing.assert_array_equal(tn.y_of_x([0.3, 1.1]), [0.3, 1.1])


def test_trace_normalize_scaled_singular():
    H = Hamiltonian((PolynomialDiagonal(0.0, 1.0, (2.0,), (0.0,)),))
    H1 = trace_normalize(H).hamiltonian
    assert H1.b == pytest.approx(2.0)
    h1, h2, _ = H1.entries(np.array([0.5, 1.5]))
    np.testing.assert_allclose(h1, 1.0)
    np.testing.assert_allclose(h2, 0.0)


def test_exponential_type():
    assert exponential_type(Hamiltonian.constant(0.0, 2.0), 2.0) == pytest.approx(1.0)
    assert exponential_type(Hamiltonian((PolynomialDiagonal(0, 1, (1.0,), (0.0,)),))) == 0.0
    assert exponential_type(Hamiltonian.airy(1.0), 1.0) == pytest.approx(2 / 3, rel=1e-10)


def test_records_round_trip():
    H = Hamiltonian((ConstantDiagonal(0.0, 1.0, 0.1), PolynomialDiagonal(1.0, 2.0, (1.0, 0.5), (0.2,)),
                     DiagonalFunction(2.0, 3.0, ([2.0, 3.0], [0.0, 0.2])),
                     GridGeneral(3.0, 4.0, [3.0, 4.0], [0.6, 0.5], [0.4, 0.5], [0.1, 0.0])))
    H2 = Hamiltonian.from_records(H.to_records())
    x = np.linspace(0, 4, 41)
    np.testing.assert_array_equal(H.matrix(x), H2.matrix(x))


@settings(max_examples=40, deadline=None)
@given(g0=st.floats(-0.45, 0.45), b=st.floats(0.1, 10.0), frac=st.floats(0.0, 1.0))
def test_constant_type_is_kappa_times_length(g0, b, frac):
    H = Hamiltonian.constant(g0, b)
    l = frac * b
    assert exponential_type(H, l) == pytest.approx(0.5 * math.sqrt(1 - 4 * g0 * g0) * l, abs=1e-14)


@settings(max_examples=25, deadline=None)
@given(c0=st.floats(0.1, 3.0), c1=st.floats(0.0, 2.0), d0=st.floats(0.1, 3.0), b=st.floats(0.2, 3.0))
def test_trace_normalize_properties(c0, c1, d0, b):
    H = Hamiltonian((PolynomialDiagonal(0.0, b, (c0, c1), (d0,)),))
    tn = trace_normalize(H)
    H1 = tn.hamiltonian
    y = np.linspace(0, H1.b, 11)
    h1, h2, _ = H1.entries(y)
    np.testing.assert_allclose(h1 + h2, 1.0, atol=1e-12)
    assert np.all(np.diff(tn.y_of_x(np.linspace(0, b, 11))) > 0)
    # idempotent: a second normalization changes nothing
    assert trace_normalize(H1).hamiltonian is H1
    # the type is invariant under reparametrization
    assert exponential_type(H1) == pytest.approx(exponential_type(H), rel=1e-8)
