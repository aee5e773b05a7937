"""Reproducing kernels, the tapered oversampling kernel and their Paley-Wiener forms.

For ``v = u(w*, .)`` the identity ``d/dx [u(z)^t J v] = (z - w*) u(z)^t H v``
gives two expressions for every kernel: a quotient by ``z - w*`` that needs
only boundary values (or an integral of ``u^t J v`` against ``omega'``), and
a direct integral of ``u^t H v`` that stays valid on the diagonal.

All kernel functions take scalar or array ``z`` and ``w``.  Arrays produce
the outer table of shape ``z.shape + w.shape``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import CoincidenceInstability, ConfigurationError, NonConstantRatio
from .hamiltonian import Hamiltonian, detect_singular_intervals
from .solver import Integral, evaluate

TOL_COINCIDE = 1e-6
CHECK_TOL = 1e-6


@dataclass(frozen=True)
class TaperWeight:
    """``omega = 1`` up to ``a``, linear down to 0 on ``[a, c]``, 0 on ``[c, b]``."""

    a: float
    c: float
    b: float

    def __post_init__(self):
        if not 0 < self.a < self.c <= self.b:
            raise ConfigurationError(f"taper needs 0 < a < c <= b, got {self.a}, {self.c}, {self.b}")

    @classmethod
    def midpoint(cls, a: float, b: float) -> "TaperWeight":
        return cls(a, 0.5 * (a + b), b)

    def __call__(self, x):
        """The full weight ``R = chi_[0,a] + omega chi_(a,b]``."""
        x = np.asarray(x, dtype=float)
        return np.clip((self.c - x) / (self.c - self.a), 0.0, 1.0)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x > self.a) & (x < self.c), -1.0 / (self.c - self.a), 0.0)


@dataclass(frozen=True)
class KernelEval:
    z: complex
    w: complex
    value: complex
    form_used: str


def _prepare(z, w):
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    return z, w, z.ravel(), w.ravel()


def _shape(z, w, table):
    out = table.reshape(z.shape + w.shape)
    return complex(out) if out.ndim == 0 else out


_W_BATCH = 256


def _kernel(H, zz, ww, quotient_integral, direct_integrals, scale, form, tol_coincide, check):
    """Columns are processed in batches of similar ``|w|``, so each mesh fits its oscillation scale."""
    if len(ww) <= _W_BATCH:
        return _kernel_block(H, zz, ww, quotient_integral, direct_integrals, scale, form,
                             tol_coincide, check)
    out = np.empty((len(zz), len(ww)), dtype=complex)
    order = np.argsort(np.abs(ww), kind="stable")
    for first in range(0, len(ww), _W_BATCH):
        sel = order[first:first + _W_BATCH]
        out[:, sel] = _kernel_block(H, zz, ww[sel], quotient_integral, direct_integrals, scale,
                                    form, tol_coincide, check)
    return out


def _kernel_block(H, zz, ww, quotient_integral, direct_integrals, scale, form, tol_coincide, check):
    """Shared driver: ``quotient_integral`` is ``None`` for boundary-value quotients."""
    m, k = len(zz), len(ww)
    pts = np.concatenate([zz, np.conj(ww)])
    iz, iw = np.arange(m), np.arange(k) + m
    den = zz[:, None] - np.conj(ww)[None, :]
    near = np.abs(den) <= tol_coincide
    l = max(it.hi for it in direct_integrals)

    if form == "integral" or check:
        _, direct = evaluate(H, pts, integrals=direct_integrals,
                             pairs=[(iz, iw, True)] * len(direct_integrals))
        direct = sum(direct)
        if form == "integral":
            return direct
    if form not in ("auto", "quotient"):
        raise ValueError(f"unknown kernel form {form!r}")

    if quotient_integral is None:
        us, _ = evaluate(H, pts, stops=[l])
        u = us[0]
        num = u[:m, 1][:, None] * u[m:, 0][None, :] - u[:m, 0][:, None] * u[m:, 1][None, :]
    else:
        _, (num,) = evaluate(H, pts, integrals=[quotient_integral], pairs=[(iz, iw, True)])
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        table = num * scale / den

    if np.any(near):
        if form == "quotient":
            raise CoincidenceInstability("quotient form requested on the diagonal z = w*")
        i, j = np.nonzero(near)
        _, vals = evaluate(H, np.concatenate([zz[i], np.conj(ww[j])]), integrals=direct_integrals,
                           pairs=[(np.arange(len(i)), np.arange(len(i)) + len(i), False)] * len(direct_integrals))
        table[i, j] = sum(vals)

    if check:
        cs = np.sqrt(np.abs(_self_values(H, direct_integrals, zz)))[:, None] * \
            np.sqrt(np.abs(_self_values(H, direct_integrals, ww)))[None, :]
        err = np.abs(table - direct) / np.maximum(cs, 1e-300)
        if np.any(err > CHECK_TOL):
            a, b = np.unravel_index(np.argmax(err), err.shape)
            raise CoincidenceInstability(
                f"kernel forms disagree by {err[a, b]:.3g} at z={zz[a]}, w={ww[b]}")
    return table


def reproducing_kernel(H: Hamiltonian, l: float, z, w, form: str = "auto",
                       tol_coincide: float = TOL_COINCIDE, check: bool = False):
    """``K_l(z, w) = u(z, l)^t J u(w*, l) / (z - w*) = int_0^l u(z)^t H u(w*) dx``.

    ``form`` is ``"auto"`` (quotient, direct integral where ``|z - w*| <= tol_coincide``),
    ``"quotient"`` or ``"integral"``.  With ``check`` both forms are computed
    and compared relative to ``sqrt(K(z,z) K(w,w))``.
    """
    z, w, zz, ww = _prepare(z, w)
    table = _kernel(H, zz, ww, None, [Integral(0.0, float(l))], 1.0, form, tol_coincide, check)
    return _shape(z, w, table)


def _check_taper(H, taper):
    if taper.b > H.b * (1 + 1e-14):
        raise ConfigurationError(f"taper end {taper.b} exceeds the domain [0, {H.b}]")
    for si in detect_singular_intervals(H):
        if si.lo < taper.c and si.hi > taper.a:
            raise ConfigurationError(f"taper [{taper.a}, {taper.c}] overlaps a singular interval")


def _taper_integrals(taper):
    ramp = Integral(taper.a, taper.c, "H", weight=lambda x: (taper.c - x) / (taper.c - taper.a))
    return [Integral(0.0, taper.a), ramp]


def oversampling_kernel(H: Hamiltonian, taper: TaperWeight, z, w, form: str = "auto",
                        tol_coincide: float = TOL_COINCIDE, check: bool = False):
    """``J(z, w) = int_0^b u(z)^t H u(w*) R dx`` with ``R = chi_[0,a] + omega``.

    Off the diagonal it is evaluated as
    ``int_a^c u(z)^t J u(w*) dx / ((c - a)(z - w*))``.
    """
    _check_taper(H, taper)
    z, w, zz, ww = _prepare(z, w)
    quot = Integral(taper.a, taper.c, "J")
    direct = _taper_integrals(taper)
    table = _kernel(H, zz, ww, quot, direct, 1.0 / (taper.c - taper.a), form, tol_coincide, check)
    return _shape(z, w, table)


def _self_values(H, integrals, pts):
    m = len(pts)
    both = np.concatenate([pts, np.conj(pts)])
    idx = np.arange(m)
    _, vals = evaluate(H, both, integrals=integrals, pairs=[(idx, idx + m, False)] * len(integrals))
    return sum(vals)


def kernel_eval(H: Hamiltonian, z: complex, w: complex, l: float | None = None,
                taper: TaperWeight | None = None, tol_coincide: float = TOL_COINCIDE) -> KernelEval:
    """Single kernel value with the form that was used."""
    form = "integral" if abs(z - np.conj(w)) <= tol_coincide else "quotient"
    if taper is None:
        val = reproducing_kernel(H, H.b if l is None else l, z, w, tol_coincide=tol_coincide)
    else:
        val = oversampling_kernel(H, taper, z, w, tol_coincide=tol_coincide)
    return KernelEval(complex(z), complex(w), complex(val), form)


# Paley-Wiener -------------------------------------------------------------

def pw_kernels(a_pw: float, b_pw: float, z, w):
    """``(G_a, G_ab)`` for Paley-Wiener spaces, as given by the classical formulas.

    ``G_a = sin(a t) / (a t)`` and
    ``G_ab = 2 (cos(a t) - cos(b t)) / ((b - a) t^2)`` with ``t = z - w*``.
    ``G_ab`` carries the raw normalization; see :func:`calibrate_pw_normalization`.
    """
    if not 0 < a_pw < b_pw:
        raise ConfigurationError("need 0 < a_pw < b_pw")
    t = np.asarray(z, dtype=complex)[..., None] - np.conj(np.asarray(w, dtype=complex))
    t = t.reshape(np.shape(z) + np.shape(w))
    small = np.abs(t) < 1e-4
    ts = np.where(small, 1.0, t)
    at = a_pw * ts
    ga = np.where(small, 1 - (a_pw * t) ** 2 / 6 + (a_pw * t) ** 4 / 120, np.sin(at) / at)
    gab_series = (a_pw + b_pw) - (a_pw ** 4 - b_pw ** 4) / (12 * (a_pw - b_pw)) * t ** 2 \
        + (a_pw ** 6 - b_pw ** 6) / (360 * (a_pw - b_pw)) * t ** 4
    gab = np.where(small, gab_series,
                   2 * (np.cos(at) - np.cos(b_pw * ts)) / ((b_pw - a_pw) * ts * ts))
    if ga.ndim == 0:
        return complex(ga), complex(gab)
    return ga, gab


@dataclass(frozen=True)
class Calibration:
    factor: float
    variation: float
    sup_error: float
    N: int
    grid: np.ndarray


def calibrate_pw_normalization(a_pw: float, b_pw: float, N: int = 200, w0: complex = 0.3 + 0.2j,
                               grid=None, tol: float = 1e-6) -> Calibration:
    """Ratio between the raw ``G_ab`` sum and the general ``J / K`` reconstruction.

    The equivalent canonical system is ``H = I/2`` on ``[0, 2 b_pw]`` (type
    ``b_pw``, eigenvalues ``n pi / b_pw`` for ``gamma = 0``) with taper
    ``(2 a_pw, 2 b_pw, 2 b_pw)``.  Both sums are applied to the samples of
    ``F = K_{2 a_pw}(., w0)``; the returned ``sup_error`` is that of the raw
    sum divided by ``factor``.
    """
    from .spectrum import eigenvalues

    if not 0 < a_pw < b_pw:
        raise ConfigurationError("need 0 < a_pw < b_pw")
    if grid is None:
        re, im = np.meshgrid(np.linspace(-5, 5, 20), np.linspace(-1, 1, 5))
        grid = (re + 1j * im).ravel()
    grid = np.asarray(grid, dtype=complex)
    H = Hamiltonian.constant(0.0, 2 * b_pw)
    spec = eigenvalues(H, None, 0.0, -N, N)
    taper = TaperWeight(2 * a_pw, 2 * b_pw, 2 * b_pw)
    samples = reproducing_kernel(H, 2 * a_pw, spec.lambdas, w0)
    general = oversampling_kernel(H, taper, grid, spec.lambdas) @ (samples / spec.k_diag)
    raw = pw_kernels(a_pw, b_pw, grid, spec.lambdas)[1] @ samples
    ratio = raw / general
    factor = float(np.median(ratio.real))
    variation = float(np.max(np.abs(ratio - factor)) / abs(factor))
    if variation > tol or factor <= 0:
        raise NonConstantRatio(f"raw/general ratio varies by {variation:.3g} over the grid")
    exact = reproducing_kernel(H, 2 * a_pw, grid, w0)
    sup = float(np.max(np.abs(raw / factor - exact)))
    return Calibration(factor, variation, sup, N, grid)


def kernel_slice_csv(z, values) -> str:
    """CSV with columns ``re_z, im_z, re_val, im_val``."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["re_z", "im_z", "re_val", "im_val"])
    for zi, vi in zip(np.ravel(z), np.ravel(values)):
        wr.writerow([repr(float(zi.real)), repr(float(zi.imag)), repr(float(vi.real)), repr(float(vi.imag))])
    return buf.getvalue()
