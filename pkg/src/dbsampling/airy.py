"""The Airy-type system ``H = diag(1, x)`` in closed form.

``wi`` is the solution of ``y'' = x y`` with ``wi(0) = 0`` and ``wi'(0) = 1``,
i.e. ``wi = pi (Ai(0) Bi - Bi(0) Ai)``.  Its Maclaurin series has only
positive coefficients,

    wi(x) = sum_k c(k) x^{3k+1} / (3k+1)!,   c(k) = prod_{l<k} (2 + 3l),

so it is summed directly for ``x > -x_switch``.  On the oscillatory side the
Hankel-type expansion

    wi(-t)  = C0 t^{-1/4} [-P sin(zeta + pi/12) + Q cos(zeta + pi/12)]
    wi'(-t) = C0 t^{1/4}  [ R cos(zeta + pi/12) + S sin(zeta + pi/12)]

with ``zeta = (2/3) t^{3/2}`` is summed to its smallest term.

For ``H = diag(1, x)`` the fundamental solution is
``u1 = wi'(-z^{2/3} x)``, ``u2 = -z^{1/3} wi(-z^{2/3} x)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import BranchMismatch, EnumerationGap
from .hamiltonian import Hamiltonian

C0 = 2.0 * math.sqrt(math.pi) / (3.0 ** (2.0 / 3.0) * math.gamma(2.0 / 3.0))
X_SWITCH = 7.0
BRANCH_TOL = 1e-8
_ASYM_TERMS = 60


@dataclass(frozen=True)
class WiEvaluation:
    x: float
    wi: float
    wi_prime: float
    branch: str


def _series(x):
    x = np.asarray(x, dtype=float)
    x3 = x ** 3
    tw, td = x.copy(), np.ones_like(x)
    w, d = tw.copy(), td.copy()
    for k in range(400):
        # c(k+1) / c(k) = 3k + 2 cancels one factor of each factorial ratio
        tw = tw * x3 / ((3 * k + 3) * (3 * k + 4))
        td = td * x3 / ((3 * k + 1) * (3 * k + 3))
        w = w + tw
        d = d + td
        if np.all(np.abs(tw) <= 1e-17 * np.abs(w)) and np.all(np.abs(td) <= 1e-17 * np.abs(d)):
            break
    return w, d


@lru_cache(maxsize=None)
def _hankel_coefficients(n):
    u = [1.0]
    for k in range(1, n):
        u.append(u[-1] * (6 * k - 5) * (6 * k - 3) * (6 * k - 1) / ((2 * k - 1) * 216 * k))
    v = [1.0] + [-(6 * k + 1) / (6 * k - 1) * u[k] for k in range(1, n)]
    return np.array(u), np.array(v)


def _asymptotic(t):
    """``(wi(-t), wi'(-t))`` for large positive ``t``, optimally truncated."""
    t = np.asarray(t, dtype=float)
    zeta = 2.0 / 3.0 * t ** 1.5
    u, v = _hankel_coefficients(_ASYM_TERMS)
    k = np.arange(_ASYM_TERMS)
    # terms c_k zeta^{-k} with signs (-1)^{floor(k/2)} fold into P, Q (resp. R, S)
    powers = zeta[..., None] ** (-k.astype(float))
    sign = np.where((k // 2) % 2 == 0, 1.0, -1.0)
    tu = sign * u * powers
    tv = sign * v * powers
    mag = np.abs(tu)
    # stop before the first term that stops decreasing
    grow = np.cumsum(np.concatenate([np.zeros(mag.shape[:-1] + (1,), bool),
                                     mag[..., 1:] > mag[..., :-1]], axis=-1), axis=-1) > 0
    tu = np.where(grow, 0.0, tu)
    tv = np.where(grow, 0.0, tv)
    even = k % 2 == 0
    P, Q = tu[..., even].sum(-1), tu[..., ~even].sum(-1)
    R, S = tv[..., even].sum(-1), tv[..., ~even].sum(-1)
    ph = zeta + math.pi / 12
    c, s = np.cos(ph), np.sin(ph)
    wi = C0 * t ** -0.25 * (-P * s + Q * c)
    dwi = C0 * t ** 0.25 * (R * c + S * s)
    return wi, dwi


def branch_mismatch(x_switch: float = X_SWITCH, half_width: float = 1.0, n: int = 41) -> float:
    """Largest relative-to-envelope gap between the branches on ``[x_switch - w, x_switch + w]``."""
    t = np.linspace(x_switch - half_width, x_switch + half_width, n)
    ws, ds = _series(-t)
    wa, da = _asymptotic(t)
    return float(max(np.max(np.abs(ws - wa) * t ** 0.25), np.max(np.abs(ds - da) * t ** -0.25)) / C0)


@lru_cache(maxsize=None)
def _checked(x_switch):
    gap = branch_mismatch(x_switch, half_width=0.0, n=1)
    if gap > BRANCH_TOL:
        raise BranchMismatch(f"series and asymptotic wi differ by {gap:.3g} at x_switch={x_switch}")
    return x_switch


def wi(x, x_switch: float = X_SWITCH):
    """Vectorized ``(wi(x), wi'(x))``."""
    _checked(float(x_switch))
    x = np.asarray(x, dtype=float)
    far = x < -x_switch
    w, d = np.empty_like(x), np.empty_like(x)
    if np.any(~far):
        w[~far], d[~far] = _series(x[~far])
    if np.any(far):
        w[far], d[far] = _asymptotic(-x[far])
    return w, d


def wi_eval(x: float, x_switch: float = X_SWITCH) -> WiEvaluation:
    w, d = wi(np.array([float(x)]), x_switch)
    branch = "asymptotic" if x < -x_switch else "series"
    return WiEvaluation(float(x), float(w[0]), float(d[0]), branch)


def w_beta(beta: float, x):
    """``w(beta, x) = wi'(-x) + beta sqrt(x) wi(-x)`` for ``x > 0``."""
    x = np.asarray(x, dtype=float)
    w, d = wi(-x)
    return d + beta * np.sqrt(x) * w


def _w_beta_and_slope(beta, x):
    w, d = wi(-x)
    rx = np.sqrt(x)
    f = d + beta * rx * w
    # d/dx wi'(-x) = -wi''(-x) = x wi(-x)
    fp = x * w + beta * (w / (2 * rx) - rx * d)
    return f, fp


# Zeros --------------------------------------------------------------------

def zero_model(kind: str, n, beta: float = 0.0):
    """Leading asymptotic location of the ``n``-th zero.

    ``y_n ~ (3 pi/2 (n - 1/12))^{2/3}`` and
    ``x_n(beta) ~ s^{2/3} [1 - arctan(beta) / s]`` with ``s = 3 pi/2 (n + 5/12)``.
    """
    n = np.asarray(n, dtype=float)
    if kind == "wi":
        return np.where(n == 0, 0.0, (1.5 * math.pi * np.maximum(n - 1 / 12, 0.0)) ** (2 / 3))
    if kind == "w":
        s = 1.5 * math.pi * (n + 5 / 12)
        return s ** (2 / 3) * (1 - math.atan(beta) / s)
    raise ValueError(f"unknown zero kind {kind!r}")


@dataclass(frozen=True)
class ZeroTable:
    kind: str
    beta: float
    n: np.ndarray
    values: np.ndarray
    residuals: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["n", "value", "residual"])
        for n, v, r in zip(self.n, self.values, self.residuals):
            wr.writerow([int(n), repr(float(v)), repr(float(r))])
        return buf.getvalue()


def _function(kind, beta):
    if kind == "wi":
        def f(x):
            w, d = wi(-x)
            return w, -d
        return f
    return lambda x: _w_beta_and_slope(beta, x)


def zeros(kind: str, beta: float = 0.0, n_max: int = 50) -> ZeroTable:
    """Zeros ``y_0 = 0 < y_1 < ...`` of ``wi(-x)`` or ``x_0(beta) < x_1(beta) < ...`` of ``w(beta, x)``.

    Newton from the asymptotic guesses, kept inside the brackets formed by
    sign changes on a grid finer than half the local zero spacing; the grid
    also certifies that no zero was skipped.
    """
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    if kind not in ("wi", "w"):
        raise ValueError(f"unknown zero kind {kind!r}")
    beta = float(beta) if kind == "w" else 0.0
    f = _function(kind, beta)
    ns = np.arange(n_max + 1)
    first = 1 if kind == "wi" else 0
    count = n_max + 1 - first

    # local spacing is pi / sqrt(x) in x; sample at a tenth of it
    x_top = float(zero_model(kind, n_max, beta)) + 3 * math.pi / math.sqrt(max(zero_model(kind, n_max, beta), 1.0))
    grid = [1e-9]
    while grid[-1] < x_top:
        grid.append(grid[-1] + 0.1 * math.pi / math.sqrt(max(grid[-1], 1.0)))
    grid = np.array(grid)
    fg = f(grid)[0]
    flips = np.nonzero(np.sign(fg[:-1]) * np.sign(fg[1:]) < 0)[0]
    if len(flips) < count:
        raise EnumerationGap(f"found {len(flips)} sign changes, expected at least {count}")
    lo, hi = grid[flips[:count]], grid[flips[:count] + 1]

    guess = zero_model(kind, ns[first:], beta)
    x = np.where((guess > lo) & (guess < hi), guess, 0.5 * (lo + hi))
    flo = f(lo)[0]
    for _ in range(100):
        val, slope = f(x)
        same = np.sign(val) == np.sign(flo)
        lo = np.where(same, x, lo)
        hi = np.where(same, hi, x)
        flo = np.where(same, val, flo)
        with np.errstate(divide="ignore", invalid="ignore"):
            new = x - val / slope
        bad = ~np.isfinite(new) | (new <= lo) | (new >= hi)
        new = np.where(bad, 0.5 * (lo + hi), new)
        step = np.abs(new - x)
        x = new
        if np.all(step <= 4e-16 * x):
            break
    values = np.concatenate([[0.0] * first, x])
    if np.any(np.diff(values) <= 0):
        raise EnumerationGap("zeros are not strictly increasing")
    residuals = np.abs(f(np.maximum(values, 1e-300))[0])
    if first:
        residuals[0] = 0.0
    return ZeroTable(kind, beta, ns, values, residuals)


# Spectrum and norms -------------------------------------------------------

def airy_norm(lam, b: float):
    """``||u(lam, .)||^2`` on ``[0, b]`` for ``H = diag(1, x)``; even in ``lam``."""
    lam = np.abs(np.asarray(lam, dtype=float))
    out = np.full(lam.shape, float(b))
    nz = lam != 0
    if np.any(nz):
        l23 = lam[nz] ** (2 / 3)
        X = l23 * b
        w, d = wi(-X)
        out[nz] = (2 * X * X * w * w + 2 * X * d * d - w * d) / (3 * l23)
    return out if out.ndim else float(out)


def airy_spectrum(b: float, gamma: float, n_max: int = 50):
    """Eigenvalues ``lambda_n(gamma)``, ``|n| <= n_max``, of ``H = diag(1, x)`` on ``[0, b]``.

    ``gamma = 0``: ``lambda_{+-n} = +-(y_n / b)^{3/2}``.  Otherwise with
    ``beta = cot(gamma) / sqrt(b)``, ``lambda_n = (x_n(beta) / b)^{3/2}`` and
    ``lambda_{-n} = -(x_{n-1}(-beta) / b)^{3/2}``.
    """
    from .spectrum import Spectrum

    if not 0 <= gamma < math.pi:
        raise ValueError(f"gamma={gamma} outside [0, pi)")
    if b <= 0:
        raise ValueError("b must be positive")
    if gamma == 0:
        y = zeros("wi", n_max=n_max).values
        pos = (y / b) ** 1.5
        lam = np.concatenate([-pos[:0:-1], pos])
    else:
        beta = 1 / math.tan(gamma) / math.sqrt(b)
        pos = (zeros("w", beta, n_max).values / b) ** 1.5
        neg = (zeros("w", -beta, n_max - 1).values / b) ** 1.5 if n_max > 1 else \
            (zeros("w", -beta, 1).values[:1] / b) ** 1.5
        lam = np.concatenate([-neg[:n_max][::-1], pos])
    n = np.arange(-n_max, n_max + 1)
    return Spectrum(Hamiltonian.airy(b), float(b), float(gamma), n, lam, airy_norm(lam, b))


def eigenvalue_model(n, b: float, gamma: float):
    """Leading asymptotic ``lambda_n(gamma)`` for ``H = diag(1, x)`` on ``[0, b]``."""
    n = np.asarray(n, dtype=float)
    scale = b ** -1.5
    if gamma == 0:
        return np.sign(n) * 1.5 * math.pi * np.maximum(np.abs(n) - 1 / 12, 0.0) * scale
    beta = 1 / math.tan(gamma) / math.sqrt(b)
    pos = 1.5 * math.pi * (n + 5 / 12) - 1.5 * math.atan(beta)
    neg = -(1.5 * math.pi * (-n - 1 + 5 / 12) + 1.5 * math.atan(beta))
    return np.where(n >= 0, pos, neg) * scale


def norm_model(n, b: float):
    """Leading asymptotic ``||u(lambda_n, .)||^2 = (2/3) b C0^2 (3 pi |n| / 2)^{1/3}``."""
    return 2 / 3 * b * C0 ** 2 * (1.5 * math.pi * np.abs(np.asarray(n, dtype=float))) ** (1 / 3)


# Fundamental solution -----------------------------------------------------

def _entire(z, x):
    """Series in ``z^2 x^3`` for ``(u1, u2)``; exact for complex ``z``, accurate while ``|z|^{2/3} x`` is moderate."""
    z = np.asarray(z, dtype=complex)
    x = np.asarray(x, dtype=float)
    s = -(z * z) * x ** 3
    t1 = np.ones(np.broadcast(z, x).shape, dtype=complex)
    t2 = z * x * np.ones_like(t1)
    u1, u2 = t1.copy(), t2.copy()
    for k in range(400):
        t1 = t1 * s / ((3 * k + 1) * (3 * k + 3))
        t2 = t2 * s / ((3 * k + 3) * (3 * k + 4))
        u1 = u1 + t1
        u2 = u2 + t2
        if np.all(np.abs(t1) <= 1e-17 * np.abs(u1)) and np.all(np.abs(t2) <= 1e-17 * np.abs(u2)):
            break
    return u1, u2


def fundamental(z, x):
    """Closed-form ``(u1, u2)`` at spectral parameter ``z`` and position ``x``.

    Real ``z`` goes through :func:`wi` (both signs by parity: ``u1`` even,
    ``u2`` odd in ``z``); complex ``z`` uses the entire series.
    """
    z = np.asarray(z)
    x = np.asarray(x, dtype=float)
    if np.iscomplexobj(z) and np.any(np.imag(z) != 0):
        return _entire(z, x)
    lam = np.asarray(np.real(z), dtype=float)
    a = np.abs(lam)
    s = np.cbrt(a)
    w, d = wi(-(s * s) * x)
    return d, -np.sign(lam) * s * w
