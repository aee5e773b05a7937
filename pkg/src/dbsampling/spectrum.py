"""Eigenvalues of the self-adjoint boundary-angle extensions.

``lam`` is an eigenvalue for boundary angle ``gamma`` exactly when the
Prufer angle satisfies ``theta(lam, b) = gamma + n pi``.  Because
``theta(., b)`` is strictly increasing, the integer ``n`` is a global index;
``n = 0`` labels the smallest nonnegative eigenvalue.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ExceptionalExtension, MonotonicityFailure
from .hamiltonian import ConstantDiagonal, Hamiltonian, detect_singular_intervals, exponential_type
from .solver import Integral, evaluate, norm_squared, prufer

EXCEPTIONAL_TOL = 1e-8
_BRACKET_RTOL = 1e-9
_BRACKET_XTOL = 1e-6


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Eigenvalues ``lambdas[i] = lambda_{n[i]}(gamma)`` of the system on ``[0, b]``."""

    hamiltonian: Hamiltonian | None
    b: float
    gamma: float
    n: np.ndarray
    lambdas: np.ndarray
    k_diag: np.ndarray

    def __len__(self):
        return len(self.n)

    def window(self, N: int) -> "Spectrum":
        """Entries with ``|n| <= N``."""
        keep = np.abs(self.n) <= N
        return replace(self, n=self.n[keep], lambdas=self.lambdas[keep], k_diag=self.k_diag[keep])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "lambda", "k_diag"])
        for n, lam, k in zip(self.n, self.lambdas, self.k_diag):
            w.writerow([int(n), repr(float(lam)), repr(float(k))])
        return buf.getvalue()


def detect_exceptional(H: Hamiltonian, b: float | None = None) -> float | None:
    """Boundary angle of the exceptional extension, if ``[0, b]`` ends in a singular interval."""
    b = H.b if b is None else float(b)
    tol = 1e-14 * max(1.0, b)
    for si in detect_singular_intervals(H):
        if si.lo < b - tol and si.hi >= b - tol:
            return float((si.phi + 0.5 * math.pi) % math.pi)
    return None


def _check_gamma(H, b, gamma):
    if not 0 <= gamma < math.pi:
        raise ValueError(f"gamma={gamma} outside [0, pi)")
    omega = detect_exceptional(H, b)
    if omega is not None:
        d = abs(gamma - omega) % math.pi
        if min(d, math.pi - d) < EXCEPTIONAL_TOL:
            raise ExceptionalExtension(f"gamma={gamma} is the exceptional angle")


def eigenvalues(H: Hamiltonian, b: float | None, gamma: float, n_lo: int, n_hi: int,
                with_norms: bool = True) -> Spectrum:
    """Eigenvalues ``lambda_n(gamma)`` of the system on ``[0, b]`` for ``n_lo <= n <= n_hi``.

    Brackets come from the unwrapped Prufer angle, which fixes the global
    index.  Inside a bracket a safeguarded Newton iteration uses
    ``d theta / d lam = K_b(lam, lam) / R^2``; the last steps take the angle
    from the fundamental solution itself.
    """
    b = H.b if b is None else float(b)
    if not 0 < b <= H.b * (1 + 1e-14):
        raise ValueError(f"b={b} outside (0, {H.b}]")
    _check_gamma(H, b, gamma)
    if n_hi < n_lo:
        raise ValueError("empty index range")

    def flow(lam):
        return prufer(H, lam, b, rtol=_BRACKET_RTOL)

    ns = np.arange(n_lo, n_hi + 1)
    target = gamma + ns * math.pi
    tau = exponential_type(H, b)
    if tau <= 0:
        raise MonotonicityFailure("Hamiltonian has zero exponential type; no Prufer bracketing")
    step = np.full(len(ns), 0.5 * math.pi / tau)
    lo, hi = target / tau - step, target / tau + step
    th_lo, th_hi = flow(lo)[0], flow(hi)[0]
    for _ in range(60):
        bad_lo, bad_hi = th_lo > target, th_hi < target
        if not (bad_lo.any() or bad_hi.any()):
            break
        step = np.where(bad_lo | bad_hi, 2 * step, step)
        lo = np.where(bad_lo, lo - step, lo)
        hi = np.where(bad_hi, hi + step, hi)
        th_lo = np.where(bad_lo, flow(lo)[0], th_lo)
        th_hi = np.where(bad_hi, flow(hi)[0], th_hi)
    else:
        raise MonotonicityFailure("could not bracket eigenvalues")
    _assert_monotone(lambda lam: flow(lam)[0], lo.min(), hi.max(), tau)

    lam = 0.5 * (lo + hi)
    for _ in range(60):
        th, logr, nrm = flow(lam)
        below = th < target
        lo = np.where(below, lam, lo)
        hi = np.where(below, hi, lam)
        new = lam - (th - target) * np.exp(2 * logr) / nrm
        outside = (new < lo) | (new > hi)
        new = np.where(outside, 0.5 * (lo + hi), new)
        done = np.abs(new - lam) <= _BRACKET_XTOL * np.maximum(1.0, np.abs(lam))
        lam = new
        if done.all():
            break
    else:
        raise MonotonicityFailure("Prufer iteration did not converge")
    # the Prufer flow is exact on piecewise constant diagonal systems
    exact = all(isinstance(seg, ConstantDiagonal) for seg in H.segments if seg.lo < b)
    if not exact:
        lam = _polish(H, b, gamma, lam)
    lam = np.where(target == 0, 0.0, lam)
    if np.any(np.diff(lam) <= 0):
        raise MonotonicityFailure("eigenvalues not strictly increasing in n")
    if not with_norms:
        k = np.full(len(lam), np.nan)
    elif exact:
        k = prufer(H, lam, b)[2]
    else:
        k = norm_squared(H, lam, b)
    return Spectrum(H, b, float(gamma), ns, lam, np.asarray(k, dtype=float))


def _polish(H, b, gamma, lam, batch=64):
    """Newton steps on the angle of ``u(lam, b)`` relative to ``xi_gamma``."""
    out = np.empty_like(lam)
    order = np.argsort(np.abs(lam), kind="stable")
    for first in range(0, len(lam), batch):
        sel = order[first:first + batch]
        out[sel] = _polish_batch(H, b, gamma, lam[sel])
    return out


def _polish_batch(H, b, gamma, lam):
    idx = np.arange(len(lam))
    width = 1e-6 * np.maximum(1.0, np.abs(lam))
    lo, hi = lam - width, lam + width
    for _ in range(3):
        us, (k,) = evaluate(H, lam, stops=[b], integrals=[Integral(0.0, b)],
                            pairs=[(idx, idx, False)])
        u = us[0].real
        dth = (np.arctan2(u[:, 1], u[:, 0]) - gamma + 0.5 * np.pi) % np.pi - 0.5 * np.pi
        delta = dth * np.sum(u * u, axis=1) / k.real
        lam = np.clip(lam - delta, lo, hi)
        if np.all(np.abs(delta) <= 1e-15 * np.maximum(1.0, np.abs(lam))):
            break
    return lam


def _assert_monotone(theta_b, lam_lo, lam_hi, tau):
    spacing = math.pi / (2 * tau)
    npts = int(min(max(8, math.ceil((lam_hi - lam_lo) / spacing) + 1), 20001))
    grid = np.linspace(lam_lo, lam_hi, npts)
    th = theta_b(grid)
    if np.any(np.diff(th) <= 0):
        i = int(np.argmin(np.diff(th)))
        raise MonotonicityFailure(
            f"theta(., b) decreases between {grid[i]:.6g} and {grid[i + 1]:.6g}; tighten tolerances")


def boundary_residual(H: Hamiltonian, spec: Spectrum) -> np.ndarray:
    """``|u1 sin g - u2 cos g| / |u|`` at each eigenvalue."""
    from .solver import solve

    u = solve(H, spec.lambdas, [spec.b])[0]
    g = spec.gamma
    r = np.abs(u[:, 0] * math.sin(g) - u[:, 1] * math.cos(g))
    return r / np.linalg.norm(u, axis=1)


@dataclass(frozen=True)
class CountingReport:
    model: str
    slope: float
    intercept: float
    residuals: np.ndarray
    ratio: np.ndarray


def counting_check(spec: Spectrum, model: str = "linear") -> CountingReport:
    """Compare ``lambda_n`` with an asymptotic counting model.

    ``model="linear"`` fits ``lambda_n = slope * n + intercept``.
    ``model="airy"`` divides by the leading Airy law
    ``(3 pi / 2) (n + offset) / b^{3/2}`` with the offset for ``spec.gamma``
    (see :func:`dbsampling.airy.eigenvalue_model`).
    """
    pos = spec.n >= 0
    neg = spec.n < 0
    if pos.sum() < 20 or neg.sum() < 20:
        raise ValueError("counting_check needs at least 20 eigenvalues of each sign")
    if model == "linear":
        slope, intercept = np.polyfit(spec.n, spec.lambdas, 1)
        resid = spec.lambdas - (slope * spec.n + intercept)
        return CountingReport(model, float(slope), float(intercept), resid,
                              spec.lambdas / (slope * spec.n + intercept))
    if model == "airy":
        from .airy import eigenvalue_model

        mdl = eigenvalue_model(spec.n, spec.b, spec.gamma)
        ok = mdl != 0
        ratio = np.full(len(spec.n), np.nan)
        ratio[ok] = spec.lambdas[ok] / mdl[ok]
        return CountingReport(model, 1.0, 0.0, ratio - 1.0, ratio)
    raise ValueError(f"unknown model {model!r}")
