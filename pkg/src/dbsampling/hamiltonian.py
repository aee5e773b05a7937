"""Coefficient matrices of 2x2 canonical systems on ``[0, b]``.

A :class:`Hamiltonian` is an ordered list of segments.  Every segment knows
how to evaluate the entries ``(h1, h2, h3)`` of

    H(x) = [[h1, h3],
            [h3, h2]]

on its interval, vectorized over ``x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate

from .errors import EmptyDomain, GapInPartition, NonPositiveSemidefinite

PSD_TOL = 1e-12
SINGULAR_DET_TOL = 1e-10
SINGULAR_ANGLE_TOL = 1e-8
TRACE_TOL = 1e-12
_CHECK_POINTS = 257


class Segment:
    """Base class.  Subclasses set ``lo``, ``hi`` and implement ``entries``."""

    lo: float
    hi: float
    constant = False
    diagonal = True

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def entries(self, x):
        raise NotImplementedError

    def kinks(self) -> np.ndarray:
        """Interior points where the entries are not smooth."""
        return np.empty(0)

    def norm_max(self) -> float:
        """Upper bound of the spectral norm of H on the segment."""
        xs = np.linspace(self.lo, self.hi, 65)
        h1, h2, h3 = self.entries(xs)
        return float(np.max(0.5 * (h1 + h2) + np.sqrt(0.25 * (h1 - h2) ** 2 + h3**2)))

    def trace_integral(self, x):
        """``int_lo^x tr H``."""
        x = np.asarray(x, dtype=float)

        def tr(s):
            h1, h2, _ = self.entries(np.asarray(s))
            return h1 + h2

        flat = [integrate.quad(tr, self.lo, xi, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
                for xi in np.ravel(x)]
        return np.reshape(flat, x.shape)

    def sqrt_det_integral(self, x: float) -> float:
        """``int_lo^x sqrt(det H)``."""

        def f(s):
            h1, h2, h3 = self.entries(np.asarray(s))
            return math.sqrt(max(float(h1 * h2 - h3 * h3), 0.0))

        pts = [k for k in self.kinks() if self.lo < k < x]
        return integrate.quad(f, self.lo, x, epsabs=1e-14, epsrel=1e-13, limit=400,
                              points=pts or None)[0]

    def to_record(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantDiagonal(Segment):
    """``H = diag(1/2 + g0, 1/2 - g0)`` with ``|g0| < 1/2``."""

    lo: float
    hi: float
    g0: float = 0.0
    constant = True

    def __post_init__(self):
        if not -0.5 < self.g0 < 0.5:
            raise NonPositiveSemidefinite(f"g0={self.g0} outside (-1/2, 1/2)")

    @property
    def alpha(self) -> float:
        return math.sqrt((1 + 2 * self.g0) / (1 - 2 * self.g0))

    @property
    def kappa(self) -> float:
        return 0.5 * math.sqrt(1 - 4 * self.g0**2)

    def entries(self, x):
        x = np.asarray(x, dtype=float)
        one = np.ones_like(x)
        return (0.5 + self.g0) * one, (0.5 - self.g0) * one, 0.0 * one

    def norm_max(self):
        return 0.5 + abs(self.g0)

    def trace_integral(self, x):
        return np.asarray(x, dtype=float) - self.lo

    def sqrt_det_integral(self, x):
        return self.kappa * (x - self.lo)

    def to_record(self):
        return {"type": "constant_diagonal", "g0": self.g0, "from": self.lo, "to": self.hi}


@dataclass(frozen=True, eq=False)
class PolynomialDiagonal(Segment):
    """``H = diag(p1(x), p2(x))`` for polynomials given by ascending coefficients.

    ``PolynomialDiagonal(0, b, (1,), (0, 1))`` is ``diag(1, x)``.
    """

    lo: float
    hi: float
    p1: tuple = (1.0,)
    p2: tuple = (0.0,)

    def __post_init__(self):
        object.__setattr__(self, "p1", tuple(float(c) for c in self.p1))
        object.__setattr__(self, "p2", tuple(float(c) for c in self.p2))

    @property
    def constant(self):
        return len(np.trim_zeros(self.p1, "b")) <= 1 and len(np.trim_zeros(self.p2, "b")) <= 1

    def entries(self, x):
        x = np.asarray(x, dtype=float)
        return Polynomial(self.p1)(x), Polynomial(self.p2)(x), np.zeros_like(x)

    def trace_integral(self, x):
        anti = (Polynomial(self.p1) + Polynomial(self.p2)).integ(lbnd=self.lo)
        return anti(np.asarray(x, dtype=float))

    def to_record(self):
        return {"type": "polynomial_diagonal", "p1": list(self.p1), "p2": list(self.p2),
                "from": self.lo, "to": self.hi}


@dataclass(frozen=True, eq=False)
class DiagonalFunction(Segment):
    """``H = diag(1/2 + g(x), 1/2 - g(x))``, trace-normalized.

    ``g`` is either a callable or a pair ``(xs, gs)`` of samples that is
    interpolated piecewise linearly.
    """

    lo: float
    hi: float
    g: Callable | tuple = field(default=lambda x: 0.0 * x)

    def _g(self, x):
        if callable(self.g):
            return np.asarray(self.g(x), dtype=float) * np.ones_like(x)
        xs, gs = self.g
        return np.interp(x, xs, gs)

    def entries(self, x):
        x = np.asarray(x, dtype=float)
        gx = self._g(x)
        return 0.5 + gx, 0.5 - gx, np.zeros_like(x)

    def kinks(self):
        if callable(self.g):
            return np.empty(0)
        xs = np.asarray(self.g[0], dtype=float)
        return xs[(xs > self.lo) & (xs < self.hi)]

    def norm_max(self):
        if callable(self.g):
            return super().norm_max()
        return 0.5 + float(np.max(np.abs(self.g[1])))

    def trace_integral(self, x):
        return np.asarray(x, dtype=float) - self.lo

    def to_record(self):
        if callable(self.g):
            raise TypeError("callable g cannot be serialized")
        return {"type": "diagonal_function", "x": list(map(float, self.g[0])),
                "g": list(map(float, self.g[1])), "from": self.lo, "to": self.hi}


@dataclass(frozen=True, eq=False)
class GridGeneral(Segment):
    """General symmetric H given on a grid, interpolated piecewise linearly."""

    lo: float
    hi: float
    xs: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    h3: np.ndarray

    def __post_init__(self):
        for name in ("xs", "h1", "h2", "h3"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    @property
    def diagonal(self):
        return bool(np.all(np.abs(self.h3) <= PSD_TOL))

    def entries(self, x):
        x = np.asarray(x, dtype=float)
        return (np.interp(x, self.xs, self.h1), np.interp(x, self.xs, self.h2),
                np.interp(x, self.xs, self.h3))

    def kinks(self):
        return self.xs[(self.xs > self.lo) & (self.xs < self.hi)]

    def norm_max(self):
        h1, h2, h3 = self.h1, self.h2, self.h3
        return float(np.max(0.5 * (h1 + h2) + np.sqrt(0.25 * (h1 - h2) ** 2 + h3**2)))

    def trace_integral(self, x):
        # exact for the piecewise-linear interpolant
        x = np.asarray(x, dtype=float)
        tr = self.h1 + self.h2
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (tr[1:] + tr[:-1]) * np.diff(self.xs))])
        i = np.clip(np.searchsorted(self.xs, x, side="right") - 1, 0, len(self.xs) - 2)
        t = x - self.xs[i]
        slope = (tr[i + 1] - tr[i]) / (self.xs[i + 1] - self.xs[i])
        base = cum[i] + t * (tr[i] + 0.5 * slope * t)
        i0 = np.clip(np.searchsorted(self.xs, self.lo, side="right") - 1, 0, len(self.xs) - 2)
        t0 = self.lo - self.xs[i0]
        s0 = (tr[i0 + 1] - tr[i0]) / (self.xs[i0 + 1] - self.xs[i0])
        return base - (cum[i0] + t0 * (tr[i0] + 0.5 * s0 * t0))

    def to_record(self):
        return {"type": "grid_general", "x": self.xs.tolist(), "h1": self.h1.tolist(),
                "h2": self.h2.tolist(), "h3": self.h3.tolist(), "from": self.lo, "to": self.hi}


@dataclass(frozen=True, eq=False)
class Reparametrized(Segment):
    """Trace-normalized image of ``base`` in the variable ``y = y0 + int tr H``."""

    lo: float
    hi: float
    base: Segment

    @property
    def constant(self):
        return self.base.constant

    @property
    def diagonal(self):
        return self.base.diagonal

    def x_of_y(self, y):
        y = np.asarray(y, dtype=float) - self.lo
        a = np.full(y.shape, self.base.lo)
        b = np.full(y.shape, self.base.hi)
        # monotone bisection on the cumulative trace
        for _ in range(64):
            m = 0.5 * (a + b)
            left = self.base.trace_integral(m) < y
            a = np.where(left, m, a)
            b = np.where(left, b, m)
        return 0.5 * (a + b)

    def entries(self, y):
        x = self.x_of_y(y)
        h1, h2, h3 = self.base.entries(x)
        tr = h1 + h2
        return h1 / tr, h2 / tr, h3 / tr

    def norm_max(self):
        return 1.0

    def trace_integral(self, y):
        return np.asarray(y, dtype=float) - self.lo

    def sqrt_det_integral(self, y):
        x = float(self.x_of_y(np.asarray(y)))
        return self.base.sqrt_det_integral(x)

    def kinks(self):
        k = self.base.kinks()
        return self.lo + self.base.trace_integral(k) if len(k) else k


@dataclass(frozen=True)
class SingularInterval:
    lo: float
    hi: float
    phi: float


@dataclass(frozen=True, eq=False)
class Hamiltonian:
    segments: tuple

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))

    @property
    def b(self) -> float:
        return self.segments[-1].hi if self.segments else 0.0

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array([s.lo for s in self.segments] + [self.b])

    @property
    def is_diagonal(self) -> bool:
        return all(s.diagonal for s in self.segments)

    def segment_index(self, x):
        """Index of the segment containing ``x`` (right-continuous)."""
        inner = self.breakpoints[1:-1]
        return np.searchsorted(inner, np.asarray(x, dtype=float), side="right")

    def entries(self, x):
        x = np.asarray(x, dtype=float)
        idx = self.segment_index(x)
        h = np.zeros((3,) + x.shape)
        for k, seg in enumerate(self.segments):
            mask = idx == k
            if np.any(mask):
                h[:, mask] = np.array(seg.entries(x[mask]))
        return h[0], h[1], h[2]

    def matrix(self, x) -> np.ndarray:
        h1, h2, h3 = self.entries(x)
        return np.stack([np.stack([h1, h3], -1), np.stack([h3, h2], -1)], -2)

    def to_records(self) -> list:
        return [s.to_record() for s in self.segments]

    @classmethod
    def from_records(cls, records: Sequence[dict]) -> "Hamiltonian":
        return cls(tuple(segment_from_record(r) for r in records))

    @classmethod
    def constant(cls, g0: float, b: float) -> "Hamiltonian":
        return cls((ConstantDiagonal(0.0, b, g0),))

    @classmethod
    def airy(cls, b: float) -> "Hamiltonian":
        """``H = diag(1, x)`` on ``[0, b]``."""
        return cls((PolynomialDiagonal(0.0, b, (1.0,), (0.0, 1.0)),))


def segment_from_record(rec: dict) -> Segment:
    kind = rec.get("type")
    lo, hi = float(rec["from"]), float(rec["to"])
    if kind == "constant_diagonal":
        return ConstantDiagonal(lo, hi, float(rec.get("g0", 0.0)))
    if kind == "polynomial_diagonal":
        return PolynomialDiagonal(lo, hi, tuple(rec["p1"]), tuple(rec["p2"]))
    if kind == "diagonal_function":
        return DiagonalFunction(lo, hi, (np.asarray(rec["x"], float), np.asarray(rec["g"], float)))
    if kind == "grid_general":
        return GridGeneral(lo, hi, rec["x"], rec["h1"], rec["h2"], rec["h3"])
    raise ValueError(f"unknown segment type {kind!r}")


@dataclass(frozen=True)
class Validation:
    hamiltonian: Hamiltonian
    diagonal: bool
    trace_normalized: bool
    singular_intervals: list


def _check_grid(seg: Segment) -> np.ndarray:
    return np.unique(np.concatenate([np.linspace(seg.lo, seg.hi, _CHECK_POINTS), seg.kinks()]))


def validate(H: Hamiltonian) -> Validation:
    if not H.segments or H.b <= 0:
        raise EmptyDomain("Hamiltonian has an empty domain")
    scale = max(1.0, H.b)
    if abs(H.segments[0].lo) > 1e-14 * scale:
        raise GapInPartition(f"first segment starts at {H.segments[0].lo}, not 0")
    for s, t in zip(H.segments, H.segments[1:]):
        if abs(s.hi - t.lo) > 1e-14 * scale:
            raise GapInPartition(f"gap or overlap between {s.hi} and {t.lo}")
    trace_normalized = True
    for seg in H.segments:
        if not seg.hi > seg.lo:
            raise GapInPartition(f"segment [{seg.lo}, {seg.hi}] has non-positive length")
        xs = _check_grid(seg)
        h1, h2, h3 = seg.entries(xs)
        tr = h1 + h2
        lam_min = 0.5 * tr - np.sqrt(0.25 * (h1 - h2) ** 2 + h3**2)
        if np.min(lam_min) < -PSD_TOL:
            i = int(np.argmin(lam_min))
            raise NonPositiveSemidefinite(f"H({xs[i]:.6g}) has eigenvalue {lam_min[i]:.3g}")
        if np.all(np.abs(np.stack([h1, h2, h3])) <= PSD_TOL):
            raise NonPositiveSemidefinite(f"H vanishes on [{seg.lo}, {seg.hi}]")
        if np.max(np.abs(tr - 1.0)) > TRACE_TOL:
            trace_normalized = False
    return Validation(H, H.is_diagonal, trace_normalized, detect_singular_intervals(H))


def _rank_one_angle(h1, h2, h3):
    """Angle in [0, pi) of the range of a rank-one PSD matrix."""
    phi = 0.5 * np.arctan2(2 * h3, h1 - h2)
    return np.mod(phi, np.pi)


def detect_singular_intervals(H: Hamiltonian) -> list:
    found = []
    for seg in H.segments:
        xs = _check_grid(seg)
        h1, h2, h3 = seg.entries(xs)
        tr = h1 + h2
        det = h1 * h2 - h3**2
        if np.any(det > SINGULAR_DET_TOL * np.maximum(tr, 1.0) ** 2):
            continue
        phi = _rank_one_angle(h1, h2, h3)
        spread = np.ptp(np.unwrap(2 * phi) / 2)
        if spread > SINGULAR_ANGLE_TOL:
            continue
        angle = float(phi[0])
        if found and abs(found[-1].hi - seg.lo) < 1e-14 and _same_angle(found[-1].phi, angle):
            found[-1] = SingularInterval(found[-1].lo, seg.hi, found[-1].phi)
        else:
            found.append(SingularInterval(seg.lo, seg.hi, angle))
    return found


def _same_angle(a: float, b: float) -> bool:
    d = abs(a - b) % math.pi
    return min(d, math.pi - d) < SINGULAR_ANGLE_TOL


@dataclass(frozen=True)
class TraceNormalization:
    hamiltonian: Hamiltonian
    y_of_x: Callable
    x_of_y: Callable


def trace_normalize(H: Hamiltonian) -> TraceNormalization:
    """Change variables to ``y = int_0^x tr H`` so that the trace becomes 1."""
    if validate(H).trace_normalized:
        ident = lambda t: np.asarray(t, dtype=float)  # noqa: E731
        return TraceNormalization(H, ident, ident)
    offsets = [0.0]
    for seg in H.segments:
        offsets.append(offsets[-1] + float(seg.trace_integral(seg.hi)))
    new = tuple(Reparametrized(offsets[k], offsets[k + 1], seg)
                for k, seg in enumerate(H.segments))
    H1 = Hamiltonian(new)
    xb = H.breakpoints
    yb = np.array(offsets)

    def y_of_x(x):
        x = np.asarray(x, dtype=float)
        idx = H.segment_index(x)
        out = np.empty(x.shape)
        for k, seg in enumerate(H.segments):
            m = idx == k
            if np.any(m):
                out[m] = yb[k] + seg.trace_integral(x[m])
        return out

    def x_of_y(y):
        y = np.asarray(y, dtype=float)
        idx = H1.segment_index(y)
        out = np.empty(y.shape)
        for k, seg in enumerate(new):
            m = idx == k
            if np.any(m):
                out[m] = seg.x_of_y(y[m])
        return np.clip(out, xb[0], xb[-1])

    return TraceNormalization(H1, y_of_x, x_of_y)


def exponential_type(H: Hamiltonian, l: float | None = None) -> float:
    """``int_0^l sqrt(det H(x)) dx``."""
    l = H.b if l is None else float(l)
    total = 0.0
    for seg in H.segments:
        if seg.lo >= l:
            break
        total += seg.sqrt_det_integral(min(seg.hi, l))
    return total
