"""Sampling and oversampling reconstruction, sample noise and summability reports.

Given samples ``F(lambda_n)`` on the spectrum of a self-adjoint extension,

    F(z) = sum_n K_b(z, lambda_n) F(lambda_n) / K_b(lambda_n, lambda_n)

holds for every ``F`` in the space, and for ``F`` in the smaller space ``B_a``

    F(z) = sum_n J(z, lambda_n) F(lambda_n) / K_b(lambda_n, lambda_n)

with the tapered kernel ``J``.  The second sum tolerates bounded (weighted
``l_inf``) perturbations of the samples; the first does not.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import SubspaceMismatch, SupportViolation, UnsupportedP
from .hamiltonian import Hamiltonian
from .kernels import TaperWeight, oversampling_kernel, reproducing_kernel
from .solver import Integral, evaluate
from .spectrum import Spectrum

SUPPORT_TOL = 1e-12


def default_grid(re=(-5.0, 5.0), im=(-1.0, 1.0), n_re=51, n_im=11) -> np.ndarray:
    """Rectangular grid in the complex plane, flattened row by row."""
    x, y = np.meshgrid(np.linspace(*re, n_re), np.linspace(*im, n_im))
    return (x + 1j * y).ravel()


# Sources --------------------------------------------------------------------

@dataclass(frozen=True)
class KernelSection:
    """``F = K_l(., w0)``; an element of ``B_l``."""

    l: float
    w0: complex

    def evaluate(self, H, z):
        return reproducing_kernel(H, self.l, np.asarray(z, dtype=complex), self.w0)

    @property
    def support(self) -> float:
        return float(self.l)


@dataclass(frozen=True)
class StepCoefficient:
    """``F(z) = int u(z, x)^t H(x) f(x) dx`` for a step function ``f``.

    ``knots`` has one more entry than ``values`` (shape (k, 2)); ``a`` is the
    claimed support bound, i.e. the claim ``F in B_a``.
    """

    knots: tuple
    values: tuple
    a: float | None = None

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        vals = np.asarray(self.values, dtype=float).reshape(-1, 2)
        if len(knots) != len(vals) + 1 or np.any(np.diff(knots) <= 0):
            raise ValueError("knots must increase and bracket every value")
        if self.a is not None:
            outside = (knots[1:] > self.a + SUPPORT_TOL) & np.any(vals != 0, axis=1)
            if np.any(outside):
                raise SupportViolation(f"coefficient has mass beyond a={self.a}")

    @property
    def support(self) -> float:
        knots = np.asarray(self.knots, dtype=float)
        vals = np.asarray(self.values, dtype=float).reshape(-1, 2)
        live = np.nonzero(np.any(vals != 0, axis=1))[0]
        return float(knots[live[-1] + 1]) if len(live) else 0.0

    def evaluate(self, H, z):
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        if self.support > H.b * (1 + 1e-14):
            raise SupportViolation("coefficient extends beyond the domain")
        knots = np.asarray(self.knots, dtype=float)
        vals = np.asarray(self.values, dtype=float).reshape(-1, 2)
        pieces = []
        for lo, hi, v in zip(knots[:-1], knots[1:], vals):
            if np.any(v != 0):
                # u(z)^t H [v 0] u(0) with u(0, x) = (1, 0)
                col = np.array([[v[0], 0.0], [v[1], 0.0]])
                pieces.append(Integral(lo, hi, matrix=lambda x, c=col: H.matrix(x) @ c))
        if not pieces:
            return np.zeros(len(z), dtype=complex)
        m = len(z)
        pairs = [(np.arange(m), np.full(m, m), False)] * len(pieces)
        _, vals_ = evaluate(H, np.concatenate([z, [0.0]]), integrals=pieces, pairs=pairs)
        return sum(vals_)


# Sample sets ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SampleSet:
    spectrum: Spectrum
    values: np.ndarray
    reference: Callable | None = None      # z -> exact F(z), when known
    support: float | None = None           # a with F in B_a, when known
    provenance: dict = field(default_factory=dict)

    @property
    def weights(self) -> np.ndarray:
        return self.spectrum.k_diag

    def __post_init__(self):
        if len(self.values) != len(self.spectrum.lambdas):
            raise ValueError("one sample per eigenvalue required")
        if np.any(~(self.spectrum.k_diag > 0)):
            raise ValueError("norming constants must be positive")

    def _combine(self, other, alpha, beta):
        if other.spectrum is not self.spectrum:
            raise ValueError("sample sets live on different spectra")
        ref = None
        if self.reference is not None and other.reference is not None:
            ref = lambda z: alpha * self.reference(z) + beta * other.reference(z)  # noqa: E731
        sup = None if self.support is None or other.support is None else max(self.support, other.support)
        return SampleSet(self.spectrum, alpha * self.values + beta * other.values, ref, sup,
                         {"kind": "combination"})

    def __add__(self, other):
        return self._combine(other, 1.0, 1.0)

    def __rmul__(self, alpha):
        ref = None if self.reference is None else (lambda z: alpha * self.reference(z))
        return SampleSet(self.spectrum, alpha * self.values, ref, self.support, dict(self.provenance))


def make_samples(H: Hamiltonian, spectrum: Spectrum, source) -> SampleSet:
    """Sample ``F`` from ``source`` (:class:`KernelSection` or :class:`StepCoefficient`) at the spectrum."""
    if isinstance(source, KernelSection):
        if source.l > spectrum.b * (1 + 1e-14):
            raise SupportViolation(f"kernel section at l={source.l} beyond b={spectrum.b}")
        prov = {"kind": "kernel_section", "l": source.l, "w0": [source.w0.real, source.w0.imag]}
    elif isinstance(source, StepCoefficient):
        if source.support > spectrum.b * (1 + 1e-14):
            raise SupportViolation("coefficient has mass beyond b")
        prov = {"kind": "coefficient"}
    else:
        raise TypeError(f"unsupported sample source {type(source).__name__}")
    values = np.atleast_1d(source.evaluate(H, spectrum.lambdas))
    return SampleSet(spectrum, values, lambda z: source.evaluate(H, z), source.support, prov)


# Noise ----------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseSpec:
    """Weighted ``l_p`` noise: ``||eps_n / K(lambda_n, lambda_n)^{1/2}||_p = epsilon``.

    ``mode="adversarial"`` (``p = inf``) aligns each perturbation with the
    phase of ``conj(kernel(z0, lambda_n))`` for the kernel named by ``target``,
    which maximizes the error at ``z0``.
    """

    p: float
    epsilon: float
    mode: str = "random"
    seed: int = 0
    z0: complex = 0.5
    target: str = "oversampling"

    def __post_init__(self):
        if not self.p > 2:
            raise UnsupportedP(f"p={self.p}: only p in (2, inf] is supported")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.mode not in ("random", "adversarial"):
            raise ValueError(f"unknown noise mode {self.mode!r}")
        if self.mode == "adversarial" and not math.isinf(self.p):
            raise UnsupportedP("adversarial noise is defined for p = inf only")
        if self.target not in ("oversampling", "sampling"):
            raise ValueError(f"unknown noise target {self.target!r}")


def perturb(samples: SampleSet, noise: NoiseSpec, taper: TaperWeight | None = None) -> SampleSet:
    """Add weighted ``l_p`` noise of size ``noise.epsilon`` to the samples."""
    spec = samples.spectrum
    sq = np.sqrt(spec.k_diag)
    n = len(sq)
    if noise.epsilon == 0:
        eta = np.zeros(n, dtype=complex)
    elif noise.mode == "random":
        rng = np.random.default_rng(noise.seed)
        eta = rng.uniform(0, 1, n) * np.exp(2j * np.pi * rng.uniform(0, 1, n))
        norm = np.max(np.abs(eta)) if math.isinf(noise.p) else np.sum(np.abs(eta) ** noise.p) ** (1 / noise.p)
        eta = noise.epsilon * eta / norm
    else:
        H = spec.hamiltonian
        if noise.target == "oversampling":
            if taper is None:
                raise ValueError("adversarial oversampling noise needs the taper")
            row = oversampling_kernel(H, taper, [noise.z0], spec.lambdas)[0]
        else:
            row = reproducing_kernel(H, spec.b, [noise.z0], spec.lambdas)[0]
        mag = np.abs(row)
        phase = np.where(mag > 0, np.conj(row) / np.where(mag > 0, mag, 1.0), 1.0)
        eta = noise.epsilon * phase
    prov = {"kind": "perturbed", "base": samples.provenance, "p": noise.p,
            "epsilon": noise.epsilon, "mode": noise.mode, "seed": noise.seed}
    return replace(samples, values=samples.values + eta * sq, provenance=prov)


# Reports --------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ReconstructionReport:
    grid: np.ndarray
    N: int
    values: np.ndarray
    reference: np.ndarray | None
    sup_error: float
    tail_sums: np.ndarray        # max over the grid of running sums of |kernel| / K^{1/2}

    @property
    def abs_error(self):
        if self.reference is None:
            return np.full(len(self.grid), np.nan)
        return np.abs(self.values - self.reference)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["z_re", "z_im", "ref_re", "ref_im", "rec_re", "rec_im", "abs_err"])
        ref = self.reference if self.reference is not None else np.full(len(self.grid), np.nan)
        for z, r, v, e in zip(self.grid, ref, self.values, self.abs_error):
            wr.writerow([repr(float(x)) for x in (z.real, z.imag, r.real, r.imag, v.real, v.imag, e)])
        return buf.getvalue()

    def summary(self) -> dict:
        return {"sup_error": self.sup_error, "N": self.N,
                "tail_sum": float(self.tail_sums[-1]) if len(self.tail_sums) else 0.0}


def _window(spec, N):
    keep = np.abs(spec.n) <= N
    return keep


def _report(samples, grid, N, kernel_rows, keep):
    spec = samples.spectrum
    lam = spec.lambdas[keep]
    k = spec.k_diag[keep]
    F = samples.values[keep]
    grid = np.atleast_1d(np.asarray(grid, dtype=complex))
    if len(lam) == 0:
        values = np.zeros(len(grid), dtype=complex)
        tail = np.zeros(0)
    else:
        table = kernel_rows(grid, lam)
        values = table @ (F / k)
        order = np.argsort(np.abs(lam), kind="stable")
        terms = np.abs(table[:, order]) / np.sqrt(k[order])
        tail = np.max(np.cumsum(terms, axis=1), axis=0)
    ref = samples.reference(grid) if samples.reference is not None else None
    sup = float(np.max(np.abs(values - ref))) if ref is not None else float("nan")
    return ReconstructionReport(grid, int(N), values, ref, sup, tail)


def reconstruct_sampling(samples: SampleSet, grid=None, N: int = 200) -> ReconstructionReport:
    """Truncated sampling series ``sum_{|n| <= N} K_b(z, lambda_n) F(lambda_n) / K_b(lambda_n, lambda_n)``."""
    spec = samples.spectrum
    grid = default_grid() if grid is None else grid
    keep = _window(spec, N)
    return _report(samples, grid, N,
                   lambda z, lam: reproducing_kernel(spec.hamiltonian, spec.b, z, lam), keep)


def reconstruct_oversampling(H: Hamiltonian, taper: TaperWeight, samples: SampleSet,
                             grid=None, N: int = 200) -> ReconstructionReport:
    """Truncated oversampling series with the tapered kernel ``J``."""
    spec = samples.spectrum
    if samples.support is None or samples.support > taper.a * (1 + 1e-12):
        raise SubspaceMismatch(f"samples claim support {samples.support}, taper starts at {taper.a}")
    if abs(taper.b - spec.b) > 1e-12 * max(1.0, spec.b):
        raise SubspaceMismatch(f"taper ends at {taper.b} but the spectrum belongs to b={spec.b}")
    grid = default_grid() if grid is None else grid
    keep = _window(spec, N)
    return _report(samples, grid, N, lambda z, lam: oversampling_kernel(H, taper, z, lam), keep)


# Summability ----------------------------------------------------------------

@dataclass(frozen=True)
class TailReport:
    lambdas: np.ndarray          # ordered by |lambda|
    n: np.ndarray
    terms: np.ndarray            # max over z of (|kernel| / K^{1/2})^q
    partial_sums: np.ndarray     # max over z of the running sums
    decay_exponent: float
    fit_range: tuple

    fit_by: str = "lambda"

    def _axis(self, by):
        return np.abs(self.lambdas) if by == "lambda" else np.abs(self.n).astype(float)

    def remainder(self) -> float:
        """Power-law bound on the terms beyond the computed range.

        Uses the envelope of the last tenth of the range, the local term
        density and the fitted exponent; infinite when the exponent is ``>= -1``.
        """
        if not self.decay_exponent < -1:
            return float("inf")
        axis = self._axis(self.fit_by)
        top = axis.max()
        last = axis >= 0.9 * top
        density = last.sum() / (top - axis[last].min() + 1e-300)
        return float(density * self.terms[last].max() * top / (-self.decay_exponent - 1))

    def tail_fraction(self, cut: float, by: str | None = None) -> float:
        """Share of the (extrapolated) total contributed by terms beyond ``cut``."""
        by = self.fit_by if by is None else by
        axis = self._axis(by)
        inside = axis <= cut
        total = self.partial_sums[-1] + self.remainder()
        head = self.partial_sums[np.nonzero(inside)[0][-1]] if inside.any() else 0.0
        return float((total - head) / total)


def decay_exponent(x, terms, lo, hi, blocks: int = 12) -> float:
    """Slope of ``log(envelope)`` against ``log x`` on ``[lo, hi]``.

    The envelope is the maximum over geometric blocks, which removes the
    oscillatory zeros of the individual terms.
    """
    x = np.asarray(x, dtype=float)
    terms = np.asarray(terms, dtype=float)
    edges = np.geomspace(lo, hi, blocks + 1)
    xs, ys = [], []
    for e0, e1 in zip(edges[:-1], edges[1:]):
        sel = (x >= e0) & (x < e1) & (terms > 0)
        if sel.any():
            i = np.argmax(np.where(sel, terms, -np.inf))
            xs.append(x[i])
            ys.append(terms[i])
    if len(xs) < 3:
        return float("nan")
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def tail_diagnostic(H: Hamiltonian, taper: TaperWeight | None, spectrum: Spectrum, z, q: float = 1.0,
                    kernel: str = "oversampling", fit=None, fit_by: str = "lambda") -> TailReport:
    """Partial sums of ``(|kernel(z, lambda_n)| / K(lambda_n, lambda_n)^{1/2})^q`` ordered by ``|lambda_n|``.

    ``z`` may be an array; terms and sums are then maximized over it.  ``fit``
    is the ``(lo, hi)`` window (in ``|lambda|`` or ``|n|``) for the decay exponent,
    defaulting to the upper nine tenths of the computed range on a log scale.
    """
    if not 1 <= q < 2:
        raise ValueError("q must lie in [1, 2)")
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    order = np.argsort(np.abs(spectrum.lambdas), kind="stable")
    lam = spectrum.lambdas[order]
    k = spectrum.k_diag[order]
    if kernel == "oversampling":
        table = oversampling_kernel(H, taper, z, lam)
    elif kernel == "sampling":
        table = reproducing_kernel(H, spectrum.b, z, lam)
    else:
        raise ValueError(f"unknown kernel {kernel!r}")
    per_z = (np.abs(table) / np.sqrt(k)) ** q
    terms = per_z.max(axis=0)
    sums = np.cumsum(per_z, axis=1).max(axis=0)
    axis = np.abs(lam) if fit_by == "lambda" else np.abs(spectrum.n[order]).astype(float)
    if fit is None:
        top = axis.max()
        fit = (max(top ** 0.1, axis[axis > 0].min()), top)
    slope = decay_exponent(axis, terms, *fit)
    return TailReport(lam, spectrum.n[order], terms, sums, slope, tuple(fit), fit_by)
