"""Fundamental solution of ``J u' = -z H u``, ``u(z, 0) = (1, 0)``.

The propagator is a fourth-order Magnus integrator.  Because ``J H`` is
traceless the exponential of each step is available in closed form, and on
constant segments a single step is exact.  All routines are vectorized over
the spectral parameter.

Integrals of the form ``int u(z, x)^t M(x) u(w, x) weight(x) dx`` with
``M = H`` or ``M = J`` are computed by composite Gauss-Legendre quadrature
on panels whose width is tied to the oscillation scale, with the solution
propagated through the quadrature nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import FormMismatch, NonDiagonalHamiltonian, StepUnderflow
from .hamiltonian import ConstantDiagonal, Hamiltonian

TOL_ODE = 1e-10
SIGNATURE = np.array([[0.0, -1.0], [1.0, 0.0]])

_SQRT3 = math.sqrt(3.0)
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_PANEL_PHASE = 1.0       # radians of oscillation per quadrature panel
_STEP_PHASE = 0.1        # radians per Magnus step on non-constant segments
_MAX_LEVEL = 6
_CHUNK_ELEMENTS = 2_000_000


@dataclass(frozen=True)
class FundamentalValue:
    u1: complex
    u2: complex
    z: complex
    x: float


@dataclass(frozen=True)
class PruferState:
    theta: float
    logR: float
    lam: float
    x: float


@dataclass
class Integral:
    """A requested integral ``int_lo^hi u(z)^t M u(w) weight dx``."""

    lo: float
    hi: float
    matrix: str | Callable = "H"           # "H", "J" or x -> (n, 2, 2) array
    weight: Callable | None = None


# ---------------------------------------------------------------------------
# mesh + propagation

def _segment_of(H: Hamiltonian, x):
    return H.segment_index(x)


def _build_points(H, x_end, stops, integrals, zmax, level):
    """Ordered evaluation points, the Magnus substeps between them, and quadrature nodes."""
    segs = [s for s in H.segments if s.lo < x_end]
    brk = [0.0, x_end]
    for s in segs:
        brk += [s.lo, min(s.hi, x_end)]
        brk += [k for k in s.kinks() if k < x_end]
    brk += [float(t) for t in stops]
    for it in integrals:
        brk += [it.lo, it.hi]
    brk = np.unique(np.clip(np.asarray(brk, dtype=float), 0.0, x_end))

    scale = 2.0**level
    norms = np.array([s.norm_max() for s in H.segments])
    nodes = []
    for it in integrals:
        xs, ws = [], []
        inside = brk[(brk >= it.lo) & (brk <= it.hi)]
        for p, q in zip(inside[:-1], inside[1:]):
            if q <= p:
                continue
            k = int(_segment_of(H, 0.5 * (p + q)))
            phase = 2.0 * zmax * norms[k] * (q - p)
            n = max(1, int(math.ceil(scale * phase / _PANEL_PHASE)))
            edges = np.linspace(p, q, n + 1)
            half = 0.5 * np.diff(edges)
            mid = 0.5 * (edges[1:] + edges[:-1])
            xs.append((mid[:, None] + half[:, None] * _GL_X[None, :]).ravel())
            ws.append((half[:, None] * _GL_W[None, :]).ravel())
        xs = np.concatenate(xs) if xs else np.empty(0)
        ws = np.concatenate(ws) if ws else np.empty(0)
        nodes.append((xs, ws))

    pts = np.unique(np.concatenate([brk] + [n[0] for n in nodes]))
    # Magnus substeps between consecutive points
    p, q = pts[:-1], pts[1:]
    k = np.asarray(_segment_of(H, 0.5 * (p + q)), dtype=int)
    const = np.array([s.constant for s in H.segments])[k]
    lengths = np.array([max(s.length, 1e-300) for s in H.segments])[k]
    m = np.maximum(np.ceil(scale * zmax * norms[k] * (q - p) / _STEP_PHASE),
                   np.ceil(scale * 4 * (q - p) / lengths))
    m = np.where(const, 1, np.maximum(m, 1)).astype(int)
    h = (q - p) / m
    owner = np.repeat(np.arange(1, len(pts)), m)
    first = np.repeat(np.cumsum(m) - m, m)
    sub = np.arange(int(m.sum())) - first
    left = p[owner - 1] + h[owner - 1] * sub
    width = h[owner - 1]
    return pts, left, width, owner, nodes


def _magnus_coefficients(H, left, width):
    """Real 2x2 matrices B, C with step exponent ``z B + z^2 C``."""
    xa = left + width * (0.5 - _SQRT3 / 6)
    xb = left + width * (0.5 + _SQRT3 / 6)
    ma = H.matrix(xa)
    mb = H.matrix(xb)
    ma = SIGNATURE @ ma
    mb = SIGNATURE @ mb
    B = 0.5 * width[:, None, None] * (ma + mb)
    C = (_SQRT3 / 12) * (width**2)[:, None, None] * (mb @ ma - ma @ mb)
    return B, C


def _step_exponentials(B, C, z):
    """exp(z B + z^2 C) entrywise, shapes (steps, m).

    The exponent is traceless, so ``exp(O) = c(q) I + s(q) O`` with
    ``q = -det O``, ``c = cosh(sqrt q)`` and ``s = sinh(sqrt q)/sqrt q``.
    """
    z2 = z * z
    o11 = B[:, None, 0, 0] * z + C[:, None, 0, 0] * z2
    o12 = B[:, None, 0, 1] * z + C[:, None, 0, 1] * z2
    o21 = B[:, None, 1, 0] * z + C[:, None, 1, 0] * z2
    q = o11 * o11 + o12 * o21
    if q.size and np.max(np.abs(q)) < 0.1:
        # truncated Taylor series, remainder below 1e-16
        ch = 1 + q * (1 / 2 + q * (1 / 24 + q * (1 / 720 + q * (1 / 40320 + q / 3628800))))
        sh = 1 + q * (1 / 6 + q * (1 / 120 + q * (1 / 5040 + q * (1 / 362880 + q / 39916800))))
    else:
        s = np.sqrt(q.astype(complex))
        small = np.abs(q) < 1e-8
        safe = np.where(small, 1.0, s)
        ch = np.where(small, 1 + q / 2 + q * q / 24, np.cosh(safe))
        sh = np.where(small, 1 + q / 6 + q * q / 120, np.sinh(safe) / safe)
        if np.isrealobj(z):
            ch, sh = ch.real, sh.real
    return ch + sh * o11, sh * o12, sh * o21, ch - sh * o11


def _propagate(H, z, x_end, stops, integrals, level, start=(1.0, 0.0)):
    z = np.asarray(z)
    dtype = float if np.isrealobj(z) else complex
    zmax = max(float(np.max(np.abs(z))) if z.size else 0.0, 1.0)
    pts, left, width, owner, nodes = _build_points(H, x_end, stops, integrals, zmax, level)
    want = np.zeros(len(pts), dtype=bool)
    want[np.searchsorted(pts, np.asarray(stops, dtype=float))] = True
    for xs, _ in nodes:
        want[np.searchsorted(pts, xs)] = True
    slot = -np.ones(len(pts), dtype=int)
    slot[want] = np.arange(int(want.sum()))
    store = np.empty((int(want.sum()), z.size, 2), dtype=dtype)

    u1 = np.full(z.size, start[0], dtype=dtype)
    u2 = np.full(z.size, start[1], dtype=dtype)
    if want[0]:
        store[slot[0], :, 0], store[slot[0], :, 1] = u1, u2
    record = np.zeros(len(owner), dtype=bool)
    if len(owner):
        record[:-1] = owner[1:] != owner[:-1]
        record[-1] = True
    chunk = max(1, _CHUNK_ELEMENTS // max(z.size, 1))
    for first in range(0, len(left), chunk):
        sl = slice(first, first + chunk)
        B, C = _magnus_coefficients(H, left[sl], width[sl])
        e11, e12, e21, e22 = _step_exponentials(B, C, z)
        rec = record[sl]
        own = owner[sl]
        for k in range(len(e11)):
            u1, u2 = e11[k] * u1 + e12[k] * u2, e21[k] * u1 + e22[k] * u2
            if rec[k] and want[own[k]]:
                s = slot[own[k]]
                store[s, :, 0] = u1
                store[s, :, 1] = u2
    u_stops = store[slot[np.searchsorted(pts, np.asarray(stops, dtype=float))]]
    quad = []
    for (xs, ws), it in zip(nodes, integrals):
        w = ws if it.weight is None else ws * it.weight(xs)
        if callable(it.matrix):
            mat = it.matrix(xs)
        elif it.matrix == "H":
            mat = H.matrix(xs)
        else:
            mat = np.broadcast_to(SIGNATURE, (len(xs), 2, 2))
        quad.append((store[slot[np.searchsorted(pts, xs)]], w, mat))
    return u_stops, quad


def _bilinear(quad, iz, iw, outer):
    U, w, mat = quad
    if len(w) == 0:
        shape = (len(iz), len(iw)) if outer else (len(iz),)
        return np.zeros(shape, dtype=complex)
    L = U[:, iz, :]
    R = np.einsum("nij,nbj->nbi", mat, U[:, iw, :]) * w[:, None, None]
    if outer:
        Lr = L.transpose(1, 0, 2).reshape(len(iz), -1)
        Rr = R.transpose(1, 0, 2).reshape(len(iw), -1)
        return Lr @ Rr.T
    return np.einsum("nki,nki->k", L, R)


def _cs_factors(quad, iz, iw):
    """Per-argument ``sqrt(int |M| |u|^2)``; their product bounds ``|int u^t M v|``."""
    U, w, mat = quad
    mnorm = np.abs(mat).sum(axis=(1, 2)) * np.abs(w)
    g = np.sqrt(np.einsum("n,nki->k", mnorm, np.abs(U) ** 2))
    return g[iz], g[iw]


def _close_integral(a, b, factors, outer, tol):
    fz, fw = factors
    scale = np.outer(fz, fw) if outer else fz * fw
    return bool(np.all(np.abs(a - b) <= tol * (np.abs(b) + scale + 1e-300)))


def _close(a, b, tol):
    """Agreement of solution values ``(stops, z, 2)``, judged per solution vector."""
    if np.size(a) == 0:
        return True
    err = np.max(np.abs(a - b), axis=-1)
    ref = np.max(np.abs(b), axis=-1)
    return bool(np.all(err <= tol * (ref + 1e-300)))


def evaluate(H: Hamiltonian, z, stops: Sequence[float] = (), integrals: Sequence[Integral] = (),
             pairs: Sequence[tuple] = (), tol: float = TOL_ODE, start=(1.0, 0.0)):
    """Propagate for all ``z`` and return ``(u_stops, [integral values])``.

    ``u_stops`` has shape ``(len(stops), len(z), 2)``.  Each entry of ``pairs``
    is ``(iz, iw, outer)`` indexing into ``z``; integral ``k`` is evaluated for
    pair spec ``k``.  Step sizes are halved until successive refinements agree
    to ``tol``; constant-coefficient problems are exact on the first mesh.
    """
    z = np.atleast_1d(np.asarray(z))
    if np.iscomplexobj(z) and not np.any(z.imag):
        z = z.real
    if not np.iscomplexobj(z):
        z = z.astype(float)
    stops = np.atleast_1d(np.asarray(stops, dtype=float))
    x_end = max([H.b * 0] + list(stops) + [it.hi for it in integrals])
    exact = all(s.constant for s in H.segments if s.lo < x_end)

    def run(level):
        us, quad = _propagate(H, z, x_end, stops, integrals, level, start)
        vals = [_bilinear(q, *p) for q, p in zip(quad, pairs)]
        factors = [_cs_factors(q, p[0], p[1]) for q, p in zip(quad, pairs)]
        return us, vals, factors

    prev = run(0)
    if exact:
        return prev[:2]
    for level in range(1, _MAX_LEVEL + 1):
        cur = run(level)
        # fourth order: the finer result is ~15x closer than the difference.
        # Integrals are judged against their Cauchy-Schwarz scale, since
        # oscillatory cancellation can make the value itself arbitrarily small.
        tol15 = 15 * tol
        ok = _close(prev[0], cur[0], tol15) and all(
            _close_integral(a, b, f, p[2], tol15) for a, b, f, p in zip(prev[1], cur[1], cur[2], pairs))
        if ok:
            return cur[:2]
        prev = cur
    raise StepUnderflow(f"no convergence to {tol} after {_MAX_LEVEL} step halvings")


# ---------------------------------------------------------------------------
# public operations

def solve(H: Hamiltonian, z, x, tol: float = TOL_ODE) -> np.ndarray:
    """``u(z, x)`` for arrays ``z`` (m,) and ``x`` (k,); returns shape (k, m, 2)."""
    us, _ = evaluate(H, z, stops=np.atleast_1d(x), tol=tol)
    return us


def fundamental_solution(H: Hamiltonian, z: complex, x: float) -> FundamentalValue:
    u = solve(H, [z], [x])[0, 0]
    return FundamentalValue(complex(u[0]), complex(u[1]), complex(z), float(x))


def transfer_matrix(H: Hamiltonian, z: complex, x0: float, x1: float) -> np.ndarray:
    """Matrix ``T`` with ``y(x1) = T y(x0)`` for every solution at spectral parameter ``z``."""
    both = [0.0, x0, x1] if x0 > 0 else [0.0, x1]
    cols = []
    for start in ((1.0, 0.0), (0.0, 1.0)):
        us, _ = evaluate(H, [z], stops=both, start=start)
        cols.append(us[:, 0, :])
    m0 = np.column_stack([cols[0][-2], cols[1][-2]]) if x0 > 0 else np.eye(2)
    m1 = np.column_stack([cols[0][-1], cols[1][-1]])
    return m1 @ np.linalg.inv(m0)


def prufer_flow(H: Hamiltonian, lam: float, x: float) -> PruferState:
    if not H.is_diagonal:
        raise NonDiagonalHamiltonian("Prufer flow requires a diagonal Hamiltonian")
    theta, logr, _ = prufer(H, np.array([float(lam)]), x)
    return PruferState(float(theta[0]), float(logr[0]), float(lam), float(x))


def prufer(H: Hamiltonian, lam, x_end: float | None = None, rtol: float = 1e-12):
    """Vectorized Prufer angle, log-amplitude and ``int_0^x u^t H u`` at ``x_end``.

    Uses ``theta' = lam xi^t H xi`` and ``(log R)' = lam [(h1-h2)/2 sin 2theta - h3 cos 2theta]``,
    which reduce to the trace-normalized diagonal form when ``tr H = 1``.
    Constant diagonal segments are crossed in closed form.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    x_end = H.b if x_end is None else float(x_end)
    theta = np.zeros_like(lam)
    logr = np.zeros_like(lam)
    norm = np.zeros_like(lam)
    for seg in H.segments:
        if seg.lo >= x_end:
            break
        hi = min(seg.hi, x_end)
        if isinstance(seg, ConstantDiagonal):
            theta, logr, norm = _prufer_constant(seg, lam, hi - seg.lo, theta, logr, norm)
            continue
        brk = np.unique(np.concatenate([[seg.lo, hi], seg.kinks()[seg.kinks() < hi]]))
        for p, q in zip(brk[:-1], brk[1:]):
            theta, logr, norm = _prufer_ode(seg, lam, p, q, theta, logr, norm, rtol)
    return theta, logr, norm


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def _prufer_constant(seg, lam, L, theta0, logr0, norm0):
    # tan psi = tan theta / r advances linearly; the wrapped offsets keep theta continuous
    h1, h2 = 0.5 + seg.g0, 0.5 - seg.g0
    ratio = math.sqrt(h1 / h2)
    psi0 = theta0 + _wrap(np.arctan2(np.sin(theta0), ratio * np.cos(theta0)) - theta0)
    psi = psi0 + lam * seg.kappa * L
    theta = psi + _wrap(np.arctan2(ratio * np.sin(psi), np.cos(psi)) - psi)
    # h1 u1^2 + h2 u2^2 is conserved along the segment
    energy = np.exp(2 * logr0) * (h1 * np.cos(theta0) ** 2 + h2 * np.sin(theta0) ** 2)
    r2 = energy / (h1 * np.cos(theta) ** 2 + h2 * np.sin(theta) ** 2)
    return theta, 0.5 * np.log(r2), norm0 + energy * L


def _prufer_ode(seg, lam, p, q, theta0, logr0, norm0, rtol):
    m = len(lam)

    def rhs(x, y):
        th, lr = y[:m], y[m:2 * m]
        h1, h2, h3 = seg.entries(np.asarray(x))
        c, s = np.cos(2 * th), np.sin(2 * th)
        quad = 0.5 * (h1 + h2) + 0.5 * (h1 - h2) * c + h3 * s
        dth = lam * quad
        dlr = lam * (0.5 * (h1 - h2) * s - h3 * c)
        dn = np.exp(2 * lr) * quad
        return np.concatenate([dth, dlr, dn])

    y0 = np.concatenate([theta0, logr0, norm0])
    sol = solve_ivp(rhs, (p, q), y0, method="DOP853", rtol=rtol, atol=rtol)
    if not sol.success:
        raise StepUnderflow(sol.message)
    y = sol.y[:, -1]
    return y[:m], y[m:2 * m], y[2 * m:]


def norm_squared(H: Hamiltonian, lam, l: float | None = None, check: bool = True,
                 tol: float = 1e-6, batch: int = 64):
    """``K_l(lam, lam) = int_0^l u^t H u`` for real ``lam`` (scalar or array).

    With ``check`` the Wronskian limit ``(d/dz u(z,l))^t J u(lam,l)`` is also
    formed (central differences, Richardson-extrapolated) and must agree
    with the quadrature value to ``tol`` relative.  Parameters are processed
    in batches of similar magnitude so each mesh fits its own oscillation scale.
    """
    scalar = np.ndim(lam) == 0
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    l = H.b if l is None else float(l)
    out = np.empty(len(lam))
    order = np.argsort(np.abs(lam), kind="stable")
    for first in range(0, len(lam), batch):
        sel = order[first:first + batch]
        out[sel] = _norm_batch(H, lam[sel], l, check, tol)
    return float(out[0]) if scalar else out


def _norm_batch(H, lam, l, check, tol):
    m = len(lam)
    h = 1e-5 * np.maximum(1.0, np.abs(lam))
    zs = np.concatenate([lam, lam + h, lam - h, lam + h / 2, lam - h / 2])
    idx = np.arange(m)
    us, (quad,) = evaluate(H, zs, stops=[l], integrals=[Integral(0.0, l)],
                           pairs=[(idx, idx, False)])
    value = quad.real
    if check:
        u = us[0]
        d1 = (u[m:2 * m] - u[2 * m:3 * m]) / (2 * h[:, None])
        d2 = (u[3 * m:4 * m] - u[4 * m:]) / h[:, None]
        du = (4 * d2 - d1) / 3
        u0 = u[:m]
        wr = (du[:, 1] * u0[:, 0] - du[:, 0] * u0[:, 1]).real
        bad = np.abs(wr - value) > tol * np.abs(value)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise FormMismatch(f"K(lam,lam) at lam={lam[i]:.6g}: quadrature {value[i]:.12g} "
                               f"vs Wronskian {wr[i]:.12g}")
    return value
