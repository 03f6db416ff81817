"""Temperature update, truncation functions and the renormalized residual."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .potentials import MaterialFunctions
from .transport import XGrid, face_average, implicit_diffusion, upwind_divergence


class PositivityError(RuntimeError):
    pass


def conduction_faces(grid: XGrid, theta, mat: MaterialFunctions):
    """Face conductivities: arithmetic mean of kappa(theta) (zero on walls)."""
    k = mat.kappa(theta)
    return face_average(grid, k, 0), face_average(grid, k, 1)


def heat_step(theta, u, v, source, dt, mat: MaterialFunctions, grid: XGrid,
              picard_iters: int = 1, picard_tol: Optional[float] = None):
    """Advance theta by upwind advection, explicit sources, implicit conduction.

    Conduction uses kappa frozen at the previous Picard iterate; the first
    iterate is the incoming temperature.
    """
    theta = np.asarray(theta, dtype=float)
    star = theta - dt * upwind_divergence(grid, theta, u, v)
    if source is not None:
        star = star + dt * source
    it = theta
    for _ in range(max(1, picard_iters)):
        cx, cy = conduction_faces(grid, it, mat)
        new = implicit_diffusion(grid, star, cx, cy, dt)
        done = picard_tol is not None and np.max(np.abs(new - it)) <= picard_tol * np.max(np.abs(new))
        it = new
        if done:
            break
    if not np.all(it > 0):
        raise PositivityError(f"temperature lost positivity (min {it.min():.3e}); reduce dt")
    return it


def conduction_entropy_rate(grid: XGrid, theta, mat: MaterialFunctions):
    """Per-cell share of kappa |grad theta|^2 / theta^2 from the solver faces."""
    cx, cy = conduction_faces(grid, theta, mat)
    out = np.zeros(grid.shape)
    for c, axis, h in ((cx, 0, grid.hx), (cy, 1, grid.hy)):
        prev = np.roll(theta, 1, axis=axis)
        face = c * (theta - prev) ** 2 / (theta * prev * h**2)
        out += 0.5 * (face + np.roll(face, -1, axis=axis))
    return out


# ---------------------------------------------------------------------------
# truncations


@dataclass(frozen=True)
class Truncation:
    k: float
    eps: float = 0.1

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("truncation level must be >= 1")
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")


def truncation_eval(tr: Truncation, s):
    """Mollified truncation T_{k,eps} and its first two derivatives."""
    s = np.asarray(s, dtype=float)
    k, eps = tr.k, tr.eps
    a = np.abs(s)
    sg = np.sign(s)
    band = (a > k) & (a < k + eps)
    T = np.where(a <= k, s, sg * (k + 0.5 * eps))
    T = np.where(band, -(sg / (2 * eps)) * (s * s - 2 * sg * (k + eps) * s + k * k), T)
    d1 = np.where(a <= k, 1.0, 0.0)
    d1 = np.where(band, (k + eps - a) / eps, d1)
    d2 = np.where(band, -sg / eps, 0.0)
    if s.ndim == 0:
        return float(T), float(d1), float(d2)
    return T, d1, d2


def sharp_truncation(k: float, s):
    """T_k(s) = sign(s) min(|s|, k) and its a.e. derivative."""
    s = np.asarray(s, dtype=float)
    T = np.sign(s) * np.minimum(np.abs(s), k)
    d1 = (np.abs(s) < k).astype(float)
    return T, d1


# ---------------------------------------------------------------------------
# renormalized residual


@dataclass
class TestFunction:
    """psi(t, x) = chi(t) g(x) with chi piecewise linear and chi(T) = 0.

    ``knots`` are (t, chi) pairs; the default is chi = 1 - t/T.
    """

    profile: Callable[[np.ndarray, np.ndarray], np.ndarray]
    knots: Optional[Sequence[tuple]] = None
    label: str = "psi"

    def chi(self, t, T):
        kn = self.knots or [(0.0, 1.0), (T, 0.0)]
        ts, cs = zip(*kn)
        return np.interp(t, ts, cs)

    def dchi(self, t, T):
        kn = self.knots or [(0.0, 1.0), (T, 0.0)]
        ts, cs = np.array(kn, dtype=float).T
        slopes = np.diff(cs) / np.diff(ts)
        idx = np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(slopes) - 1)
        return slopes[idx]


def standard_test_functions(L: float = 1.0):
    """The fixed nonnegative probe set: a constant, an offset cosine mode and
    a Gaussian bump at the centre of the box."""
    k = 2.0 * np.pi / L
    c = 0.5 * L
    return [
        TestFunction(lambda X, Y: np.ones_like(X), label="one"),
        TestFunction(lambda X, Y: 1 + np.cos(k * X) * np.cos(k * Y), label="cos"),
        TestFunction(lambda X, Y: np.exp(-((X - c) ** 2 + (Y - c) ** 2) / (0.05 * L * L)), label="bump"),
    ]


@dataclass
class FieldHistory:
    """Append-only record of the fields the renormalized check needs."""

    grid: XGrid
    mat: MaterialFunctions
    times: list
    theta: list
    u: list
    v: list
    source: list

    @classmethod
    def empty(cls, grid, mat):
        return cls(grid, mat, [], [], [], [], [])

    def append(self, t, theta, u, v, source):
        self.times.append(float(t))
        self.theta.append(np.array(theta, copy=True))
        self.u.append(np.array(u, copy=True))
        self.v.append(np.array(v, copy=True))
        self.source.append(np.array(source, copy=True))


def _trapezoid_weights(times):
    t = np.asarray(times, dtype=float)
    w = np.zeros_like(t)
    dt = np.diff(t)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def renormalized_inequality_residual(history: FieldHistory, k: float, test_fns,
                                     eps: Optional[float] = None):
    """Signed residual LHS - RHS of the truncated temperature inequality.

    With ``eps`` given, the mollified truncation is used and the
    -T''(theta) kappa |grad theta|^2 term is kept on the right, so the
    residual measures the renormalized equation itself.
    """
    n = len(history.times)
    if n < 2 or not (len(history.theta) == len(history.u) == len(history.v) == len(history.source) == n):
        raise ValueError("history is incomplete")
    g = history.grid
    A = g.cell_area
    times = np.asarray(history.times)
    T_end = times[-1] - times[0]
    w = _trapezoid_weights(times)
    X, Y = g.centers()
    if eps is None:
        trunc = lambda th: (*sharp_truncation(k, th), None)  # noqa: E731
    else:
        tr = Truncation(k, eps)
        trunc = lambda th: truncation_eval(tr, th)  # noqa: E731
    out = []
    for psi in test_fns:
        prof = np.asarray(psi.profile(X, Y), dtype=float)
        rel_t = times - times[0]
        chi = psi.chi(rel_t, T_end)
        dchi = psi.dchi(rel_t, T_end)
        gx = (prof - np.roll(prof, 1, axis=0)) / g.hx
        gy = (prof - np.roll(prof, 1, axis=1)) / g.hy
        mu, mv = g.face_mask()
        gx, gy = gx * mu, gy * mv
        total = 0.0
        for m in range(n):
            th = history.theta[m]
            Tk, dTk, d2Tk = trunc(th)
            lhs = -dchi[m] * np.sum(Tk * prof) * A
            Tx = face_average(g, Tk, 0)
            Ty = face_average(g, Tk, 1)
            lhs -= chi[m] * A * (np.sum(history.u[m] * Tx * gx) + np.sum(history.v[m] * Ty * gy))
            cx, cy = conduction_faces(g, th, history.mat)
            dTx = (Tk - np.roll(Tk, 1, axis=0)) / g.hx
            dTy = (Tk - np.roll(Tk, 1, axis=1)) / g.hy
            lhs += chi[m] * A * (np.sum(cx * dTx * gx) + np.sum(cy * dTy * gy))
            rhs = chi[m] * A * np.sum(dTk * history.source[m] * prof)
            if d2Tk is not None:
                for c, axis, h in ((cx, 0, g.hx), (cy, 1, g.hy)):
                    prev = np.roll(th, 1, axis=axis)
                    d2f = face_average(g, d2Tk, axis)
                    rhs -= chi[m] * A * np.sum(d2f * c * ((th - prev) / h) ** 2
                                               * face_average(g, prof, axis))
            total += w[m] * (lhs - rhs)
        Tk0 = trunc(history.theta[0])[0]
        total -= chi[0] * np.sum(Tk0 * prof) * A
        out.append(float(total))
    return out
