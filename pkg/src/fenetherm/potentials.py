"""Spring potentials, material laws and the structural checks on them.

Potentials are written in the scalar variable ``s = |q|^2 / 2`` so that
radial symmetry holds by construction. All routines accept numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np


class PotentialKind(str, Enum):
    WARNER = "warner"
    FENE_LIKE = "fene_like"
    CUSTOM = "custom"


class EntropicKind(str, Enum):
    HOOKEAN = "hookean"
    CUSTOM = "custom"


class PotentialDomainError(ValueError):
    """Raised when a potential is evaluated outside ``0 <= s < b/2``."""


# (U, U', U'') as functions of s
TripleFn = Callable[[np.ndarray], tuple]
# (U, U') as functions of s
PairFn = Callable[[np.ndarray], tuple]


@dataclass(frozen=True)
class PotentialSpec:
    kind: PotentialKind = PotentialKind.WARNER
    H: float = 1.0
    b: float = 1.0
    r: float = 0.5
    entropic_kind: EntropicKind = EntropicKind.HOOKEAN
    custom_elastic: Optional[TripleFn] = field(default=None, compare=False)
    custom_entropic: Optional[PairFn] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", PotentialKind(self.kind))
        object.__setattr__(self, "entropic_kind", EntropicKind(self.entropic_kind))
        if not (self.H > 0 and self.b > 0):
            raise ValueError("H and b must be positive")
        if self.kind is PotentialKind.FENE_LIKE and not (0.0 < self.r < 1.0):
            raise ValueError("FENE-like exponent r must lie in (0, 1)")
        if self.kind is PotentialKind.CUSTOM and self.custom_elastic is None:
            raise ValueError("custom elastic potential needs custom_elastic=(U, dU, d2U) callable")
        if self.entropic_kind is EntropicKind.CUSTOM and self.custom_entropic is None:
            raise ValueError("custom entropic potential needs custom_entropic callable")

    @property
    def s_max(self) -> float:
        """Right end b/2 of the admissible s-interval (excluded)."""
        return 0.5 * self.b

    @property
    def radius(self) -> float:
        return float(np.sqrt(self.b))


def _elastic(spec: PotentialSpec, s: np.ndarray):
    H, b = spec.H, spec.b
    if spec.kind is PotentialKind.WARNER:
        x = 2.0 * s / b
        one_minus = 1.0 - x
        U = -0.5 * H * b * np.log1p(-x)
        dU = H / one_minus
        d2U = (2.0 * H / b) / one_minus**2
        return U, dU, d2U
    if spec.kind is PotentialKind.FENE_LIKE:
        r = spec.r
        one_minus = 1.0 - 2.0 * s / b
        U = 0.5 * H * b * (one_minus ** (-r) - 1.0)
        dU = H * r * one_minus ** (-r - 1.0)
        d2U = (2.0 * H * r * (r + 1.0) / b) * one_minus ** (-r - 2.0)
        return U, dU, d2U
    U, dU, d2U = spec.custom_elastic(s)
    return np.asarray(U, float), np.asarray(dU, float), np.asarray(d2U, float)


def _entropic(spec: PotentialSpec, s: np.ndarray):
    if spec.entropic_kind is EntropicKind.HOOKEAN:
        return s.copy(), np.ones_like(s)
    U, dU = spec.custom_entropic(s)
    return np.asarray(U, float), np.asarray(dU, float)


def eval_potential(spec: PotentialSpec, s):
    """Return ``(U_e, U_e', U_e'', U_eta, U_eta')`` at ``s`` (scalar or array).

    Raises PotentialDomainError unless ``0 <= s < b/2`` everywhere.
    """
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0.0) or np.any(s_arr >= spec.s_max) or not np.all(np.isfinite(s_arr)):
        raise PotentialDomainError(f"s must lie in [0, {spec.s_max}); got range "
                                   f"[{s_arr.min()}, {s_arr.max()}]")
    out = (*_elastic(spec, s_arr), *_entropic(spec, s_arr))
    if np.ndim(s) == 0:
        return tuple(float(v) for v in out)
    return out


def spring_force(spec: PotentialSpec, q, theta: float) -> np.ndarray:
    """F(q, theta) = (U_e'(s) + theta U_eta'(s)) q with s = |q|^2/2.

    ``q`` has shape (..., 2); the result has the same shape.
    """
    q = np.asarray(q, dtype=float)
    s = 0.5 * np.sum(q * q, axis=-1)
    if np.any(2.0 * s >= spec.b):
        raise PotentialDomainError("|q|^2 must be < b")
    _, dUe, _, _, dUeta = eval_potential(spec, s)
    return (np.asarray(dUe) + theta * np.asarray(dUeta))[..., None] * q


# ---------------------------------------------------------------------------
# material functions


@dataclass(frozen=True)
class MaterialFunctions:
    """Heat conductivity ``kappa(theta) = c0 + c1 |theta|^beta`` and viscosity.

    ``nu_profile`` is ``"constant"`` (``nu(theta) = nu``) or
    ``"rational_decay"`` (``nu_floor + (nu - nu_floor) / (1 + theta^2)``).
    """

    kappa_c0: float = 1.0
    kappa_c1: float = 1.0
    beta: float = 1.0
    nu: float = 0.05
    nu_floor: float = 0.01
    nu_profile: str = "constant"

    def __post_init__(self):
        if not self.beta > 5.0 / 6.0:
            raise ValueError(f"heat.beta = {self.beta} violates the growth requirement beta > 5/6")
        if self.kappa_c0 < 0 or self.kappa_c1 < 0 or self.kappa_c0 + self.kappa_c1 <= 0:
            raise ValueError("kappa coefficients must be nonnegative and not both zero")
        if not self.nu_floor > 0:
            raise ValueError("flow.nu_floor must be positive")
        if self.nu < self.nu_floor:
            raise ValueError("flow.nu must be >= flow.nu_floor")
        if self.nu_profile not in ("constant", "rational_decay"):
            raise ValueError(f"unknown nu_profile {self.nu_profile!r}")

    @property
    def satisfies_growth_condition(self) -> bool:
        """True when kappa is pinched between multiples of 1 + theta^beta."""
        return self.kappa_c0 > 0 and self.kappa_c1 > 0

    def kappa(self, theta):
        return self.kappa_c0 + self.kappa_c1 * np.abs(theta) ** self.beta

    def viscosity(self, theta):
        theta = np.abs(np.asarray(theta, dtype=float))
        if self.nu_profile == "constant":
            return np.full_like(theta, self.nu)
        return self.nu_floor + (self.nu - self.nu_floor) / (1.0 + theta**2)


# ---------------------------------------------------------------------------
# assumption validator


@dataclass
class ValidationReport:
    kind: str
    monotone: bool
    convex: bool
    ratio_sup: float
    ratio_near_edge: float
    ratio_trend_to_zero: bool
    singular_at_edge: bool
    eta_derivative_bound: float
    bounded_ratio: bool  # finite c_e with 0 <= U'' <= c_e U'^2
    vanishing_ratio: bool  # c_e(s) -> 0 at the edge
    messages: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return (self.monotone and self.convex and self.bounded_ratio
                and self.singular_at_edge and np.isfinite(self.eta_derivative_bound))


def _edge_samples(s_max: float, n_samples: int) -> np.ndarray:
    # uniform interior samples plus a geometric approach to the edge
    uniform = np.linspace(0.0, s_max, n_samples, endpoint=False)
    gaps = s_max * np.logspace(-1, -12, max(n_samples // 2, 12))
    return np.unique(np.concatenate([uniform, s_max - gaps]))


def validate_assumptions(spec: PotentialSpec, n_samples: int = 64) -> ValidationReport:
    """Sample the potential on [0, b/2) and test the structural assumptions.

    The ratio U_e''/(U_e')^2 is examined all the way into the boundary layer:
    a bounded ratio gives the basic bound, a ratio that collapses towards zero
    at the edge gives the strengthened one.
    """
    if n_samples < 16:
        raise ValueError("n_samples must be >= 16")
    s = _edge_samples(spec.s_max, n_samples)
    s = s[s < spec.s_max]
    with np.errstate(all="ignore"):
        U, dU, d2U, _, dUeta = eval_potential(spec, s)
        ratio = np.where(dU > 0, d2U / dU**2, np.inf)
    msgs = []
    monotone = bool(np.all(np.diff(U) >= -1e-14 * np.maximum(1.0, np.abs(U[1:])))) and bool(np.all(dU >= 0))
    convex = bool(np.all(d2U >= 0))
    finite = np.isfinite(ratio)
    ratio_sup = float(np.max(ratio[finite])) if finite.any() else float("inf")
    edge = ratio[-6:]
    ratio_near_edge = float(edge[-1])
    # bounded: finite everywhere and not blowing up in the boundary layer
    bounded = bool(finite.all()) and ratio_near_edge <= 10.0 * float(np.max(ratio[: len(ratio) // 2]) + 1e-300)
    trend_zero = bool(np.all(np.diff(edge) <= 0)) and ratio_near_edge < 1e-2 * ratio_sup
    singular = bool(U[-1] > 10.0 * max(1.0, abs(U[0])) and dU[-1] > 1e3 * max(dU[0], 1e-300))
    eta_bound = float(np.max(np.abs(dUeta)))
    if not monotone:
        msgs.append("U_e is not monotonically increasing on the sample")
    if not convex:
        msgs.append("U_e'' takes negative values")
    if not bounded:
        msgs.append("U_e''/U_e'^2 is not bounded on [0, b/2)")
    if not singular:
        msgs.append("U_e does not blow up at the edge of the ball")
    if not trend_zero:
        msgs.append("U_e''/U_e'^2 does not vanish at the edge")
    return ValidationReport(
        kind=spec.kind.value,
        monotone=monotone,
        convex=convex,
        ratio_sup=ratio_sup,
        ratio_near_edge=ratio_near_edge,
        ratio_trend_to_zero=trend_zero,
        singular_at_edge=singular,
        eta_derivative_bound=eta_bound,
        bounded_ratio=bounded and convex,
        vanishing_ratio=bounded and convex and trend_zero,
        messages=msgs,
    )


def maxwellian(spec: PotentialSpec, qgrid, theta):
    """Equilibrium density exp(-(U_e + theta U_eta)/theta), unit mass on the grid.

    ``theta`` may be an array; the result then has shape theta.shape + (n_r, n_a).
    """
    theta = np.asarray(theta, dtype=float)
    if np.any(theta <= 0):
        raise ValueError("theta must be positive")
    Ue, _, _, Ueta, _ = eval_potential(spec, qgrid.s_c)
    ell = Ue / theta[..., None] + Ueta
    ell = ell - ell.min(axis=-1, keepdims=True)
    w = np.exp(-ell)
    mass = qgrid.n_a * np.sum(w * qgrid.area, axis=-1)
    if np.any(mass <= 0) or not np.all(np.isfinite(mass)):
        raise FloatingPointError("Maxwellian normalization underflowed")
    ring = w / mass[..., None]
    return np.broadcast_to(ring[..., None], ring.shape + (qgrid.n_a,)).copy()
