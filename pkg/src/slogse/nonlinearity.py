"""Regularised logarithm, saturated noise coefficients and Orlicz functionals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .grid import Field, grad_norm_sq, h1_norm

__all__ = [
    "AssumptionViolation",
    "SaturatedNonlinearity",
    "NoiseChannelSet",
    "FAMILIES",
    "validate_eps",
    "l_eps",
    "gtilde_eval",
    "k_gtilde_estimate",
    "apply_log_phase",
    "log_phase_rate",
    "log_nonlinearity",
    "xlogx",
    "entropy_density",
    "entropy_F",
    "orlicz_N",
    "orlicz_integral",
    "luxembourg_norm",
    "w_norm",
    "energy",
]

E3 = math.exp(-3.0)
E6 = math.exp(-6.0)

FAMILIES = ("photorefractive", "sqrt_gap", "double_sat", "log_sat", "constant", "custom")


class AssumptionViolation(ValueError):
    """The boundedness assumption on a saturated nonlinearity fails."""


def validate_eps(eps: float) -> float:
    eps = float(eps)
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie strictly inside (0, 1), got {eps}")
    return eps


def _l_eps_raw(r, eps):
    r = np.asarray(r, dtype=float)
    # ratio - 1 = (r - 1)(1 - eps) / (1 + eps r); log1p is exact-ish while it is small
    x = (r - 1.0) * (1.0 - eps) / (1.0 + eps * r)
    near = np.log1p(x)
    far = np.log(r + eps) - np.log1p(eps * r)
    return np.where(np.abs(x) < 0.5, near, far)


def l_eps(r, eps: float):
    """``log((r + eps) / (1 + eps r))`` for amplitudes ``r >= 0``."""
    eps = validate_eps(eps)
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("amplitude must be non-negative")
    out = _l_eps_raw(r, eps)
    return out if out.ndim else float(out)


def _photorefractive(theta, rho):
    a = 1.0 + rho * theta
    return theta / a, 1.0 / a**2, -2.0 * rho / a**3


def _sqrt_gap(theta, rho):
    a = 1.0 + theta
    s = np.sqrt(a)
    return 1.0 - 1.0 / s, 0.5 / (a * s), -0.75 / (a * a * s)


def _double_sat(theta, rho):
    # theta (2 + rho theta) / (1 + rho theta)^2 = (1 - (1 + rho theta)^-2) / rho
    a = 1.0 + rho * theta
    return (1.0 - a**-2) / rho, 2.0 / a**3, -6.0 * rho / a**4


def _log_sat(theta, rho):
    a = 1.0 + rho * theta
    lg = np.log1p(rho * theta)
    b = 1.0 + lg
    g1 = rho / (a * b**2)
    g2 = -(rho**2) * (b + 2.0) / (a**2 * b**3)
    return lg / b, g1, g2


@dataclass(frozen=True)
class SaturatedNonlinearity:
    """One saturated coefficient ``g~(theta)`` with its first two derivatives.

    ``custom`` takes a ``funcs`` triple of vectorised callables and has no
    known large-intensity limit.
    """

    family: str
    rho: float = 1.0
    cval: float = 0.0
    funcs: tuple[Callable, Callable, Callable] | None = field(
        default=None, compare=False
    )

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.family in ("photorefractive", "double_sat", "log_sat") and not self.rho > 0:
            raise ValueError(f"rho must be positive for {self.family}, got {self.rho}")
        if self.family == "custom" and (self.funcs is None or len(self.funcs) != 3):
            raise ValueError("custom family needs funcs=(g, g', g'')")

    def __call__(self, theta):
        return self.evaluate(theta)[0]

    def evaluate(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.family == "photorefractive":
            return _photorefractive(theta, self.rho)
        if self.family == "sqrt_gap":
            return _sqrt_gap(theta, self.rho)
        if self.family == "double_sat":
            return _double_sat(theta, self.rho)
        if self.family == "log_sat":
            return _log_sat(theta, self.rho)
        if self.family == "constant":
            c = np.full_like(theta, self.cval)
            return c, np.zeros_like(theta), np.zeros_like(theta)
        g, g1, g2 = self.funcs
        return (np.asarray(g(theta), float), np.asarray(g1(theta), float),
                np.asarray(g2(theta), float))

    def limit_at_infinity(self) -> float | None:
        """Analytic limit of the assumption expression as ``theta -> inf``."""
        return {
            "photorefractive": 1.0 / self.rho,
            "sqrt_gap": 1.0,
            "double_sat": 1.0 / self.rho,
            "log_sat": 1.0,
            "constant": self.cval,
        }.get(self.family)

    def sup_abs(self) -> float:
        """``sup |g~|`` over ``[0, inf)``."""
        if self.family == "constant":
            return abs(self.cval)
        if self.family in ("photorefractive", "double_sat"):
            return 1.0 / self.rho
        if self.family in ("sqrt_gap", "log_sat"):
            return 1.0
        theta = np.concatenate([[0.0], np.logspace(-8, 8, 4001)])
        return float(np.max(np.abs(self.evaluate(theta)[0])))


def gtilde_eval(g: SaturatedNonlinearity, theta):
    """Return ``(g~, g~', g~'')`` at ``theta >= 0``."""
    theta_arr = np.asarray(theta, dtype=float)
    if np.any(theta_arr < 0):
        raise ValueError("theta must be non-negative")
    vals = g.evaluate(theta_arr)
    if theta_arr.ndim == 0:
        return tuple(float(v) for v in vals)
    return vals


@dataclass(frozen=True)
class NoiseChannelSet:
    """The ``m`` noise coefficients ``g_j(y) = g~_j(|y|^2) y``."""

    channels: tuple[SaturatedNonlinearity, ...]

    def __post_init__(self):
        chans = tuple(self.channels)
        if not chans:
            raise ValueError("need at least one noise channel")
        object.__setattr__(self, "channels", chans)

    @classmethod
    def of(cls, *channels: SaturatedNonlinearity) -> "NoiseChannelSet":
        return cls(tuple(channels))

    @property
    def m(self) -> int:
        return len(self.channels)

    def values(self, intensity) -> np.ndarray:
        """Stack ``g~_j(intensity)`` along a trailing axis of length ``m``."""
        intensity = np.asarray(intensity, dtype=float)
        return np.stack([ch.evaluate(intensity)[0] for ch in self.channels], axis=-1)

    def phase(self, z, intensity):
        """``sum_j z_j g~_j(intensity)``; ``z`` broadcasts against ``intensity``."""
        z = np.asarray(z, dtype=float)
        intensity = np.asarray(intensity, dtype=float)
        total = np.zeros(np.broadcast_shapes(z.shape[:-1], intensity.shape))
        for j, ch in enumerate(self.channels):
            total = total + z[..., j] * ch.evaluate(intensity)[0]
        return total


def _assumption_expression(g, g1, g2, theta):
    return g + (1.0 + theta) * g1 + (1.0 + theta**1.5) * g2


def k_gtilde_estimate(channels: NoiseChannelSet, theta_max: float = 1e8,
                      samples: int = 4096) -> float:
    """Numerical supremum of the saturation bound over all channels.

    The sup runs over a log-spaced grid on ``[1e-8, theta_max]`` and is
    augmented with each family's analytic ``theta -> inf`` limit.  Custom
    families without a known limit are declared unbounded when the
    expression is still growing over the last decade of the grid.
    """
    if theta_max <= 0:
        raise ValueError("theta_max must be positive")
    if samples < 1000:
        raise ValueError("need at least 1000 samples")
    theta = np.logspace(-8, math.log10(theta_max), samples)
    best = -math.inf
    for ch in channels.channels:
        expr = _assumption_expression(*ch.evaluate(theta), theta)
        if not np.all(np.isfinite(expr)):
            raise AssumptionViolation(f"{ch.family}: bound expression is not finite")
        sup = float(np.max(expr))
        limit = ch.limit_at_infinity()
        if limit is None:
            tail = expr[theta >= theta_max / 10]
            if tail[-1] > tail[0] + 1e-6 * max(1.0, abs(tail[0])):
                raise AssumptionViolation(
                    f"{ch.family}: bound expression still increasing at theta={theta_max:g}"
                )
        else:
            sup = max(sup, limit)
        best = max(best, sup)
    return best


def log_phase_rate(amp, lam: float, eps: float, mu1, channels: NoiseChannelSet | None):
    """Real rate ``2 lam L_eps(|u|) + sum_j mu1_j g~_j(|u|^2)``."""
    rate = 2.0 * lam * _l_eps_raw(amp, eps)
    mu1 = np.asarray(mu1 if mu1 is not None else [], dtype=float)
    if channels is not None and mu1.size and np.any(mu1 != 0):
        if mu1.size != channels.m:
            raise ValueError(f"mu1 has length {mu1.size}, expected {channels.m}")
        rate = rate + channels.phase(mu1, amp**2)
    return rate


def apply_log_phase(u: Field, lam: float, dt: float, eps: float, mu1=None,
                    channels: NoiseChannelSet | None = None) -> Field:
    """Exact pointwise flow of the phase-only part of the drift over ``dt``."""
    eps = validate_eps(eps)
    amp = np.abs(u.values)
    rate = log_phase_rate(amp, lam, eps, mu1, channels)
    return Field(u.grid, np.exp(1j * dt * rate) * u.values)


def xlogx(x):
    """``x log x`` with the continuous extension 0 at ``x = 0``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = x[pos] * np.log(x[pos])
    return out


def log_nonlinearity(u: Field) -> Field:
    """Pointwise ``u log|u|^2`` (zero where ``u = 0``)."""
    intensity = np.abs(u.values) ** 2
    logs = np.zeros_like(intensity)
    pos = intensity > 0
    logs[pos] = np.log(intensity[pos])
    return Field(u.grid, u.values * logs)


def entropy_density(s):
    """``F(s) = -s^2 log(s^2)``, zero at the origin."""
    return -xlogx(np.asarray(s, dtype=float) ** 2)


def entropy_F(u: Field) -> float:
    return float(np.sum(entropy_density(np.abs(u.values))) * u.grid.cell_volume)


def orlicz_N(s):
    """Young function of the Orlicz space: entropic near 0, quadratic beyond ``e^-3``."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("orlicz_N expects non-negative arguments")
    small = s <= E3
    out = np.empty_like(s)
    out[small] = -xlogx(s[small] ** 2)
    big = s[~small]
    out[~small] = 3.0 * big**2 + 4.0 * E3 * big - E6
    return out if out.ndim else float(out)


def orlicz_integral(u: Field, k: float = 1.0) -> float:
    """``sum N(|u|/k) dx^d``."""
    return float(np.sum(orlicz_N(np.abs(u.values) / k)) * u.grid.cell_volume)


def luxembourg_norm(u: Field, rtol: float = 1e-10) -> float:
    """Luxembourg norm ``inf{k > 0 : int N(|u|/k) <= 1}``.

    Root of the strictly decreasing map ``k -> int N(|u|/k) - 1``, bracketed
    in ``log k`` and solved with Brent's method.
    """
    amp = np.abs(u.values).reshape(-1)
    peak = float(amp.max()) if amp.size else 0.0
    if peak == 0.0:
        return 0.0
    vol = u.grid.cell_volume

    def excess(logk):
        return float(np.sum(orlicz_N(amp / math.exp(logk))) * vol) - 1.0

    lo, hi = math.log(1e-12 * peak), math.log(1e12 * peak)
    while excess(lo) <= 0:
        lo -= 10.0
    while excess(hi) >= 0:
        hi += 10.0
    logk = brentq(excess, lo, hi, xtol=rtol / 4, rtol=4 * np.finfo(float).eps, maxiter=500)
    return math.exp(logk)


def w_norm(u: Field) -> float:
    """Energy-space norm ``||u||_H1 + ||u||_V``."""
    return h1_norm(u) + luxembourg_norm(u)


def energy(u: Field, lam: float) -> float:
    """``1/2 ||grad u||^2 - lam/2 int |u|^2 log|u|^2``."""
    potential = np.sum(xlogx(np.abs(u.values) ** 2)) * u.grid.cell_volume
    return float(0.5 * grad_norm_sq(u) - 0.5 * lam * potential)
