"""Marcus jump map for saturated coefficients.

The flow ``dPhi/ds = -i sum_j z_j g_j(Phi)`` keeps ``|Phi|`` fixed, so it is
the phase rotation ``Phi(s, z, y) = exp(-i s theta) y`` with
``theta = sum_j z_j g~_j(|y|^2)``.  All functions broadcast over a trailing
mark axis of length ``m`` on ``z`` and over the shape of ``y``.
"""

from __future__ import annotations

import numpy as np

from .grid import Field
from .nonlinearity import NoiseChannelSet

__all__ = [
    "check_mark",
    "jump_phase",
    "phi_closed",
    "phi_ode",
    "jump_increment_G",
    "compensator_H",
    "apply_jump",
]


def check_mark(z, m: int | None = None) -> np.ndarray:
    """Validate marks ``0 < |z| <= 1``; returns a float array."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if m is not None and z.shape[-1] != m:
        raise ValueError(f"mark has {z.shape[-1]} components, expected {m}")
    norms = np.linalg.norm(z, axis=-1)
    if np.any(norms <= 0) or np.any(norms > 1 + 1e-12):
        raise ValueError("marks must satisfy 0 < |z| <= 1")
    return z


def jump_phase(z, y, channels: NoiseChannelSet):
    """``theta = sum_j z_j g~_j(|y|^2)``."""
    return channels.phase(z, np.abs(y) ** 2)


def phi_closed(s, z, y, channels: NoiseChannelSet):
    """Closed-form Marcus flow ``exp(-i s theta) y``."""
    z = check_mark(z, channels.m)
    y = np.asarray(y, dtype=complex)
    return np.exp(-1j * np.asarray(s, dtype=float) * jump_phase(z, y, channels)) * y


def phi_ode(s, z, y, channels: NoiseChannelSet, nsteps: int = 256):
    """Classical RK4 integration of the defining ODE on ``[0, s]``.

    Independent of :func:`phi_closed`: it never uses modulus conservation.
    """
    if nsteps < 16:
        raise ValueError("nsteps must be at least 16")
    z = check_mark(z, channels.m)
    phi = np.array(y, dtype=complex)
    h = np.asarray(s, dtype=float) / nsteps

    def rhs(p):
        return -1j * channels.phase(z, np.abs(p) ** 2) * p

    for _ in range(nsteps):
        k1 = rhs(phi)
        k2 = rhs(phi + 0.5 * h * k1)
        k3 = rhs(phi + 0.5 * h * k2)
        k4 = rhs(phi + h * k3)
        phi = phi + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return phi


def jump_increment_G(z, y, channels: NoiseChannelSet, s=1.0):
    """``Phi(s, z, y) - y``."""
    z = check_mark(z, channels.m)
    y = np.asarray(y, dtype=complex)
    theta = np.asarray(s, dtype=float) * jump_phase(z, y, channels)
    # exp(-i theta) - 1 = -2 sin^2(theta/2) - i sin(theta), no cancellation at small theta
    return (-2.0 * np.sin(0.5 * theta) ** 2 - 1j * np.sin(theta)) * y


def compensator_H(z, y, channels: NoiseChannelSet, s=1.0):
    """``Phi(s, z, y) - y + i sum_j z_j g_j(y)``.

    With ``theta`` the jump phase this is ``(exp(-i s theta) - 1 + i theta) y``.
    """
    z = check_mark(z, channels.m)
    y = np.asarray(y, dtype=complex)
    theta = jump_phase(z, y, channels)
    st = np.asarray(s, dtype=float) * theta
    small = np.abs(st) < 1e-3
    # st - sin(st) by its Taylor series where the direct form cancels
    st_minus_sin = np.where(
        small,
        st**3 / 6.0 - st**5 / 120.0 + st**7 / 5040.0,
        st - np.sin(st),
    )
    imag = st_minus_sin + (theta - st)
    return (-2.0 * np.sin(0.5 * st) ** 2 + 1j * imag) * y


def apply_jump(u: Field, z, channels: NoiseChannelSet) -> Field:
    """Apply the time-one Marcus map pointwise to a field."""
    return Field(u.grid, phi_closed(1.0, z, u.values, channels))
