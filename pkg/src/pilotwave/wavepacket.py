"""Symmetrized two-particle Gaussian wavefunction behind a double slit.

Only the transverse (y) motion is modelled. Each slit emits a freely
spreading Gaussian packet; particles 1 and 2 share the bosonic state

    psi(y1, y2, t) = N [psi_A(y1, t) psi_B(y2, t) + psi_B(y1, t) psi_A(y2, t)]

with psi_B(y, t) = psi_A(-y, t). All functions accept numpy arrays and
broadcast over their coordinate arguments.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass

import numpy as np

from .quadrature import adaptive_simpson

__all__ = [
    "PacketLabel",
    "PhysicalParams",
    "joint_amplitude",
    "joint_density",
    "joint_gradient",
    "normalization_constant",
    "packet_amplitude",
    "packet_gradient_y",
    "sigma_t",
]


class PacketLabel(enum.Enum):
    A = "A"
    B = "B"


@dataclass(frozen=True)
class PhysicalParams:
    """Physical constants and slit geometry (natural units by default)."""

    hbar: float = 1.0
    m: float = 1.0
    sigma0: float = 1.0
    Y: float = 5.0
    ky: float = 0.0
    t0: float = 10.0

    def __post_init__(self):
        for name in ("hbar", "m", "sigma0", "Y", "ky", "t0"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        for name in ("hbar", "m", "sigma0"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)!r}")
        # Y = 0 (coincident slits) is kept legal: it is the psi_A == psi_B limit.
        if self.Y < 0:
            raise ValueError(f"Y must be >= 0, got {self.Y!r}")
        if self.t0 < 0:
            raise ValueError(f"t0 must be >= 0, got {self.t0!r}")

    @property
    def uy(self) -> float:
        """Transverse group velocity hbar*ky/m."""
        return self.hbar * self.ky / self.m

    def spread_rate(self) -> float:
        """hbar / (2 m sigma0^2), the inverse spreading time of a packet."""
        return self.hbar / (2.0 * self.m * self.sigma0**2)

    def centre(self, t) -> float:
        """Position of the packet-A peak at time t."""
        return self.Y + self.uy * t

    def width(self, t) -> float:
        """|sigma_t|, the position-space standard deviation of one packet."""
        return abs(sigma_t(self, t))


def sigma_t(params: PhysicalParams, t):
    """Complex packet width sigma0 * (1 + i hbar t / (2 m sigma0^2))."""
    return params.sigma0 * (1.0 + 1j * params.spread_rate() * np.asarray(t, dtype=float))


def _exponent_a(z, t, params):
    # log psi_A(z, t) without the (2 pi sigma_t^2)^(-1/4) prefactor
    s0st = params.sigma0 * sigma_t(params, t)
    shifted = z - params.Y - params.uy * t
    return -(shifted**2) / (4.0 * s0st) + 1j * params.ky * (z - params.Y - 0.5 * params.uy * t)


def _prefactor(t, params):
    st = sigma_t(params, t)
    return (2.0 * np.pi * st**2) ** -0.25


def packet_amplitude(label: PacketLabel, y, t, params: PhysicalParams):
    """Single-slit packet psi_A(y, t) or psi_B(y, t) = psi_A(-y, t)."""
    y = np.asarray(y, dtype=float)
    z = y if PacketLabel(label) is PacketLabel.A else -y
    return _prefactor(t, params) * np.exp(_exponent_a(z, t, params))


def packet_gradient_y(label: PacketLabel, y, t, params: PhysicalParams):
    """Exact d/dy of :func:`packet_amplitude`."""
    y = np.asarray(y, dtype=float)
    sign = 1.0 if PacketLabel(label) is PacketLabel.A else -1.0
    z = sign * y
    s0st = params.sigma0 * sigma_t(params, t)
    dlog = -(z - params.Y - params.uy * t) / (2.0 * s0st) + 1j * params.ky
    return sign * dlog * packet_amplitude(PacketLabel.A, z, t, params)


def overlap(params: PhysicalParams, tol: float = 1e-10) -> complex:
    """s = integral of conj(psi_A) psi_B over y at t = 0 (adaptive Simpson)."""
    lo = -params.Y - 10.0 * params.sigma0
    hi = params.Y + 10.0 * params.sigma0

    def integrand(y):
        return np.conj(packet_amplitude(PacketLabel.A, y, 0.0, params)) * packet_amplitude(
            PacketLabel.B, y, 0.0, params
        )

    return complex(adaptive_simpson(integrand, lo, hi, tol=tol))


@functools.lru_cache(maxsize=256)
def normalization_constant(params: PhysicalParams) -> float:
    """N = 1 / sqrt(2 (1 + |s|^2)) with the packet overlap s from quadrature."""
    s = overlap(params)
    return 1.0 / math.sqrt(2.0 * (1.0 + abs(s) ** 2))


def joint_amplitude(y1, y2, t, params: PhysicalParams):
    """Bosonic two-particle amplitude psi(y1, y2, t)."""
    a1 = packet_amplitude(PacketLabel.A, y1, t, params)
    b1 = packet_amplitude(PacketLabel.B, y1, t, params)
    a2 = packet_amplitude(PacketLabel.A, y2, t, params)
    b2 = packet_amplitude(PacketLabel.B, y2, t, params)
    return normalization_constant(params) * (a1 * b2 + b1 * a2)


def joint_density(y1, y2, t, params: PhysicalParams):
    """|psi(y1, y2, t)|^2, the joint detection density."""
    psi = joint_amplitude(y1, y2, t, params)
    return psi.real**2 + psi.imag**2


def joint_gradient(y1, y2, t, params: PhysicalParams):
    """Analytic (d psi / d y1, d psi / d y2)."""
    a1 = packet_amplitude(PacketLabel.A, y1, t, params)
    b1 = packet_amplitude(PacketLabel.B, y1, t, params)
    a2 = packet_amplitude(PacketLabel.A, y2, t, params)
    b2 = packet_amplitude(PacketLabel.B, y2, t, params)
    da1 = packet_gradient_y(PacketLabel.A, y1, t, params)
    db1 = packet_gradient_y(PacketLabel.B, y1, t, params)
    da2 = packet_gradient_y(PacketLabel.A, y2, t, params)
    db2 = packet_gradient_y(PacketLabel.B, y2, t, params)
    n = normalization_constant(params)
    return n * (da1 * b2 + db1 * a2), n * (a1 * db2 + b1 * da2)
