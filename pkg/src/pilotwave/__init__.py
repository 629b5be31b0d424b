"""Two-particle two-slit Bohmian trajectory simulator."""

from ._backend import NAME as BACKEND
from .wavepacket import (
    PacketLabel,
    PhysicalParams,
    joint_amplitude,
    joint_density,
    normalization_constant,
    packet_amplitude,
    packet_gradient_y,
    sigma_t,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "PacketLabel",
    "PhysicalParams",
    "joint_amplitude",
    "joint_density",
    "normalization_constant",
    "packet_amplitude",
    "packet_gradient_y",
    "sigma_t",
]
