"""Bohmian guidance field, pair-trajectory integration and the centre-of-mass law."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from . import _backend
from .wavepacket import PhysicalParams, joint_amplitude, joint_density, joint_gradient, normalization_constant


class NodeProximity(ArithmeticError):
    """|psi|^2 is below the node threshold, so the velocity is ill-conditioned."""


class PhasePoint(NamedTuple):
    y1: float
    y2: float
    t: float = 0.0


@dataclass(frozen=True)
class IntegratorSettings:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = math.inf
    node_eps: float = 1e-12

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "max_step", "node_eps"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be > 0, got {value!r}")


STATUS_NAMES = {
    _backend.COMPLETED: "completed",
    _backend.NODE_ABORT: "node_adjacent_abort",
    _backend.STEP_UNDERFLOW: "node_adjacent_abort",
    _backend.STEP_LIMIT: "node_adjacent_abort",
}
REASONS = {
    _backend.COMPLETED: None,
    _backend.NODE_ABORT: "node_proximity",
    _backend.STEP_UNDERFLOW: "step_underflow",
    _backend.STEP_LIMIT: "step_limit",
}


@dataclass
class Trajectory:
    """Accepted integration steps of one pair, stored column-wise."""

    t: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    status: str = "completed"
    reason: str | None = None
    step_speed: np.ndarray = field(default=None, repr=False)

    @property
    def samples(self) -> list[PhasePoint]:
        return [PhasePoint(float(a), float(b), float(t)) for t, a, b in zip(self.t, self.y1, self.y2)]

    @property
    def final(self) -> PhasePoint:
        return PhasePoint(float(self.y1[-1]), float(self.y2[-1]), float(self.t[-1]))

    def __len__(self):
        return len(self.t)


def kernel_consts(params: PhysicalParams) -> tuple:
    return (params.hbar, params.m, params.sigma0, params.Y, params.ky, normalization_constant(params))


def diagnostic_half_width(params: PhysicalParams, t: float, n_widths: float = 6.0) -> float:
    """Half-width of the square box that holds essentially all of |psi(t)|^2."""
    return abs(params.centre(t)) + n_widths * params.width(t)


def peak_density(params: PhysicalParams, t: float, n: int = 65) -> float:
    """Maximum of |psi(t)|^2 over a coarse n x n grid of the diagnostic box."""
    half = diagnostic_half_width(params, t)
    axis = np.linspace(-half, half, n)
    return float(np.max(joint_density(axis[:, None], axis[None, :], t, params)))


def peak_table(params: PhysicalParams, t_start: float, t_final: float, n: int = 65):
    """Peak densities on a uniform time grid, linearly interpolated by the kernels."""
    times = np.linspace(t_start, t_final, n)
    return times, np.array([peak_density(params, t) for t in times])


def velocity_field(p: PhasePoint, params: PhysicalParams, node_eps: float = 1e-12, peak: float | None = None):
    """Guidance velocities (v1, v2) = (hbar/m) Im(grad_k psi / psi).

    Reference path built on the analytic gradients of :mod:`wavepacket`;
    the integration kernels evaluate the same field independently.
    """
    if peak is None:
        peak = peak_density(params, p.t)
    psi = joint_amplitude(p.y1, p.y2, p.t, params)
    dens = abs(psi) ** 2
    if not dens > node_eps * peak:
        raise NodeProximity(f"|psi|^2={dens:.3e} below {node_eps:g} x peak {peak:.3e} at {tuple(p)}")
    g1, g2 = joint_gradient(p.y1, p.y2, p.t, params)
    scale = params.hbar / params.m
    return float(scale * (g1 / psi).imag), float(scale * (g2 / psi).imag)


def com_velocity(p: PhasePoint, params: PhysicalParams) -> float:
    """Closed-form centre-of-mass velocity for the Gaussian two-slit state."""
    r = params.spread_rate()
    y = 0.5 * (p.y1 + p.y2)
    return r * r * y * p.t / (1.0 + r * r * p.t * p.t)


def com_oracle(y0, t, params: PhysicalParams):
    """Closed-form centre of mass y(t) = y(0) sqrt(1 + (hbar t / 2 m sigma0^2)^2)."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be >= 0")
    r = params.spread_rate()
    return np.asarray(y0) * np.sqrt(1.0 + (r * np.asarray(t)) ** 2)


def integrate_pair(start: PhasePoint, t_final: float, settings: IntegratorSettings | None = None,
                   params: PhysicalParams | None = None, backend: str | None = None) -> Trajectory:
    """Integrate one pair with adaptive Dormand-Prince 5(4), recording every accepted step.

    Raises :class:`NodeProximity` if the start point itself is node-adjacent.
    A step underflow or persistent node proximity mid-flight returns the
    partial trajectory with status ``node_adjacent_abort``.
    """
    settings = settings or IntegratorSettings()
    params = params or PhysicalParams()
    if not t_final > start.t:
        raise ValueError(f"t_final={t_final} must exceed start.t={start.t}")
    if start.t < 0:
        raise ValueError("start.t must be >= 0")
    kern = _backend.get(backend)
    consts = kernel_consts(params)
    pt, pv = peak_table(params, start.t, t_final)
    _, _, d0 = kern.velocity_density(start.y1, start.y2, start.t, consts)
    if not d0 >= settings.node_eps * pv[0]:
        raise NodeProximity(f"start point {tuple(start)} is node-adjacent")
    _, _, status, _, rec = kern.integrate_batch(
        np.array([start.y1]), np.array([start.y2]), float(start.t), float(t_final),
        settings.rel_tol, settings.abs_tol, settings.max_step, settings.node_eps,
        consts, pt, pv, record=True,
    )
    code = int(status[0])
    return Trajectory(rec["t"], rec["y1"], rec["y2"], rec["v1"], rec["v2"],
                      status=STATUS_NAMES[code], reason=REASONS[code], step_speed=rec["vmax"])


def write_trajectories_csv(path, trajectories: Iterable[Trajectory]) -> None:
    """Concatenated trajectory dump with a pair_id column."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pair_id", "t", "y1", "y2", "v1", "v2"])
        for pid, tr in enumerate(trajectories):
            for row in zip(tr.t, tr.y1, tr.y2, tr.v1, tr.v2):
                w.writerow([pid, *(repr(float(x)) for x in row)])
