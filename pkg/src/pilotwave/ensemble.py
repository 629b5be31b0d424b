"""Ensembles of pair configurations: sampling, evolution and equivariance checks."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import _backend
from .guidance import (
    STATUS_NAMES,
    IntegratorSettings,
    PhasePoint,
    diagnostic_half_width,
    kernel_consts,
    peak_table,
)
from .quadrature import gauss_legendre_panels
from .rng import master_key, pair_stream
from .wavepacket import PacketLabel, PhysicalParams, joint_density, packet_amplitude

CONSTRAINTS = ("equilibrium", "antidiagonal")
MAX_ABORT_FRACTION = 1e-3
HIST_BINS = 64
CHUNK = 512
_BLOCK = 8


class EnvelopeViolation(RuntimeError):
    """Target density exceeded the rejection envelope."""


class AbortFractionExceeded(RuntimeError):
    """Too many trajectories ended node-adjacent; ``arrivals`` holds the run."""

    def __init__(self, message, arrivals):
        super().__init__(message)
        self.arrivals = arrivals


@dataclass(frozen=True)
class EnsembleConfig:
    n_pairs: int = 100_000
    master_seed: int = 20240607
    constraint: str = "equilibrium"

    def __post_init__(self):
        if self.n_pairs < 1:
            raise ValueError(f"n_pairs must be >= 1, got {self.n_pairs}")
        if self.constraint not in CONSTRAINTS:
            raise ValueError(f"constraint must be one of {CONSTRAINTS}, got {self.constraint!r}")


@dataclass
class PointSet:
    """Pair configurations (y1[i], y2[i]) at a common time t."""

    y1: np.ndarray
    y2: np.ndarray
    t: float = 0.0

    def __len__(self):
        return len(self.y1)

    def __iter__(self) -> Iterator[PhasePoint]:
        for a, b in zip(self.y1, self.y2):
            yield PhasePoint(float(a), float(b), self.t)

    @classmethod
    def from_points(cls, points) -> "PointSet":
        points = list(points)
        ts = {p.t for p in points}
        if len(ts) != 1:
            raise ValueError("points must share a common time")
        return cls(np.array([p.y1 for p in points], float), np.array([p.y2 for p in points], float), ts.pop())


@dataclass
class ArrivalSet:
    """Evolved pairs. Aborted pairs are kept (with their last position) but excluded from ``points``."""

    y1_0: np.ndarray
    y2_0: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    t: float
    status: np.ndarray = field(repr=False)
    t_start: float = 0.0

    @property
    def completed(self) -> np.ndarray:
        return self.status == _backend.COMPLETED

    @property
    def aborted_count(self) -> int:
        return int(np.count_nonzero(~self.completed))

    @property
    def points(self) -> PointSet:
        ok = self.completed
        return PointSet(self.y1[ok], self.y2[ok], self.t)

    def __len__(self):
        return len(self.y1)


def _rejection_loop(cfg, draw, ratio):
    """Per-pair rejection sampling with blocks of _BLOCK proposals per round.

    ``draw(gen)`` returns (proposals[_BLOCK, d], uniforms[_BLOCK]) from one
    pair's stream; ``ratio(proposals)`` gives target / envelope in [0, 1].
    """
    key = master_key(cfg.master_seed)
    streams = [pair_stream(cfg.master_seed, i, key) for i in range(cfg.n_pairs)]
    n = cfg.n_pairs
    out = None
    pending = np.arange(n)
    while pending.size:
        props, us = zip(*(draw(streams[i]) for i in pending))
        props = np.stack(props)  # (k, BLOCK, d)
        us = np.stack(us)
        r = ratio(props.reshape(-1, props.shape[-1])).reshape(us.shape)
        worst = float(np.max(r))
        if worst > 1.0 + 1e-12:
            raise EnvelopeViolation(f"target/envelope ratio {worst!r} > 1")
        ok = us < r
        if out is None:
            out = np.empty((n, props.shape[-1]))
        hit = ok.any(axis=1)
        first = np.argmax(ok, axis=1)
        rows = np.flatnonzero(hit)
        out[pending[rows]] = props[rows, first[rows]]
        pending = pending[~hit]
    return out


def sample_equilibrium(cfg: EnsembleConfig, params: PhysicalParams) -> PointSet:
    """Exact draws from |psi(y1, y2, 0)|^2.

    The proposal is the equal mixture of the two Gaussian products; since
    |a + b|^2 <= 2(|a|^2 + |b|^2) the acceptance probability is
    |a + b|^2 / (2(|a|^2 + |b|^2)).
    """
    if cfg.constraint != "equilibrium":
        raise ValueError("sample_equilibrium needs constraint='equilibrium'")
    Y, s0 = params.Y, params.sigma0

    def draw(g):
        swap = g.random(_BLOCK) < 0.5
        z = g.standard_normal((_BLOCK, 2)) * s0
        u = g.random(_BLOCK)
        sign = np.where(swap, -1.0, 1.0)
        return np.column_stack([sign * Y + z[:, 0], -sign * Y + z[:, 1]]), u

    def ratio(p):
        y1, y2 = p[:, 0], p[:, 1]
        a = packet_amplitude(PacketLabel.A, y1, 0.0, params) * packet_amplitude(PacketLabel.B, y2, 0.0, params)
        b = packet_amplitude(PacketLabel.B, y1, 0.0, params) * packet_amplitude(PacketLabel.A, y2, 0.0, params)
        return np.abs(a + b) ** 2 / (2.0 * (np.abs(a) ** 2 + np.abs(b) ** 2))

    pts = _rejection_loop(cfg, draw, ratio)
    return PointSet(pts[:, 0].copy(), pts[:, 1].copy(), 0.0)


def sample_constrained(cfg: EnsembleConfig, params: PhysicalParams) -> PointSet:
    """Draws conditioned on y1 + y2 = 0: y1 ~ |psi(y, -y, 0)|^2, y2 = -y1."""
    if cfg.constraint != "antidiagonal":
        raise ValueError("sample_constrained needs constraint='antidiagonal'")
    Y, s0 = params.Y, params.sigma0

    def draw(g):
        swap = g.random(_BLOCK) < 0.5
        z = g.standard_normal(_BLOCK) * (s0 / math.sqrt(2.0))
        u = g.random(_BLOCK)
        return (np.where(swap, -Y, Y) + z)[:, None], u

    def ratio(p):
        y = p[:, 0]
        a = packet_amplitude(PacketLabel.A, y, 0.0, params) ** 2
        b = packet_amplitude(PacketLabel.A, -y, 0.0, params) ** 2
        return np.abs(a + b) ** 2 / (2.0 * (np.abs(a) ** 2 + np.abs(b) ** 2))

    y = _rejection_loop(cfg, draw, ratio)[:, 0]
    return PointSet(y.copy(), -y, 0.0)


def sample(cfg: EnsembleConfig, params: PhysicalParams) -> PointSet:
    if cfg.constraint == "equilibrium":
        return sample_equilibrium(cfg, params)
    return sample_constrained(cfg, params)


def com_spread(points) -> float:
    """Sample standard deviation of the centre of mass (y1 + y2) / 2."""
    if not isinstance(points, (PointSet, ArrivalSet)):
        points = PointSet.from_points(points)
    if isinstance(points, ArrivalSet):
        points = points.points
    if len(points) < 2:
        raise ValueError("need at least two points")
    return float(np.std(0.5 * (points.y1 + points.y2), ddof=1))


def evolve_ensemble(points, t_final: float, settings: IntegratorSettings | None = None,
                    cfg: EnsembleConfig | None = None, params: PhysicalParams | None = None,
                    workers: int = 1, backend: str | None = None, chunk: int = CHUNK,
                    max_abort_fraction: float = MAX_ABORT_FRACTION) -> ArrivalSet:
    """Integrate every pair to ``t_final``.

    Pairs are split into fixed ``chunk``-sized slices by index, so the output
    is identical for any ``workers``. ``cfg`` is accepted for provenance only;
    evolution draws no random numbers.
    """
    settings = settings or IntegratorSettings()
    params = params or PhysicalParams()
    if not isinstance(points, PointSet):
        points = PointSet.from_points(points)
    if not t_final > points.t:
        raise ValueError(f"t_final={t_final} must exceed the ensemble time {points.t}")
    kern = _backend.get(backend)
    consts = kernel_consts(params)
    pt, pv = peak_table(params, points.t, t_final)
    n = len(points)
    bounds = [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]

    def run(span):
        lo, hi = span
        return kern.integrate_batch(points.y1[lo:hi], points.y2[lo:hi], float(points.t), float(t_final),
                                    settings.rel_tol, settings.abs_tol, settings.max_step, settings.node_eps,
                                    consts, pt, pv)

    if workers <= 1:
        parts = [run(b) for b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, bounds))

    arrivals = ArrivalSet(
        y1_0=points.y1.copy(), y2_0=points.y2.copy(),
        y1=np.concatenate([p[0] for p in parts]), y2=np.concatenate([p[1] for p in parts]),
        t=float(t_final), status=np.concatenate([p[2] for p in parts]), t_start=float(points.t),
    )
    frac = arrivals.aborted_count / n
    if frac >= max_abort_fraction:
        raise AbortFractionExceeded(
            f"{arrivals.aborted_count}/{n} trajectories aborted near nodes (limit {max_abort_fraction:g})", arrivals)
    return arrivals


def histogram_grid(params: PhysicalParams, t: float, bins: int = HIST_BINS) -> np.ndarray:
    """Bin edges of the square diagnostic grid at time t."""
    half = diagnostic_half_width(params, t)
    return np.linspace(-half, half, bins + 1)


def binned_model(params: PhysicalParams, t: float, bins: int = HIST_BINS, order: int = 6) -> np.ndarray:
    """|psi(t)|^2 integrated over every grid cell (Gauss-Legendre per cell)."""
    edges = histogram_grid(params, t, bins)
    nodes, weights = gauss_legendre_panels(edges[0], edges[-1], bins, order)
    dens = joint_density(nodes[:, None], nodes[None, :], t, params)
    w = weights[:, None] * weights[None, :]
    return (dens * w).reshape(bins, order, bins, order).sum(axis=(1, 3))


def histogram_counts(pts: PointSet, edges: np.ndarray) -> np.ndarray:
    counts, _, _ = np.histogram2d(pts.y1, pts.y2, bins=[edges, edges])
    return counts.astype(np.int64)


def equivariance_distance(arrivals, params: PhysicalParams, bins: int = HIST_BINS) -> float:
    """Total-variation distance between the arrival histogram and binned |psi(t)|^2.

    Mass outside the grid (sample and model) counts as one extra cell.
    """
    pts = arrivals.points if isinstance(arrivals, ArrivalSet) else arrivals
    edges = histogram_grid(params, pts.t, bins)
    counts = histogram_counts(pts, edges)
    n = len(pts)
    model = binned_model(params, pts.t, bins)
    emp = counts / n
    tv = np.abs(emp - model).sum() + abs((1.0 - emp.sum()) - (1.0 - model.sum()))
    return 0.5 * float(tv)


def mc_bound(n: int, bins: int = HIST_BINS, c: float = 2.0) -> float:
    """Monte Carlo scale c * sqrt(B / n) for the histogram TV distance."""
    return c * math.sqrt(bins * bins / n)


def write_arrivals_csv(path, arrivals: ArrivalSet) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pair_id", "y1_0", "y2_0", "y1_t", "y2_t", "status"])
        for i in range(len(arrivals)):
            w.writerow([i, repr(float(arrivals.y1_0[i])), repr(float(arrivals.y2_0[i])),
                        repr(float(arrivals.y1[i])), repr(float(arrivals.y2[i])),
                        STATUS_NAMES[int(arrivals.status[i])]])


def write_histogram_csv(path, arrivals, params: PhysicalParams, bins: int = HIST_BINS) -> None:
    pts = arrivals.points if isinstance(arrivals, ArrivalSet) else arrivals
    edges = histogram_grid(params, pts.t, bins)
    counts = histogram_counts(pts, edges)
    model = binned_model(params, pts.t, bins)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_y1_lo", "bin_y2_lo", "count", "model_prob"])
        for i in range(bins):
            for j in range(bins):
                w.writerow([repr(float(edges[i])), repr(float(edges[j])), int(counts[i, j]), repr(float(model[i, j]))])
