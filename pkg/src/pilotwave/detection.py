"""Joint-detection statistics: quantum window probabilities vs. Bohmian coincidence counts."""

from __future__ import annotations

import functools
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate, stats

from .ensemble import ArrivalSet, PointSet
from .quadrature import QuadratureError, gauss_legendre_panels
from .wavepacket import PacketLabel, PhysicalParams, joint_density, normalization_constant, packet_amplitude

Z_THRESHOLD = 3.0
KS_ALPHA = 1e-3
KS_COEFF = 1.949  # asymptotic two-sided KS critical coefficient at alpha = 1e-3


@dataclass(frozen=True)
class DetectorWindow:
    """Half-open detector interval [lo, lo + width)."""

    lo: float
    width: float

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError(f"window width must be > 0, got {self.width!r}")

    @property
    def hi(self) -> float:
        return self.lo + self.width

    def contains(self, y):
        y = np.asarray(y)
        return (y >= self.lo) & (y < self.hi)

    def mirrored(self) -> "DetectorWindow":
        return DetectorWindow(-self.hi, self.width)

    def intersect(self, other: "DetectorWindow") -> "DetectorWindow | None":
        lo, hi = max(self.lo, other.lo), min(self.hi, other.hi)
        return DetectorWindow(lo, hi - lo) if hi > lo else None


@dataclass(frozen=True)
class CoincidenceResult:
    hits: int
    n: int
    p_hat: float
    se: float


@dataclass(frozen=True)
class ComparisonVerdict:
    sqm_p: float
    bm: CoincidenceResult
    z: float
    agrees: bool


@dataclass(frozen=True)
class MeanEstimate:
    value: float
    se: float
    n: int


@dataclass(frozen=True)
class KSResult:
    statistic: float
    critical: float
    n: int

    @property
    def rejects(self) -> bool:
        return self.statistic > self.critical


def _support(params: PhysicalParams, t: float, n_widths: float = 40.0):
    half = abs(params.centre(t)) + n_widths * params.width(t)
    return -half, half


def _packet_integral(f, lo, hi, params, t, tol):
    s_lo, s_hi = _support(params, t)
    lo, hi = max(lo, s_lo), min(hi, s_hi)
    if hi <= lo:
        return 0.0
    c = abs(params.centre(t))
    points = [p for p in (-c, c) if lo < p < hi] or None
    value, abserr, *rest = integrate.quad(f, lo, hi, epsabs=tol, epsrel=0.0, limit=400, points=points,
                                          complex_func=True, full_output=1)
    if abs(abserr) > 10 * tol:
        raise QuadratureError(f"window integral on [{lo}, {hi}] did not converge (err {abs(abserr):.2e})")
    return value


@functools.lru_cache(maxsize=4096)
def _window_moments(lo: float, hi: float, t: float, params: PhysicalParams, tol: float):
    """(int |A|^2, int |B|^2, int A conj(B)) over [lo, hi)."""

    def aa(y):
        return abs(packet_amplitude(PacketLabel.A, y, t, params)) ** 2

    def bb(y):
        return abs(packet_amplitude(PacketLabel.B, y, t, params)) ** 2

    def ab(y):
        return complex(packet_amplitude(PacketLabel.A, y, t, params) * np.conj(packet_amplitude(PacketLabel.B, y, t, params)))

    return (
        float(np.real(_packet_integral(aa, lo, hi, params, t, tol))),
        float(np.real(_packet_integral(bb, lo, hi, params, t, tol))),
        complex(_packet_integral(ab, lo, hi, params, t, tol)),
    )


def _rectangle_mass(wa, wb, t, params, tol):
    """Mass of wa x wb under |psi|^2; the integrand separates into 1D packet moments."""
    aa1, bb1, ab1 = _window_moments(wa.lo, wa.hi, t, params, tol)
    aa2, bb2, ab2 = _window_moments(wb.lo, wb.hi, t, params, tol)
    n2 = normalization_constant(params) ** 2
    return n2 * (aa1 * bb2 + bb1 * aa2 + 2.0 * (ab1 * np.conj(ab2)).real)


def sqm_window_probability(w1: DetectorWindow, w2: DetectorWindow, t0: float, params: PhysicalParams,
                           quad_tol: float = 1e-8) -> float:
    """Probability that one particle lands in w1 and the other in w2 at time t0.

    Detection is unordered: the mass of (w1 x w2) U (w2 x w1).
    """
    if t0 < 0:
        raise ValueError("t0 must be >= 0")
    tol = quad_tol / 20.0
    p = 2.0 * _rectangle_mass(w1, w2, t0, params, tol)
    common = w1.intersect(w2)
    if common is not None:
        p -= _rectangle_mass(common, common, t0, params, tol)
    return float(p)


def ordered_window_probability(w1, w2, t0, params, quad_tol: float = 1e-8) -> float:
    """Mass of w1 x w2 alone (particle 1 in w1, particle 2 in w2)."""
    return float(_rectangle_mass(w1, w2, t0, params, quad_tol / 20.0))


def _as_points(arrivals) -> PointSet:
    return arrivals.points if isinstance(arrivals, ArrivalSet) else arrivals


def coincidence_indicators(arrivals, w1: DetectorWindow, w2: DetectorWindow) -> np.ndarray:
    pts = _as_points(arrivals)
    in11, in12 = w1.contains(pts.y1), w2.contains(pts.y1)
    in21, in22 = w1.contains(pts.y2), w2.contains(pts.y2)
    return (in11 & in22) | (in12 & in21)


def bm_coincidence_fraction(arrivals, w1: DetectorWindow, w2: DetectorWindow) -> CoincidenceResult:
    hits_mask = coincidence_indicators(arrivals, w1, w2)
    n = hits_mask.size
    hits = int(np.count_nonzero(hits_mask))
    p_hat = hits / n
    return CoincidenceResult(hits, n, p_hat, math.sqrt(p_hat * (1.0 - p_hat) / n))


def compare(sqm_p: float, bm: CoincidenceResult, threshold: float = Z_THRESHOLD) -> ComparisonVerdict:
    if bm.n < 100:
        raise ValueError(f"need at least 100 pairs for a verdict, got {bm.n}")
    diff = bm.p_hat - sqm_p
    if bm.se > 0:
        z = diff / bm.se
    elif diff == 0:
        z = 0.0
    else:
        z = math.copysign(math.inf, diff)
    return ComparisonVerdict(sqm_p, bm, z, abs(z) <= threshold)


def mean_estimate(values) -> MeanEstimate:
    values = np.asarray(values, dtype=float)
    n = values.size
    se = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    return MeanEstimate(float(np.mean(values)), se, n)


def ghose_p_star(arrivals, params: PhysicalParams, tol: float = 1e-6) -> MeanEstimate:
    """Average of |psi(y1, -y1, t)|^2 over a constrained (y1 + y2 = 0) ensemble."""
    pts = _as_points(arrivals)
    if np.max(np.abs(pts.y1 + pts.y2), initial=0.0) > tol * params.sigma0:
        raise ValueError("ghose_p_star expects an antidiagonal (y1 + y2 = 0) ensemble")
    return mean_estimate(joint_density(pts.y1, -pts.y1, pts.t, params))


@functools.lru_cache(maxsize=64)
def _marginal_table(params: PhysicalParams, t: float, n_panels: int = 8192, order: int = 4):
    half = abs(params.centre(t)) + 12.0 * params.width(t)
    # y2 moments over the full line
    full_aa, full_bb, full_ab = _window_moments(-math.inf, math.inf, t, params, 1e-13)
    nodes, weights = gauss_legendre_panels(-half, half, n_panels, order)
    dens = marginal_density(nodes, t, params, (full_aa, full_bb, full_ab))
    per_panel = (dens * weights).reshape(n_panels, order).sum(axis=1)
    edges = np.linspace(-half, half, n_panels + 1)
    cdf = np.concatenate([[0.0], np.cumsum(per_panel)])
    return edges, cdf


def marginal_density(y, t, params: PhysicalParams, moments=None):
    """Single-particle density: |psi(y, y2, t)|^2 integrated over y2."""
    if moments is None:
        moments = _window_moments(-math.inf, math.inf, t, params, 1e-13)
    aa, bb, ab = moments
    a = packet_amplitude(PacketLabel.A, y, t, params)
    b = packet_amplitude(PacketLabel.B, y, t, params)
    n2 = normalization_constant(params) ** 2
    # int B(y2) conj(A(y2)) dy2 = conj(ab)
    return n2 * (np.abs(a) ** 2 * bb + np.abs(b) ** 2 * aa + 2.0 * (a * np.conj(b) * np.conj(ab)).real)


def marginal_cdf(y, t, params: PhysicalParams):
    edges, cdf = _marginal_table(params, float(t))
    return np.interp(y, edges, cdf, left=0.0, right=cdf[-1])


def ks_critical(n: int) -> float:
    return KS_COEFF / math.sqrt(n)


def marginal_ks_statistic(arrivals, params: PhysicalParams) -> KSResult:
    """KS distance between pooled single-particle positions and the quantum marginal."""
    pts = _as_points(arrivals)
    pooled = np.concatenate([pts.y1, pts.y2])
    res = stats.kstest(pooled, lambda y: marginal_cdf(y, pts.t, params))
    return KSResult(float(res.statistic), ks_critical(pooled.size), int(pooled.size))


def verdict_record(w1: DetectorWindow, w2: DetectorWindow, verdict: ComparisonVerdict,
                   ks: KSResult | None = None) -> dict:
    """Flat JSON-ready record of one window comparison."""
    rec = {
        "windows": [asdict(w1), asdict(w2)],
        "sqm_p": verdict.sqm_p,
        "hits": verdict.bm.hits,
        "n": verdict.bm.n,
        "p_hat": verdict.bm.p_hat,
        "se": verdict.bm.se,
        "z": verdict.z if math.isfinite(verdict.z) else str(verdict.z),
        "agrees": verdict.agrees,
    }
    if ks is not None:
        rec["ks_statistic"] = ks.statistic
        rec["ks_critical"] = ks.critical
    return rec
