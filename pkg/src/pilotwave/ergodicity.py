"""Time vs. diagonal averages for discrete spectra, and Bohmian vs. quantum space averages."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .guidance import diagnostic_half_width, peak_density
from .quadrature import gauss_legendre_panels
from .wavepacket import PhysicalParams, joint_amplitude, joint_gradient

OBSERVABLES = ("position_y1", "momentum_y1")


@dataclass(frozen=True)
class ModeExpansion:
    coeffs: np.ndarray
    energies: np.ndarray
    hbar: float = 1.0

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        e = np.asarray(self.energies, dtype=float)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "energies", e)
        if c.shape != e.shape or c.ndim != 1:
            raise ValueError("coeffs and energies must be 1-D and of equal length")
        if not np.all(np.isfinite(e)) or not np.all(np.isfinite(c)):
            raise ValueError("coeffs and energies must be finite")
        norm = float(np.sum(np.abs(c) ** 2))
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"sum |c_n|^2 = {norm!r}, expected 1")
        if not self.hbar > 0:
            raise ValueError("hbar must be > 0")


@dataclass(frozen=True)
class ObservableMatrix:
    elements: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.elements, dtype=complex)
        object.__setattr__(self, "elements", f)
        if f.ndim != 2 or f.shape[0] != f.shape[1]:
            raise ValueError("observable matrix must be square")
        scale = max(1.0, float(np.max(np.abs(f), initial=0.0)))
        if np.max(np.abs(f - f.conj().T), initial=0.0) > 1e-12 * scale:
            raise ValueError("observable matrix must be hermitian")


def _check(x: ModeExpansion, F: ObservableMatrix):
    if F.elements.shape[0] != x.coeffs.size:
        raise ValueError(f"dimension mismatch: {x.coeffs.size} modes vs {F.elements.shape[0]}x{F.elements.shape[0]} matrix")


def expectation_at_time(x: ModeExpansion, F: ObservableMatrix, t):
    """Re sum_mn conj(c_m) c_n F_mn exp(-i (E_n - E_m) t / hbar); vectorized over t."""
    _check(x, F)
    t = np.asarray(t, dtype=float)
    amp = x.coeffs[None, :] * np.exp(-1j * np.multiply.outer(t.ravel(), x.energies) / x.hbar)
    val = np.einsum("km,mn,kn->k", amp.conj(), F.elements, amp).real
    return val.reshape(t.shape) if t.ndim else float(val[0])


def time_average(x: ModeExpansion, F: ObservableMatrix, T: float, n_samples: int, chunk: int = 1 << 16) -> float:
    """Trapezoidal mean of the expectation value over [0, T] on ``n_samples`` points."""
    if not T > 0:
        raise ValueError("T must be > 0")
    if n_samples < 100:
        raise ValueError("n_samples must be >= 100")
    _check(x, F)
    times = np.linspace(0.0, T, n_samples)
    total = 0.0
    for lo in range(0, n_samples, chunk):
        vals = expectation_at_time(x, F, times[lo:lo + chunk])
        w = np.ones_like(vals)
        if lo == 0:
            w[0] = 0.5
        if lo + chunk >= n_samples:
            w[-1] = 0.5
        total += float(np.dot(w, vals))
    return total * (T / (n_samples - 1)) / T


def diagonal_average(x: ModeExpansion, F: ObservableMatrix) -> float:
    _check(x, F)
    return float(np.sum(np.abs(x.coeffs) ** 2 * F.elements.diagonal().real))


def random_mode_system(rng: np.random.Generator, n_modes: int = 5, min_gap: float = 0.05,
                       e_max: float = 2.0) -> tuple[ModeExpansion, ObservableMatrix]:
    """Random normalized expansion with a nondegenerate spectrum and a random hermitian observable."""
    while True:
        energies = np.sort(rng.uniform(0.0, e_max, n_modes))
        if np.min(np.diff(energies)) >= min_gap:
            break
    c = rng.standard_normal(n_modes) + 1j * rng.standard_normal(n_modes)
    c /= np.linalg.norm(c)
    # renormalize away the last-ulp drift so the 1e-12 invariant holds
    c /= math.sqrt(float(np.sum(np.abs(c) ** 2)))
    g = rng.standard_normal((n_modes, n_modes)) + 1j * rng.standard_normal((n_modes, n_modes))
    return ModeExpansion(c, energies), ObservableMatrix(0.5 * (g + g.conj().T))


def min_gap(x: ModeExpansion) -> float:
    e = np.sort(x.energies)
    return float(np.min(np.diff(e)))


@dataclass
class LocalGrid:
    """Local expectation values on a grid; ``mask`` flags node-adjacent points."""

    values: np.ndarray
    mask: np.ndarray
    density: np.ndarray


def local_expectation_grid(observable: str, t: float, params: PhysicalParams, grid,
                           node_eps: float = 1e-12, peak: float | None = None) -> LocalGrid:
    """Re(psi* F psi) / |psi|^2 at the points of ``grid`` = (y1, y2) arrays (broadcast)."""
    if observable not in OBSERVABLES:
        raise ValueError(f"observable must be one of {OBSERVABLES}, got {observable!r}")
    if t < 0:
        raise ValueError("t must be >= 0")
    y1, y2 = np.broadcast_arrays(*(np.asarray(g, dtype=float) for g in grid))
    psi = joint_amplitude(y1, y2, t, params)
    dens = np.abs(psi) ** 2
    if peak is None:
        peak = peak_density(params, t)
    mask = ~(dens > node_eps * peak)
    if observable == "position_y1":
        values = y1.copy()
    else:
        g1, _ = joint_gradient(y1, y2, t, params)
        with np.errstate(divide="ignore", invalid="ignore"):
            values = params.hbar * (g1 / psi).imag
    values = np.where(mask, 0.0, values)
    return LocalGrid(values, mask, dens)


def bohm_space_average(observable: str, t: float, params: PhysicalParams, quad_tol: float = 1e-8,
                       refine: int = 1, order: int = 8) -> tuple[float, float]:
    """Integral of |psi|^2 times the local expectation value.

    Gauss-Legendre over the 64 x 64 diagnostic cells (times ``refine``).
    Returns ``(average, masked_weight)``; masked_weight is the density mass
    dropped at node-adjacent points.
    """
    half = diagnostic_half_width(params, t)
    nodes, weights = gauss_legendre_panels(-half, half, 64 * refine, order)
    lg = local_expectation_grid(observable, t, params, (nodes[:, None], nodes[None, :]))
    w = weights[:, None] * weights[None, :]
    total = float(np.sum(lg.density * w))
    masked = float(np.sum(np.where(lg.mask, lg.density, 0.0) * w))
    if masked > 1e-8 * total:
        raise ArithmeticError(f"masked node weight {masked:.3e} exceeds 1e-8 of total {total:.3e}")
    return float(np.sum(lg.density * lg.values * w)), masked


def sqm_expectation(observable: str, t: float, params: PhysicalParams, n: int = 1024) -> complex:
    """Integral of conj(psi) F psi on a uniform periodic grid.

    Momentum acts spectrally (FFT derivative), independent of the analytic
    gradients. The imaginary part is returned so hermiticity can be checked.
    """
    if observable not in OBSERVABLES:
        raise ValueError(f"observable must be one of {OBSERVABLES}, got {observable!r}")
    half = diagnostic_half_width(params, t, n_widths=12.0)
    y = np.linspace(-half, half, n, endpoint=False)
    dy = y[1] - y[0]
    psi = joint_amplitude(y[:, None], y[None, :], t, params)
    if observable == "position_y1":
        fpsi = y[:, None] * psi
    else:
        k = 2.0 * np.pi * np.fft.fftfreq(n, d=dy)
        fpsi = params.hbar * np.fft.ifft(k[:, None] * np.fft.fft(psi, axis=0), axis=0)
    return complex(np.sum(psi.conj() * fpsi) * dy * dy)


def eq44_report(observable: str, t: float, params: PhysicalParams, quad_tol: float = 1e-8,
                max_refine: int = 16) -> dict:
    """Bohmian vs. quantum space average, refining the Bohmian grid x4 on disagreement."""
    sqm = sqm_expectation(observable, t, params)
    refine = 1
    while True:
        bohm, masked = bohm_space_average(observable, t, params, quad_tol, refine=refine)
        if abs(bohm - sqm.real) < quad_tol or refine >= max_refine:
            break
        refine *= 4
    return {
        "schema_version": "1",
        "observable": observable,
        "t": t,
        "bohm_average": bohm,
        "sqm_average": sqm.real,
        "sqm_imag": sqm.imag,
        "abs_diff": abs(bohm - sqm.real),
        "masked_weight": masked,
        "refine": refine,
    }
