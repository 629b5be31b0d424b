"""Deterministic quadrature helpers."""

from __future__ import annotations

import numpy as np


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""


def adaptive_simpson(f, a: float, b: float, tol: float = 1e-10, max_depth: int = 50, max_evals: int = 200_000):
    """Adaptive Simpson rule with Richardson correction.

    ``f`` is called with scalar floats and may return real or complex values.
    The interval tree is processed from an explicit stack, so the result does
    not depend on recursion limits.
    """
    if not b > a:
        raise ValueError("need b > a")

    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    total = 0.0
    evals = 3
    while stack:
        lo, hi, flo, fmid, fhi, est, eps, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        evals += 2
        left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid)
        right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi)
        delta = left + right - est
        if abs(delta) <= 15.0 * eps and depth >= 4:
            total += left + right + delta / 15.0
            continue
        if depth >= max_depth or evals > max_evals:
            raise QuadratureError(
                f"adaptive Simpson did not converge on [{lo}, {hi}] (|delta|={abs(delta):.3e}, tol={eps:.3e})"
            )
        stack.append((mid, hi, fmid, frm, fhi, right, 0.5 * eps, depth + 1))
        stack.append((lo, mid, flo, flm, fmid, left, 0.5 * eps, depth + 1))
    return total


def gauss_legendre_panels(lo: float, hi: float, n_panels: int, order: int = 8):
    """Nodes and weights of a composite Gauss-Legendre rule on [lo, hi]."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights
