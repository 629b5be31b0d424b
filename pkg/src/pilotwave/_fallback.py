"""Pure numpy implementation of the hot kernels.

Mirrors ``_kernels.pyx`` function for function. Batches are advanced in
lockstep, but every trajectory keeps its own step size and error control, so
a trajectory's result does not depend on which other trajectories share its
batch.
"""

from __future__ import annotations

import numpy as np

COMPLETED = 0
NODE_ABORT = 1
STEP_UNDERFLOW = 2
STEP_LIMIT = 3

MAX_HALVINGS = 10

# Dormand-Prince 5(4)
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


def velocity_density(y1, y2, t, consts):
    """Guidance velocities and |psi|^2 at (y1, y2, t).

    ``consts`` is ``(hbar, m, sigma0, Y, ky, norm)``. Works in the log domain
    so that far-tail points give tiny densities instead of NaN velocities.
    """
    hbar, m, sigma0, Y, ky, norm = consts
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    t = np.asarray(t, dtype=float)
    a = hbar * t / (2.0 * m * sigma0 * sigma0)
    den = 4.0 * sigma0 * sigma0 * (1.0 + a * a)
    gr = 1.0 / den
    gi = -a / den
    c = Y + hbar * ky / m * t

    s1 = (y1 - c) ** 2 + (y2 + c) ** 2
    s2 = (y1 + c) ** 2 + (y2 - c) ** 2
    rel = ky * (y1 - y2)
    re1, im1 = -gr * s1, -gi * s1 + rel
    re2, im2 = -gr * s2, -gi * s2 - rel
    top = np.maximum(re1, re2)
    e1 = np.exp(re1 - top)
    e2 = np.exp(re2 - top)
    w1r, w1i = e1 * np.cos(im1), e1 * np.sin(im1)
    w2r, w2i = e2 * np.cos(im2), e2 * np.sin(im2)
    sr, si = w1r + w2r, w1i + w2i
    mod2 = sr * sr + si * si

    # dlog factors: D = -2 g (y -/+ c) +/- i ky, with 2g = 2 (gr + i gi)
    def dfac(x, sgn):
        return -2.0 * gr * x, -2.0 * gi * x + sgn * ky

    d1ar, d1ai = dfac(y1 - c, 1.0)
    d1br, d1bi = dfac(y1 + c, -1.0)
    d2ar, d2ai = dfac(y2 + c, -1.0)
    d2br, d2bi = dfac(y2 - c, 1.0)

    n1r = w1r * d1ar - w1i * d1ai + w2r * d1br - w2i * d1bi
    n1i = w1r * d1ai + w1i * d1ar + w2r * d1bi + w2i * d1br
    n2r = w1r * d2ar - w1i * d2ai + w2r * d2br - w2i * d2bi
    n2i = w1r * d2ai + w1i * d2ar + w2r * d2bi + w2i * d2br

    scale = hbar / m
    with np.errstate(divide="ignore", invalid="ignore"):
        v1 = scale * (n1i * sr - n1r * si) / mod2
        v2 = scale * (n2i * sr - n2r * si) / mod2
    abs_st2 = sigma0 * sigma0 * (1.0 + a * a)
    dens = norm * norm / (2.0 * np.pi * abs_st2) * np.exp(2.0 * top) * mod2
    return v1, v2, dens


def integrate_batch(y1, y2, t_start, t_final, rtol, atol, max_step, node_eps, consts,
                    peak_t, peak_v, max_steps=1_000_000, record=False):
    """Adaptive DP5(4) integration of many pairs from ``t_start`` to ``t_final``.

    Returns ``(y1, y2, status, nsteps)``; with ``record=True`` (single pair
    only) also a dict of per-step samples.
    """
    y = np.array([np.atleast_1d(y1), np.atleast_1d(y2)], dtype=float)
    n = y.shape[1]
    if record and n != 1:
        raise ValueError("record=True needs exactly one pair")
    peak_t = np.asarray(peak_t, dtype=float)
    peak_v = np.asarray(peak_v, dtype=float)

    def field(yy, tt):
        v1, v2, d = velocity_density(yy[0], yy[1], tt, consts)
        bad = ~(d >= node_eps * np.interp(tt, peak_t, peak_v))
        return np.array([v1, v2]), bad

    span = t_final - t_start
    hmin = 1e-14 * abs(t_final)
    t = np.full(n, float(t_start))
    h = np.full(n, min(max_step, 1e-3 * span))
    status = np.zeros(n, dtype=np.int8)
    nsteps = np.zeros(n, dtype=np.int64)
    halvings = np.zeros(n, dtype=np.int64)

    k_first, bad0 = field(y, t)
    status[bad0] = NODE_ABORT
    active = ~bad0

    rec = None
    if record:
        rec = {"t": [t[0]], "y1": [y[0, 0]], "y2": [y[1, 0]], "v1": [k_first[0, 0]],
               "v2": [k_first[1, 0]], "vmax": [np.nan]}

    while active.any():
        idx = np.flatnonzero(active)
        ys, ts, hs = y[:, idx], t[idx], h[idx]
        last = hs >= t_final - ts
        hs = np.where(last, t_final - ts, hs)

        ks = [k_first[:, idx]]
        bad = np.zeros(idx.size, dtype=bool)
        for stage in range(1, 7):
            acc = np.zeros_like(ys)
            for j, coef in enumerate(_A[stage]):
                if coef != 0.0:
                    acc = acc + coef * ks[j]
            ystage = ys + hs * acc
            tstage = np.where(last, t_final, ts + hs) if stage >= 5 else ts + _C[stage] * hs
            k, b = field(ystage, tstage)
            ks.append(k)
            bad |= b
            if stage == 6:
                ynew = ystage
        err = np.zeros_like(ys)
        for j, coef in enumerate(_E):
            if coef != 0.0:
                err = err + coef * ks[j]
        err = hs * err
        scale = atol + rtol * np.maximum(np.abs(ys), np.abs(ynew))
        with np.errstate(divide="ignore", invalid="ignore"):
            errn = np.sqrt(0.5 * np.sum((err / scale) ** 2, axis=0))
        errn = np.where(np.isfinite(errn), errn, np.inf)
        bad |= ~np.all(np.isfinite(ynew), axis=0)

        accept = ~bad & (errn <= 1.0)
        reject = ~bad & ~accept
        with np.errstate(divide="ignore"):
            fac = np.where(errn == 0.0, 5.0, 0.9 * errn ** -0.2)
        fac = np.clip(fac, 0.2, 5.0)

        # node-adjacent step: halve and retry
        bi = idx[bad]
        h[bi] = hs[bad] * 0.5
        halvings[bi] += 1
        status[bi[halvings[bi] > MAX_HALVINGS]] = NODE_ABORT

        ri = idx[reject]
        h[ri] = hs[reject] * np.minimum(fac[reject], 1.0)

        ai = idx[accept]
        y[:, ai] = ynew[:, accept]
        t[ai] = np.where(last[accept], t_final, ts[accept] + hs[accept])
        k_first[:, ai] = ks[6][:, accept]
        halvings[ai] = 0
        nsteps[ai] += 1
        h[ai] = np.minimum(hs[accept] * fac[accept], max_step)

        if record and accept[0]:
            speeds = np.max([np.max(np.abs(k[:, 0])) for k in ks])
            rec["t"].append(t[0])
            rec["y1"].append(y[0, 0])
            rec["y2"].append(y[1, 0])
            rec["v1"].append(k_first[0, 0])
            rec["v2"].append(k_first[1, 0])
            rec["vmax"].append(speeds)

        done = t >= t_final
        status[(h < hmin) & (status == COMPLETED) & ~done] = STEP_UNDERFLOW
        status[(nsteps >= max_steps) & (status == COMPLETED) & ~done] = STEP_LIMIT
        active = (status == COMPLETED) & ~done

    if record:
        return y[0], y[1], status, nsteps, {k: np.asarray(v) for k, v in rec.items()}
    return y[0], y[1], status, nsteps
