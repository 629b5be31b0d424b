# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: guidance field evaluation and DP5(4) pair integration.

Same contract as ``_fallback``; see that module for the argument layout.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, cos, sin, sqrt, fabs, pow, isfinite, M_PI

cnp.import_array()

cdef enum:
    COMPLETED = 0
    NODE_ABORT = 1
    STEP_UNDERFLOW = 2
    STEP_LIMIT = 3
    RECORD_FULL = 4
    MAX_HALVINGS = 10

cdef struct Consts:
    double hbar
    double m
    double sigma0
    double Y
    double ky
    double norm

cdef struct PeakTable:
    const double* t
    const double* v
    Py_ssize_t n

# Dormand-Prince 5(4)
cdef double C2 = 1.0 / 5, C3 = 3.0 / 10, C4 = 4.0 / 5, C5 = 8.0 / 9
cdef double A21 = 1.0 / 5
cdef double A31 = 3.0 / 40, A32 = 9.0 / 40
cdef double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9
cdef double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561, A54 = -212.0 / 729
cdef double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176, A65 = -5103.0 / 18656
cdef double A71 = 35.0 / 384, A73 = 500.0 / 1113, A74 = 125.0 / 192, A75 = -2187.0 / 6784, A76 = 11.0 / 84
cdef double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920, E5 = -17253.0 / 339200, E6 = 22.0 / 525, E7 = -1.0 / 40


cdef inline double _interp(const PeakTable* p, double t) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = p.n - 1, mid
    if t <= p.t[0]:
        return p.v[0]
    if t >= p.t[hi]:
        return p.v[hi]
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if p.t[mid] <= t:
            lo = mid
        else:
            hi = mid
    return p.v[lo] + (t - p.t[lo]) * (p.v[hi] - p.v[lo]) / (p.t[hi] - p.t[lo])


cdef inline void _field(const Consts* c, double y1, double y2, double t,
                        double* v1, double* v2, double* dens) noexcept nogil:
    cdef double a = c.hbar * t / (2.0 * c.m * c.sigma0 * c.sigma0)
    cdef double den = 4.0 * c.sigma0 * c.sigma0 * (1.0 + a * a)
    cdef double gr = 1.0 / den
    cdef double gi = -a / den
    cdef double ctr = c.Y + c.hbar * c.ky / c.m * t
    cdef double s1 = (y1 - ctr) * (y1 - ctr) + (y2 + ctr) * (y2 + ctr)
    cdef double s2 = (y1 + ctr) * (y1 + ctr) + (y2 - ctr) * (y2 - ctr)
    cdef double rel = c.ky * (y1 - y2)
    cdef double re1 = -gr * s1, im1 = -gi * s1 + rel
    cdef double re2 = -gr * s2, im2 = -gi * s2 - rel
    cdef double top = re1 if re1 > re2 else re2
    cdef double e1 = exp(re1 - top), e2 = exp(re2 - top)
    cdef double w1r = e1 * cos(im1), w1i = e1 * sin(im1)
    cdef double w2r = e2 * cos(im2), w2i = e2 * sin(im2)
    cdef double sr = w1r + w2r, si = w1i + w2i
    cdef double mod2 = sr * sr + si * si
    cdef double d1ar = -2.0 * gr * (y1 - ctr), d1ai = -2.0 * gi * (y1 - ctr) + c.ky
    cdef double d1br = -2.0 * gr * (y1 + ctr), d1bi = -2.0 * gi * (y1 + ctr) - c.ky
    cdef double d2ar = -2.0 * gr * (y2 + ctr), d2ai = -2.0 * gi * (y2 + ctr) - c.ky
    cdef double d2br = -2.0 * gr * (y2 - ctr), d2bi = -2.0 * gi * (y2 - ctr) + c.ky
    cdef double n1r = w1r * d1ar - w1i * d1ai + w2r * d1br - w2i * d1bi
    cdef double n1i = w1r * d1ai + w1i * d1ar + w2r * d1bi + w2i * d1br
    cdef double n2r = w1r * d2ar - w1i * d2ai + w2r * d2br - w2i * d2bi
    cdef double n2i = w1r * d2ai + w1i * d2ar + w2r * d2bi + w2i * d2br
    cdef double scale = c.hbar / c.m
    v1[0] = scale * (n1i * sr - n1r * si) / mod2
    v2[0] = scale * (n2i * sr - n2r * si) / mod2
    dens[0] = c.norm * c.norm / (2.0 * M_PI * c.sigma0 * c.sigma0 * (1.0 + a * a)) * exp(2.0 * top) * mod2


cdef inline bint _eval(const Consts* c, const PeakTable* p, double node_eps,
                       double y1, double y2, double t, double* v1, double* v2) noexcept nogil:
    """Field evaluation; returns True when the point is node-adjacent."""
    cdef double d
    _field(c, y1, y2, t, v1, v2, &d)
    return not (d >= node_eps * _interp(p, t))


cdef int _integrate_one(const Consts* c, const PeakTable* p,
                        double* y1, double* y2, double t_start, double t_final,
                        double rtol, double atol, double max_step, double node_eps,
                        long max_steps, long* nsteps,
                        double* rec, Py_ssize_t rec_cap, Py_ssize_t* rec_len) noexcept nogil:
    cdef double t = t_start
    cdef double h = 1e-3 * (t_final - t_start)
    cdef double hmin = 1e-14 * fabs(t_final)
    cdef double hs, ts, errn, fac, sc1, sc2, e1, e2, vmax
    cdef double k1a, k1b, k2a, k2b, k3a, k3b, k4a, k4b, k5a, k5b, k6a, k6b, k7a, k7b
    cdef double ya, yb, na, nb, k1_prev_a, k1_prev_b
    cdef double stage_v[14]
    cdef int j
    cdef bint bad, last
    cdef int halvings = 0
    if h > max_step:
        h = max_step
    nsteps[0] = 0
    if _eval(c, p, node_eps, y1[0], y2[0], t, &k1a, &k1b):
        return NODE_ABORT
    if rec != NULL:
        if rec_len[0] >= rec_cap:
            return RECORD_FULL
        rec[0] = t; rec[1] = y1[0]; rec[2] = y2[0]; rec[3] = k1a; rec[4] = k1b; rec[5] = 0.0 / 0.0
        rec_len[0] = 1
    while True:
        ya = y1[0]
        yb = y2[0]
        last = h >= t_final - t
        hs = t_final - t if last else h
        ts = t
        bad = _eval(c, p, node_eps, ya + hs * A21 * k1a, yb + hs * A21 * k1b, ts + C2 * hs, &k2a, &k2b)
        bad |= _eval(c, p, node_eps, ya + hs * (A31 * k1a + A32 * k2a), yb + hs * (A31 * k1b + A32 * k2b),
                     ts + C3 * hs, &k3a, &k3b)
        bad |= _eval(c, p, node_eps, ya + hs * (A41 * k1a + A42 * k2a + A43 * k3a),
                     yb + hs * (A41 * k1b + A42 * k2b + A43 * k3b), ts + C4 * hs, &k4a, &k4b)
        bad |= _eval(c, p, node_eps, ya + hs * (A51 * k1a + A52 * k2a + A53 * k3a + A54 * k4a),
                     yb + hs * (A51 * k1b + A52 * k2b + A53 * k3b + A54 * k4b), ts + C5 * hs, &k5a, &k5b)
        bad |= _eval(c, p, node_eps, ya + hs * (A61 * k1a + A62 * k2a + A63 * k3a + A64 * k4a + A65 * k5a),
                     yb + hs * (A61 * k1b + A62 * k2b + A63 * k3b + A64 * k4b + A65 * k5b),
                     t_final if last else ts + hs, &k6a, &k6b)
        na = ya + hs * (A71 * k1a + A73 * k3a + A74 * k4a + A75 * k5a + A76 * k6a)
        nb = yb + hs * (A71 * k1b + A73 * k3b + A74 * k4b + A75 * k5b + A76 * k6b)
        bad |= _eval(c, p, node_eps, na, nb, t_final if last else ts + hs, &k7a, &k7b)
        e1 = hs * (E1 * k1a + E3 * k3a + E4 * k4a + E5 * k5a + E6 * k6a + E7 * k7a)
        e2 = hs * (E1 * k1b + E3 * k3b + E4 * k4b + E5 * k5b + E6 * k6b + E7 * k7b)
        sc1 = atol + rtol * (fabs(ya) if fabs(ya) > fabs(na) else fabs(na))
        sc2 = atol + rtol * (fabs(yb) if fabs(yb) > fabs(nb) else fabs(nb))
        errn = sqrt(0.5 * ((e1 / sc1) * (e1 / sc1) + (e2 / sc2) * (e2 / sc2)))
        if not isfinite(errn):
            errn = 1.0 / 0.0
        if not (isfinite(na) and isfinite(nb)):
            bad = True
        if errn == 0.0:
            fac = 5.0
        else:
            fac = 0.9 * pow(errn, -0.2)
        if fac < 0.2:
            fac = 0.2
        elif fac > 5.0:
            fac = 5.0

        if bad:
            h = hs * 0.5
            halvings += 1
            if halvings > MAX_HALVINGS:
                return NODE_ABORT
        elif errn <= 1.0:
            y1[0] = na
            y2[0] = nb
            t = t_final if last else ts + hs
            k1_prev_a = k1a
            k1_prev_b = k1b
            k1a = k7a
            k1b = k7b
            halvings = 0
            nsteps[0] += 1
            h = hs * fac
            if h > max_step:
                h = max_step
            if rec != NULL:
                if rec_len[0] >= rec_cap:
                    return RECORD_FULL
                stage_v[0] = k2a; stage_v[1] = k2b; stage_v[2] = k3a; stage_v[3] = k3b
                stage_v[4] = k4a; stage_v[5] = k4b; stage_v[6] = k5a; stage_v[7] = k5b
                stage_v[8] = k6a; stage_v[9] = k6b; stage_v[10] = k7a; stage_v[11] = k7b
                stage_v[12] = k1_prev_a; stage_v[13] = k1_prev_b
                vmax = 0.0
                for j in range(14):
                    if fabs(stage_v[j]) > vmax:
                        vmax = fabs(stage_v[j])
                rec[6 * rec_len[0] + 0] = t
                rec[6 * rec_len[0] + 1] = na
                rec[6 * rec_len[0] + 2] = nb
                rec[6 * rec_len[0] + 3] = k7a
                rec[6 * rec_len[0] + 4] = k7b
                rec[6 * rec_len[0] + 5] = vmax
                rec_len[0] += 1
        else:
            h = hs * (fac if fac < 1.0 else 1.0)

        if t >= t_final:
            return COMPLETED
        if h < hmin:
            return STEP_UNDERFLOW
        if nsteps[0] >= max_steps:
            return STEP_LIMIT


cdef void _fill(Consts* c, tuple consts):
    c.hbar, c.m, c.sigma0, c.Y, c.ky, c.norm = consts


def velocity_density(y1, y2, t, tuple consts):
    """Vectorized guidance velocities and density (broadcasts like numpy)."""
    cdef Consts c
    _fill(&c, consts)
    b = np.broadcast(np.asarray(y1, dtype=float), np.asarray(y2, dtype=float), np.asarray(t, dtype=float))
    shape = b.shape
    cdef cnp.ndarray[double, ndim=1] a1 = np.ascontiguousarray(np.broadcast_to(y1, shape), dtype=float).ravel()
    cdef cnp.ndarray[double, ndim=1] a2 = np.ascontiguousarray(np.broadcast_to(y2, shape), dtype=float).ravel()
    cdef cnp.ndarray[double, ndim=1] at = np.ascontiguousarray(np.broadcast_to(t, shape), dtype=float).ravel()
    cdef Py_ssize_t n = a1.shape[0], i
    cdef cnp.ndarray[double, ndim=1] o1 = np.empty(n), o2 = np.empty(n), od = np.empty(n)
    with nogil:
        for i in range(n):
            _field(&c, a1[i], a2[i], at[i], &o1[i], &o2[i], &od[i])
    return o1.reshape(shape), o2.reshape(shape), od.reshape(shape)


def integrate_batch(y1, y2, double t_start, double t_final, double rtol, double atol,
                    double max_step, double node_eps, tuple consts, peak_t, peak_v,
                    long max_steps=1000000, bint record=False):
    """Integrate each pair independently; releases the GIL for the whole batch."""
    cdef Consts c
    _fill(&c, consts)
    cdef double[::1] pt = np.ascontiguousarray(peak_t, dtype=float)
    cdef double[::1] pv = np.ascontiguousarray(peak_v, dtype=float)
    cdef PeakTable p
    p.t = &pt[0]
    p.v = &pv[0]
    p.n = pt.shape[0]
    cdef double[::1] a1 = np.array(np.atleast_1d(y1), dtype=float)
    cdef double[::1] a2 = np.array(np.atleast_1d(y2), dtype=float)
    cdef Py_ssize_t n = a1.shape[0], i
    status_arr = np.zeros(n, dtype=np.int8)
    steps_arr = np.zeros(n, dtype=np.int64)
    cdef signed char[::1] status = status_arr
    cdef long[::1] steps = steps_arr
    cdef long ns
    cdef double[:, ::1] buf
    cdef Py_ssize_t cap = 4096, rec_len = 0
    cdef double s1, s2
    cdef int code
    if record:
        if n != 1:
            raise ValueError("record=True needs exactly one pair")
        s1 = a1[0]
        s2 = a2[0]
        while True:
            buf = np.empty((cap, 6))
            a1[0] = s1
            a2[0] = s2
            rec_len = 0
            with nogil:
                code = _integrate_one(&c, &p, &a1[0], &a2[0], t_start, t_final, rtol, atol, max_step,
                                      node_eps, max_steps, &ns, &buf[0, 0], cap, &rec_len)
            if code != RECORD_FULL:
                break
            cap *= 4
        status[0] = code
        steps[0] = ns
        out = np.asarray(buf)[:rec_len]
        rec = {"t": out[:, 0].copy(), "y1": out[:, 1].copy(), "y2": out[:, 2].copy(),
               "v1": out[:, 3].copy(), "v2": out[:, 4].copy(), "vmax": out[:, 5].copy()}
        return np.asarray(a1), np.asarray(a2), status_arr, steps_arr, rec
    with nogil:
        for i in range(n):
            status[i] = _integrate_one(&c, &p, &a1[i], &a2[i], t_start, t_final, rtol, atol, max_step,
                                       node_eps, max_steps, &ns, NULL, 0, &rec_len)
            steps[i] = ns
    return np.asarray(a1), np.asarray(a2), status_arr, steps_arr
