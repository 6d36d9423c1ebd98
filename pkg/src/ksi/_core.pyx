# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Dormand-Prince 5(4) stepping for the radial systems.

Mirrors ``ksi._pycore`` line for line; the two must agree to round-off.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt, fmax, fmin, pow

cnp.import_array()

DEF MAXDIM = 4

# Dormand-Prince tableau
cdef double C2 = 1.0 / 5, C3 = 3.0 / 10, C4 = 4.0 / 5, C5 = 8.0 / 9
cdef double A21 = 1.0 / 5
cdef double A31 = 3.0 / 40, A32 = 9.0 / 40
cdef double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9
cdef double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561, A54 = -212.0 / 729
cdef double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176
cdef double A65 = -5103.0 / 18656
cdef double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192, B5 = -2187.0 / 6784, B6 = 11.0 / 84
cdef double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920, E5 = -17253.0 / 339200
cdef double E6 = 22.0 / 525, E7 = -1.0 / 40


cdef inline void rhs(int system, int n, const double* p, double t,
                     const double* y, double* out) noexcept nogil:
    cdef double fr, s, u, du
    if system == 0:
        out[0] = y[1]
        out[1] = -(n + 1) / t * y[1]
    elif system == 1 or system == 2:
        s = p[0]
        u = y[0]
        du = y[1]
        fr = (n + 1) / t + s * t / 2 + 2 * t * u
        out[0] = du
        out[1] = -fr * du - s * u - 2 * n * u * u
        if system == 2:
            out[2] = y[3]
            out[3] = -fr * y[3] - (s * (1 - p[1]) + p[2] * (4 * n * u + 2 * t * du)) * y[2]
    elif system == 3:
        out[0] = y[1]
        out[1] = -(n - 4 + 2 * y[0]) * y[1] + 2 * (n - 2) * (y[0] - y[0] * y[0])
    elif system == 4:
        out[0] = y[1] - y[0]
        out[1] = 2 * (1 - y[0]) * y[1]


def dopri5(int system, int n, double[::1] params, double[::1] y0, double t0, double t1,
           double rtol, double atol, double h0, double ceiling, long max_steps):
    """Integrate from t0 to t1, returning every accepted node.

    Returns (t, y, dy, status) with status 0 reached, 1 ceiling, 2 step underflow,
    3 step budget exhausted.
    """
    cdef int m = y0.shape[0]
    cdef int i, status = 0
    cdef double y[MAXDIM]
    cdef double yn[MAXDIM]
    cdef double yt[MAXDIM]
    cdef double k1[MAXDIM]
    cdef double k2[MAXDIM]
    cdef double k3[MAXDIM]
    cdef double k4[MAXDIM]
    cdef double k5[MAXDIM]
    cdef double k6[MAXDIM]
    cdef double k7[MAXDIM]
    cdef double t = t0, h = h0, err, sc, fac, hmin
    cdef const double* p = &params[0] if params.shape[0] > 0 else NULL
    cdef long cap = 1024, count = 0, steps = 0
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ts = np.empty(cap)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] ys = np.empty((cap, m))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] fs = np.empty((cap, m))

    for i in range(m):
        y[i] = y0[i]
    rhs(system, n, p, t, y, k1)
    ts[0] = t
    for i in range(m):
        ys[0, i] = y[i]
        fs[0, i] = k1[i]
    count = 1

    while t < t1:
        if steps >= max_steps:
            status = 3
            break
        hmin = 1e-14 * fmax(fabs(t), 1.0)
        if h < hmin:
            status = 2
            break
        if t + h > t1:
            h = t1 - t
        steps += 1
        for i in range(m):
            yt[i] = y[i] + h * A21 * k1[i]
        rhs(system, n, p, t + C2 * h, yt, k2)
        for i in range(m):
            yt[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i])
        rhs(system, n, p, t + C3 * h, yt, k3)
        for i in range(m):
            yt[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
        rhs(system, n, p, t + C4 * h, yt, k4)
        for i in range(m):
            yt[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
        rhs(system, n, p, t + C5 * h, yt, k5)
        for i in range(m):
            yt[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i]
                                + A65 * k5[i])
        rhs(system, n, p, t + h, yt, k6)
        for i in range(m):
            yn[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i])
        rhs(system, n, p, t + h, yn, k7)
        err = 0.0
        for i in range(m):
            sc = atol + rtol * fmax(fabs(y[i]), fabs(yn[i]))
            sc = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i]
                      + E7 * k7[i]) / sc
            err += sc * sc
        err = sqrt(err / m)
        if err != err:
            h *= 0.1
            continue
        if err <= 1.0:
            t = t + h
            for i in range(m):
                y[i] = yn[i]
                k1[i] = k7[i]
            if count == cap:
                cap *= 2
                ts = np.resize(ts, cap)
                ys = np.resize(ys, (cap, m))
                fs = np.resize(fs, (cap, m))
            ts[count] = t
            for i in range(m):
                ys[count, i] = y[i]
                fs[count, i] = k1[i]
            count += 1
            fac = 0.9 * pow(fmax(err, 1e-10), -0.2)
            h *= fmin(5.0, fmax(0.2, fac))
            if system != 4:
                for i in range(0, m, 2):
                    if fabs(y[i]) > ceiling:
                        status = 1
            else:
                for i in range(m):
                    if fabs(y[i]) > ceiling:
                        status = 1
            if status:
                break
        else:
            fac = 0.9 * pow(err, -0.2)
            h *= fmax(0.2, fac)
    return ts[:count].copy(), ys[:count].copy(), fs[:count].copy(), status
