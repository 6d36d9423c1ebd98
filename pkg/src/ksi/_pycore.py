"""Pure-Python Dormand-Prince 5(4) stepping; fallback for ``ksi._core``."""

import math

import numpy as np

C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = (71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200,
                          22 / 525, -1 / 40)


def rhs(system, n, p, t, y):
    if system == 0:
        return [y[1], -(n + 1) / t * y[1]]
    if system in (1, 2):
        s = p[0]
        u, du = y[0], y[1]
        fr = (n + 1) / t + s * t / 2 + 2 * t * u
        out = [du, -fr * du - s * u - 2 * n * u * u]
        if system == 2:
            out.append(y[3])
            out.append(-fr * y[3] - (s * (1 - p[1]) + p[2] * (4 * n * u + 2 * t * du)) * y[2])
        return out
    if system == 3:
        return [y[1], -(n - 4 + 2 * y[0]) * y[1] + 2 * (n - 2) * (y[0] - y[0] * y[0])]
    if system == 4:
        return [y[1] - y[0], 2 * (1 - y[0]) * y[1]]
    raise ValueError(f"unknown system {system}")


def dopri5(system, n, params, y0, t0, t1, rtol, atol, h0, ceiling, max_steps):
    p = [float(v) for v in params]
    y = [float(v) for v in y0]
    m = len(y)
    r = range(m)
    t, h = float(t0), float(h0)
    k1 = rhs(system, n, p, t, y)
    ts, ys, fs = [t], [list(y)], [list(k1)]
    status, steps = 0, 0
    checked = range(m) if system == 4 else range(0, m, 2)
    while t < t1:
        if steps >= max_steps:
            status = 3
            break
        if h < 1e-14 * max(abs(t), 1.0):
            status = 2
            break
        if t + h > t1:
            h = t1 - t
        steps += 1
        k2 = rhs(system, n, p, t + C2 * h, [y[i] + h * A21 * k1[i] for i in r])
        k3 = rhs(system, n, p, t + C3 * h, [y[i] + h * (A31 * k1[i] + A32 * k2[i]) for i in r])
        k4 = rhs(system, n, p, t + C4 * h,
                 [y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]) for i in r])
        k5 = rhs(system, n, p, t + C5 * h,
                 [y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
                  for i in r])
        k6 = rhs(system, n, p, t + h,
                 [y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i]
                              + A65 * k5[i]) for i in r])
        yn = [y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i])
              for i in r]
        k7 = rhs(system, n, p, t + h, yn)
        err = 0.0
        for i in r:
            sc = atol + rtol * max(abs(y[i]), abs(yn[i]))
            e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i]
                     + E7 * k7[i]) / sc
            err += e * e
        err = math.sqrt(err / m)
        if err != err:
            h *= 0.1
            continue
        if err <= 1.0:
            t += h
            y, k1 = yn, k7
            ts.append(t)
            ys.append(list(y))
            fs.append(list(k1))
            h *= min(5.0, max(0.2, 0.9 * max(err, 1e-10) ** -0.2))
            if any(abs(y[i]) > ceiling for i in checked):
                status = 1
                break
        else:
            h *= max(0.2, 0.9 * err ** -0.2)
    return np.array(ts), np.array(ys), np.array(fs), status
