"""Compiled batch integrators over tabulated right-hand sides.

Every trajectory in a batch is integrated independently with its own step
size, so results do not depend on batch composition or order.
"""
import numpy as np
from numba import njit

# per-trajectory status codes
OK = 0
BLOWUP = 1
MAX_STEPS = 2
STEP_UNDERFLOW = 3

# right-hand-side modes
TABLES = None
FLOW = 1

# Dormand-Prince 5(4) tableau
_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1 = 71 / 57600
_E3 = -71 / 16695
_E4 = 71 / 1920
_E5 = -17253 / 339200
_E6 = 22 / 525
_E7 = -1 / 40


@njit(cache=True, inline="always")
def _rhs(y, dy, dcoef, vbuf, tb):
    q_out, q_a, q_b, q_c, l_out, l_in, l_c, p_out, p_k, p_slot, p_c = tb
    for i in range(dy.size):
        dy[i] = 0j
    x = y[0]
    for k in range(dcoef.shape[0]):
        acc = 0j
        for j in range(dcoef.shape[1] - 1, -1, -1):
            acc = acc * x + dcoef[k, j]
        vbuf[k] = acc
    for t in range(q_out.size):
        dy[q_out[t]] += q_c[t] * y[q_a[t]] * y[q_b[t]]
    for t in range(l_out.size):
        dy[l_out[t]] += l_c[t] * y[l_in[t]]
    for t in range(p_out.size):
        v = p_c[t] * vbuf[p_k[t]]
        if p_slot[t] >= 0:
            v *= y[p_slot[t]]
        dy[p_out[t]] += v


@njit(cache=True, inline="always")
def _flow(y, dy, dcoef, minv):
    # [x, p, M, P]: classical flow plus its linearisation
    x = y[0]
    a = 0j
    b = 0j
    for j in range(dcoef.shape[1] - 1, -1, -1):
        a = a * x + dcoef[1, j]
        b = b * x + dcoef[2, j]
    dy[0] = y[1] * minv
    dy[1] = -a
    dy[2] = y[3] * minv
    dy[3] = -b * y[2]


@njit(cache=True, inline="always")
def _eval(mode, minv, y, dy, dcoef, vbuf, tb):
    # `mode is None` is resolved at compile time, so each mode gets its own
    # specialised kernel
    if mode is None:
        _rhs(y, dy, dcoef, vbuf, tb)
    else:
        _flow(y, dy, dcoef, minv)


@njit(cache=True)
def rhs_batch(Y, dcoef, tb):
    B, n = Y.shape
    out = np.empty_like(Y)
    vbuf = np.empty(dcoef.shape[0], dtype=np.complex128)
    dy = np.empty(n, dtype=np.complex128)
    for b in range(B):
        _rhs(Y[b], dy, dcoef, vbuf, tb)
        out[b, :] = dy
    return out


@njit(cache=True)
def _too_big(y, guard):
    for i in range(y.size):
        a = abs(y[i])
        if not (a <= guard):  # also catches nan
            return True
    return False


@njit(cache=True)
def dopri5_batch(mode, minv, Y0, duration, rtol, atol, h_init, max_steps, guard,
                 dcoef, tb):
    """Adaptive Dormand-Prince integration of every row of Y0 over `duration`.

    Returns (Y, t_reached, n_steps, status, h_last). `h_init[b] <= 0` asks for
    an automatic starting step.
    """
    B, n = Y0.shape
    Y = Y0.copy()
    t_out = np.zeros(B)
    steps = np.zeros(B, dtype=np.int64)
    status = np.zeros(B, dtype=np.int64)
    h_last = np.zeros(B)
    vbuf = np.empty(dcoef.shape[0], dtype=np.complex128)
    k1 = np.empty(n, dtype=np.complex128)
    k2 = np.empty_like(k1)
    k3 = np.empty_like(k1)
    k4 = np.empty_like(k1)
    k5 = np.empty_like(k1)
    k6 = np.empty_like(k1)
    k7 = np.empty_like(k1)
    tmp = np.empty_like(k1)
    ynew = np.empty_like(k1)
    if duration <= 0.0:
        return Y, t_out, steps, status, h_last
    for b in range(B):
        y = Y[b].copy()
        if _too_big(y, guard):
            status[b] = BLOWUP
            continue
        t = 0.0
        _eval(mode, minv, y, k1, dcoef, vbuf, tb)
        h = h_init[b]
        if h <= 0.0:
            # Hairer's first-step heuristic
            d0 = 0.0
            d1 = 0.0
            for i in range(n):
                sc = atol + rtol * abs(y[i])
                d0 += (abs(y[i]) / sc) ** 2
                d1 += (abs(k1[i]) / sc) ** 2
            d0 = np.sqrt(d0 / n)
            d1 = np.sqrt(d1 / n)
            if d0 < 1e-5 or d1 < 1e-5:
                h = 1e-6
            else:
                h = 0.01 * d0 / d1
            h = min(h, duration)
        nacc = 0
        fac_old = 1e-4
        while True:
            if t >= duration:
                break
            if nacc >= max_steps:
                status[b] = MAX_STEPS
                break
            last = False
            if t + h >= duration:
                h = duration - t
                last = True
            for i in range(n):
                tmp[i] = y[i] + h * _A21 * k1[i]
            _eval(mode, minv, tmp, k2, dcoef, vbuf, tb)
            for i in range(n):
                tmp[i] = y[i] + h * (_A31 * k1[i] + _A32 * k2[i])
            _eval(mode, minv, tmp, k3, dcoef, vbuf, tb)
            for i in range(n):
                tmp[i] = y[i] + h * (_A41 * k1[i] + _A42 * k2[i] + _A43 * k3[i])
            _eval(mode, minv, tmp, k4, dcoef, vbuf, tb)
            for i in range(n):
                tmp[i] = y[i] + h * (_A51 * k1[i] + _A52 * k2[i] + _A53 * k3[i] + _A54 * k4[i])
            _eval(mode, minv, tmp, k5, dcoef, vbuf, tb)
            for i in range(n):
                tmp[i] = y[i] + h * (_A61 * k1[i] + _A62 * k2[i] + _A63 * k3[i] + _A64 * k4[i] + _A65 * k5[i])
            _eval(mode, minv, tmp, k6, dcoef, vbuf, tb)
            for i in range(n):
                ynew[i] = y[i] + h * (_B1 * k1[i] + _B3 * k3[i] + _B4 * k4[i] + _B5 * k5[i] + _B6 * k6[i])
            _eval(mode, minv, ynew, k7, dcoef, vbuf, tb)
            err = 0.0
            for i in range(n):
                e = h * (_E1 * k1[i] + _E3 * k3[i] + _E4 * k4[i] + _E5 * k5[i] + _E6 * k6[i] + _E7 * k7[i])
                sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
                err += (abs(e) / sc) ** 2
            err = np.sqrt(err / n)
            if not np.isfinite(err):
                h *= 0.1
                if h < 1e-14 * max(duration, 1.0):
                    status[b] = STEP_UNDERFLOW
                    break
                continue
            if err <= 1.0:
                t = duration if last else t + h
                nacc += 1
                for i in range(n):
                    y[i] = ynew[i]
                    k1[i] = k7[i]
                if _too_big(y, guard):
                    status[b] = BLOWUP
                    break
                # PI step control (Hairer-Wanner DOPRI5)
                fac11 = max(err, 1e-10) ** 0.17
                fac = fac11 / fac_old ** 0.04 / 0.9
                fac = min(5.0, max(0.1, fac))
                fac_old = max(err, 1e-4)
                h_last[b] = h
                h = h / fac
            else:
                fac11 = err ** 0.17
                h = h / min(5.0, fac11 / 0.9)
                if h < 1e-14 * max(duration, 1.0):
                    status[b] = STEP_UNDERFLOW
                    break
        Y[b, :] = y
        t_out[b] = t
        steps[b] = nacc
    return Y, t_out, steps, status, h_last


@njit(cache=True)
def rk4_batch(mode, minv, Y0, duration, n_steps, guard,
              dcoef, tb):
    """Classical fixed-step RK4 with `n_steps` equal steps."""
    B, n = Y0.shape
    Y = Y0.copy()
    t_out = np.zeros(B)
    steps = np.zeros(B, dtype=np.int64)
    status = np.zeros(B, dtype=np.int64)
    vbuf = np.empty(dcoef.shape[0], dtype=np.complex128)
    k1 = np.empty(n, dtype=np.complex128)
    k2 = np.empty_like(k1)
    k3 = np.empty_like(k1)
    k4 = np.empty_like(k1)
    tmp = np.empty_like(k1)
    if duration <= 0.0 or n_steps <= 0:
        return Y, t_out, steps, status
    h = duration / n_steps
    for b in range(B):
        y = Y[b].copy()
        t = 0.0
        for s in range(n_steps):
            _eval(mode, minv, y, k1, dcoef, vbuf, tb)
            for i in range(n):
                tmp[i] = y[i] + 0.5 * h * k1[i]
            _eval(mode, minv, tmp, k2, dcoef, vbuf, tb)
            for i in range(n):
                tmp[i] = y[i] + 0.5 * h * k2[i]
            _eval(mode, minv, tmp, k3, dcoef, vbuf, tb)
            for i in range(n):
                tmp[i] = y[i] + h * k3[i]
            _eval(mode, minv, tmp, k4, dcoef, vbuf, tb)
            for i in range(n):
                y[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            t = (s + 1) * h
            steps[b] = s + 1
            if _too_big(y, guard):
                status[b] = BLOWUP
                break
        Y[b, :] = y
        t_out[b] = t
    return Y, t_out, steps, status
