"""Compiled inner loops: vector field, Jacobian, integrators, tangent flow.

Everything here works on flat float64 arrays so that numba can compile it.
Parameter arrays follow ``PARAM_ORDER``. Integrator kernels take the
right-hand side (and Jacobian) as jitted first-class functions with the
signature ``f(P, s, out)`` so that test systems can reuse the same loops.
"""

import numba
import numpy as np

PARAM_ORDER = (
    "beta1", "beta2", "beta3", "beta4",
    "r1", "r2", "r3",
    "alpha1", "alpha2", "gamma1",
    "h",
)

# undershoots smaller than this are clamped to zero, larger ones abort
CLAMP_TOL = 1e-9
# components decaying on an invariant face are flushed before they turn
# subnormal (subnormal arithmetic is ~100x slower)
FLUSH_TINY = 1e-250

OK = 0
NEGATIVE = 1
NONFINITE = 2
STEP_UNDERFLOW = 3
BUFFER_FULL = 4
TANGENT_COLLAPSE = 5

STATUS_TEXT = {
    OK: "ok",
    NEGATIVE: "state left the nonnegative cone beyond clamp tolerance",
    NONFINITE: "non-finite state",
    STEP_UNDERFLOW: "step size fell below dt_min",
    BUFFER_FULL: "output buffer full",
    TANGENT_COLLAPSE: "tangent vectors collapsed during re-orthonormalization",
}

jit = numba.njit(cache=True, nogil=True)


@jit
def nera_rhs(P, s, out):
    b1 = P[0]; b2 = P[1]; b3 = P[2]; b4 = P[3]
    r1 = P[4]; r2 = P[5]; r3 = P[6]
    a1 = P[7]; a2 = P[8]; g1 = P[9]; h = P[10]
    N = s[0]; E = s[1]; R = s[2]; A = s[3]
    p1 = N / (h + N)
    p2 = E / (h + E)
    p3 = R / (h + R)
    out[0] = b1 * N * (1.0 - N) - r1 * p1 * E - a1 * p1 * A - a2 * p1 * R
    out[1] = r1 * p1 * E - r2 * p2 * R - b2 * E - g1 * p2 * A
    out[2] = r2 * p2 * R - b3 * R - r3 * p3 * A + a2 * p1 * R
    out[3] = r3 * p3 * A - b4 * A + a1 * p1 * A + g1 * p2 * A


@jit
def nera_jac(P, s, J):
    b1 = P[0]; b2 = P[1]; b3 = P[2]; b4 = P[3]
    r1 = P[4]; r2 = P[5]; r3 = P[6]
    a1 = P[7]; a2 = P[8]; g1 = P[9]; h = P[10]
    N = s[0]; E = s[1]; R = s[2]; A = s[3]
    p1 = N / (h + N)
    p2 = E / (h + E)
    p3 = R / (h + R)
    d1 = h / ((h + N) * (h + N))
    d2 = h / ((h + E) * (h + E))
    d3 = h / ((h + R) * (h + R))

    J[0, 0] = b1 * (1.0 - 2.0 * N) - (r1 * E + a1 * A + a2 * R) * d1
    J[0, 1] = -r1 * p1
    J[0, 2] = -a2 * p1
    J[0, 3] = -a1 * p1

    J[1, 0] = r1 * E * d1
    J[1, 1] = -b2 + r1 * p1 - (r2 * R + g1 * A) * d2
    J[1, 2] = -r2 * p2
    J[1, 3] = -g1 * p2

    J[2, 0] = a2 * R * d1
    J[2, 1] = r2 * R * d2
    J[2, 2] = -b3 + r2 * p2 + a2 * p1 - r3 * A * d3
    J[2, 3] = -r3 * p3

    J[3, 0] = a1 * A * d1
    J[3, 1] = g1 * A * d2
    J[3, 2] = r3 * A * d3
    J[3, 3] = -b4 + r3 * p3 + a1 * p1 + g1 * p2


@jit
def _clamp(y):
    for i in range(y.shape[0]):
        v = y[i]
        if not np.isfinite(v):
            return NONFINITE
        if v < FLUSH_TINY:
            if v < -CLAMP_TOL:
                return NEGATIVE
            y[i] = 0.0
    return OK


@jit
def rk4_run(rhs, P, s0, t0, dt, n_steps, record_from, stride, out_t, out_y):
    """Fixed-step classical RK4.

    Records every ``stride``-th step whose index is >= ``record_from``
    (step 0 is the initial state). Returns (n_recorded, status,
    last_step_index, final_state).
    """
    n = s0.shape[0]
    y = s0.copy()
    k1 = np.empty(n); k2 = np.empty(n); k3 = np.empty(n); k4 = np.empty(n)
    tmp = np.empty(n)
    m = 0
    cap = out_t.shape[0]
    if record_from == 0 and m < cap:
        out_t[m] = t0
        out_y[m, :] = y
        m += 1
    half = 0.5 * dt
    for i in range(1, n_steps + 1):
        rhs(P, y, k1)
        for j in range(n):
            tmp[j] = y[j] + half * k1[j]
        rhs(P, tmp, k2)
        for j in range(n):
            tmp[j] = y[j] + half * k2[j]
        rhs(P, tmp, k3)
        for j in range(n):
            tmp[j] = y[j] + dt * k3[j]
        rhs(P, tmp, k4)
        for j in range(n):
            y[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
        status = _clamp(y)
        if status != OK:
            return m, status, i, y
        if i >= record_from and (i - record_from) % stride == 0 and m < cap:
            out_t[m] = t0 + i * dt
            out_y[m, :] = y
            m += 1
    return m, OK, n_steps, y


@jit
def rk4_sample(rhs, P, s0, times, dt_max, out_y):
    """RK4 from ``times[0]`` hitting every sample time exactly.

    Each gap is split into ceil(gap / dt_max) equal steps. Fills out_y row
    by row and returns (status, rows_filled).
    """
    n = s0.shape[0]
    y = s0.copy()
    k1 = np.empty(n); k2 = np.empty(n); k3 = np.empty(n); k4 = np.empty(n)
    tmp = np.empty(n)
    out_y[0, :] = y
    for r in range(1, times.shape[0]):
        gap = times[r] - times[r - 1]
        m = int(np.ceil(gap / dt_max - 1e-9))
        if m < 1:
            m = 1
        dt = gap / m
        half = 0.5 * dt
        for _ in range(m):
            rhs(P, y, k1)
            for j in range(n):
                tmp[j] = y[j] + half * k1[j]
            rhs(P, tmp, k2)
            for j in range(n):
                tmp[j] = y[j] + half * k2[j]
            rhs(P, tmp, k3)
            for j in range(n):
                tmp[j] = y[j] + dt * k3[j]
            rhs(P, tmp, k4)
            for j in range(n):
                y[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
            status = _clamp(y)
            if status != OK:
                return status, r
        out_y[r, :] = y
    return OK, times.shape[0]


# Dormand-Prince 5(4) tableau
_C2 = 1.0 / 5.0
_C3 = 3.0 / 10.0
_C4 = 4.0 / 5.0
_C5 = 8.0 / 9.0
_A21 = 1.0 / 5.0
_A31 = 3.0 / 40.0; _A32 = 9.0 / 40.0
_A41 = 44.0 / 45.0; _A42 = -56.0 / 15.0; _A43 = 32.0 / 9.0
_A51 = 19372.0 / 6561.0; _A52 = -25360.0 / 2187.0; _A53 = 64448.0 / 6561.0
_A54 = -212.0 / 729.0
_A61 = 9017.0 / 3168.0; _A62 = -355.0 / 33.0; _A63 = 46732.0 / 5247.0
_A64 = 49.0 / 176.0; _A65 = -5103.0 / 18656.0
_B1 = 35.0 / 384.0; _B3 = 500.0 / 1113.0; _B4 = 125.0 / 192.0
_B5 = -2187.0 / 6784.0; _B6 = 11.0 / 84.0
# difference between 5th and embedded 4th order weights
_E1 = 71.0 / 57600.0; _E3 = -71.0 / 16695.0; _E4 = 71.0 / 1920.0
_E5 = -17253.0 / 339200.0; _E6 = 22.0 / 525.0; _E7 = -1.0 / 40.0


@jit
def _dp_stages(rhs, P, y, k1, dt, k2, k3, k4, k5, k6, k7, tmp, ynew):
    n = y.shape[0]
    for j in range(n):
        tmp[j] = y[j] + dt * _A21 * k1[j]
    rhs(P, tmp, k2)
    for j in range(n):
        tmp[j] = y[j] + dt * (_A31 * k1[j] + _A32 * k2[j])
    rhs(P, tmp, k3)
    for j in range(n):
        tmp[j] = y[j] + dt * (_A41 * k1[j] + _A42 * k2[j] + _A43 * k3[j])
    rhs(P, tmp, k4)
    for j in range(n):
        tmp[j] = y[j] + dt * (_A51 * k1[j] + _A52 * k2[j] + _A53 * k3[j]
                              + _A54 * k4[j])
    rhs(P, tmp, k5)
    for j in range(n):
        tmp[j] = y[j] + dt * (_A61 * k1[j] + _A62 * k2[j] + _A63 * k3[j]
                              + _A64 * k4[j] + _A65 * k5[j])
    rhs(P, tmp, k6)
    for j in range(n):
        ynew[j] = y[j] + dt * (_B1 * k1[j] + _B3 * k3[j] + _B4 * k4[j]
                               + _B5 * k5[j] + _B6 * k6[j])
    rhs(P, ynew, k7)


@jit
def dp5_fixed(rhs, P, s0, dt, n_steps):
    """Propagate the 5th-order Dormand-Prince solution with a fixed step.

    Used for order measurement only: the state update is Kahan-compensated
    so accumulated round-off stays below the small truncation errors of the
    finest steps.
    """
    n = s0.shape[0]
    y = s0.copy()
    comp = np.zeros(n)
    k1 = np.empty(n); k2 = np.empty(n); k3 = np.empty(n); k4 = np.empty(n)
    k5 = np.empty(n); k6 = np.empty(n); k7 = np.empty(n)
    tmp = np.empty(n); ynew = np.empty(n)
    rhs(P, y, k1)
    for _ in range(n_steps):
        _dp_stages(rhs, P, y, k1, dt, k2, k3, k4, k5, k6, k7, tmp, ynew)
        for j in range(n):
            inc = dt * (_B1 * k1[j] + _B3 * k3[j] + _B4 * k4[j]
                        + _B5 * k5[j] + _B6 * k6[j]) - comp[j]
            t = y[j] + inc
            comp[j] = (t - y[j]) - inc
            y[j] = t
        rhs(P, y, k1)
    return y


@jit
def dp54_run(rhs, P, s0, t0, t_end, dt0, atol, rtol, dt_min, dt_max,
             record_from, out_t, out_y):
    """Adaptive Dormand-Prince 5(4) with local extrapolation.

    Records every accepted step with t >= ``record_from`` until the buffer
    fills; a full buffer returns ``BUFFER_FULL`` together with the current
    (t, y, dt) so the caller can resume. Returns
    (n_recorded, status, t, y, dt, n_accepted, n_rejected).
    """
    n = s0.shape[0]
    y = s0.copy()
    k1 = np.empty(n); k2 = np.empty(n); k3 = np.empty(n); k4 = np.empty(n)
    k5 = np.empty(n); k6 = np.empty(n); k7 = np.empty(n)
    tmp = np.empty(n); ynew = np.empty(n)
    cap = out_t.shape[0]
    t = t0
    m = 0
    n_acc = 0
    n_rej = 0
    rhs(P, y, k1)

    dt = dt0
    if dt <= 0.0:
        d0 = 0.0
        d1 = 0.0
        for j in range(n):
            sc = atol + rtol * abs(y[j])
            d0 += (y[j] / sc) ** 2
            d1 += (k1[j] / sc) ** 2
        d0 = np.sqrt(d0 / n)
        d1 = np.sqrt(d1 / n)
        if d0 < 1e-5 or d1 < 1e-5:
            dt = 1e-6
        else:
            dt = 0.01 * d0 / d1
    dt = min(max(dt, dt_min), dt_max)

    while t < t_end:
        if m >= cap:
            return m, BUFFER_FULL, t, y, dt, n_acc, n_rej
        last = False
        if t + dt >= t_end:
            dt = t_end - t
            last = True
        _dp_stages(rhs, P, y, k1, dt, k2, k3, k4, k5, k6, k7, tmp, ynew)
        err = 0.0
        for j in range(n):
            e = dt * (_E1 * k1[j] + _E3 * k3[j] + _E4 * k4[j] + _E5 * k5[j]
                      + _E6 * k6[j] + _E7 * k7[j])
            sc = atol + rtol * max(abs(y[j]), abs(ynew[j]))
            err += (e / sc) ** 2
        err = np.sqrt(err / n)
        if not np.isfinite(err):
            err = 1e10
        if err <= 1.0:
            t = t_end if last else t + dt
            y[:] = ynew
            k1[:] = k7
            n_acc += 1
            status = _clamp(y)
            if status != OK:
                return m, status, t, y, dt, n_acc, n_rej
            if t >= record_from:
                out_t[m] = t
                out_y[m, :] = y
                m += 1
            if err == 0.0:
                fac = 5.0
            else:
                fac = min(5.0, max(0.2, 0.9 * err ** -0.2))
            dt = min(dt * fac, dt_max)
        else:
            n_rej += 1
            dt = dt * max(0.2, 0.9 * err ** -0.2)
            if dt < dt_min:
                return m, STEP_UNDERFLOW, t, y, dt, n_acc, n_rej
    return m, OK, t, y, dt, n_acc, n_rej


@jit
def _tangent_rhs(rhs, jac, P, y, Q, fy, J, dQ):
    """State derivative into ``fy`` and J(y) @ Q into ``dQ``."""
    n = y.shape[0]
    rhs(P, y, fy)
    jac(P, y, J)
    for i in range(n):
        for k in range(n):
            acc = 0.0
            for l in range(n):
                acc += J[i, l] * Q[l, k]
            dQ[i, k] = acc


@jit
def _trace(jac, P, y, J):
    jac(P, y, J)
    acc = 0.0
    for i in range(y.shape[0]):
        acc += J[i, i]
    return acc


@jit
def lyapunov_run(rhs, jac, P, s0, dt, n_transient, steps_per_renorm,
                 n_renorm):
    """Benettin-style spectrum: RK4 on state + tangent frame, MGS every
    ``steps_per_renorm`` steps.

    Tangent vectors are the columns of Q. Returns (log_sums, trace_integral,
    history, trace_history, final_state, status, renorm_index);
    ``history[k]`` holds the accumulated log stretches after ``k + 1``
    re-orthonormalizations and ``trace_history[k]`` the matching integral of
    trace(J).
    """
    n = s0.shape[0]
    y = s0.copy()
    k1 = np.empty(n); k2 = np.empty(n); k3 = np.empty(n); k4 = np.empty(n)
    tmp = np.empty(n)
    J = np.empty((n, n))
    history = np.zeros((n_renorm, n))
    trace_hist = np.zeros(n_renorm)
    sums = np.zeros(n)
    half = 0.5 * dt

    for _ in range(n_transient):
        rhs(P, y, k1)
        for j in range(n):
            tmp[j] = y[j] + half * k1[j]
        rhs(P, tmp, k2)
        for j in range(n):
            tmp[j] = y[j] + half * k2[j]
        rhs(P, tmp, k3)
        for j in range(n):
            tmp[j] = y[j] + dt * k3[j]
        rhs(P, tmp, k4)
        for j in range(n):
            y[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
        status = _clamp(y)
        if status != OK:
            return sums, 0.0, history, trace_hist, y, status, -1

    Q = np.eye(n)
    Qt = np.empty((n, n))
    K1 = np.empty((n, n)); K2 = np.empty((n, n))
    K3 = np.empty((n, n)); K4 = np.empty((n, n))
    v = np.empty(n)
    trace_int = 0.0
    tr_prev = _trace(jac, P, y, J)

    for r in range(n_renorm):
        for _ in range(steps_per_renorm):
            _tangent_rhs(rhs, jac, P, y, Q, k1, J, K1)
            for j in range(n):
                tmp[j] = y[j] + half * k1[j]
                for k in range(n):
                    Qt[j, k] = Q[j, k] + half * K1[j, k]
            _tangent_rhs(rhs, jac, P, tmp, Qt, k2, J, K2)
            for j in range(n):
                tmp[j] = y[j] + half * k2[j]
                for k in range(n):
                    Qt[j, k] = Q[j, k] + half * K2[j, k]
            _tangent_rhs(rhs, jac, P, tmp, Qt, k3, J, K3)
            for j in range(n):
                tmp[j] = y[j] + dt * k3[j]
                for k in range(n):
                    Qt[j, k] = Q[j, k] + dt * K3[j, k]
            _tangent_rhs(rhs, jac, P, tmp, Qt, k4, J, K4)
            for j in range(n):
                y[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
                for k in range(n):
                    Q[j, k] += dt / 6.0 * (K1[j, k] + 2.0 * K2[j, k]
                                           + 2.0 * K3[j, k] + K4[j, k])
            status = _clamp(y)
            if status != OK:
                return sums, trace_int, history, trace_hist, y, status, r
            tr = _trace(jac, P, y, J)
            trace_int += half * (tr_prev + tr)
            tr_prev = tr

        # modified Gram-Schmidt; R[k, k] accumulates into sums[k]
        for k in range(n):
            for j in range(n):
                v[j] = Q[j, k]
            for i in range(k):
                dot = 0.0
                for j in range(n):
                    dot += Q[j, i] * v[j]
                for j in range(n):
                    v[j] -= dot * Q[j, i]
            norm = 0.0
            for j in range(n):
                norm += v[j] * v[j]
            norm = np.sqrt(norm)
            if not (norm > 1e-300) or not np.isfinite(norm):
                return sums, trace_int, history, trace_hist, y, TANGENT_COLLAPSE, r
            for j in range(n):
                Q[j, k] = v[j] / norm
            sums[k] += np.log(norm)
        for k in range(n):
            history[r, k] = sums[k]
        trace_hist[r] = trace_int
    return sums, trace_int, history, trace_hist, y, OK, n_renorm


def params_array(values):
    return np.ascontiguousarray(values, dtype=np.float64)
