"""Compiled integration kernels for the caldera flow.

Single Dormand-Prince 5(4) code path with PI step control, quartic dense
output, bisection event localization, optional trajectory sampling and
path-integral (Lagrangian descriptor) accumulation.  Backward integration is
always expressed by the callers as forward integration of the momentum-negated
state, so time-reversal symmetries hold bit-for-bit.

Conventions used throughout:
  * ``r_esc <= 0`` disables the escape event, ``plane_dir == 0`` disables the
    section-crossing event, ``ld_p <= 0`` disables descriptor accumulation,
    an empty ``ts`` array disables sampling.
  * status codes: 0 timed out, 1 escaped, 2 hit the section plane,
    3 energy drift guard tripped, 4 step-size underflow.
"""
from __future__ import annotations

import numpy as np
from numba import njit, prange

STATUS_TIMEOUT = 0
STATUS_ESCAPED = 1
STATUS_PLANE = 2
STATUS_DRIFT = 3
STATUS_UNDERFLOW = 4

# Dormand-Prince 5(4) tableau
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = (
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
)
_A61, _A62, _A63, _A64, _A65 = (
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
)
_B1, _B3, _B4, _B5, _B6 = (
    35.0 / 384.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
)
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71.0 / 57600.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)

# quartic dense-output matrix: y(t0 + theta*h) = y0 + h * sum_s w_s(theta) k_s
_P = np.array(
    [
        [
            1.0,
            -8048581381.0 / 2820520608.0,
            8663915743.0 / 2820520608.0,
            -12715105075.0 / 11282082432.0,
        ],
        [0.0, 0.0, 0.0, 0.0],
        [
            0.0,
            131558114200.0 / 32700410799.0,
            -68118460800.0 / 10900136933.0,
            87487479700.0 / 32700410799.0,
        ],
        [
            0.0,
            -1754552775.0 / 470086768.0,
            14199869525.0 / 1410260304.0,
            -10690763975.0 / 1880347072.0,
        ],
        [
            0.0,
            127303824393.0 / 49829197408.0,
            -318862633887.0 / 49829197408.0,
            701980252875.0 / 199316789632.0,
        ],
        [
            0.0,
            -282668133.0 / 205662961.0,
            2019193451.0 / 616988883.0,
            -1453857185.0 / 822651844.0,
        ],
        [0.0, 40617522.0 / 29380423.0, -110615467.0 / 29380423.0, 69997945.0 / 29380423.0],
    ]
)

# PI controller (Lund stabilization), Hairer's DOPRI5 defaults
_SAFE = 0.9
_BETA = 0.04
_EXPO1 = 0.2 - 0.75 * _BETA
_FAC_MIN = 0.2
_FAC_MAX = 10.0


@njit(cache=True)
def _rhs_into(y, out, c1, c2, c3, lam):
    u = lam * y[0]
    yy = y[1]
    gu = 2.0 * c1 * u - c3 * (4.0 * u * u * u - 12.0 * u * yy * yy)
    gy = 2.0 * c1 * yy + c2 - c3 * (4.0 * yy * yy * yy - 12.0 * u * u * yy)
    out[0] = y[2]
    out[1] = y[3]
    out[2] = -(lam * gu)
    out[3] = -gy


@njit(cache=True)
def _potential(x, yy, c1, c2, c3, lam):
    u = lam * x
    u2 = u * u
    y2 = yy * yy
    return c1 * (u2 + y2) + c2 * yy - c3 * (u2 * u2 + y2 * y2 - 6.0 * u2 * y2)


@njit(cache=True)
def _energy(y, c1, c2, c3, lam):
    return 0.5 * (y[2] * y[2] + y[3] * y[3]) + _potential(y[0], y[1], c1, c2, c3, lam)


@njit(cache=True)
def _dense_into(theta, h, y, K, out):
    w0 = theta * (_P[0, 0] + theta * (_P[0, 1] + theta * (_P[0, 2] + theta * _P[0, 3])))
    w2 = theta * (_P[2, 0] + theta * (_P[2, 1] + theta * (_P[2, 2] + theta * _P[2, 3])))
    w3 = theta * (_P[3, 0] + theta * (_P[3, 1] + theta * (_P[3, 2] + theta * _P[3, 3])))
    w4 = theta * (_P[4, 0] + theta * (_P[4, 1] + theta * (_P[4, 2] + theta * _P[4, 3])))
    w5 = theta * (_P[5, 0] + theta * (_P[5, 1] + theta * (_P[5, 2] + theta * _P[5, 3])))
    w6 = theta * (_P[6, 0] + theta * (_P[6, 1] + theta * (_P[6, 2] + theta * _P[6, 3])))
    for i in range(4):
        out[i] = y[i] + h * (
            w0 * K[0, i]
            + w2 * K[2, i]
            + w3 * K[3, i]
            + w4 * K[4, i]
            + w5 * K[5, i]
            + w6 * K[6, i]
        )


@njit(cache=True)
def _initial_step(y, f, t_bound, rtol, atol, c1, c2, c3, lam):
    d0 = 0.0
    d1 = 0.0
    for i in range(4):
        sc = atol + rtol * abs(y[i])
        d0 += (y[i] / sc) ** 2
        d1 += (f[i] / sc) ** 2
    d0 = np.sqrt(d0 / 4.0)
    d1 = np.sqrt(d1 / 4.0)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    y1 = np.empty(4)
    f1 = np.empty(4)
    for i in range(4):
        y1[i] = y[i] + h0 * f[i]
    _rhs_into(y1, f1, c1, c2, c3, lam)
    d2 = 0.0
    for i in range(4):
        sc = atol + rtol * abs(y[i])
        d2 += ((f1[i] - f[i]) / sc) ** 2
    d2 = np.sqrt(d2 / 4.0) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    h = min(100.0 * h0, h1)
    return min(h, t_bound)


@njit(cache=True)
def _ld_integrand(px, py, p_exp):
    return abs(px) ** p_exp + abs(py) ** p_exp


@njit(cache=True)
def _locate_crossing(h, y, K, g_old, g_new, plane, is_escape, ttol, c1, c2, c3, lam, scratch):
    """Bisect the dense output for the event time; returns theta of the crossing.

    For the escape event ``g = r_esc^2 - (u^2 + y^2)`` and for the plane event
    ``g = y - plane``; in both cases the sign change between step endpoints is
    already established by the caller.
    """
    ta = 0.0
    tb = 1.0
    ga = g_old
    while (tb - ta) * h > ttol:
        tm = 0.5 * (ta + tb)
        _dense_into(tm, h, y, K, scratch)
        if is_escape:
            u = lam * scratch[0]
            gm = plane - (u * u + scratch[1] * scratch[1])
        else:
            gm = scratch[1] - plane
        if (ga > 0.0 and gm > 0.0) or (ga < 0.0 and gm < 0.0):
            ta = tm
            ga = gm
        else:
            tb = tm
    return tb


@njit(cache=True)
def _propagate(
    y0,
    t_bound,
    rtol,
    atol,
    c1,
    c2,
    c3,
    lam,
    drift_tol,
    r_esc,
    plane_value,
    plane_dir,
    event_ttol,
    ld_p,
    ts,
    ys,
):
    """Integrate the caldera flow from t=0 to t_bound or the first event.

    Returns (status, channel, t_end, y_end, max_drift, n_samples, ld_acc).
    """
    y = y0.copy()
    f0 = np.empty(4)
    _rhs_into(y, f0, c1, c2, c3, lam)
    e_ref = _energy(y, c1, c2, c3, lam)
    e_scale = max(1.0, abs(e_ref))

    K = np.empty((7, 4))
    for i in range(4):
        K[0, i] = f0[i]
    ytmp = np.empty(4)
    ynew = np.empty(4)
    yev = np.empty(4)
    scratch = np.empty(4)

    use_escape = r_esc > 0.0
    use_plane = plane_dir != 0.0
    resc2 = r_esc * r_esc

    nfill = 0
    while nfill < ts.shape[0] and ts[nfill] <= 0.0:
        for i in range(4):
            ys[nfill, i] = y[i]
        nfill += 1

    ld_acc = 0.0
    max_drift = 0.0

    if use_escape:
        u = lam * y[0]
        g_esc_old = resc2 - (u * u + y[1] * y[1])
        if g_esc_old < 0.0:
            # already outside the escape radius: report immediately
            ch = _channel_of(y, lam)
            return STATUS_ESCAPED, ch, 0.0, y, 0.0, nfill, 0.0
    else:
        g_esc_old = 0.0
    if use_plane:
        g_pl_old = y[1] - plane_value
    else:
        g_pl_old = 0.0

    h = _initial_step(y, f0, t_bound, rtol, atol, c1, c2, c3, lam)
    t = 0.0
    facold = 1e-4
    last_rejected = False

    while t < t_bound:
        clamped = False
        if h > t_bound - t:
            h = t_bound - t
            clamped = True
        if h < 4e-15 * max(1.0, t):
            return STATUS_UNDERFLOW, 0, t, y, max_drift, nfill, ld_acc

        # stages
        for i in range(4):
            ytmp[i] = y[i] + h * (_A21 * K[0, i])
        _rhs_into(ytmp, scratch, c1, c2, c3, lam)
        for i in range(4):
            K[1, i] = scratch[i]
            ytmp[i] = y[i] + h * (_A31 * K[0, i] + _A32 * K[1, i])
        _rhs_into(ytmp, scratch, c1, c2, c3, lam)
        for i in range(4):
            K[2, i] = scratch[i]
            ytmp[i] = y[i] + h * (_A41 * K[0, i] + _A42 * K[1, i] + _A43 * K[2, i])
        _rhs_into(ytmp, scratch, c1, c2, c3, lam)
        for i in range(4):
            K[3, i] = scratch[i]
            ytmp[i] = y[i] + h * (
                _A51 * K[0, i] + _A52 * K[1, i] + _A53 * K[2, i] + _A54 * K[3, i]
            )
        _rhs_into(ytmp, scratch, c1, c2, c3, lam)
        for i in range(4):
            K[4, i] = scratch[i]
            ytmp[i] = y[i] + h * (
                _A61 * K[0, i]
                + _A62 * K[1, i]
                + _A63 * K[2, i]
                + _A64 * K[3, i]
                + _A65 * K[4, i]
            )
        _rhs_into(ytmp, scratch, c1, c2, c3, lam)
        for i in range(4):
            K[5, i] = scratch[i]
            ynew[i] = y[i] + h * (
                _B1 * K[0, i] + _B3 * K[2, i] + _B4 * K[3, i] + _B5 * K[4, i] + _B6 * K[5, i]
            )
        _rhs_into(ynew, scratch, c1, c2, c3, lam)
        for i in range(4):
            K[6, i] = scratch[i]

        err = 0.0
        for i in range(4):
            ei = h * (
                _E1 * K[0, i]
                + _E3 * K[2, i]
                + _E4 * K[3, i]
                + _E5 * K[4, i]
                + _E6 * K[5, i]
                + _E7 * K[6, i]
            )
            sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            err += (ei / sc) ** 2
        err = np.sqrt(err / 4.0)

        if not (err <= 1.0):
            fac11 = err ** _EXPO1
            h = h / min(1.0 / _FAC_MIN, fac11 / _SAFE)
            last_rejected = True
            continue

        # accepted; check events inside the step
        t_new = t_bound if clamped else t + h
        theta_event = 2.0
        event_status = 0
        if use_escape:
            u = lam * ynew[0]
            g_esc_new = resc2 - (u * u + ynew[1] * ynew[1])
            if g_esc_old >= 0.0 and g_esc_new < 0.0:
                theta_event = _locate_crossing(
                    h, y, K, g_esc_old, g_esc_new, resc2, True, event_ttol, c1, c2, c3, lam, scratch
                )
                event_status = STATUS_ESCAPED
        else:
            g_esc_new = 0.0
        if use_plane:
            g_pl_new = ynew[1] - plane_value
            hit = (plane_dir > 0.0 and g_pl_old < 0.0 and g_pl_new >= 0.0) or (
                plane_dir < 0.0 and g_pl_old > 0.0 and g_pl_new <= 0.0
            )
            if hit:
                th = _locate_crossing(
                    h, y, K, g_pl_old, g_pl_new, plane_value, False, event_ttol, c1, c2, c3, lam, scratch
                )
                if th < theta_event:
                    theta_event = th
                    event_status = STATUS_PLANE
        else:
            g_pl_new = 0.0

        have_event = event_status != 0
        if have_event:
            _dense_into(theta_event, h, y, K, yev)
            t_eff = t + theta_event * h
        else:
            t_eff = t_new

        while nfill < ts.shape[0] and ts[nfill] <= t_eff:
            th = (ts[nfill] - t) / h
            _dense_into(th, h, y, K, ys[nfill])
            nfill += 1

        if ld_p > 0.0:
            h_eff = t_eff - t
            if h_eff > 0.0:
                fsum = _ld_integrand(y[2], y[3], ld_p)
                for k in range(1, 5):
                    th = (k * 0.25) * h_eff / h
                    _dense_into(th, h, y, K, scratch)
                    v = _ld_integrand(scratch[2], scratch[3], ld_p)
                    if k == 1 or k == 3:
                        fsum += 4.0 * v
                    elif k == 2:
                        fsum += 2.0 * v
                    else:
                        fsum += v
                ld_acc += h_eff * fsum / 12.0

        if have_event:
            drift = abs(_energy(yev, c1, c2, c3, lam) - e_ref) / e_scale
            if drift > max_drift:
                max_drift = drift
            if max_drift > drift_tol:
                return STATUS_DRIFT, 0, t_eff, yev, max_drift, nfill, ld_acc
            if event_status == STATUS_ESCAPED:
                ch = _channel_of(yev, lam)
                return STATUS_ESCAPED, ch, t_eff, yev, max_drift, nfill, ld_acc
            return STATUS_PLANE, 0, t_eff, yev, max_drift, nfill, ld_acc

        drift = abs(_energy(ynew, c1, c2, c3, lam) - e_ref) / e_scale
        if drift > max_drift:
            max_drift = drift
        if max_drift > drift_tol:
            return STATUS_DRIFT, 0, t_new, ynew, max_drift, nfill, ld_acc

        # commit the step
        t = t_new
        for i in range(4):
            y[i] = ynew[i]
            K[0, i] = K[6, i]
        g_esc_old = g_esc_new
        g_pl_old = g_pl_new

        fac11 = err ** _EXPO1
        fac = fac11 / facold ** _BETA
        fac = max(1.0 / _FAC_MAX, min(1.0 / _FAC_MIN, fac / _SAFE))
        h_next = h / fac
        if last_rejected and h_next > h:
            h_next = h
        h = h_next
        facold = max(err, 1e-4)
        last_rejected = False

    return STATUS_TIMEOUT, 0, t, y, max_drift, nfill, ld_acc


@njit(cache=True)
def _channel_of(y, lam):
    """Escape channel from the quadrant of (u, y): 1 TL, 2 TR, 3 BR, 4 BL."""
    u = lam * y[0]
    if y[1] >= 0.0:
        return 2 if u >= 0.0 else 1
    return 3 if u >= 0.0 else 4


_EMPTY_TS = np.empty(0)
_EMPTY_YS = np.empty((0, 4))


@njit(cache=True)
def _classify_one(y0, tau, rtol, atol, drift_tol, r_esc, event_ttol, c1, c2, c3, lam):
    """Forward and backward escape legs; returns (origin, fate, st_fwd, st_bwd, drift)."""
    no_ts = np.empty(0)
    no_ys = np.empty((0, 4))
    st_f, ch_f, _, _, dr_f, _, _ = _propagate(
        y0, tau, rtol, atol, c1, c2, c3, lam, drift_tol, r_esc, 0.0, 0.0, event_ttol, 0.0,
        no_ts, no_ys,
    )
    yb = y0.copy()
    yb[2] = -yb[2]
    yb[3] = -yb[3]
    st_b, ch_b, _, _, dr_b, _, _ = _propagate(
        yb, tau, rtol, atol, c1, c2, c3, lam, drift_tol, r_esc, 0.0, 0.0, event_ttol, 0.0,
        no_ts, no_ys,
    )
    fate = ch_f if st_f == STATUS_ESCAPED else 0
    origin = ch_b if st_b == STATUS_ESCAPED else 0
    return origin, fate, st_f, st_b, max(dr_f, dr_b)


@njit(cache=True, parallel=True)
def _classify_grid(
    states, valid, tau, rtol, atol, drift_tol, r_esc, event_ttol, c1, c2, c3, lam,
    origin_out, fate_out, fail_out,
):
    n = states.shape[0]
    for i in prange(n):
        if valid[i] == 0:
            continue
        o, f, st_f, st_b, _ = _classify_one(
            states[i], tau, rtol, atol, drift_tol, r_esc, event_ttol, c1, c2, c3, lam
        )
        origin_out[i] = o
        fate_out[i] = f
        fail_out[i] = 1 if (st_f >= STATUS_DRIFT or st_b >= STATUS_DRIFT) else 0


@njit(cache=True)
def _ld_one(y0, tau_ld, p_exp, rtol, atol, drift_tol, r_esc, event_ttol, c1, c2, c3, lam):
    """Forward and backward descriptor contributions, truncated at escape."""
    no_ts = np.empty(0)
    no_ys = np.empty((0, 4))
    st_f, _, _, _, _, _, m_f = _propagate(
        y0, tau_ld, rtol, atol, c1, c2, c3, lam, drift_tol, r_esc, 0.0, 0.0, event_ttol, p_exp,
        no_ts, no_ys,
    )
    yb = y0.copy()
    yb[2] = -yb[2]
    yb[3] = -yb[3]
    st_b, _, _, _, _, _, m_b = _propagate(
        yb, tau_ld, rtol, atol, c1, c2, c3, lam, drift_tol, r_esc, 0.0, 0.0, event_ttol, p_exp,
        no_ts, no_ys,
    )
    failed = 1 if (st_f >= STATUS_DRIFT or st_b >= STATUS_DRIFT) else 0
    return m_f, m_b, failed


@njit(cache=True, parallel=True)
def _ld_grid(
    states, valid, tau_ld, p_exp, rtol, atol, drift_tol, r_esc, event_ttol, c1, c2, c3, lam,
    fwd_out, bwd_out, fail_out,
):
    n = states.shape[0]
    for i in prange(n):
        if valid[i] == 0:
            continue
        m_f, m_b, bad = _ld_one(
            states[i], tau_ld, p_exp, rtol, atol, drift_tol, r_esc, event_ttol, c1, c2, c3, lam
        )
        fwd_out[i] = m_f
        bwd_out[i] = m_b
        fail_out[i] = bad


@njit(cache=True)
def _rhs_var_into(y, out, c1, c2, c3, lam):
    """State + 4x4 state-transition matrix (row-major in y[4:20])."""
    u = lam * y[0]
    yy = y[1]
    gu = 2.0 * c1 * u - c3 * (4.0 * u * u * u - 12.0 * u * yy * yy)
    gy = 2.0 * c1 * yy + c2 - c3 * (4.0 * yy * yy * yy - 12.0 * u * u * yy)
    vxx = lam * lam * (2.0 * c1 - c3 * (12.0 * u * u - 12.0 * yy * yy))
    vxy = lam * (24.0 * c3 * u * yy)
    vyy = 2.0 * c1 - c3 * (12.0 * yy * yy - 12.0 * u * u)
    out[0] = y[2]
    out[1] = y[3]
    out[2] = -(lam * gu)
    out[3] = -gy
    for c in range(4):
        out[4 + c] = y[12 + c]
        out[8 + c] = y[16 + c]
        out[12 + c] = -vxx * y[4 + c] - vxy * y[8 + c]
        out[16 + c] = -vxy * y[4 + c] - vyy * y[8 + c]


@njit(cache=True)
def _propagate_var(y0, t_bound, rtol, atol, c1, c2, c3, lam):
    """Fixed-horizon integration of state + variational matrix (20 components)."""
    n = 20
    y = y0.copy()
    K = np.empty((7, n))
    ytmp = np.empty(n)
    ynew = np.empty(n)
    scratch = np.empty(n)
    _rhs_var_into(y, scratch, c1, c2, c3, lam)
    for i in range(n):
        K[0, i] = scratch[i]

    # initial step from the 4 dynamical components only
    f4 = np.empty(4)
    for i in range(4):
        f4[i] = K[0, i]
    h = _initial_step(y[:4].copy(), f4, t_bound, rtol, atol, c1, c2, c3, lam)

    t = 0.0
    facold = 1e-4
    last_rejected = False
    while t < t_bound:
        clamped = False
        if h > t_bound - t:
            h = t_bound - t
            clamped = True
        if h < 4e-15 * max(1.0, t):
            return STATUS_UNDERFLOW, y
        for i in range(n):
            ytmp[i] = y[i] + h * (_A21 * K[0, i])
        _rhs_var_into(ytmp, scratch, c1, c2, c3, lam)
        for i in range(n):
            K[1, i] = scratch[i]
            ytmp[i] = y[i] + h * (_A31 * K[0, i] + _A32 * K[1, i])
        _rhs_var_into(ytmp, scratch, c1, c2, c3, lam)
        for i in range(n):
            K[2, i] = scratch[i]
            ytmp[i] = y[i] + h * (_A41 * K[0, i] + _A42 * K[1, i] + _A43 * K[2, i])
        _rhs_var_into(ytmp, scratch, c1, c2, c3, lam)
        for i in range(n):
            K[3, i] = scratch[i]
            ytmp[i] = y[i] + h * (
                _A51 * K[0, i] + _A52 * K[1, i] + _A53 * K[2, i] + _A54 * K[3, i]
            )
        _rhs_var_into(ytmp, scratch, c1, c2, c3, lam)
        for i in range(n):
            K[4, i] = scratch[i]
            ytmp[i] = y[i] + h * (
                _A61 * K[0, i]
                + _A62 * K[1, i]
                + _A63 * K[2, i]
                + _A64 * K[3, i]
                + _A65 * K[4, i]
            )
        _rhs_var_into(ytmp, scratch, c1, c2, c3, lam)
        for i in range(n):
            K[5, i] = scratch[i]
            ynew[i] = y[i] + h * (
                _B1 * K[0, i] + _B3 * K[2, i] + _B4 * K[3, i] + _B5 * K[4, i] + _B6 * K[5, i]
            )
        _rhs_var_into(ynew, scratch, c1, c2, c3, lam)
        for i in range(n):
            K[6, i] = scratch[i]

        err = 0.0
        for i in range(n):
            ei = h * (
                _E1 * K[0, i]
                + _E3 * K[2, i]
                + _E4 * K[3, i]
                + _E5 * K[4, i]
                + _E6 * K[5, i]
                + _E7 * K[6, i]
            )
            sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            err += (ei / sc) ** 2
        err = np.sqrt(err / n)

        if not (err <= 1.0):
            fac11 = err ** _EXPO1
            h = h / min(1.0 / _FAC_MIN, fac11 / _SAFE)
            last_rejected = True
            continue

        t = t_bound if clamped else t + h
        for i in range(n):
            y[i] = ynew[i]
            K[0, i] = K[6, i]
        fac11 = err ** _EXPO1
        fac = fac11 / facold ** _BETA
        fac = max(1.0 / _FAC_MAX, min(1.0 / _FAC_MIN, fac / _SAFE))
        h_next = h / fac
        if last_rejected and h_next > h:
            h_next = h
        h = h_next
        facold = max(err, 1e-4)
        last_rejected = False

    return STATUS_TIMEOUT, y
