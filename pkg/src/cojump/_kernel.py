"""Fused numba kernel for the rollout hot path.

Mirrors :func:`cojump.sim2d.substep` one environment at a time so a control
step of ``n_sub`` inner steps runs without Python overhead. The numpy
functions in :mod:`cojump.sim2d` stay the reference; the test suite pins the
two together.
"""

import math

import numpy as np
from numba import njit

from .sim2d import (
    N_PAIRS,
    N_POINTS,
    PAIR_POINT,
    PAIR_SURFACE,
    _POINT_AGENT,
    _POINT_CORNER,
    _POINT_FOOT,
)

_PP = PAIR_POINT.astype(np.int64)
_PS = PAIR_SURFACE.astype(np.int64)
_PA = _POINT_AGENT.astype(np.int64)
_PF = _POINT_FOOT.astype(np.int64)
_PC = _POINT_CORNER.copy()


@njit(cache=True, error_model="numpy")
def _solve5(M, b, A, x):
    A[:] = M
    x[:] = b
    n = 5
    for c in range(n):
        p = c
        best = abs(A[c, c])
        for r in range(c + 1, n):
            if abs(A[r, c]) > best:
                best = abs(A[r, c])
                p = r
        if p != c:
            for k in range(n):
                tmp = A[c, k]
                A[c, k] = A[p, k]
                A[p, k] = tmp
            tmp = x[c]
            x[c] = x[p]
            x[p] = tmp
        for r in range(c + 1, n):
            f = A[r, c] / A[c, c]
            for k in range(c, n):
                A[r, k] -= f * A[c, k]
            x[r] -= f * x[c]
    for r in range(n - 1, -1, -1):
        s = x[r]
        for k in range(r + 1, n):
            s -= A[r, k] * x[k]
        x[r] = s / A[r, r]
    return x


@njit(cache=True, error_model="numpy")
def _substep_env(
    e, q, qd, acc, anchor, u, loads, assist, gain_kp, gain_kd,
    body_mass, foot_mass, inertia, half_length, half_height, attach, default_rest,
    min_length, max_length, kp, kd, force_limit, com_offset, mount, plat_half, mu_s, mu_d,
    platform, gravity,
    k_c, d_c, k_t, d_t, k_lim, d_lim, depth, entry, beta, dt,
    pp, ps, pa, pf, pc,
    out_leg_force, out_target, out_normal, out_tangent, out_active, out_base,
    e1, e2, P, V, so, st, sn, slo, shi, PF, react, base, M, Q, A, x,
):
    g = gravity[e]
    for ag in range(2):
        c = math.cos(q[e, ag, 2])
        s = math.sin(q[e, ag, 2])
        e1[ag, 0] = c
        e1[ag, 1] = -s
        e2[ag, 0] = s
        e2[ag, 1] = c

    # point kinematics
    for i in range(N_POINTS):
        ag = pa[i]
        w = qd[e, ag, 2]
        if pf[i] >= 0:
            j = pf[i]
            a = attach[e, ag, j] - com_offset[e, ag]
            l = q[e, ag, 3 + j]
            rx = a * e1[ag, 0] - l * e2[ag, 0]
            rz = a * e1[ag, 1] - l * e2[ag, 1]
            ld = qd[e, ag, 3 + j]
            V[i, 0] = qd[e, ag, 0] + w * rz - ld * e2[ag, 0]
            V[i, 1] = qd[e, ag, 1] - w * rx - ld * e2[ag, 1]
        else:
            a = pc[i, 0] * half_length[e, ag] - com_offset[e, ag]
            b = pc[i, 1] * half_height[e, ag]
            rx = a * e1[ag, 0] + b * e2[ag, 0]
            rz = a * e1[ag, 1] + b * e2[ag, 1]
            V[i, 0] = qd[e, ag, 0] + w * rz
            V[i, 1] = qd[e, ag, 1] - w * rx
        P[i, 0] = q[e, ag, 0] + rx
        P[i, 1] = q[e, ag, 1] + rz

    # surfaces
    so[:] = 0.0
    st[:] = 0.0
    sn[:] = 0.0
    st[0, 0] = 1.0
    sn[0, 1] = 1.0
    st[2, 0] = 1.0
    sn[2, 1] = 1.0
    slo[0] = -np.inf
    shi[0] = np.inf
    cL = com_offset[e, 0]
    so[1, 0] = q[e, 0, 0] + mount[e] * e2[0, 0] - cL * e1[0, 0]
    so[1, 1] = q[e, 0, 1] + mount[e] * e2[0, 1] - cL * e1[0, 1]
    st[1, 0] = e1[0, 0]
    st[1, 1] = e1[0, 1]
    sn[1, 0] = e2[0, 0]
    sn[1, 1] = e2[0, 1]
    slo[1] = -plat_half[e]
    shi[1] = plat_half[e]
    so[2, 0] = platform[e, 0]
    so[2, 1] = platform[e, 1]
    slo[2] = -platform[e, 2]
    shi[2] = platform[e, 2]

    PF[:] = 0.0
    react[:] = 0.0
    base[:] = 0.0
    for k in range(N_PAIRS):
        i = pp[k]
        sf = ps[k]
        relx = P[i, 0] - so[sf, 0]
        relz = P[i, 1] - so[sf, 1]
        a = relx * st[sf, 0] + relz * st[sf, 1]
        pen = -(relx * sn[sf, 0] + relz * sn[sf, 1])
        anc = anchor[e, k]
        if sf == 0:
            cap = np.inf
        elif math.isnan(anc):
            cap = entry
        else:
            cap = depth
        vsx = 0.0
        vsz = 0.0
        rlx = 0.0
        rlz = 0.0
        if sf == 1:
            rlx = P[i, 0] - q[e, 0, 0]
            rlz = P[i, 1] - q[e, 0, 1]
            vsx = qd[e, 0, 0] + qd[e, 0, 2] * rlz
            vsz = qd[e, 0, 1] - qd[e, 0, 2] * rlx
        vrx = V[i, 0] - vsx
        vrz = V[i, 1] - vsz
        vn = vrx * sn[sf, 0] + vrz * sn[sf, 1]
        vt = vrx * st[sf, 0] + vrz * st[sf, 1]
        entering = sf == 0 or not math.isnan(anc) or vn <= 0.0
        act = pen > 0.0 and pen < cap and entering and a >= slo[sf] and a <= shi[sf]
        fn = 0.0
        if act:
            fn = max(0.0, k_c * pen - d_c * vn)
        if not act or math.isnan(anc):
            anc = a
        ft_trial = -k_t * (a - anc) - d_t * vt
        sliding = act and abs(ft_trial) > mu_s[e] * fn
        if sliding:
            sgn = 1.0 if ft_trial > 0 else (-1.0 if ft_trial < 0 else 0.0)
            ft = mu_d[e] * fn * sgn
        else:
            ft = ft_trial
        if not (act and fn > 0.0):
            ft = 0.0
        if sliding:
            anc = a + ft / k_t
        anchor[e, k] = anc if act else np.nan
        out_normal[e, k] = fn
        out_tangent[e, k] = ft
        out_active[e, k] = act
        fx = fn * sn[sf, 0] + ft * st[sf, 0]
        fz = fn * sn[sf, 1] + ft * st[sf, 1]
        PF[i, 0] += fx
        PF[i, 1] += fz
        if sf == 1:
            react[0] -= fx
            react[1] -= fz
            react[2] += -fx * rlz + fz * rlx
        if pf[i] < 0:
            base[pa[i]] += math.sqrt(fn * fn + ft * ft)

    for ag in range(2):
        out_base[e, ag] = base[ag]

    for ag in range(2):
        mf = foot_mass[e, ag]
        mb = body_mass[e, ag]
        w = qd[e, ag, 2]
        M[:] = 0.0
        Q[:] = 0.0
        mt = mb + 2.0 * mf
        M[0, 0] = mt
        M[1, 1] = mt
        M[2, 2] = inertia[e, ag]
        Q[1] = -mt * g
        for j in range(2):
            a = attach[e, ag, j] - com_offset[e, ag]
            l = q[e, ag, 3 + j]
            ld = qd[e, ag, 3 + j]
            cfx = -a * e2[ag, 0] - l * e1[ag, 0]
            cfz = -a * e2[ag, 1] - l * e1[ag, 1]
            M[0, 2] += mf * cfx
            M[1, 2] += mf * cfz
            M[2, 2] += mf * (a * a + l * l)
            M[0, 3 + j] = -mf * e2[ag, 0]
            M[1, 3 + j] = -mf * e2[ag, 1]
            M[2, 3 + j] = mf * a
            M[3 + j, 3 + j] = mf
            Q[2] += -mf * g * cfz
            Q[3 + j] += mf * g * e2[ag, 1]
            hc1 = -(a * w * w + 2.0 * ld * w)
            hc2 = l * w * w
            hx = mf * (hc1 * e1[ag, 0] + hc2 * e2[ag, 0])
            hz = mf * (hc1 * e1[ag, 1] + hc2 * e2[ag, 1])
            Q[0] -= hx
            Q[1] -= hz
            Q[2] -= cfx * hx + cfz * hz
            Q[3 + j] -= -(e2[ag, 0] * hx + e2[ag, 1] * hz)

            # PD leg actuator and travel limits
            uj = 0.5 * (min(max(u[e, ag, 2 * j], -1.0), 1.0) + min(max(u[e, ag, 2 * j + 1], -1.0), 1.0))
            tgt = default_rest[e, ag, j] + beta * uj
            f = kp[e, ag] * gain_kp[e, ag] * (tgt - l) - kd[e, ag] * gain_kd[e, ag] * ld
            lim = force_limit[e, ag]
            f = min(max(f, -lim), lim)
            out_leg_force[e, ag, j] = f
            out_target[e, ag, j] = tgt
            Q[3 + j] += f
            if l < min_length[e, ag]:
                Q[3 + j] += k_lim * (min_length[e, ag] - l) - d_lim * min(ld, 0.0)
            if l > max_length[e, ag]:
                Q[3 + j] += k_lim * (max_length[e, ag] - l) - d_lim * max(ld, 0.0)
        for r in range(5):
            for c in range(r):
                M[r, c] = M[c, r]

        for i in range(N_POINTS):
            if pa[i] != ag:
                continue
            fx = PF[i, 0]
            fz = PF[i, 1]
            rx = P[i, 0] - q[e, ag, 0]
            rz = P[i, 1] - q[e, ag, 1]
            Q[0] += fx
            Q[1] += fz
            Q[2] += fx * rz - fz * rx
            if pf[i] >= 0:
                Q[3 + pf[i]] -= fx * e2[ag, 0] + fz * e2[ag, 1]
        if ag == 0:
            Q[0] += react[0]
            Q[1] += react[1]
            Q[2] += react[2]
        Q[0] += loads[e, ag, 0]
        Q[1] += loads[e, ag, 1]
        Q[2] += loads[e, ag, 2]
        if ag == 1:
            Q[2] += assist[e]

        qdd = _solve5(M, Q, A, x)
        for d in range(5):
            qd[e, ag, d] += dt * qdd[d]
            q[e, ag, d] += dt * qd[e, ag, d]
        acc[e, ag] += dt * qd[e, ag, 2]


@njit(cache=True, error_model="numpy")
def control_step(
    q, qd, acc, anchor, time, u, loads, assist, gain_kp, gain_kd,
    body_mass, foot_mass, inertia, half_length, half_height, attach, default_rest,
    min_length, max_length, kp, kd, force_limit, com_offset, mount, plat_half, mu_s, mu_d,
    platform, gravity,
    k_c, d_c, k_t, d_t, k_lim, d_lim, depth, entry, beta, dt, n_sub, active_env,
    out_leg_force, out_target, out_normal, out_tangent, out_active, out_base, out_base_max,
):
    n_env = q.shape[0]
    e1 = np.empty((2, 2))
    e2 = np.empty((2, 2))
    P = np.empty((N_POINTS, 2))
    V = np.empty((N_POINTS, 2))
    so = np.zeros((3, 2))
    st = np.zeros((3, 2))
    sn = np.zeros((3, 2))
    slo = np.empty(3)
    shi = np.empty(3)
    PF = np.zeros((N_POINTS, 2))
    react = np.zeros(3)
    base = np.zeros(2)
    M = np.zeros((5, 5))
    Q = np.zeros(5)
    A = np.zeros((5, 5))
    x = np.zeros(5)
    for e in range(n_env):
        if not active_env[e]:
            continue
        out_base_max[e, 0] = 0.0
        out_base_max[e, 1] = 0.0
        for _ in range(n_sub):
            _substep_env(
                e, q, qd, acc, anchor, u, loads, assist, gain_kp, gain_kd,
                body_mass, foot_mass, inertia, half_length, half_height, attach, default_rest,
                min_length, max_length, kp, kd, force_limit, com_offset, mount, plat_half, mu_s, mu_d,
                platform, gravity,
                k_c, d_c, k_t, d_t, k_lim, d_lim, depth, entry, beta, dt,
                _PP, _PS, _PA, _PF, _PC,
                out_leg_force, out_target, out_normal, out_tangent, out_active, out_base,
                e1, e2, P, V, so, st, sn, slo, shi, PF, react, base, M, Q, A, x,
            )
            time[e] += dt
            for ag in range(2):
                if out_base[e, ag] > out_base_max[e, ag]:
                    out_base_max[e, ag] = out_base[e, ag]
