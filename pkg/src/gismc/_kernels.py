"""Hot inner loops: plant right-hand side, integrators and the closed loop.

Everything here takes flat float64 arrays so it compiles under numba's
nopython mode.  Plant parameters are packed with :func:`gismc.plant.pack_params`
in the order given by ``PARAM_NAMES``.
"""

import math

import numpy as np

from ._accel import njit

PARAM_NAMES = (
    "m_e", "m_ca", "m_1", "m_2",
    "mu_1", "mu_2", "mu_y",
    "mu_k1", "mu_k2", "mu_kY",
    "mu_tau1", "mu_tau2",
    "k_tau1", "k_tau2",
    "L_e", "L_ca", "W_ca",
    "K_f1", "K_f2", "K_fy",
    "upsilon", "v_eps",
)

(I_ME, I_MCA, I_M1, I_M2, I_MU1, I_MU2, I_MUY, I_MUK1, I_MUK2, I_MUKY,
 I_MUT1, I_MUT2, I_KT1, I_KT2, I_LE, I_LCA, I_WCA, I_KF1, I_KF2, I_KFY,
 I_UPS, I_VEPS) = range(len(PARAM_NAMES))

# integrator codes
RK4 = 0
SEMI_IMPLICIT_EULER = 1

# controller variants
C1 = 0
C2 = 1
C3 = 2

# ILC modes
ILC_OFF = 0
ILC_CURRENT = 1
ILC_PREVIOUS = 2

# velocity estimate modes
VEL_TRUE = 0
VEL_FILTERED = 1

# closed-loop status codes
OK = 0
ABORT_THETA = 1
ABORT_SINGULAR = 2
ABORT_NONFINITE = 3


@njit
def generalized_coords(x, xd, p):
    """Return (X, Theta, Y, Xd, Thetad, Yd) from carriage positions/velocities."""
    L = p[I_LCA]
    X = 0.5 * (x[0] + x[1])
    th = (x[0] - x[1]) / L
    c = math.cos(th)
    Y = x[2] / c
    Xd = 0.5 * (xd[0] + xd[1])
    thd = (xd[0] - xd[1]) / L
    # d/dt (x_y sec th) = xd_y sec th + x_y sec th tan th thd
    Yd = xd[2] / c + x[2] * math.tan(th) / c * thd
    return X, th, Y, Xd, thd, Yd


@njit
def fill_matrices(X, th, Y, Xd, thd, Yd, p, M, P, W, K):
    me = p[I_ME]
    mca = p[I_MCA]
    m1 = p[I_M1]
    m2 = p[I_M2]
    L = p[I_LCA]
    Le = p[I_LE]
    hL = 0.5 * L
    s = math.sin(th)
    c = math.cos(th)

    Jca = mca / 12.0 * (L * L + p[I_WCA] * p[I_WCA])
    Je = me / 12.0 * ((abs(X) + 0.5 * Le) ** 2 + Le * Le) + me * Y * Y
    cc = me / 12.0 * (X + 0.5 * Le * math.tanh(p[I_UPS] * X))

    m11 = me + mca + m1 + m2
    m12 = hL * (m1 - m2) * c - me * Y * c
    m22 = Je + Jca + me * Y * Y + hL * hL * (m1 + m2) * c * c

    M[0, 0] = m11
    M[0, 1] = m12
    M[0, 2] = -me * s
    M[1, 0] = m12
    M[1, 1] = m22
    M[1, 2] = 0.0
    M[2, 0] = -me * s
    M[2, 1] = 0.0
    M[2, 2] = me

    c12 = (-hL * (m1 - m2) + me * Y) * s * thd - cc * thd - me * c * Yd
    c21 = cc * thd
    c22 = cc * Xd + 2.0 * me * Y * Yd - hL * hL * (m1 + m2) * c * s * thd

    P[0, 0] = 0.0
    P[0, 1] = c12
    P[0, 2] = -me * c * thd
    P[1, 0] = c21
    P[1, 1] = c22
    P[1, 2] = 2.0 * me * Y * thd
    P[2, 0] = 0.0
    P[2, 1] = -2.0 * me * Y * thd
    P[2, 2] = 0.0

    muk = p[I_MUK1] + p[I_MUK2]
    # carriage viscous forces at +-L/2: the X-Theta coupling goes with their difference
    d12 = hL * (p[I_MUK1] - p[I_MUK2]) * c
    d22 = p[I_MUT1] + p[I_MUT2] + hL * hL * muk * c
    W[0, 0] = muk
    W[0, 1] = d12
    W[0, 2] = 0.0
    W[1, 0] = d12
    W[1, 1] = d22
    W[1, 2] = 0.0
    W[2, 0] = 0.0
    W[2, 1] = 0.0
    W[2, 2] = p[I_MUKY]

    for i in range(3):
        for j in range(3):
            K[i, j] = 0.0
    K[1, 1] = p[I_KT1] + p[I_KT2]


@njit
def fill_tp(th, L, Tp):
    for i in range(3):
        for j in range(3):
            Tp[i, j] = 0.0
    Tp[0, 0] = 0.5
    Tp[0, 1] = 0.5
    Tp[1, 0] = 1.0 / L
    Tp[1, 1] = -1.0 / L
    Tp[2, 2] = 1.0 / math.cos(th)


@njit
def fill_tf(th, L, Tf):
    c = math.cos(th)
    Tf[0, 0] = 1.0
    Tf[0, 1] = 1.0
    Tf[0, 2] = math.tan(th)
    Tf[1, 0] = 0.5 * L * c
    Tf[1, 1] = -0.5 * L * c
    Tf[1, 2] = 0.0
    Tf[2, 0] = 0.0
    Tf[2, 1] = 0.0
    Tf[2, 2] = 1.0 / c


@njit
def solve3(A, b, out):
    """Gaussian elimination with partial pivoting; returns False if singular."""
    a = np.empty((3, 4))
    for i in range(3):
        for j in range(3):
            a[i, j] = A[i, j]
        a[i, 3] = b[i]
    scale = 0.0
    for i in range(3):
        for j in range(3):
            if abs(a[i, j]) > scale:
                scale = abs(a[i, j])
    if scale == 0.0:
        return False
    for col in range(3):
        piv = col
        for r in range(col + 1, 3):
            if abs(a[r, col]) > abs(a[piv, col]):
                piv = r
        if abs(a[piv, col]) <= 1e-14 * scale:
            return False
        if piv != col:
            for j in range(4):
                tmp = a[col, j]
                a[col, j] = a[piv, j]
                a[piv, j] = tmp
        for r in range(col + 1, 3):
            f = a[r, col] / a[col, col]
            for j in range(col, 4):
                a[r, j] -= f * a[col, j]
    for i in range(2, -1, -1):
        acc = a[i, 3]
        for j in range(i + 1, 3):
            acc -= a[i, j] * out[j]
        out[i] = acc / a[i, i]
    return True


@njit
def state_derivative(z, u, h, p, dz):
    """Write dz = (x_dot, x_ddot) for state z = (x, x_dot); False if singular."""
    x = z[:3]
    xd = z[3:]
    L = p[I_LCA]
    X, th, Y, Xd, thd, Yd = generalized_coords(x, xd, p)

    M = np.empty((3, 3))
    P = np.empty((3, 3))
    W = np.empty((3, 3))
    K = np.empty((3, 3))
    Tp = np.empty((3, 3))
    Tf = np.empty((3, 3))
    fill_matrices(X, th, Y, Xd, thd, Yd, p, M, P, W, K)
    fill_tp(th, L, Tp)
    fill_tf(th, L, Tf)

    veps = p[I_VEPS]
    f1 = p[I_MU1] * math.tanh(xd[0] / veps)
    f2 = p[I_MU2] * math.tanh(xd[1] / veps)
    fy = p[I_MUY] * math.tanh(xd[2] / veps)
    act0 = p[I_KF1] * u[0] - f1
    act1 = p[I_KF2] * u[1] - f2
    act2 = p[I_KFY] * u[2] - fy

    tpxd = np.empty(3)
    tpx = np.empty(3)
    for i in range(3):
        tpxd[i] = Tp[i, 0] * xd[0] + Tp[i, 1] * xd[1] + Tp[i, 2] * xd[2]
        tpx[i] = Tp[i, 0] * x[0] + Tp[i, 1] * x[1] + Tp[i, 2] * x[2]

    rhs = np.empty(3)
    for i in range(3):
        acc = Tf[i, 0] * act0 + Tf[i, 1] * act1 + Tf[i, 2] * act2 - h[i]
        for j in range(3):
            acc -= (P[i, j] + W[i, j]) * tpxd[j] + K[i, j] * tpx[j]
        rhs[i] = acc

    MTp = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            MTp[i, j] = M[i, 0] * Tp[0, j] + M[i, 1] * Tp[1, j] + M[i, 2] * Tp[2, j]

    acc3 = np.empty(3)
    okay = solve3(MTp, rhs, acc3)
    for i in range(3):
        dz[i] = xd[i]
        dz[3 + i] = acc3[i]
    return okay


@njit
def rk4_step(z, u, h, dt, p, out):
    n = z.shape[0]
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    ok = state_derivative(z, u, h, p, k1)
    for i in range(n):
        tmp[i] = z[i] + 0.5 * dt * k1[i]
    ok = state_derivative(tmp, u, h, p, k2) and ok
    for i in range(n):
        tmp[i] = z[i] + 0.5 * dt * k2[i]
    ok = state_derivative(tmp, u, h, p, k3) and ok
    for i in range(n):
        tmp[i] = z[i] + dt * k3[i]
    ok = state_derivative(tmp, u, h, p, k4) and ok
    for i in range(n):
        out[i] = z[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    return ok


@njit
def semi_implicit_euler_step(z, u, h, dt, p, out):
    dz = np.empty(6)
    ok = state_derivative(z, u, h, p, dz)
    for i in range(3):
        out[3 + i] = z[3 + i] + dt * dz[3 + i]
    for i in range(3):
        out[i] = z[i] + dt * out[3 + i]
    return ok


@njit
def advance(z, u, h, dt, substeps, integrator, p, out):
    """Integrate one held-input interval of length dt using `substeps` steps."""
    hstep = dt / substeps
    cur = z.copy()
    nxt = np.empty(6)
    ok = True
    for _ in range(substeps):
        if integrator == RK4:
            ok = rk4_step(cur, u, h, hstep, p, nxt) and ok
        else:
            ok = semi_implicit_euler_step(cur, u, h, hstep, p, nxt) and ok
        for i in range(6):
            cur[i] = nxt[i]
    for i in range(6):
        out[i] = cur[i]
    return ok


@njit
def quantize(v, q):
    if q > 0.0:
        return q * np.floor(v / q + 0.5)
    return v


@njit
def closed_loop(p, z0, dt, substeps, integrator,
                r, r_dot, w_prev, w_prev_dot, ilc_mode, l_rate,
                h_seq, w_out, quant,
                lam, a, gamma0, gamma_bar, eps, variant, adapt_first,
                vel_mode, vel_alpha, theta_max,
                Z, Y, YR, E, S, G, U, WN):
    """Run one iteration on the N-sample grid; returns (status, failing index).

    Output arrays Z (N,6) and Y, YR, E, S, G, U, WN (N,3) are written in place.
    """
    n = r.shape[0]
    L = p[I_LCA]
    z = z0.copy()
    znext = np.empty(6)
    gam = gamma0.copy()
    v_est = np.zeros(3)
    y_last = np.empty(3)
    u = np.zeros(3)
    hk = np.empty(3)
    denom = 1.0 + l_rate if ilc_mode == ILC_CURRENT else 1.0

    for k in range(n):
        for i in range(6):
            Z[k, i] = z[i]
        # sensor
        for i in range(3):
            Y[k, i] = quantize(z[i] + w_out[k, i], quant)
        # velocity estimate
        if vel_mode == VEL_TRUE:
            for i in range(3):
                v_est[i] = z[3 + i]
        else:
            if k > 0:
                for i in range(3):
                    raw = (Y[k, i] - y_last[i]) / dt
                    v_est[i] = vel_alpha * v_est[i] + (1.0 - vel_alpha) * raw
        for i in range(3):
            y_last[i] = Y[k, i]

        for i in range(3):
            if ilc_mode == ILC_OFF:
                e = Y[k, i] - r[k, i]
                ed = v_est[i] - r_dot[k, i]
                wn = 0.0
                YR[k, i] = r[k, i]
            else:
                e = (Y[k, i] - r[k, i] - w_prev[k, i]) / denom
                ed = (v_est[i] - r_dot[k, i] - w_prev_dot[k, i]) / denom
                wn = w_prev[k, i] + l_rate * e
                # the reference the error is measured against
                YR[k, i] = r[k, i] + (wn if ilc_mode == ILC_CURRENT else w_prev[k, i])
            s = lam[i] * e + ed
            g_old = gam[i]
            if variant == C1:
                gam[i] = g_old + gamma_bar * abs(s) * dt
            elif variant == C2:
                sg = 0.0
                if abs(s) > eps:
                    sg = 1.0
                elif abs(s) < eps:
                    sg = -1.0
                g_new = g_old + gamma_bar * abs(s) * sg * dt
                gam[i] = g_new if g_new > 0.0 else 0.0
            g_use = gam[i] if adapt_first else g_old
            u[i] = -g_use * math.tanh(0.5 * a * s)
            E[k, i] = e
            S[k, i] = s
            G[k, i] = gam[i]
            U[k, i] = u[i]
            WN[k, i] = wn

        if k == n - 1:
            break
        for i in range(3):
            hk[i] = h_seq[k, i]
        ok = advance(z, u, hk, dt, substeps, integrator, p, znext)
        if not ok:
            return ABORT_SINGULAR, k + 1
        for i in range(6):
            if not math.isfinite(znext[i]):
                return ABORT_NONFINITE, k + 1
            z[i] = znext[i]
        if abs((z[0] - z[1]) / L) >= theta_max:
            return ABORT_THETA, k + 1
    return OK, n
