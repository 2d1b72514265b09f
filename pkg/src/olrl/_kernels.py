"""Compiled inner loops for the cart-pole and the estimator hot paths.

Everything here works on plain float64 arrays so the Python layer can stay
generic.  Parameter vector layout for the cart-pole:
``[m1, m2, m3, m4, m5, dt, force_unit, g]``.
"""

import math

import numpy as np
from numba import njit

_CACHE = True


@njit(cache=_CACHE, inline="always", fastmath=True)
def cartpole_rhs(p, ldot, th, thdot, force):
    m1, m2, l = p[0], p[1], p[2]
    s = math.sin(th)
    c = math.cos(th)
    rhs1 = force - p[3] * ldot + m2 * l * s * thdot * thdot
    rhs2 = m2 * p[7] * l * s - p[4] * thdot
    det = m2 * l * l * (m1 + m2 * s * s)
    lddot = (m2 * l * l * rhs1 - m2 * l * c * rhs2) / det
    thddot = ((m1 + m2) * rhs2 - m2 * l * c * rhs1) / det
    return lddot, thddot


@njit(cache=_CACHE, fastmath=True)
def cartpole_step(p, x, u, out):
    """Classical RK4 step of length ``p[5]``; writes the next state into ``out``."""
    dt = p[5]
    force = p[6] * u
    l0, v0, a0, w0 = x[0], x[1], x[2], x[3]
    dv1, dw1 = cartpole_rhs(p, v0, a0, w0, force)
    v1 = v0 + 0.5 * dt * dv1
    a1 = a0 + 0.5 * dt * w0
    w1 = w0 + 0.5 * dt * dw1
    dv2, dw2 = cartpole_rhs(p, v1, a1, w1, force)
    v2 = v0 + 0.5 * dt * dv2
    a2 = a0 + 0.5 * dt * w1
    w2 = w0 + 0.5 * dt * dw2
    dv3, dw3 = cartpole_rhs(p, v2, a2, w2, force)
    v3 = v0 + dt * dv3
    a3 = a0 + dt * w2
    w3 = w0 + dt * dw3
    dv4, dw4 = cartpole_rhs(p, v3, a3, w3, force)
    out[0] = l0 + dt / 6.0 * (v0 + 2.0 * v1 + 2.0 * v2 + v3)
    out[1] = v0 + dt / 6.0 * (dv1 + 2.0 * dv2 + 2.0 * dv3 + dv4)
    out[2] = a0 + dt / 6.0 * (w0 + 2.0 * w1 + 2.0 * w2 + w3)
    out[3] = w0 + dt / 6.0 * (dw1 + 2.0 * dw2 + 2.0 * dw3 + dw4)


@njit(cache=_CACHE, fastmath=True)
def cartpole_step_batch(p, X, U):
    n = X.shape[0]
    out = np.empty((n, 4))
    for i in range(n):
        cartpole_step(p, X[i], U[i, 0], out[i])
    return out


@njit(cache=_CACHE, fastmath=True)
def cartpole_rollout_batch(p, x0, U):
    """``U`` has shape (M, T, 1); returns states of shape (M, T + 1, 4)."""
    M, T = U.shape[0], U.shape[1]
    X = np.empty((M, T + 1, 4))
    for m in range(M):
        X[m, 0] = x0
        for t in range(T):
            cartpole_step(p, X[m, t], U[m, t, 0], X[m, t + 1])
    return X


@njit(cache=_CACHE, fastmath=True)
def cartpole_fd_jacobians(p, X, U, h):
    """Central differences of one step at every (x_t, u_t), gradient layout.

    Returns A of shape (n, 4, 4) with ``A[t, i, j] = d f_j / d x_i`` and B of
    shape (n, 1, 4).
    """
    n = X.shape[0]
    A = np.empty((n, 4, 4))
    B = np.empty((n, 1, 4))
    xp = np.empty(4)
    fp = np.empty(4)
    fm = np.empty(4)
    for t in range(n):
        u = U[t, 0]
        for i in range(4):
            for j in range(4):
                xp[j] = X[t, j]
            xp[i] = X[t, i] + h
            cartpole_step(p, xp, u, fp)
            xp[i] = X[t, i] - h
            cartpole_step(p, xp, u, fm)
            for j in range(4):
                A[t, i, j] = (fp[j] - fm[j]) / (2.0 * h)
        cartpole_step(p, X[t], u + h, fp)
        cartpole_step(p, X[t], u - h, fm)
        for j in range(4):
            B[t, 0, j] = (fp[j] - fm[j]) / (2.0 * h)
    return A, B


@njit(cache=_CACHE, fastmath=True)
def costate_recursion(A, B, rx, ru, lam_T):
    """Backward sweep ``lam_t = rx_t + A_t lam_{t+1}``, ``g_t = ru_t + B_t lam_{t+1}``.

    Returns (lam, g) with ``lam[t]`` holding the costate for time t + 1.
    """
    T, D = rx.shape
    K = ru.shape[1]
    lam = np.empty((T, D))
    g = np.empty((T, K))
    nxt = lam_T.copy()
    for t in range(T - 1, -1, -1):
        lam[t] = nxt
        cur = rx[t].copy()
        for i in range(D):
            acc = 0.0
            for j in range(D):
                acc += A[t, i, j] * nxt[j]
            cur[i] += acc
        for k in range(K):
            acc = 0.0
            for j in range(D):
                acc += B[t, k, j] * nxt[j]
            g[t, k] = ru[t, k] + acc
        nxt = cur
    return lam, g


@njit(cache=_CACHE)
def jacobi_svd(Z):
    """One-sided Jacobi SVD of a tall matrix: returns (G, s, V) with ``Z V = G``.

    Column ``r`` of ``G`` has norm ``s[r]``; columns are not normalized.
    Small dense problems only, where LAPACK call overhead dominates.
    """
    M, P = Z.shape
    G = Z.copy()
    V = np.eye(P)
    for sweep in range(60):
        rotated = False
        for i in range(P - 1):
            for j in range(i + 1, P):
                a = 0.0
                b = 0.0
                c = 0.0
                for m in range(M):
                    a += G[m, i] * G[m, i]
                    b += G[m, j] * G[m, j]
                    c += G[m, i] * G[m, j]
                if c == 0.0 or abs(c) <= 1e-13 * math.sqrt(a * b):
                    continue
                rotated = True
                zeta = (b - a) / (2.0 * c)
                tn = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                cs = 1.0 / math.sqrt(1.0 + tn * tn)
                sn = cs * tn
                for m in range(M):
                    gi = G[m, i]
                    gj = G[m, j]
                    G[m, i] = cs * gi - sn * gj
                    G[m, j] = sn * gi + cs * gj
                for m in range(P):
                    vi = V[m, i]
                    vj = V[m, j]
                    V[m, i] = cs * vi - sn * vj
                    V[m, j] = sn * vi + cs * vj
        if not rotated:
            break
    s = np.empty(P)
    for r in range(P):
        acc = 0.0
        for m in range(M):
            acc += G[m, r] * G[m, r]
        s[r] = math.sqrt(acc)
    return G, s, V


@njit(cache=_CACHE)
def min_norm_lstsq(Z, Y, rcond):
    """Minimum-norm solution W of ``Z W ~= Y``.

    Singular values at or below ``rcond * s_max`` are treated as zero.
    Wide systems are handled through the transpose.
    """
    M, P = Z.shape
    D = Y.shape[1]
    W = np.zeros((P, D))
    if M >= P:
        G, s, V = jacobi_svd(Z)
        smax = s.max()
        if smax == 0.0:
            return W
        for r in range(P):
            if s[r] <= rcond * smax:
                continue
            inv = 1.0 / (s[r] * s[r])
            for d in range(D):
                acc = 0.0
                for m in range(M):
                    acc += G[m, r] * Y[m, d]
                acc *= inv
                for q in range(P):
                    W[q, d] += V[q, r] * acc
    else:
        # Z^T = G' V'^T / s  =>  Z = V' S U'^T with U' = G' / s
        G, s, V = jacobi_svd(Z.T.copy())
        smax = s.max()
        if smax == 0.0:
            return W
        for r in range(M):
            if s[r] <= rcond * smax:
                continue
            inv = 1.0 / (s[r] * s[r])
            for d in range(D):
                acc = 0.0
                for m in range(M):
                    acc += V[m, r] * Y[m, d]
                acc *= inv
                for q in range(P):
                    W[q, d] += G[q, r] * acc
    return W


@njit(cache=_CACHE)
def batched_lstsq(Z, Y, rcond):
    """:func:`min_norm_lstsq` for every leading index of ``Z`` and ``Y``."""
    T, M, P = Z.shape
    W = np.empty((T, P, Y.shape[2]))
    for t in range(T):
        W[t] = min_norm_lstsq(Z[t], Y[t], rcond)
    return W


@njit(cache=_CACHE)
def spd_solve(Q, z):
    """Solve ``Q w = z`` for symmetric positive definite ``Q`` via Cholesky."""
    P = Q.shape[0]
    L = np.zeros((P, P))
    for i in range(P):
        for j in range(i + 1):
            acc = Q[i, j]
            for k in range(j):
                acc -= L[i, k] * L[j, k]
            if i == j:
                if acc <= 0.0:
                    raise np.linalg.LinAlgError("matrix is not positive definite")
                L[i, i] = math.sqrt(acc)
            else:
                L[i, j] = acc / L[j, j]
    w = np.empty(P)
    for i in range(P):
        acc = z[i]
        for k in range(i):
            acc -= L[i, k] * w[k]
        w[i] = acc / L[i, i]
    for i in range(P - 1, -1, -1):
        acc = w[i]
        for k in range(i + 1, P):
            acc -= L[k, i] * w[k]
        w[i] = acc / L[i, i]
    return w


@njit(cache=_CACHE)
def rls_sweep(F, Q, Z, Xn, alpha, q0):
    """One augmented recursive-least-squares update for every time step, in place.

    ``F`` has shape (T, D, P), ``Q`` (T, P, P), ``Z`` (T, P), ``Xn`` (T, D).
    """
    T, D, P = F.shape
    prior = (1.0 - alpha) * q0
    for t in range(T):
        z = Z[t]
        for i in range(P):
            for j in range(P):
                Q[t, i, j] = alpha * Q[t, i, j] + z[i] * z[j]
            Q[t, i, i] += prior
        w = spd_solve(Q[t], z)
        for d in range(D):
            pred = 0.0
            for j in range(P):
                pred += F[t, d, j] * z[j]
            err = Xn[t, d] - pred
            for j in range(P):
                F[t, d, j] += w[j] * err
