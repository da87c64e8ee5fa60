"""Numba inner loops for the stochastic integrators.

All kernels advance an ensemble of independent chains (axis 0) with
preallocated noise, so the Python drivers own every random draw and the
results are bit-reproducible regardless of batching or host parallelism.
Loops are chain-major: each chain runs its whole chunk on local buffers.

The smooth reflecting force is evaluated inline; its magnitude is capped at
``wcap`` so an explicit step cannot overshoot the wall into a blow-up (the
cap only binds where the uncapped force would already be unresolvable at the
given step size).
"""

import numpy as np
from numba import njit


@njit(cache=True)
def ou_path(eta0, xi, decay, kick, out):
    """Fill out[:, k] with the OU noise path under the AR(1) recursion
    eta' = decay * eta + kick * xi.

    out has K+1 slots; out[:, 0] is eta0 and xi supplies the K standard
    normal increments.  The caller picks (decay, kick): Euler-Maruyama uses
    (1 - dt/gamma, sqrt(dt)/gamma); the distributionally exact update uses
    (exp(-dt/gamma), sqrt((1 - exp(-2 dt/gamma)) / (2 gamma))).
    """
    R, K, n = xi.shape
    for r in range(R):
        for i in range(n):
            out[r, 0, i] = eta0[r, i]
        for k in range(K):
            for i in range(n):
                out[r, k + 1, i] = decay * out[r, k, i] + kick * xi[r, k, i]


@njit(cache=True, inline="always")
def _rhs(y, Bd, pj, pk, A, C, force, wall_on, wc, wr, wm, wcap, out):
    """Drift + wall + constant forcing at state y; returns 1 if the wall engaged."""
    n = y.shape[0]
    P = Bd.shape[1]
    for i in range(n):
        acc = C[i] + force[i]
        for j in range(n):
            acc += A[i, j] * y[j]
        for p in range(P):
            acc += Bd[i, p] * y[pj[p]] * y[pk[p]]
        out[i] = acc
    hit = 0
    if wall_on:
        d2 = 0.0
        for i in range(n):
            dd = y[i] - wc[i]
            d2 += dd * dd
        if d2 > wr * wr:
            z = np.sqrt(d2) - wr
            e = wm * z - 1.0 / z
            if e > 700.0:
                e = 700.0
            w = np.exp(e)
            if w > wcap:
                w = wcap
            for i in range(n):
                out[i] -= w * (y[i] - wc[i])
            hit = 1
    return hit


@njit(cache=True)
def euler_white(x, Bd, pj, pk, A, C, LdW, wall_on, wc, wr, wm, wcap, dt, xi, sub, g0, out, pos0):
    """Euler-Maruyama chunk under white noise; LdW = sqrt(2Q) * sqrt(dt).

    Records the state after every sub-th global step into out.  Returns
    (next output slot, wall-engaged step count, first bad global step or -1).
    """
    R, K, n = xi.shape
    f = np.empty(n)
    xr = np.empty(n)
    zero = np.zeros(n)
    wall_steps = 0
    bad = -1
    pos = pos0
    for r in range(R):
        for i in range(n):
            xr[i] = x[r, i]
        xi_r = xi[r]
        pos = pos0
        for k in range(K):
            g = g0 + k + 1
            wall_steps += _rhs(xr, Bd, pj, pk, A, C, zero, wall_on, wc, wr, wm, wcap, f)
            for i in range(n):
                acc = xr[i] + dt * f[i]
                for j in range(n):
                    acc += LdW[i, j] * xi_r[k, j]
                xr[i] = acc
            finite = True
            for i in range(n):
                if not np.isfinite(xr[i]):
                    finite = False
            if not finite:
                bad = g
                break
            if g % sub == 0:
                for i in range(n):
                    out[r, pos, i] = xr[i]
                pos += 1
        for i in range(n):
            x[r, i] = xr[i]
        if bad >= 0:
            return pos, wall_steps, bad
    return pos, wall_steps, bad


@njit(cache=True)
def rk4_colored(x, Bd, pj, pk, A, C, S2Q, eta, wall_on, wc, wr, wm, wcap, dt, sub, g0, out, pos0):
    """RK4 chunk with the colored forcing sqrt(2Q) eta held fixed per step.

    eta has K+1 slots (value at the start of each step, plus the carry); the
    noise itself is advanced separately by ou_path.  Returns like euler_white.
    """
    R, n = x.shape
    K = eta.shape[1] - 1
    force = np.empty(n)
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    yt = np.empty(n)
    xr = np.empty(n)
    wall_steps = 0
    bad = -1
    pos = pos0
    sixth = dt / 6.0
    half = 0.5 * dt
    for r in range(R):
        for i in range(n):
            xr[i] = x[r, i]
        eta_r = eta[r]
        pos = pos0
        for k in range(K):
            g = g0 + k + 1
            for i in range(n):
                acc = 0.0
                for j in range(n):
                    acc += S2Q[i, j] * eta_r[k, j]
                force[i] = acc
            wall_steps += _rhs(xr, Bd, pj, pk, A, C, force, wall_on, wc, wr, wm, wcap, k1)
            for i in range(n):
                yt[i] = xr[i] + half * k1[i]
            _rhs(yt, Bd, pj, pk, A, C, force, wall_on, wc, wr, wm, wcap, k2)
            for i in range(n):
                yt[i] = xr[i] + half * k2[i]
            _rhs(yt, Bd, pj, pk, A, C, force, wall_on, wc, wr, wm, wcap, k3)
            for i in range(n):
                yt[i] = xr[i] + dt * k3[i]
            _rhs(yt, Bd, pj, pk, A, C, force, wall_on, wc, wr, wm, wcap, k4)
            for i in range(n):
                xr[i] += sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            finite = True
            for i in range(n):
                if not np.isfinite(xr[i]):
                    finite = False
            if not finite:
                bad = g
                break
            if g % sub == 0:
                for i in range(n):
                    out[r, pos, i] = xr[i]
                pos += 1
        for i in range(n):
            x[r, i] = xr[i]
        if bad >= 0:
            return pos, wall_steps, bad
    return pos, wall_steps, bad
