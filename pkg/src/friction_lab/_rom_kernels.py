"""Replicator-mutator hot loops, in explicit-loop and numpy form.

``f`` is the per-type effective fitness ``w * rho``; ``M`` is row-stochastic.
Integrators write into a preallocated ``traj`` of shape ``(steps + 1, n)`` and
return the index of the first step that produced a non-finite value, or -1.
"""

import numpy as np

from ._accel import jit


def _rhs_loops(p, f, M, out):
    n = p.shape[0]
    phi = 0.0
    for i in range(n):
        phi += p[i] * f[i]
    for j in range(n):
        acc = 0.0
        for i in range(n):
            acc += p[i] * f[i] * M[i, j]
        out[j] = acc - p[j] * phi


def _project_loops(p):
    n = p.shape[0]
    total = 0.0
    for i in range(n):
        if p[i] < 0.0:
            p[i] = 0.0
        total += p[i]
    for i in range(n):
        p[i] /= total


def _rk4_loops(p0, f, M, dt, steps, traj):
    n = p0.shape[0]
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    p = p0.copy()
    traj[0, :] = p
    for s in range(steps):
        _rhs(p, f, M, k1)
        for i in range(n):
            tmp[i] = p[i] + 0.5 * dt * k1[i]
        _rhs(tmp, f, M, k2)
        for i in range(n):
            tmp[i] = p[i] + 0.5 * dt * k2[i]
        _rhs(tmp, f, M, k3)
        for i in range(n):
            tmp[i] = p[i] + dt * k3[i]
        _rhs(tmp, f, M, k4)
        bad = False
        for i in range(n):
            p[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if not np.isfinite(p[i]):
                bad = True
        if bad:
            return s
        _project(p)
        traj[s + 1, :] = p
    return -1


def _power_loops(p0, Q, tol, max_iters):
    n = p0.shape[0]
    p = p0.copy()
    nxt = np.empty(n)
    residual = np.inf
    for it in range(max_iters):
        total = 0.0
        for j in range(n):
            acc = 0.0
            for i in range(n):
                acc += p[i] * Q[i, j]
            nxt[j] = acc
            total += acc
        residual = 0.0
        for j in range(n):
            r = abs(nxt[j] - p[j] * total)
            if r > residual:
                residual = r
        for j in range(n):
            p[j] = nxt[j] / total
        if residual < tol:
            return p, it + 1, residual
    return p, max_iters, residual


_rhs = jit(_rhs_loops)
_project = jit(_project_loops)
rk4_loops = jit(_rk4_loops)
power_loops = jit(_power_loops)


# ---------------------------------------------------------------------------
# numpy path


def rhs_numpy(p, f, M):
    pf = p * f
    return pf @ M - p * pf.sum()


def rk4_numpy(p0, f, M, dt, steps, traj):
    p = p0.copy()
    traj[0] = p
    for s in range(steps):
        k1 = rhs_numpy(p, f, M)
        k2 = rhs_numpy(p + 0.5 * dt * k1, f, M)
        k3 = rhs_numpy(p + 0.5 * dt * k2, f, M)
        k4 = rhs_numpy(p + dt * k3, f, M)
        p = p + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(p)):
            return s
        np.maximum(p, 0.0, out=p)
        p /= p.sum()
        traj[s + 1] = p
    return -1


def power_numpy(p0, Q, tol, max_iters):
    p = p0.copy()
    residual = np.inf
    for it in range(max_iters):
        nxt = p @ Q
        total = nxt.sum()
        residual = np.max(np.abs(nxt - p * total))
        p = nxt / total
        if residual < tol:
            return p, it + 1, residual
    return p, max_iters, residual


# ---------------------------------------------------------------------------
# ownership: scalar ODE, one loop serves both backends


def _ownership_loops(O0, beta, decay, holding, dt, traj):
    o = O0
    traj[0] = o
    for s in range(holding.shape[0]):
        if holding[s]:
            a, b = beta, beta
        else:
            a, b = 0.0, decay
        # dO/dt = a - b * O
        k1 = a - b * o
        k2 = a - b * (o + 0.5 * dt * k1)
        k3 = a - b * (o + 0.5 * dt * k2)
        k4 = a - b * (o + dt * k3)
        o = o + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        o = min(1.0, max(0.0, o))
        traj[s + 1] = o


ownership_loops = jit(_ownership_loops)
