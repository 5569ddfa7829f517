"""Tabular independent Q-learning episodes, loop form (numba) and numpy form.

Randomness is drawn outside and passed in, so both forms consume identical
streams and produce identical tables:

noise    (E, T + 1, n, m)  observation noise, already scaled
explore  (E, T, n)         uniforms compared against the exploration rate
random_a (E, T, n)         uniformly drawn action indices
rate     (E,)              exploration rate per episode
init     (E, m)            starting resource levels per episode

Outputs are per-episode mean per-step rewards ``rew_out (E, n)`` and greedy
action indices at the probe states ``pol_out (E, n, P)``. The return value is
the chunk-local episode that produced a non-finite value, or -1.
"""

import numpy as np

from .._accel import jit


def _obs_index_loops(s, noise_row, cap, bins):
    idx = 0
    mult = 1
    for j in range(s.shape[0]):
        b = int(np.floor((s[j] + noise_row[j]) / cap[j] * bins))
        if b < 0:
            b = 0
        elif b > bins - 1:
            b = bins - 1
        idx += b * mult
        mult *= bins
    return idx


def _argmax_row(row):
    best = 0
    for k in range(1, row.shape[0]):
        if row[k] > row[best]:
            best = k
    return best


def _episodes_loops(Q, noise, explore, random_a, rate, W, tau, cap, step, init, bins, lr, gamma,
                    acts, probe, rew_out, pol_out):
    E = noise.shape[0]
    T = noise.shape[1] - 1
    n = noise.shape[2]
    m = noise.shape[3]
    s = np.empty(m)
    idx = np.empty(n, np.int64)
    a = np.empty(n, np.int64)
    r = np.empty(n)
    total = np.empty(n)
    for e in range(E):
        for j in range(m):
            s[j] = init[e, j]
        for i in range(n):
            idx[i] = _obs_index(s, noise[e, 0, i], cap, bins)
            total[i] = 0.0
        for t in range(T):
            for i in range(n):
                g = _argmax(Q[i, idx[i]])
                a[i] = random_a[e, t, i] if explore[e, t, i] < rate[e] else g
            for j in range(m):
                acc = 0
                for i in range(n):
                    acc += acts[a[i], j]
                x = s[j] + step * (acc / n)
                if x < 0.0:
                    x = 0.0
                elif x > cap[j]:
                    x = cap[j]
                s[j] = x
            for i in range(n):
                acc_r = 0.0
                for j in range(m):
                    d = s[j] - tau[i, j]
                    acc_r += W[i, j] * (d * d)
                r[i] = -acc_r
                total[i] += r[i]
            last = t == T - 1
            for i in range(n):
                nidx = _obs_index(s, noise[e, t + 1, i], cap, bins)
                target = r[i]
                if not last:
                    target += gamma * Q[i, nidx, _argmax(Q[i, nidx])]
                q = Q[i, idx[i], a[i]]
                q += lr * (target - q)
                if not np.isfinite(q):
                    return e
                Q[i, idx[i], a[i]] = q
                idx[i] = nidx
        for i in range(n):
            rew_out[e, i] = total[i] / T
            for p in range(probe.shape[0]):
                pol_out[e, i, p] = _argmax(Q[i, probe[p]])
    return -1


_obs_index = jit(_obs_index_loops)
_argmax = jit(_argmax_row)
episodes_loops = jit(_episodes_loops)


# ---------------------------------------------------------------------------
# numpy path, vectorised across agents


def obs_index_numpy(obs, cap, bins):
    """Flat bin index for observations with trailing resource axis."""
    b = np.clip(np.floor(obs / cap * bins).astype(np.int64), 0, bins - 1)
    return (b * bins ** np.arange(obs.shape[-1])).sum(axis=-1)


def episodes_numpy(Q, noise, explore, random_a, rate, W, tau, cap, step, init, bins, lr, gamma,
                   acts, probe, rew_out, pol_out):
    E, T1, n, m = noise.shape
    T = T1 - 1
    agents = np.arange(n)
    for e in range(E):
        s = init[e].copy()
        idx = obs_index_numpy(s + noise[e, 0], cap, bins)
        total = np.zeros(n)
        for t in range(T):
            greedy = Q[agents, idx].argmax(axis=1)
            a = np.where(explore[e, t] < rate[e], random_a[e, t], greedy)
            s = np.clip(s + step * (acts[a].sum(axis=0) / n), 0.0, cap)
            d = s - tau
            r = -(W * (d * d)).sum(axis=1)
            total += r
            nidx = obs_index_numpy(s + noise[e, t + 1], cap, bins)
            target = r if t == T - 1 else r + gamma * Q[agents, nidx].max(axis=1)
            q = Q[agents, idx, a]
            q = q + lr * (target - q)
            if not np.all(np.isfinite(q)):
                return e
            Q[agents, idx, a] = q
            idx = nidx
        rew_out[e] = total / T
        pol_out[e] = Q[:, probe].argmax(axis=2)
    return -1
