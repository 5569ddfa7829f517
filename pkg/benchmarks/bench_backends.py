#!/usr/bin/env python3
"""Compare the compiled-loop and numpy backends on the hot kernels.

Each case runs both backends on identical inputs, checks the outputs agree,
and reports the best wall time over ``--repeat`` runs. Compilation happens in
a warm-up call that is not timed.

Usage:
    python benchmarks/bench_backends.py [--repeat N] [--steps N] [--episodes N]

With FRICTION_LAB_NUMBA=0 the "numba" column runs the same loops in plain
Python, which is mainly useful for seeing how much the compiler buys.
"""

from __future__ import annotations

import argparse
import time
from dataclasses import dataclass

import numpy as np

from friction_lab import _accel
from friction_lab.marl import DESK_TABULAR, EnvConfig, make_rewards, train_agents
from friction_lab.rom import RomSystem, rom_integrate, stationary_distribution


@dataclass
class Row:
    name: str
    numba_s: float
    numpy_s: float
    agree: bool

    @property
    def speedup(self) -> float:
        return self.numpy_s / self.numba_s if self.numba_s > 0 else float("inf")


def best_of(fn, repeat):
    fn()  # warm-up / compile
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def random_system(n, seed):
    g = np.random.default_rng(seed)
    M = g.random((n, n)) + 0.05
    M /= M.sum(axis=1, keepdims=True)
    return RomSystem(g.random(n) + 0.5, g.random(n) * 0.5 + 0.5, M)


def case_rk4(repeat, steps):
    sys_ = random_system(5, 0)
    p0 = np.full(5, 0.2)
    tn, a = best_of(lambda: rom_integrate(p0, sys_, 1e-3, steps, backend="numba"), repeat)
    tp, b = best_of(lambda: rom_integrate(p0, sys_, 1e-3, steps, backend="numpy"), repeat)
    return Row(f"rom_integrate n=5 steps={steps}", tn, tp, bool(np.allclose(a, b, rtol=0, atol=1e-12)))


def case_stationary(repeat):
    sys_ = random_system(20, 1)
    tn, a = best_of(lambda: stationary_distribution(sys_, backend="numba"), repeat)
    tp, b = best_of(lambda: stationary_distribution(sys_, backend="numpy"), repeat)
    return Row("stationary_distribution n=20", tn, tp, bool(np.allclose(a, b, rtol=0, atol=1e-10)))


def case_iql(repeat, episodes):
    env = EnvConfig()
    rw = make_rewards(0.0, 1.0, env, np.random.default_rng(2))

    def go(backend):
        return train_agents(env, rw, DESK_TABULAR, np.random.default_rng(3), noise_level=0.5,
                            episodes=episodes, backend=backend)

    tn, a = best_of(lambda: go("numba"), repeat)
    tp, b = best_of(lambda: go("numpy"), repeat)
    same = np.array_equal(a.q_tables, b.q_tables) and np.array_equal(a.reward_trace, b.reward_trace)
    return Row(f"train_agents tabular episodes={episodes}", tn, tp, bool(same))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--steps", type=int, default=10_000)
    ap.add_argument("--episodes", type=int, default=200)
    args = ap.parse_args(argv)

    print(f"compiled loops active: {_accel.USE_NUMBA}")
    rows = [case_rk4(args.repeat, args.steps), case_stationary(args.repeat), case_iql(args.repeat, args.episodes)]
    width = max(len(r.name) for r in rows)
    print(f"{'case':<{width}}  {'numba s':>9}  {'numpy s':>9}  {'speedup':>8}  agree")
    for r in rows:
        print(f"{r.name:<{width}}  {r.numba_s:9.4f}  {r.numpy_s:9.4f}  {r.speedup:7.1f}x  {r.agree}")
    return 0 if all(r.agree for r in rows) else 1


if __name__ == "__main__":
    raise SystemExit(main())
