import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from friction_lab.errors import ParameterError, TableError, UndefinedError
from friction_lab.kernel import KernelTriple, friction
from friction_lab.marl import (
    DESK_TABULAR,
    NEVER,
    AgentConfig,
    EnvConfig,
    ExperimentDesign,
    RewardParams,
    convergence_time,
    cooperative_optimum,
    env_step,
    exact_reward_correlation,
    greedy_rollout,
    make_rewards,
    measured_alignment,
    observe,
    pareto_frontier,
    pareto_inefficiency,
    policy_variance,
    read_records,
    records_from_csv,
    records_to_csv,
    reward_gap,
    run_experiment,
    run_seed,
    train_agents,
)
from friction_lab.marl.env import action_table, decode_action, encode_action, target_loadings
from friction_lab.marl.experiment import splitmix64

ENV = EnvConfig()


def rng(seed=0):
    return np.random.default_rng(seed)


# ---------------------------------------------------------------- environment


def test_step_examples():
    s = np.array([1.0, 0.5])
    nxt, r = env_step(s, np.zeros((2, 2), int), ENV)
    assert np.array_equal(nxt, s) and r is None
    nxt, _ = env_step(s, [[1, 0], [1, 0]], ENV)
    assert nxt[0] == pytest.approx(1.1) and nxt[1] == 0.5
    nxt, _ = env_step([2.0, 2.0], [[1, 1], [1, 1]], ENV)
    assert np.array_equal(nxt, [2.0, 2.0])


def test_step_rejects_bad_actions():
    with pytest.raises(ParameterError):
        env_step([1.0, 1.0], [[1, 0]], ENV)
    with pytest.raises(ParameterError):
        env_step([1.0, 1.0], [[2, 0], [0, 0]], ENV)


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=60, deadline=None)
def test_state_stays_in_box(seed):
    g = rng(seed)
    s = g.random(2) * 2.0
    acts = action_table(2)
    for _ in range(40):
        s, _ = env_step(s, acts[g.integers(0, 9, 2)], ENV)
        assert np.all(s >= 0) and np.all(s <= 2.0)


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=40, deadline=None)
def test_reward_nonpositive_and_zero_only_at_targets(seed):
    g = rng(seed)
    rw = RewardParams(g.random((2, 2)), g.random((2, 2)) * 2)
    assert np.all(rw(g.random((50, 2)) * 2) <= 0)
    # each agent scores 0 exactly at its own targets
    assert np.allclose(np.diag(rw(rw.targets)), 0.0)


def test_action_codec_roundtrip():
    for m in (1, 2, 3):
        for a in range(3 ** m):
            assert encode_action(decode_action(a, m)) == a
    assert decode_action(0, 2).tolist() == [-1, -1]
    assert decode_action(4, 2).tolist() == [0, 0]


def test_initial_state_validation():
    assert EnvConfig().initial_state == (1.0, 1.0)
    with pytest.raises(ParameterError):
        EnvConfig(initial_state=(3.0, 0.0))
    with pytest.raises(ParameterError):
        EnvConfig(initial_state="corner")
    starts = EnvConfig(initial_state="uniform").starts(rng(), 500)
    assert starts.shape == (500, 2) and np.all((starts >= 0) & (starts <= 2))


# ---------------------------------------------------------------- rewards


@pytest.mark.parametrize("alpha,n", [(0.7, 2), (-0.8, 2), (-0.3, 3), (0.0, 4)])
def test_loadings_have_unit_rows_and_target_products(alpha, n):
    L = target_loadings(alpha, n)
    G = L @ L.T
    assert np.allclose(np.diag(G), 1.0)
    assert np.allclose(G[~np.eye(n, dtype=bool)], alpha)


def test_infeasible_negative_correlation():
    with pytest.raises(ParameterError, match="infeasible"):
        target_loadings(-0.8, 3)


def test_alpha_one_gives_identical_targets():
    rw = make_rewards(1.0, 0.5, ENV, rng())
    assert np.array_equal(rw.targets[0], rw.targets[1])


def test_negative_alpha_empirical_correlation():
    g = rng(42)
    draws = np.array([make_rewards(-0.8, 1.0, EnvConfig(m_resources=1), g).targets[:, 0] for _ in range(1000)])
    r = np.corrcoef(draws[:, 0], draws[:, 1])[0, 1]
    assert abs(r - (-0.8)) <= 0.05


def test_weights_equal_stake_level():
    rw = make_rewards(0.0, 0.2, ENV, rng())
    assert np.array_equal(rw.weights.mean(axis=1), [0.2, 0.2])


def test_observe_examples():
    s = np.array([1.0, 0.5])
    assert np.array_equal(observe(s, 0.0, rng(), 3), np.tile(s, (3, 1)))
    obs = np.array([observe(s, 1.0, g, 2) for g in [rng(1)] for _ in range(10000)])
    assert np.allclose(obs.reshape(-1, 2).var(axis=0), 1.0, rtol=0.05)
    noise = obs - s
    assert abs(np.corrcoef(noise[:, 0, 0], noise[:, 1, 0])[0, 1]) < 0.05


# ---------------------------------------------------------------- metrics


def test_reward_gap_example():
    cfg = EnvConfig(m_resources=1)
    rw = RewardParams([[1.0], [1.0]], [[0.0], [2.0]])
    opt = cooperative_optimum(rw, cfg)
    assert opt.state[0] == 1.0 and opt.mean_reward == -1.0
    assert reward_gap([-2.0] * 10, rw, cfg) == pytest.approx(1.0)
    assert reward_gap([-1.0] * 10, rw, cfg) == 0.0


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=25, deadline=None)
def test_optimum_matches_grid_search(seed):
    g = rng(seed)
    rw = RewardParams(g.random((2, 2)) * 0.9 + 0.1, g.random((2, 2)) * 3 - 0.5)
    axis = np.linspace(0, 2, 401)
    grid = np.array(list(itertools.product(axis, axis)))
    best = rw(grid).mean(axis=1).max()
    opt = cooperative_optimum(rw, ENV).mean_reward
    assert opt >= best - 1e-12
    assert opt - best < 1e-4


def test_degenerate_weights_use_midpoint():
    rw = RewardParams([[0.0, 1.0], [0.0, 1.0]], [[0.3, 1.0], [1.5, 1.2]])
    opt = cooperative_optimum(rw, ENV)
    assert opt.degenerate.tolist() == [True, False]
    assert opt.state[0] == 1.0


def test_convergence_time_examples():
    assert convergence_time(np.zeros((5, 3))) == 1
    alt = np.array([[0.0], [1.0]] * 5)
    assert convergence_time(alt, delta=0.5) == NEVER
    # snapshots 6 and 7 are the first consecutive pair that agree
    trace = np.array([[0], [1], [0], [1], [0], [1], [2], [2], [3], [3], [3]], float)
    assert convergence_time(trace, delta=0.5) == 7
    assert convergence_time(trace, delta=0.5, window=2) == 9


def test_policy_variance_examples():
    assert policy_variance([[1, 2], [1, 2], [1, 2]]) == 0.0
    assert policy_variance([[0.0], [2.0]]) == 1.0
    P = [rng(s).random(4) for s in range(5)]
    assert policy_variance(P) == pytest.approx(policy_variance(P[::-1]))
    with pytest.raises(ParameterError):
        policy_variance([[1.0]])
    with pytest.raises(ParameterError):
        policy_variance([[1.0], [1.0, 2.0]])


def test_pareto_examples_and_brute_force():
    rw = make_rewards(-0.4, 0.8, ENV, rng(3))
    F = pareto_frontier(rw, ENV)
    assert pareto_inefficiency(F[7], rw, ENV, F) == 0.0
    assert pareto_inefficiency(F.min(axis=0) - 0.5, rw, ENV, F) > 0
    g = rng(4)
    for _ in range(20):
        r = F.min(axis=0) - g.random(2)
        naive = min(math.dist(r, f) for f in F)
        assert pareto_inefficiency(r, rw, ENV, F) == pytest.approx(naive, abs=1e-12)


def test_frontier_points_are_not_dominated():
    rw = make_rewards(-0.8, 1.0, ENV, rng(9))
    F = pareto_frontier(rw, ENV)
    for f in F:
        assert not np.any(np.all(F >= f, axis=1) & np.any(F > f, axis=1))


def test_alignment_examples():
    same = RewardParams([[1, 1], [1, 1]], [[0.5, 1.5], [0.5, 1.5]])
    assert measured_alignment(same, ENV, 1000, rng()) == pytest.approx(1.0)
    mirror = RewardParams([[1, 1], [1, 1]], [[0.0, 0.0], [2.0, 2.0]])
    assert measured_alignment(mirror, ENV, 1000, rng()) < 0
    flat = RewardParams([[0, 0], [1, 1]], [[0.5, 1.5], [0.5, 1.5]])
    with pytest.raises(UndefinedError):
        measured_alignment(flat, ENV, 1000, rng())
    solo = EnvConfig(n_agents=1, m_resources=2)
    with pytest.raises(ParameterError):
        measured_alignment(RewardParams([[1, 1]], [[0.5, 1.5]]), solo, 1000, rng())


def test_exact_correlation_matches_numeric_integration():
    rw = make_rewards(0.3, 0.7, ENV, rng(5))
    # midpoint rule on a fine grid as an independent check of the closed form
    axis = (np.arange(600) + 0.5) / 600 * 2
    grid = np.array(list(itertools.product(axis, axis)))
    R = rw(grid)
    assert exact_reward_correlation(rw, ENV) == pytest.approx(np.corrcoef(R.T)[0, 1], abs=1e-4)


@pytest.mark.parametrize("alpha", [-0.8, 0.0, 0.8])
def test_measured_alignment_converges(alpha):
    g = rng(11)
    for _ in range(3):
        rw = make_rewards(alpha, 0.6, ENV, g)
        est = measured_alignment(rw, ENV, 100_000, g)
        assert abs(est - exact_reward_correlation(rw, ENV)) <= 0.03


# ---------------------------------------------------------------- training


def test_single_agent_reaches_target():
    cfg = EnvConfig(n_agents=1, m_resources=1)
    tau = 1.3
    rw = RewardParams([[1.0]], [[tau]])
    res = train_agents(cfg, rw, DESK_TABULAR, rng(0))
    path = greedy_rollout(res, cfg, DESK_TABULAR)
    assert abs(path[-1, 0] - tau) <= 2 * cfg.step_size
    opt = cooperative_optimum(rw, cfg).mean_reward
    assert abs(res.reward_trace[-100:].mean() - opt) <= 0.05


def test_zero_learning_rate_freezes_policy():
    agent = AgentConfig(learn_rate=0.0, episodes=50)
    res = train_agents(ENV, make_rewards(0.0, 1.0, ENV, rng()), agent, rng(1))
    assert np.all(res.policy_trace == res.policy_trace[0])
    mlp = AgentConfig(approximator="mlp", learn_rate=0.0, episodes=3, hidden=8)
    res = train_agents(EnvConfig(episode_length=10), make_rewards(0.0, 1.0, ENV, rng()), mlp, rng(1))
    assert np.all(res.policy_trace == res.policy_trace[0])


@pytest.mark.parametrize("approx", ["tabular", "mlp"])
def test_training_is_deterministic(approx):
    env = EnvConfig(episode_length=20)
    agent = AgentConfig(approximator=approx, episodes=40 if approx == "tabular" else 3, hidden=8)
    rw = make_rewards(0.0, 1.0, env, rng())
    a = train_agents(env, rw, agent, rng(7), noise_level=0.5)
    b = train_agents(env, rw, agent, rng(7), noise_level=0.5)
    assert np.array_equal(a.reward_trace, b.reward_trace)
    assert np.array_equal(a.policy_trace, b.policy_trace)


@pytest.mark.parametrize("start", [None, "uniform"])
def test_backends_agree(start):
    env = EnvConfig(initial_state=start)
    rw = make_rewards(-0.4, 0.6, env, rng())
    a = train_agents(env, rw, DESK_TABULAR, rng(3), noise_level=0.25, episodes=70, backend="numba")
    b = train_agents(env, rw, DESK_TABULAR, rng(3), noise_level=0.25, episodes=70, backend="numpy")
    assert np.array_equal(a.q_tables, b.q_tables)
    assert np.array_equal(a.reward_trace, b.reward_trace)
    assert np.array_equal(a.policy_trace, b.policy_trace)


def test_training_rejects_mismatch():
    with pytest.raises(ParameterError):
        train_agents(EnvConfig(n_agents=3), make_rewards(0.0, 1.0, ENV, rng()), DESK_TABULAR, rng())
    with pytest.raises(ParameterError):
        train_agents(ENV, make_rewards(0.0, 1.0, ENV, rng()), DESK_TABULAR, rng(), noise_level=2.0)


def test_mlp_learns_something():
    env = EnvConfig(n_agents=1, m_resources=1, episode_length=30)
    rw = RewardParams([[1.0]], [[1.6]])
    res = train_agents(env, rw, AgentConfig(approximator="mlp", episodes=30, hidden=16), rng(2))
    assert res.reward_trace[-5:].mean() > res.reward_trace[:5].mean()


# ---------------------------------------------------------------- experiment


def test_splitmix_reference_values():
    # first outputs of the reference generator seeded with 0
    state, outs = 0, []
    for _ in range(3):
        outs.append(splitmix64(state))
        state = (state + 0x9E3779B97F4A7C15) & ((1 << 64) - 1)
    assert outs == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]
    assert len({run_seed(0, c, r) for c in range(20) for r in range(20)}) == 400


def small_design(**kw):
    base = dict(alpha_levels=(0.0,), sigma_levels=(0.6,), epsilon_levels=(0.5,), replications=1,
                alignment_samples=2000)
    base.update(kw)
    return ExperimentDesign(**base)


AGENT = AgentConfig(bins=15, learn_rate=0.5, discount=0.7, episodes=40)


def test_single_run_has_finite_metrics():
    (rec,) = run_experiment(small_design(), ENV, AGENT)
    assert rec.ok
    for c in ("reward_gap", "policy_variance", "pareto_inefficiency", "measured_alignment", "theoretical_friction"):
        assert math.isfinite(getattr(rec, c))
    assert rec.convergence_time == NEVER or rec.convergence_time >= 1


def test_csv_is_byte_identical_and_roundtrips(tmp_path):
    d = small_design(alpha_levels=(-0.4, 0.8), replications=2)
    text = records_to_csv(run_experiment(d, ENV, AGENT))
    assert text == records_to_csv(run_experiment(d, ENV, AGENT))
    p = tmp_path / "runs.csv"
    p.write_text(text)
    assert records_to_csv(read_records(p)) == text


def test_worker_count_does_not_change_results():
    d = small_design(alpha_levels=(-0.4, 0.8), sigma_levels=(0.2, 1.0), replications=2)
    assert records_to_csv(run_experiment(d, ENV, AGENT, workers=1)) == \
        records_to_csv(run_experiment(d, ENV, AGENT, workers=2))


def test_theoretical_friction_column_and_order():
    d = small_design(alpha_levels=(-0.4, 0.0, 0.8), sigma_levels=(0.2, 1.0), epsilon_levels=(0.0, 1.0),
                     replications=2)
    recs = run_experiment(d, ENV, AgentConfig(episodes=5))
    keys = [(r.alpha_index, r.sigma_index, r.epsilon_index, r.replication) for r in recs]
    assert keys == sorted(keys)
    for r in recs:
        assert r.theoretical_friction == friction(KernelTriple(r.alpha, r.sigma, r.epsilon))


def test_failures_are_recorded_in_row():
    d = small_design(alpha_levels=(-0.8,))
    (rec,) = run_experiment(d, EnvConfig(n_agents=3), AgentConfig(episodes=5))
    assert rec.error.startswith("parameter") and math.isnan(rec.reward_gap)
    assert records_from_csv(records_to_csv([rec]))[0].error == rec.error


def test_bad_csv_reports_line():
    text = records_to_csv(run_experiment(small_design(), ENV, AgentConfig(episodes=5)))
    lines = text.splitlines()
    lines[1] = lines[1].replace(lines[1].split(",")[8], "oops", 1)
    with pytest.raises(TableError) as exc:
        records_from_csv("\n".join(lines), "x.csv")
    assert exc.value.row == 2
