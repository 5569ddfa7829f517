"""Multi-agent validation experiment: environment, learners, metrics and sweep runner."""

from .agents import DESK_TABULAR, AgentConfig, TrainingResult, greedy_rollout, probe_states, train_agents
from .env import EnvConfig, RewardParams, env_step, make_rewards, observe, optimal_state
from .experiment import (
    COLUMNS,
    ExperimentDesign,
    MetricsRecord,
    read_records,
    records_from_csv,
    records_to_csv,
    run_experiment,
    run_seed,
)
from .metrics import (
    NEVER,
    convergence_time,
    cooperative_optimum,
    exact_reward_correlation,
    measured_alignment,
    pareto_frontier,
    pareto_inefficiency,
    policy_variance,
    reward_gap,
)
