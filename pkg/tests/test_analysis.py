import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import spearmanr

from friction_lab import analysis as an
from friction_lab.errors import DegenerateInputError, ParameterError, SingularDesignError
from friction_lab.kernel import KernelTriple, friction
from friction_lab.marl import NEVER, MetricsRecord

A_LEVELS = (-0.4, 0.0, 0.8)
S_LEVELS = (0.2, 0.6, 1.0)
E_LEVELS = (0.0, 0.5, 1.0)


def grid(reps=3):
    pts = [(a, s, e) for a in A_LEVELS for s in S_LEVELS for e in E_LEVELS for _ in range(reps)]
    return np.array(pts).T


def synth(values_fn, reps=3, noise=0.0, seed=0):
    a, s, e = grid(reps)
    g = np.random.default_rng(seed)
    y = values_fn(a, s, e)
    y = y + noise * g.standard_normal(y.shape)
    return an.records_for(a, s, e, y)


def test_design_matrix_examples():
    recs = an.records_for([0.3], [0.5], [0.2], [1.0])
    assert an.design_matrix(recs, "M4").tolist() == [[1.0, 0.3, 0.5, 0.2]]
    assert an.design_matrix(recs, "M1")[0, 1] == friction(KernelTriple(0.3, 0.5, 0.2))
    assert an.design_matrix(an.records_for([0.0], [1.0], [1.0], [0.0]), "M3")[0, 1] == 1.0
    with pytest.raises(ParameterError):
        an.design_matrix(an.records_for([-1.0], [1.0], [1.0], [0.0]), "M1")
    with pytest.raises(ParameterError):
        an.design_matrix(recs, "M9")


def test_m1_feature_matches_kernel_on_grid():
    recs = synth(lambda a, s, e: a)
    X = an.design_matrix(recs, "M1")
    for r, f in zip(recs, X[:, 1]):
        assert f == friction(KernelTriple(r.alpha, r.sigma, r.epsilon))


def test_exact_linear_fit():
    g = np.random.default_rng(1)
    X = np.column_stack([np.ones(30), g.random((30, 2))])
    y = X @ [1.0, -2.0, 0.5]
    fit = an.fit_ols(y, X)
    assert fit.r_squared == 1.0
    assert np.allclose(fit.residuals, 0.0, atol=1e-12)
    assert np.allclose(fit.coefficients, [1.0, -2.0, 0.5])
    assert math.isfinite(fit.aic) and math.isfinite(fit.bic)


def test_intercept_only_gives_mean():
    y = np.array([3.0, 3.0, 3.0, 3.0])
    fit = an.fit_ols(y, np.ones((4, 1)))
    assert fit.coefficients[0] == 3.0
    fit = an.fit_ols([1.0, 2.0, 6.0], np.ones((3, 1)))
    assert fit.coefficients[0] == pytest.approx(3.0)


def test_information_criteria_formula():
    g = np.random.default_rng(2)
    X = np.column_stack([np.ones(40), g.random(40)])
    y = g.random(40)
    fit = an.fit_ols(y, X)
    rss = float(np.sum(fit.residuals ** 2))
    assert fit.aic == pytest.approx(40 * math.log(rss / 40) + 4)
    assert fit.bic == pytest.approx(40 * math.log(rss / 40) + 2 * math.log(40))


def test_synthetic_slope_recovered():
    recs = synth(lambda a, s, e: 2 * s * (1 + e) / (1 + a), reps=5, noise=0.01)
    fit = an.fit_model(recs, "reward_gap", "M1")
    assert 1.9 <= fit.coefficients[1] <= 2.1


def test_rank_deficient_design():
    X = np.column_stack([np.ones(5), np.arange(5.0), 2 * np.arange(5.0)])
    with pytest.raises(SingularDesignError):
        an.fit_ols(np.arange(5.0), X)
    with pytest.raises(SingularDesignError):
        an.fit_ols([1.0], np.ones((1, 2)))


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=30, deadline=None)
def test_residuals_orthogonal_and_nesting(seed):
    g = np.random.default_rng(seed)
    n = 25
    X = np.column_stack([np.ones(n), g.standard_normal((n, 2))])
    y = g.standard_normal(n)
    fit = an.fit_ols(y, X)
    assert np.all(np.abs(X.T @ fit.residuals) < 1e-8)
    # a useless extra column never raises RSS; BIC charges ln n for it
    bigger = an.fit_ols(y, np.column_stack([X, g.standard_normal(n)]))
    rss_small = float(fit.residuals @ fit.residuals)
    rss_big = float(bigger.residuals @ bigger.residuals)
    assert rss_big <= rss_small + 1e-12
    assert bigger.bic - bigger.aic > fit.bic - fit.aic


def test_useless_column_penalised_on_fixture():
    g = np.random.default_rng(5)
    x = g.random(60)
    y = 1 + 3 * x + 0.1 * g.standard_normal(60)
    small = an.fit_ols(y, np.column_stack([np.ones(60), x]))
    big = an.fit_ols(y, np.column_stack([np.ones(60), x, g.random(60)]))
    assert big.bic > small.bic


def test_model_ranking_on_generated_data():
    m1 = synth(lambda a, s, e: 0.3 + 1.5 * s * (1 + e) / (1 + a), reps=4, noise=0.02)
    assert an.compare_models(m1)[0].model == "M1"
    m4 = synth(lambda a, s, e: 0.1 - 0.8 * a + 0.5 * s + 0.9 * e, reps=4, noise=0.02)
    ranks = {r.model: r for r in an.compare_models(m4)}
    assert ranks["M4"].aic < ranks["M1"].aic
    assert min(r.delta_aic for r in ranks.values()) == 0.0


def test_ranking_invariant_under_shuffle():
    recs = synth(lambda a, s, e: s + 0.2 * e - 0.1 * a, noise=0.05)
    order = np.random.default_rng(3).permutation(len(recs))
    a = [(r.model, round(r.aic, 9)) for r in an.compare_models(recs)]
    b = [(r.model, round(r.aic, 9)) for r in an.compare_models([recs[i] for i in order])]
    assert a == b


def test_compare_needs_ten_records():
    with pytest.raises(DegenerateInputError):
        an.compare_models(synth(lambda a, s, e: s)[:9])


def test_permutation_spearman_matches_scipy_statistic():
    g = np.random.default_rng(4)
    x = g.integers(0, 4, 50).astype(float)
    y = g.random(50)
    rho, p = an.permutation_spearman(x, y, np.random.default_rng(0), 500)
    assert rho == pytest.approx(spearmanr(x, y).statistic, abs=1e-12)
    assert 0 < p <= 1


def test_permutation_p_is_seeded():
    x = np.arange(20.0)
    y = np.random.default_rng(9).random(20)
    assert an.permutation_spearman(x, y, np.random.default_rng(1))[1] == \
        an.permutation_spearman(x, y, np.random.default_rng(1))[1]


def test_strictly_decreasing_proxy_in_alpha():
    recs = synth(lambda a, s, e: -a)
    h1 = next(h for h in an.test_hypotheses(recs, shuffles=1000) if h.hypothesis == "H1")
    assert h1.statistic == pytest.approx(-1.0)
    assert h1.direction_satisfied and h1.supported


def test_independent_proxy_rarely_significant():
    # proxy drawn independently of the factors; rejections should track the 5% level
    hits = 0
    for seed in range(40):
        recs = synth(lambda a, s, e: np.random.default_rng(seed).random(a.shape))
        h3 = next(h for h in an.test_hypotheses(recs, seed=seed, shuffles=1000) if h.hypothesis == "H3")
        hits += h3.significant
    assert hits <= 6


def test_h4_on_friction_law_with_noise():
    def law(a, s, e):
        F = s * (1 + e) / (1 + a)
        return F * (1 + 0.05 * np.random.default_rng(8).standard_normal(F.shape))
    recs = synth(law, reps=5)
    h4 = next(h for h in an.test_hypotheses(recs, shuffles=1000) if h.hypothesis == "H4")
    assert h4.r_squared > 0.9 and h4.statistic > 0 and h4.supported


def test_constant_proxy_is_marked_degenerate():
    reps = an.test_hypotheses(synth(lambda a, s, e: np.zeros_like(a)), shuffles=200)
    assert len(reps) == 4
    assert all(h.degenerate and h.p_value == 1.0 and not h.supported for h in reps)


def test_single_level_factor_rejected():
    recs = an.records_for([0.0] * 12, np.linspace(0.1, 1, 12), np.linspace(0, 1, 12), np.arange(12.0))
    with pytest.raises(DegenerateInputError):
        an.test_hypotheses(recs)


def test_never_ranks_last():
    recs = [MetricsRecord(0, 0, 0, i, 0.0, 0.5, 0.0, 0, convergence_time=c)
            for i, c in enumerate([3, NEVER, 10, 1])]
    v = an.proxy_values(recs, "convergence_time")
    assert v.tolist() == [3.0, 11.0, 10.0, 1.0]


def test_failed_rows_are_skipped():
    recs = synth(lambda a, s, e: s)
    recs[0].error = "training: boom"
    recs[0].reward_gap = math.nan
    assert an.fit_model(recs, "reward_gap", "M1").n_observations == len(recs) - 1


def test_report_and_table_are_serialisable():
    def proxies(a, s, e):
        return s * (1 + e) / (1 + a)
    recs = synth(proxies)
    for r in recs:
        r.pareto_inefficiency = r.reward_gap * 2
        r.policy_variance = r.sigma
        r.convergence_time = int(10 * r.epsilon) + 1
    rep = an.analysis_report(recs, shuffles=200)
    text = json.dumps(rep, allow_nan=False)
    ids = {(h["hypothesis"], h["proxy"]) for h in json.loads(text)["hypotheses"]}
    assert {"H1", "H2", "H3", "H4"} == {i for i, _ in ids}
    table = an.coefficient_table(recs).splitlines()
    assert table[0] == "proxy,model,term,estimate,std_error"
    assert len(table) == 1 + 4 * (2 + 2 + 2 + 4 + 5)
