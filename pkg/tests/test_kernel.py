import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from friction_lab.errors import DivergenceError, ParameterError, SizeError, UndefinedError
from friction_lab.kernel import (
    DelegationDomain,
    FrictionForm,
    KernelTriple,
    Stakeholder,
    SuppressionSchedule,
    aggregate_alignment,
    falsification_index,
    falsification_split,
    friction,
    friction_aggregate,
    friction_aware_allocation,
    friction_error_propagation,
    friction_error_std,
    friction_form,
    friction_partials,
    is_legitimate,
    latent_friction,
    legitimacy,
    system_friction,
)

alphas = st.floats(-0.99, 1.0)
sigmas = st.floats(0.0, 100.0)
epsilons = st.floats(0.0, 1.0)


def domain(stakes, alignments=None, entropies=None, voices=None, consents=None):
    return DelegationDomain.from_arrays(stakes, alignments, entropies, voices, consents)


def test_triple_rejects_out_of_range():
    with pytest.raises(ParameterError):
        KernelTriple(alpha=1.5, sigma=1, epsilon=0)
    with pytest.raises(ParameterError):
        KernelTriple(alpha=0, sigma=-1, epsilon=0)
    with pytest.raises(ParameterError):
        KernelTriple(alpha=0, sigma=1, epsilon=1.2)
    # alpha = -1 is representable, only evaluation fails
    k = KernelTriple(alpha=-1, sigma=1, epsilon=0)
    with pytest.raises(DivergenceError):
        friction(k)


@pytest.mark.parametrize(
    "sigma, alpha, epsilon, expected",
    [(1, 1, 0, 0.5), (0, 0.3, 0.7, 0.0), (2, 0, 1, 4.0)],
)
def test_friction_examples(sigma, alpha, epsilon, expected):
    assert friction(KernelTriple(alpha, sigma, epsilon)) == expected


def test_friction_forms():
    k = KernelTriple(0, 1, 0)
    assert friction_form(FrictionForm("power_law", 1, 1), k) == friction(k) == 1
    assert friction_form(FrictionForm("additive"), k) == 1
    assert friction_form(FrictionForm("exponential"), k) == 1
    assert friction_form(FrictionForm("multiplicative"), KernelTriple(0, 1, 1)) == 1
    with pytest.raises(DivergenceError):
        friction_form(FrictionForm("power_law", 2, 3), KernelTriple(-1, 1, 0))
    with pytest.raises(ParameterError):
        FrictionForm("quadratic")


@given(alphas, sigmas, epsilons)
def test_power_law_unit_exponents_is_canonical(a, s, e):
    k = KernelTriple(a, s, e)
    assert friction_form(FrictionForm("power_law", 1.0, 1.0), k) == pytest.approx(friction(k), rel=1e-15)


def test_partials_examples():
    assert friction_partials(KernelTriple(0, 1, 0)) == (1, -1, 1)
    assert friction_partials(KernelTriple(0, 0, 0)) == (1, 0, 0)


def _central_difference(fn, x, h=1e-5):
    return (fn(x + h) - fn(x - h)) / (2 * h)


@given(st.floats(-0.9, 0.9), st.floats(0.01, 10.0), st.floats(0.01, 0.99))
def test_partials_match_finite_differences(a, s, e):
    ds, da, de = friction_partials(KernelTriple(a, s, e))
    # independent closed-form friction, not the library function
    F = lambda s_, a_, e_: s_ * (1 + e_) / (1 + a_)  # noqa: E731
    fd_s = _central_difference(lambda x: F(x, a, e), s)
    fd_a = _central_difference(lambda x: F(s, x, e), a)
    fd_e = _central_difference(lambda x: F(s, a, x), e)
    assert ds == pytest.approx(fd_s, rel=1e-6)
    assert da == pytest.approx(fd_a, rel=1e-6)
    assert de == pytest.approx(fd_e, rel=1e-6)


def test_aggregate_examples():
    assert friction_aggregate(domain([1], [1], [0])) == 0.5
    two = domain([1, 1], [0, 0], [0, 0])
    assert friction_aggregate(two) == 2 == friction(KernelTriple(0, 2, 0))
    assert friction_aggregate(domain([1, 2], [1, 0], [0, 1])) == 4.5


def test_aggregate_pole_names_stakeholder():
    d = DelegationDomain((Stakeholder("a", 1, 0.5), Stakeholder("b", 1, -1.0)))
    with pytest.raises(DivergenceError) as info:
        friction_aggregate(d)
    assert info.value.index == "b"


@given(st.lists(st.floats(0.0, 10.0), min_size=1, max_size=8), alphas, epsilons)
def test_homogeneous_aggregate_equals_pooled(stakes, a, e):
    d = domain(stakes, [a] * len(stakes), [e] * len(stakes))
    pooled = friction(KernelTriple(a, sum(stakes), e))
    assert friction_aggregate(d) == pytest.approx(pooled, rel=1e-12, abs=1e-300)


@given(
    st.lists(
        st.tuples(st.floats(0.0, 10.0), alphas, epsilons),
        min_size=1,
        max_size=8,
    ).filter(lambda rows: sum(r[0] for r in rows) > 0)
)
def test_inevitable_friction(rows):
    stakes, al, en = zip(*rows)
    d = domain(stakes, al, en)
    F = friction_aggregate(d)
    assert F > 0
    assert F >= d.total_stake / 2 - 1e-12


def test_total_stake_is_member_sum():
    d = domain([0.1, 0.2, 0.3])
    assert d.total_stake == pytest.approx(0.6, rel=1e-12)
    assert len(d.affected) == 3
    assert len(domain([0.0, 1.0]).affected) == 1


def test_legitimacy_examples():
    assert legitimacy(domain([1, 2], voices=[1, 1])) == 1
    assert legitimacy(domain([1, 2], voices=[0, 0])) == 0
    assert legitimacy(domain([3, 1], voices=[1, 0])) == 0.75
    with pytest.raises(UndefinedError):
        legitimacy(domain([0, 0], voices=[1, 1]))


@given(
    st.lists(st.tuples(st.floats(0.01, 10.0), st.floats(0.0, 1.0)), min_size=1, max_size=6),
    st.floats(0.1, 100.0),
)
def test_legitimacy_bounded_and_scale_invariant(rows, scale):
    stakes, voices = zip(*rows)
    L = legitimacy(domain(stakes, voices=voices))
    assert 0 <= L <= 1
    L2 = legitimacy(domain([s * scale for s in stakes], voices=voices))
    assert L2 == pytest.approx(L, rel=1e-12, abs=1e-15)


def test_is_legitimate():
    d = domain([3, 1], consents=[True, False])
    assert is_legitimate(d, 0.7)
    assert is_legitimate(domain([1, 2], consents=[True, True]), 1.0)
    assert not is_legitimate(domain([1, 2], consents=[False, False]), 0.01)
    with pytest.raises(ParameterError):
        is_legitimate(d, 0.0)
    with pytest.raises(ParameterError):
        is_legitimate(d, 1.5)
    with pytest.raises(UndefinedError):
        is_legitimate(domain([0.0]), 0.5)


def test_aggregate_alignment():
    assert aggregate_alignment(domain([1, 1], [1, -1])) == 0
    assert aggregate_alignment(domain([2], [0.4])) == 0.4
    assert aggregate_alignment(domain([3, 1], [1, -1])) == 0.5


def test_error_propagation_examples():
    k = KernelTriple(0, 1, 0)
    assert friction_error_propagation(k, (0, 0.01, 0)) == pytest.approx(-0.01)
    assert friction_error_propagation(k, (0, 0, 0)) == 0


def test_error_propagation_vs_monte_carlo():
    rng = np.random.default_rng(7)
    k = KernelTriple(0.0, 1.0, 0.0)
    eta = rng.normal(0.0, 1e-3, size=(100_000, 3))
    s, a, e = k.sigma + eta[:, 0], k.alpha + eta[:, 1], k.epsilon + eta[:, 2]
    mc = s * (1 + e) / (1 + a) - 1.0
    # sample by sample, the first-order shift tracks the true shift to second order
    pred = np.array([friction_error_propagation(k, row) for row in eta[:2000]])
    assert np.max(np.abs(pred - mc[:2000])) < 5e-5
    # propagated spread
    assert friction_error_std(k, (1e-3, 1e-3, 1e-3)) == pytest.approx(mc.std(), rel=0.05)


def test_latent_friction():
    assert latent_friction(3.0, SuppressionSchedule.constant(0.0), 7.0) == 3.0
    assert latent_friction(1.0, SuppressionSchedule.constant(0.1), 10.0) == pytest.approx(math.e)
    two_seg = SuppressionSchedule(((0.0, 0.2), (5.0, 0.0)))
    assert latent_friction(2.0, two_seg, 10.0) == pytest.approx(2 * math.e)
    with pytest.raises(ParameterError):
        latent_friction(1.0, two_seg, -1.0)
    with pytest.raises(ParameterError):
        SuppressionSchedule(((1.0, 0.1), (1.0, 0.2)))
    with pytest.raises(ParameterError):
        SuppressionSchedule(((0.0, -0.1),))


def test_latent_friction_late_start():
    sched = SuppressionSchedule(((2.0, 1.0),))
    assert sched.integral(1.0) == 0.0
    assert sched.integral(3.5) == pytest.approx(1.5)
    assert sched.kappa(1.0) == 0.0 and sched.kappa(2.0) == 1.0


def test_falsification():
    assert falsification_index(1.0, 1.0) == 0
    assert falsification_index(0.0, 1.0) == 1
    assert falsification_index(0.36, 1.0) == pytest.approx(0.64)
    assert falsification_index(2.0, 1.0) == 0  # clamped
    with pytest.raises(UndefinedError):
        falsification_index(1.0, 0.0)
    assert falsification_split(5.0, 0.0) == (5.0, 0.0)
    assert falsification_split(5.0, 1.0) == (0.0, 5.0)
    obs, lat = falsification_split(10.0, 0.3)
    assert obs == pytest.approx(7) and lat == pytest.approx(3)
    with pytest.raises(ParameterError):
        falsification_split(1.0, 1.1)


@given(st.floats(0.0, 1e6), st.floats(0.0, 1.0))
def test_falsification_split_sums_exactly(F, psi):
    obs, lat = falsification_split(F, psi)
    assert obs >= 0 and lat >= 0
    assert obs + lat == F


# ---------------------------------------------------------------------------
# resource consent


def naive_system_friction(assignment, stakes, alignments, entropies):
    total = 0.0
    n = len(stakes)
    for r, c in enumerate(assignment):
        for j in range(n):
            if j != c:
                total += stakes[j][r] * (1 + entropies[c][j]) / (1 + alignments[c][j][r])
    return total


def random_instance(rng, n, m):
    stakes = rng.uniform(0, 2, size=(n, m))
    alignments = rng.uniform(-0.9, 1.0, size=(n, n, m))
    entropies = rng.uniform(0, 1, size=(n, n))
    return stakes, alignments, entropies


def test_system_friction_examples():
    assert system_friction([0], [[1.0]], [[[0.0]]], [[0.0]]) == 0.0
    stakes = [[0.0], [1.0]]
    alignments = np.zeros((2, 2, 1))
    assert system_friction([0], stakes, alignments, np.zeros((2, 2))) == 1.0


def test_system_friction_matches_double_sum():
    rng = np.random.default_rng(3)
    stakes, al, en = random_instance(rng, 3, 2)
    for assignment in itertools.product(range(3), repeat=2):
        assert system_friction(assignment, stakes, al, en) == pytest.approx(
            naive_system_friction(assignment, stakes, al, en), rel=1e-12
        )


def test_allocation_single_agent():
    assignment, obj = friction_aware_allocation([[1.0, 2.0]], np.zeros((1, 1, 2)), [[0.0]])
    assert assignment == (0, 0) and obj == 0.0


def test_allocation_prefers_aligned_controller():
    # controller A=0 has alignment 0.9 towards B; B has 0.0 towards A
    al = np.zeros((2, 2, 1))
    al[0, 1, 0] = 0.9
    assignment, obj = friction_aware_allocation([[1.0], [1.0]], al, np.zeros((2, 2)))
    assert assignment == (0,)
    assert obj == pytest.approx(1 / 1.9)


def test_allocation_tie_breaks_lexicographically():
    assignment, obj = friction_aware_allocation(np.ones((2, 2)), np.zeros((2, 2, 2)), np.zeros((2, 2)))
    assert assignment == (0, 0) and obj == 2.0


def test_allocation_matches_enumeration():
    rng = np.random.default_rng(11)
    stakes, al, en = random_instance(rng, 3, 2)
    values = {a: naive_system_friction(a, stakes, al, en) for a in itertools.product(range(3), repeat=2)}
    best = min(values.values())
    assignment, obj = friction_aware_allocation(stakes, al, en)
    assert obj == pytest.approx(best, rel=1e-12)
    assert all(obj <= v + 1e-12 for v in values.values())


def test_allocation_size_limit():
    with pytest.raises(SizeError):
        friction_aware_allocation(np.ones((7, 1)), np.zeros((7, 7, 1)), np.zeros((7, 7)))


def test_allocation_pole():
    al = np.zeros((2, 2, 1))
    al[0, 1, 0] = -1.0
    with pytest.raises(DivergenceError):
        friction_aware_allocation([[1.0], [1.0]], al, np.zeros((2, 2)))


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(1, 3))
def test_allocation_objective_is_minimum(seed, n, m):
    rng = np.random.default_rng(seed)
    stakes, al, en = random_instance(rng, n, m)
    _, obj = friction_aware_allocation(stakes, al, en)
    for a in itertools.product(range(n), repeat=m):
        assert obj <= naive_system_friction(a, stakes, al, en) + 1e-12
