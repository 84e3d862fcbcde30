import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from septree import CapabilityError, ContractError, Dataset, Leaf, ParetoFront, State
from septree.solver import SolverConfig, solve
from septree.tasks import (
    AccuracyTask,
    CostSensitiveTask,
    CostSpec,
    F1Task,
    FairnessSpec,
    FairnessTask,
    GroupRateTask,
    PolicySpec,
    PolicyTask,
    UndefinedF1Error,
    combine_tasks,
    discrimination,
    f1_from_front,
    f1_score,
    misclassification_from_frequencies,
    policy_instance_values,
    standard_cost,
    threshold_wrap,
)

from corpus import corpus, random_dataset


def leaf_data(labels, n_features=1, **aux):
    labels = np.asarray(labels)
    return Dataset(np.zeros((len(labels), n_features), dtype=int), labels, None, aux)


# -- accuracy ------------------------------------------------------------------------


def test_accuracy_leaf_costs():
    ds = leaf_data([1, 1, 1, 0])
    costs = AccuracyTask(ds).leaf_costs(State.root(ds))
    assert costs[1, 0] == 1 and costs[0, 0] == 3


def test_accuracy_pure_leaf_is_zero():
    ds = leaf_data([1, 1])
    assert AccuracyTask(ds).leaf_costs(State.root(ds))[1, 0] == 0


# -- cost-sensitive --------------------------------------------------------------------


def test_cost_sensitive_leaf():
    ds = leaf_data([0, 0, 1])
    M = np.array([[0.0, 3.0], [1.0, 0.0]])
    task = CostSensitiveTask(ds, CostSpec(M, np.ones(1)))
    assert task.leaf_costs(State.root(ds))[1, 0] == 6.0


def test_cost_sensitive_branch_costs_with_discount():
    ds = Dataset(np.zeros((4, 3), dtype=int), np.zeros(4, dtype=int), 2)
    spec = CostSpec(np.zeros((2, 2)), np.array([2.0, 2.0, 2.0]), ((0, 1),), np.array([1.0, 1.0, 2.0]))
    task = CostSensitiveTask(ds, spec)
    root = State.root(ds)
    assert task.branch_cost(root, 1)[0] == 8.0
    after = State(root.indices, frozenset({(0, 0)}), 4)
    assert task.branch_cost(after, 1)[0] == 4.0
    # a feature outside every group keeps its base cost
    assert task.branch_cost(after, 2)[0] == 8.0
    # either polarity of a group member triggers the discount
    assert task.branch_cost(State(root.indices, frozenset({(0, 1)}), 4), 1)[0] == 4.0


def test_cost_spec_validation():
    with pytest.raises(ContractError):
        CostSpec(np.array([[1.0, 1.0], [1.0, 0.0]]), np.ones(2))
    with pytest.raises(ContractError):
        CostSpec(np.zeros((2, 2)), np.ones(2), (), np.array([2.0, 0.0]))


def test_standard_cost_arithmetic():
    ds = leaf_data([0, 0, 0, 1])  # frequencies 0.75 / 0.25, so min(1 - f) = 0.25
    M = np.array([[0.0, 40.0], [10.0, 0.0]])
    assert standard_cost(ds, CostSpec(M, np.array([10.0]))) == pytest.approx(20.0)


def test_standard_cost_single_class():
    ds = leaf_data([0, 0, 0])
    spec = CostSpec(np.zeros((1, 1)), np.array([10.0]))
    assert standard_cost(ds, spec) == pytest.approx(10.0)


def test_misclassification_recipe_low_cost():
    ds = leaf_data([0, 0, 0, 1])
    costs = np.array([3.0, 3.0])
    M = misclassification_from_frequencies(ds, costs, "low")
    c_def = 6.0 / 6
    assert M[0, 1] == pytest.approx(c_def / (0.75 * 2))
    assert M[1, 0] == pytest.approx(c_def / (0.25 * 2))
    assert M[0, 0] == 0 and M[1, 1] == 0
    assert misclassification_from_frequencies(ds, costs, "high")[1, 0] == pytest.approx(6.0 / 0.5)


# -- policy ------------------------------------------------------------------------------


def test_ipw_unit_propensity_counts_matches():
    ds = leaf_data([1, 1, 1, 0], y=np.ones(4), mu=np.ones(4), v_0=np.zeros(4), v_1=np.zeros(4))
    task = PolicyTask(ds, PolicySpec("IPW"))
    value = task.leaf_costs(State.root(ds))[1, 0]
    assert value == 3.0
    assert task.mean_value([value]) == 0.75


def test_policy_is_maximized():
    ds = leaf_data([0, 1], y=np.ones(2), mu=np.ones(2), v_0=np.array([5.0, 5.0]), v_1=np.zeros(2))
    front = solve(PolicyTask(ds, PolicySpec("DM")), config=SolverConfig(0))
    assert front.value_set() == {(10.0,)}
    assert front.trees == (Leaf(0),)


def test_policy_requires_positive_propensity():
    ds = leaf_data([0, 1], y=np.ones(2), mu=np.array([1.0, 0.0]), v_0=np.zeros(2), v_1=np.zeros(2))
    with pytest.raises(ContractError):
        PolicyTask(ds, PolicySpec("DR"))


def test_policy_missing_column():
    ds = leaf_data([0, 1], y=np.ones(2), mu=np.ones(2))
    with pytest.raises(ContractError, match="v_0"):
        PolicyTask(ds, PolicySpec("DM"))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_dr_identities_on_random_leaves(seed):
    rng = np.random.default_rng(seed)
    m, L = int(rng.integers(1, 30)), int(rng.integers(2, 4))
    k = rng.integers(0, L, m)
    v = rng.normal(size=(m, L))
    mu = rng.uniform(0.05, 1, m)
    leaf = rng.random(m) < 0.6
    base = {"mu": mu, **{f"v_{j}": v[:, j] for j in range(L)}}

    zero = Dataset(np.zeros((m, 1)), k, L, {**base, "y": rng.normal(size=m), **{f"v_{j}": np.zeros(m) for j in range(L)}})
    dr = policy_instance_values(zero, PolicySpec("DR"))[leaf].sum(axis=0)
    ipw = policy_instance_values(zero, PolicySpec("IPW"))[leaf].sum(axis=0)
    np.testing.assert_allclose(dr, ipw, rtol=1e-9, atol=1e-12)

    exact = Dataset(np.zeros((m, 1)), k, L, {**base, "y": v[np.arange(m), k]})
    dr = policy_instance_values(exact, PolicySpec("DR"))[leaf].sum(axis=0)
    dm = policy_instance_values(exact, PolicySpec("DM"))[leaf].sum(axis=0)
    np.testing.assert_allclose(dr, dm, rtol=1e-9, atol=1e-12)


# -- F1 ------------------------------------------------------------------------------------


def test_f1_formula():
    assert f1_score(1, 0, 3) == pytest.approx(3 / 3.5)
    assert f1_score(0, 0, 3) == 1.0
    with pytest.raises(UndefinedF1Error):
        f1_score(0, 0, 0)


def test_f1_from_front_prefers_fewer_nodes_on_ties():
    from septree import Branch

    # (1.5, 0) and (0, 1) both score 0.8 with three positives
    front = ParetoFront(np.array([[1.5, 0.0], [0.0, 1.0]]), (Branch(0, Leaf(0), Leaf(1)), Leaf(1)))
    score, tree = f1_from_front(front, 3)
    assert score == pytest.approx(0.8)
    assert tree == Leaf(1)


def test_f1_from_front_undefined_everywhere():
    front = ParetoFront(np.array([[0.0, 0.0]]), (Leaf(0),))
    with pytest.raises(UndefinedF1Error):
        f1_from_front(front, 0)


def test_f1_task_leaf_front():
    ds = leaf_data([1, 1, 1, 0])
    front = solve(F1Task(ds), config=SolverConfig(0))
    assert front.value_set() == {(1.0, 0.0), (0.0, 3.0)}


# -- fairness ----------------------------------------------------------------------------------


def test_group_rate_leaf_contribution():
    a = np.array([1] * 10 + [0] * 10, dtype=float)
    ds = leaf_data([0] * 19 + [1], a=a)
    task = GroupRateTask(ds, a.astype(int), 1, "demographic-parity", (10, 10))
    leaf = State(np.arange(5), frozenset(), 5)  # five members of group a
    assert task.leaf_costs(leaf)[1, 0] == pytest.approx(0.5)
    assert task.leaf_costs(leaf)[0, 0] == 0


def test_fairness_rejects_empty_group():
    ds = leaf_data([0, 1, 1], a=np.ones(3))
    with pytest.raises(ContractError, match="members"):
        FairnessTask(ds, FairnessSpec("a", 0.1))


def test_fairness_spec_validation():
    with pytest.raises(ContractError):
        FairnessSpec("a", 0.1, "parity")
    with pytest.raises(ContractError):
        FairnessSpec("a", -0.1)


def test_fairness_vacuous_delta_matches_unconstrained():
    rng = np.random.default_rng(3)
    X = rng.integers(0, 2, (40, 3))
    y = (X[:, 0] ^ (rng.random(40) < 0.2)).astype(int)
    a = X[:, 0].astype(float)
    a[0], a[1] = 1 - a[0], 1 - a[1]
    ds = Dataset(X, y, 2, {"a": a})
    fair = solve(FairnessTask(ds, FairnessSpec("a", 1.0)), config=SolverConfig(2))
    plain = solve(AccuracyTask(ds), config=SolverConfig(2))
    assert fair.values[:, 0].min() == plain.values[0, 0]


def test_discrimination_metric():
    pred = np.array([1, 1, 0, 0])
    groups = np.array([1, 1, 0, 0])
    assert discrimination(pred, groups, np.ones(4)) == 1.0
    assert discrimination(np.ones(4), groups, np.ones(4)) == 0.0


# -- thresholds and combination -------------------------------------------------------------------


def test_threshold_feasibility_is_inclusive():
    ds = leaf_data([0, 1])
    task = threshold_wrap(AccuracyTask(ds), 1.05)
    root = State.root(ds)
    assert list(task.feasible(np.array([[1.0], [1.05], [1.1]]), root)) == [True, True, False]


def test_threshold_rejects_non_worsening_combination():
    ds = leaf_data([0, 1], y=np.ones(2), mu=np.ones(2), v_0=np.ones(2), v_1=np.ones(2))
    with pytest.raises(CapabilityError):
        threshold_wrap(PolicyTask(ds, PolicySpec("DM")), 0.0)


def test_threshold_as_capacity():
    # every instance demands one unit; a supply of 2 admits no leaf holding three or more
    X = np.array([[0], [0], [0], [1], [1]])
    ds = Dataset(X, np.zeros(5, dtype=int), 1)
    demand = threshold_wrap(_Demand(ds), 2.0)
    task = combine_tasks([AccuracyTask(ds), demand])
    assert len(solve(task, config=SolverConfig(0))) == 0
    assert len(solve(task, config=SolverConfig(1))) == 0


class _Demand(AccuracyTask):
    """Each instance in a leaf uses one unit, whatever the label."""

    def _instance_costs(self):
        return np.ones((self.dataset.n_instances, self.label_count))

    def rebind(self, dataset):
        return _Demand(dataset)


def test_combined_comparator():
    ds = leaf_data([0, 1])
    task = combine_tasks([AccuracyTask(ds), AccuracyTask(ds)])
    assert task.compare((1, 2), (2, 2)) == "dominates"
    assert task.compare((1, 3), (2, 2)) == "incomparable-or-equal"


def test_combined_identical_components_collapse():
    ds = random_dataset(np.random.default_rng(1), binary=True)
    solo = solve(AccuracyTask(ds), config=SolverConfig(2))
    both = solve(combine_tasks([AccuracyTask(ds), AccuracyTask(ds)]), config=SolverConfig(2))
    (best,) = solo.value_set()
    assert both.value_set() == {best + best}


def test_combined_width_limit():
    ds = leaf_data([0, 1])
    with pytest.raises(ContractError, match="maximum"):
        combine_tasks([AccuracyTask(ds)] * 9)
    with pytest.raises(ContractError):
        combine_tasks([AccuracyTask(ds)])


# -- separability properties over every shipped task ------------------------------------------------


def sampled_values(task, rng, count):
    """Values achievable as leaf or branch contributions on random subsets."""
    ds = task.dataset
    out = []
    for _ in range(count):
        idx = np.flatnonzero(rng.random(ds.n_instances) < rng.random())
        st_ = State(idx, frozenset(), len(idx))
        costs = task.leaf_costs(st_)
        out.append(costs[rng.integers(len(costs))])
    return np.array(out)


@pytest.mark.parametrize("family", ["accuracy", "cost-sensitive", "policy", "f1", "fairness"])
def test_order_preservation(family):
    """A weakly better partial value stays weakly better after combining with any partner."""
    rng = np.random.default_rng(11)
    tasks = [task for _, fam, task in corpus(5, 10) if fam == family]
    for trial in range(1000):
        task = tasks[trial % len(tasks)]
        V = sampled_values(task, rng, 3)
        better, partner = V[0], V[2]
        # a dominated partial value: the better one worsened in random components
        worse = (better * task.sense + np.abs(rng.normal(size=task.arity)) * (rng.random(task.arity) < 0.7)) * task.sense
        a = task.combine(better, partner) * task.sense
        b = task.combine(worse, partner) * task.sense
        assert np.all(a <= b + task.eps)


@pytest.mark.parametrize("family", ["accuracy", "cost-sensitive", "policy", "f1", "fairness"])
def test_subtraction_inverts_combination(family):
    rng = np.random.default_rng(5)
    for _, fam, task in corpus(6, 4):
        if fam != family:
            continue
        V = sampled_values(task, rng, 50)
        for _ in range(100):
            v, u = V[rng.integers(50)], V[rng.integers(50)]
            np.testing.assert_allclose(task.subtract(task.combine(v, u), u), v, atol=1e-9)


def test_threshold_anti_monotonic():
    rng = np.random.default_rng(2)
    for _, fam, task in corpus(7, 10):
        if fam != "fairness":
            continue
        root = task.initial_state()
        V = sampled_values(task, rng, 60)
        bad = ~task.feasible(V, root)
        for i in np.flatnonzero(bad):
            for j in rng.integers(len(V), size=10):
                combined = task.combine(V[i], V[j])
                assert not task.feasible(combined[None, :], root)[0]


def test_threshold_worsening_property():
    rng = np.random.default_rng(4)
    for _, fam, task in corpus(8, 8):
        if fam != "fairness":
            continue
        for part in task.tasks[1:]:
            V = sampled_values(part, rng, 40)
            for _ in range(200):
                v, w = V[rng.integers(40)], V[rng.integers(40)]
                c = part.combine(v, w)
                assert np.all(v <= c + 1e-12) and np.all(w <= c + 1e-12)


def test_combined_projection_within_solo_closure():
    for _, fam, task in corpus(9, 6, max_rows=16, max_features=3):
        if fam != "f1":
            continue
        front = solve(task, config=SolverConfig(2))
        for i, part in enumerate(task.tasks):
            best = solve(part, config=SolverConfig(2)).values[0, 0]
            assert np.all(front.values[:, i] >= best)
