"""Shipped optimization tasks, threshold constraints and task combination."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .core import (
    MAX_TUPLE_WIDTH,
    CapabilityError,
    ContractError,
    Dataset,
    OptimizationTask,
    ParetoFront,
    State,
    Tree,
    predict,
)


class PerInstanceTask(OptimizationTask):
    """Task whose label cost is a sum of per-instance contributions."""

    per_instance_additive = True

    def __init__(self, dataset: Dataset):
        super().__init__(dataset)
        self._H = None

    def _instance_costs(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def instance_costs(self) -> np.ndarray:
        if self._H is None:
            H = np.asarray(self._instance_costs(), dtype=float)
            self._H = H.reshape(self.dataset.n_instances, self.label_count, self.arity)
        return self._H

    def leaf_costs(self, state: State) -> np.ndarray:
        if state.indices is None:
            raise ContractError("leaf costs need a state with instance indices")
        return self.instance_cost_rows(state.indices).sum(axis=0)


class AccuracyTask(PerInstanceTask):
    """Misclassification count, minimized."""

    integer_valued = True

    def _instance_costs(self):
        L = self.label_count
        return (self.dataset.labels[:, None] != np.arange(L)[None, :]).astype(float)

    def rebind(self, dataset):
        return AccuracyTask(dataset)


def accuracy_task(dataset: Dataset) -> AccuracyTask:
    return AccuracyTask(dataset)


# ---------------------------------------------------------------------------
# Cost-sensitive classification
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CostSpec:
    """Misclassification matrix, feature test costs and discount groups.

    ``misclassification[k, j]`` is the cost of predicting ``j`` for an
    instance of class ``k``.  A feature in a discount group costs
    ``discounted_costs[f]`` once any member of its group already appears on
    the branch path (in either polarity).
    """

    misclassification: np.ndarray
    feature_costs: np.ndarray
    groups: tuple = ()
    discounted_costs: Optional[np.ndarray] = None

    def __post_init__(self):
        M = np.asarray(self.misclassification, dtype=float)
        c = np.asarray(self.feature_costs, dtype=float).reshape(-1)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ContractError("misclassification matrix must be square")
        if np.any(M < 0) or np.any(np.diag(M) != 0):
            raise ContractError("misclassification costs must be non-negative with a zero diagonal")
        if np.any(c < 0):
            raise ContractError("feature costs must be non-negative")
        d = c.copy() if self.discounted_costs is None else np.asarray(self.discounted_costs, dtype=float).reshape(-1)
        if d.shape != c.shape:
            raise ContractError("discounted_costs must have one entry per feature")
        if np.any(d < 0) or np.any(d > c + 1e-12):
            raise ContractError("discounted costs must lie between 0 and the base cost")
        groups = tuple(tuple(int(f) for f in g) for g in self.groups)
        member = {}
        for gi, g in enumerate(groups):
            for f in g:
                if not 0 <= f < c.size:
                    raise ContractError(f"discount group references unknown feature {f}")
                if f in member:
                    raise ContractError(f"feature {f} appears in two discount groups")
                member[f] = gi
        object.__setattr__(self, "misclassification", M)
        object.__setattr__(self, "feature_costs", c)
        object.__setattr__(self, "discounted_costs", d)
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "_member", member)

    def test_cost(self, path_features, feature: int) -> float:
        g = self._member.get(int(feature))
        if g is not None and any(self._member.get(f) == g for f in path_features):
            return float(self.discounted_costs[feature])
        return float(self.feature_costs[feature])


class CostSensitiveTask(PerInstanceTask):
    """Misclassification costs in leaves plus per-instance test costs at branches.

    Test costs depend on the features already measured above a node, so the
    task is context dependent.
    """

    context_independent = False

    def __init__(self, dataset: Dataset, spec: CostSpec):
        if spec.misclassification.shape[0] != dataset.label_count:
            raise ContractError("misclassification matrix does not match the label count")
        if spec.feature_costs.size != dataset.n_features:
            raise ContractError("feature_costs does not match the number of features")
        super().__init__(dataset)
        self.spec = spec

    def _instance_costs(self):
        return self.spec.misclassification[self.dataset.labels]

    def branch_cost(self, state, feature):
        return np.array([state.size * self.spec.test_cost(state.path_features, feature)])

    def rebind(self, dataset):
        return CostSensitiveTask(dataset, self.spec)


def cost_sensitive_task(dataset: Dataset, spec: CostSpec) -> CostSensitiveTask:
    return CostSensitiveTask(dataset, spec)


def class_frequencies(dataset: Dataset) -> np.ndarray:
    n = max(dataset.n_instances, 1)
    return dataset.label_counts() / n


def standard_cost(dataset: Dataset, spec: CostSpec) -> float:
    """Total test cost plus the cheapest always-wrong share of the largest misclassification cost."""
    C = float(spec.feature_costs.sum())
    f = class_frequencies(dataset)
    return C + float(np.min(1.0 - f)) * float(spec.misclassification.max())


def normalized_cost(cost: float, dataset: Dataset, spec: CostSpec) -> float:
    std = standard_cost(dataset, spec)
    if std == 0:
        return 0.0 if cost == 0 else float("inf")
    return cost / std


COST_LEVELS = {"low": 1.0 / 6.0, "middle": 1.0 / 3.0, "high": 1.0}


def misclassification_from_frequencies(dataset: Dataset, feature_costs, level: str = "low") -> np.ndarray:
    """Asymmetric costs ``C_def / (f_k * |K|)`` per true class, ``C_def`` a fraction of the total test cost.

    Classes absent from ``dataset`` get ``C_def``.
    """
    try:
        share = COST_LEVELS[level]
    except KeyError:
        raise ContractError(f"level must be one of {sorted(COST_LEVELS)}") from None
    c_def = share * float(np.sum(feature_costs))
    L = dataset.label_count
    f = class_frequencies(dataset)
    per_class = np.where(f > 0, c_def / np.where(f > 0, f * L, 1.0), c_def)
    M = np.repeat(per_class[:, None], L, axis=1)
    np.fill_diagonal(M, 0.0)
    return M


# ---------------------------------------------------------------------------
# Prescriptive policies
# ---------------------------------------------------------------------------

POLICY_METHODS = ("DM", "IPW", "DR")


@dataclass(frozen=True)
class PolicySpec:
    """Which teacher estimate to optimize and where its columns live.

    The historic treatment is the dataset label.  Teacher outcome estimates
    for treatment ``k`` are read from the auxiliary column
    ``f"{teacher_prefix}{k}"``; ``propensity`` holds the estimated
    probability of the historic treatment.
    """

    method: str = "DR"
    outcome: str = "y"
    propensity: str = "mu"
    teacher_prefix: str = "v_"

    def __post_init__(self):
        if self.method.upper() not in POLICY_METHODS:
            raise ContractError(f"policy method must be one of {POLICY_METHODS}")
        object.__setattr__(self, "method", self.method.upper())


def policy_instance_values(dataset: Dataset, spec: PolicySpec) -> np.ndarray:
    """Per-instance reward of assigning each treatment, shape (n, n_treatments)."""
    n, L = dataset.n_instances, dataset.label_count
    k = dataset.labels
    match = (k[:, None] == np.arange(L)[None, :]).astype(float)
    if spec.method in ("DM", "DR"):
        v = np.column_stack([dataset.column(f"{spec.teacher_prefix}{j}") for j in range(L)]) if L else np.empty((n, 0))
    if spec.method in ("IPW", "DR"):
        y = dataset.column(spec.outcome)
        mu = dataset.column(spec.propensity)
        if np.any(mu <= 0):
            raise ContractError("propensity scores must be strictly positive")
    if spec.method == "DM":
        return v
    if spec.method == "IPW":
        return match * (y / mu)[:, None]
    observed = v[np.arange(n), k]
    return v + match * ((y - observed) / mu)[:, None]


class PolicyTask(PerInstanceTask):
    """Sum of teacher rewards of the prescribed treatments, maximized.

    The value is kept as a sum so that addition combines subtrees exactly;
    divide by the dataset size to report the mean policy value.
    """

    def __init__(self, dataset: Dataset, spec: PolicySpec):
        super().__init__(dataset)
        self.spec = spec
        self.sense = -np.ones(1)
        self._values = policy_instance_values(dataset, spec)

    def _instance_costs(self):
        return self._values

    def rebind(self, dataset):
        return PolicyTask(dataset, self.spec)

    def mean_value(self, value) -> float:
        return float(np.asarray(value).reshape(-1)[0]) / max(self.dataset.n_instances, 1)


def policy_task(dataset: Dataset, spec: PolicySpec) -> PolicyTask:
    return PolicyTask(dataset, spec)


def policy_value(tree: Tree, dataset: Dataset, spec: PolicySpec) -> float:
    """Mean estimated reward of the treatments ``tree`` prescribes."""
    values = policy_instance_values(dataset, spec)
    chosen = predict(tree, dataset.features)
    if dataset.n_instances == 0:
        return 0.0
    return float(values[np.arange(dataset.n_instances), chosen].mean())


# ---------------------------------------------------------------------------
# Per-class misclassification and F1
# ---------------------------------------------------------------------------


class PerClassTask(PerInstanceTask):
    """Misclassifications counted only in leaves that predict ``target``.

    With ``target=1`` this counts false positives, with ``target=0`` false
    negatives.
    """

    integer_valued = True

    def __init__(self, dataset: Dataset, target: int):
        if dataset.label_count != 2:
            raise ContractError("per-class misclassification needs binary labels")
        if target not in (0, 1):
            raise ContractError("target must be 0 or 1")
        super().__init__(dataset)
        self.target = target

    def _instance_costs(self):
        H = np.zeros((self.dataset.n_instances, 2))
        H[:, self.target] = self.dataset.labels != self.target
        return H

    def rebind(self, dataset):
        return PerClassTask(dataset, self.target)


def per_class_task(dataset: Dataset, target: int) -> PerClassTask:
    return PerClassTask(dataset, target)


# ---------------------------------------------------------------------------
# Threshold constraints and combination
# ---------------------------------------------------------------------------


def _check_worsening(task: OptimizationTask, rng: np.random.Generator, samples: int = 200) -> None:
    """Randomized check that combining never improves on either operand."""
    ds = task.dataset
    n = ds.n_instances
    root = State.root(ds)
    vals = []
    for _ in range(samples):
        idx = np.flatnonzero(rng.random(n) < rng.random()) if n else np.empty(0, dtype=np.int64)
        st = State(idx, frozenset(), int(idx.size))
        costs = task.leaf_costs(st)
        vals.append(costs[rng.integers(costs.shape[0])])
        if ds.n_features:
            vals.append(task.branch_cost(st, int(rng.integers(ds.n_features))))
    vals.append(task.zero)
    V = np.array(vals)
    i = rng.integers(len(V), size=samples)
    j = rng.integers(len(V), size=samples)
    combined = task.combine(V[i], V[j])
    tol = task.eps + 1e-12
    for a, c in ((V[i], combined), (V[j], combined)):
        if np.any(a * task.sense > c * task.sense + tol):
            raise CapabilityError("combining operator is not worsening; a threshold constraint would not be anti-monotonic")
    del root


class ThresholdTask(OptimizationTask):
    """Wraps a task so that only values at least as good as ``beta`` are feasible.

    The boundary is inclusive.  Construction fails when the inner combining
    operator is not worsening.
    """

    has_constraint = True

    def __init__(self, inner: OptimizationTask, beta, check: bool = True, seed: int = 0):
        super().__init__(inner.dataset)
        self.inner = inner
        self.arity = inner.arity
        self.sense = inner.sense
        self.integer_valued = inner.integer_valued
        self.context_independent = inner.context_independent
        self.per_instance_additive = inner.per_instance_additive
        self.has_subtraction = inner.has_subtraction
        self.additive = inner.additive
        self.nonnegative_branches = inner.nonnegative_branches
        self.beta = np.broadcast_to(np.asarray(beta, dtype=float), (self.arity,)).copy()
        if check:
            _check_worsening(inner, np.random.default_rng(seed))

    @property
    def instance_costs(self):
        return self.inner.instance_costs

    def instance_cost_rows(self, indices):
        self.rows_accessed += len(indices)
        return self.inner.instance_cost_rows(indices)

    def leaf_costs(self, state):
        return self.inner.leaf_costs(state)

    def branch_cost(self, state, feature):
        return self.inner.branch_cost(state, feature)

    def combine(self, v, w):
        return self.inner.combine(v, w)

    def subtract(self, v, w):
        return self.inner.subtract(v, w)

    def feasible(self, values, state):
        V = np.asarray(values, dtype=float).reshape(-1, self.arity)
        ok = np.all(V * self.sense <= self.beta * self.sense + self.eps, axis=1)
        return ok & self.inner.feasible(V, state)

    def rebind(self, dataset):
        return ThresholdTask(self.inner.rebind(dataset), self.beta, check=False)


def threshold_wrap(inner: OptimizationTask, beta) -> ThresholdTask:
    return ThresholdTask(inner, beta)


class CombinedTask(OptimizationTask):
    """Tuple of tasks solved jointly under the product order.

    Costs, combination and subtraction act component-wise; a value is
    feasible only when every part is.  All parts share one dataset, so the
    tuple of states collapses to a single state.
    """

    def __init__(self, tasks: Sequence[OptimizationTask]):
        tasks = list(tasks)
        if len(tasks) < 2:
            raise ContractError("combining needs at least two tasks")
        width = sum(t.arity for t in tasks)
        if width > MAX_TUPLE_WIDTH:
            raise ContractError(f"combined value would have {width} components; the maximum is {MAX_TUPLE_WIDTH}")
        ds = tasks[0].dataset
        for t in tasks[1:]:
            if t.dataset.n_instances != ds.n_instances or t.dataset.label_count != ds.label_count:
                raise ContractError("combined tasks must share one dataset")
        super().__init__(ds)
        self.tasks = tasks
        self.arity = width
        self.sense = np.concatenate([t.sense for t in tasks])
        bounds = np.cumsum([0] + [t.arity for t in tasks])
        self.slices = [slice(bounds[i], bounds[i + 1]) for i in range(len(tasks))]
        self.integer_valued = all(t.integer_valued for t in tasks)
        self.context_independent = all(t.context_independent for t in tasks)
        self.per_instance_additive = all(t.per_instance_additive for t in tasks)
        self.has_constraint = any(t.has_constraint for t in tasks)
        self.has_subtraction = all(t.has_subtraction for t in tasks)
        self.additive = all(t.additive for t in tasks)
        self.nonnegative_branches = all(t.nonnegative_branches for t in tasks)
        self._H = None

    @property
    def instance_costs(self):
        if not self.per_instance_additive:
            return None
        if self._H is None:
            self._H = np.concatenate([t.instance_costs for t in self.tasks], axis=2)
        return self._H

    def leaf_costs(self, state):
        if self.per_instance_additive and state.indices is not None:
            return self.instance_cost_rows(state.indices).sum(axis=0)
        return np.concatenate([t.leaf_costs(state) for t in self.tasks], axis=1)

    def branch_cost(self, state, feature):
        return np.concatenate([t.branch_cost(state, feature) for t in self.tasks])

    def _componentwise(self, op, v, w):
        if self.additive:
            return np.add(v, w) if op == "combine" else np.subtract(v, w)
        v, w = np.broadcast_arrays(np.asarray(v, dtype=float), np.asarray(w, dtype=float))
        out = np.empty_like(v)
        for t, sl in zip(self.tasks, self.slices):
            out[..., sl] = getattr(t, op)(v[..., sl], w[..., sl])
        return out

    def combine(self, v, w):
        return self._componentwise("combine", v, w)

    def subtract(self, v, w):
        if not self.has_subtraction:
            raise CapabilityError("a combined part has no subtraction operator")
        return self._componentwise("subtract", v, w)

    def feasible(self, values, state):
        V = np.asarray(values, dtype=float).reshape(-1, self.arity)
        ok = np.ones(V.shape[0], dtype=bool)
        for t, sl in zip(self.tasks, self.slices):
            if t.has_constraint:
                ok &= t.feasible(V[:, sl], state)
        return ok

    def rebind(self, dataset):
        return CombinedTask([t.rebind(dataset) for t in self.tasks])


def combine_tasks(tasks: Sequence[OptimizationTask]) -> CombinedTask:
    return CombinedTask(tasks)


# ---------------------------------------------------------------------------
# F1 from the (false positive, false negative) front
# ---------------------------------------------------------------------------


class UndefinedF1Error(ValueError):
    pass


def f1_score(fp: float, fn: float, positives: int) -> float:
    tp = positives - fn
    denom = tp + 0.5 * (fp + fn)
    if denom == 0:
        raise UndefinedF1Error("F1 is undefined without positives or predictions")
    return tp / denom


def best_f1_index(front: ParetoFront, positives: int) -> int:
    """Front entry with the highest F1; ties go to the tree with fewer nodes."""
    if len(front) == 0:
        raise ContractError("front is empty")
    best, best_key = None, None
    for i, ((fp, fn), tree) in enumerate(front):
        try:
            score = f1_score(fp, fn, positives)
        except UndefinedF1Error:
            continue
        key = (-score, tree.nodes, i)
        if best_key is None or key < best_key:
            best, best_key = i, key
    if best is None:
        raise UndefinedF1Error("F1 is undefined for every front entry")
    return best


def f1_from_front(front: ParetoFront, positives: int) -> tuple:
    """``(best F1, tree)`` over a front of (false positives, false negatives)."""
    i = best_f1_index(front, positives)
    fp, fn = front.values[i]
    return f1_score(fp, fn, positives), front.trees[i]


class F1Task(CombinedTask):
    """(false positives, false negatives) front; the selected entry maximizes F1."""

    def __init__(self, dataset: Dataset):
        super().__init__([PerClassTask(dataset, 1), PerClassTask(dataset, 0)])

    @property
    def positives(self) -> int:
        return int(np.sum(self.dataset.labels == 1))

    def select(self, front):
        return best_f1_index(front, self.positives)

    def scalar_score(self, value):
        fp, fn = np.asarray(value, dtype=float).reshape(-1)
        try:
            return -f1_score(fp, fn, self.positives)
        except UndefinedF1Error:
            return 0.0

    def rebind(self, dataset):
        return F1Task(dataset)


def f1_task(dataset: Dataset) -> F1Task:
    return F1Task(dataset)


# ---------------------------------------------------------------------------
# Group fairness
# ---------------------------------------------------------------------------

FAIRNESS_MODES = ("demographic-parity", "equality-of-opportunity")


@dataclass(frozen=True)
class FairnessSpec:
    """Sensitive attribute, tolerated discrimination and the fairness notion.

    ``sensitive`` names an auxiliary column or gives a feature index; its
    value 1 marks group ``a``.
    """

    sensitive: Union[str, int] = "a"
    delta: float = 0.01
    mode: str = "demographic-parity"

    def __post_init__(self):
        if self.mode not in FAIRNESS_MODES:
            raise ContractError(f"mode must be one of {FAIRNESS_MODES}")
        if not 0 <= self.delta:
            raise ContractError("delta must be non-negative")


def sensitive_groups(dataset: Dataset, sensitive) -> np.ndarray:
    if isinstance(sensitive, (int, np.integer)):
        if not 0 <= sensitive < dataset.n_features:
            raise ContractError(f"sensitive feature {sensitive} out of range")
        col = dataset.features[:, sensitive]
    else:
        col = dataset.column(sensitive)
    if not np.all((col == 0) | (col == 1)):
        raise ContractError("sensitive attribute must be binary")
    return col.astype(np.int64)


def group_totals(groups: np.ndarray, labels: np.ndarray, mode: str) -> tuple:
    """``(N(a), N(not a))``, restricted to positive labels for equality of opportunity."""
    relevant = np.ones_like(groups, dtype=bool) if mode == "demographic-parity" else labels == 1
    return int(np.sum(relevant & (groups == 1))), int(np.sum(relevant & (groups == 0)))


class GroupRateTask(PerInstanceTask):
    """One of the two fairness sums bounded by ``1 + delta``.

    For ``favoured=1`` a leaf predicting 1 adds the share of group ``a`` it
    holds and a leaf predicting 0 adds the share of the other group; over a
    whole tree this is ``P(yhat=1 | a) + P(yhat=0 | not a)``.  ``favoured=0``
    swaps the groups.  Group totals are fixed when the task is built.
    """

    def __init__(self, dataset: Dataset, groups: np.ndarray, favoured: int, mode: str, totals: tuple):
        if dataset.label_count != 2:
            raise ContractError("group fairness needs binary labels")
        if min(totals) <= 0:
            raise ContractError(f"both sensitive groups need members (totals {totals})")
        super().__init__(dataset)
        self.groups = np.asarray(groups, dtype=np.int64)
        self.favoured = favoured
        self.mode = mode
        self.totals = totals

    def _instance_costs(self):
        n_a, n_b = self.totals
        a = self.groups == 1
        relevant = np.ones(self.dataset.n_instances, dtype=bool)
        if self.mode == "equality-of-opportunity":
            relevant = self.dataset.labels == 1
        H = np.zeros((self.dataset.n_instances, 2))
        hi, lo = (1, 0) if self.favoured == 1 else (0, 1)
        H[relevant & a, hi] = 1.0 / n_a
        H[relevant & ~a, lo] = 1.0 / n_b
        return H

    def rebind(self, dataset):
        raise CapabilityError("rebind the enclosing fairness task instead")


class FairnessTask(CombinedTask):
    """Misclassifications with both group-rate sums capped at ``1 + delta``."""

    def __init__(self, dataset: Dataset, spec: FairnessSpec):
        groups = sensitive_groups(dataset, spec.sensitive)
        totals = group_totals(groups, dataset.labels, spec.mode)
        parts = [
            ThresholdTask(GroupRateTask(dataset, groups, side, spec.mode, totals), 1.0 + spec.delta)
            for side in (1, 0)
        ]
        super().__init__([AccuracyTask(dataset)] + parts)
        self.spec = spec
        self.groups = groups

    def select(self, front):
        if len(front) == 0:
            raise ContractError("front is empty")
        order = sorted(range(len(front)), key=lambda i: (front.values[i, 0], front.trees[i].nodes, i))
        return order[0]

    def scalar_score(self, value):
        return float(np.asarray(value).reshape(-1)[0])

    def rebind(self, dataset):
        return FairnessTask(dataset, self.spec)

    def discrimination(self, tree: Tree) -> float:
        return discrimination(predict(tree, self.dataset.features), self.groups, self.dataset.labels, self.spec.mode)


def fairness_task(dataset: Dataset, spec: FairnessSpec) -> FairnessTask:
    return FairnessTask(dataset, spec)


def discrimination(predictions, groups, labels, mode: str = "demographic-parity") -> float:
    """Absolute gap in positive-prediction rate (or true-positive rate) between groups."""
    p = np.asarray(predictions)
    g = np.asarray(groups)
    rel = np.ones_like(g, dtype=bool) if mode == "demographic-parity" else np.asarray(labels) == 1
    rates = []
    for side in (1, 0):
        members = rel & (g == side)
        rates.append(float(np.mean(p[members] == 1)) if members.any() else 0.0)
    return abs(rates[0] - rates[1])
