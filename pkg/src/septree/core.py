"""Domain types, the Pareto-front algebra and the reference tree-cost evaluator.

Solution values are stored in their natural units (a policy value is
maximized, a misclassification count minimized).  Every comparison goes
through the task's ``sense`` vector, which maps values to a space where each
component is minimized; ``+1`` keeps a component, ``-1`` negates it.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Optional, Sequence, Union

import numpy as np

FLOAT_EPS = 1e-9
MAX_TUPLE_WIDTH = 8


class ContractError(ValueError):
    """An input violates an operation's precondition."""


class CapabilityError(RuntimeError):
    """A task lacks a property an operation depends on."""


# ---------------------------------------------------------------------------
# Dataset and state
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Dataset:
    """Binary feature matrix, integer labels and optional auxiliary columns.

    Parameters
    ----------
    features : array of shape (n_instances, n_features)
        Only 0 and 1 are accepted.
    labels : array of shape (n_instances,)
        Integers in ``[0, label_count)``.
    label_count : int, optional
        Defaults to ``max(labels) + 1`` (at least 1).
    aux : mapping of str to array of shape (n_instances,)
        Per-instance numbers such as outcomes, propensities, teacher scores
        or a sensitive-group bit.
    feature_names : sequence of str, optional
    """

    features: np.ndarray
    labels: np.ndarray
    label_count: Optional[int] = None
    aux: Mapping[str, np.ndarray] = field(default_factory=dict)
    feature_names: Optional[tuple] = None

    def __post_init__(self):
        X = np.asarray(self.features)
        if X.ndim == 1 and X.size == 0:
            X = X.reshape(0, 0)
        if X.ndim != 2:
            raise ContractError("features must be a 2-d array")
        if X.size and not np.all((X == 0) | (X == 1)):
            bad = np.argwhere((X != 0) & (X != 1))[0]
            raise ContractError(
                f"feature value {X[tuple(bad)]!r} at row {bad[0]}, column {bad[1]} is not binary"
            )
        X = np.ascontiguousarray(X, dtype=np.uint8)
        y = np.asarray(self.labels)
        if y.shape != (X.shape[0],):
            raise ContractError("labels must have one entry per instance")
        if y.size and not np.all(np.equal(np.mod(y, 1), 0)):
            raise ContractError("labels must be integers")
        y = y.astype(np.int64)
        count = self.label_count
        if count is None:
            count = int(y.max()) + 1 if y.size else 1
        if y.size and (y.min() < 0 or y.max() >= count):
            raise ContractError(f"labels must lie in [0, {count})")
        aux = {}
        for name, col in dict(self.aux).items():
            col = np.asarray(col, dtype=float)
            if col.shape[0] != X.shape[0]:
                raise ContractError(f"aux column {name!r} has the wrong length")
            if not np.all(np.isfinite(col)):
                raise ContractError(f"aux column {name!r} contains missing or non-finite values")
            aux[name] = col
        names = self.feature_names
        if names is not None:
            names = tuple(str(n) for n in names)
            if len(names) != X.shape[1]:
                raise ContractError("feature_names must match the number of feature columns")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "label_count", int(count))
        object.__setattr__(self, "aux", aux)
        object.__setattr__(self, "feature_names", names)

    @property
    def n_instances(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.n_instances

    def column(self, name: str) -> np.ndarray:
        try:
            return self.aux[name]
        except KeyError:
            raise ContractError(f"dataset has no auxiliary column {name!r}") from None

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.features[idx],
            self.labels[idx],
            self.label_count,
            {k: v[idx] for k, v in self.aux.items()},
            self.feature_names,
        )

    def label_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.label_count)


Literal = tuple  # (feature, side); side 1 means the instance satisfies the feature


@dataclass(frozen=True, eq=False)
class State:
    """A view of the root dataset plus the branching literals above a node.

    ``indices`` is a sorted index array into the root dataset; the depth-two
    solver builds states with ``indices=None`` that carry only the size.
    """

    indices: Optional[np.ndarray]
    path: frozenset
    size: int

    @classmethod
    def root(cls, dataset: Dataset) -> "State":
        return cls(np.arange(dataset.n_instances), frozenset(), dataset.n_instances)

    @property
    def path_features(self) -> frozenset:
        return frozenset(f for f, _ in self.path)

    def key(self) -> tuple:
        return tuple(sorted(self.path))


def transition(dataset: Dataset, state: State, feature: int, side: int) -> State:
    """Child state after branching on ``feature``; side 1 keeps instances with the feature set."""
    idx = state.indices
    keep = idx[dataset.features[idx, feature] == side]
    return State(keep, state.path | {(int(feature), int(side))}, int(keep.size))


# ---------------------------------------------------------------------------
# Trees
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Leaf:
    label: int

    @property
    def nodes(self) -> int:
        return 0

    @property
    def depth(self) -> int:
        return 0

    @property
    def key(self) -> str:
        return '{"label": %d}' % self.label

    def to_dict(self) -> dict:
        return {"label": int(self.label)}


@dataclass(frozen=True)
class Branch:
    """Branching node; instances with the feature set go right."""

    feature: int
    left: "Tree"
    right: "Tree"
    nodes: int = field(init=False, compare=False, repr=False)
    depth: int = field(init=False, compare=False, repr=False)
    key: str = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", 1 + self.left.nodes + self.right.nodes)
        object.__setattr__(self, "depth", 1 + max(self.left.depth, self.right.depth))
        object.__setattr__(
            self,
            "key",
            '{"feature": %d, "left": %s, "right": %s}' % (self.feature, self.left.key, self.right.key),
        )

    def to_dict(self) -> dict:
        return {"feature": int(self.feature), "left": self.left.to_dict(), "right": self.right.to_dict()}


Tree = Union[Leaf, Branch]


def tree_from_dict(obj: Mapping) -> Tree:
    if "label" in obj:
        return Leaf(int(obj["label"]))
    try:
        return Branch(int(obj["feature"]), tree_from_dict(obj["left"]), tree_from_dict(obj["right"]))
    except KeyError as exc:
        raise ContractError(f"malformed tree node, missing {exc}") from None


def tree_to_json(tree: Tree) -> str:
    return json.dumps(tree.to_dict())


def tree_from_json(text: str) -> Tree:
    return tree_from_dict(json.loads(text))


def tree_features(tree: Tree) -> set:
    if isinstance(tree, Leaf):
        return set()
    return {tree.feature} | tree_features(tree.left) | tree_features(tree.right)


def predict(tree: Tree, features: np.ndarray) -> np.ndarray:
    """Label assigned by ``tree`` to every row of a binary feature matrix."""
    X = np.asarray(features)
    out = np.empty(X.shape[0], dtype=np.int64)

    def walk(node, idx):
        if isinstance(node, Leaf):
            out[idx] = node.label
            return
        if node.feature >= X.shape[1]:
            raise ContractError(f"tree uses feature {node.feature} but data has {X.shape[1]} features")
        on = X[idx, node.feature] == 1
        walk(node.left, idx[~on])
        walk(node.right, idx[on])

    walk(tree, np.arange(X.shape[0]))
    return out


def render_tree(tree: Tree, feature_names: Optional[Sequence[str]] = None, indent: str = "") -> str:
    """Plain-text rendering, one node per line."""
    if isinstance(tree, Leaf):
        return f"{indent}-> label {tree.label}\n"
    name = feature_names[tree.feature] if feature_names else f"x[{tree.feature}]"
    text = f"{indent}if {name} == 0:\n" + render_tree(tree.left, feature_names, indent + "    ")
    text += f"{indent}else:  # {name} == 1\n" + render_tree(tree.right, feature_names, indent + "    ")
    return text


# ---------------------------------------------------------------------------
# Task interface
# ---------------------------------------------------------------------------


class OptimizationTask:
    """Base class for a separable optimization task bound to a dataset.

    Subclasses provide the cost function through :meth:`leaf_costs` and
    :meth:`branch_cost`.  The comparison operator is the product order over
    components, each minimized (``sense`` +1) or maximized (``sense`` -1).
    The default combining operator is element-wise addition and the default
    constraint accepts everything.
    """

    arity = 1
    integer_valued = False
    context_independent = True
    per_instance_additive = False
    has_constraint = False
    has_subtraction = True
    additive = True
    #: branching costs are weakly worse than the zero value
    nonnegative_branches = True

    def __init__(self, dataset: Dataset):
        self.dataset = dataset
        self.sense = np.ones(self.arity)
        self.rows_accessed = 0

    # -- binding -----------------------------------------------------------
    def rebind(self, dataset: Dataset) -> "OptimizationTask":
        """The same task definition evaluated on another dataset."""
        raise NotImplementedError

    @property
    def eps(self) -> float:
        return 0.0 if self.integer_valued else FLOAT_EPS

    @property
    def label_count(self) -> int:
        return self.dataset.label_count

    @property
    def zero(self) -> np.ndarray:
        return np.zeros(self.arity)

    # -- the six components --------------------------------------------------
    def leaf_costs(self, state: State) -> np.ndarray:
        """Costs of every label at ``state``, shape (label_count, arity)."""
        raise NotImplementedError

    def branch_cost(self, state: State, feature: int) -> np.ndarray:
        return np.zeros(self.arity)

    def transition(self, state: State, feature: int, side: int) -> State:
        return transition(self.dataset, state, feature, side)

    def combine(self, v, w):
        return np.add(v, w)

    def subtract(self, v, w):
        if not self.has_subtraction:
            raise CapabilityError(f"{type(self).__name__} has no subtraction operator")
        return np.subtract(v, w)

    def feasible(self, values: np.ndarray, state: State) -> np.ndarray:
        """Boolean mask over the rows of ``values``."""
        return np.ones(np.asarray(values).reshape(-1, self.arity).shape[0], dtype=bool)

    def initial_state(self) -> State:
        return State.root(self.dataset)

    # -- comparison ----------------------------------------------------------
    def dominates(self, v, w) -> bool:
        """Strict Pareto dominance of ``v`` over ``w``."""
        a = np.asarray(v, dtype=float) * self.sense
        b = np.asarray(w, dtype=float) * self.sense
        return bool(np.all(a <= b + self.eps) and np.any(a < b - self.eps))

    def compare(self, v, w) -> str:
        if self.dominates(v, w):
            return "dominates"
        if self.dominates(w, v):
            return "dominated"
        return "incomparable-or-equal"

    def reverse_dominates(self, v, w) -> bool:
        return self.dominates(w, v)

    # -- per-instance structure ---------------------------------------------
    @property
    def instance_costs(self) -> Optional[np.ndarray]:
        """Per-instance label costs, shape (n_instances, label_count, arity), if additive per instance."""
        return None

    def instance_cost_rows(self, indices: np.ndarray) -> np.ndarray:
        H = self.instance_costs
        if H is None:
            raise CapabilityError(f"{type(self).__name__} is not per-instance additive")
        self.rows_accessed += len(indices)
        return H[indices]

    def worst_case_contribution(self) -> np.ndarray:
        """Per label, the component-wise worst contribution of one instance (minimization space)."""
        return self._label_extreme(np.max, -np.inf)

    def best_case_contribution(self) -> np.ndarray:
        """Per label, the component-wise best contribution of one instance (minimization space)."""
        return self._label_extreme(np.min, np.inf)

    def _label_extreme(self, reducer, empty):
        H = self.instance_costs
        if H is None:
            raise CapabilityError(f"{type(self).__name__} is not per-instance additive")
        cache = self.__dict__.setdefault("_extremes", {})
        if reducer.__name__ not in cache:
            W = H * self.sense  # (n, L, A)
            per_instance = reducer(W, axis=1)  # (n, A)
            out = np.full((self.label_count, self.arity), 0.0)
            for k in range(self.label_count):
                rows = per_instance[self.dataset.labels == k]
                out[k] = reducer(rows, axis=0) if len(rows) else 0.0
            cache[reducer.__name__] = out
        return cache[reducer.__name__]

    def optimistic_value(self, state: State) -> Optional[np.ndarray]:
        """A point (minimization space) weakly better than every tree's value at ``state``."""
        H = self.instance_costs
        if H is None or not self.nonnegative_branches:
            return None
        if state.indices is None:
            return None
        W = self.instance_cost_rows(state.indices) * self.sense
        if len(W) == 0:
            return np.zeros(self.arity)
        return W.min(axis=1).sum(axis=0)

    # -- reporting hooks -----------------------------------------------------
    def select(self, front: "ParetoFront") -> int:
        """Index of the entry a user would pick from ``front``."""
        if len(front) == 0:
            raise ContractError("cannot select from an empty front")
        if self.arity == 1:
            return 0
        raise CapabilityError(f"{type(self).__name__} needs an explicit selection rule")

    def scalar_score(self, value) -> float:
        """Lower is better; used for hypertuning."""
        if self.arity != 1:
            raise CapabilityError(f"{type(self).__name__} has no scalar score")
        return float(np.asarray(value).reshape(-1)[0] * self.sense[0])


# ---------------------------------------------------------------------------
# Pareto fronts
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ParetoFront:
    """Mutually nondominated ``(value, tree)`` pairs, sorted by value.

    ``optimal`` is False when a solve stopped on its time limit and the
    entries are only the best found so far.
    """

    values: np.ndarray
    trees: tuple
    optimal: bool = True

    def __post_init__(self):
        V = np.asarray(self.values, dtype=float)
        if V.ndim == 1:
            V = V.reshape(len(self.trees), -1) if len(self.trees) else V.reshape(0, max(V.size, 1))
        object.__setattr__(self, "values", V)
        object.__setattr__(self, "trees", tuple(self.trees))
        if V.shape[0] != len(self.trees):
            raise ContractError("front needs one tree per value")

    @classmethod
    def empty(cls, arity: int, optimal: bool = True) -> "ParetoFront":
        return cls(np.empty((0, arity)), (), optimal)

    @property
    def arity(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return len(self.trees)

    def __iter__(self) -> Iterator:
        for v, t in zip(self.values, self.trees):
            yield tuple(float(x) for x in v), t

    def value_set(self, decimals: Optional[int] = None) -> set:
        V = self.values if decimals is None else np.round(self.values, decimals) + 0.0
        return {tuple(float(x) for x in row) for row in V}

    @property
    def nodes(self) -> np.ndarray:
        return np.array([t.nodes for t in self.trees], dtype=np.int64)


def _check_arity(values, task) -> np.ndarray:
    V = np.asarray(values, dtype=float)
    if V.ndim == 1:
        V = V.reshape(-1, 1) if task.arity == 1 else V.reshape(1, -1)
    if V.ndim != 2 or (V.size and V.shape[1] != task.arity):
        raise ContractError(f"values have arity {V.shape[-1]}, task expects {task.arity}")
    if V.size == 0:
        V = V.reshape(0, task.arity)
    return V


def _tie_winner(candidates, nodes, key_of) -> int:
    """Among equal-valued candidates, fewest nodes then smallest serialized tree."""
    candidates = list(candidates)
    if len(candidates) == 1:
        return candidates[0]
    fewest = min(nodes[c] for c in candidates)
    pool = [c for c in candidates if nodes[c] == fewest]
    if len(pool) == 1 or key_of is None:
        return pool[0]
    return min(pool, key=lambda c: (key_of(c), c))


def pareto_indices(
    W: np.ndarray,
    eps: float = 0.0,
    nodes: Optional[np.ndarray] = None,
    key_of: Optional[Callable[[int], str]] = None,
) -> np.ndarray:
    """Indices of the nondominated rows of ``W`` (every column minimized).

    Rows equal within ``eps`` collapse to a single representative chosen by
    :func:`_tie_winner`.  The result is ordered lexicographically by value.
    """
    m, a = W.shape
    if m <= 1:
        return np.arange(m, dtype=np.int64)
    if nodes is None:
        nodes = np.zeros(m, dtype=np.int64)
    if a == 1:
        col = W[:, 0]
        ties = np.flatnonzero(col <= col.min() + eps)
        return np.array([_tie_winner(ties, nodes, key_of)], dtype=np.int64)

    order = np.lexsort([nodes] + [W[:, j] for j in range(a - 1, -1, -1)])
    if m <= 64:
        return _pareto_small(W, order, eps, nodes, key_of)

    if a == 2 and eps == 0.0:
        Ws = W[order]
        prefix = np.minimum.accumulate(Ws[:, 1])
        before = np.concatenate(([np.inf], prefix[:-1]))
        keep_pos = np.flatnonzero(Ws[:, 1] < before)
        same = np.concatenate(
            (np.all(Ws[1:] == Ws[:-1], axis=1) & (nodes[order][1:] == nodes[order][:-1]), [False])
        )
        out = []
        for p in keep_pos:
            if same[p] and key_of is not None:
                q = p
                while same[q]:
                    q += 1
                out.append(_tie_winner(order[p : q + 1], nodes, key_of))
            else:
                out.append(order[p])
        return np.array(out, dtype=np.int64)

    return _pareto_blocked(W, order, eps, nodes, key_of)


def _strictly_below(A: np.ndarray, B: np.ndarray, eps: float) -> np.ndarray:
    """``out[i, j]``: row ``A[i]`` strictly dominates row ``B[j]``."""
    le = np.all(A[:, None, :] <= B[None, :, :] + eps, axis=2)
    lt = np.any(A[:, None, :] < B[None, :, :] - eps, axis=2)
    return le & lt


def _covered_three(K: np.ndarray, WC: np.ndarray, eps: float) -> np.ndarray:
    """Rows of ``WC`` strictly dominated by a row of ``K``, for three columns.

    Every row of ``K`` precedes every row of ``WC`` lexicographically, so the
    first column never rules a row of ``K`` out and a staircase query on the
    other two columns finds a covering row.
    """
    by1 = np.argsort(K[:, 1], kind="stable")
    c1, c2 = K[by1, 1], K[by1, 2]
    pm = np.minimum.accumulate(c2)
    pos = np.maximum.accumulate(np.where(c2 <= pm, np.arange(len(c2)), 0))
    j = np.searchsorted(c1, WC[:, 1] + eps, side="right") - 1
    jj = np.maximum(j, 0)
    cov = (j >= 0) & (pm[jj] <= WC[:, 2] + eps)
    witness = K[by1[pos[jj]]]
    strict = cov & np.any(witness < WC - eps, axis=1)
    unsure = np.flatnonzero(cov & ~strict)
    if len(unsure):
        strict[unsure] = _strictly_below(K, WC[unsure], eps).any(axis=0)
    return strict


def _pareto_blocked(W, order, eps, nodes, key_of, block: int = 256) -> np.ndarray:
    """Sweep rows in lexicographic order a block at a time against the running front."""
    a = W.shape[1]
    kept = np.empty(0, dtype=np.int64)
    for s in range(0, len(order), block):
        C = order[s : s + block]
        if len(kept):
            K = W[kept]
            dominated = _covered_three(K, W[C], eps) if a == 3 else _strictly_below(K, W[C], eps).any(axis=0)
            C = C[~dominated]
        if len(C) == 0:
            continue
        C = C[~_strictly_below(W[C], W[C], eps).any(axis=0)]
        # only kept rows level with the block in the first column can be beaten by it or equal to it
        start = int(np.searchsorted(W[kept, 0], W[C, 0].min() - eps, side="left")) if len(kept) else 0
        if start < len(kept):
            tail = kept[start:]
            tail = tail[~_strictly_below(W[C], W[tail], eps).any(axis=0)]
            kept = np.concatenate([kept[:start], tail])
        k = len(kept)
        pool = np.concatenate([kept, C])
        near = pool[start:]
        eq = np.all(np.abs(W[C][:, None, :] - W[near][None, :, :]) <= eps, axis=2)
        eq[np.arange(len(C)), k - start + np.arange(len(C))] = False
        if not eq.any():
            kept = pool
            continue
        # rows equal within eps collapse to one representative, earlier rows first
        alive = np.ones(len(pool), dtype=bool)
        for r in np.flatnonzero(eq.any(axis=1)):
            j = k + r
            if not alive[j]:
                continue
            partners = np.flatnonzero(eq[r] & alive[start:]) + start
            if len(partners) == 0:
                continue
            i = int(partners[0])
            if _tie_winner([pool[i], pool[j]], nodes, key_of) == pool[j]:
                alive[i] = False
            else:
                alive[j] = False
        kept = pool[alive]
    return kept[np.lexsort([W[kept, j] for j in range(a - 1, -1, -1)])]


def _pareto_small(W, order, eps, nodes, key_of) -> np.ndarray:
    Ws = W[order]
    le = np.all(Ws[:, None, :] <= Ws[None, :, :] + eps, axis=2)  # le[j, i]: row j weakly better than row i
    lt = np.any(Ws[:, None, :] < Ws[None, :, :] - eps, axis=2)
    dominated = np.any(le & lt, axis=0)
    cand = np.flatnonzero(~dominated)
    if len(cand) == 1:
        return order[cand]
    out = []
    taken = np.zeros(len(order), dtype=bool)
    for p in cand:
        if taken[p]:
            continue
        group = [q for q in cand if not taken[q] and le[p, q] and le[q, p]]
        taken[group] = True
        out.append(_tie_winner(order[group], nodes, key_of) if len(group) > 1 else order[p])
    return np.array(out, dtype=np.int64)


def leaf_choice(V: np.ndarray, state: "State", task: "OptimizationTask", UB: Optional[np.ndarray] = None) -> np.ndarray:
    """Labels whose leaf costs ``V`` form the feasible front at ``state``, minus any ``UB`` covers."""
    W = V * task.sense
    if task.arity == 1 and not task.has_constraint and UB is None:
        col = W[:, 0]
        ties = np.flatnonzero(col <= col.min() + task.eps)
        if len(ties) == 1:
            return ties
        return np.array([min(ties, key=lambda k: '{"label": %d}' % k)], dtype=np.int64)
    ok = task.feasible(V, state) if task.has_constraint else np.ones(len(V), dtype=bool)
    if UB is not None:
        ok &= ub_mask(W, UB, task.eps)
    idx = np.flatnonzero(ok)
    if len(idx) == 0:
        return idx
    return idx[pareto_indices(W[idx], task.eps, None, lambda i: '{"label": %d}' % idx[i])]


def dedupe_indices(W, eps=0.0, nodes=None, key_of=None) -> np.ndarray:
    """One representative per distinct row (equality within ``eps``), ordered by value."""
    m, a = W.shape
    if m == 0:
        return np.empty(0, dtype=np.int64)
    if nodes is None:
        nodes = np.zeros(m, dtype=np.int64)
    order = np.lexsort([nodes] + [W[:, j] for j in range(a - 1, -1, -1)])
    groups: list = []
    reps: list = []
    for i in order:
        for g, r in enumerate(reps):
            if np.all(np.abs(W[r] - W[i]) <= eps):
                groups[g].append(i)
                break
        else:
            reps.append(i)
            groups.append([i])
    out = np.array([_tie_winner(g, nodes, key_of) for g in groups], dtype=np.int64)
    return out[np.lexsort([W[out, j] for j in range(a - 1, -1, -1)])]


def ub_mask(W: np.ndarray, UB: Optional[np.ndarray], eps: float = 0.0) -> np.ndarray:
    """True for rows of ``W`` that no upper-bound row equals or dominates (minimization space)."""
    if UB is None or len(UB) == 0 or len(W) == 0:
        return np.ones(len(W), dtype=bool)
    covered = np.all(UB[None, :, :] <= W[:, None, :] + eps, axis=2)
    return ~covered.any(axis=1)


def nondom(values, task: OptimizationTask) -> np.ndarray:
    """Values not strictly dominated by another value; duplicates collapse."""
    V = _check_arity(values, task)
    return V[pareto_indices(V * task.sense, task.eps)]


def feas(values, state: State, task: OptimizationTask) -> np.ndarray:
    V = _check_arity(values, task)
    return V[task.feasible(V, state)]


def opt(values, state: State, task: OptimizationTask, ub=None) -> np.ndarray:
    """Feasible nondominated values that no member of ``ub`` equals or dominates."""
    V = feas(values, state, task)
    if ub is not None:
        U = _check_arity(ub, task)
        V = V[ub_mask(V * task.sense, U * task.sense, task.eps)]
    return nondom(V, task)


def make_front(V: np.ndarray, trees: Sequence[Tree], task: OptimizationTask, collapse: str = "nondom") -> ParetoFront:
    """Front from candidate values and trees, applying nondom or duplicate collapse."""
    V = _check_arity(V, task)
    nodes = np.array([t.nodes for t in trees], dtype=np.int64)
    pick = pareto_indices if collapse == "nondom" else dedupe_indices
    idx = pick(V * task.sense, task.eps, nodes, lambda i: trees[i].key)
    return ParetoFront(V[idx], tuple(trees[i] for i in idx))


def merge(left: ParetoFront, right: ParetoFront, state: State, feature: int, task: OptimizationTask) -> ParetoFront:
    """Every left/right combination plus the branching cost, duplicates collapsed.

    ``left`` holds solutions for the subset without ``feature``, ``right`` for
    the subset with it.
    """
    bc = task.branch_cost(state, feature)
    if len(left) == 0 or len(right) == 0:
        return ParetoFront.empty(task.arity)
    V = task.combine(task.combine(left.values[:, None, :], right.values[None, :, :]), bc)
    V = V.reshape(-1, task.arity)
    trees = [Branch(int(feature), lt, rt) for lt in left.trees for rt in right.trees]
    return make_front(V, trees, task, collapse="dedupe")


def tree_cost(tree: Tree, state: State, task: OptimizationTask) -> np.ndarray:
    """Value of ``tree`` at ``state``: leaf cost, or children combined with the branching cost."""
    if isinstance(tree, Leaf):
        if not 0 <= tree.label < task.label_count:
            raise ContractError(f"label {tree.label} outside [0, {task.label_count})")
        return task.leaf_costs(state)[tree.label]
    if not 0 <= tree.feature < task.dataset.n_features:
        raise ContractError(f"feature {tree.feature} outside [0, {task.dataset.n_features})")
    left = tree_cost(tree.left, task.transition(state, tree.feature, 0), task)
    right = tree_cost(tree.right, task.transition(state, tree.feature, 1), task)
    return task.combine(task.combine(left, right), task.branch_cost(state, tree.feature))


def tree_feasible(tree: Tree, state: State, task: OptimizationTask) -> bool:
    """Whether every subtree value of ``tree`` satisfies the task constraint."""
    value = tree_cost(tree, state, task)
    if not task.feasible(value.reshape(1, -1), state)[0]:
        return False
    if isinstance(tree, Leaf):
        return True
    return tree_feasible(tree.left, task.transition(state, tree.feature, 0), task) and tree_feasible(
        tree.right, task.transition(state, tree.feature, 1), task
    )
