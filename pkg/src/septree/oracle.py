"""Brute-force ground truth: every tree up to a depth and node budget.

Two evaluation paths are provided.  The literal path enumerates trees one by
one and prices each with :func:`tree_cost`.  The table path computes, for
every state reachable within the depth limit, the set of all achievable
``(value, node count)`` pairs; only exact duplicates are merged and nothing
is discarded for being dominated until the root.  Neither path uses bounds,
caching of fronts or the depth-two solver.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Optional

import numpy as np

from .core import (
    Branch,
    ContractError,
    Leaf,
    OptimizationTask,
    ParetoFront,
    State,
    Tree,
    make_front,
    pareto_indices,
    tree_cost,
    tree_feasible,
)

ENUMERATION_LIMIT = 10 ** 8


class EnumerationLimitError(ContractError):
    """The requested enumeration is larger than the configured limit."""

    def __init__(self, count: int, limit: int):
        super().__init__(f"enumeration would yield {count} trees, above the limit of {limit}")
        self.count = count
        self.limit = limit


def trees_with_nodes(n_features: int, n_labels: int, d: int, k: int) -> int:
    """Number of trees of depth at most ``d`` with exactly ``k`` branching nodes."""

    @lru_cache(maxsize=None)
    def exact(depth, nodes):
        if nodes == 0:
            return n_labels
        if depth == 0:
            return 0
        return n_features * sum(exact(depth - 1, a) * exact(depth - 1, nodes - 1 - a) for a in range(nodes))

    return exact(d, k)


def count_trees(n_features: int, n_labels: int, d: int, n: Optional[int] = None) -> int:
    """Number of trees with depth at most ``d`` and at most ``n`` branching nodes."""
    n = 2 ** d - 1 if n is None else min(n, 2 ** d - 1)
    return sum(trees_with_nodes(n_features, n_labels, d, k) for k in range(n + 1))


def count_shapes(d: int, n: Optional[int] = None) -> int:
    """Number of distinct topologies (which nodes branch) within the limits."""
    return count_trees(1, 1, d, n)


def enumerate_shapes(d: int, n: int) -> Iterator:
    """Topologies with at most ``n`` branching nodes, each once.

    A leaf is ``None`` and a branch ``(left, right)``.
    """
    yield None
    if d == 0 or n == 0:
        return
    for a in range(n):
        for left in enumerate_shapes(d - 1, a):
            used = _shape_nodes(left)
            if used != a:
                continue
            for right in enumerate_shapes(d - 1, n - 1 - a):
                yield (left, right)


def _shape_nodes(shape) -> int:
    return 0 if shape is None else 1 + _shape_nodes(shape[0]) + _shape_nodes(shape[1])


def _fill(shape, n_features: int, n_labels: int) -> Iterator[Tree]:
    if shape is None:
        for k in range(n_labels):
            yield Leaf(k)
        return
    for f in range(n_features):
        for left in _fill(shape[0], n_features, n_labels):
            for right in _fill(shape[1], n_features, n_labels):
                yield Branch(f, left, right)


def enumerate_trees(n_features: int, n_labels: int, d: int, n: Optional[int] = None, limit: int = ENUMERATION_LIMIT) -> Iterator[Tree]:
    """Every tree of depth at most ``d`` with at most ``n`` branching nodes, each exactly once.

    Features may repeat along a path.  Raises :class:`EnumerationLimitError`
    before yielding anything when the count exceeds ``limit``.
    """
    n = 2 ** d - 1 if n is None else min(n, 2 ** d - 1)
    total = count_trees(n_features, n_labels, d, n)
    if total > limit:
        raise EnumerationLimitError(total, limit)
    return _enumerate(n_features, n_labels, d, n)


def _enumerate(n_features, n_labels, d, n):
    for shape in enumerate_shapes(d, n):
        yield from _fill(shape, n_features, n_labels)


# ---------------------------------------------------------------------------
# Literal path
# ---------------------------------------------------------------------------


def brute_force_front_literal(task: OptimizationTask, d: int, n: Optional[int] = None, limit: int = 10 ** 6, min_leaf_support: int = 0) -> ParetoFront:
    """Price every enumerated tree with :func:`tree_cost` and keep the feasible optimum."""
    root = task.initial_state()
    values, trees = [], []
    for tree in enumerate_trees(task.dataset.n_features, task.label_count, d, n, limit):
        if min_leaf_support and not _support_ok(tree, root, task, min_leaf_support):
            continue
        if not tree_feasible(tree, root, task):
            continue
        values.append(tree_cost(tree, root, task))
        trees.append(tree)
    if not trees:
        return ParetoFront.empty(task.arity)
    return make_front(np.array(values), trees, task)


def _support_ok(tree, state, task, support) -> bool:
    if isinstance(tree, Leaf):
        return state.size >= support
    return _support_ok(tree.left, task.transition(state, tree.feature, 0), task, support) and _support_ok(
        tree.right, task.transition(state, tree.feature, 1), task, support
    )


# ---------------------------------------------------------------------------
# Table path
# ---------------------------------------------------------------------------


@dataclass
class _Table:
    """All distinct achievable (value, nodes) pairs at one state and depth.

    Entry ``i`` is a leaf with label ``a[i]`` when ``feat[i] < 0``, otherwise
    a branch on ``feat[i]`` joining entry ``a[i]`` of the left child table and
    entry ``b[i]`` of the right child table.
    """

    V: np.ndarray
    N: np.ndarray
    feat: np.ndarray
    a: np.ndarray
    b: np.ndarray
    children: dict = field(default_factory=dict)

    def tree(self, i: int) -> Tree:
        f = int(self.feat[i])
        if f < 0:
            return Leaf(int(self.a[i]))
        left, right = self.children[f]
        return Branch(f, left.tree(int(self.a[i])), right.tree(int(self.b[i])))


class _Exhaustive:
    def __init__(self, task: OptimizationTask, n_max: int, support: int, chunk: int = 200_000):
        self.task = task
        self.n_max = n_max
        self.support = support
        self.chunk = chunk
        self.memo: dict = {}

    def leaves(self, state: State):
        task = self.task
        if state.size < self.support:
            return np.empty((0, task.arity)), np.empty(0, dtype=np.int64)
        V = task.leaf_costs(state)
        ok = np.flatnonzero(task.feasible(V, state))
        return V[ok], ok

    def pairs(self, state: State, d: int):
        """Yield ``(feature, left table, right table, chunk values, chunk nodes, left idx, right idx)``."""
        task = self.task
        for f in range(task.dataset.n_features):
            ls = task.transition(state, f, 0)
            rs = task.transition(state, f, 1)
            L = self.table(ls, d - 1)
            R = self.table(rs, d - 1)
            if len(L.N) == 0 or len(R.N) == 0:
                continue
            bc = task.branch_cost(state, f)
            step = max(1, self.chunk // len(R.N))
            for s in range(0, len(L.N), step):
                li = np.arange(s, min(s + step, len(L.N)))
                N = 1 + L.N[li][:, None] + R.N[None, :]
                V = task.combine(task.combine(L.V[li][:, None, :], R.V[None, :, :]), bc)
                ii, jj = np.nonzero(N <= self.n_max)
                if len(ii) == 0:
                    continue
                Vc = V[ii, jj]
                ok = task.feasible(Vc, state)
                yield f, L, R, Vc[ok], N[ii, jj][ok], li[ii][ok], jj[ok]

    def table(self, state: State, d: int) -> _Table:
        key = (state.key(), d)
        if key in self.memo:
            return self.memo[key]
        LV, labels = self.leaves(state)
        Vs = [LV]
        Ns = [np.zeros(len(labels), dtype=np.int64)]
        feats = [np.full(len(labels), -1)]
        As = [labels]
        Bs = [np.zeros(len(labels), dtype=np.int64)]
        children = {}
        if d > 0 and self.n_max > 0:
            for f, L, R, V, N, li, ri in self.pairs(state, d):
                children[f] = (L, R)
                Vs.append(V)
                Ns.append(N)
                feats.append(np.full(len(N), f))
                As.append(li)
                Bs.append(ri)
        V = np.vstack(Vs)
        N = np.concatenate(Ns)
        # merge exact duplicates only
        _, first = np.unique(np.column_stack([V, N]), axis=0, return_index=True)
        first = np.sort(first)
        t = _Table(V[first], N[first], np.concatenate(feats)[first], np.concatenate(As)[first], np.concatenate(Bs)[first], children)
        self.memo[key] = t
        return t

    def root_fronts(self, d: int) -> dict:
        """Front for every budget ``0..n_max`` at the root state."""
        task = self.task
        root = task.initial_state()
        LV, labels = self.leaves(root)
        # per exact node count: candidate values and provenance (feature, a, b)
        best = {0: (LV, [(-1, int(k), 0) for k in labels])}
        children = {}

        def absorb(k, V, prov):
            if k in best:
                V = np.vstack([best[k][0], V])
                prov = best[k][1] + prov
            keep = pareto_indices(V * task.sense, task.eps)
            best[k] = (V[keep], [prov[i] for i in keep])

        if d > 0 and self.n_max > 0:
            for f, L, R, V, N, li, ri in self.pairs(root, d):
                children[f] = (L, R)
                for k in np.unique(N):
                    m = N == k
                    absorb(int(k), V[m], [(f, int(x), int(y)) for x, y in zip(li[m], ri[m])])

        def build(p):
            f, x, y = p
            if f < 0:
                return Leaf(x)
            L, R = children[f]
            return Branch(f, L.tree(x), R.tree(y))

        out = {}
        for n in range(self.n_max + 1):
            parts = [best[k] for k in range(n + 1) if k in best and len(best[k][1])]
            if not parts:
                out[n] = ParetoFront.empty(task.arity)
                continue
            V = np.vstack([p[0] for p in parts])
            trees = [build(q) for p in parts for q in p[1]]
            out[n] = make_front(V, trees, task)
        return out


def brute_force_fronts(task: OptimizationTask, d: int, n_max: Optional[int] = None, min_leaf_support: int = 0) -> dict:
    """Exhaustive fronts at the root for every node budget ``0..n_max``, keyed by budget."""
    cap = 2 ** d - 1
    n_max = cap if n_max is None else min(n_max, cap)
    return _Exhaustive(task, n_max, min_leaf_support).root_fronts(min(d, n_max) if n_max else 0)


def brute_force_front(task: OptimizationTask, d: int, n: Optional[int] = None, method: str = "table", min_leaf_support: int = 0, limit: int = ENUMERATION_LIMIT) -> ParetoFront:
    """Front of all feasible trees with depth at most ``d`` and at most ``n`` branching nodes.

    ``method="literal"`` enumerates trees one at a time (after checking the
    enumeration limit); ``method="table"`` uses the exhaustive table
    recursion, which reaches the same front far faster.
    """
    n = 2 ** d - 1 if n is None else min(n, 2 ** d - 1)
    if method == "literal":
        return brute_force_front_literal(task, d, n, limit, min_leaf_support)
    if method != "table":
        raise ContractError("method must be 'table' or 'literal'")
    count = count_trees(task.dataset.n_features, task.label_count, d, n)
    if count > limit:
        raise EnumerationLimitError(count, limit)
    return brute_force_fronts(task, d, n, min_leaf_support)[n]
