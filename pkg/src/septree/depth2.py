"""Specialized solver for subtrees of depth at most two.

Per-instance label costs are aggregated once for every feature pair and bit
combination; every leaf of every depth-two tree is then priced from these
aggregates without touching the instances again.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Branch, CapabilityError, ContractError, Leaf, OptimizationTask, ParetoFront, State, leaf_choice, pareto_indices


@dataclass(frozen=True, eq=False)
class PairCounts:
    """Aggregated per-instance costs and instance counts.

    ``pair[i, j, a, b]`` holds the summed cost rows (shape ``(labels, arity)``)
    of instances with ``x_i = a`` and ``x_j = b``; ``single[i, a]`` and
    ``total`` are the one-feature and whole-subset aggregates.  ``n_pair``,
    ``n_single`` and ``n_total`` count instances the same way.
    """

    pair: np.ndarray
    single: np.ndarray
    total: np.ndarray
    n_pair: np.ndarray
    n_single: np.ndarray
    n_total: int


def compute_pair_counts(state: State, task: OptimizationTask) -> PairCounts:
    if not task.per_instance_additive or task.instance_costs is None:
        raise CapabilityError(f"{type(task).__name__} is not per-instance additive")
    if state.indices is None:
        raise ContractError("pair counts need a state with instance indices")
    idx = state.indices
    X = task.dataset.features[idx].astype(float)
    H = task.instance_cost_rows(idx)
    m, F = X.shape
    L, A = task.label_count, task.arity
    Hf = H.reshape(m, L * A)
    total = Hf.sum(axis=0)
    s1 = X.T @ Hf  # (F, LA): mass with x_i = 1
    p11 = np.einsum("mi,mj,mc->ijc", X, X, Hf, optimize=True)
    pair = np.empty((F, F, 2, 2, L * A))
    pair[:, :, 1, 1] = p11
    pair[:, :, 1, 0] = s1[:, None, :] - p11
    pair[:, :, 0, 1] = s1[None, :, :] - p11
    pair[:, :, 0, 0] = total[None, None, :] - s1[:, None, :] - s1[None, :, :] + p11
    single = np.stack([total[None, :] - s1, s1], axis=1)

    c1 = X.sum(axis=0)
    c11 = X.T @ X
    n_pair = np.empty((F, F, 2, 2), dtype=np.int64)
    n_pair[:, :, 1, 1] = c11
    n_pair[:, :, 1, 0] = c1[:, None] - c11
    n_pair[:, :, 0, 1] = c1[None, :] - c11
    n_pair[:, :, 0, 0] = m - c1[:, None] - c1[None, :] + c11
    n_single = np.stack([m - c1, c1], axis=1).astype(np.int64)
    return PairCounts(
        pair.reshape(F, F, 2, 2, L, A),
        single.reshape(F, 2, L, A),
        total.reshape(L, A),
        n_pair,
        n_single,
        m,
    )


class _Depth2:
    def __init__(self, state: State, task: OptimizationTask, counts: PairCounts, min_leaf_support: int):
        self.state = state
        self.task = task
        self.c = counts
        self.support = min_leaf_support
        self.labels = [Leaf(k) for k in range(task.label_count)]

    def leaf_front(self, costs: np.ndarray, st: State):
        """Feasible nondominated labels at a leaf; returns (values, trees)."""
        task = self.task
        if st.size < self.support:
            return np.empty((0, task.arity)), []
        keep = leaf_choice(costs, st, task)
        return costs[keep], [self.labels[k] for k in keep]

    def combine(self, left, right, st: State, feature: int):
        """Every left/right pairing under ``feature`` plus its branching cost, filtered and reduced."""
        (VL, TL), (VR, TR) = left, right
        task = self.task
        if len(TL) == 0 or len(TR) == 0:
            return np.empty((0, task.arity)), []
        bc = task.branch_cost(st, feature)
        V = task.combine(task.combine(VL[:, None, :], VR[None, :, :]), bc).reshape(-1, task.arity)
        nr = len(TR)
        ok = np.flatnonzero(task.feasible(V, st)) if task.has_constraint else np.arange(len(V))
        if len(ok) == 0:
            return np.empty((0, task.arity)), []
        V = V[ok]
        nodes = np.array([1 + TL[i // nr].nodes + TR[i % nr].nodes for i in ok])

        def key_of(p):
            i = ok[p]
            return '{"feature": %d, "left": %s, "right": %s}' % (feature, TL[i // nr].key, TR[i % nr].key)

        keep = pareto_indices(V * task.sense, task.eps, nodes, key_of)
        trees = [Branch(int(feature), TL[ok[p] // nr], TR[ok[p] % nr]) for p in keep]
        return V[keep], trees

    def union(self, parts, st: State):
        task = self.task
        parts = [p for p in parts if len(p[1])]
        if not parts:
            return np.empty((0, task.arity)), []
        V = np.vstack([p[0] for p in parts])
        trees = [t for p in parts for t in p[1]]
        nodes = np.array([t.nodes for t in trees])
        keep = pareto_indices(V * task.sense, task.eps, nodes, lambda i: trees[i].key)
        return V[keep], [trees[i] for i in keep]


def solve_depth2(state: State, task: OptimizationTask, n: int, d: int = 2, counts: PairCounts = None, min_leaf_support: int = 0) -> ParetoFront:
    """Complete front of trees with depth at most ``min(d, 2)`` and at most ``n`` branching nodes.

    Constraints are applied to every leaf and subtree value, exactly as the
    general recursion does.
    """
    if not 0 <= n <= 3:
        raise ContractError("the depth-two solver handles budgets 0 to 3")
    d = min(d, 2, n)
    n = min(n, 2 ** d - 1)
    if counts is None:
        counts = compute_pair_counts(state, task)
    s = _Depth2(state, task, counts, min_leaf_support)
    path = state.path
    root = s.leaf_front(counts.total, state)
    if n == 0 or d == 0:
        return ParetoFront(root[0], tuple(root[1]))
    F = task.dataset.n_features
    parts = [root]
    for f in range(F):
        children = []
        for side in (0, 1):
            st = State(None, path | {(f, side)}, int(counts.n_single[f, side]))
            leaf = s.leaf_front(counts.single[f, side], st)
            deep = leaf
            if d == 2 and n >= 2:
                sub = [leaf]
                for g in range(F):
                    lo = s.leaf_front(
                        counts.pair[f, g, side, 0],
                        State(None, st.path | {(g, 0)}, int(counts.n_pair[f, g, side, 0])),
                    )
                    hi = s.leaf_front(
                        counts.pair[f, g, side, 1],
                        State(None, st.path | {(g, 1)}, int(counts.n_pair[f, g, side, 1])),
                    )
                    sub.append(s.combine(lo, hi, st, g))
                deep = s.union(sub, st)
            children.append((leaf, deep))
        (l0, d0), (l1, d1) = children
        if n == 1:
            parts.append(s.combine(l0, l1, state, f))
        elif n == 2:
            parts.append(s.combine(d0, l1, state, f))
            parts.append(s.combine(l0, d1, state, f))
        else:
            parts.append(s.combine(d0, d1, state, f))
    V, trees = s.union(parts, state)
    return ParetoFront(V, tuple(trees))
