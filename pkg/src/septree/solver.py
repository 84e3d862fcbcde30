"""Dynamic-programming search over subtrees with caching, bounds and node budgets."""
from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bounds import (
    DEFAULT_REPRESENTATIVES,
    bound_prunes,
    child_ub,
    covers,
    reduce_representative,
    similarity_applicable,
    similarity_lb,
    ub_tighter,
)
from .core import (
    Branch,
    ContractError,
    Dataset,
    Leaf,
    OptimizationTask,
    ParetoFront,
    State,
    leaf_choice,
    pareto_indices,
    tree_cost,
)
from .depth2 import compute_pair_counts, solve_depth2


@dataclass
class SolverConfig:
    """Search limits and switches.

    ``max_nodes=None`` means the full budget ``2**max_depth - 1``.  A
    ``time_limit`` of 0 disables the limit.
    """

    max_depth: int = 2
    max_nodes: Optional[int] = None
    use_cache: bool = True
    use_bounds: bool = True
    use_depth2: bool = True
    time_limit: float = 0.0
    min_leaf_support: int = 0
    representatives: int = DEFAULT_REPRESENTATIVES
    similarity_pool: int = 4

    def __post_init__(self):
        if self.max_depth < 0:
            raise ContractError("max_depth must be non-negative")
        if self.max_nodes is not None and self.max_nodes < 0:
            raise ContractError("max_nodes must be non-negative")
        if self.time_limit < 0 or self.min_leaf_support < 0:
            raise ContractError("time_limit and min_leaf_support must be non-negative")

    def normalized(self) -> tuple:
        """``(depth, nodes)`` after clamping the budget to the depth and vice versa."""
        d = self.max_depth
        n = 2 ** d - 1 if self.max_nodes is None else min(self.max_nodes, 2 ** d - 1)
        return min(d, n), n


@dataclass
class SolverStats:
    calls: int = 0
    cache_hits: int = 0
    lb_prunes: int = 0
    similarity_prunes: int = 0
    depth2_calls: int = 0
    leaf_calls: int = 0
    elapsed: float = 0.0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class _Entry:
    front: Optional[ParetoFront] = None
    ub: Optional[np.ndarray] = None  # bound the front was computed under; None means complete
    lb: Optional[np.ndarray] = None


class _Timeout(Exception):
    pass


def leaf_solve(state: State, task: OptimizationTask, ub: Optional[np.ndarray] = None, min_leaf_support: int = 0) -> ParetoFront:
    """Best feasible single-leaf labelings at ``state``.

    ``ub`` is in minimization space; labels it equals or dominates are
    dropped.  A subset smaller than ``min_leaf_support`` has no leaf.
    """
    if state.size < min_leaf_support:
        return ParetoFront.empty(task.arity)
    V = task.leaf_costs(state)
    keep = leaf_choice(V, state, task, ub)
    return ParetoFront(V[keep], tuple(Leaf(int(k)) for k in keep))


def _filter(front: ParetoFront, ub: Optional[np.ndarray], task: OptimizationTask) -> ParetoFront:
    if ub is None or len(front) == 0:
        return front
    keep = np.flatnonzero(~covers(ub, front.values * task.sense, task.eps))
    if len(keep) == len(front):
        return front
    return ParetoFront(front.values[keep], tuple(front.trees[i] for i in keep))


class Solver:
    """Reusable search engine for one task; the cache persists across :meth:`solve` calls."""

    def __init__(self, task: OptimizationTask, config: Optional[SolverConfig] = None):
        self.task = task
        self.config = config or SolverConfig()
        self.cache: dict = {}
        self.stats = SolverStats()
        self._pool: dict = {}
        self._bounds = self.config.use_bounds and task.has_subtraction and task.additive
        self._similarity = self._bounds and similarity_applicable(task)
        self._deadline = None
        self._incumbent: list = []

    # -- public --------------------------------------------------------------
    def solve(self, max_depth: Optional[int] = None, max_nodes: Optional[int] = None) -> ParetoFront:
        cfg = self.config
        if max_depth is None and max_nodes is None:
            d, n = cfg.normalized()
        else:
            depth = cfg.max_depth if max_depth is None else max_depth
            d, n = SolverConfig(depth, max_nodes).normalized()
        if self.task.dataset.n_instances == 0:
            raise ContractError("cannot solve on an empty dataset")
        start = time.perf_counter()
        self._deadline = start + self.config.time_limit if self.config.time_limit > 0 else None
        self._incumbent = []
        try:
            front = self._recurse(self.task.initial_state(), d, n, None, root=True)
        except _Timeout:
            front = self._incumbent_front()
        finally:
            self.stats.elapsed += time.perf_counter() - start
        return front

    # -- search --------------------------------------------------------------
    def _incumbent_front(self) -> ParetoFront:
        task = self.task
        parts = [p for p in self._incumbent if len(p)]
        if not parts:
            return ParetoFront.empty(task.arity, optimal=False)
        V = np.vstack([p.values for p in parts])
        trees = [t for p in parts for t in p.trees]
        nodes = np.array([t.nodes for t in trees])
        keep = pareto_indices(V * task.sense, task.eps, nodes, lambda i: trees[i].key)
        return ParetoFront(V[keep], tuple(trees[i] for i in keep), optimal=False)

    def _optimistic(self, state: State) -> Optional[np.ndarray]:
        if state.indices is None:
            return None
        return self.task.optimistic_value(state)

    def _recurse(self, state: State, d: int, n: int, ub: Optional[np.ndarray], root: bool = False) -> ParetoFront:
        task, cfg = self.task, self.config
        self.stats.calls += 1
        if self._deadline is not None and time.perf_counter() > self._deadline:
            raise _Timeout
        n = min(n, 2 ** d - 1)
        d = min(d, n)
        if d == 0:
            self.stats.leaf_calls += 1
            front = leaf_solve(state, task, ub, cfg.min_leaf_support)
            if root:
                self._incumbent.append(front)
            return front

        key = (state.key(), d, n)
        entry = self.cache.get(key) if cfg.use_cache else None
        if entry is not None:
            if entry.front is not None and (entry.ub is None or ub_tighter(ub, entry.ub, task.eps)):
                self.stats.cache_hits += 1
                return _filter(entry.front, ub, task)
            if self._bounds and entry.lb is not None and bound_prunes(entry.lb, ub, task.eps):
                self.stats.lb_prunes += 1
                return ParetoFront.empty(task.arity)

        if self._bounds and ub is not None:
            lb = self._optimistic(state)
            if lb is not None and bound_prunes(lb[None, :], ub, task.eps):
                self.stats.lb_prunes += 1
                self._store_lb(key, ub)
                return ParetoFront.empty(task.arity)
            if self._similarity:
                for idx, W in self._pool.get((d, n), ()):
                    slb = similarity_lb(W, idx, state.indices, task)
                    if slb is not None and bound_prunes(slb, ub, task.eps):
                        self.stats.similarity_prunes += 1
                        self._store_lb(key, ub)
                        return ParetoFront.empty(task.arity)

        if cfg.use_depth2 and d <= 2 and task.per_instance_additive and state.indices is not None:
            self.stats.depth2_calls += 1
            counts = compute_pair_counts(state, task)
            front = solve_depth2(state, task, n, d, counts, cfg.min_leaf_support)
            self._store(key, state, d, n, front, None)
            if root:
                self._incumbent.append(front)
            return _filter(front, ub, task)

        front = self._search(state, d, n, ub, root)
        self._store(key, state, d, n, front, ub)
        return front

    def _search(self, state: State, d: int, n: int, ub: Optional[np.ndarray], root: bool) -> ParetoFront:
        task, cfg = self.task, self.config
        sense, eps = task.sense, task.eps
        leaf = leaf_solve(state, task, None, cfg.min_leaf_support)
        vals = [leaf.values]
        trees = list(leaf.trees)
        if root:
            self._incumbent.append(leaf)
        current = leaf.values * sense  # running front in minimization space

        cap = 2 ** (d - 1) - 1
        lo_nl = max(0, n - 1 - cap)
        hi_nl = min(n - 1, cap)
        for f in range(task.dataset.n_features):
            left_state = task.transition(state, f, 0)
            right_state = task.transition(state, f, 1)
            bc = task.branch_cost(state, f)
            bcm = bc * sense
            right_lb = self._optimistic(right_state) if self._bounds else None
            for nl in range(lo_nl, hi_nl + 1):
                nr = n - 1 - nl
                eff = self._effective_ub(ub, current)
                if self._bounds and eff is not None:
                    left_ub = child_ub(eff, right_lb, bcm)
                else:
                    left_ub = None
                left = self._recurse(left_state, d - 1, nl, left_ub)
                if len(left) == 0:
                    continue
                if self._bounds and eff is not None:
                    right_ub = child_ub(eff, (left.values * sense).min(axis=0), bcm)
                else:
                    right_ub = None
                right = self._recurse(right_state, d - 1, nr, right_ub)
                if len(right) == 0:
                    continue
                V, T = self._merge(left, right, state, f, bc)
                if len(T) == 0:
                    continue
                if ub is not None:
                    fresh = ~covers(ub, V * sense, eps)
                    if not fresh.any():
                        continue
                    V = V[fresh]
                    T = [t for t, k in zip(T, fresh) if k]
                old = len(trees)
                vals.append(V)
                trees.extend(T)
                allv = np.vstack(vals)
                nodes = np.array([t.nodes for t in trees])
                keep = pareto_indices(allv * sense, eps, nodes, lambda i: trees[i].key)
                if len(keep) == old and keep.max() < old:
                    vals = [allv[:old]]
                    trees = trees[:old]
                    continue
                vals = [allv[keep]]
                trees = [trees[i] for i in keep]
                current = vals[0] * sense
                if root:
                    self._incumbent.append(ParetoFront(vals[0], tuple(trees)))

        V = np.vstack(vals)
        front = ParetoFront(V, tuple(trees))
        return _filter(front, ub, task)

    def _merge(self, left: ParetoFront, right: ParetoFront, state: State, f: int, bc: np.ndarray):
        task = self.task
        V = task.combine(task.combine(left.values[:, None, :], right.values[None, :, :]), bc).reshape(-1, task.arity)
        ok = np.flatnonzero(task.feasible(V, state)) if task.has_constraint else np.arange(len(V))
        if len(ok) == 0:
            return V[:0], []
        V = V[ok]
        nr = len(right)
        TL, TR = left.trees, right.trees
        nodes = np.array([1 + TL[i // nr].nodes + TR[i % nr].nodes for i in ok])

        def key_of(p):
            i = ok[p]
            return '{"feature": %d, "left": %s, "right": %s}' % (f, TL[i // nr].key, TR[i % nr].key)

        keep = pareto_indices(V * task.sense, task.eps, nodes, key_of)
        return V[keep], [Branch(int(f), TL[ok[p] // nr], TR[ok[p] % nr]) for p in keep]

    def _effective_ub(self, ub, current):
        parts = [p for p in (ub, current) if p is not None and len(p)]
        if not parts:
            return None
        U = np.vstack(parts) if len(parts) > 1 else parts[0]
        if len(U) > self.config.representatives:
            U = reduce_representative(U, self.config.representatives, "upper")
        return U

    # -- cache -----------------------------------------------------------------
    def _store(self, key, state, d, n, front, ub):
        if not self.config.use_cache:
            return
        old = self.cache.get(key)
        if ub is None:
            self.cache[key] = _Entry(front, None, front.values * self.task.sense)
            if self._similarity and state.indices is not None and len(front):
                pool = self._pool.setdefault((d, n), deque(maxlen=self.config.similarity_pool))
                pool.append((state.indices, front.values * self.task.sense))
            return
        if old is not None and old.front is not None and old.ub is None:
            return
        if len(front) == 0:
            self._store_lb(key, ub)
        else:
            # a partial front is reusable under any tighter bound
            self.cache[key] = _Entry(front, ub, old.lb if old is not None else None)

    def _store_lb(self, key, ub):
        if not self.config.use_cache:
            return
        old = self.cache.get(key)
        if old is not None and old.front is not None and old.ub is None:
            return
        # every achievable value is covered by ub, so ub itself is a valid lower bound
        lb = reduce_representative(ub, self.config.representatives, "lower")
        front, fub = (old.front, old.ub) if old is not None else (None, None)
        self.cache[key] = _Entry(front, fub, lb)


def solve(task: OptimizationTask, dataset: Optional[Dataset] = None, config: Optional[SolverConfig] = None) -> ParetoFront:
    """Pareto front of feasible trees within the configured depth and node budget.

    ``dataset``, when given, rebinds ``task`` to it first.
    """
    if dataset is not None and dataset is not task.dataset:
        task = task.rebind(dataset)
    return Solver(task, config).solve()


def split_indices(n: int, fraction: float, rng: np.random.Generator) -> tuple:
    """Random ``(train, test)`` index arrays with ``round(fraction * n)`` test rows."""
    perm = rng.permutation(n)
    n_test = int(round(fraction * n))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def hypertune_nodes(
    task: OptimizationTask,
    dataset: Optional[Dataset] = None,
    max_depth: int = 2,
    seed: int = 0,
    repeats: int = 5,
    config: Optional[SolverConfig] = None,
) -> int:
    """Node budget with the best mean validation score over seeded 80/20 splits.

    Every budget from 0 to ``2**max_depth - 1`` is solved on the training
    part; the tree the task selects is scored on the held-out part.  Ties go
    to the smaller budget.
    """
    ds = dataset if dataset is not None else task.dataset
    if ds.n_instances < 10:
        raise ContractError("hypertuning needs at least 10 instances")
    rng = np.random.default_rng(seed)
    budgets = range(2 ** max_depth)
    scores = np.zeros((repeats, len(budgets)))
    base = config or SolverConfig()
    for r in range(repeats):
        tr, va = split_indices(ds.n_instances, 0.2, rng)
        train_task = task.rebind(ds.subset(tr))
        valid_task = task.rebind(ds.subset(va))
        solver = Solver(train_task, SolverConfig(max_depth, None, base.use_cache, base.use_bounds, base.use_depth2, 0.0, base.min_leaf_support))
        for b in budgets:
            front = solver.solve(max_depth, b)
            if len(front) == 0:
                scores[r, b] = np.inf
                continue
            tree = front.trees[train_task.select(front)]
            value = tree_cost(tree, valid_task.initial_state(), valid_task)
            scores[r, b] = valid_task.scalar_score(value)
    mean = scores.mean(axis=0)
    best = mean.min()
    return int(np.flatnonzero(mean <= best + 1e-12)[0])
