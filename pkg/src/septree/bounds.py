"""Upper-bound subtraction, lower bounds and bound-set reduction.

All arrays here live in minimization space (values multiplied by the task's
``sense``), with one row per bound point.  An upper-bound set ``U`` prunes a
value ``w`` when some ``u`` in ``U`` satisfies ``u <= w`` component-wise.  A
lower-bound set ``L`` is valid for a subproblem when every achievable value
``w`` has some ``l`` in ``L`` with ``l <= w``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import CapabilityError, OptimizationTask, ParetoFront, pareto_indices

DEFAULT_REPRESENTATIVES = 8


@dataclass(frozen=True, eq=False)
class BoundSet:
    """Points in minimization space plus whether they bound from above or below."""

    values: np.ndarray
    kind: str = "upper"

    def __post_init__(self):
        if self.kind not in ("upper", "lower"):
            raise ValueError("kind must be 'upper' or 'lower'")
        V = np.asarray(self.values, dtype=float)
        if V.ndim == 1:
            V = V.reshape(-1, 1)
        object.__setattr__(self, "values", V)

    def __len__(self) -> int:
        return len(self.values)


def to_min_space(values, task: OptimizationTask) -> np.ndarray:
    V = np.asarray(values, dtype=float)
    return V.reshape(-1, task.arity) * task.sense


def covers(U: Optional[np.ndarray], W: np.ndarray, eps: float = 0.0) -> np.ndarray:
    """Per row of ``W``: is it equalled or dominated by some row of ``U``."""
    if U is None or len(U) == 0:
        return np.zeros(len(W), dtype=bool)
    if len(W) == 0:
        return np.zeros(0, dtype=bool)
    return np.any(np.all(U[None, :, :] <= W[:, None, :] + eps, axis=2), axis=1)


def bound_prunes(lb: Optional[np.ndarray], ub: Optional[np.ndarray], eps: float = 0.0) -> bool:
    """True when every lower-bound point is covered by the upper bound.

    Then every achievable value is covered as well, so the subproblem can
    contribute nothing new.
    """
    if lb is None or ub is None or len(ub) == 0:
        return False
    if len(lb) == 0:
        return True
    return bool(covers(ub, lb, eps).all())


def ub_tighter(new: Optional[np.ndarray], old: Optional[np.ndarray], eps: float = 0.0) -> bool:
    """Whether ``new`` prunes everything ``old`` prunes."""
    if old is None or len(old) == 0:
        return True
    if new is None or len(new) == 0:
        return False
    return bool(covers(new, old, eps).all())


def lb_dominates_ub(lb, ub, task: OptimizationTask) -> bool:
    """True iff every upper-bound value is strictly dominated by some lower-bound value."""
    L = np.asarray(lb.values if isinstance(lb, BoundSet) else lb, dtype=float).reshape(-1, task.arity)
    U = np.asarray(ub.values if isinstance(ub, BoundSet) else ub, dtype=float).reshape(-1, task.arity)
    return all(any(task.dominates(l, u) for l in L) for u in U)


def subtract_ub(ub, theta, state, feature: int, task: OptimizationTask) -> BoundSet:
    """Per-element upper-bound subtraction ``ub - theta`` including the branching cost.

    Every bound point has each ``theta`` point and the branching cost removed;
    per bound point the differences are reduced to their nondominated set and
    the union is reduced to the points no other point is worse than.  Values
    are in natural units.  Use :func:`child_ub` inside a search: a partner
    front with several points needs its ideal point removed instead.
    """
    if not task.has_subtraction:
        raise CapabilityError(f"{type(task).__name__} has no subtraction operator")
    U = np.asarray(ub.values if isinstance(ub, BoundSet) else ub, dtype=float).reshape(-1, task.arity)
    T = np.asarray(theta, dtype=float).reshape(-1, task.arity)
    if len(U) == 0 or len(T) == 0:
        return BoundSet(np.empty((0, task.arity)), "upper")
    bc = task.branch_cost(state, feature) if feature is not None else task.zero
    pieces = []
    for u in U:
        D = task.subtract(task.subtract(u, T), bc)
        pieces.append(D[pareto_indices(D * task.sense, task.eps)])
    D = np.vstack(pieces)
    # reverse nondominance: keep the points no other point is strictly worse than
    keep = pareto_indices(-(D * task.sense), task.eps)
    return BoundSet(D[keep], "upper")


def child_ub(ub: Optional[np.ndarray], partner_lb: Optional[np.ndarray], bc: np.ndarray) -> Optional[np.ndarray]:
    """Upper bound for one child given a lower-bound point for its sibling.

    Works in minimization space for additive tasks: a child value ``w`` with
    ``u - p - bc <= w`` gives a parent value covered by ``u`` whatever the
    sibling achieves, because every sibling value is at least ``p``.
    """
    if ub is None or len(ub) == 0 or partner_lb is None:
        return None
    return ub - partner_lb[None, :] - bc[None, :]


def ideal_point(W: np.ndarray) -> np.ndarray:
    return W.min(axis=0)


def reduce_representative(values, max_size: int = DEFAULT_REPRESENTATIVES, kind: str = "upper", task=None) -> np.ndarray:
    """At most ``max_size`` points that keep the bound valid.

    Representatives are picked by farthest-point sampling on the first
    component, starting from the best point.  An upper bound keeps only the
    representatives, which can only weaken pruning.  A lower bound assigns
    every point to its nearest representative and replaces each group by its
    component-wise minimum, which can only loosen the bound.  ``values`` are
    in minimization space unless ``task`` is given, in which case they are in
    natural units and the result is too.
    """
    if max_size < 1:
        raise ValueError("max_size must be at least 1")
    W = np.asarray(values, dtype=float)
    if task is not None:
        W = to_min_space(W, task)
    elif W.ndim == 1:
        W = W.reshape(-1, 1)
    if len(W) <= max_size:
        out = W
    else:
        x = W[:, 0]
        chosen = [int(np.argmin(x))]
        dist = np.abs(x - x[chosen[0]])
        while len(chosen) < max_size:
            nxt = int(np.argmax(dist))
            if dist[nxt] == 0:
                break
            chosen.append(nxt)
            dist = np.minimum(dist, np.abs(x - x[nxt]))
        if kind == "upper":
            out = W[sorted(chosen)]
        else:
            reps = x[chosen]
            group = np.argmin(np.abs(x[:, None] - reps[None, :]), axis=1)
            out = np.array([W[group == g].min(axis=0) for g in range(len(chosen))])
    if task is not None:
        out = out * task.sense
    return out


def similarity_applicable(task: OptimizationTask) -> bool:
    return (
        task.has_subtraction
        and task.additive
        and not task.has_constraint
        and task.context_independent
        and task.per_instance_additive
        and task.nonnegative_branches
    )


def similarity_lb(cached_values, cached_indices, current_indices, task: OptimizationTask) -> Optional[np.ndarray]:
    """Lower bound for the current subset derived from a complete front on another subset.

    Any tree's value on the current subset is its value on the cached subset,
    minus what the instances no longer present contributed, plus what the new
    instances contribute.  Removed instances take the per-label worst
    contribution and added instances the per-label best.  Values and the
    result are in minimization space; ``None`` when the task does not qualify.
    """
    if not similarity_applicable(task):
        return None
    old = np.asarray(cached_indices, dtype=np.int64)
    new = np.asarray(current_indices, dtype=np.int64)
    labels = task.dataset.labels
    L = task.label_count
    removed = np.bincount(labels[np.setdiff1d(old, new, assume_unique=True)], minlength=L)
    added = np.bincount(labels[np.setdiff1d(new, old, assume_unique=True)], minlength=L)
    shift = added @ task.best_case_contribution() - removed @ task.worst_case_contribution()
    W = np.asarray(cached_values, dtype=float).reshape(-1, task.arity)
    if len(W) == 0:
        return None
    return W + shift[None, :]


def front_min_space(front: ParetoFront, task: OptimizationTask) -> np.ndarray:
    return front.values * task.sense
