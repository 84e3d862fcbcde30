"""Constraints and context-dependent costs inside the same search.

A fairness tolerance is a hard constraint: every returned tree keeps the
gap in positive-prediction rates between groups within it, and tightening
the tolerance costs accuracy.  Feature costs with a discount group show a
cost that depends on the path: once one test of a group has been paid for,
the others in the group come cheaper.
"""
import numpy as np

from septree import CostSpec, Dataset, FairnessSpec, predict
from septree.solver import SolverConfig, solve
from septree.tasks import AccuracyTask, CostSensitiveTask, FairnessTask, discrimination

rng = np.random.default_rng(11)
m = 400
a = (rng.random(m) < 0.5).astype(float)
X = (rng.random((m, 5)) < 0.5).astype(np.uint8)
X[:, 0] = (rng.random(m) < np.where(a == 1, 0.85, 0.15)).astype(np.uint8)  # a proxy for the group
y = ((X[:, 0] + X[:, 1] + rng.normal(scale=0.5, size=m)) > 1.2).astype(int)
ds = Dataset(X, y, 2, {"a": a})

best = solve(AccuracyTask(ds), config=SolverConfig(2))
tree = best.trees[0]
print(f"unconstrained: {int(best.values[0, 0])} errors, discrimination "
      f"{discrimination(predict(tree, X), a.astype(int), y):.3f}")
for delta in (0.2, 0.05, 0.01):
    task = FairnessTask(ds, FairnessSpec("a", delta))
    front = solve(task, config=SolverConfig(2))
    tree = front.trees[task.select(front)]
    gap = discrimination(predict(tree, X), a.astype(int), y)
    print(f"delta {delta:4.2f}: {int(front.values[task.select(front), 0])} errors, discrimination {gap:.3f}")

print("\nfeature costs: tests 1 and 2 form a group; the second one costs 0.5 after the first")
M = np.array([[0.0, 1.0], [1.0, 0.0]])
spec = CostSpec(M, np.array([3.0, 2.0, 2.0, 3.0, 3.0]) / m, ((1, 2),), np.array([3.0, 0.5, 0.5, 3.0, 3.0]) / m)
front = solve(CostSensitiveTask(ds, spec), config=SolverConfig(2))
print(f"cheapest expected cost per instance {front.values[0, 0] / m:.3f} with tree {front.trees[0].to_dict()}")
