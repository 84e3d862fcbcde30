"""Learning a treatment policy from logged data, then choosing its size.

Each row records the treatment given, the outcome observed and how likely
the logging policy was to give that treatment.  The doubly robust estimate
scores any policy tree from these logs.  Repeated validation then picks the
node budget that generalizes best.
"""
import numpy as np

from septree import Dataset, PolicySpec, predict
from septree.solver import SolverConfig, hypertune_nodes, solve
from septree.tasks import PolicyTask, policy_value

rng = np.random.default_rng(5)
m = 600
X = (rng.random((m, 4)) < 0.5).astype(np.uint8)
best_arm = X[:, 0] ^ X[:, 1]  # the treatment that helps depends on two features
mu = np.full(m, 0.5)
arm = (rng.random(m) < 0.5).astype(int)
outcome = (arm == best_arm) + rng.normal(scale=0.3, size=m)
teacher = {f"v_{k}": (best_arm == k) * 0.8 + rng.normal(scale=0.2, size=m) for k in (0, 1)}
ds = Dataset(X, arm, 2, {"y": outcome, "mu": mu, **teacher})

for method in ("DM", "IPW", "DR"):
    task = PolicyTask(ds, PolicySpec(method))
    front = solve(task, config=SolverConfig(2))
    tree = front.trees[0]
    print(f"{method:3s}: estimated mean value {task.mean_value(front.values[0]):.3f}, "
          f"best treatment chosen for {np.mean(predict(tree, X) == best_arm):.0%} of rows")

task = PolicyTask(ds, PolicySpec("DR"))
budget = hypertune_nodes(task, max_depth=2, seed=0)
front = solve(task, config=SolverConfig(2, budget))
print(f"\ntuned budget {budget}; DR value of the tuned tree {policy_value(front.trees[0], ds, PolicySpec('DR')):.3f}")
