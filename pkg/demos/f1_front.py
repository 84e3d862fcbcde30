"""F1 is not additive over leaves, but its two ingredients are.

The solver keeps the Pareto front of (false positives, false negatives)
pairs; every tree maximizing F1 lies on that front, so the best F1 is read
off the front after the search.  The front also shows the whole trade-off.
"""
import numpy as np

from septree import Dataset
from septree.solver import SolverConfig, solve
from septree.tasks import F1Task, f1_from_front, f1_score

rng = np.random.default_rng(3)
X = (rng.random((500, 6)) < 0.5).astype(np.uint8)
y = ((X[:, 0] & X[:, 1]) | (X[:, 2] & (rng.random(500) < 0.6))).astype(int)
ds = Dataset(X, y, 2)
positives = int(y.sum())

front = solve(F1Task(ds), config=SolverConfig(3))
print(f"{len(front)} trees on the front ({positives} positives):")
for (fp, fn), tree in front:
    print(f"  FP {int(fp):3d}  FN {int(fn):3d}  F1 {f1_score(fp, fn, positives):.3f}  nodes {tree.nodes}")

score, tree = f1_from_front(front, positives)
print(f"\nbest F1 {score:.3f} with {tree.nodes} branching nodes")
