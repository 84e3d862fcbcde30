"""XOR is the smallest problem a greedy tree learner gets wrong.

No single split separates the classes, so a learner scoring one split at a
time sees no gain anywhere.  The solver searches whole trees and finds the
three-node tree that classifies every row, and no smaller tree can.
"""
import numpy as np

from septree import Dataset, render_tree
from septree.solver import SolverConfig, solve
from septree.tasks import AccuracyTask

xor = Dataset(np.array([[0, 0], [0, 1], [1, 0], [1, 1]]), np.array([0, 1, 1, 0]), feature_names=("x1", "x2"))
task = AccuracyTask(xor)

for depth in (0, 1, 2):
    front = solve(task, config=SolverConfig(depth))
    (value,), tree = front.values[0], front.trees[0]
    print(f"depth {depth}: {int(value)} misclassified with {tree.nodes} branching nodes")

print("\nnode budgets at depth two:")
for nodes in range(4):
    front = solve(task, config=SolverConfig(2, nodes))
    print(f"  at most {nodes} nodes -> {int(front.values[0, 0])} misclassified")

print("\nthe optimal tree:")
print(render_tree(solve(task, config=SolverConfig(2)).trees[0], xor.feature_names), end="")
