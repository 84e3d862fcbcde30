"""Command-line front end: ``solve``, ``evaluate``, ``tune`` and ``oracle``.

Exit codes: 0 optimal, 2 stopped on the time limit with an incumbent, 3
infeasible, 1 error.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .core import ContractError, Dataset, Tree, predict, render_tree, tree_cost, tree_from_dict
from .dataio import ingest, train_test_split
from .oracle import brute_force_front
from .solver import Solver, SolverConfig, hypertune_nodes
from .tasks import (
    CostSpec,
    FairnessSpec,
    PolicySpec,
    UndefinedF1Error,
    accuracy_task,
    cost_sensitive_task,
    discrimination,
    f1_score,
    f1_task,
    fairness_task,
    misclassification_from_frequencies,
    normalized_cost,
    policy_task,
    policy_value,
    sensitive_groups,
)

TASKS = ("accuracy", "cost-sensitive", "policy", "f1", "fairness")
EXIT_OPTIMAL, EXIT_ERROR, EXIT_TIMEOUT, EXIT_INFEASIBLE = 0, 1, 2, 3


@dataclass
class RunConfig:
    """Everything a run needs; loadable from a JSON document.

    ``params`` holds the task parameters: for ``cost-sensitive`` the keys
    ``feature_costs`` (list, or mapping from feature name), ``misclassification``
    (matrix) or ``level`` (low/middle/high), ``groups`` and
    ``discounted_costs``; for ``policy`` the fields of :class:`PolicySpec`;
    for ``fairness`` the fields of :class:`FairnessSpec`.
    """

    data: str = ""
    task: str = "accuracy"
    params: dict = field(default_factory=dict)
    label: str = "label"
    aux: list = field(default_factory=list)
    continuous: dict = field(default_factory=dict)
    features: Optional[list] = None
    delimiter: str = ","
    max_depth: int = 2
    max_nodes: Union[int, str, None] = None
    seed: int = 0
    time_limit: float = 0.0
    use_cache: bool = True
    use_bounds: bool = True
    use_depth2: bool = True
    min_leaf_support: int = 0
    test_fraction: float = 0.0
    output: Optional[str] = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ContractError(f"task must be one of {TASKS}")
        if isinstance(self.max_nodes, str) and self.max_nodes != "tune":
            self.max_nodes = int(self.max_nodes)

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ContractError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**obj)

    def needed_aux(self) -> list:
        cols = list(self.aux)
        p = self.params
        if self.task == "policy":
            spec = PolicySpec(**p)
            cols += [spec.outcome, spec.propensity]
        if self.task == "fairness" and isinstance(p.get("sensitive", "a"), str):
            cols.append(p.get("sensitive", "a"))
        return list(dict.fromkeys(cols))


# ---------------------------------------------------------------------------
# Task construction and metrics
# ---------------------------------------------------------------------------


def load_dataset(cfg: RunConfig) -> Dataset:
    aux = cfg.needed_aux()
    if cfg.task == "policy":
        prefix = PolicySpec(**cfg.params).teacher_prefix
        with open(cfg.data, encoding="utf-8") as fh:
            header = [h.strip() for h in fh.readline().split(cfg.delimiter)]
        aux += [h for h in header if h.startswith(prefix) and h not in aux]
    return ingest(cfg.data, cfg.label, aux, cfg.continuous, cfg.features, cfg.delimiter)


def cost_spec(cfg: RunConfig, ds: Dataset) -> CostSpec:
    p = dict(cfg.params)
    names = list(ds.feature_names or range(ds.n_features))

    def per_feature(v, default):
        if v is None:
            return np.full(ds.n_features, default, dtype=float)
        if isinstance(v, dict):
            out = np.full(ds.n_features, default, dtype=float)
            for k, c in v.items():
                if k not in names:
                    raise ContractError(f"cost given for unknown feature {k!r}")
                out[names.index(k)] = c
            return out
        return np.asarray(v, dtype=float)

    costs = per_feature(p.get("feature_costs"), 1.0)
    if "misclassification" in p:
        M = np.asarray(p["misclassification"], dtype=float)
    else:
        M = misclassification_from_frequencies(ds, costs, p.get("level", "low"))
    groups = [tuple(names.index(g) if isinstance(g, str) else int(g) for g in grp) for grp in p.get("groups", [])]
    disc = p.get("discounted_costs")
    return CostSpec(M, costs, tuple(groups), None if disc is None else per_feature(disc, 0.0))


def build_task(cfg: RunConfig, ds: Dataset, spec=None):
    if cfg.task == "accuracy":
        return accuracy_task(ds)
    if cfg.task == "cost-sensitive":
        return cost_sensitive_task(ds, spec if spec is not None else cost_spec(cfg, ds))
    if cfg.task == "policy":
        return policy_task(ds, PolicySpec(**cfg.params))
    if cfg.task == "f1":
        return f1_task(ds)
    return fairness_task(ds, FairnessSpec(**cfg.params))


def metrics(tree: Tree, ds: Dataset, cfg: RunConfig, spec=None) -> dict:
    """Derived metrics of ``tree`` on ``ds``, computed from the tree and data alone."""
    pred = predict(tree, ds.features)
    out = {"instances": int(ds.n_instances), "accuracy": float(np.mean(pred == ds.labels)) if ds.n_instances else None}
    if cfg.task == "cost-sensitive":
        task = cost_sensitive_task(ds, spec if spec is not None else cost_spec(cfg, ds))
        total = float(tree_cost(tree, task.initial_state(), task)[0])
        per_instance = total / max(ds.n_instances, 1)
        out["cost"] = total
        out["cost_per_instance"] = per_instance
        out["normalized_cost"] = normalized_cost(per_instance, ds, task.spec)
    elif cfg.task == "policy":
        out["policy_value"] = policy_value(tree, ds, PolicySpec(**cfg.params))
    elif cfg.task == "f1":
        fp = int(np.sum((pred == 1) & (ds.labels != 1)))
        fn = int(np.sum((pred != 1) & (ds.labels == 1)))
        out.update(false_positives=fp, false_negatives=fn)
        try:
            out["f1"] = f1_score(fp, fn, int(np.sum(ds.labels == 1)))
        except UndefinedF1Error:
            out["f1"] = None
    elif cfg.task == "fairness":
        spec = FairnessSpec(**cfg.params)
        groups = sensitive_groups(ds, spec.sensitive)
        out["discrimination"] = discrimination(pred, groups, ds.labels, spec.mode)
    return out


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


def _jsonable(v):
    return [float(x) if not float(x).is_integer() else int(x) for x in np.asarray(v).reshape(-1)]


def run(cfg: RunConfig) -> dict:
    """Solve as configured and return the report as a JSON-ready dict."""
    start = time.perf_counter()
    ds = load_dataset(cfg)
    train, test = train_test_split(ds, cfg.test_fraction, cfg.seed)
    spec = cost_spec(cfg, train) if cfg.task == "cost-sensitive" else None
    task = build_task(cfg, train, spec)
    tuned = cfg.max_nodes == "tune"
    solver_cfg = SolverConfig(
        cfg.max_depth, None, cfg.use_cache, cfg.use_bounds, cfg.use_depth2, cfg.time_limit, cfg.min_leaf_support
    )
    if tuned:
        budget = hypertune_nodes(task, train, cfg.max_depth, cfg.seed, config=solver_cfg)
    else:
        budget = cfg.max_nodes
    solver_cfg.max_nodes = budget
    solver = Solver(task, solver_cfg)
    front = solver.solve()
    if not front.optimal:
        status = "timeout-incumbent"
    elif len(front) == 0:
        status = "infeasible"
    else:
        status = "optimal"
    selected = task.select(front) if len(front) else None
    entries = []
    for i, (value, tree) in enumerate(front):
        entry = {
            "value": _jsonable(value),
            "nodes": tree.nodes,
            "depth": tree.depth,
            "selected": i == selected,
            "tree": tree.to_dict(),
            "metrics": {"train": metrics(tree, train, cfg, spec)},
        }
        if cfg.task == "policy":
            entry["policy_value_estimate"] = task.mean_value(value)
        if test is not None:
            entry["metrics"]["test"] = metrics(tree, test, cfg, spec)
        entries.append(entry)
    report = {
        "status": status,
        "task": cfg.task,
        "config": asdict(cfg),
        "max_depth": cfg.max_depth,
        "max_nodes": solver_cfg.normalized()[1],
        "tuned": tuned,
        "train_instances": train.n_instances,
        "test_instances": 0 if test is None else test.n_instances,
        "selected": selected,
        "front": entries,
        "solver": solver.stats.as_dict(),
        "wall_time": time.perf_counter() - start,
    }
    if cfg.task == "cost-sensitive":
        report["cost_spec"] = {
            "misclassification": spec.misclassification.tolist(),
            "feature_costs": spec.feature_costs.tolist(),
            "groups": [list(g) for g in spec.groups],
            "discounted_costs": spec.discounted_costs.tolist(),
        }
    report["rendering"] = render_tree(front.trees[selected], train.feature_names) if selected is not None else ""
    return report


def evaluate(tree: Union[Tree, dict], cfg: RunConfig, ds: Optional[Dataset] = None) -> dict:
    """Metrics of a serialized tree on the configured dataset."""
    if isinstance(tree, dict):
        tree = tree_from_dict(tree)
    ds = ds if ds is not None else load_dataset(cfg)
    spec = None
    if cfg.task == "cost-sensitive":
        spec = cost_spec(cfg, ds)
    return metrics(tree, ds, cfg, spec)


def exit_code(status: str) -> int:
    return {"optimal": EXIT_OPTIMAL, "timeout-incumbent": EXIT_TIMEOUT, "infeasible": EXIT_INFEASIBLE}.get(status, EXIT_ERROR)


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="septree", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON run configuration; flags override its fields")
        sp.add_argument("--data", help="delimited text file with a header row")
        sp.add_argument("--task", choices=TASKS)
        sp.add_argument("--label")
        sp.add_argument("--aux", nargs="*", help="auxiliary numeric columns")
        sp.add_argument("--continuous", nargs="*", metavar="COL:BINS", help="bin a continuous column")
        sp.add_argument("--delimiter")
        sp.add_argument("--depth", type=int, dest="max_depth")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--params", help="task parameters as a JSON object")
        sp.add_argument("--delta", type=float, help="fairness tolerance")
        sp.add_argument("--sensitive", help="sensitive column for fairness")
        sp.add_argument("--mode", choices=("demographic-parity", "equality-of-opportunity"))
        sp.add_argument("--method", choices=("DM", "IPW", "DR"), help="policy estimator")

    s = sub.add_parser("solve", help="solve and write a report")
    common(s)
    s.add_argument("--nodes", dest="max_nodes", help="branching-node budget or 'tune'")
    s.add_argument("--time-limit", type=float, dest="time_limit")
    s.add_argument("--no-cache", action="store_false", dest="use_cache", default=None)
    s.add_argument("--no-bounds", action="store_false", dest="use_bounds", default=None)
    s.add_argument("--no-depth2", action="store_false", dest="use_depth2", default=None)
    s.add_argument("--min-leaf-support", type=int, dest="min_leaf_support")
    s.add_argument("--test-fraction", type=float, dest="test_fraction")
    s.add_argument("--output", "-o", help="report path; the tree rendering goes next to it with .txt")

    e = sub.add_parser("evaluate", help="metrics of a saved tree on a dataset")
    common(e)
    e.add_argument("--tree", required=True, help="tree JSON, or a report whose selected tree is used")

    t = sub.add_parser("tune", help="pick a node budget by repeated validation")
    common(t)

    o = sub.add_parser("oracle", help="brute-force front on a small dataset")
    common(o)
    o.add_argument("--nodes", dest="max_nodes", type=int)
    return p


def config_from_args(args) -> RunConfig:
    base = {}
    if args.config:
        base = json.loads(Path(args.config).read_text(encoding="utf-8"))
    simple = ["data", "task", "label", "aux", "delimiter", "max_depth", "seed", "max_nodes", "time_limit",
              "use_cache", "use_bounds", "use_depth2", "min_leaf_support", "test_fraction", "output"]
    for name in simple:
        v = getattr(args, name, None)
        if v is not None:
            base[name] = v
    if getattr(args, "continuous", None):
        cont = dict(base.get("continuous", {}))
        for item in args.continuous:
            col, _, bins = item.rpartition(":")
            if not col:
                raise ContractError(f"--continuous expects COL:BINS, got {item!r}")
            cont[col] = int(bins)
        base["continuous"] = cont
    params = dict(base.get("params", {}))
    if args.params:
        params.update(json.loads(args.params))
    for flag in ("delta", "sensitive", "mode", "method"):
        v = getattr(args, flag, None)
        if v is not None:
            params[flag] = v
    base["params"] = params
    cfg = RunConfig.from_dict(base)
    if not cfg.data:
        raise ContractError("no dataset given (--data or 'data' in the config)")
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        if args.verb == "solve":
            report = run(cfg)
            text = json.dumps(report, indent=2)
            if cfg.output:
                Path(cfg.output).write_text(text + "\n", encoding="utf-8")
                Path(cfg.output).with_suffix(".txt").write_text(report["rendering"], encoding="utf-8")
                print(f"status: {report['status']}, front size {len(report['front'])}, report written to {cfg.output}")
                print(report["rendering"], end="")
            else:
                print(text)
            return exit_code(report["status"])
        if args.verb == "evaluate":
            obj = json.loads(Path(args.tree).read_text(encoding="utf-8"))
            if "front" in obj:
                if obj.get("selected") is None:
                    raise ContractError("report has no selected tree")
                obj = obj["front"][obj["selected"]]["tree"]
            print(json.dumps(evaluate(obj, cfg), indent=2))
            return EXIT_OPTIMAL
        ds = load_dataset(cfg)
        if args.verb == "tune":
            task = build_task(cfg, ds)
            budget = hypertune_nodes(task, ds, cfg.max_depth, cfg.seed)
            print(json.dumps({"max_depth": cfg.max_depth, "max_nodes": budget}))
            return EXIT_OPTIMAL
        task = build_task(cfg, ds)
        n = cfg.max_nodes if isinstance(cfg.max_nodes, int) else None
        front = brute_force_front(task, cfg.max_depth, n, min_leaf_support=cfg.min_leaf_support)
        print(json.dumps({"front": [{"value": _jsonable(v), "tree": t.to_dict()} for v, t in front]}, indent=2))
        return EXIT_OPTIMAL if len(front) else EXIT_INFEASIBLE
    except (ContractError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
