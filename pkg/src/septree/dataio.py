"""Reading delimited text into a :class:`Dataset`, threshold binning and seeded splits."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import ContractError, Dataset


class IngestError(ContractError):
    pass


def equal_frequency_thresholds(values: np.ndarray, bins: int) -> np.ndarray:
    """The ``bins - 1`` empirical quantiles splitting ``values`` into equally populated bins."""
    if bins < 2:
        raise IngestError("binning needs at least two bins")
    return np.quantile(np.asarray(values, dtype=float), np.arange(1, bins) / bins)


def binarize(values: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """One column per threshold, 1 where the value exceeds it."""
    return (np.asarray(values, dtype=float)[:, None] > np.asarray(thresholds)[None, :]).astype(np.uint8)


def ingest(
    path,
    label: str = "label",
    aux: Sequence[str] = (),
    continuous: Optional[Mapping[str, int]] = None,
    features: Optional[Sequence[str]] = None,
    delimiter: str = ",",
    label_count: Optional[int] = None,
) -> Dataset:
    """Load a header-first delimited file.

    Feature columns hold only ``0``/``1``; columns listed in ``continuous``
    are split into equal-frequency bins, ``b`` bins giving ``b - 1`` threshold
    features.  ``aux`` columns are parsed as floats.  Unless ``features`` is
    given, every column that is not the label or auxiliary is a feature.
    """
    path = Path(path)
    if not path.exists():
        raise IngestError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh, delimiter=delimiter))
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if len(rows) < 2:
        raise IngestError(f"{path}: no header or no data rows")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    for i, r in enumerate(body):
        if len(r) != len(header):
            raise IngestError(f"{path}: row {i + 1} has {len(r)} fields, header has {len(header)}")
    col = {name: j for j, name in enumerate(header)}
    continuous = dict(continuous or {})
    aux = list(aux)
    for name in [label, *aux, *continuous]:
        if name not in col:
            raise IngestError(f"{path}: declared column {name!r} is missing")
    if features is None:
        skip = {label, *aux}
        features = [h for h in header if h not in skip]
    else:
        for name in features:
            if name not in col:
                raise IngestError(f"{path}: declared column {name!r} is missing")

    def numbers(name, kind):
        j = col[name]
        out = np.empty(len(body))
        for i, r in enumerate(body):
            cell = r[j].strip()
            try:
                out[i] = float(cell)
            except ValueError:
                raise IngestError(f"{path}: row {i + 1}, column {name!r}: {cell!r} is not {kind}") from None
            if not np.isfinite(out[i]):
                raise IngestError(f"{path}: row {i + 1}, column {name!r}: missing or non-finite value")
        return out

    blocks, names = [], []
    for name in features:
        if name in continuous:
            v = numbers(name, "a number")
            t = equal_frequency_thresholds(v, int(continuous[name]))
            blocks.append(binarize(v, t))
            names.extend(f"{name}>{x:.6g}" for x in t)
            continue
        j = col[name]
        c = np.empty(len(body), dtype=np.uint8)
        for i, r in enumerate(body):
            cell = r[j].strip()
            if cell not in ("0", "1"):
                raise IngestError(f"{path}: row {i + 1}, column {name!r}: feature value {cell!r} is not 0 or 1")
            c[i] = cell == "1"
        blocks.append(c[:, None])
        names.append(name)
    X = np.hstack(blocks) if blocks else np.empty((len(body), 0), dtype=np.uint8)
    y = numbers(label, "an integer label")
    if not np.all(y == np.round(y)) or np.any(y < 0):
        raise IngestError(f"{path}: labels must be non-negative integers")
    extra = {name: numbers(name, "a number") for name in aux}
    return Dataset(X, y.astype(np.int64), label_count, extra, tuple(names))


def train_test_split(dataset: Dataset, test_fraction: float, seed: int) -> tuple:
    """Seeded uniform split without stratification; returns ``(train, test or None)``.

    The permutation comes from ``numpy.random.default_rng(seed)`` (PCG64).
    """
    if not 0 <= test_fraction < 1:
        raise ContractError("test_fraction must lie in [0, 1)")
    if test_fraction == 0:
        return dataset, None
    rng = np.random.default_rng(seed)
    perm = rng.permutation(dataset.n_instances)
    n_test = int(round(test_fraction * dataset.n_instances))
    return dataset.subset(np.sort(perm[n_test:])), dataset.subset(np.sort(perm[:n_test]))
