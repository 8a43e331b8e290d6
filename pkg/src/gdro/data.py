"""Stochastic oracles: synthetic instance generation, CSV ingestion with
group partitioning, and i.i.d. with-replacement sampling.

Randomness uses the counter-based Philox generator with explicit stream
keys (key = [seed, stream]) so datasets and trajectories reproduce
bit-exactly across platforms and runs.  Gaussians are drawn via the inverse
CDF applied to uniforms, avoiding rejection-sampling branch divergence.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

SOLVER_STREAM = 0
GROUP_STREAM_BASE = 1


class IngestionError(ValueError):
    """CSV dataset could not be parsed into a valid grouped dataset."""


def make_rng(seed: int, stream: int = SOLVER_STREAM) -> np.random.Generator:
    """Counter-based generator for a (seed, stream) pair."""
    key = np.array([seed & (2**64 - 1), stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def standard_normal_icdf(rng: np.random.Generator, size) -> np.ndarray:
    """Deterministic inverse-CDF Gaussian sampling from a uniform stream."""
    u = rng.random(size)
    # rng.random() lies in [0, 1); keep ndtri away from the endpoints
    return ndtri(np.clip(u, 1e-300, 1.0 - 2.0**-53))


@dataclass
class GroupedDataset:
    """m group point-sets with a common feature dimension."""

    features: list  # list of (N_i, n) arrays
    labels: list    # list of (N_i,) arrays with entries in {-1, +1}
    group_keys: list = field(default_factory=list)
    feature_names: list = field(default_factory=list)

    def __post_init__(self):
        if not self.features:
            raise ValueError("dataset must have at least one group")
        n = self.features[0].shape[1]
        for g, (X, y) in enumerate(zip(self.features, self.labels)):
            if X.shape[0] == 0:
                name = self.group_keys[g] if self.group_keys else g
                raise IngestionError(f"group {name!r} is empty")
            if X.shape[1] != n:
                raise ValueError("inconsistent feature dimension across groups")
            if X.shape[0] != y.shape[0]:
                raise ValueError("feature/label length mismatch")
            if not np.all(np.isin(y, (-1.0, 1.0))):
                raise ValueError("labels must be -1 or +1")

    @property
    def num_groups(self) -> int:
        return len(self.features)

    @property
    def dim(self) -> int:
        return self.features[0].shape[1]

    @property
    def group_sizes(self) -> list:
        return [X.shape[0] for X in self.features]

    @property
    def total_points(self) -> int:
        return sum(self.group_sizes)

    def all_features(self) -> np.ndarray:
        return np.concatenate(self.features, axis=0)

    def fingerprint(self) -> str:
        """Content hash over all features and labels, in group order."""
        h = hashlib.sha256()
        for X, y in zip(self.features, self.labels):
            h.update(np.ascontiguousarray(X, dtype=np.float64).tobytes())
            h.update(np.ascontiguousarray(y, dtype=np.float64).tobytes())
        return h.hexdigest()


def gen_synthetic(m: int, n: int, points_per_group: int, flip_prob: float = 0.1,
                  seed: int = 0) -> GroupedDataset:
    """Per-group linear-classifier data with label noise.

    Group i draws a true classifier uniformly on the unit sphere, then
    points_per_group standard-Gaussian feature vectors labelled by the sign
    of the inner product, flipped independently with probability flip_prob.
    """
    if m < 1 or n < 1 or points_per_group < 1:
        raise ValueError("m, n, points_per_group must be >= 1")
    if not 0 <= flip_prob < 0.5:
        raise ValueError("flip_prob must lie in [0, 0.5)")
    features, labels = [], []
    for i in range(m):
        rng = make_rng(seed, GROUP_STREAM_BASE + i)
        direction = standard_normal_icdf(rng, n)
        direction /= np.linalg.norm(direction)
        X = standard_normal_icdf(rng, (points_per_group, n))
        y = np.where(X @ direction >= 0.0, 1.0, -1.0)
        flips = rng.random(points_per_group) < flip_prob
        y[flips] = -y[flips]
        features.append(X)
        labels.append(y)
    return GroupedDataset(features, labels, group_keys=[f"synthetic_{i}" for i in range(m)])


def _is_numeric_column(values) -> bool:
    try:
        for v in values:
            float(v)
    except ValueError:
        return False
    return True


def _map_labels(raw, rows):
    distinct = sorted(set(raw))
    if set(distinct) <= {"-1", "1", "-1.0", "1.0"}:
        return np.array([float(v) for v in raw])
    if set(distinct) <= {"0", "1", "0.0", "1.0"}:
        return np.array([1.0 if float(v) == 1.0 else -1.0 for v in raw])
    if len(distinct) == 2:
        lo, hi = distinct
        return np.array([1.0 if v == hi else -1.0 for v in raw])
    raise IngestionError(f"label column must be binary, found values {distinct[:5]}")


def load_csv_dataset(path, schema: dict) -> GroupedDataset:
    """Ingest a UTF-8, comma-separated, header-row CSV.

    schema keys: label_column (str), group_columns (list of str),
    feature_columns (list of str).  Rows are partitioned by the cross
    product of group-column values (group order = sorted keys).  Categorical
    feature columns expand to indicators in sorted category order;
    continuous columns are standardized to zero mean and unit variance over
    the whole file.  Labels map to -1/+1.
    """
    label_col = schema["label_column"]
    group_cols = list(schema["group_columns"])
    feat_cols = list(schema["feature_columns"])
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in [label_col] + group_cols + feat_cols if c not in header]
        if missing:
            raise IngestionError(f"missing columns: {missing}")
        rows = list(reader)
    if not rows:
        raise IngestionError("file has no data rows")
    for idx, row in enumerate(rows, start=2):
        for c in [label_col] + group_cols + feat_cols:
            if row[c] is None or row[c] == "":
                raise IngestionError(f"row {idx}: empty value in column {c!r}")

    labels = _map_labels([r[label_col] for r in rows], rows)

    # expand features: continuous columns as-is, categorical to indicators
    blocks, names = [], []
    for c in feat_cols:
        values = [r[c] for r in rows]
        if _is_numeric_column(values):
            col = np.array([float(v) for v in values])
            std = col.std()
            col = (col - col.mean()) / (std if std > 0 else 1.0)
            blocks.append(col[:, None])
            names.append(c)
        else:
            cats = sorted(set(values))
            for cat in cats:
                blocks.append(np.array([1.0 if v == cat else 0.0 for v in values])[:, None])
                names.append(f"{c}={cat}")
    X = np.concatenate(blocks, axis=1)

    keys = [tuple(r[c] for c in group_cols) for r in rows]
    group_order = sorted(set(keys))
    index = {k: i for i, k in enumerate(group_order)}
    feats = [[] for _ in group_order]
    labs = [[] for _ in group_order]
    for row_x, row_y, k in zip(X, labels, keys):
        feats[index[k]].append(row_x)
        labs[index[k]].append(row_y)
    return GroupedDataset(
        [np.array(f) for f in feats],
        [np.array(l) for l in labs],
        group_keys=["|".join(k) for k in group_order],
        feature_names=names,
    )


def oracle_sample(dataset: GroupedDataset, group_index: int, batch_size: int,
                  rng: np.random.Generator):
    """batch_size i.i.d. uniform with-replacement draws from one group."""
    if not 0 <= group_index < dataset.num_groups:
        raise IndexError(f"group index {group_index} out of range")
    N = dataset.group_sizes[group_index]
    idx = rng.integers(0, N, size=batch_size)
    return dataset.features[group_index][idx], dataset.labels[group_index][idx]
