"""Tabular data ingestion, (features, label, group) encoding, splitting, and
group-dependent label corruption.

Labels are signed integers in {+1, -1} everywhere; group attributes are dense
ids 0..m-1 in first-appearance order. Feature matrices always carry a leading
intercept column of ones.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np


class DatasetError(ValueError):
    """Base class for data-contract violations."""


class ParseError(DatasetError):
    """CSV or schema problem; the message names the offending row/column."""


class StratificationError(DatasetError):
    """A (group, label) stratum is too small for the requested partitioning."""


@dataclass(frozen=True)
class Dataset:
    """An immutable (features, labels, groups) triple.

    features: (n, d+1) float array, column 0 identically 1 (intercept).
    labels:   (n,) int array with values in {+1, -1}.
    groups:   (n,) int array with dense ids 0..m-1; every id occurs.
    group_names: display name per dense id.
    """

    features: np.ndarray
    labels: np.ndarray
    groups: np.ndarray
    group_names: tuple[str, ...]

    def __post_init__(self):
        features = np.ascontiguousarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        groups = np.asarray(self.groups, dtype=np.int64)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "group_names", tuple(self.group_names))

        n = features.shape[0]
        if n < 1:
            raise DatasetError("dataset must contain at least one example")
        if features.ndim != 2:
            raise DatasetError("features must be a 2-d matrix")
        if labels.shape != (n,) or groups.shape != (n,):
            raise DatasetError(
                f"length mismatch: {n} feature rows, {labels.shape[0]} labels, "
                f"{groups.shape[0]} group ids"
            )
        if not np.all(np.isin(labels, (-1, 1))):
            raise DatasetError("labels must take values in {+1, -1}")
        m = len(self.group_names)
        if m == 0:
            raise DatasetError("group_names must be nonempty")
        if groups.min() < 0 or groups.max() >= m:
            raise DatasetError(f"group ids must lie in 0..{m - 1}")
        present = np.bincount(groups, minlength=m)
        if np.any(present == 0):
            missing = [self.group_names[g] for g in np.flatnonzero(present == 0)]
            raise DatasetError(f"groups with no examples: {missing}")
        if not np.all(features[:, 0] == 1.0):
            raise DatasetError("feature column 0 must be identically 1 (intercept)")
        for arr in (features, labels, groups):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        """Number of feature columns including the intercept."""
        return self.features.shape[1]

    @property
    def n_groups(self) -> int:
        return len(self.group_names)

    def group_indices(self, g: int) -> np.ndarray:
        return np.flatnonzero(self.groups == g)

    def with_labels(self, labels: np.ndarray) -> "Dataset":
        return Dataset(self.features, labels, self.groups, self.group_names)

    def subset(self, idx: np.ndarray) -> "Dataset":
        """Row subset; requires every group to survive."""
        return Dataset(
            self.features[idx], self.labels[idx], self.groups[idx], self.group_names
        )


@dataclass(frozen=True)
class NoiseSpec:
    """Per-group label flip probabilities.

    eps_plus[z]  = P(observed -1 | true +1, group z)
    eps_minus[z] = P(observed +1 | true -1, group z)
    """

    eps_plus: tuple[float, ...]
    eps_minus: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "eps_plus", tuple(float(e) for e in self.eps_plus))
        object.__setattr__(self, "eps_minus", tuple(float(e) for e in self.eps_minus))
        if len(self.eps_plus) != len(self.eps_minus):
            raise DatasetError("eps_plus and eps_minus must cover the same groups")
        for z, (ep, em) in enumerate(zip(self.eps_plus, self.eps_minus)):
            if not (0.0 <= ep < 1.0 and 0.0 <= em < 1.0):
                raise DatasetError(f"group {z}: noise rates must lie in [0, 1)")
            if ep + em >= 1.0:
                raise DatasetError(
                    f"group {z}: eps_plus + eps_minus = {ep + em} must be < 1"
                )

    @property
    def n_groups(self) -> int:
        return len(self.eps_plus)

    def delta(self, z: int) -> float:
        """Retained signal 1 - eps_plus - eps_minus for group z."""
        return 1.0 - self.eps_plus[z] - self.eps_minus[z]

    @classmethod
    def from_names(
        cls, rates: Mapping[str, Mapping[str, float]], group_names: Sequence[str]
    ) -> "NoiseSpec":
        """Build from a {group name: {eps_plus, eps_minus}} mapping."""
        missing = [g for g in group_names if g not in rates]
        if missing:
            raise DatasetError(f"noise rates missing for groups: {missing}")
        return cls(
            eps_plus=tuple(rates[g]["eps_plus"] for g in group_names),
            eps_minus=tuple(rates[g]["eps_minus"] for g in group_names),
        )


@dataclass(frozen=True)
class SplitConfig:
    test_fraction: float
    validation_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise DatasetError("test_fraction must lie in (0, 1)")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise DatasetError("validation_fraction must lie in [0, 1)")
        if self.test_fraction + self.validation_fraction >= 1.0:
            raise DatasetError("test_fraction + validation_fraction must be < 1")
        if not 0 <= int(self.seed) < 2**64:
            raise DatasetError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class Schema:
    """Column-role map for CSV ingestion."""

    label_column: str
    positive_symbol: str
    group_column: str
    feature_columns: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "feature_columns", tuple(self.feature_columns))
        if not self.feature_columns:
            raise ParseError("schema must name at least one feature column")
        named = [self.label_column, self.group_column, *self.feature_columns]
        if len(set(named)) != len(named):
            raise ParseError(f"schema names a column twice: {named}")


@dataclass(frozen=True)
class Standardization:
    """Per-column shift/scale, identity on the intercept and constant columns."""

    mean: np.ndarray
    scale: np.ndarray

    def apply(self, features: np.ndarray) -> np.ndarray:
        if features.shape[1] != self.mean.shape[0]:
            raise DatasetError(
                f"standardization for {self.mean.shape[0]} columns applied to "
                f"{features.shape[1]}"
            )
        return (features - self.mean) / self.scale


def standardize(
    ds: Dataset, stats: Standardization | None = None
) -> tuple[Dataset, Standardization]:
    """Shift/scale feature columns to zero mean and unit variance.

    With stats=None the statistics are computed from ds itself; pass the
    statistics of a training split to transform validation/test data without
    leakage. The intercept column and constant columns are left untouched.
    """
    if stats is None:
        mean = ds.features.mean(axis=0)
        std = ds.features.std(axis=0)
        keep = std == 0.0
        mean = np.where(keep, 0.0, mean)
        scale = np.where(keep, 1.0, std)
        mean[0], scale[0] = 0.0, 1.0
        stats = Standardization(mean=mean, scale=scale)
    out = stats.apply(ds.features)
    out[:, 0] = 1.0
    return Dataset(out, ds.labels, ds.groups, ds.group_names), stats


def load_dataset(path, schema: Schema, apply_standardization: bool = True) -> Dataset:
    """Read a CSV file (UTF-8, header row, RFC 4180 quoting) into a Dataset.

    The label column must contain exactly the positive symbol and one other
    symbol; groups get dense ids in first-appearance order; an intercept
    column is prepended. Feature columns are standardized unless
    apply_standardization is False (useful when statistics should come from a
    training split instead).
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: file is empty") from None
        rows = list(reader)
    if not rows:
        raise ParseError(f"{path}: no data rows after the header")

    col_index: dict[str, int] = {}
    for j, name in enumerate(header):
        if name in col_index:
            raise ParseError(f"duplicate column {name!r} in header")
        col_index[name] = j
    needed = [schema.label_column, schema.group_column, *schema.feature_columns]
    missing = [c for c in needed if c not in col_index]
    if missing:
        raise ParseError(f"columns named by schema but absent from file: {missing}")

    n = len(rows)
    width = len(header)
    features = np.ones((n, len(schema.feature_columns) + 1))
    raw_labels: list[str] = []
    raw_groups: list[str] = []
    for i, row in enumerate(rows):
        rownum = i + 1
        if len(row) != width:
            raise ParseError(
                f"row {rownum}: expected {width} fields, found {len(row)}"
            )
        raw_labels.append(row[col_index[schema.label_column]])
        raw_groups.append(row[col_index[schema.group_column]])
        for k, col in enumerate(schema.feature_columns):
            cell = row[col_index[col]]
            try:
                features[i, k + 1] = float(cell)
            except ValueError:
                raise ParseError(
                    f"row {rownum}, column {col!r}: non-numeric value {cell!r}"
                ) from None

    symbols = sorted(set(raw_labels))
    if len(symbols) > 2:
        raise ParseError(
            f"column {schema.label_column!r}: more than two label symbols {symbols}"
        )
    if len(symbols) == 2 and schema.positive_symbol not in symbols:
        raise ParseError(
            f"column {schema.label_column!r}: positive symbol "
            f"{schema.positive_symbol!r} not among observed symbols {symbols}"
        )
    labels = np.where(
        np.array(raw_labels) == schema.positive_symbol, 1, -1
    ).astype(np.int64)

    group_names: list[str] = []
    seen: dict[str, int] = {}
    groups = np.empty(n, dtype=np.int64)
    for i, g in enumerate(raw_groups):
        if g not in seen:
            seen[g] = len(group_names)
            group_names.append(g)
        groups[i] = seen[g]

    ds = Dataset(features, labels, groups, tuple(group_names))
    if apply_standardization:
        ds, _ = standardize(ds)
    return ds


def parse_data_config(doc: Mapping) -> tuple[Schema, Mapping[str, Mapping[str, float]]]:
    """Split one JSON config document into a Schema and a noise-rate mapping.

    Documented keys: label_column, positive_symbol, group_column,
    feature_columns, noise: {group_name: {eps_plus, eps_minus}}.
    """
    try:
        schema = Schema(
            label_column=doc["label_column"],
            positive_symbol=str(doc["positive_symbol"]),
            group_column=doc["group_column"],
            feature_columns=tuple(doc["feature_columns"]),
        )
    except KeyError as exc:
        raise ParseError(f"config key missing: {exc.args[0]!r}") from None
    return schema, doc.get("noise", {})


def load_data_config(path) -> tuple[Schema, Mapping[str, Mapping[str, float]]]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_data_config(json.load(fh))


def split(ds: Dataset, cfg: SplitConfig) -> tuple[Dataset, Dataset | None, Dataset]:
    """Partition into (train, validation, test), stratified by (group, label).

    Each stratum is split so its proportions are preserved to within one
    example; the partition is deterministic in cfg.seed; validation is None
    when validation_fraction is 0. Row order within each part follows the
    input order.
    """
    want_val = cfg.validation_fraction > 0.0
    parts_requested = 3 if want_val else 2
    rng = np.random.Generator(np.random.PCG64(cfg.seed))

    train_idx: list[np.ndarray] = []
    val_idx: list[np.ndarray] = []
    test_idx: list[np.ndarray] = []
    for g in range(ds.n_groups):
        for y in (1, -1):
            stratum = np.flatnonzero((ds.groups == g) & (ds.labels == y))
            n_s = stratum.size
            if n_s == 0:
                continue
            if n_s < parts_requested:
                raise StratificationError(
                    f"stratum (group={ds.group_names[g]!r}, label={y:+d}) has "
                    f"{n_s} examples, fewer than the {parts_requested} "
                    "partitions requested"
                )
            n_test = int(np.floor(cfg.test_fraction * n_s + 0.5))
            n_valp = int(np.floor(cfg.validation_fraction * n_s + 0.5))
            if n_s - n_test - n_valp == 0:
                if n_valp > 0:
                    n_valp -= 1
                else:
                    n_test -= 1
            order = rng.permutation(n_s)
            shuffled = stratum[order]
            test_idx.append(shuffled[:n_test])
            val_idx.append(shuffled[n_test : n_test + n_valp])
            train_idx.append(shuffled[n_test + n_valp :])

    def gather(chunks):
        idx = np.sort(np.concatenate(chunks)) if chunks else np.array([], dtype=int)
        return idx

    tr = ds.subset(gather(train_idx))
    te = ds.subset(gather(test_idx))
    va_indices = gather(val_idx)
    va = ds.subset(va_indices) if want_val and va_indices.size else None
    return tr, va, te


def concat(parts: Sequence[Dataset]) -> Dataset:
    """Stack datasets sharing the same schema; inverse of split up to row order."""
    parts = [p for p in parts if p is not None]
    if not parts:
        raise DatasetError("nothing to concatenate")
    names = parts[0].group_names
    if any(p.group_names != names for p in parts):
        raise DatasetError("group name tables differ between parts")
    return Dataset(
        np.concatenate([p.features for p in parts]),
        np.concatenate([p.labels for p in parts]),
        np.concatenate([p.groups for p in parts]),
        names,
    )


def inject_noise(ds: Dataset, spec: NoiseSpec, seed: int) -> Dataset:
    """Flip each label independently with its group- and class-specific rate.

    Uses a Philox counter stream indexed by example position: example i's
    uniform draw depends only on (seed, i), so changing one group's rates
    never reshuffles another group's flips.
    """
    if spec.n_groups < ds.n_groups:
        raise DatasetError(
            f"noise spec covers {spec.n_groups} groups, dataset has {ds.n_groups}"
        )
    u = np.random.Generator(np.random.Philox(key=seed)).random(ds.n)
    eps_plus = np.asarray(spec.eps_plus)[ds.groups]
    eps_minus = np.asarray(spec.eps_minus)[ds.groups]
    threshold = np.where(ds.labels == 1, eps_plus, eps_minus)
    flipped = np.where(u < threshold, -ds.labels, ds.labels)
    return ds.with_labels(flipped)


@dataclass(frozen=True)
class FlipRates:
    """Exact per-group flip counts between a clean and a noisy label vector."""

    pos_total: np.ndarray
    pos_flipped: np.ndarray
    neg_total: np.ndarray
    neg_flipped: np.ndarray
    group_names: tuple[str, ...] = field(default=())

    @property
    def eps_plus(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return self.pos_flipped / self.pos_total

    @property
    def eps_minus(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return self.neg_flipped / self.neg_total


def empirical_flip_rates(clean: Dataset, noisy: Dataset) -> FlipRates:
    """Count the observed flips per group and true-label class."""
    if clean.n != noisy.n or not np.array_equal(clean.groups, noisy.groups):
        raise DatasetError("clean and noisy datasets must align row by row")
    if not np.array_equal(clean.features, noisy.features):
        raise DatasetError("clean and noisy datasets must share features")
    m = clean.n_groups
    pos = clean.labels == 1
    flip = clean.labels != noisy.labels
    pos_total = np.bincount(clean.groups[pos], minlength=m).astype(float)
    neg_total = np.bincount(clean.groups[~pos], minlength=m).astype(float)
    pos_flipped = np.bincount(clean.groups[pos & flip], minlength=m).astype(float)
    neg_flipped = np.bincount(clean.groups[~pos & flip], minlength=m).astype(float)
    return FlipRates(
        pos_total, pos_flipped, neg_total, neg_flipped, clean.group_names
    )
