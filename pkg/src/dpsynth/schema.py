"""Data domain: typed columns, one-hot relaxation, encoding and rounding.

A dataset has an ordered list of columns, each either categorical (with a
fixed category list) or numerical (with public bounds). Discrete data stores
category codes and raw numerical values; relaxed data stores per-row
probability vectors over each categorical one-hot block plus numerical values
normalized to [0, 1].
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ParameterError

CATEGORICAL = "categorical"
NUMERICAL = "numerical"

# Tolerance for simplex-block feasibility checks.
SIMPLEX_ATOL = 1e-9


@dataclass(frozen=True)
class ColumnSpec:
    """One column: categorical with a category list, or numerical with bounds."""

    name: str
    kind: str
    categories: tuple[str, ...] = ()
    lower: float = 0.0
    upper: float = 1.0
    is_label: bool = False

    def __post_init__(self):
        if self.kind not in (CATEGORICAL, NUMERICAL):
            raise ParameterError(f"unknown column kind {self.kind!r}")
        if self.kind == CATEGORICAL:
            if not self.categories:
                raise ParameterError(f"column {self.name!r}: empty category list")
            if len(set(self.categories)) != len(self.categories):
                raise ParameterError(f"column {self.name!r}: duplicate categories")
        else:
            if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
                raise ParameterError(f"column {self.name!r}: bounds must be finite")
            if not self.lower < self.upper:
                raise ParameterError(f"column {self.name!r}: lower must be < upper")
            if self.is_label:
                raise ParameterError(f"column {self.name!r}: label columns must be categorical")

    @property
    def arity(self) -> int:
        return len(self.categories)


@dataclass(frozen=True)
class Schema:
    """Ordered column declarations plus the derived one-hot layout."""

    columns: tuple[ColumnSpec, ...]
    # Derived fields, populated in __post_init__.
    cat_indices: tuple[int, ...] = field(init=False)
    num_indices: tuple[int, ...] = field(init=False)
    label_indices: tuple[int, ...] = field(init=False)
    one_hot_width: int = field(init=False)
    one_hot_offsets: dict = field(init=False, repr=False)

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ParameterError("duplicate column names")
        cat = tuple(i for i, c in enumerate(self.columns) if c.kind == CATEGORICAL)
        num = tuple(i for i, c in enumerate(self.columns) if c.kind == NUMERICAL)
        lab = tuple(i for i, c in enumerate(self.columns) if c.is_label)
        offsets = {}
        start = 0
        for i in cat:
            offsets[i] = start
            start += self.columns[i].arity
        object.__setattr__(self, "cat_indices", cat)
        object.__setattr__(self, "num_indices", num)
        object.__setattr__(self, "label_indices", lab)
        object.__setattr__(self, "one_hot_width", start)
        object.__setattr__(self, "one_hot_offsets", offsets)

    # -- index helpers ----------------------------------------------------

    def cat_position(self, col: int) -> int:
        """Position of schema column `col` within the categorical code matrix."""
        return self.cat_indices.index(col)

    def num_position(self, col: int) -> int:
        """Position of schema column `col` within the numerical value matrix."""
        return self.num_indices.index(col)

    def one_hot_index(self, col: int, value: int) -> int:
        """Flat index of (column, category) in the one-hot vector."""
        spec = self.columns[col]
        if not 0 <= value < spec.arity:
            raise ParameterError(f"category index {value} out of range for {spec.name!r}")
        return self.one_hot_offsets[col] + value

    def block_slice(self, col: int) -> slice:
        off = self.one_hot_offsets[col]
        return slice(off, off + self.columns[col].arity)

    # -- numerical scaling ------------------------------------------------

    def normalize_numeric(self, col: int, raw):
        """Min-max scale a raw value of numerical column `col` into [0, 1]."""
        spec = self.columns[col]
        if spec.kind != NUMERICAL:
            raise ParameterError(f"column {spec.name!r} is not numerical")
        return np.clip((np.asarray(raw, dtype=float) - spec.lower) / (spec.upper - spec.lower), 0.0, 1.0)

    def denormalize_numeric(self, col: int, scaled):
        spec = self.columns[col]
        if spec.kind != NUMERICAL:
            raise ParameterError(f"column {spec.name!r} is not numerical")
        return spec.lower + np.asarray(scaled, dtype=float) * (spec.upper - spec.lower)

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        cols = []
        for c in self.columns:
            d: dict = {"name": c.name, "kind": c.kind, "is_label": c.is_label}
            if c.kind == CATEGORICAL:
                d["categories"] = list(c.categories)
            else:
                d["lower"] = c.lower
                d["upper"] = c.upper
            cols.append(d)
        return {"columns": cols}

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        cols = []
        for cd in d["columns"]:
            cols.append(
                ColumnSpec(
                    name=cd["name"],
                    kind=cd["kind"],
                    categories=tuple(cd.get("categories", ())),
                    lower=float(cd.get("lower", 0.0)),
                    upper=float(cd.get("upper", 1.0)),
                    is_label=bool(cd.get("is_label", False)),
                )
            )
        return cls(columns=tuple(cols))

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "Schema":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class DiscreteDataset:
    """Concrete tabular rows: category codes plus raw numerical values."""

    schema: Schema
    cat: np.ndarray  # (n, |C|) int codes, column order = schema.cat_indices
    num: np.ndarray  # (n, |R|) raw floats, column order = schema.num_indices
    clamp_warnings: int = 0

    @property
    def n(self) -> int:
        return self.cat.shape[0]

    def normalized_num(self) -> np.ndarray:
        """Numerical values min-max scaled to [0, 1], one column per R index."""
        out = np.empty_like(self.num, dtype=float)
        for j, col in enumerate(self.schema.num_indices):
            out[:, j] = self.schema.normalize_numeric(col, self.num[:, j])
        return out

    @classmethod
    def from_csv(cls, path, schema: Schema) -> "DiscreteDataset":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: empty file")
            expected = [c.name for c in schema.columns]
            if header != expected:
                raise DataError(f"{path}: header {header} does not match schema columns {expected}")
            raw_rows = [row for row in reader]
        for i, row in enumerate(raw_rows):
            if len(row) != len(expected):
                raise DataError(f"{path}: row {i + 2} has {len(row)} fields, expected {len(expected)}")
        n = len(raw_rows)
        cat = np.zeros((n, len(schema.cat_indices)), dtype=np.int64)
        num = np.zeros((n, len(schema.num_indices)), dtype=float)
        clamp_warnings = 0
        cat_maps = {
            col: {lab: k for k, lab in enumerate(schema.columns[col].categories)}
            for col in schema.cat_indices
        }
        for i, row in enumerate(raw_rows):
            for jc, col in enumerate(schema.cat_indices):
                cell = row[col]
                try:
                    cat[i, jc] = cat_maps[col][cell]
                except KeyError:
                    raise DataError(
                        f"{path}: row {i + 2}: unknown category {cell!r} "
                        f"for column {schema.columns[col].name!r}"
                    )
            for jr, col in enumerate(schema.num_indices):
                try:
                    v = float(row[col])
                except ValueError:
                    raise DataError(f"{path}: row {i + 2}: non-numeric value {row[col]!r}")
                spec = schema.columns[col]
                if v < spec.lower or v > spec.upper:
                    clamp_warnings += 1
                    v = min(max(v, spec.lower), spec.upper)
                num[i, jr] = v
        return cls(schema=schema, cat=cat, num=num, clamp_warnings=clamp_warnings)

    def to_csv(self, path) -> None:
        schema = self.schema
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([c.name for c in schema.columns])
            for i in range(self.n):
                row = []
                for col, spec in enumerate(schema.columns):
                    if spec.kind == CATEGORICAL:
                        row.append(spec.categories[self.cat[i, schema.cat_position(col)]])
                    else:
                        row.append(repr(float(self.num[i, schema.num_position(col)])))
                writer.writerow(row)


@dataclass
class RelaxedDataset:
    """Continuous surrogate: simplex blocks per categorical column, [0,1] numericals."""

    schema: Schema
    cat: np.ndarray  # (n_hat, one_hot_width)
    num: np.ndarray  # (n_hat, |R|) on the normalized scale

    @property
    def n_hat(self) -> int:
        return self.cat.shape[0]

    def is_feasible(self, atol: float = SIMPLEX_ATOL) -> bool:
        for col in self.schema.cat_indices:
            block = self.cat[:, self.schema.block_slice(col)]
            if (block < -atol).any():
                return False
            if not np.allclose(block.sum(axis=1), 1.0, atol=atol):
                return False
        if self.num.size and ((self.num < -atol).any() or (self.num > 1 + atol).any()):
            return False
        return True

    def copy(self) -> "RelaxedDataset":
        return RelaxedDataset(self.schema, self.cat.copy(), self.num.copy())


def normalize_numeric(schema: Schema, column: int, raw: float) -> float:
    """Scalar min-max scaling; clamps out-of-range input."""
    return float(schema.normalize_numeric(column, raw))


def denormalize_numeric(schema: Schema, column: int, scaled: float) -> float:
    return float(schema.denormalize_numeric(column, scaled))


def encode(dataset: DiscreteDataset) -> RelaxedDataset:
    """One-hot encode categoricals and normalize numericals. Exact blocks."""
    schema = dataset.schema
    n = dataset.n
    cat = np.zeros((n, schema.one_hot_width))
    for jc, col in enumerate(schema.cat_indices):
        off = schema.one_hot_offsets[col]
        cat[np.arange(n), off + dataset.cat[:, jc]] = 1.0
    return RelaxedDataset(schema=schema, cat=cat, num=dataset.normalized_num())


def project_to_feasible(relaxed: RelaxedDataset) -> RelaxedDataset:
    """Clip-and-renormalize each categorical block; clip numericals to [0,1].

    Blocks whose clipped mass is zero are reset to the uniform distribution.
    Idempotent, and the identity on feasible input.
    """
    schema = relaxed.schema
    cat = np.clip(relaxed.cat, 0.0, None)
    for col in schema.cat_indices:
        sl = schema.block_slice(col)
        block = cat[:, sl]
        mass = block.sum(axis=1)
        dead = mass <= 0.0
        mass[dead] = 1.0
        block /= mass[:, None]
        block[dead] = 1.0 / block.shape[1]
        cat[:, sl] = block
    num = np.clip(relaxed.num, 0.0, 1.0)
    return RelaxedDataset(schema=schema, cat=cat, num=num)


def sample_discrete(relaxed: RelaxedDataset, seed: int) -> DiscreteDataset:
    """Round a relaxed dataset to discrete rows.

    Each categorical block is sampled from its probability vector; numerical
    values are denormalized directly. Per-row generators are derived from the
    seed so the result is independent of execution order.
    """
    schema = relaxed.schema
    n = relaxed.n_hat
    n_cat = len(schema.cat_indices)
    cat = np.zeros((n, n_cat), dtype=np.int64)
    if n_cat:
        children = np.random.SeedSequence(seed).spawn(n)
        u = np.stack([np.random.default_rng(c).random(n_cat) for c in children])
        for jc, col in enumerate(schema.cat_indices):
            block = relaxed.cat[:, schema.block_slice(col)]
            cdf = np.cumsum(block, axis=1)
            cdf[:, -1] = 1.0  # guard against rounding shortfall
            # u < 1 and cdf[:, -1] == 1, so the count is always < arity
            cat[:, jc] = (cdf <= u[:, jc][:, None]).sum(axis=1)
    num = np.empty((n, len(schema.num_indices)))
    for jr, col in enumerate(schema.num_indices):
        num[:, jr] = schema.denormalize_numeric(col, relaxed.num[:, jr])
    return DiscreteDataset(schema=schema, cat=cat, num=num)
