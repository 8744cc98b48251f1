"""Workload error reporting and the uniform-random control baseline.

Reports always use exact indicator evaluation on both datasets, never the
sigmoid relaxation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ParameterError
from .queries import CompiledQueries, QuerySet
from .schema import DiscreteDataset, Schema


@dataclass
class ErrorReport:
    workload: str
    m: int
    mean_abs_error: float
    max_abs_error: float
    per_query: list | None = None
    meta: dict = field(default_factory=dict)  # epsilon, delta, seed, config digest

    def to_dict(self) -> dict:
        d = {
            "workload": self.workload,
            "m": self.m,
            "mean_abs_error": self.mean_abs_error,
            "max_abs_error": self.max_abs_error,
        }
        d.update(self.meta)
        if self.per_query is not None:
            d["per_query"] = self.per_query
        return d

    def csv_row(self) -> list:
        return [self.workload, self.m, repr(self.mean_abs_error), repr(self.max_abs_error)]


def workload_error(
    real: DiscreteDataset,
    synthetic: DiscreteDataset,
    workload: QuerySet,
    label: str = "workload",
    per_query: bool = False,
) -> ErrorReport:
    """Mean and max absolute answer gap over a query workload."""
    if real.schema is not synthetic.schema and real.schema.to_dict() != synthetic.schema.to_dict():
        raise DataError("real and synthetic datasets have different schemas")
    if len(workload) == 0:
        raise ParameterError("empty workload")
    compiled = CompiledQueries(workload.queries, real.schema)
    diff = np.abs(compiled.eval_discrete(real) - compiled.eval_discrete(synthetic))
    return ErrorReport(
        workload=label,
        m=len(workload),
        mean_abs_error=float(diff.mean()),
        max_abs_error=float(diff.max()),
        per_query=[float(d) for d in diff] if per_query else None,
    )


def uniform_baseline(schema: Schema, n_hat: int, seed: int) -> DiscreteDataset:
    """Independent uniform draws per cell; the no-information control arm."""
    if n_hat < 1:
        raise ParameterError("n_hat must be >= 1")
    rng = np.random.default_rng(seed)
    cat = np.zeros((n_hat, len(schema.cat_indices)), dtype=np.int64)
    for jc, col in enumerate(schema.cat_indices):
        cat[:, jc] = rng.integers(schema.columns[col].arity, size=n_hat)
    num = np.zeros((n_hat, len(schema.num_indices)))
    for jr, col in enumerate(schema.num_indices):
        spec = schema.columns[col]
        num[:, jr] = rng.uniform(spec.lower, spec.upper, size=n_hat)
    return DiscreteDataset(schema=schema, cat=cat, num=num)
