"""Statistical queries: exact evaluation, sigmoid relaxation, and generators.

Four query kinds are supported. Categorical marginals are products of one-hot
coordinates on relaxed data and exact indicators on discrete data. The three
threshold-bearing kinds (prefix, mixed, linear-threshold) replace each
indicator `x <= tau` by the tempered sigmoid `1 / (1 + exp(sigma * (x - tau)))`
on relaxed data; the approximation tightens as the inverse temperature sigma
grows. All thresholds and weights live on the normalized [0, 1] feature scale.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import DataError, ParameterError
from .schema import CATEGORICAL, NUMERICAL, DiscreteDataset, RelaxedDataset, Schema

# Queries per chunk in the vectorized evaluators; bounds peak memory at
# roughly n_rows * chunk * k floats per intermediate.
_CHUNK = 512


@dataclass(frozen=True)
class CategoricalMarginal:
    """Indicator that each column in `cols` takes the paired category value."""

    cols: tuple[int, ...]
    values: tuple[int, ...]


@dataclass(frozen=True)
class PrefixMarginal:
    """Indicator that each numerical column is <= its threshold."""

    cols: tuple[int, ...]
    thresholds: tuple[float, ...]


@dataclass(frozen=True)
class MixedMarginal:
    """Conjunction of categorical equalities and numerical thresholds."""

    cat_cols: tuple[int, ...]
    cat_values: tuple[int, ...]
    num_cols: tuple[int, ...]
    thresholds: tuple[float, ...]


@dataclass(frozen=True)
class ClassCondLinearThreshold:
    """Indicator that label == value and <weights, x_R> <= threshold."""

    label_col: int
    label_value: int
    num_cols: tuple[int, ...]
    weights: tuple[float, ...]
    threshold: float


StatQuery = Union[CategoricalMarginal, PrefixMarginal, MixedMarginal, ClassCondLinearThreshold]

_KIND_TAGS = {
    CategoricalMarginal: "categorical_marginal",
    PrefixMarginal: "prefix_marginal",
    MixedMarginal: "mixed_marginal",
    ClassCondLinearThreshold: "class_cond_linear_threshold",
}


@dataclass(frozen=True)
class SigmoidParams:
    """Inverse temperature of the sigmoid threshold surrogate."""

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ParameterError("sigma must be positive")


@dataclass
class QuerySet:
    """Ordered query list with stable ids 0..m-1 plus a provenance record."""

    queries: list
    provenance: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.queries)

    def __getitem__(self, i: int) -> StatQuery:
        return self.queries[i]

    def to_dict(self) -> dict:
        out = []
        for q in self.queries:
            d = {"kind": _KIND_TAGS[type(q)]}
            if isinstance(q, CategoricalMarginal):
                d.update(cols=list(q.cols), values=list(q.values))
            elif isinstance(q, PrefixMarginal):
                d.update(cols=list(q.cols), thresholds=list(q.thresholds))
            elif isinstance(q, MixedMarginal):
                d.update(
                    cat_cols=list(q.cat_cols),
                    cat_values=list(q.cat_values),
                    num_cols=list(q.num_cols),
                    thresholds=list(q.thresholds),
                )
            else:
                d.update(
                    label_col=q.label_col,
                    label_value=q.label_value,
                    num_cols=list(q.num_cols),
                    weights=list(q.weights),
                    threshold=q.threshold,
                )
            out.append(d)
        return {"provenance": self.provenance, "queries": out}

    @classmethod
    def from_dict(cls, d: dict) -> "QuerySet":
        queries = []
        for qd in d["queries"]:
            kind = qd["kind"]
            if kind == "categorical_marginal":
                queries.append(CategoricalMarginal(tuple(qd["cols"]), tuple(qd["values"])))
            elif kind == "prefix_marginal":
                queries.append(PrefixMarginal(tuple(qd["cols"]), tuple(qd["thresholds"])))
            elif kind == "mixed_marginal":
                queries.append(
                    MixedMarginal(
                        tuple(qd["cat_cols"]),
                        tuple(qd["cat_values"]),
                        tuple(qd["num_cols"]),
                        tuple(qd["thresholds"]),
                    )
                )
            elif kind == "class_cond_linear_threshold":
                queries.append(
                    ClassCondLinearThreshold(
                        qd["label_col"],
                        qd["label_value"],
                        tuple(qd["num_cols"]),
                        tuple(qd["weights"]),
                        qd["threshold"],
                    )
                )
            else:
                raise DataError(f"unknown query kind {kind!r}")
        return cls(queries=queries, provenance=d.get("provenance", {}))

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "QuerySet":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def validate_query(q: StatQuery, schema: Schema) -> None:
    """Raise ParameterError if the query does not fit the schema."""

    def check_cat(cols, values):
        if len(cols) != len(values):
            raise ParameterError("column/value length mismatch")
        for c, v in zip(cols, values):
            if not 0 <= c < len(schema.columns) or schema.columns[c].kind != CATEGORICAL:
                raise ParameterError(f"column {c} is not a categorical column")
            if not 0 <= v < schema.columns[c].arity:
                raise ParameterError(f"category index {v} out of range for column {c}")
        if len(set(cols)) != len(cols):
            raise ParameterError("duplicate columns in query")

    def check_num(cols, per_col):
        if len(cols) != len(per_col):
            raise ParameterError("column/threshold length mismatch")
        for c in cols:
            if not 0 <= c < len(schema.columns) or schema.columns[c].kind != NUMERICAL:
                raise ParameterError(f"column {c} is not a numerical column")
        if len(set(cols)) != len(cols):
            raise ParameterError("duplicate columns in query")

    if isinstance(q, CategoricalMarginal):
        check_cat(q.cols, q.values)
    elif isinstance(q, PrefixMarginal):
        check_num(q.cols, q.thresholds)
    elif isinstance(q, MixedMarginal):
        check_cat(q.cat_cols, q.cat_values)
        check_num(q.num_cols, q.thresholds)
    elif isinstance(q, ClassCondLinearThreshold):
        if q.label_col not in schema.label_indices:
            raise ParameterError(f"column {q.label_col} is not a label column")
        check_cat((q.label_col,), (q.label_value,))
        check_num(q.num_cols, q.weights)
    else:
        raise ParameterError(f"unknown query type {type(q).__name__}")


def _sigmoid_of_neg(z: np.ndarray) -> np.ndarray:
    """Numerically stable 1 / (1 + exp(z)); tends to 1 as z -> -inf."""
    return 0.5 * (1.0 - np.tanh(0.5 * z))


def _loo_prod(g: np.ndarray) -> np.ndarray:
    """Leave-one-out products along the last axis."""
    k = g.shape[-1]
    if k == 1:
        return np.ones_like(g)
    pre = np.ones_like(g)
    pre[..., 1:] = np.cumprod(g[..., :-1], axis=-1)
    suf = np.ones_like(g)
    suf[..., :-1] = np.cumprod(g[..., :0:-1], axis=-1)[..., ::-1]
    return pre * suf


def _one_hot_rows(idx: np.ndarray, width: int, dtype=np.float64) -> np.ndarray:
    """(Q,) indices -> (Q, width) indicator matrix for matmul-based scatter."""
    out = np.zeros((idx.size, width), dtype=dtype)
    out[np.arange(idx.size), idx] = 1.0
    return out


@dataclass
class _ProductGroup:
    """Queries that are a product of one-hot coordinates and sigmoid factors."""

    out_idx: np.ndarray  # (Q,) positions in the full answer vector
    cat_flat: np.ndarray  # (Q, kc) one-hot flat indices
    cat_pos: np.ndarray  # (Q, kc) positions in the categorical code matrix
    cat_val: np.ndarray  # (Q, kc) category codes
    num_pos: np.ndarray  # (Q, kn) positions in the numerical matrix
    tau: np.ndarray  # (Q, kn)
    # Lazily built scatter matrices, one per factor position.
    cat_scatter: list = field(default_factory=list, repr=False)
    num_scatter: list = field(default_factory=list, repr=False)

    def ensure_scatter(self, d_prime: int, r: int, dtype=np.float64) -> None:
        if not self.cat_scatter and self.cat_flat.shape[1]:
            self.cat_scatter = [
                _one_hot_rows(self.cat_flat[:, j], d_prime, dtype)
                for j in range(self.cat_flat.shape[1])
            ]
        if not self.num_scatter and self.num_pos.shape[1]:
            self.num_scatter = [
                _one_hot_rows(self.num_pos[:, j], r, dtype) for j in range(self.num_pos.shape[1])
            ]


@dataclass
class _LinearThresholdGroup:
    out_idx: np.ndarray  # (Q,)
    lab_flat: np.ndarray  # (Q,)
    lab_pos: np.ndarray  # (Q,)
    lab_val: np.ndarray  # (Q,)
    num_pos: np.ndarray  # (Q, kn)
    theta: np.ndarray  # (Q, kn)
    tau: np.ndarray  # (Q,)
    lab_scatter: np.ndarray | None = field(default=None, repr=False)
    theta_full: np.ndarray | None = field(default=None, repr=False)  # (Q, r), zeros off-support

    def ensure_scatter(self, d_prime: int, r: int, dtype=np.float64) -> None:
        if self.lab_scatter is None:
            self.lab_scatter = _one_hot_rows(self.lab_flat, d_prime, dtype)
            theta_full = np.zeros((self.lab_flat.size, r))
            for j in range(self.num_pos.shape[1]):
                theta_full[np.arange(self.lab_flat.size), self.num_pos[:, j]] += self.theta[:, j]
            self.theta_full = theta_full.astype(dtype)


class CompiledQueries:
    """Batch-evaluable form of a query list against one schema.

    Groups queries by structural shape so evaluation and gradients run as a
    handful of vectorized passes. Query order in results always matches the
    input order.

    `dtype` sets the floating type of the relaxed evaluation and gradient
    internals. float32 roughly halves optimization time; exact evaluation and
    the returned gradients stay float64 either way.
    """

    def __init__(self, queries: Sequence[StatQuery], schema: Schema, dtype=np.float64):
        self.schema = schema
        self.m = len(queries)
        self.dtype = np.dtype(dtype)
        prod: dict[tuple[int, int], list] = {}
        lt: dict[int, list] = {}
        for i, q in enumerate(queries):
            validate_query(q, schema)
            if isinstance(q, CategoricalMarginal):
                prod.setdefault((len(q.cols), 0), []).append((i, q.cols, q.values, (), ()))
            elif isinstance(q, PrefixMarginal):
                prod.setdefault((0, len(q.cols)), []).append((i, (), (), q.cols, q.thresholds))
            elif isinstance(q, MixedMarginal):
                key = (len(q.cat_cols), len(q.num_cols))
                prod.setdefault(key, []).append(
                    (i, q.cat_cols, q.cat_values, q.num_cols, q.thresholds)
                )
            else:
                lt.setdefault(len(q.num_cols), []).append(i)
        self.prod_groups: list[_ProductGroup] = []
        for (kc, kn), items in prod.items():
            qn = len(items)
            g = _ProductGroup(
                out_idx=np.array([it[0] for it in items], dtype=np.int64),
                cat_flat=np.zeros((qn, kc), dtype=np.int64),
                cat_pos=np.zeros((qn, kc), dtype=np.int64),
                cat_val=np.zeros((qn, kc), dtype=np.int64),
                num_pos=np.zeros((qn, kn), dtype=np.int64),
                tau=np.zeros((qn, kn), dtype=self.dtype),
            )
            for r, (_, ccols, cvals, ncols, taus) in enumerate(items):
                for j, (c, v) in enumerate(zip(ccols, cvals)):
                    g.cat_flat[r, j] = schema.one_hot_index(c, v)
                    g.cat_pos[r, j] = schema.cat_position(c)
                    g.cat_val[r, j] = v
                for j, (c, t) in enumerate(zip(ncols, taus)):
                    g.num_pos[r, j] = schema.num_position(c)
                    g.tau[r, j] = t
            self.prod_groups.append(g)
        self.lt_groups: list[_LinearThresholdGroup] = []
        for kn, idxs in lt.items():
            qn = len(idxs)
            g = _LinearThresholdGroup(
                out_idx=np.array(idxs, dtype=np.int64),
                lab_flat=np.zeros(qn, dtype=np.int64),
                lab_pos=np.zeros(qn, dtype=np.int64),
                lab_val=np.zeros(qn, dtype=np.int64),
                num_pos=np.zeros((qn, kn), dtype=np.int64),
                theta=np.zeros((qn, kn), dtype=self.dtype),
                tau=np.zeros(qn, dtype=self.dtype),
            )
            for r, i in enumerate(idxs):
                q = queries[i]
                g.lab_flat[r] = schema.one_hot_index(q.label_col, q.label_value)
                g.lab_pos[r] = schema.cat_position(q.label_col)
                g.lab_val[r] = q.label_value
                for j, c in enumerate(q.num_cols):
                    g.num_pos[r, j] = schema.num_position(c)
                g.theta[r] = q.weights
                g.tau[r] = q.threshold
            self.lt_groups.append(g)

    # -- exact evaluation on discrete data --------------------------------

    def eval_discrete(self, dataset: DiscreteDataset) -> np.ndarray:
        if dataset.n < 1:
            raise DataError("empty dataset")
        codes = dataset.cat
        x = dataset.normalized_num()
        n = dataset.n
        out = np.zeros(self.m)
        for g in self.prod_groups:
            for lo in range(0, len(g.out_idx), _CHUNK):
                sl = slice(lo, lo + _CHUNK)
                ind = np.ones((n, len(g.out_idx[sl])), dtype=bool)
                if g.cat_pos.shape[1]:
                    ind &= (codes[:, g.cat_pos[sl]] == g.cat_val[sl]).all(axis=-1)
                if g.num_pos.shape[1]:
                    ind &= (x[:, g.num_pos[sl]] <= g.tau[sl]).all(axis=-1)
                out[g.out_idx[sl]] = ind.mean(axis=0)
        for g in self.lt_groups:
            for lo in range(0, len(g.out_idx), _CHUNK):
                sl = slice(lo, lo + _CHUNK)
                z = np.einsum("nqk,qk->nq", x[:, g.num_pos[sl]], g.theta[sl])
                ind = (codes[:, g.lab_pos[sl]] == g.lab_val[sl]) & (z <= g.tau[sl])
                out[g.out_idx[sl]] = ind.mean(axis=0)
        return out

    # -- relaxed (differentiable) evaluation -------------------------------

    def eval_relaxed(self, relaxed: RelaxedDataset, sig: SigmoidParams) -> np.ndarray:
        if relaxed.n_hat < 1:
            raise DataError("empty dataset")
        cat = np.asarray(relaxed.cat, dtype=self.dtype)
        num = np.asarray(relaxed.num, dtype=self.dtype)
        sigma = sig.sigma
        out = np.zeros(self.m)
        for g in self.prod_groups:
            for lo in range(0, len(g.out_idx), _CHUNK):
                sl = slice(lo, lo + _CHUNK)
                p = np.ones((cat.shape[0], len(g.out_idx[sl])), dtype=self.dtype)
                if g.cat_flat.shape[1]:
                    p *= cat[:, g.cat_flat[sl]].prod(axis=-1)
                if g.num_pos.shape[1]:
                    s = _sigmoid_of_neg(sigma * (num[:, g.num_pos[sl]] - g.tau[sl]))
                    p *= s.prod(axis=-1)
                out[g.out_idx[sl]] = p.mean(axis=0)
        for g in self.lt_groups:
            for lo in range(0, len(g.out_idx), _CHUNK):
                sl = slice(lo, lo + _CHUNK)
                z = np.einsum("nqk,qk->nq", num[:, g.num_pos[sl]], g.theta[sl])
                s = _sigmoid_of_neg(sigma * (z - g.tau[sl]))
                out[g.out_idx[sl]] = (cat[:, g.lab_flat[sl]] * s).mean(axis=0)
        return out

    # -- squared loss and its exact gradient -------------------------------

    def loss_and_grad(
        self, targets: np.ndarray, relaxed: RelaxedDataset, sig: SigmoidParams
    ) -> tuple[float, np.ndarray, np.ndarray]:
        """Sum of squared residuals against `targets` plus its gradient.

        Returns (loss, grad_cat, grad_num) with gradients shaped like the
        relaxed matrices.
        """
        targets = np.asarray(targets, dtype=self.dtype)
        if targets.shape != (self.m,):
            raise ParameterError(f"expected {self.m} targets, got {targets.shape}")
        cat = np.asarray(relaxed.cat, dtype=self.dtype)
        num = np.asarray(relaxed.num, dtype=self.dtype)
        n = relaxed.n_hat
        if n < 1:
            raise DataError("empty dataset")
        sigma = sig.sigma
        d_prime = self.schema.one_hot_width
        r = len(self.schema.num_indices)
        grad_cat = np.zeros_like(cat)
        grad_num = np.zeros_like(num)
        loss = 0.0
        for g in self.prod_groups:
            g.ensure_scatter(d_prime, r, self.dtype)
            kc, kn = g.cat_flat.shape[1], g.num_pos.shape[1]
            for lo in range(0, len(g.out_idx), _CHUNK):
                sl = slice(lo, lo + _CHUNK)
                pc = np.ones((n, len(g.out_idx[sl])), dtype=self.dtype)
                gc = gs = None
                if kc:
                    gc = cat[:, g.cat_flat[sl]]  # (n, q, kc)
                    pc = gc.prod(axis=-1)
                ps = np.ones_like(pc)
                if kn:
                    gs = _sigmoid_of_neg(sigma * (num[:, g.num_pos[sl]] - g.tau[sl]))
                    ps = gs.prod(axis=-1)
                vals = (pc * ps).mean(axis=0)
                resid = targets[g.out_idx[sl]] - vals
                loss += float(resid @ resid)
                coef = (-2.0 / n) * resid  # dL/d(per-row product), per query
                if kc:
                    loo = _loo_prod(gc)
                    for j in range(kc):
                        grad_cat += (coef * loo[..., j] * ps) @ g.cat_scatter[j][sl]
                if kn:
                    loo = _loo_prod(gs)
                    dsig = -sigma * gs * (1.0 - gs)
                    for j in range(kn):
                        grad_num += (coef * pc * loo[..., j] * dsig[..., j]) @ g.num_scatter[j][sl]
        for g in self.lt_groups:
            g.ensure_scatter(d_prime, r, self.dtype)
            for lo in range(0, len(g.out_idx), _CHUNK):
                sl = slice(lo, lo + _CHUNK)
                z = num @ g.theta_full[sl].T
                s = _sigmoid_of_neg(sigma * (z - g.tau[sl]))
                xi = cat[:, g.lab_flat[sl]]
                vals = (xi * s).mean(axis=0)
                resid = targets[g.out_idx[sl]] - vals
                loss += float(resid @ resid)
                coef = (-2.0 / n) * resid
                grad_cat += (coef * s) @ g.lab_scatter[sl]
                w = coef * xi * (-sigma) * s * (1.0 - s)
                grad_num += w @ g.theta_full[sl]
        return loss, grad_cat.astype(np.float64, copy=False), grad_num.astype(np.float64, copy=False)


# -- convenience scalar wrappers -------------------------------------------


def eval_discrete(query: StatQuery, dataset: DiscreteDataset) -> float:
    return float(CompiledQueries([query], dataset.schema).eval_discrete(dataset)[0])


def eval_relaxed(query: StatQuery, relaxed: RelaxedDataset, sig: SigmoidParams) -> float:
    return float(CompiledQueries([query], relaxed.schema).eval_relaxed(relaxed, sig)[0])


def eval_discrete_many(queries: Sequence[StatQuery], dataset: DiscreteDataset) -> np.ndarray:
    return CompiledQueries(queries, dataset.schema).eval_discrete(dataset)


def eval_relaxed_many(
    queries: Sequence[StatQuery], relaxed: RelaxedDataset, sig: SigmoidParams
) -> np.ndarray:
    return CompiledQueries(queries, relaxed.schema).eval_relaxed(relaxed, sig)


def loss_and_grad(
    queries: Sequence[StatQuery],
    targets: Sequence[float],
    relaxed: RelaxedDataset,
    sig: SigmoidParams,
) -> tuple[float, np.ndarray, np.ndarray]:
    return CompiledQueries(queries, relaxed.schema).loss_and_grad(
        np.asarray(targets, dtype=float), relaxed, sig
    )


# -- workload generators ---------------------------------------------------


def _feature_cat_columns(schema: Schema) -> list[int]:
    return [i for i in schema.cat_indices if i not in schema.label_indices]


def gen_cm_queries(schema: Schema) -> QuerySet:
    """All 3-way marginals over two non-label categorical columns and a label."""
    feats = _feature_cat_columns(schema)
    if len(feats) < 2 or not schema.label_indices:
        raise ParameterError("insufficient categorical/label columns")
    queries = []
    for a, b in itertools.combinations(feats, 2):
        for lab in schema.label_indices:
            for va in range(schema.columns[a].arity):
                for vb in range(schema.columns[b].arity):
                    for vl in range(schema.columns[lab].arity):
                        queries.append(CategoricalMarginal((a, b, lab), (va, vb, vl)))
    return QuerySet(queries=queries, provenance={"generator": "cm"})


def gen_mm_queries(schema: Schema, m: int, seed: int) -> QuerySet:
    """Random 3-way mixed marginals: two numerical columns plus a label value.

    Thresholds are drawn Uniform[0, 1] on the normalized scale so that every
    query is non-trivial on min-max scaled data.
    """
    if len(schema.num_indices) < 2 or not schema.label_indices:
        raise ParameterError("need at least two numerical columns and one label column")
    if m < 1:
        raise ParameterError("m must be >= 1")
    rng = np.random.default_rng(seed)
    num_cols = np.array(schema.num_indices)
    lab_cols = np.array(schema.label_indices)
    queries = []
    for _ in range(m):
        pair = np.sort(rng.choice(num_cols, size=2, replace=False))
        taus = rng.random(2)
        lab = int(rng.choice(lab_cols))
        y = int(rng.integers(schema.columns[lab].arity))
        queries.append(
            MixedMarginal((lab,), (y,), (int(pair[0]), int(pair[1])), (float(taus[0]), float(taus[1])))
        )
    return QuerySet(queries=queries, provenance={"generator": "mm", "m": m, "seed": seed})


def gen_lt_queries(schema: Schema, m: int, seed: int) -> QuerySet:
    """Random class-conditional linear thresholds over all numerical columns.

    Weights are N(0,1) scaled by 1/sqrt(|R|) and the threshold is N(0,1).
    Note: the scaling denominator is the numerical column count, not the full
    column count; see the README for discussion.
    """
    r = len(schema.num_indices)
    if r < 1 or not schema.label_indices:
        raise ParameterError("need at least one numerical column and one label column")
    if m < 1:
        raise ParameterError("m must be >= 1")
    rng = np.random.default_rng(seed)
    lab_cols = np.array(schema.label_indices)
    queries = []
    for _ in range(m):
        theta = rng.standard_normal(r) / np.sqrt(r)
        tau = float(rng.standard_normal())
        lab = int(rng.choice(lab_cols))
        y = int(rng.integers(schema.columns[lab].arity))
        queries.append(
            ClassCondLinearThreshold(lab, y, tuple(schema.num_indices), tuple(theta), tau)
        )
    return QuerySet(queries=queries, provenance={"generator": "lt", "m": m, "seed": seed})


def gen_prefix_queries(schema: Schema, m: int, seed: int, k: int = 2) -> QuerySet:
    """Random k-way prefix marginals with Uniform[0, 1] thresholds."""
    if len(schema.num_indices) < k:
        raise ParameterError(f"need at least {k} numerical columns")
    if m < 1:
        raise ParameterError("m must be >= 1")
    rng = np.random.default_rng(seed)
    num_cols = np.array(schema.num_indices)
    queries = []
    for _ in range(m):
        cols = np.sort(rng.choice(num_cols, size=k, replace=False))
        taus = rng.random(k)
        queries.append(PrefixMarginal(tuple(int(c) for c in cols), tuple(float(t) for t in taus)))
    return QuerySet(queries=queries, provenance={"generator": "prefix", "m": m, "seed": seed, "k": k})
