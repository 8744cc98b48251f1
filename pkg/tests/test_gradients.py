"""Gradient checks against a central finite-difference oracle."""

import numpy as np
import pytest

from dpsynth import (
    CategoricalMarginal,
    ClassCondLinearThreshold,
    MixedMarginal,
    PrefixMarginal,
    RelaxedDataset,
    SigmoidParams,
)
from dpsynth.engine import init_relaxed_uniform
from dpsynth.queries import CompiledQueries
from tests.conftest import planted_schema

H = 1e-5


def fd_gradient(compiled, targets, rel, sig):
    """Central finite differences over every coordinate."""

    def loss_at(cat, num):
        v = compiled.eval_relaxed(RelaxedDataset(rel.schema, cat, num), sig)
        return float(((targets - v) ** 2).sum())

    fd_cat = np.zeros_like(rel.cat)
    fd_num = np.zeros_like(rel.num)
    for i in range(rel.n_hat):
        for j in range(rel.cat.shape[1]):
            up, dn = rel.cat.copy(), rel.cat.copy()
            up[i, j] += H
            dn[i, j] -= H
            fd_cat[i, j] = (loss_at(up, rel.num) - loss_at(dn, rel.num)) / (2 * H)
        for j in range(rel.num.shape[1]):
            up, dn = rel.num.copy(), rel.num.copy()
            up[i, j] += H
            dn[i, j] -= H
            fd_num[i, j] = (loss_at(rel.cat, up) - loss_at(rel.cat, dn)) / (2 * H)
    return fd_cat, fd_num


def relative_gap(gc, gn, fd_c, fd_n):
    num = np.sqrt(((gc - fd_c) ** 2).sum() + ((gn - fd_n) ** 2).sum())
    den = max(np.sqrt((fd_c**2).sum() + (fd_n**2).sum()), 1e-12)
    return num / den


def _random_query(schema, kind, rng):
    num_cols = schema.num_indices
    if kind == "cm":
        cols = tuple(sorted(rng.choice(schema.cat_indices, 2, replace=False)))
        vals = tuple(int(rng.integers(schema.columns[c].arity)) for c in cols)
        return CategoricalMarginal(cols, vals)
    if kind == "prefix":
        cols = tuple(sorted(int(c) for c in rng.choice(num_cols, 2, replace=False)))
        return PrefixMarginal(cols, tuple(float(t) for t in rng.random(2)))
    if kind == "mixed":
        lab = int(rng.choice(schema.label_indices))
        y = int(rng.integers(schema.columns[lab].arity))
        cols = tuple(sorted(int(c) for c in rng.choice(num_cols, 2, replace=False)))
        return MixedMarginal((lab,), (y,), cols, tuple(float(t) for t in rng.random(2)))
    lab = int(rng.choice(schema.label_indices))
    y = int(rng.integers(schema.columns[lab].arity))
    theta = rng.standard_normal(len(num_cols)) / np.sqrt(len(num_cols))
    return ClassCondLinearThreshold(lab, y, num_cols, tuple(float(t) for t in theta), float(rng.standard_normal()))


_KINDS = ["cm", "prefix", "mixed", "lt"]


@pytest.mark.parametrize("kind", _KINDS)
@pytest.mark.parametrize("sigma", [1.0, 8.0, 64.0])
def test_gradient_matches_finite_differences(kind, sigma):
    schema = planted_schema()
    rng = np.random.default_rng(1000 * _KINDS.index(kind) + int(sigma))
    for _ in range(10):
        rel = init_relaxed_uniform(schema, 4, rng)
        queries = [_random_query(schema, kind, rng) for _ in range(3)]
        compiled = CompiledQueries(queries, schema)
        targets = np.clip(
            compiled.eval_relaxed(rel, SigmoidParams(sigma)) + rng.normal(0, 0.2, 3), 0, 1
        )
        sig = SigmoidParams(sigma)
        _, gc, gn = compiled.loss_and_grad(targets, rel, sig)
        fd_c, fd_n = fd_gradient(compiled, targets, rel, sig)
        assert relative_gap(gc, gn, fd_c, fd_n) <= 1e-4


def test_gradient_zero_at_exact_fit():
    schema = planted_schema()
    rng = np.random.default_rng(5)
    rel = init_relaxed_uniform(schema, 6, rng)
    queries = [_random_query(schema, k, rng) for k in ("cm", "prefix", "mixed", "lt")]
    compiled = CompiledQueries(queries, schema)
    sig = SigmoidParams(4.0)
    targets = compiled.eval_relaxed(rel, sig)
    loss, gc, gn = compiled.loss_and_grad(targets, rel, sig)
    assert loss == pytest.approx(0.0, abs=1e-24)
    np.testing.assert_allclose(gc, 0.0, atol=1e-12)
    np.testing.assert_allclose(gn, 0.0, atol=1e-12)


def test_gradient_unreferenced_coordinates_zero():
    schema = planted_schema()
    rng = np.random.default_rng(6)
    rel = init_relaxed_uniform(schema, 5, rng)
    q = CategoricalMarginal((0,), (1,))
    compiled = CompiledQueries([q], schema)
    _, gc, gn = compiled.loss_and_grad(np.array([0.9]), rel, SigmoidParams(1.0))
    referenced = schema.one_hot_index(0, 1)
    mask = np.ones(schema.one_hot_width, dtype=bool)
    mask[referenced] = False
    assert np.all(gc[:, mask] == 0.0)
    assert np.all(gn == 0.0)


def test_single_query_gradient_closed_form():
    # one categorical marginal on a uniform block: the selected coordinate's
    # gradient is -2 (target - value) / n times the other selected coordinate
    schema = planted_schema()
    rng = np.random.default_rng(7)
    rel = init_relaxed_uniform(schema, 3, rng)
    q = CategoricalMarginal((0, 1), (1, 2))
    compiled = CompiledQueries([q], schema)
    target = 0.8
    sig = SigmoidParams(1.0)
    value = compiled.eval_relaxed(rel, sig)[0]
    _, gc, _ = compiled.loss_and_grad(np.array([target]), rel, sig)
    i0 = schema.one_hot_index(0, 1)
    i1 = schema.one_hot_index(1, 2)
    n = rel.n_hat
    expect = -2.0 * (target - value) / n * rel.cat[:, i1]
    np.testing.assert_allclose(gc[:, i0], expect, rtol=1e-12)
