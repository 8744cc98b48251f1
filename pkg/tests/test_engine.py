import numpy as np
import pytest

from dpsynth import (
    AnnealConfig,
    EngineConfig,
    Phase,
    encode,
    gen_cm_queries,
    gen_lt_queries,
    rappp_fit,
)
from dpsynth.engine import errors_for_selection, init_relaxed_uniform
from dpsynth.errors import ParameterError
from dpsynth.queries import eval_discrete_many
from tests.conftest import planted_dataset

FAST = AnnealConfig(doublings=4, max_inner_steps=15)


def _config(data, epochs_cm=2, epochs_lt=6, **kw):
    schema = data.schema
    phases = [
        Phase("cm", gen_cm_queries(schema), epochs_cm),
        Phase("lt", gen_lt_queries(schema, 200, 1), epochs_lt),
    ]
    defaults = dict(epsilon=1.0, delta=1e-6, phases=phases, anneal=FAST, synthetic_rows=100)
    defaults.update(kw)
    return EngineConfig(**defaults)


def test_config_validation(toy_schema):
    qs = gen_cm_queries(toy_schema)
    with pytest.raises(ParameterError):
        EngineConfig(epsilon=0.0, delta=1e-6, phases=[Phase("cm", qs, 1)]).validate()
    with pytest.raises(ParameterError):
        EngineConfig(epsilon=1.0, delta=0.0, phases=[Phase("cm", qs, 1)]).validate()
    with pytest.raises(ParameterError):
        EngineConfig(epsilon=1.0, delta=1e-6, phases=[]).validate()
    # T*K must not exceed the pool
    too_many = EngineConfig(
        epsilon=1.0, delta=1e-6, phases=[Phase("cm", qs, 5)], queries_per_epoch=10
    )
    with pytest.raises(ParameterError):
        too_many.validate()
    with pytest.raises(ParameterError):
        EngineConfig(
            epsilon=1.0, delta=1e-6, phases=[Phase("cm", qs, 1)], compute_dtype="float16"
        ).validate()


def test_init_relaxed_uniform_feasible(toy_schema):
    rel = init_relaxed_uniform(toy_schema, 50, np.random.default_rng(0))
    assert rel.is_feasible()
    # block means are near-uniform over many rows
    big = init_relaxed_uniform(toy_schema, 20_000, np.random.default_rng(1))
    sl = toy_schema.block_slice(0)
    np.testing.assert_allclose(big.cat[:, sl].mean(axis=0), 1 / 3, atol=0.02)


def test_errors_for_selection_values(random_dataset):
    rel = encode(random_dataset)
    pool = list(gen_cm_queries(random_dataset.schema).queries)
    scores = errors_for_selection(random_dataset, rel, pool, 1024.0)
    # encoding is lossless for categorical marginals, so every score is ~0
    np.testing.assert_allclose(scores, 0.0, atol=1e-12)


def test_errors_for_selection_known_gap(random_dataset):
    rel = encode(random_dataset)
    pool = [gen_cm_queries(random_dataset.schema).queries[0]]
    exact = eval_discrete_many(pool, random_dataset)
    scores = errors_for_selection(
        random_dataset, rel, pool, 1024.0, exact_answers=exact + 0.25
    )
    assert scores[0] == pytest.approx(0.25, abs=1e-9)


def test_ledger_matches_charge_pattern():
    data = planted_dataset(n=300, seed=0)
    cfg = _config(data, epochs_cm=2, epochs_lt=6)
    _, state = rappp_fit(data, cfg)
    acct = state.accountant
    rho = acct.rho_total
    big_t, k = 8, 10
    selects = [r for label, r in acct.ledger if label.startswith("select/")]
    measures = [r for label, r in acct.ledger if label.startswith("measure/")]
    assert len(selects) == big_t
    assert len(measures) == big_t * k
    np.testing.assert_allclose(selects, rho / (2 * big_t), rtol=1e-12)
    np.testing.assert_allclose(measures, rho / (2 * big_t * k), rtol=1e-12)
    assert acct.spent == pytest.approx(rho, rel=1e-9)


def test_no_query_selected_twice():
    data = planted_dataset(n=300, seed=1)
    cfg = _config(data)
    _, state = rappp_fit(data, cfg)
    ids = [(d.phase, i) for d in state.diagnostics for i in d.selected_ids]
    assert len(ids) == len(set(ids))
    assert len(state.measured) == cfg.total_epochs * cfg.queries_per_epoch


def test_deterministic_given_seed():
    data = planted_dataset(n=300, seed=2)
    a, sa = rappp_fit(data, _config(data, seed=7))
    b, sb = rappp_fit(data, _config(data, seed=7))
    np.testing.assert_array_equal(a.cat, b.cat)
    np.testing.assert_array_equal(a.num, b.num)
    assert [d.selected_ids for d in sa.diagnostics] == [d.selected_ids for d in sb.diagnostics]
    c, _ = rappp_fit(data, _config(data, seed=8))
    assert not (np.array_equal(a.cat, c.cat) and np.array_equal(a.num, c.num))


def test_zero_noise_measurements_are_exact():
    data = planted_dataset(n=400, seed=3)
    cfg = _config(data, zero_noise=True)
    _, state = rappp_fit(data, cfg)
    for q, meas in state.measured:
        assert meas.value == pytest.approx(
            eval_discrete_many([q], data)[0], abs=1e-12
        )


def test_zero_noise_selection_is_greedy():
    # with noise off, each epoch picks the K largest current scores; the first
    # epoch's picks must therefore be the top-K initial errors
    data = planted_dataset(n=400, seed=4)
    cfg = _config(data, zero_noise=True)
    schema = data.schema
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(5)[0])
    rel0 = init_relaxed_uniform(schema, cfg.synthetic_rows, rng)
    pool = list(cfg.phases[0].queries.queries)
    scores = errors_for_selection(data, rel0, pool, cfg.anneal.sigma_final)
    expect = list(np.argsort(-scores, kind="stable")[: cfg.queries_per_epoch])
    _, state = rappp_fit(data, cfg)
    assert state.diagnostics[0].selected_ids == [int(i) for i in expect]


def test_fit_reduces_measured_error():
    data = planted_dataset(n=500, seed=5)
    cfg = _config(data, zero_noise=True)
    _, state = rappp_fit(data, cfg)
    # the first epoch starts from a random relaxed dataset and must improve a lot
    assert state.diagnostics[0].post_loss <= 0.5 * state.diagnostics[0].pre_loss
    assert state.diagnostics[-1].measured_mean_error <= 0.10


def test_single_epoch_single_query():
    data = planted_dataset(n=200, seed=6)
    qs = gen_cm_queries(data.schema)
    cfg = EngineConfig(
        epsilon=1.0,
        delta=1e-6,
        phases=[Phase("cm", qs, 1)],
        queries_per_epoch=1,
        synthetic_rows=50,
        anneal=FAST,
    )
    synth, state = rappp_fit(data, cfg)
    assert synth.n == 50
    assert len(state.measured) == 1
    assert state.accountant.spent == pytest.approx(state.accountant.rho_total, rel=1e-9)
