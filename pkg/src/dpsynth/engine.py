"""Adaptive private fitting loop.

Splits the zCDP budget evenly over T epochs: each epoch spends rho/(2T) on
noisy top-K selection over the remaining query pool and rho/(2TK) on each of
the K Gaussian measurements, then re-projects the relaxed dataset onto the
full accumulated measured set. Multiple query classes run as sequential
phases against one shared budget and one warm-started relaxed dataset.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .privacy import PrivacyAccountant, gaussian_measure, gumbel_topk
from .projection import AnnealConfig, relaxed_projection_anneal
from .queries import CompiledQueries, QuerySet, SigmoidParams
from .schema import DiscreteDataset, RelaxedDataset, Schema, sample_discrete


@dataclass(frozen=True)
class Phase:
    label: str
    queries: QuerySet
    epochs: int


@dataclass
class EngineConfig:
    epsilon: float
    delta: float
    phases: list
    queries_per_epoch: int = 10
    synthetic_rows: int = 1000
    anneal: AnnealConfig = field(default_factory=AnnealConfig)
    seed: int = 0
    zero_noise: bool = False  # test hook: disables selection and measurement noise
    score_rounded: bool = False  # score selection on a rounded snapshot instead
    compute_dtype: str = "float32"  # floating type of the projection internals

    @property
    def total_epochs(self) -> int:
        return sum(p.epochs for p in self.phases)

    def validate(self) -> None:
        if not self.epsilon > 0:
            raise ParameterError("epsilon must be positive")
        if not 0 < self.delta < 1:
            raise ParameterError("delta must lie in (0, 1)")
        if self.queries_per_epoch < 1 or self.synthetic_rows < 1:
            raise ParameterError("queries_per_epoch and synthetic_rows must be >= 1")
        if self.total_epochs < 1:
            raise ParameterError("need at least one epoch")
        if self.compute_dtype not in ("float32", "float64"):
            raise ParameterError("compute_dtype must be 'float32' or 'float64'")
        for p in self.phases:
            if p.epochs < 1:
                raise ParameterError(f"phase {p.label!r}: epochs must be >= 1")
            if p.epochs * self.queries_per_epoch > len(p.queries):
                raise ParameterError(
                    f"phase {p.label!r}: T*K = {p.epochs * self.queries_per_epoch} "
                    f"exceeds pool size {len(p.queries)}"
                )


@dataclass
class EpochDiagnostics:
    phase: str
    epoch: int
    selected_ids: list
    pre_loss: float
    post_loss: float
    measured_mean_error: float  # exact error over the measured set, post-projection


@dataclass
class EngineState:
    accountant: PrivacyAccountant
    relaxed: RelaxedDataset
    measured: list  # (StatQuery, NoisyMeasurement) in measurement order
    epochs_run: int = 0
    diagnostics: list = field(default_factory=list)


def init_relaxed_uniform(schema: Schema, n_hat: int, rng: np.random.Generator) -> RelaxedDataset:
    """Uniformly random feasible point: flat-simplex blocks, Uniform[0,1] nums.

    Simplex draws use normalized exponential variates, which are exactly
    uniform over each block.
    """
    cat = np.zeros((n_hat, schema.one_hot_width))
    for col in schema.cat_indices:
        sl = schema.block_slice(col)
        e = rng.standard_exponential((n_hat, schema.columns[col].arity))
        cat[:, sl] = e / e.sum(axis=1, keepdims=True)
    num = rng.random((n_hat, len(schema.num_indices)))
    return RelaxedDataset(schema=schema, cat=cat, num=num)


def errors_for_selection(
    data: DiscreteDataset,
    relaxed: RelaxedDataset,
    pool: list,
    sigma: float,
    exact_answers: np.ndarray | None = None,
    rounded_seed: int | None = None,
) -> np.ndarray:
    """Per-query |q(D) - q(D_hat)| scores used by noisy selection.

    The synthetic side uses the sigmoid relaxation at the given (final
    schedule) sigma by default; pass rounded_seed to score against a rounded
    snapshot instead.
    """
    if not pool:
        raise ParameterError("empty selection pool")
    compiled = CompiledQueries(pool, data.schema)
    if exact_answers is None:
        exact_answers = compiled.eval_discrete(data)
    if rounded_seed is not None:
        snapshot = sample_discrete(relaxed, rounded_seed)
        synth = compiled.eval_discrete(snapshot)
    else:
        synth = compiled.eval_relaxed(relaxed, SigmoidParams(sigma))
    return np.abs(exact_answers - synth)


def rappp_fit(data: DiscreteDataset, cfg: EngineConfig) -> tuple[DiscreteDataset, EngineState]:
    """Run the full adaptive fit and sample a discrete synthetic dataset."""
    cfg.validate()
    if data.n < 1:
        raise ParameterError("empty dataset")
    schema = data.schema
    big_t = cfg.total_epochs
    k = cfg.queries_per_epoch
    accountant = PrivacyAccountant.from_eps_delta(cfg.epsilon, cfg.delta)
    rho = accountant.rho_total

    seq = np.random.SeedSequence(cfg.seed)
    init_seed, select_seed, measure_seed, sample_seed, round_seed = seq.spawn(5)
    select_rng = np.random.default_rng(select_seed)
    measure_rng = np.random.default_rng(measure_seed)
    relaxed = init_relaxed_uniform(schema, cfg.synthetic_rows, np.random.default_rng(init_seed))

    sigma_final = cfg.anneal.sigma_final
    measured: list = []
    measured_queries: list = []
    targets: list = []
    exact_values: list = []
    state = EngineState(accountant=accountant, relaxed=relaxed, measured=measured)

    epoch = 0
    for phase in cfg.phases:
        pool = list(phase.queries.queries)
        pool_compiled = CompiledQueries(pool, schema)
        exact = pool_compiled.eval_discrete(data)
        remaining = list(range(len(pool)))
        for _ in range(phase.epochs):
            epoch += 1
            rem_queries = [pool[i] for i in remaining]
            scores = errors_for_selection(
                data,
                relaxed,
                rem_queries,
                sigma_final,
                exact_answers=exact[remaining],
                rounded_seed=(int(np.random.default_rng(round_seed).integers(2**31)) + epoch)
                if cfg.score_rounded
                else None,
            )
            picked = gumbel_topk(
                scores,
                k,
                rho / (2.0 * big_t),
                data.n,
                select_rng,
                accountant=accountant,
                label=f"select/{phase.label}/epoch{epoch}",
                zero_noise=cfg.zero_noise,
            )
            chosen = [remaining[i] for i in picked]
            for i in chosen:
                meas = gaussian_measure(
                    float(exact[i]),
                    data.n,
                    rho / (2.0 * big_t * k),
                    measure_rng,
                    accountant=accountant,
                    query_id=i,
                    epoch=epoch,
                    label=f"measure/{phase.label}/epoch{epoch}/q{i}",
                    zero_noise=cfg.zero_noise,
                )
                measured.append((pool[i], meas))
                measured_queries.append(pool[i])
                targets.append(meas.value)
                exact_values.append(float(exact[i]))
            remaining = [i for i in remaining if i not in set(chosen)]

            compiled_measured = CompiledQueries(
                measured_queries, schema, dtype=np.dtype(cfg.compute_dtype)
            )
            pre_loss = float(
                np.sum(
                    (
                        np.asarray(targets)
                        - compiled_measured.eval_relaxed(relaxed, SigmoidParams(sigma_final))
                    )
                    ** 2
                )
            )
            relaxed, report = relaxed_projection_anneal(
                compiled_measured, targets, relaxed, cfg.anneal
            )
            state.relaxed = relaxed
            exact_measured = np.asarray(exact_values)
            post_vals = compiled_measured.eval_relaxed(relaxed, SigmoidParams(sigma_final))
            state.diagnostics.append(
                EpochDiagnostics(
                    phase=phase.label,
                    epoch=epoch,
                    selected_ids=chosen,
                    pre_loss=pre_loss,
                    post_loss=report.phases[-1].loss,
                    measured_mean_error=float(np.abs(exact_measured - post_vals).mean()),
                )
            )
            state.epochs_run = epoch

    synthetic = sample_discrete(relaxed, int(np.random.default_rng(sample_seed).integers(2**31)))
    return synthetic, state
