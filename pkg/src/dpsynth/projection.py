"""Relaxed projection with sigmoid temperature annealing.

Minimizes the squared loss between relaxed query values and target answers by
first-order descent, starting at a low inverse temperature and doubling it
once the gradient norm stalls. Each step is followed by a feasibility
projection back onto the simplex-block domain.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import OptimizationError, ParameterError
from .queries import CompiledQueries, SigmoidParams, StatQuery
from .schema import RelaxedDataset, project_to_feasible


@dataclass(frozen=True)
class AnnealConfig:
    """Annealing schedule and optimizer settings.

    Inverse temperature runs sigma_initial * 2^(j-1) for j = 1..doublings.
    Each phase steps until the pre-projection gradient norm drops below
    grad_stop or max_inner_steps is hit. Setting beta1 = beta2 = 0 recovers
    plain (sign-preserving, per-coordinate normalized) gradient descent.
    """

    sigma_initial: float = 2.0
    doublings: int = 10
    grad_stop: float = 1e-3
    max_inner_steps: int = 500
    step_size: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    reset_moments: bool = True

    def __post_init__(self):
        if self.sigma_initial <= 0 or self.grad_stop <= 0 or self.step_size <= 0:
            raise ParameterError("sigma_initial, grad_stop and step_size must be positive")
        if self.doublings < 1 or self.max_inner_steps < 1:
            raise ParameterError("doublings and max_inner_steps must be >= 1")

    @property
    def sigma_final(self) -> float:
        return self.sigma_initial * 2.0 ** (self.doublings - 1)


@dataclass
class PhaseTrace:
    sigma: float
    steps: int
    loss: float
    grad_norm: float


@dataclass
class ProjectionReport:
    phases: list = field(default_factory=list)
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {
            "wall_time": self.wall_time,
            "phases": [
                {"sigma": p.sigma, "steps": p.steps, "loss": p.loss, "grad_norm": p.grad_norm}
                for p in self.phases
            ],
        }


class _Adam:
    """Adaptive-moment optimizer over the (cat, num) matrix pair."""

    def __init__(self, cfg: AnnealConfig, cat_shape, num_shape):
        self.cfg = cfg
        self.m_cat = np.zeros(cat_shape)
        self.v_cat = np.zeros(cat_shape)
        self.m_num = np.zeros(num_shape)
        self.v_num = np.zeros(num_shape)
        self.t = 0

    def reset(self):
        self.m_cat[:] = 0.0
        self.v_cat[:] = 0.0
        self.m_num[:] = 0.0
        self.v_num[:] = 0.0
        self.t = 0

    def step(self, cat, num, g_cat, g_num):
        cfg = self.cfg
        self.t += 1
        for x, g, m, v in ((cat, g_cat, self.m_cat, self.v_cat), (num, g_num, self.m_num, self.v_num)):
            if x.size == 0:
                continue
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            m_hat = m / (1.0 - cfg.beta1**self.t) if cfg.beta1 else m
            v_hat = v / (1.0 - cfg.beta2**self.t) if cfg.beta2 else v
            x -= cfg.step_size * m_hat / (np.sqrt(v_hat) + cfg.eps)


def relaxed_projection_anneal(
    queries: Sequence[StatQuery] | CompiledQueries,
    targets: Sequence[float],
    init: RelaxedDataset,
    cfg: AnnealConfig,
) -> tuple[RelaxedDataset, ProjectionReport]:
    """Fit a relaxed dataset to target answers under the annealing schedule.

    Deterministic given the inputs; the returned dataset is always feasible.
    Raises OptimizationError (carrying the partial trace) on non-finite loss
    or gradient.
    """
    compiled = queries if isinstance(queries, CompiledQueries) else CompiledQueries(queries, init.schema)
    targets = np.asarray(targets, dtype=float)
    if len(targets) != compiled.m or compiled.m < 1:
        raise ParameterError("need one target per query and at least one query")
    start = time.perf_counter()
    report = ProjectionReport()
    current = project_to_feasible(init)
    opt = _Adam(cfg, current.cat.shape, current.num.shape)
    for j in range(cfg.doublings):
        sig = SigmoidParams(cfg.sigma_initial * 2.0**j)
        if cfg.reset_moments:
            opt.reset()
        steps = 0
        loss, grad_norm = np.inf, np.inf
        first_loss = None
        best_loss = np.inf
        best = None
        while True:
            loss, g_cat, g_num = compiled.loss_and_grad(targets, current, sig)
            if not np.isfinite(loss) or not (np.isfinite(g_cat).all() and np.isfinite(g_num).all()):
                report.wall_time = time.perf_counter() - start
                raise OptimizationError(
                    f"non-finite loss or gradient at sigma={sig.sigma:g}", report=report
                )
            grad_norm = float(np.sqrt((g_cat * g_cat).sum() + (g_num * g_num).sum()))
            if first_loss is None:
                first_loss = loss
            if loss < best_loss:
                best_loss = loss
                best = (current.cat.copy(), current.num.copy())
            if grad_norm <= cfg.grad_stop or steps >= cfg.max_inner_steps:
                break
            opt.step(current.cat, current.num, g_cat, g_num)
            current = project_to_feasible(current)
            steps += 1
        # Adaptive steps can overshoot near the cap; pin the phase endpoint
        # to the best iterate seen so the per-phase loss never increases.
        if loss > best_loss and best is not None:
            current = RelaxedDataset(current.schema, best[0], best[1])
            loss = best_loss
        report.phases.append(PhaseTrace(sigma=sig.sigma, steps=steps, loss=loss, grad_norm=grad_norm))
    report.wall_time = time.perf_counter() - start
    return current, report
