"""Offline pretraining and few-shot adaptation of the detector network.

Three ways to obtain detector weights for a new environment:

* ``pretrain_transfer``: minimize the summed cross-entropy over all offline
  environments by SGD (one minibatch per environment per iteration), then
  fine-tune with :func:`adapt`.
* ``pretrain_maml``: learn an initialization whose single inner gradient
  step adapts well, by descending the meta-loss (query loss after one
  support-set step). The exact meta-gradient per environment is
  (I - a * H_support) @ grad_query; with ``first_order=True`` the Hessian
  term is dropped.
* ``train_scratch``: random initialization straight into :func:`adapt`.

All three are deterministic functions of (datasets, config): randomness
comes only from ``TrainConfig.seed`` / the supplied generator.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .mlp import (
    MLPParams,
    axpy_params,
    embed_input,
    hessian_vector_product,
    init_params,
    loss_grad,
)
from .signal_env import Dataset

__all__ = [
    "TrainConfig",
    "TrainTrace",
    "TaskBatch",
    "pretrain_transfer",
    "maml_inner_update",
    "maml_meta_gradient",
    "maml_meta_step",
    "pretrain_maml",
    "adapt",
    "train_scratch",
]


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters shared by the offline training regimes.

    ``inner_lr`` is the MAML inner-step rate, ``outer_lr`` the SGD rate used
    for both offline updates; ``meta_batch`` environments are drawn per MAML
    iteration; ``support_fraction`` of each dataset feeds the inner step.
    """

    inner_lr: float = 0.2
    outer_lr: float = 0.002
    minibatch: int = 128
    meta_batch: int = 10
    offline_iters: int = 20_000
    adapt_steps: int = 40
    first_order: bool = True
    support_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.inner_lr <= 0 or self.outer_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.minibatch < 1 or self.meta_batch < 1:
            raise ValueError("batch sizes must be >= 1")
        if self.offline_iters < 0 or self.adapt_steps < 0:
            raise ValueError("iteration counts must be >= 0")
        if not (0.0 < self.support_fraction < 1.0):
            raise ValueError("support_fraction must lie in (0, 1)")


class TraceRecord(NamedTuple):
    iteration: int
    loss: float
    stage: str


@dataclass
class TrainTrace:
    """Per-iteration loss log with a strictly increasing iteration index."""

    records: list[TraceRecord] = field(default_factory=list)
    wall_time_s: float = 0.0

    def append(self, iteration: int, loss_value: float, stage: str) -> None:
        if self.records and iteration <= self.records[-1].iteration:
            raise ValueError("trace iterations must be strictly increasing")
        self.records.append(TraceRecord(iteration, float(loss_value), stage))

    def __len__(self) -> int:
        return len(self.records)

    def to_dict(self) -> dict:
        return {
            "records": [[r.iteration, r.loss, r.stage] for r in self.records],
            "wall_time_s": self.wall_time_s,
        }


class TaskBatch(NamedTuple):
    """Embedded support/query minibatches for one environment."""

    support_inputs: np.ndarray
    support_labels: np.ndarray
    query_inputs: np.ndarray
    query_labels: np.ndarray


def _minibatch(ds: Dataset, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return embed_input(ds.z[idx]), ds.labels[idx]


def _check_datasets(datasets: Sequence[Dataset]) -> None:
    if not datasets:
        raise ValueError("need at least one dataset")
    k = datasets[0].k
    if any(ds.k != k or len(ds) == 0 for ds in datasets):
        raise ValueError("datasets must be non-empty and share one dimension")


def pretrain_transfer(
    datasets: Sequence[Dataset],
    layer_sizes: Sequence[int],
    cfg: TrainConfig,
    input_rms: float | None = None,
) -> tuple[MLPParams, TrainTrace]:
    """Shared-parameter pretraining: SGD on the loss summed over environments.

    Each iteration draws one size-``cfg.minibatch`` batch from every
    environment, sums the per-environment gradients and takes one step of
    size ``cfg.outer_lr``. The trace logs the summed minibatch loss.
    ``input_rms`` selects the detection-scaled initialization.
    """
    _check_datasets(datasets)
    rng = np.random.default_rng(cfg.seed)
    params = init_params(layer_sizes, rng, input_rms=input_rms)
    trace = TrainTrace()
    start = time.perf_counter()
    for it in range(cfg.offline_iters):
        grad_sum = np.zeros(params.n_params)
        loss_sum = 0.0
        for ds in datasets:
            idx = rng.integers(0, len(ds), size=cfg.minibatch)
            value, grad = loss_grad(params, *_minibatch(ds, idx))
            grad_sum += grad
            loss_sum += value
        params = axpy_params(params, grad_sum, -cfg.outer_lr)
        trace.append(it, loss_sum, "transfer_offline")
    trace.wall_time_s = time.perf_counter() - start
    return params, trace


def maml_inner_update(
    psi: MLPParams, inputs: np.ndarray, labels: np.ndarray, alpha: float
) -> MLPParams:
    """Single inner SGD step: theta = psi - alpha * grad(loss on the support batch)."""
    _, grad = loss_grad(psi, inputs, labels)
    return axpy_params(psi, grad, -alpha)


def maml_meta_gradient(
    psi: MLPParams, tasks: Sequence[TaskBatch], cfg: TrainConfig
) -> tuple[float, np.ndarray]:
    """Meta-loss and its gradient at ``psi`` over a batch of tasks.

    Per task the inner step gives theta = psi - a*g_s; the query gradient at
    theta is pushed back through the step, contributing
    g_q - a * H_support(psi) @ g_q (the Hessian term is skipped when
    ``cfg.first_order``). Returns (sum of query losses, summed gradient).
    """
    if not tasks:
        raise ValueError("need at least one task batch")
    total = np.zeros(psi.n_params)
    meta_loss = 0.0
    for task in tasks:
        theta = maml_inner_update(psi, task.support_inputs, task.support_labels, cfg.inner_lr)
        q_loss, q_grad = loss_grad(theta, task.query_inputs, task.query_labels)
        meta_loss += q_loss
        if cfg.first_order:
            total += q_grad
        else:
            hv = hessian_vector_product(psi, task.support_inputs, task.support_labels, q_grad)
            total += q_grad - cfg.inner_lr * hv
    return meta_loss, total


def maml_meta_step(
    psi: MLPParams, tasks: Sequence[TaskBatch], cfg: TrainConfig
) -> tuple[MLPParams, float]:
    """One meta-update psi <- psi - outer_lr * meta_gradient; returns (psi', meta-loss)."""
    meta_loss, grad = maml_meta_gradient(psi, tasks, cfg)
    return axpy_params(psi, grad, -cfg.outer_lr), meta_loss


def pretrain_maml(
    datasets: Sequence[Dataset],
    layer_sizes: Sequence[int],
    cfg: TrainConfig,
    input_rms: float | None = None,
) -> tuple[MLPParams, TrainTrace]:
    """MAML pretraining over the offline environments.

    Every dataset is split once into support/query pools
    (``cfg.support_fraction``); each iteration samples ``cfg.meta_batch``
    environments without replacement, draws one support and one query
    minibatch per environment and applies :func:`maml_meta_step`.
    """
    _check_datasets(datasets)
    if cfg.meta_batch > len(datasets):
        raise ValueError(
            f"meta batch {cfg.meta_batch} exceeds the {len(datasets)} available environments"
        )
    rng = np.random.default_rng(cfg.seed)
    params = init_params(layer_sizes, rng, input_rms=input_rms)

    pools = []
    for ds in datasets:
        if len(ds) < 2:
            raise ValueError("each dataset needs at least 2 samples to split")
        perm = rng.permutation(len(ds))
        n_support = min(max(int(round(cfg.support_fraction * len(ds))), 1), len(ds) - 1)
        pools.append((perm[:n_support], perm[n_support:]))

    trace = TrainTrace()
    start = time.perf_counter()
    for it in range(cfg.offline_iters):
        chosen = rng.choice(len(datasets), size=cfg.meta_batch, replace=False)
        tasks = []
        for n in chosen:
            support_pool, query_pool = pools[n]
            ds = datasets[n]
            s_idx = support_pool[rng.integers(0, support_pool.size, size=cfg.minibatch)]
            q_idx = query_pool[rng.integers(0, query_pool.size, size=cfg.minibatch)]
            tasks.append(TaskBatch(*_minibatch(ds, s_idx), *_minibatch(ds, q_idx)))
        params, meta_loss = maml_meta_step(params, tasks, cfg)
        trace.append(it, meta_loss, "maml_offline")
    trace.wall_time_s = time.perf_counter() - start
    return params, trace


def adapt(
    psi_init: MLPParams, adaptation_set: Dataset, lr: float, steps: int
) -> tuple[MLPParams, TrainTrace]:
    """Full-batch gradient descent on the adaptation set from ``psi_init``.

    Runs exactly ``steps`` updates on the entire set (no minibatching); the
    trace records the loss evaluated before each update.
    """
    if len(adaptation_set) == 0:
        raise ValueError("adaptation set must not be empty")
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    inputs = embed_input(adaptation_set.z)
    labels = adaptation_set.labels
    params = psi_init
    trace = TrainTrace()
    start = time.perf_counter()
    for it in range(steps):
        value, grad = loss_grad(params, inputs, labels)
        params = axpy_params(params, grad, -lr)
        trace.append(it, value, "adapt")
    trace.wall_time_s = time.perf_counter() - start
    return params, trace


def train_scratch(
    adaptation_set: Dataset,
    layer_sizes: Sequence[int],
    lr: float,
    steps: int,
    rng: np.random.Generator,
    input_rms: float | None = None,
) -> tuple[MLPParams, TrainTrace]:
    """No-prior-knowledge baseline: random initialization plus :func:`adapt`."""
    init = init_params(layer_sizes, rng, input_rms=input_rms)
    return adapt(init, adaptation_set, lr, steps)
