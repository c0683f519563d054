"""Losses, Adam optimizer, plateau learning-rate scheduler and training loop.

The loss couples a plain L1 term with a luminance-chrominance consistency
term, both applied to the intermediate reconstruction and the refined output,
and the whole sum is scaled by the regularization coefficient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .color import decompose
from .metrics import psnr
from .model import EnhancementModel, save_checkpoint

__all__ = [
    "TrainState",
    "TrainConfig",
    "lcc_distance",
    "total_loss",
    "adam_step",
    "plateau_step",
    "train",
]


@dataclass
class TrainState:
    """Optimizer moments, step counter, learning rate and scheduler memory."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8
    lambda_r: float = 0.2
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    # plateau scheduler memory
    sched_factor: float = 0.5
    sched_patience: int = 5
    sched_threshold: float = 1e-4
    sched_min_lr: float = 1e-6
    best_metric: float = -np.inf
    plateau_count: int = 0


@dataclass
class TrainConfig:
    """Desk-scale defaults for the training loop; every field overridable."""

    steps: int = 2000
    batch_size: int = 4
    patch: int = 32
    lr: float = 1e-4
    lambda_r: float = 0.2
    val_interval: int = 100
    scheduler_start_step: int = 100_000
    checkpoint_interval: int = 500
    seed: int = 0


def lcc_distance(gt: Tensor, pred: Tensor) -> Tensor:
    """Mean over pixels of |dL| + sum_k |dC_k| between two images."""
    if gt.shape != pred.shape:
        raise ad.DimensionError(
            f"lcc_distance shape mismatch: {gt.shape} vs {pred.shape}")
    lc_gt = decompose(gt)
    lc_pred = decompose(pred)
    n = gt.shape[1] * gt.shape[2]
    lum_term = (lc_gt.luminance - lc_pred.luminance).abs().sum()
    chroma_term = (lc_gt.chrominance - lc_pred.chrominance).abs().sum()
    return (lum_term + chroma_term) / n


def total_loss(gt: Tensor, i_rec: Tensor, i_ref: Tensor,
               lambda_r: float = 0.2) -> Tensor:
    """lambda_r * (L1 terms + consistency terms) over both outputs."""
    if gt.shape != i_rec.shape or gt.shape != i_ref.shape:
        raise ad.DimensionError(
            f"total_loss shape mismatch: {gt.shape}, {i_rec.shape}, {i_ref.shape}")
    l_r = (gt - i_rec).abs().mean() + (gt - i_ref).abs().mean()
    l_lc = lcc_distance(gt, i_rec) + lcc_distance(gt, i_ref)
    return lambda_r * (l_r + l_lc)


def adam_step(state: TrainState, params: list[Parameter]) -> None:
    """Bias-corrected Adam update; zeroes gradients afterwards."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p in params:
        g = p.grad
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise ad.ContractError(f"non-finite gradient for parameter {p.name}")
        m = state.m.setdefault(p.name, np.zeros_like(p.data))
        v = state.v.setdefault(p.name, np.zeros_like(p.data))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data = p.data - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.grad = np.zeros_like(p.data)


def plateau_step(state: TrainState, metric: float) -> float:
    """Halve the learning rate when the metric stops improving.

    The metric is maximized; improvement below ``sched_threshold`` counts as
    a plateau.  Returns the (possibly reduced) learning rate.
    """
    if metric > state.best_metric + state.sched_threshold:
        state.best_metric = metric
        state.plateau_count = 0
    else:
        state.plateau_count += 1
        if state.plateau_count > state.sched_patience:
            state.lr = max(state.lr * state.sched_factor, state.sched_min_lr)
            state.plateau_count = 0
    return state.lr


class PairDataset:
    """In-memory list of (low, reference) image arrays with seeded sampling."""

    def __init__(self, pairs: list[tuple[np.ndarray, np.ndarray]]):
        if not pairs:
            raise ValueError("dataset is empty")
        self.pairs = pairs

    def __len__(self) -> int:
        return len(self.pairs)

    def batches(self, rng: np.random.Generator, batch_size: int):
        """Reshuffled epochs, yielding lists of (low, reference) pairs."""
        while True:
            order = rng.permutation(len(self.pairs))
            for start in range(0, len(order), batch_size):
                chunk = order[start:start + batch_size]
                yield [self.pairs[i] for i in chunk]


def _random_crop(pair, patch: int, rng: np.random.Generator):
    low, ref = pair
    _, h, w = low.shape
    if h <= patch or w <= patch:
        return low, ref
    r = int(rng.integers(0, h - patch + 1))
    c = int(rng.integers(0, w - patch + 1))
    return low[:, r:r + patch, c:c + patch], ref[:, r:r + patch, c:c + patch]


def train(model: EnhancementModel, dataset: PairDataset, config: TrainConfig,
          log_path=None, checkpoint_path=None, state: TrainState | None = None):
    """Run the optimization loop; returns (state, loss history).

    Writes one tab-separated record per validation to ``log_path``
    (step, lr, train loss, validation PSNR) when given.
    """
    if state is None:
        state = TrainState(lr=config.lr, lambda_r=config.lambda_r)
    rng = ad.make_rng(config.seed)
    params = model.parameters()
    history: list[float] = []
    log_fh = open(log_path, "a") if log_path is not None else None

    try:
        batch_iter = dataset.batches(rng, config.batch_size)
        for _ in range(config.steps):
            batch = next(batch_iter)
            losses = []
            model.zero_grad()
            for pair in batch:
                low, ref = _random_crop(pair, config.patch, rng)
                i_rec, i_ref = model.forward(Tensor(low), training=True)
                losses.append(total_loss(Tensor(ref), i_rec, i_ref, state.lambda_r))
            batch_loss = losses[0]
            for extra in losses[1:]:
                batch_loss = batch_loss + extra
            batch_loss = batch_loss / len(losses)
            batch_loss.backward()
            adam_step(state, params)
            history.append(batch_loss.item())

            if config.val_interval and state.step % config.val_interval == 0:
                val_psnr = _validate(model, dataset)
                if state.step >= config.scheduler_start_step:
                    plateau_step(state, val_psnr)
                if log_fh is not None:
                    log_fh.write(f"{state.step}\t{state.lr:.10g}\t"
                                 f"{history[-1]:.10g}\t{val_psnr:.6f}\n")
                    log_fh.flush()
            if (checkpoint_path is not None and config.checkpoint_interval
                    and state.step % config.checkpoint_interval == 0):
                save_checkpoint(model, checkpoint_path)
    finally:
        if log_fh is not None:
            log_fh.close()
    if checkpoint_path is not None:
        save_checkpoint(model, checkpoint_path)
    return state, history


def _validate(model: EnhancementModel, dataset: PairDataset,
              max_pairs: int = 4) -> float:
    scores = []
    for low, ref in dataset.pairs[:max_pairs]:
        _, i_ref = model.forward(Tensor(low), training=False)
        scores.append(psnr(i_ref.data, ref))
    return float(np.mean(scores))
