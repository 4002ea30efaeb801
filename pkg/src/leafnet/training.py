"""Categorical cross-entropy, Adam, and the minibatch training loop.

Datasets are anything with `__len__`, `batches(batch_size, seed, epoch)`
yielding (inputs, labels) lists, and `samples()` yielding (input, label)
pairs in a fixed order; see leafnet.data for the two implementations.

All randomness (shuffle order, dropout masks) derives from the config seed,
so identical seeds give bit-identical histories and trained parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import models as M
from .errors import ConfigError, NumericError, TrainingDiverged

CLIP_EPS = 1e-12  # floor inside -ln(p); irrelevant for any reportable loss


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    lr: float = 1e-4
    seed: int = 42

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError(f"epochs and batch size must be >= 1: {self}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class AdamState:
    """First/second moment accumulators, one pair per parameter tensor."""
    m: list[dict[str, np.ndarray]]
    v: list[dict[str, np.ndarray]]
    t: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: list[dict[str, np.ndarray]], lr: float = 1e-4,
                   **kwargs) -> "AdamState":
        zeros = lambda ps: {k: np.zeros_like(p) for k, p in ps.items()}
        return cls(m=[zeros(p) for p in params], v=[zeros(p) for p in params],
                   lr=lr, **kwargs)


def adam_step(params: list[dict[str, np.ndarray]],
              grads: list[dict[str, np.ndarray]],
              state: AdamState) -> AdamState:
    """One bias-corrected Adam update; mutates params in place."""
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        for key in p:
            gk = g[key]
            if gk.shape != p[key].shape:
                raise ConfigError(
                    f"grad shape {gk.shape} != param shape {p[key].shape} for {key!r}")
            m[key] = state.beta1 * m[key] + (1.0 - state.beta1) * gk
            v[key] = state.beta2 * v[key] + (1.0 - state.beta2) * gk * gk
            m_hat = m[key] / bc1
            v_hat = v[key] / bc2
            p[key] -= (state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)).astype(p[key].dtype)
    return state


def categorical_cross_entropy(probs: np.ndarray, target: int) -> tuple[float, np.ndarray]:
    """-ln(p[target]) and the fused softmax gradient probs - onehot(target)."""
    n = probs.shape[0]
    if not 0 <= target < n:
        raise ConfigError(f"target {target} out of range for {n} classes")
    loss = -math.log(min(float(probs[target]) + CLIP_EPS, 1.0)) + 0.0
    d_logits = probs.copy()
    d_logits[target] -= 1.0
    return loss, d_logits


def _zero_grads(params: list[dict[str, np.ndarray]]) -> list[dict[str, np.ndarray]]:
    return [{k: np.zeros_like(p) for k, p in ps.items()} for ps in params]


def loss_and_grads(model: M.SequentialModel, x: np.ndarray, target: int,
                   mode: str = "train", rng: np.random.Generator | None = None):
    """Per-sample loss, correctness flag, and parameter gradients."""
    probs, caches = M._forward(model, x, mode, rng)
    loss, d_logits = categorical_cross_entropy(probs, target)
    grads = M.backward(model, caches, d_logits)
    correct = int(np.argmax(probs)) == target
    return loss, correct, grads


def train(model: M.SequentialModel, train_set, valid_set,
          config: TrainConfig | None = None) -> tuple[M.SequentialModel, list[EpochRecord]]:
    """Seeded minibatch training; one Adam step per batch on the mean gradient."""
    cfg = config or TrainConfig()
    if len(train_set) == 0 or len(valid_set) == 0:
        raise ConfigError("train and validation sets must be non-empty")
    state = AdamState.for_params(model.params, lr=cfg.lr)
    dropout_rng = np.random.default_rng([cfg.seed, 0xD0])
    history: list[EpochRecord] = []
    for epoch in range(1, cfg.epochs + 1):
        loss_sum, correct_sum, seen = 0.0, 0, 0
        for batch_idx, (inputs, labels) in enumerate(
                train_set.batches(cfg.batch_size, cfg.seed, epoch - 1)):
            total = _zero_grads(model.params)
            for x, y in zip(inputs, labels):
                try:
                    loss, correct, grads = loss_and_grads(model, x, y, "train", dropout_rng)
                except NumericError as exc:
                    raise TrainingDiverged(epoch, batch_idx, str(exc)) from exc
                if not math.isfinite(loss):
                    raise TrainingDiverged(epoch, batch_idx)
                loss_sum += loss
                correct_sum += correct
                for acc, g in zip(total, grads):
                    for key in acc:
                        acc[key] += g[key]
            scale = 1.0 / len(inputs)
            for acc in total:
                for key in acc:
                    acc[key] *= scale
            state = adam_step(model.params, total, state)
            seen += len(inputs)
        val_loss, val_acc = evaluate_loss_acc(model, valid_set)
        history.append(EpochRecord(epoch, loss_sum / seen, correct_sum / seen,
                                   val_loss, val_acc))
    return model, history


def evaluate_loss_acc(model: M.SequentialModel, dataset) -> tuple[float, float]:
    """Mean cross-entropy and accuracy over a dataset, inference mode."""
    if len(dataset) == 0:
        raise ConfigError("cannot evaluate an empty dataset")
    loss_sum, correct, n = 0.0, 0, 0
    for x, y in dataset.samples():
        probs = M.forward(model, x, mode="infer")
        loss, _ = categorical_cross_entropy(probs, y)
        loss_sum += loss
        correct += int(np.argmax(probs)) == y
        n += 1
    return loss_sum / n, correct / n


def history_to_csv(history: list[EpochRecord]) -> str:
    lines = ["epoch,train_loss,train_acc,val_loss,val_acc"]
    for r in history:
        lines.append(f"{r.epoch},{r.train_loss:.6f},{r.train_acc:.6f},"
                     f"{r.val_loss:.6f},{r.val_acc:.6f}")
    return "\n".join(lines) + "\n"
