"""Adam training loop, sequence augmentation, and early stopping."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .model import ModelConfig, ModelError, ModelParams, init_params, loss_and_grads, predict_scores


@dataclass(frozen=True)
class AugmentConfig:
    noise_sigma: float = 0.05
    max_shift_steps: int = 10
    mask_fraction: float = 0.05


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 8
    lr: float = 3e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    early_stop_patience: int = 10
    val_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.augment, dict):
            object.__setattr__(self, "augment", AugmentConfig(**self.augment))
        if not self.lr > 0:
            raise ModelError("lr must be positive")
        if self.epochs < 1:
            raise ModelError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ModelError("batch_size must be >= 1")
        if not 0.0 < self.val_fraction < 1.0:
            raise ModelError("val_fraction must lie in (0, 1)")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return replace(cls(), **d)


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_accuracy: float
    val_loss: float


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0


def adam_init(params: ModelParams):
    return AdamState(params.zeros_like(), params.zeros_like(), 0)


def adam_step(params: ModelParams, grads, state: AdamState, t, cfg: TrainConfig):
    """Bias-corrected Adam update, in place; returns ``(params, state)``."""
    if t < 1:
        raise ModelError("Adam step index starts at 1")
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, g in grads.items():
        m = state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        params.tensors[name] -= cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
    state.t = t
    return params, state


def augment_sequence(x, aug: AugmentConfig, seed, n_protected=2, channel_scale=None):
    """Noise on the leading (audio) channels, circular time shift, time mask.

    The last ``n_protected`` channels (smile channels) receive no noise.
    ``channel_scale`` rescales the noise per channel so it is comparable
    across features with different units.
    """
    x = np.array(x, dtype=np.float64, copy=True)
    T, d = x.shape
    rng = np.random.Generator(np.random.PCG64(seed))
    n_audio = d - n_protected
    if aug.noise_sigma > 0 and n_audio > 0:
        scale = np.ones(n_audio) if channel_scale is None else np.asarray(channel_scale)[:n_audio]
        x[:, :n_audio] += aug.noise_sigma * scale * rng.standard_normal((T, n_audio))
    if aug.max_shift_steps > 0:
        shift = int(rng.integers(-aug.max_shift_steps, aug.max_shift_steps + 1))
        x = np.roll(x, shift, axis=0)
    n_mask = math.ceil(aug.mask_fraction * T) if aug.mask_fraction > 0 else 0
    if n_mask >= T:
        x[:] = 0.0
    elif n_mask > 0:
        start = int(rng.integers(0, T - n_mask + 1))
        x[start : start + n_mask] = 0.0
    return x


def holdout_split(pairs, fraction):
    """Deterministic stratified split of ``(x, label)`` pairs into (fit, val).

    The last ``ceil(fraction * n)`` items of each class, in input order, are
    held out, keeping at least one item of the class on each side.
    """
    by_label = {}
    for i, (_, y) in enumerate(pairs):
        by_label.setdefault(int(y), []).append(i)
    held = set()
    for idx in by_label.values():
        if len(idx) < 2:
            continue
        k = min(max(math.ceil(fraction * len(idx)), 1), len(idx) - 1)
        held.update(idx[-k:])
    fit = [p for i, p in enumerate(pairs) if i not in held]
    val = [p for i, p in enumerate(pairs) if i in held]
    return fit, val


def fit_normalization(xs):
    """Per-channel mean and std over all steps of all training sequences."""
    flat = np.concatenate([np.asarray(x) for x in xs], axis=0)
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    return mean, np.where(std > 1e-8, std, 1.0)


def accuracy(params, xs, ys, threshold=0.5):
    scores = predict_scores(params, np.stack(xs))
    return float(np.mean((scores >= threshold).astype(int) == np.asarray(ys)))


def _bce(params, xs, ys):
    p = predict_scores(params, np.stack(xs))
    y = np.asarray(ys, dtype=np.float64)
    return float(np.mean(-(y * np.log(p) + (1 - y) * np.log(1 - p))))


def train(model_cfg: ModelConfig, train_cfg: TrainConfig, train_set, val_set, n_protected=2, log_fn=None):
    """Train on ``(x, label)`` pairs; return best-validation params and the epoch log.

    Per epoch: seeded shuffle, augmented mini-batches, dropout, Adam. Training
    stops once validation accuracy has not improved for
    ``early_stop_patience`` epochs. Ties in validation accuracy keep the
    epoch with the lower validation loss.
    """
    if not train_set or not val_set:
        raise ModelError("train and validation sets must be non-empty")
    xs = [np.asarray(x, dtype=np.float64) for x, _ in train_set]
    ys = [int(y) for _, y in train_set]
    vxs = [np.asarray(x, dtype=np.float64) for x, _ in val_set]
    vys = [int(y) for _, y in val_set]

    params = init_params(model_cfg, xs[0].shape[1])
    params.input_mean, params.input_scale = fit_normalization(xs)
    state = adam_init(params)
    rng = np.random.Generator(np.random.PCG64(train_cfg.seed))
    aug = train_cfg.augment

    log = []
    best = (params.copy(), -1.0, math.inf)
    best_acc_for_patience = -1.0
    stale = 0
    step = 0
    for epoch in range(1, train_cfg.epochs + 1):
        order = rng.permutation(len(xs))
        losses, correct = [], 0
        for start in range(0, len(order), train_cfg.batch_size):
            idx = order[start : start + train_cfg.batch_size]
            batch = []
            for i in idx:
                seed = int(rng.integers(2**63))
                batch.append((augment_sequence(xs[i], aug, seed, n_protected, params.input_scale), ys[i]))
            step += 1
            loss, grads, p = loss_and_grads(params, batch, train_mode=True, dropout_seed=int(rng.integers(2**63)))
            adam_step(params, grads, state, step, train_cfg)
            losses.append(loss * len(idx))
            correct += int(np.sum((p >= 0.5).astype(int) == np.array([b[1] for b in batch])))
        val_acc = accuracy(params, vxs, vys)
        val_loss = _bce(params, vxs, vys)
        entry = EpochLog(epoch, sum(losses) / len(xs), correct / len(xs), val_acc, val_loss)
        log.append(entry)
        if log_fn:
            log_fn(entry)
        if val_acc > best[1] or (val_acc == best[1] and val_loss < best[2]):
            best = (params.copy(), val_acc, val_loss)
        if val_acc > best_acc_for_patience:
            best_acc_for_patience = val_acc
            stale = 0
        else:
            stale += 1
            if stale >= train_cfg.early_stop_patience:
                break
    return best[0], log
