"""Training loop for the toy classifier.

Schedule: Adam, batch size 32, label smoothing 0.1, learning rate decayed
by 0.1 after 7 epochs without validation-loss improvement, early stop once
the learning rate falls below 1e-7, at most 60 epochs.  Training is
deterministic under a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import net


@dataclass
class TrainConfig:
    batch_size: int = 32
    max_epochs: int = 60
    label_smoothing: float = 0.1
    initial_lr: float = 3e-3
    plateau_factor: float = 0.1
    plateau_patience: int = 7
    early_stop_lr: float = 1e-7
    seed: int = 0
    channels: tuple[int, int, int] = (8, 16, 32)
    final_channels: int = 32
    augment: bool = True
    free_rotation_prob: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ValueError(f"label smoothing must be in [0, 1), got {self.label_smoothing}")
        if not 0.0 < self.plateau_factor < 1.0:
            raise ValueError(f"plateau factor must be in (0, 1), got {self.plateau_factor}")


class PlateauSchedule:
    """Multiplies the LR by `factor` after `patience` epochs without improvement.

    step() returns (lr for the next epoch, stop flag); stop fires as soon
    as the decayed LR drops below `min_lr`.
    """

    def __init__(self, lr: float, factor: float = 0.1, patience: int = 7, min_lr: float = 1e-7):
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.min_lr = min_lr
        self.best = np.inf
        self.bad_epochs = 0

    def step(self, val_loss: float) -> tuple[float, bool]:
        if val_loss < self.best:
            self.best = val_loss
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.lr *= self.factor
                self.bad_epochs = 0
        return self.lr, self.lr < self.min_lr


class Adam:
    def __init__(self, params: dict[str, np.ndarray], beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            params[k] -= lr * (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + self.eps)


def augment_image(image: np.ndarray, rng: np.random.Generator, free_rotation_prob: float = 0.5) -> np.ndarray:
    """Random flips, 90-degree rotations, and an optional free-angle rotation
    with reflect padding. image: [C, H, W]."""
    out = image
    if rng.random() < 0.5:
        out = out[:, :, ::-1]
    if rng.random() < 0.5:
        out = out[:, ::-1, :]
    k = int(rng.integers(0, 4))
    if k:
        out = np.rot90(out, k, axes=(1, 2))
    if rng.random() < free_rotation_prob:
        angle = float(rng.uniform(0.0, 360.0))
        out = ndimage.rotate(out, angle, axes=(2, 1), reshape=False, order=1, mode="reflect")
    return np.ascontiguousarray(out)


def evaluate_loss(images: np.ndarray, labels: np.ndarray, params, eps: float, batch_size: int = 64) -> float:
    total = 0.0
    for start in range(0, len(images), batch_size):
        xb = images[start : start + batch_size]
        yb = labels[start : start + batch_size]
        logits, _ = net.forward(xb, params)
        loss, _ = net.smoothed_ce_batch(logits, yb, eps)
        total += loss * len(xb)
    return total / len(images)


def predict_scores(images: np.ndarray, params, batch_size: int = 64) -> np.ndarray:
    """School-class softmax scores for a stack of images."""
    out = np.empty(len(images))
    for start in range(0, len(images), batch_size):
        logits, _ = net.forward(images[start : start + batch_size], params)
        out[start : start + len(logits)] = net.softmax(logits)[:, net.SCHOOL]
    return out


def train_toy(
    train_images: np.ndarray,
    train_labels: np.ndarray,
    val_images: np.ndarray,
    val_labels: np.ndarray,
    config: TrainConfig,
) -> tuple[dict[str, np.ndarray], list[dict]]:
    """Returns (trained params, per-epoch history of losses and LR)."""
    if len(train_images) == 0:
        raise ValueError("empty training set")
    params = net.init_params(config.seed, config.channels, config.final_channels)
    optimizer = Adam(params)
    schedule = PlateauSchedule(
        config.initial_lr, config.plateau_factor, config.plateau_patience, config.early_stop_lr
    )
    rng = np.random.default_rng(config.seed)
    history: list[dict] = []
    lr = config.initial_lr
    n = len(train_images)
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch_idx = order[start : start + config.batch_size]
            if config.augment:
                xb = np.stack(
                    [
                        augment_image(train_images[i], rng, config.free_rotation_prob)
                        for i in batch_idx
                    ]
                )
            else:
                xb = train_images[batch_idx]
            yb = train_labels[batch_idx]
            logits, cache = net.forward(xb, params)
            loss, dlogits = net.smoothed_ce_batch(logits, yb, config.label_smoothing)
            grads = net.backward(cache, params, dlogits)
            optimizer.step(params, grads, lr)
            epoch_loss += loss * len(batch_idx)
        val_loss = evaluate_loss(val_images, val_labels, params, config.label_smoothing)
        history.append({"epoch": epoch, "train_loss": epoch_loss / n, "val_loss": val_loss, "lr": lr})
        lr, stop = schedule.step(val_loss)
        if stop:
            break
    return params, history


def lr_at(iteration: int, iterations: int, lr_min: float, lr_max: float) -> float:
    """Log-uniform LR ramp with exact endpoints."""
    if iterations < 2:
        return lr_max
    frac = iteration / (iterations - 1)
    return lr_min * (lr_max / lr_min) ** frac


def lr_range_test(
    train_images: np.ndarray,
    train_labels: np.ndarray,
    config: TrainConfig,
    lr_min: float = 1e-6,
    lr_max: float = 1e-3,
    iterations: int = 1000,
    smoothing: float = 0.98,
) -> tuple[float, list[dict]]:
    """LR range test: ramp the LR log-uniformly, suggest the LR at the
    steepest descent of the smoothed loss curve."""
    if len(train_images) == 0:
        raise ValueError("empty training set")
    params = net.init_params(config.seed, config.channels, config.final_channels)
    optimizer = Adam(params)
    rng = np.random.default_rng(config.seed)
    n = len(train_images)
    curve: list[dict] = []
    ema = None
    for it in range(iterations):
        lr = lr_at(it, iterations, lr_min, lr_max)
        batch_idx = rng.integers(0, n, size=min(config.batch_size, n))
        logits, cache = net.forward(train_images[batch_idx], params)
        loss, dlogits = net.smoothed_ce_batch(logits, train_labels[batch_idx], config.label_smoothing)
        grads = net.backward(cache, params, dlogits)
        optimizer.step(params, grads, lr)
        ema = loss if ema is None else smoothing * ema + (1.0 - smoothing) * loss
        smoothed = ema / (1.0 - smoothing ** (it + 1))
        curve.append({"iteration": it, "lr": lr, "loss": loss, "smoothed_loss": smoothed})
    drops = np.diff([c["smoothed_loss"] for c in curve])
    suggested = curve[int(np.argmin(drops)) + 1]["lr"] if len(curve) > 1 else lr_max
    return suggested, curve
