"""Toy class-conditional diffusion problems used to validate guidance
behaviour on distributions with known statistics."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .autodiff import Tensor, concat
from .diffusion import (GuidanceConfig, NoiseSchedule,
                        ddpm_sample_batch, training_step)
from .nn import Dense, Module, sinusoidal_encoding
from .optim import Adam


@dataclass
class ToyCond:
    label: int
    n_classes: int
    null_flag: bool = False

    def null(self) -> "ToyCond":
        return replace(self, null_flag=True)

    def onehot(self) -> np.ndarray:
        # one extra slot marks the unconditional branch
        v = np.zeros(self.n_classes + 1)
        v[self.n_classes if self.null_flag else self.label] = 1.0
        return v


class ToyDenoiser(Module):
    """MLP noise predictor for low-dimensional data shaped [B, 1, dim]."""

    def __init__(self, dim: int, n_classes: int, hidden: int = 64,
                 t_dim: int = 16, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.dim = dim
        self.n_classes = n_classes
        self.t_dim = t_dim
        self.fc1 = Dense(dim + t_dim + n_classes + 1, hidden, rng)
        self.fc2 = Dense(hidden, hidden, rng)
        self.out = Dense(hidden, dim, rng, zero_init=True)

    def forward(self, x_t: np.ndarray, t, conds) -> Tensor:
        batch = x_t.shape[0]
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (batch,))
        labels = np.stack([c.onehot() for c in conds])
        feats = np.concatenate([
            x_t.reshape(batch, self.dim),
            sinusoidal_encoding(t, self.t_dim),
            labels,
        ], axis=1)
        h = self.fc1(Tensor(feats)).relu()
        h = self.fc2(h).relu()
        return self.out(h).reshape(batch, 1, self.dim)

    def epsilon(self, x_t: np.ndarray, t, conds) -> np.ndarray:
        single = x_t.ndim == 2
        if single:
            x_t = x_t[None]
            conds = [conds]
        out = self.forward(x_t, t, conds).data
        return out[0] if single else out


def mixture_2d(rng: np.random.Generator, n: int, separation: float = 1.0,
               sigma: float = 1.0):
    """Two-component 2-D Gaussian mixture; component l has mean
    ((-1)^(l+1) * separation, 0)."""
    labels = rng.integers(0, 2, size=n)
    means = np.where(labels[:, None] == 1, separation, -separation)
    means = np.concatenate([means, np.zeros((n, 1))], axis=1)
    return means + sigma * rng.standard_normal((n, 2)), labels


def train_mixture_denoiser(schedule: NoiseSchedule, steps: int = 1500,
                           batch_size: int = 128, n_data: int = 4096,
                           dropout_prob: float = 0.2, seed: int = 0,
                           separation: float = 1.0) -> ToyDenoiser:
    rng = np.random.default_rng(seed)
    data, labels = mixture_2d(rng, n_data, separation=separation)
    denoiser = ToyDenoiser(dim=2, n_classes=2, seed=seed + 1)
    optimizer = Adam(denoiser.parameters(), lr=2e-3)
    for _ in range(steps):
        idx = rng.integers(0, n_data, size=batch_size)
        batch = [(data[i].reshape(1, 2), ToyCond(int(labels[i]), 2))
                 for i in idx]
        training_step(denoiser, batch, schedule, dropout_prob, rng,
                      optimizer=optimizer)
    return denoiser


def target_fraction(denoiser: ToyDenoiser, schedule: NoiseSchedule,
                    w1: float, n_samples: int, label: int = 1,
                    seed: int = 0, separation: float = 1.0) -> float:
    """Fraction of guided samples landing nearer the target component."""
    g = GuidanceConfig(w1=w1, w2=0.0)
    conds = [ToyCond(label, 2) for _ in range(n_samples)]
    seeds = [seed + i for i in range(n_samples)]
    samples = ddpm_sample_batch(denoiser, conds, g, None, schedule, seeds,
                                shape=(1, 2))
    x = samples[:, 0, :]
    target_mean = np.array([separation if label == 1 else -separation, 0.0])
    other_mean = -target_mean
    nearer = (np.linalg.norm(x - target_mean, axis=1)
              < np.linalg.norm(x - other_mean, axis=1))
    return float(nearer.mean())


def train_scalar_denoiser(schedule: NoiseSchedule, steps: int = 1200,
                          batch_size: int = 128, n_data: int = 4096,
                          seed: int = 0) -> ToyDenoiser:
    """Unconditional denoiser for 1-D standard normal data."""
    rng = np.random.default_rng(seed)
    data = rng.standard_normal((n_data, 1))
    denoiser = ToyDenoiser(dim=1, n_classes=1, seed=seed + 1)
    optimizer = Adam(denoiser.parameters(), lr=2e-3)
    cond = ToyCond(0, 1)
    for _ in range(steps):
        idx = rng.integers(0, n_data, size=batch_size)
        batch = [(data[i].reshape(1, 1), cond) for i in idx]
        training_step(denoiser, batch, schedule, dropout_prob=0.0, rng=rng,
                      optimizer=optimizer)
    return denoiser
