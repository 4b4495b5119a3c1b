"""Frame-wise pitch / energy prediction from concatenated speaker, emotion,
and content embeddings. The two heads are separate models trained
independently with an MSE loss; encoder-derived inputs are frozen features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import ShapeError, Tensor
from .nn import AttentionBlock, Dense, LayerNorm, Module, sinusoidal_encoding
from .optim import Adam


class DatasetError(ValueError):
    pass


@dataclass
class ProsodyInputs:
    s: np.ndarray  # [D_s] speaker embedding
    o: np.ndarray  # [D_o] emotion embedding
    c: np.ndarray  # [n_frames, D_c] content sequence

    @property
    def n_frames(self) -> int:
        return self.c.shape[0]


@dataclass
class ProsodyPrediction:
    pitch_hat: np.ndarray
    energy_hat: np.ndarray


def assemble_conditioning(inputs: ProsodyInputs, s_dim: int, o_dim: int,
                          c_dim: int) -> np.ndarray:
    """Row t = [s | o | c_t]; s and o broadcast identically to every frame."""
    if inputs.s.shape != (s_dim,) or inputs.o.shape != (o_dim,) \
            or inputs.c.shape[1:] != (c_dim,):
        raise ShapeError(
            f"got s{inputs.s.shape}, o{inputs.o.shape}, c{inputs.c.shape}; "
            f"expected dims ({s_dim}, {o_dim}, {c_dim})"
        )
    n = inputs.n_frames
    return np.concatenate([
        np.broadcast_to(inputs.s, (n, s_dim)),
        np.broadcast_to(inputs.o, (n, o_dim)),
        inputs.c,
    ], axis=1)


class ProsodyPredictor(Module):
    """Self-attention blocks followed by a feed-forward head, one scalar
    output per frame."""

    def __init__(self, s_dim: int, o_dim: int, c_dim: int,
                 model_dim: int = 64, heads: int = 4, blocks: int = 2,
                 seed: int = 0):
        rng = np.random.default_rng(seed)
        self.s_dim = s_dim
        self.o_dim = o_dim
        self.c_dim = c_dim
        self.model_dim = model_dim
        self.in_proj = Dense(s_dim + o_dim + c_dim, model_dim, rng)
        self.blocks = [AttentionBlock(model_dim, heads, rng)
                       for _ in range(blocks)]
        self.out_norm = LayerNorm(model_dim)
        self.fc = Dense(model_dim, model_dim, rng)
        self.head = Dense(model_dim, 1, rng, zero_init=True)

    def meta(self) -> np.ndarray:
        return np.array([self.s_dim, self.o_dim, self.c_dim, self.model_dim,
                         self.blocks[0].attn.heads, len(self.blocks)],
                        dtype=np.float64)

    @classmethod
    def from_meta(cls, meta: np.ndarray) -> "ProsodyPredictor":
        return cls(*[int(v) for v in meta])

    def forward(self, assembled: np.ndarray) -> Tensor:
        """assembled: [n_frames, D] or [B, n_frames, D] -> per-frame scalars."""
        single = assembled.ndim == 2
        if single:
            assembled = assembled[None]
        seq = assembled.shape[1]
        h = self.in_proj(Tensor(assembled))
        h = h + Tensor(sinusoidal_encoding(np.arange(seq), self.model_dim))
        for block in self.blocks:
            h = block(h)
        out = self.head(self.fc(self.out_norm(h)).relu())
        out = out.reshape(assembled.shape[0], seq)
        return out[0] if single else out

    def predict(self, inputs: ProsodyInputs) -> np.ndarray:
        assembled = assemble_conditioning(inputs, self.s_dim, self.o_dim,
                                          self.c_dim)
        return self.forward(assembled).data


def train_predictor(predictor: ProsodyPredictor, dataset, steps: int,
                    batch_size: int, rng: np.random.Generator,
                    lr: float = 1e-3) -> list:
    """Minimize frame-wise MSE with Adam. dataset: list of
    (ProsodyInputs, target contour) with frame-aligned targets.
    Returns the per-step loss history."""
    if not dataset:
        raise DatasetError("empty dataset")
    assembled, targets = [], []
    for i, (inputs, target) in enumerate(dataset):
        target = np.asarray(target, dtype=np.float64)
        if len(target) != inputs.n_frames:
            raise DatasetError(
                f"clip {i}: target length {len(target)} != content frames "
                f"{inputs.n_frames}"
            )
        assembled.append(assemble_conditioning(inputs, predictor.s_dim,
                                               predictor.o_dim,
                                               predictor.c_dim))
        targets.append(target)

    lengths = {a.shape[0] for a in assembled}
    stackable = len(lengths) == 1
    optimizer = Adam(predictor.parameters(), lr=lr)
    history = []
    for _ in range(steps):
        idx = rng.integers(0, len(dataset), size=min(batch_size, len(dataset)))
        if stackable:
            x = np.stack([assembled[j] for j in idx])
            y = Tensor(np.stack([targets[j] for j in idx]))
            diff = predictor.forward(x) - y
            loss = (diff * diff).mean()
        else:
            total = None
            for j in idx:
                diff = predictor.forward(assembled[j]) - Tensor(targets[j])
                term = (diff * diff).mean()
                total = term if total is None else total + term
            loss = total * (1.0 / len(idx))
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        history.append(float(loss.data))
    return history


def predict_prosody(pitch_predictor: ProsodyPredictor,
                    energy_predictor: ProsodyPredictor,
                    inputs: ProsodyInputs) -> ProsodyPrediction:
    return ProsodyPrediction(pitch_predictor.predict(inputs),
                             energy_predictor.predict(inputs))
