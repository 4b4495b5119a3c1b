"""DDPM core: noise schedule, forward corruption, denoiser training with
condition dropout, and the guided sampler combining classifier-free and
classifier guidance.

The guided noise estimate at step t is

    eps = (1 + w1) * eps_theta(x_t, s, p, e, c) - w1 * eps_theta(x_t)
          - w2 * sqrt(1 - abar_t) * G

where G is the gradient of the classifier's log-probability of the target
label with respect to x_t. When gradient normalization is enabled, G is
capped at the Frobenius norm of the classifier-free combination before the
w2 term is applied: scale = min(1, ||eps_cfg|| / ||G||), skipped when
||G|| = 0. Capping (instead of always matching the norm) keeps a confident
classifier's near-zero gradient from being inflated to noise scale on every
step, which destabilizes long sampling chains.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .autodiff import ShapeError, Tensor, concat
from .nn import AttentionBlock, Dense, LayerNorm, Module, sinusoidal_encoding


class ParameterError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


class SamplingError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Noise schedule


@dataclass
class NoiseSchedule:
    T: int
    beta: np.ndarray       # [T], indexed by t-1
    alpha: np.ndarray      # 1 - beta
    alpha_bar: np.ndarray  # running product of alpha

    def abar(self, t: int) -> float:
        return float(self.alpha_bar[t - 1])

    def abar_prev(self, t: int) -> float:
        return 1.0 if t == 1 else float(self.alpha_bar[t - 2])


def build_schedule(T: int = 400, beta1: float = 1e-4,
                   betaT: float = 0.02) -> NoiseSchedule:
    """Linear variance schedule from beta1 to betaT over T steps."""
    if T < 1:
        raise ParameterError(f"T must be >= 1, got {T}")
    if not (0.0 < beta1 <= betaT < 1.0):
        raise ParameterError(
            f"need 0 < beta1 <= betaT < 1, got beta1={beta1}, betaT={betaT}"
        )
    beta = np.linspace(beta1, betaT, T)
    alpha = 1.0 - beta
    return NoiseSchedule(T, beta, alpha, np.cumprod(alpha))


def q_sample(x0: np.ndarray, t: int, noise: np.ndarray,
             schedule: NoiseSchedule) -> np.ndarray:
    """Forward corruption: x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) noise."""
    x0 = np.asarray(x0, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if x0.shape != noise.shape:
        raise ShapeError(f"x0 shape {x0.shape} != noise shape {noise.shape}")
    if not 1 <= t <= schedule.T:
        raise ParameterError(f"t={t} outside [1, {schedule.T}]")
    abar = schedule.abar(t)
    return np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * noise


# ---------------------------------------------------------------------------
# Conditioning


@dataclass
class ConditioningBundle:
    """Per-clip conditioning: speaker vector s, content sequence c, and
    frame-aligned normalized pitch / energy contours."""

    s: np.ndarray            # [D_s]
    c: np.ndarray            # [n_frames, D_c]
    p: np.ndarray            # [n_frames] normalized pitch
    e: np.ndarray            # [n_frames] energy
    null_flag: bool = False      # full unconditional branch
    prosody_null: bool = False   # p/e replaced by learned null embeddings

    def __post_init__(self):
        n = self.c.shape[0]
        if len(self.p) != n or len(self.e) != n:
            raise ShapeError(
                f"contour lengths p={len(self.p)}, e={len(self.e)} must equal "
                f"content frames {n}"
            )

    def null(self) -> "ConditioningBundle":
        return replace(self, null_flag=True)

    def without_prosody(self) -> "ConditioningBundle":
        return replace(self, prosody_null=True)


@dataclass
class GuidanceConfig:
    w1: float = 2.0
    w2: float = 1.5
    grad_normalize: bool = True

    def __post_init__(self):
        if self.w1 < 0 or self.w2 < 0:
            raise ParameterError(f"guidance weights must be >= 0, "
                                 f"got w1={self.w1}, w2={self.w2}")


@dataclass
class ClassifierTarget:
    """A differentiable scorer of log p(label | x_t, t) plus the target label."""

    label: object
    classifier: object

    def gradient(self, x_t: np.ndarray, t) -> np.ndarray:
        return self.classifier.log_prob_gradient(x_t, t, self.label)


# ---------------------------------------------------------------------------
# Denoiser over mel sequences

_PE_DIM = 9  # raw scalar + 8 sinusoidal features per prosody channel


def _prosody_features(values: np.ndarray, scale: float) -> np.ndarray:
    enc = sinusoidal_encoding(values * scale, _PE_DIM - 1)
    return np.concatenate([values[..., None], enc], axis=-1)


class MelDenoiser(Module):
    """Residual attention network predicting the corrupting noise.

    Per-frame input is [x_t frame | content frame | pitch features | energy
    features] projected to the model dim, with broadcast speaker and timestep
    embeddings added, followed by pre-norm attention blocks and a linear head.
    """

    def __init__(self, mel_dim: int, c_dim: int, s_dim: int,
                 model_dim: int = 64, heads: int = 4, blocks: int = 2,
                 seed: int = 0):
        rng = np.random.default_rng(seed)
        self.mel_dim = mel_dim
        self.c_dim = c_dim
        self.s_dim = s_dim
        self.model_dim = model_dim
        in_dim = mel_dim + c_dim + 2 * _PE_DIM
        self.in_proj = Dense(in_dim, model_dim, rng)
        self.s_proj = Dense(s_dim, model_dim, rng)
        self.t_proj = Dense(model_dim, model_dim, rng)
        self.blocks = [AttentionBlock(model_dim, heads, rng)
                       for _ in range(blocks)]
        self.out_norm = LayerNorm(model_dim)
        self.out_proj = Dense(model_dim, mel_dim, rng, zero_init=True)
        # direct linear path from x_t to the output; without it the model-dim
        # trunk bottlenecks the near-identity mapping needed at high noise
        self.skip = Dense(mel_dim, mel_dim, rng, zero_init=True)
        # learned null embeddings for the unconditional / prosody-free branches
        self.null_s = Tensor(rng.normal(0, 0.1, s_dim), requires_grad=True)
        self.null_c = Tensor(rng.normal(0, 0.1, c_dim), requires_grad=True)
        self.null_p = Tensor(rng.normal(0, 0.1, _PE_DIM), requires_grad=True)
        self.null_e = Tensor(rng.normal(0, 0.1, _PE_DIM), requires_grad=True)

    def meta(self) -> np.ndarray:
        return np.array([self.mel_dim, self.c_dim, self.s_dim, self.model_dim,
                         self.blocks[0].attn.heads, len(self.blocks)],
                        dtype=np.float64)

    @classmethod
    def from_meta(cls, meta: np.ndarray) -> "MelDenoiser":
        mel_dim, c_dim, s_dim, model_dim, heads, blocks = [int(v) for v in meta]
        return cls(mel_dim, c_dim, s_dim, model_dim, heads, blocks)

    def _features(self, x_t: np.ndarray, conds) -> Tensor:
        """Assemble [B, S, in_dim] with null replacement baked in as Tensors
        so the null embeddings receive gradients."""
        batch, seq, _ = x_t.shape
        rows_c, rows_p, rows_e, rows_s = [], [], [], []
        for i, cond in enumerate(conds):
            if cond.null_flag:
                c_i = self.null_c.reshape(1, -1) * np.ones((seq, 1))
                s_i = self.null_s
            else:
                c_i = Tensor(cond.c)
                s_i = Tensor(cond.s)
            if cond.null_flag or cond.prosody_null:
                p_i = self.null_p.reshape(1, -1) * np.ones((seq, 1))
                e_i = self.null_e.reshape(1, -1) * np.ones((seq, 1))
            else:
                p_i = Tensor(_prosody_features(cond.p, 16.0))
                e_i = Tensor(_prosody_features(cond.e, 2.0))
            rows_c.append(c_i.reshape(1, seq, -1))
            rows_p.append(p_i.reshape(1, seq, -1))
            rows_e.append(e_i.reshape(1, seq, -1))
            rows_s.append(s_i.reshape(1, -1))
        c = concat(rows_c, axis=0)
        p = concat(rows_p, axis=0)
        e = concat(rows_e, axis=0)
        s = concat(rows_s, axis=0)
        feats = concat([Tensor(x_t), c, p, e], axis=2)
        return feats, s

    def forward(self, x_t: np.ndarray, t, conds) -> Tensor:
        """x_t: [B, S, mel_dim]; t: int or [B] array; conds: list of bundles."""
        x_t = np.asarray(x_t, dtype=np.float64)
        batch, seq, mel_dim = x_t.shape
        if mel_dim != self.mel_dim:
            raise ShapeError(f"x_t mel dim {mel_dim} != model {self.mel_dim}")
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (batch,))

        feats, s = self._features(x_t, conds)
        h = self.in_proj(feats)
        h = h + self.s_proj(s).reshape(batch, 1, self.model_dim)
        t_emb = sinusoidal_encoding(t, self.model_dim)  # [B, model_dim]
        h = h + self.t_proj(Tensor(t_emb)).reshape(batch, 1, self.model_dim)
        h = h + Tensor(sinusoidal_encoding(np.arange(seq), self.model_dim))
        for block in self.blocks:
            h = block(h)
        return self.out_proj(self.out_norm(h)) + self.skip(Tensor(x_t))

    def epsilon(self, x_t: np.ndarray, t, conds) -> np.ndarray:
        single = x_t.ndim == 2
        if single:
            x_t = x_t[None]
            conds = [conds]
        out = self.forward(x_t, t, conds).data
        return out[0] if single else out


class ContentClassifier(Module):
    """Predicts a content-class label from (x_t, t); provides the gradient of
    log p(label | x_t, t) with respect to x_t for classifier guidance."""

    def __init__(self, mel_dim: int, n_classes: int, hidden: int = 64,
                 seed: int = 0):
        rng = np.random.default_rng(seed)
        self.mel_dim = mel_dim
        self.n_classes = n_classes
        self.hidden = hidden
        self.frame_proj = Dense(mel_dim, hidden, rng)
        self.t_proj = Dense(hidden, hidden, rng)
        self.fc1 = Dense(hidden, hidden, rng)
        self.head = Dense(hidden, n_classes, rng)

    def meta(self) -> np.ndarray:
        return np.array([self.mel_dim, self.n_classes, self.hidden],
                        dtype=np.float64)

    @classmethod
    def from_meta(cls, meta: np.ndarray) -> "ContentClassifier":
        return cls(*[int(v) for v in meta])

    def logits(self, x_t: Tensor, t) -> Tensor:
        batch = x_t.shape[0]
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (batch,))
        h = self.frame_proj(x_t).relu().mean(axis=1)  # [B, hidden]
        h = h + self.t_proj(Tensor(sinusoidal_encoding(t, self.hidden)))
        return self.head(self.fc1(h).relu())

    def log_prob_gradient(self, x_t: np.ndarray, t, labels) -> np.ndarray:
        single = x_t.ndim == 2
        if single:
            x_t = x_t[None]
            labels = [labels]
        labels = np.asarray(labels, dtype=int)
        x = Tensor(np.asarray(x_t, dtype=np.float64), requires_grad=True)
        logp = self.logits(x, t).log_softmax(axis=-1)
        picked = logp[np.arange(len(labels)), labels].sum()
        picked.backward()
        grad = x.grad
        return grad[0] if single else grad


# ---------------------------------------------------------------------------
# Training


def training_step(denoiser, batch, schedule: NoiseSchedule,
                  dropout_prob: float, rng: np.random.Generator,
                  optimizer=None) -> float:
    """One denoising-score-matching step over a batch of (x0, bundle) pairs.

    Draw order per item (relied on by replay tests): timestep, noise, then
    the condition-dropout uniform. Populates gradients; applies the optimizer
    when given. Returns the scalar MSE loss.
    """
    if not batch:
        raise TrainingError("empty batch")
    if not 0.0 <= dropout_prob <= 1.0:
        raise ParameterError(f"dropout_prob {dropout_prob} outside [0, 1]")

    xts, noises, ts, conds = [], [], [], []
    for x0, cond in batch:
        t = int(rng.integers(1, schedule.T + 1))
        noise = rng.standard_normal(x0.shape)
        if rng.random() < dropout_prob:
            cond = cond.null()
        xts.append(q_sample(x0, t, noise, schedule))
        noises.append(noise)
        ts.append(t)
        conds.append(cond)

    x_t = np.stack(xts)
    target = np.stack(noises)
    pred = denoiser.forward(x_t, np.array(ts), conds)
    diff = pred - Tensor(target)
    loss = (diff * diff).mean()
    if not np.isfinite(loss.data):
        raise TrainingError(
            f"non-finite loss at steps t={ts} (batch of {len(batch)})"
        )
    if optimizer is not None:
        optimizer.zero_grad()
    loss.backward()
    if optimizer is not None:
        optimizer.step()
    return float(loss.data)


def classifier_training_step(classifier, batch, schedule: NoiseSchedule,
                             rng: np.random.Generator,
                             optimizer=None) -> float:
    """Cross-entropy step for the guidance classifier on noised inputs."""
    xts, ts, labels = [], [], []
    for x0, label in batch:
        t = int(rng.integers(1, schedule.T + 1))
        noise = rng.standard_normal(x0.shape)
        xts.append(q_sample(x0, t, noise, schedule))
        ts.append(t)
        labels.append(label)
    x = Tensor(np.stack(xts))
    logp = classifier.logits(x, np.array(ts)).log_softmax(axis=-1)
    picked = logp[np.arange(len(labels)), np.asarray(labels, dtype=int)]
    loss = -picked.mean()
    if optimizer is not None:
        optimizer.zero_grad()
    loss.backward()
    if optimizer is not None:
        optimizer.step()
    return float(loss.data)


# ---------------------------------------------------------------------------
# Guided sampling


def _frobenius(a: np.ndarray) -> np.ndarray:
    # per-item norm over all non-batch axes
    return np.sqrt((a * a).sum(axis=tuple(range(1, a.ndim)), keepdims=True))


def guided_epsilon(denoiser, x_t: np.ndarray, t: int, conds,
                   g: GuidanceConfig, target: ClassifierTarget | None,
                   schedule: NoiseSchedule) -> np.ndarray:
    """Combined classifier-free / classifier-guided noise estimate.

    Accepts a single [S, M] state with one bundle, or a batched [B, S, M]
    state with a list of bundles (independent chains).
    """
    single = x_t.ndim == 2
    if single:
        x_t = x_t[None]
        conds = [conds]
    for cond in conds:
        if cond.null_flag:
            raise ParameterError("guided_epsilon requires conditional bundles")

    eps_c = denoiser.epsilon(x_t, t, conds)
    if g.w1 != 0.0:
        eps_u = denoiser.epsilon(x_t, t, [c.null() for c in conds])
        eps = (1.0 + g.w1) * eps_c - g.w1 * eps_u
    else:
        eps = eps_c

    if target is not None and g.w2 != 0.0:
        grad = np.asarray(target.gradient(x_t, t), dtype=np.float64)
        if g.grad_normalize:
            # cap the gradient at the norm of the guidance-free estimate; a
            # confident classifier keeps its small gradient instead of having
            # it inflated to full noise scale, which destabilizes the chain
            gnorm = _frobenius(grad)
            enorm = _frobenius(eps)
            scale = np.where(gnorm > 0,
                             np.minimum(1.0, enorm / np.where(gnorm > 0,
                                                              gnorm, 1.0)),
                             0.0)
            grad = grad * scale
        eps = eps - g.w2 * np.sqrt(1.0 - schedule.abar(t)) * grad

    return eps[0] if single else eps


def ddpm_sample(denoiser, cond, g: GuidanceConfig,
                target: ClassifierTarget | None, schedule: NoiseSchedule,
                seed: int, shape) -> np.ndarray:
    """Ancestral sampling of a single clip; deterministic given the seed."""
    return ddpm_sample_batch(denoiser, [cond], g,
                             None if target is None else [target],
                             schedule, [seed], shape)[0]


def ddpm_sample_batch(denoiser, conds, g: GuidanceConfig, targets,
                      schedule: NoiseSchedule, seeds, shape) -> np.ndarray:
    """Sample independent chains in one batched pass.

    Each chain draws its noise from its own seeded generator, so results per
    chain do not depend on what else is in the batch (up to the denoiser's
    batched arithmetic).
    """
    rngs = [np.random.default_rng(s) for s in seeds]
    x = np.stack([r.standard_normal(shape) for r in rngs])
    batched_target = None
    if targets is not None:
        labels = [t.label for t in targets]
        batched_target = ClassifierTarget(labels, targets[0].classifier)

    for t in range(schedule.T, 0, -1):
        eps = guided_epsilon(denoiser, x, t, conds, g, batched_target, schedule)
        beta_t = float(schedule.beta[t - 1])
        abar_t = schedule.abar(t)
        mean = (x - beta_t / np.sqrt(1.0 - abar_t) * eps) \
            / np.sqrt(float(schedule.alpha[t - 1]))
        if t > 1:
            sigma = np.sqrt(beta_t * (1.0 - schedule.abar_prev(t))
                            / (1.0 - abar_t))
            z = np.stack([r.standard_normal(shape) for r in rngs])
            x = mean + sigma * z
        else:
            x = mean
        if not np.all(np.isfinite(x)):
            raise SamplingError(f"non-finite sampler state at step t={t}")
    return x
