"""Flat key=value experiment configuration with typed keys and strict
unknown-key rejection. Every field is echoed verbatim into output reports."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

PROSODY_SOURCES = ("none", "predicted", "oracle")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    # corpus
    n_speakers: int = 8
    clips_per_speaker: int = 50
    clip_seconds: float = 1.5
    seed: int = 0
    # diffusion
    T: int = 400
    beta1: float = 1e-4
    betaT: float = 0.02
    w1: float = 2.0
    w2: float = 1.5
    grad_normalize: bool = True
    # training
    diffusion_steps: int = 4000
    batch_size: int = 16
    dropout_prob: float = 0.1
    predictor_steps: int = 500
    predictor_batch: int = 8
    classifier_steps: int = 400
    learning_rate: float = 1e-3
    # harness
    test_clips_per_speaker: int = 4
    n_mels: int = 80
    diffusion_mels: int = 80   # reduced-band path: 80 must divide evenly
    model_dim: int = 96
    heads: int = 4
    attention_blocks: int = 2
    prosody_source: str = "predicted"

    def __post_init__(self):
        if self.prosody_source not in PROSODY_SOURCES:
            raise ConfigError(
                f"prosody_source must be one of {PROSODY_SOURCES}, "
                f"got {self.prosody_source!r}"
            )
        if self.n_mels % self.diffusion_mels != 0:
            raise ConfigError(
                f"diffusion_mels ({self.diffusion_mels}) must divide n_mels "
                f"({self.n_mels})"
            )
        if self.test_clips_per_speaker >= self.clips_per_speaker:
            raise ConfigError(
                "test_clips_per_speaker must be < clips_per_speaker"
            )

    def to_dict(self) -> dict:
        return asdict(self)


def _parse_value(raw: str, kind, key: str):
    raw = raw.strip()
    if kind is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected boolean, got {raw!r}")
    try:
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected {kind.__name__}, got {raw!r}") from exc


def parse_config(text: str) -> ExperimentConfig:
    known = {f.name: f.type for f in fields(ExperimentConfig)}
    types = {"int": int, "float": float, "bool": bool, "str": str}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        kind = known[key]
        if isinstance(kind, str):
            kind = types[kind]
        values[key] = _parse_value(raw, kind, key)
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def dump_config(config: ExperimentConfig) -> str:
    lines = [f"{k} = {str(v).lower() if isinstance(v, bool) else v}"
             for k, v in config.to_dict().items()]
    return "\n".join(lines) + "\n"
