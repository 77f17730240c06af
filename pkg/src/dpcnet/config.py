"""Flat key=value run configuration.

Every key has a default below; unknown keys are a hard error so typos
cannot silently fall back to defaults.  `#` starts a comment; blank lines
are ignored.  Values are re-parsed per key (ints, floats, on/off flags,
comma lists, stage triples `start:patch:batch`).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .losses import LossWeights
from .model import ModelConfig
from .optim import Schedule, Stage
from .tensor import ConfigError

DEFAULTS: dict[str, str] = {
    "model.base_channels": "16",
    "model.blocks": "2,3,4",
    "model.heads": "2,4,8",
    "model.window": "8",
    "model.frequency_branch": "on",
    "model.fusion": "afm",  # afm | concat
    "model.spatial_sa": "on",
    "model.channel_sa": "on",
    "model.sa_order": "spatial_first",  # | channel_first
    "train.steps": "300",
    "train.lr_max": "3e-4",
    "train.lr_min": "1e-6",
    "train.seed": "42",
    "train.stages": "0:32:4,150:64:2",
    "train.lambda_l1": "1",
    "train.lambda_perceptual": "0.2",
    "train.lambda_fft": "0.05",
    "train.eval_every": "50",
    "train.checkpoint_every": "0",
    "train.clip_norm": "1.0",
    "data.root": "data/corpus/train",
    "out.dir": "out",
}

_FLAGS = {"on": True, "true": True, "1": True, "off": False, "false": False, "0": False}


def _flag(raw: str, key: str) -> bool:
    try:
        return _FLAGS[raw.lower()]
    except KeyError:
        raise ConfigError(f"{key}: expected on/off, got {raw!r}") from None


def _int_list(raw: str, key: str, n: int) -> tuple[int, ...]:
    try:
        vals = tuple(int(v) for v in raw.split(","))
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated ints, got {raw!r}") from None
    if len(vals) != n:
        raise ConfigError(f"{key}: expected {n} values, got {len(vals)}")
    return vals


def _stages(raw: str, key: str) -> tuple[Stage, ...]:
    stages = []
    for part in raw.split(","):
        pieces = part.split(":")
        if len(pieces) != 3:
            raise ConfigError(f"{key}: expected start:patch:batch triples, got {part!r}")
        try:
            stages.append(Stage(*(int(p) for p in pieces)))
        except ValueError:
            raise ConfigError(f"{key}: non-integer stage field in {part!r}") from None
    return tuple(stages)


@dataclass
class RunConfig:
    values: dict[str, str]

    @classmethod
    def load(cls, path=None, overrides: list[str] | None = None, env_seed: str | None = None) -> "RunConfig":
        values = dict(DEFAULTS)
        if path is not None:
            text = Path(path).read_text()
            for ln, line in enumerate(text.splitlines(), 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{ln}: expected key=value, got {line!r}")
                key, val = (s.strip() for s in line.split("=", 1))
                if key not in values:
                    raise ConfigError(f"{path}:{ln}: unknown config key {key!r}")
                values[key] = val
        for item in overrides or []:
            if "=" not in item:
                raise ConfigError(f"--set expects key=value, got {item!r}")
            key, val = (s.strip() for s in item.split("=", 1))
            if key not in values:
                raise ConfigError(f"--set: unknown config key {key!r}")
            values[key] = val
        if env_seed is not None:
            try:
                int(env_seed)
            except ValueError:
                raise ConfigError(f"DPCNET_SEED must be an integer, got {env_seed!r}") from None
            values["train.seed"] = env_seed
        cfg = cls(values)
        cfg.model_config()  # validate eagerly
        cfg.schedule()
        cfg.loss_weights()
        return cfg

    def _num(self, key: str, kind):
        try:
            return kind(self.values[key])
        except ValueError:
            raise ConfigError(f"{key}: expected {kind.__name__}, got {self.values[key]!r}") from None

    def model_config(self) -> ModelConfig:
        v = self.values
        return ModelConfig(
            base_channels=self._num("model.base_channels", int),
            blocks=_int_list(v["model.blocks"], "model.blocks", 3),
            heads=_int_list(v["model.heads"], "model.heads", 3),
            window=self._num("model.window", int),
            frequency_branch=_flag(v["model.frequency_branch"], "model.frequency_branch"),
            fusion=v["model.fusion"],
            spatial_sa=_flag(v["model.spatial_sa"], "model.spatial_sa"),
            channel_sa=_flag(v["model.channel_sa"], "model.channel_sa"),
            sa_order=v["model.sa_order"],
            seed=self._num("train.seed", int),
        ).validate()

    def schedule(self) -> Schedule:
        return Schedule(
            total_steps=self._num("train.steps", int),
            lr_max=self._num("train.lr_max", float),
            lr_min=self._num("train.lr_min", float),
            stages=_stages(self.values["train.stages"], "train.stages"),
        )

    def loss_weights(self) -> LossWeights:
        return LossWeights(
            l1=self._num("train.lambda_l1", float),
            perceptual=self._num("train.lambda_perceptual", float),
            fft=self._num("train.lambda_fft", float),
        )

    @property
    def seed(self) -> int:
        return self._num("train.seed", int)

    @property
    def data_root(self) -> str:
        return self.values["data.root"]

    @property
    def out_dir(self) -> str:
        return self.values["out.dir"]

    def echo(self) -> str:
        """Fully resolved configuration, one key per line."""
        return "\n".join(f"{k}={self.values[k]}" for k in sorted(self.values))
