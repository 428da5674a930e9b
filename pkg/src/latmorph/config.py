"""Run configuration: flat ``key = value`` files plus command-line overrides."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .models import VARIANTS, ModelDims


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


@dataclass
class RunConfig:
    variant: str = "lmm"
    # dimensions
    emb: int = 64
    hidden: int = 64
    lemma_dim: int = 16
    features: int = 6
    mlp_hidden: int = 64
    # optimisation
    lr: float = 4e-4
    decay: float = 0.8
    batch: int = 16
    dropout: float = 0.2
    rho: float = 0.4
    epochs: int = 300
    seed: int = 1
    max_word_len: int = 50
    clip_norm: float = 5.0
    src_merges: int = 200
    tgt_merges: int = 200
    stretch_mean: bool = False
    keep_best: bool = False
    # paths
    train_src: str = ""
    train_tgt: str = ""
    dev_src: str = ""
    dev_tgt: str = ""
    checkpoint: str = "model.ckpt"
    log: str = ""

    def dims(self) -> ModelDims:
        return ModelDims(self.emb, self.hidden, self.lemma_dim, self.features, self.mlp_hidden)

    def validate(self, check_paths: bool = False) -> "RunConfig":
        if self.variant not in VARIANTS:
            raise ConfigError("variant", f"must be one of {', '.join(VARIANTS)}, got {self.variant!r}")
        for name in ("emb", "hidden", "batch", "epochs", "max_word_len"):
            if getattr(self, name) < 1:
                raise ConfigError(name, "must be >= 1")
        if self.hidden % 2:
            raise ConfigError("hidden", "must be even")
        if self.variant == "lmm":
            if self.lemma_dim < 1:
                raise ConfigError("lemma_dim", "must be >= 1")
            if self.features < 0:
                raise ConfigError("features", "must be >= 0")
            if self.rho < 0:
                raise ConfigError("rho", "must be >= 0")
        if not self.lr > 0:
            raise ConfigError("lr", "must be > 0")
        if not 0 < self.decay <= 1:
            raise ConfigError("decay", "must be in (0, 1]")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout", "must be in [0, 1)")
        if self.src_merges < 0 or self.tgt_merges < 0:
            raise ConfigError("src_merges", "must be >= 0")
        if check_paths:
            for name in ("train_src", "train_tgt", "dev_src", "dev_tgt"):
                val = getattr(self, name)
                if not val:
                    raise ConfigError(name, "path is required")
                if not Path(val).exists():
                    raise ConfigError(name, f"no such file {val!r}")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


#: paper-scale settings; rho, lr, decay, batch and dropout are the reported
#: training values
PRESETS = {
    "desk": {},
    "paper": dict(emb=512, hidden=512, lemma_dim=150, features=10, mlp_hidden=256,
                  batch=100, rho=0.4, lr=4e-4, decay=0.8, dropout=0.2,
                  src_merges=16000, tgt_merges=16000, epochs=100),
}


def _coerce(f: dataclasses.Field, raw: str):
    typ = f.type if isinstance(f.type, type) else {"int": int, "float": float, "bool": bool,
                                                   "str": str}[str(f.type)]
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return typ(raw.strip())
    except ValueError:
        raise ConfigError(f.name, f"cannot parse {raw!r} as {typ.__name__}") from None


def apply_overrides(cfg: RunConfig, values: dict) -> RunConfig:
    by_name = {f.name: f for f in fields(RunConfig)}
    changes = {}
    for key, raw in values.items():
        key = key.replace("-", "_")
        if key not in by_name:
            raise ConfigError(key, "unknown configuration key")
        changes[key] = _coerce(by_name[key], raw) if isinstance(raw, str) else raw
    return dataclasses.replace(cfg, **changes)


def parse_config_text(text: str) -> dict:
    values = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}", f"expected 'key = value', got {line!r}")
        key, val = line.split("=", 1)
        values[key.strip()] = val.strip()
    return values


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Preset (``preset = desk|paper``) < file values < overrides."""
    values = {}
    if path:
        try:
            values = parse_config_text(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    preset = values.pop("preset", "desk")
    if preset not in PRESETS:
        raise ConfigError("preset", f"unknown preset {preset!r}")
    cfg = apply_overrides(RunConfig(), {k: v for k, v in PRESETS[preset].items()})
    cfg = apply_overrides(cfg, values)
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg


def dump_config(cfg: RunConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.to_dict().items())
