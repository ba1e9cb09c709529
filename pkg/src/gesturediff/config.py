"""Run configuration: one TOML (or JSON) file with a section per concern.

Relative paths in ``[data]`` are resolved against the config file's directory.
"""

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace

import tomli
import tomli_w

from .motion import UPPER_BODY_JOINTS

__all__ = ["ConfigError", "DataConfig", "ScheduleConfig", "ModelSection", "TrainConfig",
           "SamplerConfig", "SmoothingConfig", "MetricsConfig", "RunConfig",
           "load_config", "save_config", "parse_config"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataConfig:
    takes: tuple = ()        # ({"name", "bvh", "wav"}, ...)
    eval_takes: tuple = ()
    joints: tuple = UPPER_BODY_JOINTS
    fps: float = 20.0
    window: int = 80
    stride: int = 40
    val_fraction: float = 0.1
    n_mels: int = 27
    n_fft: int = 1024
    f_min: float = 20.0


@dataclass(frozen=True)
class ScheduleConfig:
    n_steps: int = 100
    beta_start: float = 1e-4
    beta_end: float = 0.1
    shape: str = "quartic"


@dataclass(frozen=True)
class ModelSection:
    tau: int = 10
    lookahead: int = 20
    hidden: int = 512
    layers: int = 2
    width: int = 256
    blocks: int = 4
    emb_dim: int = 64


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 80
    lr: float = 1.5e-3
    max_epochs: int = 50
    patience: int = 10


@dataclass(frozen=True)
class SamplerConfig:
    quantile: bool = False
    candidates: int = 5
    q: float = 0.5
    sigma_mode: str = "variance"


@dataclass(frozen=True)
class SmoothingConfig:
    enabled: bool = True
    window: int = 31
    order: int = 4


@dataclass(frozen=True)
class MetricsConfig:
    runs: int = 20
    bcs_sigma: float = 0.1
    pck_fraction: float = 0.1
    shoulders: tuple = ("LeftArm", "RightArm")
    clip_frames: int = 40


_SECTIONS = {
    "data": DataConfig, "schedule": ScheduleConfig, "model": ModelSection,
    "train": TrainConfig, "sampler": SamplerConfig, "smoothing": SmoothingConfig,
    "metrics": MetricsConfig,
}


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainConfig = field(default_factory=TrainConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    seed: int = 0

    def __post_init__(self):
        _validate(self)

    def to_dict(self):
        d = asdict(self)
        for sec in ("data", "metrics"):
            for k, v in d[sec].items():
                if isinstance(v, tuple):
                    d[sec][k] = [dict(x) if isinstance(x, dict) else x for x in v]
        return d

    def with_updates(self, seed=None, **sections):
        """Copy with ``section={"key": value}`` overrides applied."""
        kw = {} if seed is None else {"seed": seed}
        for name, upd in sections.items():
            kw[name] = replace(getattr(self, name), **upd)
        return replace(self, **kw)


def _validate(cfg):
    m, d = cfg.model, cfg.data
    positive = [("data.fps", d.fps), ("data.window", d.window), ("data.stride", d.stride),
                ("data.n_mels", d.n_mels), ("data.n_fft", d.n_fft),
                ("schedule.n_steps", cfg.schedule.n_steps),
                ("schedule.beta_start", cfg.schedule.beta_start),
                ("schedule.beta_end", cfg.schedule.beta_end)]
    positive += [(f"model.{f.name}", getattr(m, f.name)) for f in fields(m) if f.name != "lookahead"]
    positive += [(f"train.{f.name}", getattr(cfg.train, f.name)) for f in fields(cfg.train)]
    positive += [("sampler.candidates", cfg.sampler.candidates),
                 ("smoothing.window", cfg.smoothing.window),
                 ("metrics.runs", cfg.metrics.runs), ("metrics.bcs_sigma", cfg.metrics.bcs_sigma),
                 ("metrics.pck_fraction", cfg.metrics.pck_fraction),
                 ("metrics.clip_frames", cfg.metrics.clip_frames)]
    for name, v in positive:
        if not v > 0:
            raise ConfigError(f"{name} must be positive, got {v!r}")
    if m.lookahead < 0:
        raise ConfigError("model.lookahead must be non-negative")
    if m.lookahead + m.tau + 1 > d.window:
        raise ConfigError(f"lookahead + tau + 1 = {m.lookahead + m.tau + 1} exceeds the "
                          f"{d.window}-frame window")
    if not 0.0 <= d.val_fraction < 1.0:
        raise ConfigError("data.val_fraction must lie in [0, 1)")
    if not 0.0 <= cfg.sampler.q <= 1.0:
        raise ConfigError("sampler.q must lie in [0, 1]")
    if cfg.smoothing.window % 2 == 0 or cfg.smoothing.order >= cfg.smoothing.window \
            or cfg.smoothing.order < 0:
        raise ConfigError("smoothing needs an odd window larger than the polynomial order")
    for group in (d.takes, d.eval_takes):
        for t in group:
            if not isinstance(t, dict) or "bvh" not in t or "wav" not in t:
                raise ConfigError(f"take entries need 'bvh' and 'wav' keys, got {t!r}")


def _tupleify(v):
    return tuple(_tupleify(x) if isinstance(x, list) else x for x in v) if isinstance(v, list) else v


def parse_config(raw, base_dir=None):
    """Build a :class:`RunConfig` from a nested dict."""
    raw = dict(raw)
    kw = {}
    if "seed" in raw:
        kw["seed"] = int(raw.pop("seed"))
    for name, cls in _SECTIONS.items():
        sec = dict(raw.pop(name, {}))
        known = {f.name for f in fields(cls)}
        unknown = set(sec) - known
        if unknown:
            raise ConfigError(f"unknown keys in [{name}]: {', '.join(sorted(unknown))}")
        if name == "data":
            for key in ("takes", "eval_takes"):
                entries = []
                for i, t in enumerate(sec.get(key, [])):
                    t = dict(t)
                    if base_dir is not None:
                        for p in ("bvh", "wav"):
                            if p in t and not os.path.isabs(t[p]):
                                t[p] = os.path.normpath(os.path.join(base_dir, t[p]))
                    t.setdefault("name", f"{key[:-1]}{i:03d}")
                    entries.append(t)
                sec[key] = tuple(entries)
        kw[name] = cls(**{k: _tupleify(v) for k, v in sec.items()})
    if raw:
        raise ConfigError(f"unknown config sections: {', '.join(sorted(raw))}")
    return RunConfig(**kw)


def load_config(path):
    try:
        if str(path).endswith(".json"):
            with open(path) as fh:
                raw = json.load(fh)
        else:
            with open(path, "rb") as fh:
                raw = tomli.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(raw, os.path.dirname(os.path.abspath(path)))


def save_config(cfg, path):
    """Write a frozen copy of ``cfg`` (TOML unless ``path`` ends in .json)."""
    d = cfg.to_dict()
    if str(path).endswith(".json"):
        with open(path, "w") as fh:
            json.dump(d, fh, indent=2, sort_keys=True)
    else:
        with open(path, "wb") as fh:
            tomli_w.dump(d, fh)
    return path
