"""Flat ``key = value`` run configuration.

One field per line, ``#`` starts a comment. Keys come from the environment,
model and training configs plus a handful of run-level fields; anything
else is rejected with the offending key named.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .dqn import TrainConfig
from .env import EnvConfig
from .model import ModelConfig


class ConfigError(ValueError):
    pass


# derived per run rather than set by hand
_MODEL_DERIVED = {"max_seq_len", "obs_dim", "distance_scale", "num_actions"}
_TRAIN_DERIVED = {"seq_len", "rng_seed"}


@dataclass(frozen=True)
class RunConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seq_lens: tuple = (5, 45, 75)
    runs: int = 5
    eval_episodes: int = 100
    seed: int = 0
    out: str = "runs"
    ema_alpha: float = 0.05
    oscillation_window: int = 20

    def __post_init__(self):
        if not self.seq_lens or any(n < 1 for n in self.seq_lens):
            raise ConfigError("seq_lens: entries must be positive")
        if self.runs < 1:
            raise ConfigError("runs: must be at least 1")
        if not 0.0 < self.ema_alpha <= 1.0:
            raise ConfigError("ema_alpha: must lie in (0, 1]")
        if self.oscillation_window < 2:
            raise ConfigError("oscillation_window: must be at least 2")

    def model_for(self, seq_len):
        return replace(
            self.model,
            max_seq_len=seq_len,
            obs_dim=self.env.obs_dim,
            distance_scale=1.0 / (2.0 * self.env.maze_radius),
        )

    def train_for(self, seq_len, seed):
        return replace(self.train, seq_len=seq_len, rng_seed=seed)


_RUN_KEYS = ("seq_lens", "runs", "eval_episodes", "seed", "out", "ema_alpha", "oscillation_window")


def _sections():
    return {
        "env": {f.name for f in fields(EnvConfig)},
        "model": {f.name for f in fields(ModelConfig)} - _MODEL_DERIVED,
        "train": {f.name for f in fields(TrainConfig)} - _TRAIN_DERIVED,
    }


def known_keys():
    keys = set(_RUN_KEYS)
    for names in _sections().values():
        keys |= names
    return keys


def _convert(key, raw, default):
    raw = raw.strip()
    try:
        if key == "seq_lens":
            return tuple(int(v) for v in raw.split(",") if v.strip())
        if key == "clip_norm":
            return None if raw.lower() in ("", "none", "off") else float(raw)
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false", "1", "0"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1")
        if isinstance(default, int):
            return int(raw.replace("_", ""))
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None


def parse_lines(lines):
    values = {}
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known_keys():
            raise ConfigError(f"{key}: unknown config key (line {lineno})")
        values[key] = raw
    return values


def build(values):
    """RunConfig from raw string values keyed by flat field name."""
    base = RunConfig()
    parts = {}
    for section, names in _sections().items():
        template = getattr(base, section)
        kw = {k: _convert(k, values[k], getattr(template, k)) for k in names if k in values}
        try:
            parts[section] = replace(template, **kw)
        except ValueError as e:
            raise ConfigError(f"{section} config: {e}") from None
    run_kw = {k: _convert(k, values[k], getattr(base, k)) for k in _RUN_KEYS if k in values}
    try:
        return RunConfig(**parts, **run_kw)
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from None


def load(path=None, overrides=None):
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        values.update(parse_lines(text.splitlines()))
    for key, raw in (overrides or {}).items():
        if key not in known_keys():
            raise ConfigError(f"{key}: unknown config key")
        values[key] = str(raw)
    return build(values)


def dump(cfg):
    """Serialise to the same flat format ``load`` reads."""
    lines = []
    for section in ("env", "model", "train"):
        obj = getattr(cfg, section)
        for name in sorted(_sections()[section]):
            lines.append(f"{name} = {_fmt(getattr(obj, name))}")
    for key in _RUN_KEYS:
        lines.append(f"{key} = {_fmt(getattr(cfg, key))}")
    return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)

