"""Run configuration: one TOML file with sections, strict keys, and defaults
that pin the reference experiment setup.

Date ranges: a bare date like ``2025-07-31`` covers that whole UTC day (an end
bound includes it); a full timestamp like ``2025-03-01T00:00:00Z`` is an exact
instant (end bounds exclusive). All randomness in a run derives from the single
``model.seed`` via labeled streams.
"""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timedelta, timezone
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .chart_renderer import ChartStyle
from .errors import ConfigurationError
from .market_data import DEFAULT_API_BASE

UTC_DAY_MS = 86_400_000


def resolve_time(value: str, end: bool = False) -> int:
    """ISO date/timestamp -> epoch ms; bare end dates include the named day."""
    text = value.strip()
    try:
        if len(text) == 10:
            dt = datetime.strptime(text, "%Y-%m-%d").replace(tzinfo=timezone.utc)
            if end:
                dt += timedelta(days=1)
        else:
            dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
            if dt.tzinfo is None:
                dt = dt.replace(tzinfo=timezone.utc)
    except ValueError as exc:
        raise ConfigurationError(f"bad date/timestamp {value!r}: {exc}")
    return int(dt.timestamp() * 1000)


@dataclass
class DataConfig:
    symbol: str = "BTCUSDT"
    interval: str = "4h"
    mode: str = "fixture"            # fixture | live
    fixture_dir: str = ""
    api_base: str = DEFAULT_API_BASE
    market: str = "futures"          # futures | spot klines route
    train_start: str = "2024-01-01T00:00:00Z"
    train_end: str = "2025-03-01T00:00:00Z"
    eval_start: str = "2025-03-17"
    eval_end: str = "2025-07-31"


@dataclass
class DatasetConfig:
    window_len: int = 40
    lookahead: int = 3
    threshold: float = 0.02
    insample_warmup: bool = True
    bridge_gaps: bool = False


@dataclass
class ModelConfig:
    base_channels: int = 32
    channel_mults: list = field(default_factory=lambda: [1, 2])
    groups: int = 8
    emb_dim: int = 64
    time_dim: int = 32
    cond_width: int = 16
    bottleneck_attention: bool = False
    attn_dim: int = 0
    schedule_steps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    train_steps: int = 500
    batch_size: int = 8
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    macd_scale: float = 1000.0
    codec_seed: int = 1105


@dataclass
class SamplerSettings:
    steps: int = 20
    text_guidance: float = 2.0
    image_guidance: float = 1.0


@dataclass
class PathsConfig:
    data_dir: str = "runs/data"
    dataset_dir: str = "runs/dataset"
    checkpoint: str = "runs/model.cfck"
    results_dir: str = "runs/results"


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8787
    workers: int = 2
    queue_size: int = 8
    frontend_dir: str = "frontend/dist"


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    style: ChartStyle = field(default_factory=ChartStyle)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    sampler: SamplerSettings = field(default_factory=SamplerSettings)
    paths: PathsConfig = field(default_factory=PathsConfig)
    service: ServiceConfig = field(default_factory=ServiceConfig)


_SECTIONS = {
    "data": DataConfig, "style": ChartStyle, "dataset": DatasetConfig,
    "model": ModelConfig, "sampler": SamplerSettings, "paths": PathsConfig,
    "service": ServiceConfig,
}


def _build_section(cls, table: dict, section: str):
    if cls is ChartStyle:
        try:
            return ChartStyle.from_dict(table)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"[{section}]: {exc}")
    known = {f.name for f in fields(cls)}
    unknown = set(table) - known
    if unknown:
        raise ConfigurationError(f"[{section}] has unknown keys: {sorted(unknown)}")
    try:
        return cls(**table)
    except TypeError as exc:
        raise ConfigurationError(f"[{section}]: {exc}")


def parse_config(text: str) -> RunConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config is not valid TOML: {exc}")
    unknown = set(doc) - set(_SECTIONS)
    if unknown:
        raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
    kwargs = {}
    for section, cls in _SECTIONS.items():
        table = doc.get(section, {})
        if not isinstance(table, dict):
            raise ConfigurationError(f"[{section}] must be a table")
        kwargs[section] = _build_section(cls, table, section)
    cfg = RunConfig(**kwargs)
    validate_config(cfg)
    return cfg


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        escaped = v.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise ConfigurationError(f"cannot serialize config value {v!r}")


def serialize_config(cfg: RunConfig) -> str:
    lines = []
    for section, _ in _SECTIONS.items():
        obj = getattr(cfg, section)
        table = obj.to_dict() if isinstance(obj, ChartStyle) else asdict(obj)
        lines.append(f"[{section}]")
        for key, value in table.items():
            lines.append(f"{key} = {_toml_value(value)}")
        lines.append("")
    return "\n".join(lines)


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(serialize_config(cfg), encoding="utf-8")


def validate_config(cfg: RunConfig) -> None:
    from .chart_renderer import validate_style

    validate_style(cfg.style)
    if cfg.data.mode not in ("fixture", "live"):
        raise ConfigurationError(f"data.mode must be fixture or live, got {cfg.data.mode!r}")
    if cfg.data.market not in ("futures", "spot"):
        raise ConfigurationError(f"data.market must be futures or spot, got {cfg.data.market!r}")
    if cfg.dataset.window_len < 1 or cfg.dataset.lookahead < 1:
        raise ConfigurationError("dataset.window_len and dataset.lookahead must be >= 1")
    if not (0 < cfg.dataset.threshold < 1):
        raise ConfigurationError("dataset.threshold must be a fraction in (0, 1)")
    if cfg.sampler.steps < 1:
        raise ConfigurationError("sampler.steps must be >= 1")
    if cfg.sampler.steps > cfg.model.schedule_steps:
        raise ConfigurationError("sampler.steps cannot exceed model.schedule_steps")
    if cfg.style.width % 4 or cfg.style.height % 4:
        raise ConfigurationError("style width/height must be divisible by 4 for the codec")
    latent_hw = (cfg.style.height // 4, cfg.style.width // 4)
    down = 2 ** len(cfg.model.channel_mults)
    if latent_hw[0] % down or latent_hw[1] % down:
        raise ConfigurationError(
            f"latent size {latent_hw} must be divisible by 2^levels = {down}"
        )
    if cfg.service.workers < 1 or cfg.service.queue_size < 0:
        raise ConfigurationError("service.workers must be >= 1 and queue_size >= 0")
