"""Wires config + modules into the fetch/dataset/train/generate/evaluate flows."""

from __future__ import annotations

import os
from pathlib import Path

from .chart_renderer import render_window, save_png
from .config import RunConfig, resolve_time
from .dataset_builder import (Manifest, enumerate_pairs, format_prompt, materialize,
                              read_manifest)
from .diffusion import ArchConfig, DiffusionModel, SamplerConfig, TrainSettings
from .errors import ConfigurationError, ValidationError
from .evaluation import evaluate_run, write_report_json
from .indicators import WARMUP_BARS, indicator_frame
from .market_data import (ENV_API_BASE, ENV_DATA_MODE, ENV_FIXTURE_DIR,
                          FUTURES_KLINES_ROUTE, SPOT_KLINES_ROUTE, CandleSeries,
                          FixtureTransport, LiveTransport, candle_csv_path,
                          fetch_klines, parse_interval, read_candles, write_candles)
from .util import derive_seed

SPLITS = ("train", "eval", "eval_history")


def make_transport(cfg: RunConfig):
    """Transport per config; CANDLEFORGE_* env vars override the file values."""
    mode = os.environ.get(ENV_DATA_MODE, cfg.data.mode).lower()
    if mode == "live":
        base = os.environ.get(ENV_API_BASE, cfg.data.api_base)
        route = FUTURES_KLINES_ROUTE if cfg.data.market == "futures" else SPOT_KLINES_ROUTE
        return LiveTransport(base_url=base, route=route)
    if mode == "fixture":
        fixture_dir = os.environ.get(ENV_FIXTURE_DIR, cfg.data.fixture_dir)
        if not fixture_dir:
            raise ConfigurationError(
                "fixture mode needs data.fixture_dir or CANDLEFORGE_FIXTURE_DIR"
            )
        return FixtureTransport(fixture_dir)
    raise ConfigurationError(f"unknown data mode {mode!r}")


def split_range(cfg: RunConfig, split: str) -> tuple[int, int]:
    interval_ms = parse_interval(cfg.data.interval)
    if split == "train":
        return resolve_time(cfg.data.train_start), resolve_time(cfg.data.train_end, end=True)
    if split == "eval":
        return resolve_time(cfg.data.eval_start), resolve_time(cfg.data.eval_end, end=True)
    if split == "eval_history":
        start = resolve_time(cfg.data.eval_start)
        return start - WARMUP_BARS * interval_ms, start
    raise ValueError(f"unknown split {split!r}; expected one of {SPLITS}")


def fetch_split(cfg: RunConfig, split: str, transport=None) -> CandleSeries:
    """Fetch one split and persist it as CSV under paths.data_dir/<split>/."""
    if transport is None:
        transport = make_transport(cfg)
    start, end = split_range(cfg, split)
    series = fetch_klines(cfg.data.symbol, cfg.data.interval, start, end, transport)
    out_dir = Path(cfg.paths.data_dir) / split
    out_dir.mkdir(parents=True, exist_ok=True)
    write_candles(series, candle_csv_path(out_dir, series.symbol, series.interval_ms))
    return series


def load_split(cfg: RunConfig, split: str, fetch_missing: bool = True) -> CandleSeries:
    interval_ms = parse_interval(cfg.data.interval)
    path = candle_csv_path(Path(cfg.paths.data_dir) / split, cfg.data.symbol, interval_ms)
    if path.exists():
        return read_candles(path)
    if not fetch_missing:
        raise ConfigurationError(f"no candle file at {path}; run `candleforge fetch` first")
    return fetch_split(cfg, split)


def dataset_dir_for(cfg: RunConfig, split: str) -> Path:
    return Path(cfg.paths.dataset_dir) / split


def build_dataset(cfg: RunConfig, split: str = "train", out_dir=None) -> Manifest:
    """Enumerate pairs for a split and materialize images + manifest."""
    if split == "train":
        series = load_split(cfg, "train")
        pairs = enumerate_pairs(
            series, cfg.dataset.window_len, cfg.dataset.lookahead,
            require_insample_warmup=cfg.dataset.insample_warmup,
            history=None if cfg.dataset.insample_warmup else load_split(cfg, "eval_history"),
            threshold=str(cfg.dataset.threshold), bridge_gaps=cfg.dataset.bridge_gaps)
    elif split == "eval":
        series = load_split(cfg, "eval")
        history = load_split(cfg, "eval_history")
        pairs = enumerate_pairs(
            series, cfg.dataset.window_len, cfg.dataset.lookahead,
            require_insample_warmup=False, history=history,
            threshold=str(cfg.dataset.threshold), bridge_gaps=cfg.dataset.bridge_gaps)
    else:
        raise ValueError(f"dataset split must be train or eval, got {split!r}")
    out_dir = dataset_dir_for(cfg, split) if out_dir is None else Path(out_dir)
    meta = {
        "symbol": cfg.data.symbol,
        "interval": cfg.data.interval,
        "split": split,
        "window_len": cfg.dataset.window_len,
        "lookahead": cfg.dataset.lookahead,
        "threshold": repr(cfg.dataset.threshold),
    }
    return materialize(pairs, cfg.style, out_dir, meta)


def arch_from_config(cfg: RunConfig) -> ArchConfig:
    m = cfg.model
    return ArchConfig(base_channels=m.base_channels, channel_mults=tuple(m.channel_mults),
                      groups=m.groups, emb_dim=m.emb_dim, time_dim=m.time_dim,
                      cond_width=m.cond_width, bottleneck_attention=m.bottleneck_attention,
                      attn_dim=m.attn_dim)


def new_model(cfg: RunConfig) -> DiffusionModel:
    m = cfg.model
    return DiffusionModel.create(arch_from_config(cfg), seed=m.seed,
                                 schedule_T=m.schedule_steps, beta_start=m.beta_start,
                                 beta_end=m.beta_end, codec_seed=m.codec_seed,
                                 macd_scale=m.macd_scale)


def train_model(cfg: RunConfig) -> Path:
    """Train on the train-split manifest; writes checkpoint + step log, returns path."""
    manifest = read_manifest(dataset_dir_for(cfg, "train"))
    if not manifest.records:
        raise ValidationError("train manifest is empty; build the dataset first")
    model = new_model(cfg)
    dataset = model.load_manifest_latents(manifest)
    m = cfg.model
    settings = TrainSettings(steps=m.train_steps, batch_size=m.batch_size, lr=m.lr,
                             beta1=m.beta1, beta2=m.beta2, eps=m.adam_eps, seed=m.seed)
    log_rows: list = []
    model.train_on_pairs(dataset, settings, log_rows=log_rows)

    results_dir = Path(cfg.paths.results_dir)
    results_dir.mkdir(parents=True, exist_ok=True)
    log_lines = ["step,loss,lr,seed"]
    log_lines += [f"{s},{loss:.8f},{lr},{seed}" for s, loss, lr, seed in log_rows]
    (results_dir / "train_log.csv").write_text("\n".join(log_lines) + "\n", encoding="utf-8")

    checkpoint = Path(cfg.paths.checkpoint)
    checkpoint.parent.mkdir(parents=True, exist_ok=True)
    model.save(checkpoint)
    return checkpoint


def sampler_from_config(cfg: RunConfig, seed=None, steps=None,
                        text_guidance=None, image_guidance=None) -> SamplerConfig:
    s = cfg.sampler
    return SamplerConfig(
        steps=s.steps if steps is None else steps,
        text_guidance=s.text_guidance if text_guidance is None else text_guidance,
        image_guidance=s.image_guidance if image_guidance is None else image_guidance,
        seed=derive_seed(cfg.model.seed, "sample") if seed is None else seed,
    )


class WindowIndex:
    """Resolves window ids (global end index n) over one loaded series."""

    def __init__(self, series: CandleSeries, window_len: int, lookahead: int):
        self.series = series
        self.window_len = window_len
        self.lookahead = lookahead
        self.frame = indicator_frame(series)
        self.first = WARMUP_BARS + window_len - 1
        self.last = len(series) - 1

    def valid(self, n: int) -> bool:
        return self.first <= n <= self.last

    def ids(self) -> range:
        return range(self.first, self.last + 1)

    def has_ground_truth(self, n: int) -> bool:
        return n + self.lookahead <= self.last

    def window(self, n: int):
        from .chart_renderer import ChartWindow

        if not self.valid(n):
            raise KeyError(f"window id {n} outside [{self.first}, {self.last}]")
        lo = n - self.window_len + 1
        return ChartWindow(candles=self.series.candles[lo:n + 1],
                           frame=self.frame.slice(lo, n + 1), end_index=n)

    def indicators_at(self, n: int) -> tuple[float, float]:
        return float(self.frame.rsi14[n]), float(self.frame.macd_line[n])


def generate_one(cfg: RunConfig, model: DiffusionModel, index: WindowIndex, n: int,
                 rsi=None, macd=None, sampler: SamplerConfig | None = None):
    """Render window n, build its prompt (with optional overrides), sample an image."""
    window = index.window(n)
    auto_rsi, auto_macd = index.indicators_at(n)
    prompt = format_prompt(auto_rsi if rsi is None else rsi,
                           auto_macd if macd is None else macd)
    input_image = render_window(window, marker=None, style=cfg.style).pixels
    sampler = sampler_from_config(cfg) if sampler is None else sampler
    generated = model.generate(input_image, prompt, sampler)
    return generated, prompt, input_image


def generate_for_manifest(cfg: RunConfig, model: DiffusionModel, manifest: Manifest,
                          out_dir, sampler: SamplerConfig | None = None) -> list[Path]:
    """Sample one image per manifest record into gen_{n}.png files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base_sampler = sampler_from_config(cfg) if sampler is None else sampler
    paths = []
    for rec in manifest.records:
        from .chart_renderer import load_png

        input_image = load_png(Path(manifest.root) / rec.input_path)
        per_record = SamplerConfig(steps=base_sampler.steps,
                                   text_guidance=base_sampler.text_guidance,
                                   image_guidance=base_sampler.image_guidance,
                                   seed=derive_seed(base_sampler.seed, f"gen/{rec.n}"))
        image = model.generate(input_image, rec.prompt, per_record)
        path = out_dir / f"gen_{rec.n:06d}.png"
        save_png(image, path)
        paths.append(path)
    return paths


def evaluate_generated(cfg: RunConfig, generated_dir, split: str = "eval"):
    """Score generated images against the split manifest; writes CSV + JSON report."""
    manifest = read_manifest(dataset_dir_for(cfg, split))
    results_dir = Path(cfg.paths.results_dir)
    results_dir.mkdir(parents=True, exist_ok=True)
    report = evaluate_run(manifest, generated_dir, cfg.style,
                          per_sample_csv=results_dir / "per_sample.csv")
    write_report_json(report, results_dir / "metrics.json")
    return report
