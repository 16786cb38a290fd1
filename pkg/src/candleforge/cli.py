"""Command-line entry point: fetch, dataset, train, generate, evaluate, serve.

Exit codes: 0 success, 1 usage/validation failure, 2 runtime failure.
Flag precedence: flags > config file > built-in defaults.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import RunConfig, load_config
from .errors import CandleForgeError, ConfigurationError, ValidationError
from .chart_renderer import save_png
from .pipeline import (build_dataset, dataset_dir_for, evaluate_generated, fetch_split,
                       generate_for_manifest, generate_one, load_split, new_model,
                       sampler_from_config, train_model, WindowIndex, SPLITS)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="candleforge",
        description="Candlestick charts as images: dataset, diffusion training, "
                    "generation, evaluation, and a scenario service.",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def common(p):
        p.add_argument("--config", type=Path, default=None, help="run config TOML")
        p.add_argument("--offline", action="store_true",
                       help="force fixture mode regardless of config")
        p.add_argument("--seed", type=int, default=None, help="override model.seed")

    p = sub.add_parser("fetch", help="fetch candles for the configured ranges")
    common(p)
    p.add_argument("--start", default=None, help="override range start (ISO date/time)")
    p.add_argument("--end", default=None, help="override range end (ISO date/time)")
    p.add_argument("--splits", nargs="*", default=list(SPLITS), choices=list(SPLITS))

    p = sub.add_parser("dataset", help="build the paired image dataset + manifest")
    common(p)
    p.add_argument("--split", default="train", choices=["train", "eval"])
    p.add_argument("--out", type=Path, default=None, help="output directory")

    p = sub.add_parser("train", help="train the denoiser on the train manifest")
    common(p)
    p.add_argument("--steps", type=int, default=None, help="override train steps")
    p.add_argument("--out", type=Path, default=None, help="override checkpoint path")

    p = sub.add_parser("generate", help="generate the next chart for one window")
    common(p)
    p.add_argument("--window", type=int, default=None, help="window id (end index n)")
    p.add_argument("--all", action="store_true",
                   help="generate for every record of --split instead of one window")
    p.add_argument("--split", default="eval", choices=["train", "eval"])
    p.add_argument("--rsi", type=float, default=None, help="override prompt RSI")
    p.add_argument("--macd", type=float, default=None, help="override prompt MACD")
    p.add_argument("--steps", type=int, default=None, help="sampler steps")
    p.add_argument("--guidance", type=float, default=None, help="text guidance scale")
    p.add_argument("--image-guidance", type=float, default=None, help="image guidance scale")
    p.add_argument("--out", type=Path, default=None, help="output directory")

    p = sub.add_parser("evaluate", help="score generated images against a manifest")
    common(p)
    p.add_argument("--generated", type=Path, default=None,
                   help="directory of gen_{n}.png images (default: results/generated)")
    p.add_argument("--split", default="eval", choices=["train", "eval"])

    p = sub.add_parser("serve", help="run the scenario HTTP service")
    common(p)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--host", default=None)
    return parser


def _load_run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "offline", False):
        cfg.data.mode = "fixture"
    if getattr(args, "seed", None) is not None:
        cfg.model.seed = args.seed
    return cfg


def _cmd_fetch(args) -> int:
    cfg = _load_run_config(args)
    if args.start or args.end:
        from .config import resolve_time
        from .market_data import candle_csv_path, fetch_klines, write_candles
        from .pipeline import make_transport

        if not (args.start and args.end):
            raise ConfigurationError("--start and --end must be given together")
        start = resolve_time(args.start)
        end = resolve_time(args.end, end=True)
        series = fetch_klines(cfg.data.symbol, cfg.data.interval, start, end,
                              make_transport(cfg))
        out_dir = Path(cfg.paths.data_dir) / "custom"
        out_dir.mkdir(parents=True, exist_ok=True)
        path = candle_csv_path(out_dir, series.symbol, series.interval_ms)
        write_candles(series, path)
        print(f"fetched {len(series)} candles -> {path}")
        return 0
    for split in args.splits:
        series = fetch_split(cfg, split)
        print(f"fetched {split}: {len(series)} candles")
    return 0


def _cmd_dataset(args) -> int:
    cfg = _load_run_config(args)
    manifest = build_dataset(cfg, args.split, out_dir=args.out)
    out = args.out or dataset_dir_for(cfg, args.split)
    print(f"dataset[{args.split}]: {len(manifest)} pairs -> {out}")
    return 0


def _cmd_train(args) -> int:
    cfg = _load_run_config(args)
    if args.steps is not None:
        cfg.model.train_steps = args.steps
    if args.out is not None:
        cfg.paths.checkpoint = str(args.out)
    path = train_model(cfg)
    print(f"checkpoint -> {path}")
    return 0


def _cmd_generate(args) -> int:
    cfg = _load_run_config(args)
    from .diffusion import DiffusionModel

    model = DiffusionModel.load(cfg.paths.checkpoint)
    sampler = sampler_from_config(cfg, seed=args.seed, steps=args.steps,
                                  text_guidance=args.guidance,
                                  image_guidance=getattr(args, "image_guidance"))
    out_dir = args.out or (Path(cfg.paths.results_dir) / "generated")
    out_dir = Path(out_dir)
    if args.all:
        from .dataset_builder import read_manifest

        manifest = read_manifest(dataset_dir_for(cfg, args.split))
        paths = generate_for_manifest(cfg, model, manifest, out_dir, sampler)
        print(f"generated {len(paths)} images -> {out_dir}")
        return 0
    if args.window is None:
        raise ConfigurationError("generate needs --window N (or --all)")
    series = load_split(cfg, "train")
    index = WindowIndex(series, cfg.dataset.window_len, cfg.dataset.lookahead)
    image, prompt, _ = generate_one(cfg, model, index, args.window,
                                    rsi=args.rsi, macd=args.macd, sampler=sampler)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"gen_{args.window:06d}.png"
    save_png(image, path)
    print(f"window {args.window}: {prompt!r} -> {path}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _load_run_config(args)
    generated = args.generated or (Path(cfg.paths.results_dir) / "generated")
    report = evaluate_generated(cfg, generated, split=args.split)
    from .evaluation import format_report

    print(format_report(report))
    print(f"accuracy {report.accuracy_pct:.2f}% ({report.correct}/{report.total})")
    return 0


def _cmd_serve(args) -> int:
    cfg = _load_run_config(args)
    if args.port is not None:
        cfg.service.port = args.port
    if args.host is not None:
        cfg.service.host = args.host
    import uvicorn

    from .service import build_service

    app = build_service(cfg)
    uvicorn.run(app, host=cfg.service.host, port=cfg.service.port, log_level="info")
    return 0


_COMMANDS = {
    "fetch": _cmd_fetch,
    "dataset": _cmd_dataset,
    "train": _cmd_train,
    "generate": _cmd_generate,
    "evaluate": _cmd_evaluate,
    "serve": _cmd_serve,
}


def dispatch(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; our contract reserves 2 for runtime
        return 0 if exc.code in (0, None) else 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except (ConfigurationError, ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CandleForgeError, OSError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
