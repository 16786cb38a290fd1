"""Paired (input chart, edited chart, prompt) dataset construction.

A pair couples the 40-candle window ending at bar n with the window ending at
bar n+3; the edited image carries a marker colored by the close-to-close move:
red above +2%, blue below -2%, black otherwise (strict inequalities).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from decimal import Decimal
from enum import Enum
from pathlib import Path

from .chart_renderer import ChartStyle, ChartWindow, WINDOW_LEN, render_window, save_png
from .errors import ValidationError
from .indicators import WARMUP_BARS, indicator_frame
from .market_data import CandleSeries, concat_series
from .util import as_decimal, content_hash, format_fixed

LOOKAHEAD = 3
THRESHOLD = Decimal("0.02")

PROMPT_TEMPLATE = "Predict next candle, RSI is {rsi}, MACD is {macd}"
_PROMPT_RE = re.compile(
    r"^Predict next candle, RSI is (-?\d+(?:\.\d+)?), MACD is (-?\d+(?:\.\d+)?)$"
)


class TrendLabel(Enum):
    UP = "up"
    DOWN = "down"
    FLAT = "flat"

    @property
    def color_name(self) -> str:
        return {TrendLabel.UP: "red", TrendLabel.DOWN: "blue", TrendLabel.FLAT: "black"}[self]

    @staticmethod
    def from_value(value: str) -> "TrendLabel":
        return TrendLabel(value)


def label_from_prices(close_n, close_n3, threshold=THRESHOLD) -> TrendLabel:
    """Classify the move close_n -> close_n3; boundaries are exclusive."""
    c0 = as_decimal(close_n)
    c3 = as_decimal(close_n3)
    t = as_decimal(threshold)
    if c0 <= 0:
        raise ValueError(f"close_n must be positive, got {c0}")
    if c3 > c0 * (1 + t):
        return TrendLabel.UP
    if c3 < c0 * (1 - t):
        return TrendLabel.DOWN
    return TrendLabel.FLAT


def format_prompt(rsi, macd) -> str:
    """Instruction prompt with both values at 2 decimals, ties away from zero."""
    rsi_d = as_decimal(rsi)
    if not (0 <= rsi_d <= 100):
        raise ValueError(f"rsi must be in [0, 100], got {rsi_d}")
    return PROMPT_TEMPLATE.format(rsi=format_fixed(rsi_d), macd=format_fixed(macd))


def parse_prompt(prompt: str) -> tuple[Decimal, Decimal]:
    m = _PROMPT_RE.match(prompt)
    if m is None:
        raise ValidationError(f"prompt does not match template: {prompt!r}")
    return Decimal(m.group(1)), Decimal(m.group(2))


@dataclass(frozen=True)
class TrainingPairSpec:
    n: int
    input_window: ChartWindow
    edited_window: ChartWindow
    label: TrendLabel
    prompt: str
    close_n: Decimal
    close_n3: Decimal
    open_time_n: int


@dataclass(frozen=True)
class ManifestRecord:
    input_path: str
    edited_path: str
    prompt: str
    label: TrendLabel
    n: int
    open_time_n: int


@dataclass(frozen=True)
class Manifest:
    records: tuple[ManifestRecord, ...]
    meta: dict
    root: Path  # directory holding manifest.jsonl; record paths are relative to it

    def __len__(self) -> int:
        return len(self.records)


def pair_count_insample(total: int, window_len: int = WINDOW_LEN,
                        lookahead: int = LOOKAHEAD) -> int:
    """Closed form for the in-sample-warm-up pair count."""
    return max(0, total - lookahead - window_len - WARMUP_BARS + 1)


def pair_count_prefetched(total: int, window_len: int = WINDOW_LEN,
                          lookahead: int = LOOKAHEAD) -> int:
    """Closed form when indicator history is prefetched separately."""
    return max(0, total - lookahead - window_len + 1)


def enumerate_pairs(series: CandleSeries, window_len: int = WINDOW_LEN,
                    lookahead: int = LOOKAHEAD, require_insample_warmup: bool = True,
                    history: CandleSeries | None = None,
                    threshold=THRESHOLD, bridge_gaps: bool = False) -> list[TrainingPairSpec]:
    """All (window at n, window at n+lookahead) pairs with indicators defined.

    With in-sample warm-up, n starts once SMA90 is defined at the earliest bar
    of the input window. With a prefetched `history` (abutting the series), n
    starts at window_len-1 and indicators warm up on the history instead.
    Windows spanning a series gap are skipped unless bridge_gaps is set.
    """
    if window_len < 1 or lookahead < 1:
        raise ValueError("window_len and lookahead must be >= 1")
    if require_insample_warmup and history is not None:
        raise ValueError("pass history only with require_insample_warmup=False")

    if history is not None and len(history):
        full = concat_series(history, series)
        offset = len(history)
    else:
        full = series
        offset = 0

    frame = indicator_frame(full)
    total = len(full)

    # earliest bar of the input window must have WARMUP_BARS predecessors;
    # in prefetched mode those predecessors live in the history
    n_lo = max(offset + window_len - 1, WARMUP_BARS + window_len - 1)
    n_hi = total - 1 - lookahead

    gap_after = set()
    if not bridge_gaps:
        for i in range(total - 1):
            if full.candles[i + 1].open_time - full.candles[i].open_time != full.interval_ms:
                gap_after.add(i)

    pairs = []
    for n in range(n_lo, n_hi + 1):
        span_first = n - window_len + 1
        if any(i in gap_after for i in range(span_first, n + lookahead)):
            continue
        close_n = full.candles[n].close
        close_n3 = full.candles[n + lookahead].close
        rsi_n = frame.rsi14[n]
        macd_n = frame.macd_line[n]
        if not (rsi_n == rsi_n and macd_n == macd_n):  # NaN check
            continue
        input_window = ChartWindow(
            candles=full.candles[span_first:n + 1],
            frame=frame.slice(span_first, n + 1),
            end_index=n - offset,
        )
        edited_window = ChartWindow(
            candles=full.candles[span_first + lookahead:n + lookahead + 1],
            frame=frame.slice(span_first + lookahead, n + lookahead + 1),
            end_index=n + lookahead - offset,
        )
        pairs.append(TrainingPairSpec(
            n=n - offset,
            input_window=input_window,
            edited_window=edited_window,
            label=label_from_prices(close_n, close_n3, threshold),
            prompt=format_prompt(rsi_n, macd_n),
            close_n=close_n,
            close_n3=close_n3,
            open_time_n=full.candles[n].open_time,
        ))
    return pairs


def _record_dict(rec: ManifestRecord) -> dict:
    return {
        "input_path": rec.input_path,
        "edited_path": rec.edited_path,
        "prompt": rec.prompt,
        "label": rec.label.value,
        "n": rec.n,
        "open_time_n": rec.open_time_n,
    }


def materialize(pairs, style: ChartStyle, out_dir, meta: dict | None = None) -> Manifest:
    """Render every pair to PNGs and write manifest.jsonl + dataset_meta.json.

    Re-running with identical inputs reproduces identical bytes. On failure,
    files created by this invocation are removed before the error propagates.
    """
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)

    written: list[Path] = []
    records = []
    try:
        for pair in pairs:
            input_rel = f"images/pair_{pair.n:06d}_input.png"
            edited_rel = f"images/pair_{pair.n:06d}_edited.png"
            input_img = render_window(pair.input_window, marker=None, style=style)
            edited_img = render_window(pair.edited_window, marker=pair.label, style=style)
            save_png(input_img.pixels, out_dir / input_rel)
            written.append(out_dir / input_rel)
            save_png(edited_img.pixels, out_dir / edited_rel)
            written.append(out_dir / edited_rel)
            records.append(ManifestRecord(
                input_path=input_rel, edited_path=edited_rel, prompt=pair.prompt,
                label=pair.label, n=pair.n, open_time_n=pair.open_time_n,
            ))

        full_meta = {
            "window_len": len(pairs[0].input_window) if pairs else WINDOW_LEN,
            "lookahead": LOOKAHEAD,
            "threshold": str(THRESHOLD),
            "style": style.to_dict(),
            "style_hash": content_hash(style.to_dict()),
            "pair_count": len(records),
        }
        full_meta.update(meta or {})

        manifest_path = out_dir / "manifest.jsonl"
        lines = [json.dumps(_record_dict(r), sort_keys=True) for r in records]
        manifest_path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
        written.append(manifest_path)
        meta_path = out_dir / "dataset_meta.json"
        meta_path.write_text(json.dumps(full_meta, sort_keys=True, indent=2) + "\n",
                             encoding="utf-8")
        written.append(meta_path)
    except BaseException:
        for path in written:
            path.unlink(missing_ok=True)
        raise

    return Manifest(records=tuple(records), meta=full_meta, root=out_dir)


def read_manifest(manifest_dir) -> Manifest:
    manifest_dir = Path(manifest_dir)
    manifest_path = manifest_dir / "manifest.jsonl"
    records = []
    for lineno, line in enumerate(manifest_path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            records.append(ManifestRecord(
                input_path=d["input_path"], edited_path=d["edited_path"],
                prompt=d["prompt"], label=TrendLabel(d["label"]),
                n=int(d["n"]), open_time_n=int(d["open_time_n"]),
            ))
        except (KeyError, ValueError) as exc:
            raise ValidationError(f"manifest.jsonl line {lineno}: {exc}")
    meta_path = manifest_dir / "dataset_meta.json"
    meta = json.loads(meta_path.read_text(encoding="utf-8")) if meta_path.exists() else {}
    return Manifest(records=tuple(records), meta=meta, root=manifest_dir)
