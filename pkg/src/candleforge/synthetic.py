"""Seeded synthetic candle series and fixture files for fully offline runs.

The live exchange is unavailable in CI, so the recorded-fixture role is filled
by a deterministic random walk with exchange-shaped payloads. Prices are
quantized to fixed decimal strings so CSV and JSON round trips are bit-exact.
"""

from __future__ import annotations

import json
from decimal import Decimal
from pathlib import Path

import numpy as np

from .market_data import Candle, CandleSeries, interval_name, parse_interval

UTC_DAY_MS = 86_400_000


def _quantize(x: float, places: int) -> Decimal:
    return Decimal(f"{x:.{places}f}")


def synthetic_series(symbol: str, interval, start_ms: int, end_ms: int,
                     seed: int = 2024, start_price: float = 50_000.0) -> CandleSeries:
    """Gapless random-walk series covering [start_ms, end_ms)."""
    interval_ms = parse_interval(interval)
    if start_ms >= end_ms:
        raise ValueError("empty synthetic range")
    n = (end_ms - start_ms + interval_ms - 1) // interval_ms
    rng = np.random.default_rng(seed)

    rets = rng.normal(0.0, 0.004, size=n)
    wick_up = np.abs(rng.normal(0.0, 0.002, size=n))
    wick_dn = np.abs(rng.normal(0.0, 0.002, size=n))
    vols = np.exp(rng.normal(5.0, 0.6, size=n))

    candles = []
    price = start_price
    for i in range(n):
        o = price
        c = max(o * (1.0 + rets[i]), 1.0)
        hi = max(o, c) * (1.0 + wick_up[i])
        lo = min(o, c) * (1.0 - wick_dn[i])
        candles.append(Candle(
            open_time=start_ms + i * interval_ms,
            open=_quantize(o, 2),
            high=_quantize(hi, 2),
            low=_quantize(max(lo, 0.01), 2),
            close=_quantize(c, 2),
            volume=_quantize(vols[i], 3),
        ))
        price = c
    return CandleSeries(symbol=symbol, interval_ms=interval_ms, candles=tuple(candles))


def kline_rows(series: CandleSeries) -> list[list]:
    """Exchange-shaped array-of-arrays payload (with ignored trailing fields)."""
    rows = []
    for c in series.candles:
        close_time = c.open_time + series.interval_ms - 1
        quote_volume = str(_quantize(float(c.volume) * float(c.close), 3))
        rows.append([c.open_time, str(c.open), str(c.high), str(c.low), str(c.close),
                     str(c.volume), close_time, quote_volume])
    return rows


def write_fixture(series: CandleSeries, fixture_dir) -> Path:
    """Write the fixture file FixtureTransport expects; returns its path."""
    fixture_dir = Path(fixture_dir)
    fixture_dir.mkdir(parents=True, exist_ok=True)
    path = fixture_dir / f"{series.symbol}_{interval_name(series.interval_ms)}.json"
    path.write_text(json.dumps(kline_rows(series)), encoding="utf-8")
    return path
