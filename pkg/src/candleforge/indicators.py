"""SMA, Wilder RSI, and MACD series, index-aligned to the candles they describe.

Warm-up bars are NaN. Defaults are the universal charting settings: RSI(14)
with Wilder smoothing, MACD(12, 26, 9) with SMA-seeded EMAs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SMA_FAST = 5
SMA_SLOW = 90
RSI_PERIOD = 14
MACD_FAST = 12
MACD_SLOW = 26
MACD_SIGNAL = 9

# SMA90 is the slowest indicator; a window is fully warmed once its earliest
# bar has this many predecessors.
WARMUP_BARS = SMA_SLOW - 1


@dataclass(frozen=True)
class IndicatorFrame:
    """Per-bar indicator values aligned to one candle series; NaN while warming up."""

    sma5: np.ndarray
    sma90: np.ndarray
    rsi14: np.ndarray
    macd_line: np.ndarray
    macd_signal: np.ndarray
    macd_histogram: np.ndarray

    def __len__(self) -> int:
        return len(self.sma5)

    def slice(self, start: int, stop: int) -> "IndicatorFrame":
        return IndicatorFrame(*(getattr(self, f)[start:stop]
                                for f in ("sma5", "sma90", "rsi14",
                                          "macd_line", "macd_signal", "macd_histogram")))


def sma(closes, period: int) -> np.ndarray:
    """Simple moving average; output[i] = mean(closes[i-period+1 ..= i])."""
    if period < 1:
        raise ValueError(f"sma period must be >= 1, got {period}")
    x = np.asarray(closes, dtype=np.float64)
    out = np.full(x.shape, np.nan)
    if len(x) < period:
        return out
    csum = np.concatenate(([0.0], np.cumsum(x)))
    out[period - 1:] = (csum[period:] - csum[:-period]) / period
    return out


def _ema(x: np.ndarray, period: int) -> np.ndarray:
    """EMA with multiplier 2/(period+1), seeded by the SMA at index period-1."""
    out = np.full(x.shape, np.nan)
    if len(x) < period:
        return out
    k = 2.0 / (period + 1)
    prev = float(np.mean(x[:period]))
    out[period - 1] = prev
    for i in range(period, len(x)):
        prev = prev + k * (x[i] - prev)
        out[i] = prev
    return out


def rsi_wilder(closes, period: int = RSI_PERIOD) -> np.ndarray:
    """Wilder-smoothed RSI; flat and one-sided cases pin to 50 / 0 / 100."""
    if period < 1:
        raise ValueError(f"rsi period must be >= 1, got {period}")
    x = np.asarray(closes, dtype=np.float64)
    out = np.full(x.shape, np.nan)
    if len(x) < period + 1:
        return out
    deltas = np.diff(x)
    gains = np.where(deltas > 0, deltas, 0.0)
    losses = np.where(deltas < 0, -deltas, 0.0)
    avg_gain = float(np.mean(gains[:period]))
    avg_loss = float(np.mean(losses[:period]))
    for i in range(period, len(x)):
        if i > period:
            avg_gain = (avg_gain * (period - 1) + gains[i - 1]) / period
            avg_loss = (avg_loss * (period - 1) + losses[i - 1]) / period
        if avg_loss == 0.0 and avg_gain == 0.0:
            out[i] = 50.0
        elif avg_loss == 0.0:
            out[i] = 100.0
        elif avg_gain == 0.0:
            out[i] = 0.0
        else:
            out[i] = 100.0 - 100.0 / (1.0 + avg_gain / avg_loss)
    return out


def macd(closes, fast: int = MACD_FAST, slow: int = MACD_SLOW,
         signal: int = MACD_SIGNAL) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """MACD line, signal, histogram. Signal is the EMA of the line, seeded by
    the SMA over the line's first `signal` defined values."""
    if min(fast, slow, signal) < 1:
        raise ValueError("macd periods must be >= 1")
    if fast >= slow:
        raise ValueError(f"macd needs fast < slow, got {fast} >= {slow}")
    x = np.asarray(closes, dtype=np.float64)
    line = _ema(x, fast) - _ema(x, slow)  # NaN until index slow-1

    sig = np.full(x.shape, np.nan)
    first = slow - 1
    if len(x) >= first + signal:
        defined = line[first:]
        sig[first + signal - 1:] = _ema(defined, signal)[signal - 1:]
    hist = line - sig
    return line, sig, hist


def indicator_frame(series) -> IndicatorFrame:
    """All five indicator series for a CandleSeries (or a plain close array)."""
    closes = series if isinstance(series, np.ndarray) else np.array(
        [float(c.close) for c in series.candles], dtype=np.float64)
    line, sig, hist = macd(closes)
    return IndicatorFrame(
        sma5=sma(closes, SMA_FAST),
        sma90=sma(closes, SMA_SLOW),
        rsi14=rsi_wilder(closes),
        macd_line=line,
        macd_signal=sig,
        macd_histogram=hist,
    )
