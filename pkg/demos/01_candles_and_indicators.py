"""Walk through the data layer: fetch candles offline, persist them, check gaps,
and compute the indicator stack a chart window needs.

Run from the repo root:  python demos/01_candles_and_indicators.py
Outputs land in demos/output/.
"""

import tempfile
from pathlib import Path

import numpy as np

from candleforge.indicators import indicator_frame
from candleforge.market_data import (FixtureTransport, candle_csv_path, fetch_klines,
                                     find_gaps, read_candles, write_candles)
from candleforge.synthetic import synthetic_series, write_fixture

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

MS_4H = 14_400_000
T0 = 1_704_067_200_000  # 2024-01-01T00:00:00Z

# ---------------------------------------------------------------------------
# 1. A recorded fixture stands in for the exchange. The fixture file has the
#    exact shape of the klines payload, so pagination and parsing run the same
#    code paths as a live fetch.
# ---------------------------------------------------------------------------
fixture_dir = Path(tempfile.mkdtemp(prefix="candleforge_demo_"))
series_on_disk = synthetic_series("BTCUSDT", "4h", T0, T0 + 400 * MS_4H, seed=2024)
write_fixture(series_on_disk, fixture_dir)

series = fetch_klines("BTCUSDT", "4h", T0, T0 + 400 * MS_4H,
                      FixtureTransport(fixture_dir))
print(f"fetched {len(series)} candles "
      f"({series.candles[0].open_time} .. {series.candles[-1].open_time})")
print(f"first candle: open={series.candles[0].open} close={series.candles[0].close}")

# ---------------------------------------------------------------------------
# 2. Candles persist as exact decimal strings; the round trip is bit-exact.
# ---------------------------------------------------------------------------
csv_path = candle_csv_path(OUT, "BTCUSDT", MS_4H)
write_candles(series, csv_path)
reloaded = read_candles(csv_path)
print(f"csv round trip identical: {reloaded == series}  ({csv_path})")

# ---------------------------------------------------------------------------
# 3. Gap detection: drop one bar and the report names the missing open_time.
# ---------------------------------------------------------------------------
from candleforge.market_data import CandleSeries

gappy = CandleSeries(series.symbol, series.interval_ms,
                     series.candles[:100] + series.candles[101:])
report = find_gaps(gappy)
print(f"injected one hole -> gap report: {report.gaps}")

# ---------------------------------------------------------------------------
# 4. The indicator frame: SMA5/SMA90 overlays for the chart, RSI(14, Wilder)
#    and MACD(12,26,9) for the instruction prompt. Warm-up bars are NaN, and
#    SMA90 is the slowest: nothing renders before bar 89.
# ---------------------------------------------------------------------------
frame = indicator_frame(series)
first_full = int(np.flatnonzero(~np.isnan(frame.sma90))[0])
print(f"sma90 first defined at bar {first_full} (warm-up = 89 bars)")
n = 200
print(f"at bar {n}: close={series.candles[n].close} "
      f"rsi14={frame.rsi14[n]:.2f} macd={frame.macd_line[n]:.2f} "
      f"signal={frame.macd_signal[n]:.2f} hist={frame.macd_histogram[n]:.2f}")
print("these two numbers are what the training prompt carries:")
from candleforge.dataset_builder import format_prompt

print(" ", format_prompt(frame.rsi14[n], frame.macd_line[n]))
