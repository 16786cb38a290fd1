"""CandleForge: candlestick time series reframed as images.

Builds paired (input chart, instruction prompt, edited chart) datasets from
exchange OHLCV data, trains a desk-scale conditional latent diffusion model to
draw the next chart, scores generations by reading the mark region, and serves
interactive what-if generation over HTTP.
"""

__version__ = "0.1.0"

from .market_data import (Candle, CandleSeries, GapReport, fetch_klines, find_gaps,
                          read_candles, write_candles)
from .indicators import IndicatorFrame, indicator_frame, macd, rsi_wilder, sma
from .chart_renderer import (ChartStyle, ChartWindow, RenderedChart, price_to_pixel,
                             render_window, stamp_marker)
from .dataset_builder import (Manifest, TrainingPairSpec, TrendLabel, enumerate_pairs,
                              format_prompt, label_from_prices, materialize, parse_prompt)
from .evaluation import (MetricsReport, classify_mark, confusion, evaluate_run,
                         metrics_from_confusion, read_mark)

__all__ = [
    "Candle", "CandleSeries", "ChartStyle", "ChartWindow", "GapReport",
    "IndicatorFrame", "Manifest", "MetricsReport", "RenderedChart",
    "TrainingPairSpec", "TrendLabel", "classify_mark", "confusion",
    "enumerate_pairs", "evaluate_run", "fetch_klines", "find_gaps",
    "format_prompt", "indicator_frame", "label_from_prices", "macd",
    "materialize", "metrics_from_confusion", "parse_prompt", "price_to_pixel",
    "read_candles", "read_mark", "render_window", "rsi_wilder", "sma",
    "stamp_marker", "write_candles",
]
