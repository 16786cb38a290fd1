from decimal import Decimal

import numpy as np
import pytest

from candleforge.dataset_builder import (LOOKAHEAD, TrendLabel, enumerate_pairs,
                                         format_prompt, label_from_prices, materialize,
                                         pair_count_insample, pair_count_prefetched,
                                         parse_prompt, read_manifest)
from candleforge.chart_renderer import WINDOW_LEN, load_png
from candleforge.errors import ValidationError
from candleforge.evaluation import classify_mark, read_mark
from candleforge.indicators import WARMUP_BARS
from candleforge.market_data import CandleSeries

from conftest import MS_4H, make_series


class TestLabel:
    def test_plus_three_percent_is_up(self):
        assert label_from_prices(100, 103) is TrendLabel.UP

    def test_exact_two_percent_boundary_is_flat(self):
        # the rule is "more than 2%", so the boundary stays flat; this is why
        # the comparison runs in decimal, not binary floating point
        assert label_from_prices(100, 102) is TrendLabel.FLAT
        assert label_from_prices(100, 98) is TrendLabel.FLAT

    def test_minus_two_point_one_is_down(self):
        assert label_from_prices(100, Decimal("97.9")) is TrendLabel.DOWN

    def test_float_inputs_hit_exact_boundary(self):
        assert label_from_prices(100.0, 102.0) is TrendLabel.FLAT

    def test_non_positive_base_price(self):
        with pytest.raises(ValueError):
            label_from_prices(0, 100)

    def test_band_symmetry_on_sampled_moves(self):
        rng = np.random.default_rng(0)
        for r in rng.uniform(0.021, 0.5, size=50):
            up = label_from_prices(100, Decimal(repr(float(100 * (1 + r)))))
            down = label_from_prices(100, Decimal(repr(float(100 * (1 - r)))))
            assert up is TrendLabel.UP and down is TrendLabel.DOWN

    def test_custom_threshold(self):
        assert label_from_prices(100, 103, threshold="0.05") is TrendLabel.FLAT


class TestPrompt:
    def test_formatting(self):
        assert format_prompt(Decimal("55.3"), Decimal("120.5")) == \
            "Predict next candle, RSI is 55.30, MACD is 120.50"

    def test_zero_values(self):
        assert format_prompt(0, 0) == "Predict next candle, RSI is 0.00, MACD is 0.00"

    def test_round_half_away_from_zero(self):
        assert format_prompt(100, Decimal("-3.125")) == \
            "Predict next candle, RSI is 100.00, MACD is -3.13"
        assert format_prompt(Decimal("2.005"), Decimal("3.125")) == \
            "Predict next candle, RSI is 2.01, MACD is 3.13"

    def test_rsi_bounds_enforced(self):
        with pytest.raises(ValueError):
            format_prompt(101, 0)

    def test_parse_round_trip(self):
        rsi, macd = parse_prompt(format_prompt(Decimal("55.3"), Decimal("120.5")))
        assert (rsi, macd) == (Decimal("55.30"), Decimal("120.50"))

    def test_parse_negative_macd(self):
        rsi, macd = parse_prompt("Predict next candle, RSI is 33.33, MACD is -41.00")
        assert macd == Decimal("-41.00")

    def test_parse_rejects_missing_values(self):
        with pytest.raises(ValidationError):
            parse_prompt("Predict next candle")

    def test_parse_rejects_prefix_drift(self):
        with pytest.raises(ValidationError):
            parse_prompt("predict next candle, RSI is 1.00, MACD is 1.00")


def brute_force_count(total, window_len=WINDOW_LEN, lookahead=LOOKAHEAD, warmup=True):
    count = 0
    for n in range(total):
        if n < window_len - 1 or n + lookahead > total - 1:
            continue
        if warmup and n - (window_len - 1) < WARMUP_BARS:
            continue
        count += 1
    return count


class TestEnumerate:
    def test_t131_has_no_pairs(self):
        series = make_series(131)
        assert enumerate_pairs(series) == []

    def test_t132_has_exactly_one_pair_at_n128(self):
        series = make_series(132)
        pairs = enumerate_pairs(series)
        assert len(pairs) == 1 == brute_force_count(132)
        assert pairs[0].n == 128

    def test_formula_matches_brute_force_all_lengths(self):
        # spot-build series at the boundary lengths, formula-check the rest
        for total in (0, 1, 50, 131, 132, 200, 400):
            series = make_series(total) if total else CandleSeries("X", MS_4H, ())
            got = len(enumerate_pairs(series))
            assert got == brute_force_count(total) == pair_count_insample(total)
        for total in range(0, 401):
            assert pair_count_insample(total) == brute_force_count(total)
            assert pair_count_prefetched(total) == brute_force_count(total, warmup=False)

    def test_pair_contents(self, series_200, pairs_200):
        pair = pairs_200[0]
        assert pair.n == 128
        assert len(pair.input_window) == WINDOW_LEN
        assert pair.edited_window.end_index == pair.n + LOOKAHEAD
        assert pair.input_window.candles[-1].open_time == pair.open_time_n
        assert pair.label is label_from_prices(pair.close_n, pair.close_n3)
        rsi, macd = parse_prompt(pair.prompt)
        assert 0 <= rsi <= 100
        # sma90 defined at every bar of both windows
        assert not np.isnan(pair.input_window.frame.sma90).any()
        assert not np.isnan(pair.edited_window.frame.sma90).any()

    def test_prefetched_history_mode(self):
        full = make_series(200)
        history = CandleSeries(full.symbol, full.interval_ms, full.candles[:WARMUP_BARS])
        series = CandleSeries(full.symbol, full.interval_ms, full.candles[WARMUP_BARS:])
        pairs = enumerate_pairs(series, require_insample_warmup=False, history=history)
        assert len(pairs) == pair_count_prefetched(len(series)) == len(series) - 42
        assert pairs[0].n == WINDOW_LEN - 1
        # same bars enumerated in-sample give identical labels and prompts
        insample = enumerate_pairs(full)
        by_time = {p.open_time_n: p for p in insample}
        for p in pairs:
            ref = by_time[p.open_time_n]
            assert (p.label, p.prompt) == (ref.label, ref.prompt)

    def test_history_requires_insample_flag_off(self):
        series = make_series(60)
        with pytest.raises(ValueError):
            enumerate_pairs(series, history=series)

    def test_history_must_abut_series(self):
        full = make_series(200)
        history = CandleSeries(full.symbol, full.interval_ms, full.candles[:80])
        series = CandleSeries(full.symbol, full.interval_ms, full.candles[90:])
        with pytest.raises(ValidationError):
            enumerate_pairs(series, require_insample_warmup=False, history=history)

    def test_gap_windows_skipped_by_default(self):
        series = make_series(200)
        # remove one candle inside the window span of some pairs
        candles = series.candles[:150] + series.candles[151:]
        gappy = CandleSeries(series.symbol, series.interval_ms, candles)
        pairs = enumerate_pairs(gappy)
        bridged = enumerate_pairs(gappy, bridge_gaps=True)
        assert len(bridged) > len(pairs)
        # no surviving pair spans the missing bar
        for p in pairs:
            times = [c.open_time for c in p.input_window.candles] \
                + [c.open_time for c in p.edited_window.candles]
            deltas = np.diff(sorted(set(times)))
            assert (deltas == MS_4H).all()


class TestMaterialize:
    def test_materialize_counts_and_round_trip(self, tmp_path, pairs_200, small_style):
        subset = pairs_200[:8]
        manifest = materialize(subset, small_style, tmp_path / "ds")
        assert len(manifest) == 8
        images = sorted((tmp_path / "ds" / "images").iterdir())
        assert len(images) == 16
        back = read_manifest(tmp_path / "ds")
        assert back.records == manifest.records
        assert back.meta["style_hash"] == manifest.meta["style_hash"]

    def test_label_round_trips_through_pixels(self, tmp_path, pairs_200, small_style):
        subset = pairs_200[:6]
        manifest = materialize(subset, small_style, tmp_path / "ds")
        for rec in manifest.records:
            img = load_png(tmp_path / "ds" / rec.edited_path)
            assert classify_mark(read_mark(img, small_style),
                                 small_style.marker_palette) is rec.label

    def test_rerun_is_byte_identical(self, tmp_path, pairs_200, small_style):
        subset = pairs_200[:4]
        materialize(subset, small_style, tmp_path / "ds")
        first = {p.name: p.read_bytes() for p in sorted((tmp_path / "ds").rglob("*"))
                 if p.is_file()}
        materialize(subset, small_style, tmp_path / "ds")
        second = {p.name: p.read_bytes() for p in sorted((tmp_path / "ds").rglob("*"))
                  if p.is_file()}
        assert first == second

    def test_empty_pairs(self, tmp_path, small_style):
        manifest = materialize([], small_style, tmp_path / "ds")
        assert len(manifest) == 0
        assert not list((tmp_path / "ds" / "images").iterdir())
        assert read_manifest(tmp_path / "ds").records == ()

    def test_failure_cleans_partial_output(self, tmp_path, pairs_200):
        from candleforge.chart_renderer import ChartStyle

        # marker geometry that fails validation only at render time
        style = ChartStyle(width=64, height=64, margin_top=4, margin_bottom=2,
                           margin_left=2, margin_right=2, volume_height=12,
                           panel_gap=2, marker_size=8, marker_inset=3)
        with pytest.raises(Exception):
            materialize(pairs_200[:2], style, tmp_path / "ds")
        leftover = [p for p in (tmp_path / "ds").rglob("*") if p.is_file()]
        assert leftover == []
