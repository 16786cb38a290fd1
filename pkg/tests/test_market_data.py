import json
from decimal import Decimal

import pytest

from candleforge.errors import (ConfigurationError, PayloadError, TransportError,
                                ValidationError)
from candleforge.market_data import (Candle, CandleSeries, FixtureTransport, PAGE_LIMIT,
                                     candle_csv_path, fetch_klines, find_gaps,
                                     parse_interval, read_candles, transport_from_env,
                                     write_candles)
from candleforge.synthetic import synthetic_series, write_fixture

from conftest import MS_4H, T0, make_series


def c(t, o="100", h="110", lo="90", cl="105", v="1"):
    return Candle(t, Decimal(o), Decimal(h), Decimal(lo), Decimal(cl), Decimal(v))


class TestCandleInvariants:
    def test_valid(self):
        c(T0)

    def test_high_below_close(self):
        with pytest.raises(ValidationError):
            c(T0, h="104")

    def test_low_above_open(self):
        with pytest.raises(ValidationError):
            c(T0, lo="101")

    def test_negative_volume(self):
        with pytest.raises(ValidationError):
            c(T0, v="-1")

    def test_non_positive_price(self):
        with pytest.raises(ValidationError):
            c(T0, o="0", lo="0")

    def test_series_requires_strictly_increasing(self):
        with pytest.raises(ValidationError):
            CandleSeries("X", MS_4H, (c(T0), c(T0)))


class TestFetch:
    @pytest.fixture
    def fixture_transport(self, tmp_path):
        series = synthetic_series("BTCUSDT", "4h", T0, T0 + 12 * MS_4H, seed=1)
        write_fixture(series, tmp_path)
        return FixtureTransport(tmp_path)

    def test_one_day_is_six_candles(self, fixture_transport):
        got = fetch_klines("BTCUSDT", "4h", T0, T0 + 86_400_000, fixture_transport)
        assert len(got) == 6
        assert got.open_times == [T0 + i * MS_4H for i in range(6)]

    def test_empty_range_is_error(self, fixture_transport):
        with pytest.raises(ValueError):
            fetch_klines("BTCUSDT", "4h", T0, T0, fixture_transport)

    def test_trailing_payload_fields_ignored(self, fixture_transport):
        got = fetch_klines("BTCUSDT", "4h", T0, T0 + MS_4H, fixture_transport)
        assert len(got) == 1 and got.candles[0].volume > 0

    def test_pagination_spans_page_limit(self, tmp_path):
        n = PAGE_LIMIT + 300
        series = synthetic_series("BTCUSDT", "4h", T0, T0 + n * MS_4H, seed=2)
        write_fixture(series, tmp_path)
        got = fetch_klines("BTCUSDT", "4h", T0, T0 + n * MS_4H, FixtureTransport(tmp_path))
        assert len(got) == n
        assert got.gapless

    def test_shuffled_overlapping_pages_still_sorted_dedup(self, tmp_path):
        # transport stub that shuffles rows inside each page and re-serves
        # overlapping rows; fetch must still return a sorted, deduplicated series
        series = synthetic_series("BTCUSDT", "4h", T0, T0 + 50 * MS_4H, seed=3)
        write_fixture(series, tmp_path)
        inner = FixtureTransport(tmp_path)

        class ShufflingStub:
            def __init__(self, seed):
                import random

                self.rnd = random.Random(seed)

            def get_klines(self, symbol, interval_ms, start, end, limit):
                page = inner.get_klines(symbol, interval_ms, max(start - 2 * MS_4H, T0),
                                        end, min(limit, 7))
                self.rnd.shuffle(page)
                return page

        for seed in range(5):
            got = fetch_klines("BTCUSDT", "4h", T0, T0 + 50 * MS_4H, ShufflingStub(seed))
            times = got.open_times
            assert times == sorted(set(times))
            assert len(got) == 50

    def test_malformed_fixture_json_reports_offset(self, tmp_path):
        (tmp_path / "BTCUSDT_4h.json").write_text("[[1, 2,", encoding="utf-8")
        with pytest.raises(PayloadError) as err:
            fetch_klines("BTCUSDT", "4h", T0, T0 + MS_4H, FixtureTransport(tmp_path))
        assert err.value.offset > 0

    def test_short_row_rejected(self, tmp_path):
        (tmp_path / "BTCUSDT_4h.json").write_text(json.dumps([[T0, "1", "2"]]))
        with pytest.raises(PayloadError):
            fetch_klines("BTCUSDT", "4h", T0, T0 + MS_4H, FixtureTransport(tmp_path))

    def test_offline_mode_without_fixture_dir(self, monkeypatch):
        monkeypatch.setenv("CANDLEFORGE_DATA_MODE", "fixture")
        monkeypatch.delenv("CANDLEFORGE_FIXTURE_DIR", raising=False)
        with pytest.raises(ConfigurationError):
            transport_from_env()

    def test_live_transport_retries_then_fails(self):
        from candleforge.market_data import LiveTransport

        transport = LiveTransport(base_url="http://127.0.0.1:1", retries=2, backoff=0.0,
                                  timeout=0.2)
        with pytest.raises(TransportError):
            transport.get_klines("BTCUSDT", MS_4H, T0, T0 + MS_4H, 10)


class TestCsvRoundTrip:
    def test_round_trip_bit_exact(self, tmp_path):
        series = make_series(30, seed=4)
        path = candle_csv_path(tmp_path, "BTCUSDT", MS_4H)
        write_candles(series, path)
        back = read_candles(path)
        assert back == series
        write_candles(back, tmp_path / "again.csv")
        assert (tmp_path / "again.csv").read_bytes() == path.read_bytes()

    def test_empty_series(self, tmp_path):
        series = CandleSeries("BTCUSDT", MS_4H, ())
        path = candle_csv_path(tmp_path, "BTCUSDT", MS_4H)
        write_candles(series, path)
        assert path.read_text() == "open_time,open,high,low,close,volume\n"
        assert read_candles(path) == series

    def test_write_to_unwritable_path(self, tmp_path):
        target = tmp_path / "missing_dir" / "x.csv"
        with pytest.raises(OSError):
            write_candles(make_series(2), target)

    def test_duplicate_open_time_rejected(self, tmp_path):
        path = tmp_path / "BTCUSDT_4h.csv"
        row = f"{T0},100,110,90,105,1"
        path.write_text(f"open_time,open,high,low,close,volume\n{row}\n{row}\n")
        with pytest.raises(ValidationError):
            read_candles(path)

    def test_high_below_low_names_row(self, tmp_path):
        path = tmp_path / "BTCUSDT_4h.csv"
        path.write_text("open_time,open,high,low,close,volume\n"
                        f"{T0},100,110,90,105,1\n"
                        f"{T0 + MS_4H},100,95,105,100,1\n")
        with pytest.raises(ValidationError) as err:
            read_candles(path)
        assert "line 3" in str(err.value)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "BTCUSDT_4h.csv"
        path.write_text("time,o,h,l,c,v\n")
        with pytest.raises(PayloadError):
            read_candles(path)

    def test_interval_from_filename(self, tmp_path):
        path = tmp_path / "nonsense.csv"
        path.write_text("open_time,open,high,low,close,volume\n")
        with pytest.raises(ValidationError):
            read_candles(path)


class TestGaps:
    def test_gapless_day(self):
        assert not find_gaps(make_series(6)).gaps

    def test_single_missing_bar(self):
        series = make_series(6)
        candles = series.candles[:3] + series.candles[4:]
        gappy = CandleSeries(series.symbol, series.interval_ms, candles)
        report = find_gaps(gappy)
        assert len(report.gaps) == 1
        assert report.gaps[0] == (T0 + 3 * MS_4H, T0 + 4 * MS_4H)

    def test_length_one_series(self):
        assert not find_gaps(make_series(1)).gaps

    def test_multi_bar_hole_lists_every_missing_time(self):
        series = make_series(8)
        gappy = CandleSeries(series.symbol, series.interval_ms,
                             series.candles[:2] + series.candles[6:])
        report = find_gaps(gappy)
        assert [g[0] for g in report.gaps] == [T0 + i * MS_4H for i in (2, 3, 4, 5)]

    def test_gapless_fetch_length_matches_range(self, tmp_path):
        series = make_series(60, seed=5)
        write_fixture(series, tmp_path)
        got = fetch_klines("BTCUSDT", "4h", T0, T0 + 60 * MS_4H, FixtureTransport(tmp_path))
        assert not find_gaps(got).gaps
        assert len(got) == 60


def test_parse_interval():
    assert parse_interval("4h") == MS_4H
    assert parse_interval(60_000) == 60_000
    with pytest.raises(ValueError):
        parse_interval("7x")
