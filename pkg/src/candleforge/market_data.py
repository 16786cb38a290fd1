"""OHLCV candle series: exchange klines fetch with pagination, CSV storage, gap checks.

Prices and volumes are carried as exact ``Decimal`` values end-to-end; they are
converted to binary floats only where indicators or the renderer need them.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from pathlib import Path

import requests

from .errors import ConfigurationError, PayloadError, TransportError, ValidationError

INTERVAL_MS = {
    "1m": 60_000,
    "5m": 300_000,
    "15m": 900_000,
    "1h": 3_600_000,
    "4h": 14_400_000,
    "1d": 86_400_000,
}
PAGE_LIMIT = 1000
CSV_HEADER = "open_time,open,high,low,close,volume"

ENV_DATA_MODE = "CANDLEFORGE_DATA_MODE"
ENV_FIXTURE_DIR = "CANDLEFORGE_FIXTURE_DIR"
ENV_API_BASE = "CANDLEFORGE_API_BASE"

DEFAULT_API_BASE = "https://fapi.binance.com"
FUTURES_KLINES_ROUTE = "/fapi/v1/klines"
SPOT_KLINES_ROUTE = "/api/v3/klines"


def parse_interval(interval) -> int:
    """Accept an interval string like '4h' or a millisecond count."""
    if isinstance(interval, int):
        if interval <= 0:
            raise ValueError(f"interval must be positive, got {interval}")
        return interval
    try:
        return INTERVAL_MS[interval]
    except KeyError:
        raise ValueError(f"unknown interval {interval!r}; known: {sorted(INTERVAL_MS)}")


def interval_name(interval_ms: int) -> str:
    for name, ms in INTERVAL_MS.items():
        if ms == interval_ms:
            return name
    return f"{interval_ms}ms"


@dataclass(frozen=True)
class Candle:
    """One OHLCV bar. open_time is UTC milliseconds since epoch."""

    open_time: int
    open: Decimal
    high: Decimal
    low: Decimal
    close: Decimal
    volume: Decimal

    def __post_init__(self):
        if min(self.open, self.high, self.low, self.close) <= 0:
            raise ValidationError(f"non-positive price in candle at {self.open_time}")
        if self.low > min(self.open, self.close) or self.high < max(self.open, self.close):
            raise ValidationError(
                f"candle at {self.open_time} violates low <= open/close <= high"
            )
        if self.volume < 0:
            raise ValidationError(f"negative volume in candle at {self.open_time}")


@dataclass(frozen=True)
class CandleSeries:
    """Ordered, strictly-increasing sequence of candles for one symbol/interval."""

    symbol: str
    interval_ms: int
    candles: tuple[Candle, ...]

    def __post_init__(self):
        times = [c.open_time for c in self.candles]
        for i in range(1, len(times)):
            if times[i] <= times[i - 1]:
                raise ValidationError(
                    f"open_time not strictly increasing at position {i} "
                    f"({times[i - 1]} then {times[i]})"
                )

    def __len__(self) -> int:
        return len(self.candles)

    @property
    def open_times(self) -> list[int]:
        return [c.open_time for c in self.candles]

    def closes(self) -> list[Decimal]:
        return [c.close for c in self.candles]

    @property
    def gapless(self) -> bool:
        return not find_gaps(self).gaps

    def slice(self, start: int, stop: int) -> "CandleSeries":
        return CandleSeries(self.symbol, self.interval_ms, self.candles[start:stop])


@dataclass(frozen=True)
class GapReport:
    """Every missing expected open_time, paired with the next candle actually present."""

    gaps: tuple[tuple[int, int], ...]

    def __bool__(self) -> bool:
        return bool(self.gaps)


def find_gaps(series: CandleSeries) -> GapReport:
    gaps = []
    step = series.interval_ms
    for prev, cur in zip(series.candles, series.candles[1:]):
        expected = prev.open_time + step
        while expected < cur.open_time:
            gaps.append((expected, cur.open_time))
            expected += step
    return GapReport(tuple(gaps))


def concat_series(history: CandleSeries, series: CandleSeries) -> CandleSeries:
    """Join a prefetched history onto a range; the two must abut exactly."""
    if history.symbol != series.symbol or history.interval_ms != series.interval_ms:
        raise ValidationError("history and series disagree on symbol or interval")
    if history.candles and series.candles:
        expected = history.candles[-1].open_time + history.interval_ms
        if series.candles[0].open_time != expected:
            raise ValidationError(
                f"history ends at {history.candles[-1].open_time} but range "
                f"starts at {series.candles[0].open_time}; expected {expected}"
            )
    return CandleSeries(series.symbol, series.interval_ms, history.candles + series.candles)


def _candle_from_row(row, where: str) -> Candle:
    # Exchange kline payload: [open_time, open, high, low, close, volume, ...]
    # with any trailing fields ignored.
    if not isinstance(row, (list, tuple)) or len(row) < 6:
        raise PayloadError(f"kline row too short in {where}")
    try:
        return Candle(
            open_time=int(row[0]),
            open=Decimal(str(row[1])),
            high=Decimal(str(row[2])),
            low=Decimal(str(row[3])),
            close=Decimal(str(row[4])),
            volume=Decimal(str(row[5])),
        )
    except (InvalidOperation, TypeError, ValueError) as exc:
        raise PayloadError(f"unparseable kline row in {where}: {exc}")


class FixtureTransport:
    """Serves klines from a recorded fixture directory, one JSON file per series.

    The file ``{symbol}_{interval}.json`` holds the exchange's array-of-arrays
    payload for the whole recorded range; requests are answered by slicing it,
    so pagination behaves exactly like the live route.
    """

    def __init__(self, fixture_dir):
        self.fixture_dir = Path(fixture_dir)
        if not self.fixture_dir.is_dir():
            raise ConfigurationError(f"fixture directory not found: {self.fixture_dir}")
        self._cache: dict[str, list] = {}

    def _load(self, symbol: str, interval_ms: int) -> list:
        key = f"{symbol}_{interval_name(interval_ms)}"
        if key not in self._cache:
            path = self.fixture_dir / f"{key}.json"
            if not path.exists():
                raise ConfigurationError(f"no fixture for {key} in {self.fixture_dir}")
            text = path.read_text(encoding="utf-8")
            try:
                rows = json.loads(text)
            except json.JSONDecodeError as exc:
                raise PayloadError(f"invalid JSON in {path.name}: {exc.msg}", offset=exc.pos)
            if not isinstance(rows, list):
                raise PayloadError(f"fixture {path.name} is not a JSON array")
            self._cache[key] = sorted(rows, key=lambda r: int(r[0]))
        return self._cache[key]

    def get_klines(self, symbol, interval_ms, start_ms, end_ms, limit):
        rows = self._load(symbol, interval_ms)
        page = [r for r in rows if start_ms <= int(r[0]) < end_ms]
        return page[:limit]


class LiveTransport:
    """HTTP klines client with bounded retries and exponential backoff."""

    def __init__(self, base_url=DEFAULT_API_BASE, route=FUTURES_KLINES_ROUTE,
                 session=None, retries=3, backoff=0.5, timeout=10.0):
        self.base_url = base_url.rstrip("/")
        self.route = route
        self.session = session or requests.Session()
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout

    def get_klines(self, symbol, interval_ms, start_ms, end_ms, limit):
        params = {
            "symbol": symbol,
            "interval": interval_name(interval_ms),
            "startTime": start_ms,
            "endTime": end_ms - 1,
            "limit": limit,
        }
        url = self.base_url + self.route
        last_exc = None
        for attempt in range(self.retries):
            try:
                resp = self.session.get(url, params=params, timeout=self.timeout)
                resp.raise_for_status()
            except requests.RequestException as exc:
                last_exc = exc
                time.sleep(self.backoff * (2 ** attempt))
                continue
            try:
                payload = resp.json()
            except ValueError as exc:
                pos = getattr(exc, "pos", 0)
                raise PayloadError(f"invalid JSON from {url}", offset=pos)
            if not isinstance(payload, list):
                raise PayloadError(f"unexpected payload shape from {url}")
            return payload
        raise TransportError(f"GET {url} failed after {self.retries} attempts: {last_exc}")


def transport_from_env():
    """Build a transport from CANDLEFORGE_* env vars; fixture mode is the default."""
    mode = os.environ.get(ENV_DATA_MODE, "fixture").lower()
    if mode == "live":
        base = os.environ.get(ENV_API_BASE, DEFAULT_API_BASE)
        return LiveTransport(base_url=base)
    if mode == "fixture":
        fixture_dir = os.environ.get(ENV_FIXTURE_DIR)
        if not fixture_dir:
            raise ConfigurationError(
                f"offline mode needs {ENV_FIXTURE_DIR} to point at a fixture directory"
            )
        return FixtureTransport(fixture_dir)
    raise ConfigurationError(f"{ENV_DATA_MODE} must be 'live' or 'fixture', got {mode!r}")


def fetch_klines(symbol, interval, start_ms: int, end_ms: int, transport=None) -> CandleSeries:
    """Fetch all candles with start <= open_time < end, paginating transparently.

    The result is sorted and deduplicated regardless of how the transport
    chunks or orders its pages.
    """
    interval_ms = parse_interval(interval)
    if start_ms >= end_ms:
        raise ValueError(f"empty fetch range: start {start_ms} >= end {end_ms}")
    if transport is None:
        transport = transport_from_env()

    by_time: dict[int, Candle] = {}
    cursor = start_ms
    while cursor < end_ms:
        page = transport.get_klines(symbol, interval_ms, cursor, end_ms, PAGE_LIMIT)
        if not page:
            break
        for row in page:
            candle = _candle_from_row(row, f"page at cursor {cursor}")
            if start_ms <= candle.open_time < end_ms:
                by_time[candle.open_time] = candle
        # transports may serve fewer rows than asked; only an empty page means done
        next_cursor = max(int(row[0]) for row in page) + interval_ms
        if next_cursor <= cursor:
            raise PayloadError(f"pagination cursor did not advance past {cursor}")
        cursor = next_cursor

    candles = tuple(by_time[t] for t in sorted(by_time))
    return CandleSeries(symbol=symbol, interval_ms=interval_ms, candles=candles)


def candle_csv_path(directory, symbol: str, interval_ms: int) -> Path:
    return Path(directory) / f"{symbol}_{interval_name(interval_ms)}.csv"


def write_candles(series: CandleSeries, path) -> None:
    """Write the documented CSV schema; round-trips bit-exactly through read_candles."""
    path = Path(path)
    lines = [CSV_HEADER]
    for c in series.candles:
        lines.append(f"{c.open_time},{c.open},{c.high},{c.low},{c.close},{c.volume}")
    try:
        path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    except OSError as exc:
        raise OSError(f"failed writing candles to {path}: {exc}") from exc


def read_candles(path, symbol: str | None = None, interval=None) -> CandleSeries:
    """Load a candle CSV; symbol/interval default to the `SYMBOL_interval.csv` name."""
    path = Path(path)
    if symbol is None or interval is None:
        stem = path.stem
        name_symbol, _, name_interval = stem.rpartition("_")
        if symbol is None:
            symbol = name_symbol or stem
        if interval is None:
            if name_interval not in INTERVAL_MS:
                raise ValidationError(
                    f"cannot infer interval from filename {path.name}; "
                    "pass interval= explicitly"
                )
            interval = name_interval
    interval_ms = parse_interval(interval)

    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise PayloadError(f"{path.name} line 1: expected header {CSV_HEADER!r}")
    candles = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 6:
            raise PayloadError(f"{path.name} line {lineno}: expected 6 fields, got {len(parts)}")
        try:
            candle = Candle(
                open_time=int(parts[0]),
                open=Decimal(parts[1]),
                high=Decimal(parts[2]),
                low=Decimal(parts[3]),
                close=Decimal(parts[4]),
                volume=Decimal(parts[5]),
            )
        except (InvalidOperation, ValueError) as exc:
            raise PayloadError(f"{path.name} line {lineno}: {exc}")
        except ValidationError as exc:
            raise ValidationError(f"{path.name} line {lineno}: {exc}")
        candles.append(candle)
    try:
        return CandleSeries(symbol=symbol, interval_ms=interval_ms, candles=tuple(candles))
    except ValidationError as exc:
        raise ValidationError(f"{path.name}: {exc}")
