import pytest

from candleforge.chart_renderer import ChartStyle
from candleforge.synthetic import synthetic_series

MS_4H = 14_400_000
T0 = 1_704_067_200_000  # 2024-01-01T00:00:00Z


def make_series(n_bars: int, seed: int = 7, symbol: str = "BTCUSDT", start_ms: int = T0):
    return synthetic_series(symbol, "4h", start_ms, start_ms + n_bars * MS_4H, seed=seed)


@pytest.fixture
def small_style():
    """64x64 charts -> 16x16 latents; keeps render/diffusion tests fast."""
    return ChartStyle(width=64, height=64, margin_top=14, margin_bottom=2,
                      margin_left=2, margin_right=2, volume_height=12, panel_gap=2,
                      marker_size=8, marker_inset=3)


@pytest.fixture(scope="session")
def series_200():
    return make_series(200)


@pytest.fixture(scope="session")
def pairs_200(series_200):
    from candleforge.dataset_builder import enumerate_pairs

    return enumerate_pairs(series_200)
