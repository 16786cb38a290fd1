"""Drive the what-if scenario service in-process: browse windows, override the
prompt's RSI, and generate alternative futures for the same chart.

Needs demos/output/toy_model.cfck (demo 03). For the real HTTP server + web UI
use the CLI instead:  candleforge serve --config run.toml

Run from the repo root:  python demos/05_scenario_service.py
"""

import runpy
from pathlib import Path

from candleforge.chart_renderer import ChartStyle
from candleforge.config import RunConfig
from candleforge.diffusion import DiffusionModel
from candleforge.service import ScenarioRequest, ScenarioService
from candleforge.synthetic import synthetic_series

OUT = Path(__file__).parent / "output"
CKPT = OUT / "toy_model.cfck"
if not CKPT.exists():
    print("toy checkpoint missing; running demo 03 first...\n")
    runpy.run_path(str(Path(__file__).parent / "03_train_toy_diffusion.py"))

MS_4H = 14_400_000
T0 = 1_704_067_200_000

cfg = RunConfig()
cfg.style = ChartStyle(width=64, height=64, margin_top=14, margin_bottom=2,
                       margin_left=2, margin_right=2, volume_height=12, panel_gap=2,
                       marker_size=8, marker_inset=3)
cfg.sampler.steps = 10  # keep the demo snappy

series = synthetic_series("BTCUSDT", "4h", T0, T0 + 200 * MS_4H, seed=7)
service = ScenarioService(cfg, DiffusionModel.load(CKPT), series,
                          store_dir=OUT / "scenarios")

# ---------------------------------------------------------------------------
# 1. Browse: every fully warmed window is addressable; the trailing three have
#    no ground truth yet (their n+3 candle does not exist).
# ---------------------------------------------------------------------------
listing = service.list_windows(page_size=5)
print(f"{listing['total']} windows available; first page:")
for w in listing["windows"]:
    print(f"  id={w['id']} close={w['close']} rsi={w['rsi']} macd={w['macd']} "
          f"ground_truth={w['has_ground_truth']}")

# ---------------------------------------------------------------------------
# 2. Baseline scenario: indicators at n feed the prompt untouched.
# ---------------------------------------------------------------------------
n = listing["windows"][0]["id"]
base = service.generate_scenario(ScenarioRequest(window_id=n, seed=42))
print(f"\nbaseline  : prompt={base['prompt']!r}")
print(f"            predicted={base['predicted_label']} "
      f"actual={base['ground_truth_label']} image={base['image_path']}")

# ---------------------------------------------------------------------------
# 3. What-if: same window, RSI forced to an overbought 85. Only the prompt
#    changes; the input chart stays identical.
# ---------------------------------------------------------------------------
what_if = service.generate_scenario(ScenarioRequest(window_id=n, seed=42,
                                                    rsi_override=85.0))
print(f"\nwhat-if   : prompt={what_if['prompt']!r}")
print(f"            predicted={what_if['predicted_label']}")

# ---------------------------------------------------------------------------
# 4. Determinism + cache: repeating a seeded request returns the stored image.
# ---------------------------------------------------------------------------
again = service.generate_scenario(ScenarioRequest(window_id=n, seed=42))
print(f"\nrepeat    : scenario_id match={again['scenario_id'] == base['scenario_id']} "
      f"cached={again['cached']}")
print(f"\nscenario images under {OUT / 'scenarios'}")
