"""Generate next-chart images with the toy checkpoint and score them by reading
the mark region, reproducing the full evaluation pipeline.

Needs demos/output/toy_model.cfck from demo 03 (runs 03 automatically if the
checkpoint is missing).

Run from the repo root:  python demos/04_generate_and_evaluate.py
"""

import runpy
import time
from pathlib import Path

from candleforge.chart_renderer import ChartStyle, render_window, save_png
from candleforge.dataset_builder import enumerate_pairs, materialize
from candleforge.diffusion import DiffusionModel, SamplerConfig
from candleforge.evaluation import evaluate_run, format_report
from candleforge.synthetic import synthetic_series

OUT = Path(__file__).parent / "output"
CKPT = OUT / "toy_model.cfck"
if not CKPT.exists():
    print("toy checkpoint missing; running demo 03 first...\n")
    runpy.run_path(str(Path(__file__).parent / "03_train_toy_diffusion.py"))

style = ChartStyle(width=64, height=64, margin_top=14, margin_bottom=2,
                   margin_left=2, margin_right=2, volume_height=12, panel_gap=2,
                   marker_size=8, marker_inset=3)

MS_4H = 14_400_000
T0 = 1_704_067_200_000
model = DiffusionModel.load(CKPT)

# a held-out stretch of the walk the model never saw
series = synthetic_series("BTCUSDT", "4h", T0 + 200 * MS_4H, T0 + 400 * MS_4H, seed=99)
pairs = enumerate_pairs(series)[:12]
manifest = materialize(pairs, style, OUT / "eval_dataset")
print(f"evaluation slice: {len(manifest)} pairs")

# ---------------------------------------------------------------------------
# 1. Sample one generated chart per pair. The sampler runs 20 ancestral Euler
#    steps with text guidance 2.0 and image guidance 1.0 (the run defaults);
#    each record gets its own derived seed so reruns reproduce every file.
# ---------------------------------------------------------------------------
sampler = SamplerConfig(steps=20, text_guidance=2.0, image_guidance=1.0, seed=0)
gen_dir = OUT / "generated"
gen_dir.mkdir(exist_ok=True)
tic = time.time()
for pair in pairs:
    input_img = render_window(pair.input_window, None, style).pixels
    per_pair = SamplerConfig(steps=sampler.steps, text_guidance=sampler.text_guidance,
                             image_guidance=sampler.image_guidance, seed=1000 + pair.n)
    image = model.generate(input_img, pair.prompt, per_pair)
    save_png(image, gen_dir / f"gen_{pair.n:06d}.png")
print(f"generated {len(pairs)} charts in {time.time() - tic:.0f}s -> {gen_dir}")

# ---------------------------------------------------------------------------
# 2. Evaluate: mean RGB over the marker square, nearest palette color, then
#    the confusion matrix and per-class precision/recall/F1. A toy model's
#    numbers are weak; the pipeline and report format are the point here.
# ---------------------------------------------------------------------------
report = evaluate_run(manifest, gen_dir, style, per_sample_csv=OUT / "per_sample.csv")
print()
print(format_report(report))
print(f"\nper-sample readings -> {OUT / 'per_sample.csv'}")
