"""Build the paired dataset: input chart at bar n, edited chart at n+3 carrying
the trend marker, and the RSI/MACD instruction prompt.

Run from the repo root:  python demos/02_dataset_pairs.py
"""

from collections import Counter
from pathlib import Path

from candleforge.chart_renderer import ChartStyle, render_window, save_png
from candleforge.dataset_builder import enumerate_pairs, materialize
from candleforge.synthetic import synthetic_series

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

MS_4H = 14_400_000
T0 = 1_704_067_200_000

series = synthetic_series("BTCUSDT", "4h", T0, T0 + 400 * MS_4H, seed=7)

# ---------------------------------------------------------------------------
# 1. Enumerate pairs. In-sample warm-up means the first usable n is 128:
#    39 bars to fill the window plus 89 so SMA90 is defined at its oldest bar.
#    The pair count is therefore T - 3 - 40 - 89 + 1.
# ---------------------------------------------------------------------------
pairs = enumerate_pairs(series)
print(f"{len(series)} candles -> {len(pairs)} pairs "
      f"(first n = {pairs[0].n}, last n = {pairs[-1].n})")

labels = Counter(p.label.color_name for p in pairs)
print(f"label mix (red=up >2%, blue=down >2%, black=flat): {dict(labels)}")
print(f"example prompt at n={pairs[0].n}: {pairs[0].prompt!r}")

# ---------------------------------------------------------------------------
# 2. Render one pair at full size and save it for inspection. The edited image
#    is the same chart three bars later, plus the solid marker square in the
#    upper-right corner. Everything else about the two renders is identical
#    machinery.
# ---------------------------------------------------------------------------
style = ChartStyle()  # 256x256, marker 24px at 8px inset
pair = pairs[len(pairs) // 2]
save_png(render_window(pair.input_window, None, style).pixels, OUT / "pair_input.png")
save_png(render_window(pair.edited_window, pair.label, style).pixels, OUT / "pair_edited.png")
print(f"wrote {OUT / 'pair_input.png'} and {OUT / 'pair_edited.png'} "
      f"(marker color: {pair.label.color_name})")

# ---------------------------------------------------------------------------
# 3. Materialize a slice of the dataset: images plus manifest.jsonl. Rerunning
#    this produces byte-identical files, which is what makes training runs
#    reproducible end to end.
# ---------------------------------------------------------------------------
manifest = materialize(pairs[:12], style, OUT / "mini_dataset")
print(f"materialized {len(manifest)} pairs under {manifest.root}")
print(f"manifest meta: window_len={manifest.meta['window_len']} "
      f"lookahead={manifest.meta['lookahead']} style_hash={manifest.meta['style_hash']}")
