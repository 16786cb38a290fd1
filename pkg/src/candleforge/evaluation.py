"""Mark-region readout and the metric tables for generated-chart classification.

The mark region of a generated image is averaged, assigned to the nearest
palette color (blue/red/black), and the resulting 3x3 confusion matrix is
summarized as per-class precision/recall/F1 plus overall accuracy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .chart_renderer import ChartStyle, load_png
from .dataset_builder import Manifest, TrendLabel
from .errors import ConfigurationError, ValidationError
from .util import round_half_away

# class order used by every matrix and report: blue, red, black
CLASS_ORDER = (TrendLabel.DOWN, TrendLabel.UP, TrendLabel.FLAT)
CLASS_NAMES = ("blue", "red", "black")

# nearest-centroid ties resolve toward the majority class first
_TIE_ORDER = {"black": 0, "red": 1, "blue": 2}


def read_mark(image: np.ndarray, style: ChartStyle = ChartStyle()) -> tuple[float, float, float]:
    """Arithmetic mean RGB over the marker square."""
    r0, r1, c0, c1 = style.marker_box()
    if r0 < 0 or c0 < 0 or r1 > image.shape[0] or c1 > image.shape[1]:
        raise ConfigurationError(
            f"marker box {style.marker_box()} out of bounds for image {image.shape[:2]}"
        )
    region = image[r0:r1, c0:c1].astype(np.float64)
    mean = region.mean(axis=(0, 1))
    return float(mean[0]), float(mean[1]), float(mean[2])


def classify_mark(mean_rgb, palette: dict[str, tuple[int, int, int]] | None = None) -> TrendLabel:
    """Nearest palette centroid by Euclidean RGB distance; no rejection class."""
    palette = palette or ChartStyle().marker_palette
    best = None
    for name, color in palette.items():
        d2 = sum((m - c) ** 2 for m, c in zip(mean_rgb, color))
        key = (d2, _TIE_ORDER[name])
        if best is None or key < best[0]:
            best = (key, name)
    by_color = {"red": TrendLabel.UP, "blue": TrendLabel.DOWN, "black": TrendLabel.FLAT}
    return by_color[best[1]]


def confusion(pred, actual) -> np.ndarray:
    """3x3 counts; rows = actual, cols = predicted, order blue/red/black."""
    pred = list(pred)
    actual = list(actual)
    if len(pred) != len(actual):
        raise ValidationError(f"length mismatch: {len(pred)} predictions, {len(actual)} actuals")
    index = {label: i for i, label in enumerate(CLASS_ORDER)}
    matrix = np.zeros((3, 3), dtype=np.int64)
    for p, a in zip(pred, actual):
        matrix[index[a], index[p]] += 1
    return matrix


@dataclass(frozen=True)
class MetricsReport:
    confusion: np.ndarray            # rows actual, cols predicted, blue/red/black
    precision: tuple[float, ...]     # percent, 2 dp, class order blue/red/black
    recall: tuple[float, ...]
    f1: tuple[float, ...]
    support: tuple[int, ...]
    accuracy_pct: float              # percent, 2 dp
    correct: int
    total: int

    def to_dict(self) -> dict:
        per_class = {
            name: {"precision": self.precision[i], "recall": self.recall[i],
                   "f1": self.f1[i], "support": self.support[i]}
            for i, name in enumerate(CLASS_NAMES)
        }
        return {
            "confusion": self.confusion.tolist(),
            "class_order": list(CLASS_NAMES),
            "per_class": per_class,
            "accuracy_pct": self.accuracy_pct,
            "correct": self.correct,
            "total": self.total,
        }


def _pct(numer: float, denom: float) -> float:
    if denom == 0:
        return 0.0
    return float(round_half_away(100.0 * numer / denom, 2))


def metrics_from_confusion(matrix) -> MetricsReport:
    """Per-class precision/recall/F1 and overall accuracy; 0/0 counts as 0."""
    m = np.asarray(matrix, dtype=np.int64)
    if m.shape != (3, 3) or (m < 0).any():
        raise ValidationError(f"confusion matrix must be non-negative 3x3, got {m.shape}")
    diag = np.diag(m)
    col = m.sum(axis=0)
    row = m.sum(axis=1)
    precision = tuple(_pct(diag[i], col[i]) for i in range(3))
    recall = tuple(_pct(diag[i], row[i]) for i in range(3))
    # harmonic mean of the raw ratios: F1 = 2*diag / (col + row)
    f1 = tuple(_pct(2 * diag[i], col[i] + row[i]) for i in range(3))
    total = int(m.sum())
    correct = int(diag.sum())
    return MetricsReport(
        confusion=m,
        precision=precision,
        recall=recall,
        f1=f1,
        support=tuple(int(x) for x in row),
        accuracy_pct=_pct(correct, total),
        correct=correct,
        total=total,
    )


def format_report(report: MetricsReport) -> str:
    """Plain-text tables: per-class metrics, then the confusion matrix."""
    lines = [
        f"{'Category':<10}{'Precision (%)':>15}{'Recall (%)':>13}{'F1-Score (%)':>15}{'Support':>10}",
    ]
    for i, name in enumerate(CLASS_NAMES):
        lines.append(f"{name:<10}{report.precision[i]:>15.2f}{report.recall[i]:>13.2f}"
                     f"{report.f1[i]:>15.2f}{report.support[i]:>10d}")
    lines.append(f"Overall Acc. {report.accuracy_pct:.2f}% ({report.correct}/{report.total})")
    lines.append("")
    lines.append(f"{'':<10}" + "".join(f"{'P. ' + n:>10}" for n in CLASS_NAMES))
    for i, name in enumerate(CLASS_NAMES):
        row = "".join(f"{report.confusion[i, j]:>10d}" for j in range(3))
        lines.append(f"{'A. ' + name:<10}{row}")
    return "\n".join(lines)


def evaluate_run(manifest: Manifest, generated_dir, style: ChartStyle,
                 per_sample_csv=None) -> MetricsReport:
    """Classify generated/{n}.png for every manifest record against its label.

    Also writes the per-sample CSV (n, actual, predicted, mean RGB) when a
    path is given.
    """
    generated_dir = Path(generated_dir)
    missing = [rec.n for rec in manifest.records
               if not (generated_dir / f"gen_{rec.n:06d}.png").exists()]
    if missing:
        raise ValidationError(
            f"missing generated images for {len(missing)} records: "
            f"{missing[:10]}{'...' if len(missing) > 10 else ''}"
        )

    rows = []
    preds, actuals = [], []
    for rec in manifest.records:
        img = load_png(generated_dir / f"gen_{rec.n:06d}.png")
        mean_rgb = read_mark(img, style)
        pred = classify_mark(mean_rgb, style.marker_palette)
        preds.append(pred)
        actuals.append(rec.label)
        rows.append((rec.n, rec.label, pred, mean_rgb))

    if per_sample_csv is not None:
        lines = ["n,actual,predicted,mean_r,mean_g,mean_b"]
        for n, actual, pred, (r, g, b) in rows:
            lines.append(f"{n},{actual.color_name},{pred.color_name},{r:.3f},{g:.3f},{b:.3f}")
        Path(per_sample_csv).write_text("\n".join(lines) + "\n", encoding="utf-8")

    return metrics_from_confusion(confusion(preds, actuals))


def write_report_json(report: MetricsReport, path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n",
                          encoding="utf-8")
