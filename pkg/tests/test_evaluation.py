import numpy as np
import pytest

from candleforge.chart_renderer import ChartStyle, save_png
from candleforge.dataset_builder import TrendLabel, materialize
from candleforge.errors import ValidationError
from candleforge.evaluation import (classify_mark, confusion, evaluate_run,
                                    format_report, metrics_from_confusion, read_mark,
                                    write_report_json)

# Confusion matrix of the reported evaluation run (rows actual, cols predicted,
# order blue/red/black) and the metric table it summarizes to.
REPORTED_MATRIX = [[5, 4, 34], [3, 10, 54], [54, 94, 523]]
REPORTED = {
    "precision": (8.06, 9.26, 85.60),
    "recall": (11.63, 14.93, 77.94),
    "f1": (9.52, 11.43, 81.59),
    "support": (43, 67, 671),
    "accuracy": 68.89,
    "correct": 538,
    "total": 781,
}


class TestReadMark:
    def test_solid_square(self):
        style = ChartStyle()
        img = np.zeros((style.height, style.width, 3), dtype=np.uint8)
        r0, r1, c0, c1 = style.marker_box()
        img[r0:r1, c0:c1] = (220, 40, 40)
        assert read_mark(img, style) == (220.0, 40.0, 40.0)

    def test_half_red_half_black(self):
        style = ChartStyle()
        img = np.zeros((style.height, style.width, 3), dtype=np.uint8)
        r0, r1, c0, c1 = style.marker_box()
        img[r0:r1, c0:c1] = (20, 20, 20)
        img[r0:r0 + (r1 - r0) // 2, c0:c1] = (220, 40, 40)
        assert read_mark(img, style) == (120.0, 30.0, 30.0)

    def test_geometry_must_fit(self):
        with pytest.raises(Exception):
            read_mark(np.zeros((16, 16, 3), dtype=np.uint8), ChartStyle())


class TestClassifyMark:
    def test_palette_centroids(self):
        assert classify_mark((220, 40, 40)) is TrendLabel.UP
        assert classify_mark((40, 40, 220)) is TrendLabel.DOWN
        assert classify_mark((20, 20, 20)) is TrendLabel.FLAT

    def test_mid_gray_tie_resolves_to_red(self):
        # brute-force distances: red (92,88,88) -> 23952, blue (88,88,92) ->
        # 23952, black (108,108,108) -> 34992; red/blue tie, order rule
        # black > red > blue picks red
        palette = ChartStyle().marker_palette
        d2 = {name: sum((128 - c) ** 2 for c in col) for name, col in palette.items()}
        assert d2["red"] == d2["blue"] == 23952 and d2["black"] == 34992
        assert classify_mark((128, 128, 128)) is TrendLabel.UP

    def test_black_preferred_in_three_way_tie(self):
        palette = {"red": (10, 0, 0), "blue": (0, 10, 0), "black": (0, 0, 10)}
        assert classify_mark((0, 0, 0), palette) is TrendLabel.FLAT

    def test_no_rejection_class(self):
        assert classify_mark((250, 250, 250)) in set(TrendLabel)


class TestConfusion:
    def test_reported_row_sums_are_supports(self):
        m = np.array(REPORTED_MATRIX)
        assert m.sum(axis=1).tolist() == list(REPORTED["support"])

    def test_all_correct_is_diagonal(self):
        labels = [TrendLabel.DOWN, TrendLabel.UP, TrendLabel.FLAT, TrendLabel.UP]
        m = confusion(labels, labels)
        assert np.array_equal(m, np.diag([1, 2, 1]))

    def test_empty_inputs(self):
        assert confusion([], []).sum() == 0

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            confusion([TrendLabel.UP], [])

    def test_orientation_rows_actual(self):
        m = confusion(pred=[TrendLabel.UP], actual=[TrendLabel.DOWN])
        # actual blue is row 0; predicted red is column 1
        assert m[0, 1] == 1 and m.sum() == 1


class TestMetrics:
    def test_reported_table_reproduced_exactly(self):
        report = metrics_from_confusion(REPORTED_MATRIX)
        assert report.precision == REPORTED["precision"]
        assert report.recall == REPORTED["recall"]
        assert report.f1 == REPORTED["f1"]
        assert report.support == REPORTED["support"]
        assert report.accuracy_pct == REPORTED["accuracy"]
        assert (report.correct, report.total) == (538, 781)

    def test_perfect_diagonal(self):
        report = metrics_from_confusion(np.diag([1, 1, 1]))
        assert report.precision == report.recall == report.f1 == (100.0, 100.0, 100.0)
        assert report.accuracy_pct == 100.0

    def test_absent_class_zero_by_convention(self):
        report = metrics_from_confusion([[3, 0, 0], [0, 2, 0], [0, 0, 0]])
        assert report.precision[2] == report.recall[2] == report.f1[2] == 0.0

    def test_accuracy_is_trace_over_total(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            m = rng.integers(0, 50, (3, 3))
            if m.sum() == 0:
                continue
            report = metrics_from_confusion(m)
            assert report.correct == np.trace(m)
            assert report.total == m.sum()

    def test_negative_counts_rejected(self):
        with pytest.raises(ValidationError):
            metrics_from_confusion([[-1, 0, 0], [0, 0, 0], [0, 0, 0]])

    def test_report_text_layout(self):
        text = format_report(metrics_from_confusion(REPORTED_MATRIX))
        assert "68.89% (538/781)" in text
        assert "85.60" in text and "P. blue" in text and "A. black" in text

    def test_report_json(self, tmp_path):
        report = metrics_from_confusion(REPORTED_MATRIX)
        write_report_json(report, tmp_path / "metrics.json")
        import json

        back = json.loads((tmp_path / "metrics.json").read_text())
        assert back["accuracy_pct"] == 68.89
        assert back["per_class"]["black"]["f1"] == 81.59


class TestEvaluateRun:
    @pytest.fixture
    def dataset(self, tmp_path, pairs_200, small_style):
        manifest = materialize(pairs_200[:9], small_style, tmp_path / "ds")
        return manifest, tmp_path, small_style

    def test_ground_truth_round_trips_to_full_accuracy(self, dataset):
        manifest, tmp_path, style = dataset
        gen = tmp_path / "gen"
        gen.mkdir()
        for rec in manifest.records:
            src = (tmp_path / "ds" / rec.edited_path).read_bytes()
            (gen / f"gen_{rec.n:06d}.png").write_bytes(src)
        report = evaluate_run(manifest, gen, style, per_sample_csv=tmp_path / "ps.csv")
        assert report.accuracy_pct == 100.0
        csv_lines = (tmp_path / "ps.csv").read_text().splitlines()
        assert csv_lines[0] == "n,actual,predicted,mean_r,mean_g,mean_b"
        assert len(csv_lines) == len(manifest.records) + 1

    def test_permuted_labels_accuracy_counts_fixed_points(self, dataset):
        from candleforge.chart_renderer import load_png, stamp_marker

        manifest, tmp_path, style = dataset
        gen = tmp_path / "gen_perm"
        gen.mkdir()
        cycle = {TrendLabel.UP: TrendLabel.DOWN, TrendLabel.DOWN: TrendLabel.FLAT,
                 TrendLabel.FLAT: TrendLabel.UP}
        for rec in manifest.records:
            img = load_png(tmp_path / "ds" / rec.edited_path)
            img = stamp_marker(img, cycle[rec.label], style)
            save_png(img, gen / f"gen_{rec.n:06d}.png")
        report = evaluate_run(manifest, gen, style)
        assert report.correct == 0

    def test_missing_image_lists_record_ids(self, dataset):
        manifest, tmp_path, style = dataset
        empty = tmp_path / "none"
        empty.mkdir()
        with pytest.raises(ValidationError) as err:
            evaluate_run(manifest, empty, style)
        assert str(manifest.records[0].n) in str(err.value)


def test_mark_round_trip_over_random_windows(small_style):
    """classify(read(render(w, L))) == L for random windows and every label."""
    from candleforge.chart_renderer import render_window
    from candleforge.dataset_builder import enumerate_pairs
    from conftest import make_series

    hits = 0
    total = 0
    for seed in range(4):
        series = make_series(140, seed=100 + seed)
        for pair in enumerate_pairs(series)[:3]:
            for label in TrendLabel:
                img = render_window(pair.input_window, label, small_style).pixels
                got = classify_mark(read_mark(img, small_style), small_style.marker_palette)
                hits += got is label
                total += 1
    assert hits == total
