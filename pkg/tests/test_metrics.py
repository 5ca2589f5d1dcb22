"""Confusion/report/rmse math, ensembling, submissions, feature maps."""

import math

import numpy as np
import pytest

from morphnet.metrics import (
    SUBMISSION_HEADER,
    ensemble_average,
    confusion,
    feature_map_export,
    format_report,
    report,
    rmse,
    write_submission,
)
from morphnet.scaling import build_network, build_preset

# Published benchmark: 7-way confusion counts with trace 2426 over 2589
# test images, alongside the rounded per-class scores they imply.
BENCHMARK_CM = np.array(
    [
        [784, 22, 0, 0, 0, 1, 3],
        [15, 758, 2, 0, 0, 2, 1],
        [0, 5, 41, 11, 0, 0, 0],
        [0, 3, 22, 344, 0, 2, 7],
        [0, 0, 0, 1, 70, 10, 1],
        [8, 8, 1, 0, 1, 304, 6],
        [6, 8, 0, 0, 3, 14, 125],
    ],
    dtype=np.int64,
)
BENCHMARK_PRECISION = [0.96, 0.94, 0.62, 0.97, 0.95, 0.91, 0.87]
BENCHMARK_RECALL = [0.97, 0.97, 0.72, 0.91, 0.85, 0.93, 0.80]
BENCHMARK_F1 = [0.97, 0.96, 0.67, 0.94, 0.90, 0.92, 0.84]


class TestConfusion:
    def test_perfect_predictions_are_diagonal(self):
        labels = np.array([0, 1, 2, 2, 1, 0, 1])
        cm = confusion(labels, labels, k=3)
        np.testing.assert_array_equal(cm, np.diag([2, 3, 2]))

    def test_counting_oracle(self):
        rng = np.random.default_rng(0)
        labels = rng.integers(0, 7, size=500)
        preds = rng.integers(0, 7, size=500)
        cm = confusion(preds, labels)
        for x in range(7):
            for y in range(7):
                assert cm[x, y] == np.sum((labels == x) & (preds == y))
        assert cm.sum() == 500
        np.testing.assert_array_equal(cm.sum(axis=1), np.bincount(labels, minlength=7))

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="0..6"):
            confusion([7], [0])
        with pytest.raises(ValueError, match="0..6"):
            confusion([0], [-1])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            confusion([0, 1], [0])


class TestReport:
    def test_benchmark_accuracy_exact(self):
        r = report(BENCHMARK_CM)
        assert r.accuracy == 2426 / 2589
        assert round(r.accuracy, 4) == 0.9370

    def test_benchmark_per_class_scores(self):
        r = report(BENCHMARK_CM)
        for c in range(7):
            assert abs(r.precision[c] - BENCHMARK_PRECISION[c]) < 0.005, f"precision[{c}]"
            assert abs(r.recall[c] - BENCHMARK_RECALL[c]) < 0.005, f"recall[{c}]"
            assert abs(r.f1[c] - BENCHMARK_F1[c]) < 0.005, f"f1[{c}]"

    def test_identity_matrix_scores_one(self):
        r = report(np.eye(2, dtype=int) * 5)
        assert r.accuracy == 1.0
        np.testing.assert_array_equal(r.precision, [1.0, 1.0])
        np.testing.assert_array_equal(r.recall, [1.0, 1.0])
        np.testing.assert_array_equal(r.f1, [1.0, 1.0])
        assert not r.degenerate.any()

    def test_accuracy_equals_mean_agreement(self):
        rng = np.random.default_rng(1)
        labels = rng.integers(0, 7, size=333)
        preds = rng.integers(0, 7, size=333)
        r = report(confusion(preds, labels))
        assert r.accuracy == np.mean(preds == labels)

    def test_zero_prediction_class_flagged(self):
        cm = np.array([[2, 0], [3, 0]])  # class 1 never predicted
        r = report(cm)
        assert r.precision[1] == 0.0 and r.recall[1] == 0.0
        assert r.degenerate[1] and not r.degenerate[0]

    def test_zero_support_class_flagged(self):
        cm = np.array([[2, 1], [0, 0]])
        r = report(cm)
        assert r.recall[1] == 0.0
        assert r.degenerate[1]

    def test_macro_is_unweighted_mean(self):
        r = report(BENCHMARK_CM)
        assert r.macro_precision == pytest.approx(r.precision.mean())
        assert r.macro_recall == pytest.approx(r.recall.mean())
        assert r.macro_f1 == pytest.approx(r.f1.mean())

    def test_empty_matrix_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            report(np.zeros((3, 3), dtype=int))
        with pytest.raises(ValueError, match="square"):
            report(np.zeros((2, 3), dtype=int))

    def test_format_report_mentions_flags(self):
        text = format_report(report(np.array([[2, 0], [3, 0]])))
        assert "zero-denominator" in text
        assert "accuracy" in text


class TestRmse:
    def test_zero_when_equal(self):
        p = np.random.default_rng(0).uniform(size=(5, 37))
        assert rmse(p, p).rmse == 0.0

    def test_constant_error(self):
        p = np.zeros((1, 37))
        t = np.full((1, 37), 0.1)
        assert rmse(p, t).rmse == pytest.approx(0.1, abs=1e-12)

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(2)
        a = rng.uniform(size=(40, 37))
        b = rng.uniform(size=(40, 37))
        r = rmse(a, b)
        assert r.rmse == pytest.approx(float(np.sqrt(np.mean((a - b) ** 2))), abs=1e-12)
        np.testing.assert_allclose(
            r.per_question, np.sqrt(np.mean((a - b) ** 2, axis=0)), atol=1e-12
        )
        assert r.per_question.shape == (37,)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            rmse(np.zeros((2, 37)), np.zeros((3, 37)))
        with pytest.raises(ValueError):
            rmse(np.zeros(37), np.zeros(37))

    def test_metric_axioms_on_sampled_triples(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            a, b, c = rng.uniform(size=(3, 4, 37))
            ab, ba = rmse(a, b).rmse, rmse(b, a).rmse
            assert ab >= 0
            assert ab == ba
            assert rmse(a, a).rmse == 0.0
            assert rmse(a, c).rmse <= ab + rmse(b, c).rmse + 1e-12


class TestEnsemble:
    def test_single_member_identity(self):
        p = np.random.default_rng(0).uniform(size=(4, 37))
        np.testing.assert_array_equal(ensemble_average([p]), p)

    def test_copies_average_to_themselves(self):
        p = np.random.default_rng(1).uniform(size=(4, 37))
        np.testing.assert_array_equal(ensemble_average([p, p.copy(), p.copy()]), p)

    def test_two_member_mean(self):
        a = np.zeros((2, 3))
        b = np.ones((2, 3))
        np.testing.assert_array_equal(ensemble_average([a, b]), np.full((2, 3), 0.5))

    def test_errors(self):
        with pytest.raises(ValueError, match="at least one"):
            ensemble_average([])
        with pytest.raises(ValueError, match="shape"):
            ensemble_average([np.zeros((2, 3)), np.zeros((3, 2))])


class TestSubmission:
    def test_single_row_layout(self):
        text = write_submission(["42"], np.full((1, 37), 0.5))
        lines = text.strip().split("\n")
        assert len(lines) == 2
        assert lines[0] == SUBMISSION_HEADER
        assert lines[0].startswith("GalaxyID,Class1.1,Class1.2,Class1.3,Class2.1")
        assert lines[0].endswith("Class11.5,Class11.6")
        assert len(lines[1].split(",")) == 38
        assert lines[1].split(",")[1] == "0.5"

    def test_round_trip_lossless(self):
        rng = np.random.default_rng(4)
        preds = rng.uniform(size=(6, 37))
        ids = [f"g{i}" for i in range(6)]
        text = write_submission(ids, preds)
        rows = [line.split(",") for line in text.strip().split("\n")[1:]]
        parsed = np.array([[float(v) for v in row[1:]] for row in rows])
        np.testing.assert_array_equal(parsed, preds)

    def test_clamping(self):
        preds = np.full((1, 37), 0.5)
        preds[0, 0] = 1.0000001
        preds[0, 1] = -0.25
        row = write_submission(["x"], preds).strip().split("\n")[1].split(",")
        assert row[1] == "1.0"
        assert row[2] == "0.0"

    def test_count_mismatch(self):
        with pytest.raises(ValueError, match="ids"):
            write_submission(["a", "b"], np.zeros((1, 37)))
        with pytest.raises(ValueError, match="37"):
            write_submission(["a"], np.zeros((1, 7)))


class TestFeatureMaps:
    def setup_method(self):
        arch, head = build_preset("toy")
        self.net = build_network(arch, head, np.random.default_rng(0))
        self.image = np.random.default_rng(1).uniform(0, 1, (16, 16, 3)).astype(np.float32)

    def test_zero_weight_stem_gives_uniform_gray(self):
        self.net.set_weights(
            {
                "s0.l0.kernel": np.zeros((3, 3, 3, 16), dtype=np.float32),
                "s0.l0.bias": np.zeros(16, dtype=np.float32),
            }
        )
        grids = feature_map_export(self.net, np.ones((16, 16, 3), np.float32), ["s0.l0"])
        np.testing.assert_array_equal(grids["s0.l0"], np.full_like(grids["s0.l0"], 0.5))

    def test_grid_geometry(self):
        grids = feature_map_export(self.net, self.image, ["s0.l0"], channels=5, cols=2)
        # stem is stride 2: 16x16 input gives 8x8 maps; 5 channels in 3 rows of 2
        assert grids["s0.l0"].shape == (3 * 8, 2 * 8)

    def test_normalization_extremes(self):
        grids = feature_map_export(self.net, self.image, ["s0.l0"], channels=4, cols=4)
        grid = grids["s0.l0"]
        saw_varying = False
        for c in range(4):
            tile = grid[:, c * 8 : (c + 1) * 8]
            if np.all(tile == 0.5):  # constant channel (e.g. relu-dead) renders gray
                continue
            saw_varying = True
            assert tile.min() == pytest.approx(0.0)
            assert tile.max() == pytest.approx(1.0)
        assert saw_varying

    def test_seeded_sampling_is_deterministic(self):
        a = feature_map_export(self.net, self.image, ["s1.l0"], seed=9)
        b = feature_map_export(self.net, self.image, ["s1.l0"], seed=9)
        np.testing.assert_array_equal(a["s1.l0"], b["s1.l0"])

    def test_unknown_layer_lists_available(self):
        with pytest.raises(ValueError, match="s0.l0"):
            feature_map_export(self.net, self.image, ["nope"])

    def test_head_is_not_spatial(self):
        with pytest.raises(ValueError, match="spatial"):
            feature_map_export(self.net, self.image, ["head"])

    def test_multiple_layers(self):
        grids = feature_map_export(self.net, self.image, ["s0.l0", "s2.l0"], channels=2, cols=2)
        assert set(grids) == {"s0.l0", "s2.l0"}
