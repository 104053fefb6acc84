import math

import numpy as np
import pytest

from chaoskit import classical, data, dynsys, evaluation, models
from chaoskit.errors import InvalidInput

FAST_LABELS = {"label_n_iter": 2000, "label_restarts": 3}


class TestMCC:
    def test_perfect_classifier(self):
        t = np.array([1, 1, -1, -1, 1])
        assert evaluation.mcc(t, t) == 1.0

    def test_perfectly_inverted(self):
        t = np.array([1, 1, -1, -1, 1])
        assert evaluation.mcc(t, -t) == -1.0

    def test_formula_value(self):
        truth = np.r_[np.ones(40), np.ones(10), -np.ones(30), -np.ones(20)]
        pred = np.r_[np.ones(40), -np.ones(10), -np.ones(30), np.ones(20)]
        # TP=40 TN=30 FP=20 FN=10 -> 1000 / sqrt(6e6)
        expected = 1000.0 / math.sqrt(6_000_000)
        assert evaluation.mcc(truth, pred) == pytest.approx(expected, abs=1e-12)

    def test_one_class_prediction_scores_zero(self):
        t = np.array([1, -1, 1, -1])
        assert evaluation.mcc(t, np.ones(4)) == 0.0

    def test_symmetric_under_joint_inversion(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            t = rng.choice([-1, 1], size=12)
            p = rng.choice([-1, 1], size=12)
            assert evaluation.mcc(t, p) == pytest.approx(evaluation.mcc(-t, -p))

    def test_equals_pearson_on_sign_vectors(self):
        rng = np.random.default_rng(1)
        checked = 0
        for _ in range(1000):
            n = int(rng.integers(2, 21))
            t = rng.choice([-1.0, 1.0], size=n)
            p = rng.choice([-1.0, 1.0], size=n)
            if t.std() == 0 or p.std() == 0:
                assert evaluation.mcc(t, p) == 0.0
                continue
            checked += 1
            pearson = np.corrcoef(t, p)[0, 1]
            assert evaluation.mcc(t, p) == pytest.approx(pearson, abs=1e-12)
        assert checked > 500

    def test_empty_rejected(self):
        with pytest.raises(InvalidInput):
            evaluation.mcc(np.array([]), np.array([]))


class _FixedOracle:
    """Feeds back the dataset's own labels (test double)."""

    lam_scale = True
    name = "oracle"

    def __init__(self, ds):
        self.lookup = {id(item): lam for item, lam in zip(ds.items, ds.labels)}

    def predict(self, item, seed=0):
        lam = self.lookup[id(item)]
        return lam, lam > 0.0


class _ConstantStable:
    lam_scale = True
    name = "always-stable"

    def predict(self, item, seed=0):
        return -1.0, False


FAST_ZO = classical.ZeroOneParams(n_c=20)


@pytest.fixture(scope="module")
def zmap_suite():
    return data.build_dataset("zmap_set", {"scale": 40, "length": 2000,
                                           **FAST_LABELS}, seed=21)


class TestEvaluateDataset:
    def test_perfect_oracle_scores_one(self, zmap_suite):
        cell, _ = evaluation.evaluate_dataset(_FixedOracle(zmap_suite), zmap_suite)
        assert cell.mcc == 1.0
        assert cell.rmse == pytest.approx(0.0, abs=1e-12)

    def test_constant_stable_scores_zero(self, zmap_suite):
        cell, _ = evaluation.evaluate_dataset(_ConstantStable(), zmap_suite)
        assert cell.mcc == 0.0

    def test_counts_sum_to_dataset_size(self, zmap_suite):
        est = evaluation.make_estimator("rosenstein")
        cell, _ = evaluation.evaluate_dataset(est, zmap_suite)
        assert cell.tp + cell.tn + cell.fp + cell.fn == len(zmap_suite.items)

    def test_rosenstein_strong_on_deterministic_quadratic(self, zmap_suite):
        est = evaluation.make_estimator("rosenstein")
        cell, _ = evaluation.evaluate_dataset(est, zmap_suite)
        assert cell.mcc >= 0.85

    def test_thread_count_does_not_change_results(self, zmap_suite):
        est = evaluation.make_estimator("zeroone", zero_one_params=FAST_ZO)
        a, sa = evaluation.evaluate_dataset(est, zmap_suite, threads=1)
        b, sb = evaluation.evaluate_dataset(est, zmap_suite, threads=4)
        assert a.as_dict() == b.as_dict()
        assert np.array_equal(sa, sb, equal_nan=True)

    def test_model_estimator_batches(self, zmap_suite):
        model = models.SeqRegressor.create(hidden_size=8, seed=0)
        est = evaluation.make_estimator("nn", model=model)
        cell, scores = evaluation.evaluate_dataset(est, zmap_suite)
        assert np.all(np.isfinite(scores))
        lam, _ = models.seq_forward(model, zmap_suite.items[0])
        assert scores[0] == pytest.approx(lam, abs=1e-12)


class TestRobustnessCurve:
    def test_every_item_counted_once_per_cell(self):
        suites = {level: data.build_dataset(
            "test_suite", {"scale": 250, "length": 120, **FAST_LABELS},
            seed=22, noise_level=level) for level in (0.0, 1e-3)}
        est = _ConstantStable()
        report = evaluation.robustness_curve(est, suites)
        assert len(report.cells) == 2
        for cell in report.cells:
            assert cell.tp + cell.tn + cell.fp + cell.fn == cell.n_items
        noises = [c.noise for c in report.cells]
        assert noises == sorted(noises)

    def test_measurement_curve_runs(self, zmap_suite):
        est = evaluation.make_estimator("rosenstein")
        report = evaluation.measurement_curve(est, zmap_suite, [0.0, 0.01], seed=3)
        assert [c.noise for c in report.cells] == [0.0, 0.01]
        assert report.cells[0].mcc >= report.cells[1].mcc - 0.3

    def test_length_grid(self, zmap_suite):
        est = evaluation.make_estimator("zeroone", zero_one_params=FAST_ZO)
        report = evaluation.robustness_curve(est, {0.0: zmap_suite},
                                             lengths=[500, 2000])
        assert [c.length for c in report.cells] == [500, 2000]

    def test_report_round_trip(self, tmp_path, zmap_suite):
        est = evaluation.make_estimator("rosenstein")
        report = evaluation.robustness_curve(est, {0.0: zmap_suite})
        path = tmp_path / "report.json"
        report.save(path)
        back = evaluation.EvalReport.load(path)
        assert [c.as_dict() for c in back.cells] == [c.as_dict() for c in report.cells]


class TestSweepMap:
    def test_minimal_grid_shape(self):
        est = _ConstantStable()
        grid = evaluation.sweep_map(est, {"nk": 2, "ntau": 2, "length": 100,
                                          "label_n_iter": 1500,
                                          "label_restarts": 2}, seed=5)
        assert grid.lam_true.shape == (2, 2)
        assert grid.lam_hat.shape == (2, 2)

    def test_unkicked_column_is_marginal(self):
        est = _ConstantStable()
        grid = evaluation.sweep_map(est, {"k_range": [0.0, 6.0], "nk": 3,
                                          "ntau": 3, "length": 80,
                                          "label_n_iter": 3000,
                                          "label_restarts": 2}, seed=6)
        assert np.all(np.abs(grid.lam_true[0]) < 1e-3)  # k = 0 column

    def test_sign_map_has_both_phases(self):
        est = evaluation.make_estimator("tangent")
        grid = evaluation.sweep_map(est, {"k_range": [2.0, 14.0],
                                          "tau0_range": [6.0, 20.0],
                                          "nk": 6, "ntau": 6, "length": 80,
                                          "label_n_iter": 3000,
                                          "label_restarts": 2}, seed=7)
        ok = np.isfinite(grid.lam_true)
        assert (grid.lam_true[ok] > 0.02).any()
        assert (grid.lam_true[ok] < -0.02).any()
        # the tangent oracle reproduces ground-truth signs away from the
        # marginal band, where finite-time sign flips are seed noise
        strong = ok & np.isfinite(grid.lam_hat) & (np.abs(grid.lam_true) > 0.05)
        agree = np.mean((grid.lam_true[strong] > 0) == (grid.lam_hat[strong] > 0))
        assert agree >= 0.9

    def test_grid_round_trip(self, tmp_path):
        est = _ConstantStable()
        grid = evaluation.sweep_map(est, {"nk": 2, "ntau": 3, "length": 80,
                                          "label_n_iter": 1000,
                                          "label_restarts": 2}, seed=8)
        evaluation.save_grid(grid, tmp_path / "g")
        back = evaluation.load_grid(tmp_path / "g.grid")
        assert np.array_equal(back.lam_true, grid.lam_true, equal_nan=True)
        assert np.array_equal(back.lam_hat, grid.lam_hat, equal_nan=True)
        tsv = (tmp_path / "g.tsv").read_text()
        assert tsv.startswith("k\ttau0\tlam_true\tlam_hat")
        assert len(tsv.strip().splitlines()) == 1 + 6
