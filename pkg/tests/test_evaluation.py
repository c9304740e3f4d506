import math

import numpy as np
import pytest

from dltsched import datagen
from dltsched.datagen import DatasetRecord, extract_features
from dltsched.errors import InvalidInputError
from dltsched.evaluation import (
    compute_metrics,
    emit_plot_data,
    feature_importance,
    residual_analysis,
    stratify,
)
from dltsched.mlp import MlpModel, TrainReport, init_params
from dltsched.solver import SltnConfig

IDENTITY_NORM = datagen.NormalizationStats(
    feature_means=(0.0,) * 16, feature_stds=(1.0,) * 16, target_mean=0.0, target_std=1.0
)


def record_for(n=3, load=10.0, speeds=None, bws=None, t_star=100.0):
    speeds = speeds or (4.0,) * n
    bws = bws or (40.0,) * n
    cfg = SltnConfig(n=n, root_speed=5.0, child_speeds=tuple(speeds), link_bandwidths=tuple(bws), load_gb=load)
    return DatasetRecord(cfg, extract_features(cfg), t_star=t_star)


class TestComputeMetrics:
    def test_perfect_predictions(self):
        m = compute_metrics([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert (m.r2, m.mae, m.rmse, m.mape) == (1.0, 0.0, 0.0, 0.0)
        assert m.count == 3

    def test_mean_predictor_scores_zero_r2(self):
        targets = [50.0, 100.0, 150.0]
        m = compute_metrics([100.0, 100.0, 100.0], targets)
        assert m.r2 == pytest.approx(0.0, abs=1e-12)

    def test_hand_computed(self):
        m = compute_metrics([110.0, 180.0], [100.0, 200.0])
        assert m.mae == 15.0
        assert m.rmse == pytest.approx(math.sqrt(250.0))
        assert m.mape == pytest.approx(10.0)

    def test_zero_variance_targets_rejected(self):
        with pytest.raises(InvalidInputError):
            compute_metrics([1.0, 2.0], [5.0, 5.0])

    def test_identities_on_random_data(self):
        rng = np.random.default_rng(0)
        targets = rng.uniform(10.0, 1000.0, size=200)
        preds = targets + rng.normal(0.0, 25.0, size=200)
        m = compute_metrics(preds, targets)
        assert m.mae <= m.rmse
        assert m.rmse**2 == pytest.approx(np.mean((preds - targets) ** 2))
        assert m.r2 <= 1.0


class TestStratify:
    def test_by_n_buckets_cover_range(self):
        records = [record_for(n=n, t_star=50.0 + n) for n in range(3, 21) for _ in range(4)]
        preds = np.array([rec.t_star * 1.1 for rec in records])
        report = stratify(records, preds, "by-n")
        assert len(report.buckets) == 18
        assert [b.label for b in report.buckets] == [f"n={n}" for n in range(3, 21)]
        assert all(b.count == 4 for b in report.buckets)
        assert sum(b.count for b in report.buckets) == report.total_count

    def test_gap_n_reported_empty(self):
        records = [record_for(n=3), record_for(n=3), record_for(n=5)]
        report = stratify(records, [100.0, 90.0, 110.0], "by-n")
        labels = {b.label: b for b in report.buckets}
        assert labels["n=4"].count == 0
        assert labels["n=4"].metrics is None

    def test_load_bins(self):
        loads = [2.0, 7.0, 15.0, 30.0, 70.0, 100.0]
        records = [record_for(load=l, t_star=l * 10) for l in loads]
        report = stratify(records, [l * 10 for l in loads], "by-load")
        assert [b.label for b in report.buckets] == ["[1,5)", "[5,10)", "[10,20)", "[20,40)", "[40,100]"]
        assert [b.count for b in report.buckets] == [1, 1, 1, 1, 2]

    def test_heterogeneity_bins(self):
        spreads = [(4.0, 4.0), (4.0, 10.0), (2.0, 14.0), (1.0, 14.0)]
        records = [record_for(n=2, speeds=s, t_star=100.0) for s in spreads]
        report = stratify(records, [100.0] * 4, "by-heterogeneity")
        assert [b.label for b in report.buckets] == ["[1,2)", "[2,5)", "[5,10)", "[10,15]"]
        assert [b.count for b in report.buckets] == [1, 1, 1, 1]

    def test_single_bucket_matches_global_metrics(self):
        rng = np.random.default_rng(1)
        records = [record_for(n=int(n), t_star=float(t)) for n, t in zip(rng.integers(3, 21, 40), rng.uniform(50, 500, 40))]
        preds = np.array([rec.t_star for rec in records]) * rng.uniform(0.9, 1.1, 40)
        report = stratify(records, preds, "all")
        whole = compute_metrics(preds, [rec.t_star for rec in records])
        assert len(report.buckets) == 1
        assert report.buckets[0].metrics == whole

    def test_bucket_maes_recombine_to_global(self):
        rng = np.random.default_rng(2)
        records = [record_for(n=int(n), t_star=float(t)) for n, t in zip(rng.integers(3, 21, 60), rng.uniform(50, 500, 60))]
        targets = np.array([rec.t_star for rec in records])
        preds = targets + rng.normal(0, 20, 60)
        report = stratify(records, preds, "by-n")
        weighted = sum(b.count * b.metrics.mae for b in report.buckets if b.count) / report.total_count
        assert weighted == pytest.approx(compute_metrics(preds, targets).mae)

    def test_unknown_scheme_rejected(self):
        with pytest.raises(InvalidInputError):
            stratify([record_for()], [1.0], "by-moon-phase")


class TestResidualAnalysis:
    def test_perfect_predictions(self):
        targets = [100.0, 200.0, 300.0]
        r = residual_analysis(targets, targets)
        assert r.mean_error == 0.0
        assert r.share_within_50s == 1.0
        assert r.share_within_100s == 1.0
        assert r.share_pct_within_10 == 1.0

    def test_window_shares(self):
        targets = np.array([1000.0, 1000.0])
        preds = targets + np.array([-60.0, 60.0])
        r = residual_analysis(preds, targets)
        assert r.share_within_50s == 0.0
        assert r.share_within_100s == 1.0

    def test_share_monotonicity(self):
        rng = np.random.default_rng(3)
        targets = rng.uniform(100, 2000, 500)
        preds = targets + rng.normal(0, 80, 500)
        r = residual_analysis(preds, targets)
        assert r.share_within_50s <= r.share_within_100s

    def test_decile_dispersion_counts(self):
        rng = np.random.default_rng(4)
        targets = rng.uniform(100, 2000, 95)
        preds = targets + rng.normal(0, 10, 95)
        r = residual_analysis(preds, targets)
        assert sum(d.count for d in r.decile_dispersion) == 95
        los = [d.prediction_lo for d in r.decile_dispersion]
        assert los == sorted(los)


class TestFeatureImportance:
    def test_zero_model_has_zero_importance(self):
        params = init_params(0)
        for w in params.weights:
            w[:] = 0.0
        model = MlpModel(params=params, norm=IDENTITY_NORM)
        ranked = feature_importance(model, np.random.default_rng(5).normal(size=(20, 16)))
        assert all(v == 0.0 for _, v in ranked)

    def test_duplicated_input_columns_rank_equally(self):
        params = init_params(6)
        params.weights[0][:, 1] = params.weights[0][:, 0]
        model = MlpModel(params=params, norm=IDENTITY_NORM)
        ranked = dict(feature_importance(model, np.random.default_rng(6).normal(size=(50, 16))))
        assert ranked["n"] == pytest.approx(ranked["load_gb"], rel=1e-12)

    def test_matches_finite_difference_sensitivities(self):
        from dltsched.mlp import forward

        params = init_params(9)
        model = MlpModel(params=params, norm=IDENTITY_NORM)
        x = np.random.default_rng(7).normal(size=(10, 16))
        ranked = dict(feature_importance(model, x))
        eps = 1e-6
        for j, name in enumerate(datagen.FEATURE_NAMES):
            sens = []
            for row in x:
                up, down = row.copy(), row.copy()
                up[j] += eps
                down[j] -= eps
                sens.append((forward(params, up)[0][0] - forward(params, down)[0][0]) / (2 * eps))
            assert abs(np.mean(np.abs(sens)) - ranked[name]) <= 1e-3

    def test_ranked_descending(self):
        model = MlpModel(params=init_params(10), norm=IDENTITY_NORM)
        ranked = feature_importance(model, np.random.default_rng(8).normal(size=(30, 16)))
        values = [v for _, v in ranked]
        assert values == sorted(values, reverse=True)


class TestEmitPlotData:
    @staticmethod
    def sample_inputs():
        rng = np.random.default_rng(9)
        records = [
            record_for(n=int(n), load=float(l), t_star=float(t))
            for n, l, t in zip(rng.integers(3, 21, 80), rng.uniform(1, 100, 80), rng.uniform(50, 2000, 80))
        ]
        targets = np.array([rec.t_star for rec in records])
        preds = targets + rng.normal(0, 30, 80)
        report = TrainReport(
            epochs_run=5,
            train_losses=[0.5, 0.3, 0.2, 0.15, 0.12],
            val_losses=[0.6, 0.35, 0.25, 0.2, 0.21],
            best_epoch=4,
            best_val_loss=0.2,
            wall_seconds=1.0,
            stopped_early=True,
        )
        return records, preds, targets, report

    def test_writes_all_tables(self, tmp_path):
        records, preds, targets, report = self.sample_inputs()
        files = emit_plot_data(
            tmp_path,
            train_report=report,
            predictions=preds,
            targets=targets,
            by_n=stratify(records, preds, "by-n"),
            by_load=stratify(records, preds, "by-load"),
            by_heterog=stratify(records, preds, "by-heterogeneity"),
            residual=residual_analysis(preds, targets),
        )
        names = {f.name for f in files}
        assert names == {
            "loss_curves.csv",
            "pred_vs_actual.csv",
            "error_hist.csv",
            "pct_error_hist.csv",
            "residual_vs_predicted.csv",
            "per_n_errors.csv",
            "load_bin_errors.csv",
            "heterog_bin_errors.csv",
        }

    def test_loss_curve_rows_match_epochs(self, tmp_path):
        _, _, _, report = self.sample_inputs()
        (path,) = emit_plot_data(tmp_path, train_report=report)
        lines = path.read_text().splitlines()
        assert len(lines) == 1 + report.epochs_run

    def test_histogram_counts_sum_to_samples(self, tmp_path):
        records, preds, targets, _ = self.sample_inputs()
        emit_plot_data(tmp_path, predictions=preds, targets=targets)
        for name in ("error_hist.csv", "pct_error_hist.csv"):
            rows = (tmp_path / name).read_text().splitlines()[1:]
            assert sum(int(r.split(",")[2]) for r in rows) == len(targets)

    def test_rerun_is_byte_identical(self, tmp_path):
        records, preds, targets, report = self.sample_inputs()
        kwargs = dict(
            train_report=report,
            predictions=preds,
            targets=targets,
            by_n=stratify(records, preds, "by-n"),
            residual=residual_analysis(preds, targets),
        )
        d1, d2 = tmp_path / "one", tmp_path / "two"
        emit_plot_data(d1, **kwargs)
        emit_plot_data(d2, **kwargs)
        for f in sorted(d1.iterdir()):
            assert f.read_bytes() == (d2 / f.name).read_bytes()
