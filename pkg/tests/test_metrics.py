import json

import numpy as np
import pytest

from kpcaood import (
    DatasetBundle,
    DetectorConfig,
    FeatureMatrix,
    SeededRng,
    auroc,
    evaluate,
    fit_detector,
    fpr_at_95tpr,
    gen_synthetic,
)
from kpcaood.errors import DataError, DegenerateInputError, UsageError


def _trapezoid_auroc(ind, ood):
    """Independent oracle: trapezoidal integration of the ROC curve."""
    scores = np.concatenate([ind, ood])
    labels = np.concatenate([np.ones(len(ind)), np.zeros(len(ood))])
    thresholds = np.unique(scores)[::-1]
    tpr = [0.0]
    fpr = [0.0]
    for t in thresholds:
        tpr.append(np.mean(ind >= t))
        fpr.append(np.mean(ood >= t))
    return float(np.trapezoid(tpr, fpr))


class TestFprAt95Tpr:
    def test_hand_example(self):
        ind = np.arange(1.0, 101.0)
        ood = np.array([0.5, 5.5, 200.0])
        result = fpr_at_95tpr(ind, ood)
        assert result.threshold == 5.0
        np.testing.assert_allclose(result.fpr, 2.0 / 3.0)

    def test_perfect_separation(self):
        assert fpr_at_95tpr([10.0, 11.0, 12.0], [1.0, 2.0]).fpr == 0.0

    def test_identical_multisets(self):
        scores = np.random.default_rng(0).standard_normal(200)
        assert fpr_at_95tpr(scores, scores).fpr >= 0.95

    def test_tpr_guarantee(self):
        rng = np.random.default_rng(1)
        for n in (1, 7, 20, 60, 101, 997):
            ind = rng.standard_normal(n)
            thr = fpr_at_95tpr(ind, rng.standard_normal(50)).threshold
            assert np.mean(ind >= thr) >= 0.95

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            fpr_at_95tpr([], [1.0])


class TestAuroc:
    def test_perfect(self):
        assert auroc([2.0, 3.0], [0.0, 1.0]) == 1.0

    def test_single_tie(self):
        assert auroc([1.0], [1.0]) == 0.5

    def test_one_win_one_loss(self):
        assert auroc([3.0, 1.0], [2.0]) == 0.5

    def test_monotone_transform_invariant(self):
        rng = np.random.default_rng(2)
        ind, ood = rng.standard_normal(80), rng.standard_normal(60)
        base = auroc(ind, ood)
        assert auroc(np.exp(ind), np.exp(ood)) == base
        assert auroc(3.0 * ind + 5.0, 3.0 * ood + 5.0) == base

    def test_complement_identity(self):
        rng = np.random.default_rng(3)
        ind, ood = rng.standard_normal(50), rng.standard_normal(40)  # ties a.s. absent
        np.testing.assert_allclose(auroc(ind, ood) + auroc(ood, ind), 1.0, atol=1e-12)

    def test_matches_trapezoid_form(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            n, m = rng.integers(2, 40), rng.integers(2, 40)
            # mix continuous scores with ties
            ind = np.round(rng.standard_normal(n), 1)
            ood = np.round(rng.standard_normal(m), 1)
            assert abs(auroc(ind, ood) - _trapezoid_auroc(ind, ood)) <= 1e-12


def _knn_bundle(train, test, oods):
    return DatasetBundle(
        ind_train=FeatureMatrix(train),
        ind_test=FeatureMatrix(test),
        ood_sets={name: FeatureMatrix(v) for name, v in oods.items()},
    )


def _knn_model(bundle):
    return fit_detector(DetectorConfig(method="knn"), bundle, SeededRng(0))


class TestEvaluate:
    def test_perfectly_separated_bundle(self):
        rng = np.random.default_rng(5)
        train = np.array([1.0, 0.0, 0.0]) + 0.05 * rng.standard_normal((200, 3))
        test = np.array([1.0, 0.0, 0.0]) + 0.05 * rng.standard_normal((100, 3))
        ood = np.array([-1.0, 0.0, 0.0]) + 0.05 * rng.standard_normal((80, 3))
        bundle = _knn_bundle(train, test, {"far": ood})
        report = evaluate(_knn_model(bundle), bundle, histogram_bins=None)
        assert report.average_auroc == 1.0
        assert report.average_fpr95 == 0.0

    def test_ood_copy_of_ind_test_is_random(self):
        rng = np.random.default_rng(6)
        train = rng.standard_normal((200, 4))
        test = rng.standard_normal((150, 4))
        bundle = _knn_bundle(train, test, {"copy": test.copy()})
        report = evaluate(_knn_model(bundle), bundle, histogram_bins=None)
        assert report.per_ood["copy"]["auroc"] == 0.5  # identical multisets tie out
        assert report.per_ood["copy"]["fpr95"] >= 0.95

    def test_two_set_average_is_unweighted_mean(self):
        # bank at two unit points; "far" scores below every test score,
        # "onbank" ties the maximum and beats the 95% threshold everywhere
        train = np.array([[1.0, 0.0], [0.0, 1.0]])
        test = np.vstack([np.tile([0.9, 0.1], (20, 1)) + 1e-3 * np.arange(20)[:, None]])
        far = np.tile([-1.0, -1.0], (10, 1))
        onbank = np.tile([1.0, 0.0], (10, 1))
        bundle = _knn_bundle(train, test, {"far": far, "onbank": onbank})
        report = evaluate(_knn_model(bundle), bundle, histogram_bins=None)
        assert report.per_ood["far"]["fpr95"] == 0.0
        assert report.per_ood["onbank"]["fpr95"] == 1.0
        assert report.average_fpr95 == 0.5

    def test_histogram_shared_range(self):
        bundle = gen_synthetic("clusters", 200, 80, 8, seed=7)
        report = evaluate(_knn_model(bundle), bundle, histogram_bins=50)
        hist = report.histogram
        assert len(hist["bin_edges"]) == 51
        assert sum(hist["ind_test"]) == report.n_ind
        assert sum(hist["clusters"]) == report.per_ood["clusters"]["n_ood"]

    def test_report_json_stable_and_parseable(self):
        bundle = gen_synthetic("clusters", 200, 80, 8, seed=8)
        model = _knn_model(bundle)
        a = evaluate(model, bundle).to_json()
        b = evaluate(model, bundle).to_json()
        assert a == b
        doc = json.loads(a)
        assert set(doc["per_ood"]) == {"clusters"}
        assert 0.0 <= doc["average_fpr95"] <= 1.0
        assert 0.0 <= doc["average_auroc"] <= 1.0

    def test_missing_ind_test_rejected(self):
        bundle = gen_synthetic("clusters", 100, 50, 8, seed=9)
        broken = DatasetBundle(ind_train=bundle.ind_train, ood_sets=bundle.ood_sets)
        with pytest.raises(UsageError):
            evaluate(_knn_model(bundle), broken)

    def test_no_ood_sets_rejected(self):
        bundle = gen_synthetic("clusters", 100, 50, 8, seed=10)
        broken = DatasetBundle(ind_train=bundle.ind_train, ind_test=bundle.ind_test)
        with pytest.raises(UsageError):
            evaluate(_knn_model(bundle), broken)

    def test_scoring_error_names_dataset(self):
        rng = np.random.default_rng(11)
        train = rng.standard_normal((50, 3))
        test = rng.standard_normal((30, 3))
        bad = rng.standard_normal((10, 3))
        bad[4] = 0.0
        bundle = _knn_bundle(train, test, {"poisoned": bad})
        with pytest.raises(DegenerateInputError, match=r"\[poisoned\]"):
            evaluate(_knn_model(bundle), bundle)


class TestOracleColumn:
    def test_pca_oracle_mae_is_tiny(self):
        bundle = gen_synthetic("clusters", 150, 60, 8, seed=12)
        model = fit_detector(DetectorConfig(method="pca"), bundle, SeededRng(0))
        report = evaluate(model, bundle, histogram_bins=None, oracle=True)
        assert report.oracle_mae["ind_test"] <= 1e-6
        assert report.oracle_mae["clusters"] <= 1e-6
        assert report.oracle_mae["average"] <= 1e-6

    def test_full_landmark_nys_gap_shrinks_with_budget(self):
        # off-sample probes keep a kernel-interpolation residual, so the
        # column measures an approximation gap, not an identity; the gap
        # must shrink as the landmark budget grows
        bundle = gen_synthetic("swiss-roll", 300, 100, 16, seed=13)
        gaps = []
        for n_landmarks in (30, 300):
            cfg = DetectorConfig(method="kpca-nys", gamma=1.0, n_landmarks=n_landmarks,
                                 sampling="uniform")
            model = fit_detector(cfg, bundle, SeededRng(0))
            report = evaluate(model, bundle, histogram_bins=None, oracle=True)
            gaps.append(report.oracle_mae["average"])
        assert gaps[1] < gaps[0]
        assert gaps[1] <= 0.05

    def test_rff_oracle_mae_moderate(self):
        bundle = gen_synthetic("clusters", 150, 60, 8, seed=14)
        cfg = DetectorConfig(method="kpca-rff", gamma=1.0, n_rff=4096)
        model = fit_detector(cfg, bundle, SeededRng(0))
        report = evaluate(model, bundle, histogram_bins=None, oracle=True)
        assert report.oracle_mae["average"] <= 0.1

    def test_oracle_needs_train_split(self):
        bundle = gen_synthetic("clusters", 100, 40, 8, seed=15)
        model = fit_detector(DetectorConfig(method="pca"), bundle, SeededRng(0))
        broken = DatasetBundle(ind_test=bundle.ind_test, ood_sets=bundle.ood_sets)
        with pytest.raises(UsageError):
            evaluate(model, broken, oracle=True)

    def test_oracle_undefined_for_knn(self):
        bundle = gen_synthetic("clusters", 100, 40, 8, seed=16)
        with pytest.raises(UsageError):
            evaluate(_knn_model(bundle), bundle, oracle=True)
