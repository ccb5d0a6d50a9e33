"""Detection metrics (FPR at 95% TPR, AUROC) and bundle evaluation reports.

Threshold convention: the score threshold is the ceil(0.05 * n_ind)-th
smallest in-distribution score and acceptance uses >=, which guarantees a
true-positive rate of at least 95% exactly. AUROC uses the rank-statistic
form with the ties-count-half convention.
"""

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .dataio import DatasetBundle, FeatureMatrix
from .errors import DataError, KpcaoodError, UsageError
from .kernels import KernelSpec, cos_map
from .oracle import fit_exact, exact_error_standard_form

HISTOGRAM_BINS = 50


class FprResult(NamedTuple):
    fpr: float
    threshold: float


def _validated(scores, name) -> np.ndarray:
    arr = np.asarray(scores, dtype=np.float64).ravel()
    if arr.size == 0:
        raise DataError(f"{name} score vector is empty")
    return arr


def _threshold_at_95tpr(ind: np.ndarray) -> float:
    k = (ind.size + 19) // 20  # ceil(0.05 n) in exact integer arithmetic
    return float(np.partition(ind, k - 1)[k - 1])


def fpr_at_95tpr(ind_scores, ood_scores) -> FprResult:
    """False-positive rate of OoD at the 95%-TPR score threshold."""
    ind = _validated(ind_scores, "in-distribution")
    ood = _validated(ood_scores, "out-of-distribution")
    threshold = _threshold_at_95tpr(ind)
    return FprResult(float(np.mean(ood >= threshold)), threshold)


def auroc(ind_scores, ood_scores) -> float:
    """P(random InD score > random OoD score) with ties counted half."""
    ind = _validated(ind_scores, "in-distribution")
    ood = _validated(ood_scores, "out-of-distribution")
    ood_sorted = np.sort(ood)
    below = np.searchsorted(ood_sorted, ind, side="left")
    below_or_equal = np.searchsorted(ood_sorted, ind, side="right")
    wins = np.sum(below) + 0.5 * np.sum(below_or_equal - below)
    return float(wins / (ind.size * ood.size))


@dataclass
class EvalReport:
    """Per-OoD-set metrics plus unweighted averages and score histograms."""

    method: str
    n_ind: int
    threshold: float
    per_ood: dict
    average_fpr95: float
    average_auroc: float
    histogram: dict | None = None
    oracle_mae: dict | None = None
    scores: dict | None = field(default=None, repr=False)

    def to_json(self) -> str:
        doc = {
            "method": self.method,
            "n_ind": self.n_ind,
            "threshold": self.threshold,
            "per_ood": {
                name: {k: entry[k] for k in ("fpr95", "auroc", "n_ood")}
                for name, entry in self.per_ood.items()
            },
            "average_fpr95": self.average_fpr95,
            "average_auroc": self.average_auroc,
        }
        if self.oracle_mae is not None:
            doc["oracle_mae"] = self.oracle_mae
        if self.histogram is not None:
            doc["histogram"] = self.histogram
        return json.dumps(doc, indent=2)


def _oracle_errors(model, bundle: DatasetBundle, datasets: dict) -> dict:
    """Mean |approx - exact| reconstruction error per dataset."""
    from . import detectors  # local import to avoid a module cycle

    if model.method not in ("pca", "kpca-rff", "kpca-nys"):
        raise UsageError(f"oracle comparison is undefined for method {model.method!r}")
    if bundle.ind_train is None:
        raise UsageError("oracle comparison needs the training features in the bundle")
    train = bundle.ind_train.data
    if model.clip_thresholds is not None:
        train = detectors.apply_clip(train, model.clip_thresholds)
    if model.method == "pca":
        spec = KernelSpec(base="linear")
        oracle_train = train
    else:
        spec = model.feature_map.spec
        oracle_train = cos_map(train)
    n = oracle_train.shape[0]
    q = min(model.subspace.q, n - 1)
    exact = fit_exact(FeatureMatrix(oracle_train), spec, p=n - q, centered=True)

    out = {}
    for name, fm in datasets.items():
        data = fm.data
        if model.clip_thresholds is not None:
            data = detectors.apply_clip(data, model.clip_thresholds)
        approx = -detectors.score(model, fm)
        exact_err = exact_error_standard_form(
            exact, cos_map(data) if model.method != "pca" else data
        )
        out[name] = float(np.mean(np.abs(approx - exact_err)))
    out["average"] = float(np.mean([v for k, v in out.items() if k != "average"]))
    return out


def evaluate(model, bundle: DatasetBundle, histogram_bins: int | None = HISTOGRAM_BINS,
             oracle: bool = False, keep_scores: bool = False) -> EvalReport:
    """Score the bundle's test split against every OoD set.

    Scoring errors are re-raised with the offending dataset named. With
    ``oracle=True`` (feature-subspace methods only, small bundles) the
    report gains mean absolute approximation errors against the exact
    kernel-matrix reference.
    """
    from . import detectors  # local import to avoid a module cycle

    if bundle.ind_test is None:
        raise UsageError("bundle has no in-distribution test split")
    if not bundle.ood_sets:
        raise UsageError("bundle has no OoD sets")

    def run(name, features, logits):
        try:
            return detectors.score(model, features, logits)
        except KpcaoodError as exc:
            raise type(exc)(f"[{name}] {exc}") from exc

    needs_logits = model.method in detectors.LOGIT_METHODS
    if needs_logits and bundle.ind_test_logits is None:
        raise UsageError(f"{model.method} evaluation requires test logits")
    ind_scores = run("ind_test", bundle.ind_test, bundle.ind_test_logits)

    all_scores = {"ind_test": ind_scores}
    per_ood = {}
    for name, fm in bundle.ood_sets.items():
        logits = bundle.ood_logits.get(name)
        if needs_logits and logits is None:
            raise UsageError(f"{model.method} evaluation requires logits for OoD set {name!r}")
        all_scores[name] = run(name, fm, logits)

    threshold = _threshold_at_95tpr(ind_scores)
    for name in bundle.ood_sets:
        scores = all_scores[name]
        per_ood[name] = {
            "fpr95": fpr_at_95tpr(ind_scores, scores).fpr,
            "auroc": auroc(ind_scores, scores),
            "n_ood": int(scores.size),
        }

    histogram = None
    if histogram_bins:
        lo = min(float(np.min(s)) for s in all_scores.values())
        hi = max(float(np.max(s)) for s in all_scores.values())
        if hi == lo:
            hi = lo + 1.0
        edges = np.linspace(lo, hi, histogram_bins + 1)
        histogram = {"bin_edges": [float(e) for e in edges]}
        for name, scores in all_scores.items():
            counts, _ = np.histogram(scores, bins=edges)
            histogram[name] = [int(c) for c in counts]

    oracle_mae = None
    if oracle:
        datasets = {"ind_test": bundle.ind_test, **bundle.ood_sets}
        oracle_mae = _oracle_errors(model, bundle, datasets)

    return EvalReport(
        method=model.method,
        n_ind=int(ind_scores.size),
        threshold=threshold,
        per_ood=per_ood,
        average_fpr95=float(np.mean([per_ood[n]["fpr95"] for n in per_ood])),
        average_auroc=float(np.mean([per_ood[n]["auroc"] for n in per_ood])),
        histogram=histogram,
        oracle_mae=oracle_mae,
        scores=all_scores if keep_scores else None,
    )
