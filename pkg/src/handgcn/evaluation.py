"""Metrics, stratified k-fold splitting, and the cross-validation driver.

Conventions, fixed and documented here:
  - macro precision/recall/F1 average over all K classes; a class whose
    denominator is zero (never predicted, or absent from the data) simply
    contributes 0 to the mean;
  - one-vs-rest AUC uses midranks, i.e. tied score pairs earn half credit,
    which matches the pairwise-probability definition exactly;
  - classes without both a positive and a negative example are skipped from
    the AUC averages with a DegenerateClassWarning;
  - classes with fewer samples than folds are withheld from every validation
    fold (they appear in all training splits) with a StratificationWarning.
"""

from __future__ import annotations

import csv
import json
import os
import time
import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import LabelOutOfRange, TooFewSamples
from .gcn_net import ModelConfig, ModelParams, model_forward
from .hand_graph import PoseGraph
from .numerics import RngStream, derive_seed
from .training import Checkpoint, TrainConfig, fit


class DegenerateClassWarning(UserWarning):
    """A class lacked positives or negatives and was skipped from the AUC mean."""


class StratificationWarning(UserWarning):
    """A class had fewer samples than folds and never appears in validation."""


@dataclass
class ConfusionMatrix:
    """K x K integer counts indexed [true][predicted]."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    def total(self) -> int:
        return int(self.counts.sum())

    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.counts.sum())


def confusion_matrix(predictions: Sequence[int], labels: Sequence[int], k: int) -> ConfusionMatrix:
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape:
        raise ValueError(f"length mismatch: {predictions.shape} vs {labels.shape}")
    if len(labels) and (labels.min() < 0 or labels.max() >= k or predictions.min() < 0 or predictions.max() >= k):
        raise LabelOutOfRange(f"entries must lie in [0, {k})")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (labels, predictions), 1)
    return ConfusionMatrix(counts)


@dataclass
class ClassificationMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float


def classification_metrics(cm: ConfusionMatrix) -> ClassificationMetrics:
    """Accuracy plus macro-averaged precision, recall, and F1."""
    counts = cm.counts.astype(np.float64)
    total = counts.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    tp = np.diag(counts)
    predicted = counts.sum(axis=0)
    actual = counts.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(actual > 0, tp / actual, 0.0)
        pr = precision + recall
        f1 = np.where(pr > 0, 2.0 * precision * recall / np.where(pr > 0, pr, 1.0), 0.0)
    return ClassificationMetrics(
        accuracy=float(tp.sum() / total),
        precision=float(precision.mean()),
        recall=float(recall.mean()),
        f1=float(f1.mean()),
    )


def _binary_auc(scores: np.ndarray, positive: np.ndarray) -> float:
    """Rank-based AUC with midranks, so ties count half.

    Equivalent to the exhaustive positive/negative pair comparison: both
    numerators are exact dyadic sums, so the results agree bit for bit.
    """
    n = len(scores)
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(n, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        # 1-based midrank shared across the tie group
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    n_pos = int(positive.sum())
    n_neg = n - n_pos
    rank_sum = float(ranks[positive].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def roc_auc_ovr(scores: np.ndarray, labels: Sequence[int]) -> tuple[float, float]:
    """One-vs-rest macro and support-weighted AUC over the class columns.

    Classes with no positive or no negative examples are excluded from both
    averages and reported through a DegenerateClassWarning.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.ndim != 2 or scores.shape[0] != len(labels):
        raise ValueError(f"scores {scores.shape} do not match {len(labels)} labels")
    k = scores.shape[1]
    aucs = []
    supports = []
    skipped = []
    for cls in range(k):
        positive = labels == cls
        n_pos = int(positive.sum())
        if n_pos == 0 or n_pos == len(labels):
            skipped.append(cls)
            continue
        aucs.append(_binary_auc(scores[:, cls], positive))
        supports.append(n_pos)
    if skipped:
        warnings.warn(
            f"classes without both positives and negatives skipped from AUC: {skipped}",
            DegenerateClassWarning,
        )
    if not aucs:
        raise ValueError("no class had both positive and negative examples")
    aucs_arr = np.array(aucs)
    supports_arr = np.array(supports, dtype=np.float64)
    macro = float(aucs_arr.mean())
    weighted = float((aucs_arr * supports_arr).sum() / supports_arr.sum())
    return macro, weighted


def stratified_kfold(labels: Sequence[int], k: int, seed: int) -> list[np.ndarray]:
    """k disjoint validation folds with per-class sizes differing by <= 1.

    Within each class the sample order is shuffled by a stream derived from
    ``seed`` and dealt round-robin.  Classes with fewer than k samples are
    withheld from every fold (so they land in all k training splits) and
    announced with a StratificationWarning; for all other inputs the folds
    partition the full index set.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if len(labels) < k:
        raise TooFewSamples(f"{len(labels)} samples cannot fill {k} folds")
    rng = RngStream(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    withheld = []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if len(idx) < k:
            withheld.append(int(cls))
            continue
        idx = idx[rng.derive(int(cls)).permutation(len(idx))]
        for pos, sample in enumerate(idx):
            folds[pos % k].append(int(sample))
    if withheld:
        warnings.warn(
            f"classes with fewer than {k} samples stay in every training split: {withheld}",
            StratificationWarning,
        )
    return [np.array(sorted(f), dtype=np.intp) for f in folds]


@dataclass
class MetricsReport:
    """One row of the per-fold results table."""

    accuracy: float
    precision: float
    recall: float
    f1: float
    macro_auc: float
    weighted_auc: float
    split: str
    fold: int


@dataclass
class FoldResult:
    fold: int
    train_report: MetricsReport | None
    test_report: MetricsReport | None
    epochs: int
    mean_epoch_seconds: float
    checkpoint: Checkpoint | None = None
    error: str | None = None


def evaluate_split(
    params: ModelParams,
    model_cfg: ModelConfig,
    graphs: Sequence[PoseGraph],
    split: str,
    fold: int,
) -> tuple[MetricsReport, ConfusionMatrix]:
    """Inference-mode metrics of a trained model on one split."""
    logp, _ = model_forward(list(graphs), params, model_cfg, training=False)
    labels = np.array([g.label for g in graphs], dtype=np.int64)
    predictions = logp.argmax(axis=1)
    cm = confusion_matrix(predictions, labels, model_cfg.num_classes)
    cls = classification_metrics(cm)
    macro_auc, weighted_auc = roc_auc_ovr(np.exp(logp), labels)
    report = MetricsReport(
        accuracy=cls.accuracy, precision=cls.precision, recall=cls.recall, f1=cls.f1,
        macro_auc=macro_auc, weighted_auc=weighted_auc, split=split, fold=fold,
    )
    return report, cm


INNER_VAL_FOLDS = 5  # carve 1/5 of each training portion for early stopping


def cross_validate(
    dataset: Sequence[PoseGraph],
    cfg: TrainConfig,
    k: int = 5,
    d_desired: float = 1.0,
    log=None,
) -> list[FoldResult]:
    """k-fold cross-validation: train per fold, report metrics on both splits.

    Each fold trains on the other k-1 folds, with a seeded stratified 20%
    of that training portion held back for early stopping; metrics are then
    computed in inference mode on the full training portion and on the
    untouched held-out fold.  A failing fold is recorded and the remaining
    folds still run.
    """
    dataset = list(dataset)
    if not dataset:
        raise TooFewSamples("empty dataset")
    labels = [g.label for g in dataset]
    folds = stratified_kfold(labels, k, cfg.seed)
    all_idx = np.arange(len(dataset))
    results: list[FoldResult] = []
    for fold_no, held_out in enumerate(folds):
        train_idx = np.setdiff1d(all_idx, held_out)
        train_graphs = [dataset[i] for i in train_idx]
        fold_cfg = replace(cfg, seed=derive_seed(cfg.seed, 100 + fold_no))
        try:
            inner_folds = stratified_kfold(
                [g.label for g in train_graphs], INNER_VAL_FOLDS, fold_cfg.seed
            )
            inner_val = set(inner_folds[0].tolist())
            fit_train = [g for i, g in enumerate(train_graphs) if i not in inner_val]
            fit_val = [train_graphs[i] for i in sorted(inner_val)]
            started = time.perf_counter()
            ckpt = fit(fit_train, fit_val, fold_cfg, d_desired=d_desired, log=log)
            elapsed = time.perf_counter() - started
            epochs = len(ckpt.history)
            train_report, _ = evaluate_split(
                ckpt.params, ckpt.model_config, train_graphs, "training", fold_no
            )
            test_report, _ = evaluate_split(
                ckpt.params, ckpt.model_config, [dataset[i] for i in held_out], "testing", fold_no
            )
            results.append(FoldResult(
                fold=fold_no, train_report=train_report, test_report=test_report,
                epochs=epochs, mean_epoch_seconds=elapsed / max(epochs, 1),
                checkpoint=ckpt,
            ))
            if log is not None:
                log(
                    f"fold {fold_no}: test acc {test_report.accuracy:.4f} "
                    f"({epochs} epochs)"
                )
        except Exception as exc:  # noqa: BLE001 - fold isolation by contract
            results.append(FoldResult(
                fold=fold_no, train_report=None, test_report=None,
                epochs=0, mean_epoch_seconds=0.0, error=f"{type(exc).__name__}: {exc}",
            ))
            if log is not None:
                log(f"fold {fold_no}: FAILED ({exc})")
    return results


CSV_COLUMNS = ("fold", "split", "accuracy", "precision", "recall", "f1", "macro_auc", "weighted_auc")


def _report_row(r: MetricsReport) -> dict:
    return {
        "fold": r.fold, "split": r.split,
        "accuracy": r.accuracy, "precision": r.precision, "recall": r.recall,
        "f1": r.f1, "macro_auc": r.macro_auc, "weighted_auc": r.weighted_auc,
    }


def write_report(path, fold_results: list[FoldResult], class_names: Sequence[str],
                 extra: dict | None = None) -> None:
    """Structured JSON report plus a flat CSV table next to it (.csv suffix).

    Wall-clock timing stays out of the file on purpose: report files from
    identical runs must be byte-identical.  Timings live on the FoldResult
    objects and in the CLI's progress output.
    """
    rows = []
    for res in fold_results:
        for rep in (res.test_report, res.train_report):
            if rep is not None:
                rows.append(_report_row(rep))
    doc = {
        "class_vocabulary": list(class_names),
        "folds": [
            {
                "fold": res.fold,
                "epochs": res.epochs,
                "error": res.error,
                "testing": _report_row(res.test_report) if res.test_report else None,
                "training": _report_row(res.train_report) if res.train_report else None,
            }
            for res in fold_results
        ],
    }
    if extra:
        doc.update(extra)
    path = str(path)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    root, ext = os.path.splitext(path)
    csv_path = (root if ext else path) + ".csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
