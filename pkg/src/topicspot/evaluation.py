"""Accuracy reports, normalized confusion matrices, and prefix (online) evaluation."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus, Dialog, Vocab
from .errors import ValidationError
from .model import ModelParams, predict_dialog

DEFAULT_FRACTIONS = (1 / 32, 1 / 16, 1 / 8, 1 / 4, 1 / 2, 1.0)


@dataclass
class DialogResult:
    dialog_id: str
    gold: str
    predicted: str
    confidence: float


@dataclass
class EvalReport:
    n_correct: int
    n_total: int
    records: list[DialogResult] = field(default_factory=list)

    @property
    def accuracy(self) -> float:
        """Accuracy in percent."""
        return 100.0 * self.n_correct / self.n_total if self.n_total else 0.0


@dataclass
class ConfusionMatrix:
    labels: tuple[str, ...]
    counts: np.ndarray      # (T, T), rows = target class, columns = prediction
    normalized: np.ndarray  # rows sum to 1; zero-support rows are all zero
    zero_support: tuple[str, ...]


@dataclass
class OnlinePoint:
    fraction: float
    mean_utterances: float
    absolute: float  # percent
    relative: float  # ratio to full-dialog accuracy


@dataclass
class OnlineCurve:
    points: list[OnlinePoint] = field(default_factory=list)


def build_report(records: list[DialogResult]) -> EvalReport:
    correct = sum(1 for r in records if r.predicted == r.gold)
    return EvalReport(n_correct=correct, n_total=len(records), records=records)


def _check_labels(params: ModelParams, corpus: Corpus) -> None:
    unknown = corpus.topic_set - set(params.topics)
    if unknown:
        raise ValidationError(f"corpus has topics unknown to the model: {sorted(unknown)}")


def evaluate(params: ModelParams, vocab: Vocab, corpus: Corpus) -> EvalReport:
    """Greedy argmax accuracy per dialog; prediction ties go to the lowest index."""
    _check_labels(params, corpus)
    records = []
    for d in corpus.dialogs:
        pred = predict_dialog(params, vocab, d)
        records.append(DialogResult(dialog_id=d.id, gold=d.topic, predicted=pred.label,
                                    confidence=float(pred.probs[pred.label_index])))
    return build_report(records)


def confusion(params: ModelParams, vocab: Vocab, corpus: Corpus) -> ConfusionMatrix:
    _check_labels(params, corpus)
    labels = params.topics
    index = {t: i for i, t in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for d in corpus.dialogs:
        pred = predict_dialog(params, vocab, d)
        counts[index[d.topic], pred.label_index] += 1
    sums = counts.sum(axis=1, keepdims=True)
    normalized = np.divide(counts, sums, out=np.zeros(counts.shape), where=sums > 0)
    zero_support = tuple(labels[i] for i in range(len(labels)) if sums[i, 0] == 0)
    return ConfusionMatrix(labels=labels, counts=counts, normalized=normalized,
                           zero_support=zero_support)


def make_subdialog(dialog: Dialog, fraction: float) -> Dialog:
    """Prefix of length max(1, half-up-round(fraction * N)); topic preserved."""
    if not 0 < fraction <= 1:
        raise ValidationError(f"fraction must be in (0, 1], got {fraction}")
    n = max(1, int(math.floor(fraction * len(dialog.utterances) + 0.5)))
    if n >= len(dialog.utterances):
        return dialog
    return Dialog(id=dialog.id, topic=dialog.topic, utterances=dialog.utterances[:n])


def online_eval(params: ModelParams, vocab: Vocab, corpus: Corpus,
                fractions=DEFAULT_FRACTIONS) -> OnlineCurve:
    """Accuracy on dialog prefixes at each fraction, absolute and relative to
    the full-dialog accuracy."""
    fractions = sorted(fractions)
    absolutes = {}
    means = {}
    for f in fractions:
        prefixed = Corpus(tuple(make_subdialog(d, f) for d in corpus.dialogs))
        report = evaluate(params, vocab, prefixed)
        absolutes[f] = report.accuracy
        n = len(prefixed.dialogs)
        means[f] = sum(d.n_utterances() for d in prefixed.dialogs) / n if n else 0.0
    base = absolutes[fractions[-1]] if math.isclose(fractions[-1], 1.0) else \
        evaluate(params, vocab, corpus).accuracy
    curve = OnlineCurve()
    for f in fractions:
        rel = absolutes[f] / base if base > 0 else float("nan")
        curve.points.append(OnlinePoint(fraction=f, mean_utterances=means[f],
                                        absolute=absolutes[f], relative=rel))
    return curve


# ---------------------------------------------------------------------------
# artifact writers
# ---------------------------------------------------------------------------


def write_report_csv(report: EvalReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dialog_id", "gold", "pred", "confidence"])
        for r in report.records:
            writer.writerow([r.dialog_id, r.gold, r.predicted, f"{r.confidence:.6f}"])


def write_report_json(report: EvalReport, path) -> None:
    payload = {"accuracy": report.accuracy, "n_correct": report.n_correct,
               "n_total": report.n_total}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_confusion_csv(matrix: ConfusionMatrix, path, normalized: bool = False) -> None:
    """Header row/column carry topic labels; rows are the target class."""
    data = matrix.normalized if normalized else matrix.counts
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["target\\pred", *matrix.labels])
        for i, label in enumerate(matrix.labels):
            if normalized:
                writer.writerow([label, *(f"{v:.6f}" for v in data[i])])
            else:
                writer.writerow([label, *(int(v) for v in data[i])])


def write_online_csv(curve: OnlineCurve, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fraction", "n_utterances_mean", "absolute_acc", "relative_acc"])
        for p in curve.points:
            writer.writerow([repr(p.fraction), f"{p.mean_utterances:.4f}",
                             repr(p.absolute), repr(p.relative)])
