"""Grouped detection evaluation and bias summary.

Face accuracy is reported per demographic group (shade x second attribute),
non-faces as a separate negative-class row, and bias as the max-min accuracy
gap plus the variance of the four group accuracies.  The mean predicted
probability per group is reported alongside thresholded accuracy.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .data import ALL_GROUPS, Dataset
from .models import EncoderParams, detection_logits
from .tape import _sigmoid_forward

NEGATIVE_ROW = "nonface"


class EvaluationError(ValueError):
    """Test set cannot support the requested grouped evaluation."""


@dataclass
class GroupRow:
    n: int
    correct: int
    accuracy: float
    mean_probability: float


@dataclass
class GroupAccuracyTable:
    model_id: str
    threshold: float
    groups: dict[str, GroupRow]   # the four face groups
    negatives: GroupRow
    overall_accuracy: float       # over all evaluated examples


@dataclass
class BiasMetrics:
    gap: float       # max - min face-group accuracy
    variance: float  # population variance of the four accuracies


def evaluate(encoder: EncoderParams, mode: str, test: Dataset,
             threshold: float = 0.5) -> GroupAccuracyTable:
    """Per-group detection accuracy at sigmoid(logit) >= threshold."""
    probs = _sigmoid_forward(detection_logits(encoder, test.images()))
    return table_from_probabilities(test.examples, probs, threshold, mode)


def table_from_probabilities(examples, probs, threshold: float,
                             model_id: str) -> GroupAccuracyTable:
    """Tabulate grouped accuracy from per-example face probabilities."""
    if not (0.0 < threshold < 1.0):
        raise EvaluationError(f"threshold must be in (0, 1), got {threshold}")
    present = {ex.group.label for ex in examples if ex.label == 1 and ex.group}
    missing = [g.label for g in ALL_GROUPS if g.label not in present]
    if missing:
        raise EvaluationError(f"test set has no faces for groups: {', '.join(missing)}")

    tallies = {g.label: [0, 0, []] for g in ALL_GROUPS}  # n, correct, probs
    tallies[NEGATIVE_ROW] = [0, 0, []]
    for ex, prob in zip(examples, probs):
        key = ex.group.label if ex.label == 1 else NEGATIVE_ROW
        predicted_face = prob >= threshold
        hit = predicted_face if ex.label == 1 else not predicted_face
        tallies[key][0] += 1
        tallies[key][1] += int(hit)
        tallies[key][2].append(float(prob))

    def row(key: str) -> GroupRow:
        n, correct, ps = tallies[key]
        # fsum over sorted values keeps the mean invariant under permutation
        return GroupRow(n=n, correct=correct, accuracy=correct / n if n else 0.0,
                        mean_probability=math.fsum(sorted(ps)) / n if n else 0.0)

    groups = {g.label: row(g.label) for g in ALL_GROUPS}
    negatives = row(NEGATIVE_ROW)
    total_n = sum(r.n for r in groups.values()) + negatives.n
    total_correct = sum(r.correct for r in groups.values()) + negatives.correct
    return GroupAccuracyTable(model_id=model_id, threshold=threshold, groups=groups,
                              negatives=negatives,
                              overall_accuracy=total_correct / total_n)


def bias_metrics(table: GroupAccuracyTable) -> BiasMetrics:
    """Spread of the four face-group accuracies."""
    if len(table.groups) != 4:
        raise EvaluationError(f"bias metrics need 4 groups, got {len(table.groups)}")
    acc = np.array([table.groups[g.label].accuracy for g in ALL_GROUPS])
    return BiasMetrics(gap=float(acc.max() - acc.min()), variance=float(acc.var()))


@dataclass
class ComparisonRow:
    group: str
    n: int
    standard_accuracy: float
    debiased_accuracy: float
    delta: float


@dataclass
class ComparisonReport:
    rows: list[ComparisonRow]            # four groups then the negative row
    standard_bias: BiasMetrics
    debiased_bias: BiasMetrics
    standard_overall: float
    debiased_overall: float


def compare(standard: GroupAccuracyTable, debiased: GroupAccuracyTable) -> ComparisonReport:
    """Side-by-side per-group accuracy of the two models."""
    if set(standard.groups) != set(debiased.groups):
        raise EvaluationError(
            f"group sets differ: {sorted(standard.groups)} vs {sorted(debiased.groups)}")
    rows = []
    for g in ALL_GROUPS:
        s, d = standard.groups[g.label], debiased.groups[g.label]
        if s.n != d.n:
            raise EvaluationError(f"group {g.label}: {s.n} vs {d.n} examples")
        rows.append(ComparisonRow(g.label, s.n, s.accuracy, d.accuracy,
                                  d.accuracy - s.accuracy))
    s, d = standard.negatives, debiased.negatives
    rows.append(ComparisonRow(NEGATIVE_ROW, s.n, s.accuracy, d.accuracy,
                              d.accuracy - s.accuracy))
    return ComparisonReport(rows=rows,
                            standard_bias=bias_metrics(standard),
                            debiased_bias=bias_metrics(debiased),
                            standard_overall=standard.overall_accuracy,
                            debiased_overall=debiased.overall_accuracy)


# ---------------------------------------------------------------------------
# CSV forms
# ---------------------------------------------------------------------------

def table_to_csv(table: GroupAccuracyTable, seed: int | None = None) -> str:
    buf = io.StringIO()
    if seed is not None:
        buf.write(f"# seed={seed}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["group", "n", "correct", "accuracy", "mean_probability"])
    for g in ALL_GROUPS:
        r = table.groups[g.label]
        writer.writerow([g.label, r.n, r.correct, repr(r.accuracy), repr(r.mean_probability)])
    r = table.negatives
    writer.writerow([NEGATIVE_ROW, r.n, r.correct, repr(r.accuracy), repr(r.mean_probability)])
    writer.writerow(["overall", "", "", repr(table.overall_accuracy), ""])
    return buf.getvalue()


def comparison_to_csv(report: ComparisonReport, seed: int | None = None) -> str:
    buf = io.StringIO()
    if seed is not None:
        buf.write(f"# seed={seed}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["group", "n", "standard_accuracy", "debiased_accuracy", "delta"])
    for row in report.rows:
        writer.writerow([row.group, row.n, repr(row.standard_accuracy),
                         repr(row.debiased_accuracy), repr(row.delta)])
    writer.writerow(["gap", "", repr(report.standard_bias.gap),
                     repr(report.debiased_bias.gap), ""])
    writer.writerow(["variance", "", repr(report.standard_bias.variance),
                     repr(report.debiased_bias.variance), ""])
    writer.writerow(["overall", "", repr(report.standard_overall),
                     repr(report.debiased_overall), ""])
    return buf.getvalue()


def comparison_from_csv(text: str) -> ComparisonReport:
    """Inverse of comparison_to_csv (comment lines ignored)."""
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")][1:]
    data_rows = []
    extras: dict[str, tuple[float, float]] = {}
    for r in rows:
        if r[0] in ("gap", "variance", "overall"):
            extras[r[0]] = (float(r[2]), float(r[3]))
        else:
            data_rows.append(ComparisonRow(r[0], int(r[1]), float(r[2]),
                                           float(r[3]), float(r[4])))
    return ComparisonReport(
        rows=data_rows,
        standard_bias=BiasMetrics(gap=extras["gap"][0], variance=extras["variance"][0]),
        debiased_bias=BiasMetrics(gap=extras["gap"][1], variance=extras["variance"][1]),
        standard_overall=extras["overall"][0],
        debiased_overall=extras["overall"][1])


def plot_data_csv(report: ComparisonReport, seed: int | None = None) -> str:
    """Bar-chart-ready form: one row per group, two accuracy columns."""
    buf = io.StringIO()
    if seed is not None:
        buf.write(f"# seed={seed}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["group", "standard_accuracy", "debiased_accuracy"])
    for row in report.rows:
        if row.group != NEGATIVE_ROW:
            writer.writerow([row.group, repr(row.standard_accuracy),
                             repr(row.debiased_accuracy)])
    return buf.getvalue()
