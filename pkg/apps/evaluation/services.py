"""Segment/document metrics and the statistical comparison machinery (DeLong, chi-square, Bonferroni)."""
import collections
import itertools
import math
import pathlib
import typing

import numpy as np
import pandas as pd
from scipy import stats
from statsmodels.stats.multitest import multipletests

from apps.CORE.enums import CLASS_ORDER, TARGET_LABELS, Label
from apps.CORE.exceptions import DegenerateStatisticException, InvalidInputException
from apps.CORE.types import StrOrPath
from apps.evaluation.enums import Metric
from apps.evaluation.schemas import (
    ChiSquareResult,
    ClassReport,
    Comparison,
    DeLongResult,
    DocumentAccuracy,
    EvalReport,
    ScoredInstance,
    SegmentMetrics,
)
from apps.segmentation.schemas import GoldRecord, Instance
from loggers import get_logger
from settings import Settings

__all__ = (
    "score_instances",
    "segment_metrics",
    "roc_auc",
    "roc_points",
    "delong",
    "delong_ci",
    "select_document_value",
    "select_documents",
    "document_accuracy",
    "chi_square_2x2",
    "bonferroni",
    "build_report",
    "compare_runs",
    "render_report_table",
    "render_comparison_table",
    "write_roc_points",
    "write_comparisons",
)

logger = get_logger(name=__name__)

DEFAULT_LEVEL = 0.95


def score_instances(*, instances: typing.Sequence[Instance], probabilities: np.ndarray) -> list[ScoredInstance]:
    """Attach probability rows (CLASS_ORDER) to instances; the instance label becomes the gold label."""
    if len(instances) != probabilities.shape[0]:
        raise InvalidInputException(
            message=f"{len(instances)} instances but {probabilities.shape[0]} probability rows.", stage="evaluate"
        )
    return [
        ScoredInstance(instance=instance, prob=tuple(float(value) for value in row), gold=instance.label)
        for instance, row in zip(instances, probabilities)
    ]


def segment_metrics(*, scored: typing.Sequence[ScoredInstance], label: Label) -> SegmentMetrics:
    """One-vs-rest recall and precision of argmax predictions."""
    label = Label(label)
    tp = sum(1 for item in scored if item.predicted is label and item.gold is label)
    fp = sum(1 for item in scored if item.predicted is label and item.gold is not label)
    fn = sum(1 for item in scored if item.predicted is not label and item.gold is label)
    return SegmentMetrics(
        recall=tp / (tp + fn) if tp + fn else None,
        precision=tp / (tp + fp) if tp + fp else None,
        true_positives=tp,
        false_positives=fp,
        false_negatives=fn,
    )


def _binary_inputs(scores: typing.Sequence[float], labels: typing.Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape:
        raise InvalidInputException(
            message=f"{scores.size} scores but {labels.size} labels.", stage="evaluate"
        )
    if labels.all() or not labels.any():
        raise InvalidInputException(
            message="AUROC needs both positive and negative instances.",
            data={"positives": int(labels.sum()), "n": int(labels.size)},
            stage="evaluate",
        )
    return scores, labels


def _placements(scores: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """AUC and the structural components of every positive (V10) and negative (V01) via mid-ranks."""
    positives, negatives = scores[labels], scores[~labels]
    m, n = positives.size, negatives.size
    ranks = stats.rankdata(np.concatenate([positives, negatives]))
    within_pos = stats.rankdata(positives)
    within_neg = stats.rankdata(negatives)
    v10 = (ranks[:m] - within_pos) / n
    v01 = 1.0 - (ranks[m:] - within_neg) / m
    auc = (ranks[:m].sum() - m * (m + 1) / 2.0) / (m * n)
    return float(auc), v10, v01


def roc_auc(*, scores: typing.Sequence[float], labels: typing.Sequence[int]) -> float:
    """
    Area under the ROC curve: correctly ordered positive/negative pairs plus half the ties, over n+ * n-.

    Examples:
        >>> roc_auc(scores=[0.1, 0.4, 0.35, 0.8], labels=[0, 0, 1, 1])
        0.75

    Raises:
        InvalidInputException: only one class is present.
    """
    auc, _, _ = _placements(*_binary_inputs(scores, labels))
    return auc


def roc_points(*, scores: typing.Sequence[float], labels: typing.Sequence[int]) -> list[tuple[float, float]]:
    """(fpr, tpr) at every distinct threshold, from (0, 0) to (1, 1)."""
    scores, labels = _binary_inputs(scores, labels)
    order = np.argsort(-scores, kind="mergesort")
    ranked_scores, ranked_labels = scores[order], labels[order]
    last_of_threshold = np.r_[np.nonzero(np.diff(ranked_scores))[0], ranked_scores.size - 1]
    tps = np.cumsum(ranked_labels)[last_of_threshold]
    fps = (last_of_threshold + 1) - tps
    points = [(0.0, 0.0)]
    points += [(float(fp / (~labels).sum()), float(tp / labels.sum())) for fp, tp in zip(fps, tps)]
    return points


def delong(
    *, scores_a: typing.Sequence[float], scores_b: typing.Sequence[float], labels: typing.Sequence[int]
) -> DeLongResult:
    """
    Paired DeLong test of two AUROCs over the same instances.

    The covariance of (auc_a, auc_b) is S10 / n+ + S01 / n-, with S10 and S01 the sample covariances of the
    positives' and negatives' placement values.

    Raises:
        InvalidInputException: one class only, or score lists of different length.
        DegenerateStatisticException: the variance of the difference is zero while the AUROCs differ.
    """
    scores_a, labels_a = _binary_inputs(scores_a, labels)
    scores_b, _ = _binary_inputs(scores_b, labels)
    auc_a, v10_a, v01_a = _placements(scores_a, labels_a)
    auc_b, v10_b, v01_b = _placements(scores_b, labels_a)
    m, n = v10_a.size, v01_a.size
    s10 = np.cov(np.vstack([v10_a, v10_b])) if m > 1 else np.zeros((2, 2))
    s01 = np.cov(np.vstack([v01_a, v01_b])) if n > 1 else np.zeros((2, 2))
    covariance = s10 / m + s01 / n
    variance = covariance[0, 0] + covariance[1, 1] - 2 * covariance[0, 1]

    if auc_a == auc_b:
        z, p = 0.0, 1.0
    elif variance <= 0:
        raise DegenerateStatisticException(
            message="DeLong variance of the AUROC difference is zero.",
            data={"auc_a": auc_a, "auc_b": auc_b},
            stage="evaluate",
        )
    else:
        z = (auc_a - auc_b) / math.sqrt(variance)
        p = float(min(1.0, 2 * stats.norm.sf(abs(z))))
    return DeLongResult(
        auc_a=auc_a,
        auc_b=auc_b,
        var_a=float(covariance[0, 0]),
        var_b=float(covariance[1, 1]),
        covariance=float(covariance[0, 1]),
        z=z,
        p_two_sided=p,
    )


def delong_ci(
    *, scores: typing.Sequence[float], labels: typing.Sequence[int], level: float = DEFAULT_LEVEL
) -> tuple[float, float]:
    """Normal-approximation AUROC interval with the DeLong variance, clipped to [0, 1]."""
    auc, v10, v01 = _placements(*_binary_inputs(scores, labels))
    variance = (np.var(v10, ddof=1) if v10.size > 1 else 0.0) / v10.size + (
        np.var(v01, ddof=1) if v01.size > 1 else 0.0
    ) / v01.size
    half_width = stats.norm.ppf(0.5 + level / 2) * math.sqrt(variance)
    return max(0.0, auc - half_width), min(1.0, auc + half_width)


def select_document_value(*, scored: typing.Sequence[ScoredInstance], label: Label) -> ScoredInstance:
    """
    The report's instance with the highest probability for `label`; ties go to the earliest in reading order.

    Raises:
        InvalidInputException: the report has no instance.
    """
    if not scored:
        raise InvalidInputException(message="Cannot select a value from a report without instances.", stage="evaluate")
    return min(scored, key=lambda item: (-item.probability(label), item.instance.reading_order))


def select_documents(
    *, scored: typing.Sequence[ScoredInstance], report_ids: typing.Iterable[str], label: Label
) -> dict[str, ScoredInstance | None]:
    """Selection per report; reports without any instance select nothing."""
    by_report: dict[str, list[ScoredInstance]] = collections.defaultdict(list)
    for item in scored:
        by_report[item.report_id].append(item)
    return {
        report_id: select_document_value(scored=by_report[report_id], label=label) if by_report[report_id] else None
        for report_id in report_ids
    }


def _normal_interval(successes: int, total: int, level: float) -> tuple[float, float]:
    proportion = successes / total
    half_width = stats.norm.ppf(0.5 + level / 2) * math.sqrt(proportion * (1 - proportion) / total)
    return max(0.0, proportion - half_width), min(1.0, proportion + half_width)


def document_accuracy(
    *,
    selections: dict[str, ScoredInstance | None],
    gold: typing.Sequence[GoldRecord],
    label: Label,
    epsilon: float | None = None,
    level: float = DEFAULT_LEVEL,
) -> DocumentAccuracy:
    """
    Fraction of documents whose selected value matches a gold value of `label` within `epsilon`.

    Args:
        selections: Selected instance per report (None counts as a miss).
        gold: Gold record of every test report.
        label (Label): AHI or SaO2.
        epsilon (float): Match tolerance. Defaults: `Settings.LABEL_EPSILON`
        level (float): Confidence level of the normal-approximation binomial interval. Defaults: `0.95`

    Raises:
        InvalidInputException: selections and gold records cover different reports.
    """
    epsilon = Settings.LABEL_EPSILON if epsilon is None else epsilon
    gold_by_report = {record.report_id: record for record in gold}
    if set(selections) != set(gold_by_report) or not gold_by_report:
        raise InvalidInputException(
            message="Selections and gold records must cover the same nonempty set of reports.",
            data={
                "missing_gold": sorted(set(selections) - set(gold_by_report)),
                "missing_selection": sorted(set(gold_by_report) - set(selections)),
            },
            stage="evaluate",
        )
    correct = 0
    for report_id, selection in selections.items():
        if selection is None:
            continue
        targets = gold_by_report[report_id].values_for(Label(label))
        if any(abs(selection.instance.numeric_value - target) <= epsilon for target in targets):
            correct += 1
    total = len(selections)
    ci_low, ci_high = _normal_interval(correct, total, level)
    return DocumentAccuracy(accuracy=correct / total, correct=correct, total=total, ci_low=ci_low, ci_high=ci_high)


def chi_square_2x2(*, correct_a: int, n_a: int, correct_b: int, n_b: int) -> ChiSquareResult:
    """
    Pearson chi-square (no continuity correction) on the correct/incorrect table of two models.

    Raises:
        InvalidInputException: a sample size is not positive or a count exceeds it.
        DegenerateStatisticException: an expected cell count is zero.
    """
    if n_a <= 0 or n_b <= 0 or not 0 <= correct_a <= n_a or not 0 <= correct_b <= n_b:
        raise InvalidInputException(
            message="Chi-square needs positive sample sizes and counts within them.",
            data={"correct_a": correct_a, "n_a": n_a, "correct_b": correct_b, "n_b": n_b},
            stage="evaluate",
        )
    table = np.array([[correct_a, n_a - correct_a], [correct_b, n_b - correct_b]], dtype=np.float64)
    expected = stats.contingency.expected_freq(table)
    if np.any(expected == 0):
        raise DegenerateStatisticException(
            message="Chi-square table has an expected cell count of zero.", data=table.tolist(), stage="evaluate"
        )
    statistic, p, _, _ = stats.chi2_contingency(table, correction=False)
    return ChiSquareResult(statistic=float(statistic), p=float(min(1.0, p)))


def bonferroni(*, p_values: typing.Sequence[float]) -> list[float]:
    """
    min(1, m * p) over a family of m p-values.

    Examples:
        >>> bonferroni(p_values=[0.001, 0.02])
        [0.002, 0.04]
    """
    if not p_values:
        return []
    _, adjusted, _, _ = multipletests(list(p_values), method="bonferroni")
    return [float(value) for value in adjusted]


def _one_vs_rest(scored: typing.Sequence[ScoredInstance], label: Label) -> tuple[list[float], list[int]]:
    return [item.probability(label) for item in scored], [int(item.gold is label) for item in scored]


def build_report(
    *,
    model: str,
    scored: typing.Sequence[ScoredInstance],
    gold: typing.Sequence[GoldRecord],
    level: float = DEFAULT_LEVEL,
) -> EvalReport:
    """
    Segment metrics and AUROC (with DeLong CI) for every class, document accuracy for AHI and SaO2.

    AUROC is left undefined (with a warning) for a class absent from, or exhausting, the gold labels.
    """
    report_ids = sorted(record.report_id for record in gold)
    classes = []
    for label in CLASS_ORDER:
        metrics = segment_metrics(scored=scored, label=label)
        scores, labels = _one_vs_rest(scored, label)
        auroc = ci_low = ci_high = None
        if 0 < sum(labels) < len(labels):
            auroc = roc_auc(scores=scores, labels=labels)
            ci_low, ci_high = delong_ci(scores=scores, labels=labels, level=level)
        else:
            logger.warning(msg=f"Model '{model}': AUROC of {label.value} is undefined on this set.")
        document = None
        if label in TARGET_LABELS and report_ids:
            document = document_accuracy(
                selections=select_documents(scored=scored, report_ids=report_ids, label=label),
                gold=gold,
                label=label,
                level=level,
            )
        classes.append(
            ClassReport(
                label=label,
                recall=metrics.recall,
                precision=metrics.precision,
                auroc=auroc,
                auroc_ci_low=ci_low,
                auroc_ci_high=ci_high,
                document=document,
            )
        )
    return EvalReport(model=model, classes=classes, instances=len(scored), documents=len(report_ids))


def _aligned(runs: dict[str, typing.Sequence[ScoredInstance]]) -> dict[str, list[ScoredInstance]]:
    keys = None
    aligned = {}
    for name, scored in runs.items():
        ordered = sorted(scored, key=lambda item: item.key)
        run_keys = [item.key for item in ordered]
        if keys is None:
            keys = run_keys
        elif run_keys != keys:
            raise InvalidInputException(
                message=f"Run '{name}' was scored on different instances.", data={"run": name}, stage="compare"
            )
        aligned[name] = ordered
    return aligned


def compare_runs(
    *, runs: dict[str, typing.Sequence[ScoredInstance]], gold: typing.Sequence[GoldRecord]
) -> list[Comparison]:
    """
    Pairwise DeLong (AUROC) and chi-square (document accuracy) tests for AHI and SaO2 between every pair of
    runs, Bonferroni-adjusted over the whole family. Degenerate tests are logged and left out; DeLong needs
    every run scored on the same instances and is skipped otherwise.
    """
    try:
        aligned = _aligned(runs)
        paired = True
    except InvalidInputException as error:
        logger.warning(msg=f"Runs are not paired, AUROC comparisons skipped: {error.message}")
        aligned, paired = {name: list(scored) for name, scored in runs.items()}, False
    report_ids = sorted(record.report_id for record in gold)
    raw: list[tuple[tuple[str, str], Label, Metric, float, float]] = []
    for name_a, name_b in itertools.combinations(sorted(aligned), 2):
        for label in TARGET_LABELS:
            if paired:
                scores_a, labels = _one_vs_rest(aligned[name_a], label)
                scores_b, _ = _one_vs_rest(aligned[name_b], label)
                try:
                    result = delong(scores_a=scores_a, scores_b=scores_b, labels=labels)
                    raw.append(((name_a, name_b), label, Metric.AUROC, result.z, result.p_two_sided))
                except (DegenerateStatisticException, InvalidInputException) as error:
                    logger.warning(msg=f"DeLong {name_a} vs {name_b} ({label.value}) skipped: {error.message}")

            accuracy = {}
            for name in (name_a, name_b):
                selections = select_documents(scored=aligned[name], report_ids=report_ids, label=label)
                accuracy[name] = document_accuracy(selections=selections, gold=gold, label=label)
            try:
                result = chi_square_2x2(
                    correct_a=accuracy[name_a].correct,
                    n_a=accuracy[name_a].total,
                    correct_b=accuracy[name_b].correct,
                    n_b=accuracy[name_b].total,
                )
                raw.append(((name_a, name_b), label, Metric.DOCUMENT_ACCURACY, result.statistic, result.p))
            except DegenerateStatisticException as error:
                logger.warning(msg=f"Chi-square {name_a} vs {name_b} ({label.value}) skipped: {error.message}")

    adjusted = bonferroni(p_values=[p for *_, p in raw])
    return [
        Comparison(pair=pair, label=label, metric=metric, statistic=statistic, p_raw=p, p_adjusted=max(p, p_adj))
        for (pair, label, metric, statistic, p), p_adj in zip(raw, adjusted)
    ]


def _fmt(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def render_report_table(*, report: EvalReport) -> str:
    """Recall, Precision, AUROC (CI) and Document Accuracy (CI) per class."""
    rows = []
    for item in report.classes:
        auroc = _fmt(item.auroc)
        if item.auroc is not None:
            auroc += f" ({_fmt(item.auroc_ci_low)}-{_fmt(item.auroc_ci_high)})"
        document = "n/a"
        if item.document is not None:
            document = f"{_fmt(item.document.accuracy)} ({_fmt(item.document.ci_low)}-{_fmt(item.document.ci_high)})"
        rows.append(
            {
                "Class": item.label.value,
                "Recall": _fmt(item.recall),
                "Precision": _fmt(item.precision),
                "AUROC (CI)": auroc,
                "Document Accuracy (CI)": document,
            }
        )
    return f"Model: {report.model}\n" + pd.DataFrame(rows).to_string(index=False)


def render_comparison_table(*, comparisons: typing.Sequence[Comparison]) -> str:
    if not comparisons:
        return "No comparisons."
    frame = pd.DataFrame(
        [
            {
                "Model A": item.pair[0],
                "Model B": item.pair[1],
                "Class": item.label.value,
                "Metric": item.metric.value,
                "Statistic": f"{item.statistic:.4f}",
                "p": f"{item.p_raw:.4f}",
                "p (adjusted)": f"{item.p_adjusted:.4f}",
            }
            for item in comparisons
        ]
    )
    return frame.to_string(index=False)


def write_roc_points(
    *, scored: typing.Sequence[ScoredInstance], label: Label, path: StrOrPath
) -> pathlib.Path | None:
    """`fpr,tpr` CSV of the one-vs-rest ROC of `label`; nothing is written when the curve is undefined."""
    scores, labels = _one_vs_rest(scored, Label(label))
    if not 0 < sum(labels) < len(labels):
        return None
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(roc_points(scores=scores, labels=labels), columns=["fpr", "tpr"]).to_csv(path, index=False)
    return path


def write_comparisons(*, comparisons: typing.Sequence[Comparison], path: StrOrPath) -> pathlib.Path:
    """`pair,metric,statistic,p_raw,p_adjusted` CSV; the metric column reads like `auroc/AHI`."""
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        [
            {
                "pair": f"{item.pair[0]} vs {item.pair[1]}",
                "metric": f"{item.metric.value}/{item.label.value}",
                "statistic": item.statistic,
                "p_raw": item.p_raw,
                "p_adjusted": item.p_adjusted,
            }
            for item in comparisons
        ],
        columns=["pair", "metric", "statistic", "p_raw", "p_adjusted"],
    )
    frame.to_csv(path, index=False)
    return path
