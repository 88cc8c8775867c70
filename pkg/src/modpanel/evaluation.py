"""Evaluation harness: confusion metrics, rank-based AUC, Welch's t-test,
seeded balanced/imbalanced runs, and precision-recall comparison tables.

Metric reduction is a deterministic fold over items sorted by item_id, so a
run with fixed seeds is bit-identical no matter the execution schedule.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .core import EmptyInput, EngineError, ModerationItem


class LengthMismatch(EngineError):
    code = "length_mismatch"


class SingleClassInput(EngineError):
    code = "single_class_input"


class InsufficientPositives(EngineError):
    code = "insufficient_positives"


@dataclass(frozen=True)
class ConfusionCounts:
    """Binary confusion counts; the positive class is "removed"."""

    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise EngineError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion(preds: Sequence[bool], labels: Sequence[bool]) -> ConfusionCounts:
    if len(preds) != len(labels):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(labels)} labels")
    if not preds:
        raise EmptyInput("cannot build confusion counts from empty input")
    tp = fp = fn = tn = 0
    for p, y in zip(preds, labels):
        if p and y:
            tp += 1
        elif p and not y:
            fp += 1
        elif not p and y:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def _class_f1(tp: int, fp: int, fn: int) -> tuple[float, bool]:
    """Per-class F1 with the zero-denominator convention: undefined -> 0,
    flagged. Returns (value, defined)."""
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 0.0, False
    return 2 * tp / denom, True


def micro_f1(c: ConfusionCounts) -> float:
    """Micro-averaged F1 over both classes; for binary single-label
    predictions this equals accuracy."""
    return (c.tp + c.tn) / c.total


def positive_f1(c: ConfusionCounts) -> float:
    return _class_f1(c.tp, c.fp, c.fn)[0]


def macro_f1(c: ConfusionCounts) -> float:
    """Unweighted mean of the removed-class and kept-class F1 scores."""
    pos, _ = _class_f1(c.tp, c.fp, c.fn)
    neg, _ = _class_f1(c.tn, c.fn, c.fp)
    return (pos + neg) / 2


def precision(c: ConfusionCounts) -> float:
    denom = c.tp + c.fp
    return c.tp / denom if denom else 0.0


def recall(c: ConfusionCounts) -> float:
    denom = c.tp + c.fn
    return c.tp / denom if denom else 0.0


def degenerate_metrics(c: ConfusionCounts) -> tuple[str, ...]:
    """Names of the metrics that hit a zero denominator and were flagged 0."""
    flagged = []
    if c.tp + c.fp == 0:
        flagged.append("precision")
    if c.tp + c.fn == 0:
        flagged.append("recall")
    if not _class_f1(c.tp, c.fp, c.fn)[1]:
        flagged.append("positive_f1")
    if not _class_f1(c.tn, c.fn, c.fp)[1]:
        flagged.append("negative_f1")
    return tuple(flagged)


def auc(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Rank-based AUC: P(score+ > score-) + 0.5 * P(score+ = score-).

    Computed from midranks, which makes the value exactly invariant under
    any strictly monotone transform of the scores.
    """
    if len(scores) != len(labels):
        raise LengthMismatch(f"{len(scores)} scores vs {len(labels)} labels")
    n_pos = sum(1 for y in labels if y)
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassInput("AUC requires at least one positive and one negative label")
    order = sorted(range(len(scores)), key=lambda i: scores[i])
    ranks = [0.0] * len(scores)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        midrank = (i + j) / 2 + 1  # 1-based average rank of the tie group
        for k in range(i, j + 1):
            ranks[order[k]] = midrank
        i = j + 1
    rank_sum_pos = sum(r for r, y in zip(ranks, labels) if y)
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2
    return u / (n_pos * n_neg)


# ---------------------------------------------------------------------------
# Welch's t-test. The p-value comes from the regularized incomplete beta
# function evaluated with a modified Lentz continued fraction (absolute
# error well below 1e-8); no normal approximation anywhere.
# ---------------------------------------------------------------------------

_FPMIN = 1e-300
_CF_EPS = 3e-16


def _betacf(a: float, b: float, x: float) -> float:
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, 400):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise EngineError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise EngineError("incomplete beta requires a, b > 0")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    # The continued fraction converges fast only on one side of the mean.
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, df: float) -> float:
    """Two-sided tail probability of Student's t: I_x(df/2, 1/2) with
    x = df / (df + t^2)."""
    if df <= 0:
        raise EngineError("degrees of freedom must be > 0")
    if t == 0.0:
        return 1.0
    if math.isinf(t):
        return 0.0
    x = df / (df + t * t)
    return regularized_incomplete_beta(df / 2.0, 0.5, x)


@dataclass(frozen=True)
class WelchResult:
    t: float
    df: float
    p: float
    degenerate: bool = False


def welch_t_test(a: Sequence[float], b: Sequence[float]) -> WelchResult:
    """Unequal-variance two-sample t-test with Welch-Satterthwaite df.

    Zero variance in both samples is degenerate: equal means give p = 1,
    different means give p = 0, and the result is flagged.
    """
    if len(a) < 2 or len(b) < 2:
        raise EmptyInput("welch_t_test requires at least two observations per sample")
    na, nb = len(a), len(b)
    ma = sum(a) / na
    mb = sum(b) / nb
    va = sum((x - ma) ** 2 for x in a) / (na - 1)
    vb = sum((x - mb) ** 2 for x in b) / (nb - 1)
    if va == 0.0 and vb == 0.0:
        if ma == mb:
            return WelchResult(t=0.0, df=float(na + nb - 2), p=1.0, degenerate=True)
        t = math.inf if ma > mb else -math.inf
        return WelchResult(t=t, df=float(na + nb - 2), p=0.0, degenerate=True)
    sa = va / na
    sb = vb / nb
    t = (ma - mb) / math.sqrt(sa + sb)
    df = (sa + sb) ** 2 / (sa**2 / (na - 1) + sb**2 / (nb - 1))
    return WelchResult(t=t, df=df, p=student_t_two_sided_p(t, df))


# ---------------------------------------------------------------------------
# Seeded evaluation runs
# ---------------------------------------------------------------------------

# decide(item) -> (removal decision, removal-oriented ranking score)
DecideFn = Callable[[ModerationItem], tuple[bool, float]]


@dataclass(frozen=True)
class SplitSpec:
    """balanced: equal positives and negatives per seed. imbalanced: keep
    positives up to the budget share, subsample negatives so positives are
    ``positive_fraction`` of the sample."""

    kind: str
    positive_fraction: float | None = None
    budget: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("balanced", "imbalanced"):
            raise EngineError(f"unknown split kind {self.kind!r}", field="kind")
        if self.kind == "imbalanced":
            if self.positive_fraction is None or not 0 < self.positive_fraction < 0.5:
                raise EngineError(
                    "imbalanced split needs a positive fraction in (0, 0.5)",
                    field="positive_fraction",
                )

    @classmethod
    def parse(cls, name: str, budget: int | None = None) -> "SplitSpec":
        if name == "balanced":
            return cls(kind="balanced", budget=budget)
        if name in ("imb5", "imbalanced5"):
            return cls(kind="imbalanced", positive_fraction=0.05, budget=budget)
        if name in ("imb10", "imbalanced10"):
            return cls(kind="imbalanced", positive_fraction=0.10, budget=budget)
        raise EngineError(f"unknown split name {name!r}", field="split")


def sample_split(
    items: Sequence[ModerationItem], spec: SplitSpec, seed: int
) -> list[ModerationItem]:
    """Draw one seeded evaluation sample. Deterministic for a given
    (items, spec, seed): items are keyed by item_id before any draw."""
    labeled = sorted((i for i in items if i.label is not None), key=lambda i: i.item_id)
    pos = [i for i in labeled if i.label]
    neg = [i for i in labeled if not i.label]
    rng = random.Random(seed)
    if spec.kind == "balanced":
        n = min(len(pos), len(neg))
        if spec.budget is not None:
            n = min(n, spec.budget // 2)
        if n == 0:
            raise InsufficientPositives("balanced split needs both classes present")
        chosen = rng.sample(pos, n) + rng.sample(neg, n)
    else:
        p = spec.positive_fraction or 0.0
        n_pos = len(pos)
        if spec.budget is not None:
            n_pos = min(n_pos, max(1, round(spec.budget * p)))
        n_neg = round(n_pos * (1 - p) / p)
        if n_neg > len(neg):
            n_pos = math.floor(len(neg) * p / (1 - p))
            n_neg = round(n_pos * (1 - p) / p)
        if n_pos < 1:
            raise InsufficientPositives(
                f"cannot realize a {p:.0%} positive split from {len(pos)} positives"
                f" and {len(neg)} negatives"
            )
        chosen = rng.sample(pos, n_pos) + rng.sample(neg, n_neg)
    return sorted(chosen, key=lambda i: i.item_id)


_METRIC_NAMES = ("micro_f1", "macro_f1", "positive_f1", "precision", "recall", "auc")


@dataclass(frozen=True)
class MetricsRow:
    """All metrics for one seed over one item group."""

    seed: int
    n: int
    micro_f1: float
    macro_f1: float
    positive_f1: float
    precision: float
    recall: float
    auc: float | None
    degenerate: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n": self.n,
            "micro_f1": self.micro_f1,
            "macro_f1": self.macro_f1,
            "positive_f1": self.positive_f1,
            "precision": self.precision,
            "recall": self.recall,
            "auc": self.auc,
            "degenerate": list(self.degenerate),
        }


def _metrics_row(
    seed: int,
    preds: list[bool],
    labels: list[bool],
    scores: list[float],
) -> MetricsRow:
    c = confusion(preds, labels)
    flagged = list(degenerate_metrics(c))
    try:
        auc_value: float | None = auc(scores, labels)
    except SingleClassInput:
        auc_value = None
        flagged.append("auc")
    return MetricsRow(
        seed=seed,
        n=c.total,
        micro_f1=micro_f1(c),
        macro_f1=macro_f1(c),
        positive_f1=positive_f1(c),
        precision=precision(c),
        recall=recall(c),
        auc=auc_value,
        degenerate=tuple(flagged),
    )


def _mean_sd(values: Sequence[float]) -> tuple[float, float]:
    n = len(values)
    mean = sum(values) / n
    if n < 2:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var)


@dataclass(frozen=True)
class GroupReport:
    runs: tuple[MetricsRow, ...]
    mean_sd: dict[str, tuple[float, float] | None] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "runs": [row.as_dict() for row in self.runs],
            "mean_sd": {
                name: (None if stats is None else {"mean": stats[0], "sd": stats[1]})
                for name, stats in self.mean_sd.items()
            },
        }


def _group_report(rows: list[MetricsRow]) -> GroupReport:
    mean_sd: dict[str, tuple[float, float] | None] = {}
    for name in _METRIC_NAMES:
        values = [getattr(r, name) for r in rows if getattr(r, name) is not None]
        mean_sd[name] = _mean_sd(values) if values else None
    return GroupReport(runs=tuple(rows), mean_sd=mean_sd)


@dataclass(frozen=True)
class EvalReport:
    split: str
    seeds: tuple[int, ...]
    overall: GroupReport
    per_subreddit: dict[str, GroupReport]

    def as_dict(self) -> dict:
        return {
            "split": self.split,
            "seeds": list(self.seeds),
            "overall": self.overall.as_dict(),
            "per_subreddit": {k: v.as_dict() for k, v in self.per_subreddit.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=1, sort_keys=False)


def run_eval(
    items: Sequence[ModerationItem],
    decide: DecideFn,
    split: SplitSpec,
    seeds: Sequence[int],
) -> EvalReport:
    """Evaluate ``decide`` over one seeded sample per seed.

    Per-subreddit AUC is flagged None whenever a subreddit's sample carries
    one class only; the overall row always has both classes by construction.
    """
    if not seeds:
        raise EmptyInput("run_eval requires at least one seed")
    overall_rows: list[MetricsRow] = []
    sub_rows: dict[str, list[MetricsRow]] = {}
    for seed in seeds:
        sample = sample_split(items, split, seed)
        preds: list[bool] = []
        labels: list[bool] = []
        scores: list[float] = []
        by_sub: dict[str, list[int]] = {}
        for idx, item in enumerate(sample):
            decision, score = decide(item)
            preds.append(bool(decision))
            labels.append(bool(item.label))
            scores.append(float(score))
            by_sub.setdefault(item.subreddit, []).append(idx)
        overall_rows.append(_metrics_row(seed, preds, labels, scores))
        for sub in sorted(by_sub):
            idxs = by_sub[sub]
            sub_rows.setdefault(sub, []).append(
                _metrics_row(
                    seed,
                    [preds[i] for i in idxs],
                    [labels[i] for i in idxs],
                    [scores[i] for i in idxs],
                )
            )
    split_name = split.kind if split.kind == "balanced" else (
        f"imbalanced_{int(round((split.positive_fraction or 0) * 100))}pct"
    )
    return EvalReport(
        split=split_name,
        seeds=tuple(seeds),
        overall=_group_report(overall_rows),
        per_subreddit={sub: _group_report(rows) for sub, rows in sorted(sub_rows.items())},
    )


# ---------------------------------------------------------------------------
# Precision-recall trade-off comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PrTradeoff:
    groups: dict[str, dict[str, tuple[float, float]]]
    pairwise: list[dict]

    def as_dict(self) -> dict:
        return {
            "groups": {
                name: {
                    metric: {"mean": stats[0], "sd": stats[1]}
                    for metric, stats in metrics.items()
                }
                for name, metrics in self.groups.items()
            },
            "pairwise": self.pairwise,
        }


def _tradeoff_samples(report: EvalReport, grouping: str) -> dict[str, list[float]]:
    if grouping == "seed":
        runs = report.overall.runs
        return {
            "precision": [r.precision for r in runs],
            "recall": [r.recall for r in runs],
        }
    if grouping == "subreddit":
        # one sample point per subreddit: its per-seed mean
        out: dict[str, list[float]] = {"precision": [], "recall": []}
        for group in report.per_subreddit.values():
            for metric in out:
                out[metric].append(
                    sum(getattr(r, metric) for r in group.runs) / len(group.runs)
                )
        return out
    raise EngineError(f"unknown tradeoff grouping {grouping!r}", field="grouping")


def pr_tradeoff_report(
    reports: Mapping[str, EvalReport], grouping: str = "subreddit"
) -> PrTradeoff:
    """Per-group mean +/- sd precision and recall plus pairwise Welch tests.

    ``grouping`` picks the sample unit for the significance tests: one point
    per subreddit (its seed-mean, the default) or one point per seed.
    """
    if len(reports) < 2:
        raise EngineError("pr_tradeoff_report requires at least two report groups")
    samples: dict[str, dict[str, list[float]]] = {}
    groups: dict[str, dict[str, tuple[float, float]]] = {}
    for name in sorted(reports):
        samples[name] = _tradeoff_samples(reports[name], grouping)
        groups[name] = {
            metric: _mean_sd(values) for metric, values in samples[name].items()
        }
    pairwise: list[dict] = []
    names = sorted(reports)
    for i, left in enumerate(names):
        for right in names[i + 1:]:
            for metric in ("precision", "recall"):
                result = welch_t_test(samples[left][metric], samples[right][metric])
                pairwise.append(
                    {
                        "left": left,
                        "right": right,
                        "metric": metric,
                        "t": result.t,
                        "df": result.df,
                        "p": result.p,
                        "degenerate": result.degenerate,
                    }
                )
    return PrTradeoff(groups=groups, pairwise=pairwise)


# ---------------------------------------------------------------------------
# Plain-text rendering
# ---------------------------------------------------------------------------


def _fmt(value: float | None) -> str:
    return "   --  " if value is None else f"{value:7.4f}"


def format_report_table(report: EvalReport) -> str:
    """Aligned text table: one block per group, one row per seed plus the
    mean +/- sd footer."""
    lines: list[str] = []
    header = f"{'group':<24} {'seed':>6} {'n':>6} " + " ".join(
        f"{name:>9}" for name in _METRIC_NAMES
    )
    lines.append(f"split: {report.split}")
    lines.append(header)
    lines.append("-" * len(header))

    def emit(name: str, group: GroupReport) -> None:
        for row in group.runs:
            metrics = " ".join(f"{_fmt(getattr(row, m)):>9}" for m in _METRIC_NAMES)
            lines.append(f"{name:<24} {row.seed:>6} {row.n:>6} {metrics}")
        means = []
        for m in _METRIC_NAMES:
            stats = group.mean_sd.get(m)
            means.append("     --  " if stats is None else f"{stats[0]:.3f}+-{stats[1]:.3f}")
        lines.append(f"{name:<24} {'mean':>6} {'':>6} " + " ".join(f"{m:>9}" for m in means))

    emit("overall", report.overall)
    for sub, group in report.per_subreddit.items():
        emit(sub, group)
    return "\n".join(lines)


def format_pr_table(tradeoff: PrTradeoff) -> str:
    lines = [f"{'group':<24} {'precision':>18} {'recall':>18}"]
    lines.append("-" * len(lines[0]))
    for name, metrics in tradeoff.groups.items():
        pm, ps = metrics["precision"]
        rm, rs = metrics["recall"]
        lines.append(f"{name:<24} {pm:>9.4f}+-{ps:<7.4f} {rm:>9.4f}+-{rs:<7.4f}")
    lines.append("")
    lines.append(f"{'comparison':<40} {'metric':<10} {'t':>10} {'df':>8} {'p':>12}")
    for row in tradeoff.pairwise:
        lines.append(
            f"{row['left'] + ' vs ' + row['right']:<40} {row['metric']:<10}"
            f" {row['t']:>10.4f} {row['df']:>8.2f} {row['p']:>12.3e}"
        )
    return "\n".join(lines)
