"""Metrics and reports over screening records: average precision, last
relevant found, recall curves, per-group means, and paired t-tests with
Bonferroni correction.

The t-distribution CDF is computed in-house via a continued-fraction
regularized incomplete beta (no statistics dependency), absolute tolerance
1e-10.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .datastore import Qrels
from .loop import ScreeningRecord, concatenated_ranking

log = logging.getLogger(__name__)

SIGNIFICANCE_LEVEL = 0.05


@dataclass
class TopicMetrics:
    topic_id: str
    ap: float
    last_rel: int | None
    num_relevant: int
    num_screened: int
    recall_curve: list[tuple[int, int]]


def average_precision(
    ranking: Sequence[str], relevant: set[str], total_relevant: int
) -> float:
    """Mean of precision-at-rank over the ranks holding relevant documents,
    divided by total_relevant (which may exceed the relevant docs present
    in the ranking, e.g. under a cutoff)."""
    if total_relevant < 1:
        raise ValueError("total_relevant must be >= 1")
    found = 0
    acc = 0.0
    for i, doc_id in enumerate(ranking, start=1):
        if doc_id in relevant:
            found += 1
            acc += found / i
    if found > total_relevant:
        raise ValueError(
            f"ranking holds {found} relevant docs but total_relevant={total_relevant}"
        )
    return acc / total_relevant


def last_rel(ranking: Sequence[str], relevant: set[str]) -> int | None:
    """1-based rank of the final relevant document, or None if absent."""
    position = None
    for i, doc_id in enumerate(ranking, start=1):
        if doc_id in relevant:
            position = i
    return position


def score_record(record: ScreeningRecord, qrels: Qrels) -> TopicMetrics | None:
    """Metrics over the record's concatenated ranking. The AP denominator is
    every relevant doc in the topic's qrels, screened or not. Returns None
    (with a warning) for topics with zero relevant documents."""
    topic_id = record.config["topic_id"]
    relevant = qrels.relevant_docs(topic_id)
    if not relevant:
        log.warning("topic %s has no relevant documents; skipped", topic_id)
        return None
    ranking = concatenated_ranking(record)
    curve = []
    screened = 0
    found = 0
    for b in record.batches:
        screened += len(b.doc_ids)
        found += sum(1 for d in b.doc_ids if d in relevant)
        curve.append((screened, found))
    return TopicMetrics(
        topic_id=topic_id,
        ap=average_precision(ranking, relevant, total_relevant=len(relevant)),
        last_rel=last_rel(ranking, relevant),
        num_relevant=len(relevant),
        num_screened=len(ranking),
        recall_curve=curve,
    )


# ---------------------------------------------------------------------------
# Statistics

_BETACF_MAX_ITER = 300
_BETACF_EPS = 1e-14
_BETACF_TINY = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the regularized incomplete beta (modified
    Lentz's method)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETACF_TINY:
        d = _BETACF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_TINY:
            d = _BETACF_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETACF_TINY:
            c = _BETACF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_TINY:
            d = _BETACF_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETACF_TINY:
            c = _BETACF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be > 0")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must be in [0,1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf_two_tailed(t: float, df: int) -> float:
    """Two-tailed p-value for Student's t with df degrees of freedom."""
    if df < 1:
        raise ValueError(f"df must be >= 1, got {df}")
    if math.isinf(t):
        return 0.0
    x = df / (df + t * t)
    return regularized_incomplete_beta(df / 2.0, 0.5, x)


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Two-tailed paired t-test. All-zero differences give (0.0, 1.0) by
    convention; identical nonzero differences give an infinite t and p=0."""
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    n = len(a)
    if n < 2:
        raise ValueError(f"need at least 2 pairs, got {n}")
    diffs = [x - y for x, y in zip(a, b)]
    mean = sum(diffs) / n
    var = sum((d - mean) ** 2 for d in diffs) / (n - 1)
    if var == 0.0:
        if mean == 0.0:
            return (0.0, 1.0)
        return (math.copysign(math.inf, mean), 0.0)
    t = mean / math.sqrt(var / n)
    return (t, student_t_sf_two_tailed(t, n - 1))


def bonferroni(p: float, m: int) -> float:
    """min(1, p*m)."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0,1], got {p}")
    return min(1.0, p * m)


@dataclass
class ComparisonResult:
    mean_ap_a: float
    mean_ap_b: float
    t_statistic: float
    p_value: float
    p_adjusted: float
    significant: bool


def compare_groups(
    ap_a: Sequence[float], ap_b: Sequence[float], family_size: int
) -> ComparisonResult:
    t, p = paired_t_test(ap_a, ap_b)
    p_adj = bonferroni(p, family_size)
    return ComparisonResult(
        mean_ap_a=sum(ap_a) / len(ap_a),
        mean_ap_b=sum(ap_b) / len(ap_b),
        t_statistic=t,
        p_value=p,
        p_adjusted=p_adj,
        significant=p_adj < SIGNIFICANCE_LEVEL,
    )


# ---------------------------------------------------------------------------
# Reports


@dataclass(frozen=True)
class GroupKey:
    collection: str
    strategy: str
    weights: tuple[float, float, float] | None
    k: int

    def label(self) -> str:
        w = ",".join(_fmt_num(v) for v in self.weights) if self.weights else ""
        return f"{self.strategy}|{w}|k={self.k}"


def _fmt_num(v: float) -> str:
    return format(v, "g")


def group_key(record: ScreeningRecord) -> GroupKey:
    cfg = record.config
    weights = tuple(cfg["weights"]) if cfg.get("weights") else None
    return GroupKey(
        collection=cfg.get("collection", "default"),
        strategy=cfg["strategy"],
        weights=weights,
        k=cfg["k"],
    )


@dataclass
class ReportRow:
    key: GroupKey
    num_topics: int
    mean_ap: float
    mean_last_rel: float | None
    p_value: float | None
    p_adjusted: float | None
    significant: bool


@dataclass
class Report:
    rows: list[ReportRow]
    baseline: GroupKey | None

    def to_csv(self) -> str:
        lines = [
            "collection,strategy,alpha,beta,gamma,k,num_topics,"
            "mean_ap,mean_last_rel,p_value,p_adjusted,significant"
        ]
        for r in self.rows:
            w = r.key.weights or ("", "", "")
            lines.append(
                ",".join(
                    [
                        r.key.collection,
                        r.key.strategy,
                        *(_fmt_num(v) if v != "" else "" for v in w),
                        str(r.key.k),
                        str(r.num_topics),
                        f"{r.mean_ap:.6f}",
                        f"{r.mean_last_rel:.2f}" if r.mean_last_rel is not None else "",
                        f"{r.p_value:.6g}" if r.p_value is not None else "",
                        f"{r.p_adjusted:.6g}" if r.p_adjusted is not None else "",
                        str(r.significant).lower(),
                    ]
                )
            )
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        header = [
            "collection",
            "strategy",
            "(a,b,g)",
            "k",
            "topics",
            "mean AP",
            "mean LastRel",
            "p(adj)",
            "sig",
        ]
        table = [header]
        for r in self.rows:
            w = (
                "(" + ",".join(_fmt_num(v) for v in r.key.weights) + ")"
                if r.key.weights
                else "-"
            )
            table.append(
                [
                    r.key.collection,
                    r.key.strategy,
                    w,
                    str(r.key.k),
                    str(r.num_topics),
                    f"{r.mean_ap:.4f}",
                    f"{r.mean_last_rel:.1f}" if r.mean_last_rel is not None else "-",
                    f"{r.p_adjusted:.4f}" if r.p_adjusted is not None else "-",
                    "*" if r.significant else "",
                ]
            )
        widths = [max(len(row[i]) for row in table) for i in range(len(header))]
        lines = []
        for i, row in enumerate(table):
            lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
            if i == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"

    def to_grid_csv(self) -> str:
        """Long-format sweep rows (one per group cell) for external plotting."""
        lines = ["collection,strategy,alpha,beta,gamma,k,mean_ap,mean_last_rel"]
        for r in self.rows:
            w = r.key.weights or ("", "", "")
            lines.append(
                ",".join(
                    [
                        r.key.collection,
                        r.key.strategy,
                        *(_fmt_num(v) if v != "" else "" for v in w),
                        str(r.key.k),
                        f"{r.mean_ap:.6f}",
                        f"{r.mean_last_rel:.2f}" if r.mean_last_rel is not None else "",
                    ]
                )
            )
        return "\n".join(lines) + "\n"


def _resolve_baseline(keys: list[GroupKey], baseline: str | None) -> GroupKey | None:
    if baseline is None:
        return None
    exact = [k for k in keys if k.label() == baseline]
    if len(exact) == 1:
        return exact[0]
    by_strategy = [k for k in keys if k.strategy == baseline]
    if len(by_strategy) == 1:
        return by_strategy[0]
    if len(by_strategy) > 1:
        raise ValueError(
            f"baseline {baseline!r} is ambiguous; use a full group label "
            f"like {by_strategy[0].label()!r}"
        )
    raise ValueError(f"baseline {baseline!r} matches no group")


def build_report(
    records: Iterable[ScreeningRecord], qrels: Qrels, baseline: str | None = None
) -> Report:
    """Group records by (collection, strategy, weights, k), compute per-group
    means, and mark significance vs the named baseline group.

    Topics with zero relevant documents are excluded uniformly. Every group
    within a collection must cover the same topic set.
    """
    grouped: dict[GroupKey, dict[str, TopicMetrics]] = {}
    for record in records:
        key = group_key(record)
        metrics = score_record(record, qrels)
        if metrics is None:
            continue
        topic_map = grouped.setdefault(key, {})
        if metrics.topic_id in topic_map:
            raise ValueError(f"duplicate record for group {key.label()} topic {metrics.topic_id}")
        topic_map[metrics.topic_id] = metrics
    if not grouped:
        raise ValueError("no scorable records")

    keys = sorted(grouped, key=lambda k: (k.collection, k.label()))
    # per collection, all groups must share one topic set
    by_collection: dict[str, set[str] | None] = {}
    for key in keys:
        topics = set(grouped[key])
        ref = by_collection.setdefault(key.collection, topics)
        if topics != ref:
            raise ValueError(
                f"group {key.label()} topic set differs from other groups "
                f"in collection {key.collection!r}"
            )

    baseline_key = _resolve_baseline(keys, baseline)
    rows: list[ReportRow] = []
    for key in keys:
        metrics = grouped[key]
        topics = sorted(metrics)
        aps = [metrics[t].ap for t in topics]
        last_rels = [metrics[t].last_rel for t in topics if metrics[t].last_rel is not None]
        mean_last = sum(last_rels) / len(last_rels) if last_rels else None
        p_value = p_adjusted = None
        significant = False
        if (
            baseline_key is not None
            and key != baseline_key
            and key.collection == baseline_key.collection
            and len(topics) >= 2
        ):
            family = sum(
                1
                for k2 in keys
                if k2.collection == baseline_key.collection and k2 != baseline_key
            )
            base_metrics = grouped[baseline_key]
            base_aps = [base_metrics[t].ap for t in topics]
            cmp = compare_groups(aps, base_aps, family)
            p_value, p_adjusted, significant = cmp.p_value, cmp.p_adjusted, cmp.significant
        elif baseline_key is not None and key == baseline_key:
            p_value, p_adjusted = 1.0, 1.0
        rows.append(
            ReportRow(
                key=key,
                num_topics=len(topics),
                mean_ap=sum(aps) / len(aps),
                mean_last_rel=mean_last,
                p_value=p_value,
                p_adjusted=p_adjusted,
                significant=significant,
            )
        )
    return Report(rows=rows, baseline=baseline_key)
