"""Entity-level evaluation: exact span+type matching, per-type
precision/recall/F1 with support, and micro/macro/weighted aggregates.

Counts stay exact integers; ratios are computed in double precision at the
end. Division by zero yields 0.0 and is flagged on the report rather than
producing NaN.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .corpus import EntityMention


@dataclass
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def support(self) -> int:
        return self.tp + self.fn

    def add(self, other: "Counts") -> None:
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn


@dataclass
class MatchCounts:
    per_type: dict[str, Counts] = field(default_factory=dict)

    def counts_for(self, label: str) -> Counts:
        return self.per_type.setdefault(label, Counts())

    def merge(self, other: "MatchCounts") -> "MatchCounts":
        for label, c in other.per_type.items():
            self.counts_for(label).add(c)
        return self

    def totals(self) -> Counts:
        total = Counts()
        for c in self.per_type.values():
            total.add(c)
        return total


@dataclass(frozen=True)
class TypeMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class AvgMetrics:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class EvalReport:
    per_type: dict[str, TypeMetrics]
    micro: AvgMetrics
    macro: AvgMetrics
    weighted: AvgMetrics
    total_support: int
    zero_divisions: tuple[str, ...] = ()
    extras: dict = field(default_factory=dict)


def match_entities(gold: Sequence[EntityMention], pred: Sequence[EntityMention]) -> MatchCounts:
    """Exact-match counting over one sentence.

    A prediction is a true positive iff a gold mention with identical
    (etype, spans) exists; the matching is one-to-one, so duplicates only
    match as often as they occur in gold.
    """
    counts = MatchCounts()
    gold_keys = Counter(m.key() for m in gold)
    pred_keys = Counter(m.key() for m in pred)
    for key, n_pred in pred_keys.items():
        matched = min(n_pred, gold_keys.get(key, 0))
        c = counts.counts_for(key[0])
        c.tp += matched
        c.fp += n_pred - matched
    for key, n_gold in gold_keys.items():
        matched = min(n_gold, pred_keys.get(key, 0))
        counts.counts_for(key[0]).fn += n_gold - matched
    return counts


def _ratio(num: int, den: int, flag: str, flags: list[str]) -> float:
    if den == 0:
        flags.append(flag)
        return 0.0
    return num / den


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def weighted_average(values: Mapping[str, float], supports: Mapping[str, int]) -> float:
    """Support-weighted mean of per-label metric values."""
    total = sum(supports[label] for label in values)
    if total == 0:
        return 0.0
    return sum(values[label] * supports[label] for label in values) / total


def aggregate(counts: MatchCounts, labels: Sequence[str] | None = None) -> EvalReport:
    """Compute the full report from accumulated counts.

    Zero-support labels contribute P=R=F1=0 to the macro average and weight
    0 to the weighted one, so aggregates stay total.
    """
    flags: list[str] = []
    label_order = list(labels) if labels is not None else sorted(counts.per_type)
    per_type: dict[str, TypeMetrics] = {}
    for label in label_order:
        c = counts.per_type.get(label, Counts())
        p = _ratio(c.tp, c.tp + c.fp, f"precision:{label}", flags)
        r = _ratio(c.tp, c.tp + c.fn, f"recall:{label}", flags)
        per_type[label] = TypeMetrics(p, r, _f1(p, r), c.support)

    total = counts.totals()
    micro_p = _ratio(total.tp, total.tp + total.fp, "precision:micro", flags)
    micro_r = _ratio(total.tp, total.tp + total.fn, "recall:micro", flags)
    micro = AvgMetrics(micro_p, micro_r, _f1(micro_p, micro_r))

    n = len(per_type)
    macro = AvgMetrics(
        sum(t.precision for t in per_type.values()) / n if n else 0.0,
        sum(t.recall for t in per_type.values()) / n if n else 0.0,
        sum(t.f1 for t in per_type.values()) / n if n else 0.0,
    )

    total_support = sum(t.support for t in per_type.values())
    supports = {label: t.support for label, t in per_type.items()}
    if total_support:
        weighted = AvgMetrics(
            weighted_average({label: t.precision for label, t in per_type.items()}, supports),
            weighted_average({label: t.recall for label, t in per_type.items()}, supports),
            weighted_average({label: t.f1 for label, t in per_type.items()}, supports),
        )
    else:
        weighted = AvgMetrics(0.0, 0.0, 0.0)
        flags.append("weighted:total_support")

    return EvalReport(
        per_type=per_type,
        micro=micro,
        macro=macro,
        weighted=weighted,
        total_support=total_support,
        zero_divisions=tuple(flags),
    )


def _flatten_for_scoring(mentions: Iterable[EntityMention]) -> tuple[list[EntityMention], int]:
    flat: list[EntityMention] = []
    discontinuous = 0
    for m in mentions:
        if not m.is_contiguous:
            discontinuous += 1
        flat.extend(m.fragments())
    return flat, discontinuous


def evaluate_annotations(
    gold: Mapping[str, Sequence[EntityMention]],
    pred: Mapping[str, Sequence[EntityMention]],
    labels: Sequence[str] | None = None,
) -> EvalReport:
    """Join gold and predicted mention sets on sentence id and aggregate.

    Sentences missing from pred contribute all their gold mentions as false
    negatives. Discontinuous mentions are scored as their flat fragments and
    counted separately in report.extras.
    """
    unknown = [sid for sid in pred if sid not in gold]
    if unknown:
        raise KeyError(f"prediction sentence id not in gold: {unknown[0]!r}")
    counts = MatchCounts()
    disc_gold = disc_pred = 0
    for sid, gold_mentions in gold.items():
        g_flat, dg = _flatten_for_scoring(gold_mentions)
        p_flat, dp = _flatten_for_scoring(pred.get(sid, ()))
        disc_gold += dg
        disc_pred += dp
        counts.merge(match_entities(g_flat, p_flat))
    report = aggregate(counts, labels)
    report.extras["discontinuous_gold"] = disc_gold
    report.extras["discontinuous_pred"] = disc_pred
    return report


def report_to_dict(report: EvalReport) -> dict:
    return {
        "per_type": {
            label: {"precision": t.precision, "recall": t.recall, "f1": t.f1, "support": t.support}
            for label, t in report.per_type.items()
        },
        "micro": {"precision": report.micro.precision, "recall": report.micro.recall, "f1": report.micro.f1},
        "macro": {"precision": report.macro.precision, "recall": report.macro.recall, "f1": report.macro.f1},
        "weighted": {
            "precision": report.weighted.precision,
            "recall": report.weighted.recall,
            "f1": report.weighted.f1,
        },
        "total_support": report.total_support,
        "zero_divisions": list(report.zero_divisions),
        "extras": dict(report.extras),
    }


def report_from_dict(obj: Mapping) -> EvalReport:
    return EvalReport(
        per_type={
            label: TypeMetrics(t["precision"], t["recall"], t["f1"], t["support"])
            for label, t in obj["per_type"].items()
        },
        micro=AvgMetrics(**obj["micro"]),
        macro=AvgMetrics(**obj["macro"]),
        weighted=AvgMetrics(**obj["weighted"]),
        total_support=obj["total_support"],
        zero_divisions=tuple(obj.get("zero_divisions", ())),
        extras=dict(obj.get("extras", {})),
    )


def report_to_json(report: EvalReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, sort_keys=True)


def report_rows(report: EvalReport) -> list[tuple[str, str, float, int]]:
    """Rows as (scope, metric, value, support), mirroring the published table
    layout: overall averages first, then one block per entity type."""
    rows: list[tuple[str, str, float, int]] = []
    for scope, avg in (("micro avg", report.micro), ("macro avg", report.macro), ("weighted avg", report.weighted)):
        rows.append((scope, "f1-score", avg.f1, report.total_support))
        rows.append((scope, "precision", avg.precision, report.total_support))
        rows.append((scope, "recall", avg.recall, report.total_support))
    for label, t in report.per_type.items():
        rows.append((label, "f1-score", t.f1, t.support))
        rows.append((label, "precision", t.precision, t.support))
        rows.append((label, "recall", t.recall, t.support))
    return rows


def report_to_markdown(report: EvalReport, title: str = "value") -> str:
    lines = ["| Metric | | " + title + " |", "|---|---|---|"]
    for scope, metric, value, support in report_rows(report):
        lines.append(f"| {scope} (support: {support}) | {metric} | {value:.3f} |")
    return "\n".join(lines) + "\n"
