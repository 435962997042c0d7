"""Surface-to-span alignment and flattening of nested/discontinuous mentions.

Alignment matches a surface string as a token subsequence (exact first,
case-insensitive as fallback). Flattening projects an arbitrary mention set
onto a flat, non-overlapping one with a longest-span-wins rule so it can be
emitted as IOB2 tags; the structured record keeps the full mention set, so
flattening never destroys information upstream.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, replace
from typing import IO, Iterable, Sequence, TYPE_CHECKING

from .corpus import DEFAULT_LABELS, EntityMention, Sentence, spans_to_tags

if TYPE_CHECKING:
    from .annotator import AnnotationRecord


@dataclass(frozen=True)
class AlignmentPolicy:
    case_sensitive_first: bool = True
    all_occurrences: bool = False
    flatten_rule: str = "longest-span-wins"
    type_tiebreak: tuple[str, ...] = ("PER", "LOC", "ORG", "MISC")

    def __post_init__(self):
        if self.flatten_rule != "longest-span-wins":
            raise ValueError(f"unsupported flatten rule {self.flatten_rule!r}")
        object.__setattr__(self, "type_tiebreak", tuple(self.type_tiebreak))

    def check_labels(self, labels: Sequence[str]) -> None:
        if sorted(self.type_tiebreak) != sorted(labels):
            raise ValueError(
                f"type_tiebreak {self.type_tiebreak} is not a permutation of labels {tuple(labels)}"
            )


DEFAULT_POLICY = AlignmentPolicy()


def _fold(s: str) -> str:
    return unicodedata.normalize("NFC", s).casefold()


def find_token_matches(
    tokens: Sequence[str], surface: str, casefold: bool = False, start_at: int = 0
) -> list[tuple[int, int]]:
    """All (start, end) positions where the whitespace-split surface equals a
    run of consecutive tokens, end-inclusive."""
    parts = unicodedata.normalize("NFC", surface).split()
    if not parts:
        return []
    if casefold:
        toks = [_fold(t) for t in tokens]
        parts = [p.casefold() for p in parts]
    else:
        toks = [unicodedata.normalize("NFC", t) for t in tokens]
    n = len(parts)
    return [
        (i, i + n - 1)
        for i in range(start_at, len(toks) - n + 1)
        if toks[i : i + n] == parts
    ]


def _occurrences(sentence: Sentence, surface: str, policy: AlignmentPolicy, start_at: int = 0):
    if policy.case_sensitive_first:
        occs = find_token_matches(sentence.tokens, surface, casefold=False, start_at=start_at)
        if occs:
            return occs
    return find_token_matches(sentence.tokens, surface, casefold=True, start_at=start_at)


def align_surface_to_spans(
    sentence: Sentence,
    pairs: Sequence[tuple[str, str | Sequence[str]]],
    policy: AlignmentPolicy = DEFAULT_POLICY,
) -> list[EntityMention]:
    """Resolve (label, surface) pairs to token-span mentions.

    With all_occurrences, every pair emits one mention per non-overlapping
    occurrence chosen greedily left to right; otherwise only the first
    occurrence is used. A pair whose surface is a sequence of fragments
    yields a single discontinuous mention (fragments located left to right,
    each after the previous one); it is omitted if any fragment is missing.
    Unmatched plain surfaces are omitted, never fuzz-matched.
    """
    mentions: list[EntityMention] = []
    for label, surface in pairs:
        if isinstance(surface, (list, tuple)):
            spans: list[tuple[int, int]] = []
            next_start = 0
            for fragment in surface:
                occs = _occurrences(sentence, fragment, policy, start_at=next_start)
                if not occs:
                    spans = []
                    break
                spans.append(occs[0])
                next_start = occs[0][1] + 1
            if spans:
                surfaces = tuple(" ".join(sentence.tokens[s : e + 1]) for s, e in spans)
                mentions.append(EntityMention(label, tuple(spans), surfaces))
            continue
        occs = _occurrences(sentence, surface, policy)
        if not occs:
            continue
        if not policy.all_occurrences:
            occs = occs[:1]
        last_end = -1
        for s, e in occs:
            if s <= last_end:
                continue
            mentions.append(EntityMention(label, ((s, e),), (" ".join(sentence.tokens[s : e + 1]),)))
            last_end = e
    return mentions


@dataclass
class FlattenReport:
    kept: list[EntityMention]
    dropped: list[tuple[EntityMention, str]]


def flatten(mentions: Sequence[EntityMention], policy: AlignmentPolicy = DEFAULT_POLICY) -> FlattenReport:
    """Project a mention set onto a flat, non-overlapping one.

    Discontinuous mentions are first split into per-fragment flat mentions
    that compete independently (their drop reasons are tagged
    "fragment-of-discontinuous"). Candidates sorted by (span length desc,
    start asc, tiebreak index asc) are kept greedily when their tokens are
    disjoint from everything already kept, so the result is independent of
    input order.
    """

    def tiebreak(etype: str) -> int:
        try:
            return policy.type_tiebreak.index(etype)
        except ValueError:
            return len(policy.type_tiebreak)

    candidates: list[tuple[EntityMention, bool]] = []
    for m in mentions:
        if m.is_contiguous:
            candidates.append((m, False))
        else:
            candidates.extend((frag, True) for frag in m.fragments())

    order = sorted(
        candidates,
        key=lambda c: (-(c[0].end - c[0].start + 1), c[0].start, tiebreak(c[0].etype)),
    )
    kept: list[EntityMention] = []
    dropped: list[tuple[EntityMention, str]] = []
    occupied: dict[int, EntityMention] = {}
    for m, is_fragment in order:
        indices = m.token_indices()
        blockers = [occupied[i] for i in sorted(indices) if i in occupied]
        if blockers:
            blocker = blockers[0]
            if blocker.end - blocker.start > m.end - m.start:
                reason = "covered by longer span"
            else:
                reason = "covered by same-length span (type tiebreak)"
            if is_fragment:
                reason += "; fragment-of-discontinuous"
            dropped.append((m, reason))
        else:
            kept.append(m)
            for i in indices:
                occupied[i] = m
    kept.sort(key=lambda m: m.start)
    dropped.sort(key=lambda pair: (pair[0].start, pair[0].etype))
    return FlattenReport(kept=kept, dropped=dropped)


def record_to_tags(
    sentence: Sentence, record: "AnnotationRecord", policy: AlignmentPolicy = DEFAULT_POLICY
) -> tuple[list[str], FlattenReport]:
    """Flatten a record's aligned entities and emit one IOB2 tag per token."""
    report = flatten(record.entities, policy)
    tags = spans_to_tags(report.kept, len(sentence.tokens))
    return tags, report


def align_record(
    sentence: Sentence, record: "AnnotationRecord", policy: AlignmentPolicy = DEFAULT_POLICY
) -> tuple["AnnotationRecord", list[tuple[str, str]]]:
    """Fill record.entities from its raw pairs; returns the aligned record
    and the pairs that found no occurrence."""
    if record.sentence_id != sentence.id:
        raise ValueError(f"record {record.sentence_id} does not belong to sentence {sentence.id}")
    entities = align_surface_to_spans(sentence, record.raw_pairs, policy)
    dropped = [
        (label, surface)
        for label, surface in record.raw_pairs
        if not _occurrences(sentence, surface, policy)
    ]
    return replace(record, entities=entities), dropped


def mention_to_obj(m: EntityMention) -> dict:
    return {"etype": m.etype, "spans": [list(s) for s in m.spans], "surfaces": list(m.surfaces)}


def mention_from_obj(obj: dict) -> EntityMention:
    return EntityMention(obj["etype"], tuple(tuple(s) for s in obj["spans"]), tuple(obj["surfaces"]))


def aligned_records_to_jsonl(items: Iterable[tuple["AnnotationRecord", list[tuple[str, str]]]]) -> str:
    """Aligned-record JSONL: {sentence_id, provenance, entities, dropped, repairs}."""
    lines = []
    for record, dropped in items:
        obj = {
            "sentence_id": record.sentence_id,
            "provenance": record.provenance,
            "entities": [mention_to_obj(m) for m in record.entities],
            "dropped": [{"label": label, "surface": surface} for label, surface in dropped],
            "repairs": list(record.repairs),
        }
        lines.append(json.dumps(obj, ensure_ascii=False))
    return "".join(line + "\n" for line in lines)


def aligned_records_from_jsonl(data: str | IO) -> dict[str, list[EntityMention]]:
    """Read aligned-record JSONL down to a sentence_id -> mentions map."""
    text = data if isinstance(data, str) else data.read()
    out: dict[str, list[EntityMention]] = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        out[obj["sentence_id"]] = [mention_from_obj(e) for e in obj["entities"]]
    return out
