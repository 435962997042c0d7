"""CoNLL 2003 corpus tooling.

Parsing and writing of token-per-line NER files, IOB1/IOB2 tag scheme
conversion, tag/span conversion, seeded sampling, length filtering, and the
JSONL sidecar format. The internal canonical tag scheme is IOB2; IOB1 input
is converted at the parse boundary.
"""

from __future__ import annotations

import json
import logging
import random
import unicodedata
from dataclasses import dataclass
from enum import Enum
from typing import IO, Iterable, Sequence

logger = logging.getLogger(__name__)

DEFAULT_LABELS: tuple[str, ...] = ("LOC", "ORG", "PER", "MISC")

SOURCES = ("conll-train", "conll-test", "bbc", "other")

_DOCSTART = "-DOCSTART-"


class TagScheme(Enum):
    IOB1 = "IOB1"
    IOB2 = "IOB2"


class ConllParseError(ValueError):
    def __init__(self, message: str, line_num: int | None = None):
        if line_num is not None:
            message = f"line {line_num}: {message}"
        super().__init__(message)
        self.line_num = line_num


@dataclass(frozen=True)
class EntityMention:
    """A typed entity occurrence as token spans (end-inclusive).

    One span means a contiguous mention; several spans mean a discontinuous
    one. Nesting is never represented inside a single mention; overlapping
    mentions simply coexist in a record's entity list.
    """

    etype: str
    spans: tuple[tuple[int, int], ...]
    surfaces: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "spans", tuple((int(s), int(e)) for s, e in self.spans))
        object.__setattr__(self, "surfaces", tuple(str(s) for s in self.surfaces))
        if not self.spans:
            raise ValueError("mention must have at least one span")
        if len(self.surfaces) != len(self.spans):
            raise ValueError("mention needs exactly one surface per span")
        prev_end = -1
        for start, end in self.spans:
            if start < 0 or start > end:
                raise ValueError(f"bad span ({start}, {end})")
            if start <= prev_end:
                raise ValueError(f"spans must be sorted and non-overlapping: {self.spans}")
            prev_end = end

    @property
    def is_contiguous(self) -> bool:
        return len(self.spans) == 1

    @property
    def start(self) -> int:
        return self.spans[0][0]

    @property
    def end(self) -> int:
        return self.spans[-1][1]

    def token_indices(self) -> frozenset[int]:
        return frozenset(i for s, e in self.spans for i in range(s, e + 1))

    def key(self) -> tuple[str, tuple[tuple[int, int], ...]]:
        return (self.etype, self.spans)

    def fragments(self) -> list["EntityMention"]:
        """Split into one flat mention per span (identity for contiguous ones)."""
        if self.is_contiguous:
            return [self]
        return [EntityMention(self.etype, (span,), (surface,))
                for span, surface in zip(self.spans, self.surfaces)]


@dataclass
class Sentence:
    """A pre-tokenized sentence with optional gold tags and provenance.

    extra_columns preserves any CoNLL columns between the token and the NER
    tag (POS, chunk, ...) opaquely so round trips are byte-identical.
    """

    id: str
    tokens: list[str]
    gold_tags: list[str] | None = None
    source: str = "other"
    doc_id: str | None = None
    extra_columns: list[list[str]] | None = None

    def text(self) -> str:
        return " ".join(self.tokens)

    def validate(self, labels: Sequence[str] = DEFAULT_LABELS) -> None:
        if not self.tokens:
            raise ValueError(f"sentence {self.id}: empty token list")
        if any(not tok for tok in self.tokens):
            raise ValueError(f"sentence {self.id}: empty token string")
        if self.gold_tags is not None:
            if len(self.gold_tags) != len(self.tokens):
                raise ValueError(
                    f"sentence {self.id}: {len(self.gold_tags)} tags for {len(self.tokens)} tokens"
                )
            for tag in self.gold_tags:
                validate_tag(tag, labels)


def validate_tag(tag: str, labels: Sequence[str] = DEFAULT_LABELS) -> None:
    """Check a tag against the grammar O | (B|I)-<TYPE> with TYPE in labels."""
    if tag == "O":
        return
    if len(tag) > 2 and tag[0] in "BI" and tag[1] == "-" and tag[2:] in labels:
        return
    raise ConllParseError(f"tag {tag!r} outside grammar O|(B|I)-TYPE with TYPE in {list(labels)}")


def _tag_type(tag: str) -> str | None:
    return tag[2:] if tag != "O" else None


def iob1_to_iob2(tags: Sequence[str]) -> list[str]:
    out = []
    prev_type = None
    for tag in tags:
        if tag.startswith("I-") and _tag_type(tag) != prev_type:
            out.append("B-" + tag[2:])
        else:
            out.append(tag)
        prev_type = _tag_type(tag)
    return out


def iob2_to_iob1(tags: Sequence[str]) -> list[str]:
    # B- survives only where it separates adjacent same-type entities.
    out = []
    prev_type = None
    for tag in tags:
        if tag.startswith("B-") and _tag_type(tag) != prev_type:
            out.append("I-" + tag[2:])
        else:
            out.append(tag)
        prev_type = _tag_type(tag)
    return out


def to_internal(tags: Sequence[str], scheme: TagScheme) -> list[str]:
    return iob1_to_iob2(tags) if scheme is TagScheme.IOB1 else list(tags)


def from_internal(tags: Sequence[str], scheme: TagScheme) -> list[str]:
    return iob2_to_iob1(tags) if scheme is TagScheme.IOB1 else list(tags)


def _decode(data) -> str:
    if isinstance(data, bytes):
        return data.decode("utf-8")
    if isinstance(data, str):
        return data
    text = data.read()
    return text.decode("utf-8") if isinstance(text, bytes) else text


def parse_conll(
    data: str | bytes | IO,
    scheme: TagScheme = TagScheme.IOB2,
    *,
    source: str = "other",
    labels: Sequence[str] = DEFAULT_LABELS,
) -> list[Sentence]:
    """Parse CoNLL text: token first column, NER tag last, blank-line separated.

    -DOCSTART- lines open a new document and are consumed, not emitted.
    Tags are normalized to IOB2 internally regardless of the input scheme.
    Sentence ids are assigned as "<source>-<5-digit ordinal>" in file order.
    """
    text = _decode(data)
    sentences: list[Sentence] = []
    rows: list[tuple[str, list[str], str, int]] = []
    doc_count = 0
    doc_id: str | None = None
    prev_blank = False

    def flush() -> None:
        nonlocal rows
        if not rows:
            return
        for _, _, tag, row_line in rows:
            try:
                validate_tag(tag, labels)
            except ConllParseError as exc:
                raise ConllParseError(str(exc), row_line) from None
        sent = Sentence(
            id=f"{source}-{len(sentences):05d}",
            tokens=[r[0] for r in rows],
            gold_tags=to_internal([r[2] for r in rows], scheme),
            source=source,
            doc_id=doc_id,
            extra_columns=[r[1] for r in rows],
        )
        sent.validate(labels)
        sentences.append(sent)
        rows = []

    for line_num, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line:
            if rows:
                flush()
            elif prev_blank:
                logger.warning("line %d: empty sentence skipped", line_num)
            prev_blank = True
            continue
        prev_blank = False
        cols = line.split()
        if cols[0] == _DOCSTART:
            flush()
            doc_count += 1
            doc_id = f"{source}-doc{doc_count:04d}"
            continue
        if len(cols) < 2:
            raise ConllParseError(f"expected at least 2 columns, got {len(cols)}: {line!r}", line_num)
        token = unicodedata.normalize("NFC", cols[0])
        rows.append((token, cols[1:-1], cols[-1], line_num))
    flush()
    return sentences


def write_conll(sentences: Iterable[Sentence], scheme: TagScheme = TagScheme.IOB2) -> bytes:
    """Serialize sentences: one token per line, single space separator, blank
    line terminating every sentence. Inverse of parse_conll on its output."""
    blocks = []
    for sent in sentences:
        if sent.gold_tags is None:
            raise ValueError(f"sentence {sent.id} has no tags; cannot write CoNLL")
        tags = from_internal(sent.gold_tags, scheme)
        extras = sent.extra_columns or [[] for _ in sent.tokens]
        if len(extras) != len(sent.tokens):
            raise ValueError(f"sentence {sent.id}: extra_columns length mismatch")
        lines = [" ".join([tok, *mid, tag]) for tok, mid, tag in zip(sent.tokens, extras, tags)]
        blocks.append("\n".join(lines) + "\n\n")
    return "".join(blocks).encode("utf-8")


def tags_to_spans(tags: Sequence[str], tokens: Sequence[str] | None = None) -> list[EntityMention]:
    """Extract maximal B-started runs from an IOB2 sequence as flat mentions.

    Surfaces are filled from tokens when given, else left empty. An orphan
    I- tag opens a mention (lenient handling; validation lives upstream).
    """
    mentions: list[EntityMention] = []
    start = None
    cur_type = None

    def close(end: int) -> None:
        surface = " ".join(tokens[start : end + 1]) if tokens is not None else ""
        mentions.append(EntityMention(cur_type, ((start, end),), (surface,)))

    for i, tag in enumerate(tags):
        if tag == "O":
            if cur_type is not None:
                close(i - 1)
                cur_type, start = None, None
        elif tag.startswith("B-") or cur_type != _tag_type(tag):
            if cur_type is not None:
                close(i - 1)
            cur_type, start = _tag_type(tag), i
    if cur_type is not None:
        close(len(tags) - 1)
    return mentions


def spans_to_tags(mentions: Sequence[EntityMention], length: int) -> list[str]:
    """Inverse of tags_to_spans for flat, non-overlapping mentions."""
    tags = ["O"] * length
    owner: dict[int, EntityMention] = {}
    for m in mentions:
        if not m.is_contiguous:
            raise ValueError(f"discontinuous mention {m.key()}; flatten before tagging")
        start, end = m.spans[0]
        if end >= length:
            raise ValueError(f"span ({start}, {end}) exceeds sentence length {length}")
        for i in range(start, end + 1):
            if i in owner:
                raise ValueError(f"overlapping mentions: {owner[i].key()} and {m.key()}")
            owner[i] = m
        tags[start] = "B-" + m.etype
        for i in range(start + 1, end + 1):
            tags[i] = "I-" + m.etype
    return tags


def sample_sentences(sentences: Sequence[Sentence], n: int, seed: int) -> list[Sentence]:
    """Uniform sample without replacement; deterministic per seed and
    order-preserving with respect to the input."""
    if n > len(sentences):
        raise ValueError(f"cannot sample {n} from population of {len(sentences)}")
    rng = random.Random(seed)
    picked = sorted(rng.sample(range(len(sentences)), n))
    return [sentences[i] for i in picked]


def filter_by_length(sentences: Sequence[Sentence], min_tokens: int) -> list[Sentence]:
    if min_tokens < 0:
        raise ValueError("min_tokens must be >= 0")
    return [s for s in sentences if len(s.tokens) >= min_tokens]


def sentences_to_jsonl(sentences: Iterable[Sentence]) -> str:
    """Serialize to the JSONL sidecar: {id, source, tokens, gold_tags?, doc_id?}."""
    lines = []
    for s in sentences:
        obj: dict = {"id": s.id, "source": s.source, "tokens": s.tokens}
        if s.gold_tags is not None:
            obj["gold_tags"] = s.gold_tags
        if s.doc_id is not None:
            obj["doc_id"] = s.doc_id
        lines.append(json.dumps(obj, ensure_ascii=False))
    return "".join(line + "\n" for line in lines)


def sentences_from_jsonl(data: str | bytes | IO, labels: Sequence[str] = DEFAULT_LABELS) -> list[Sentence]:
    sentences = []
    for line_num, line in enumerate(_decode(data).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ConllParseError(f"bad JSON: {exc}", line_num) from None
        sent = Sentence(
            id=obj["id"],
            tokens=[unicodedata.normalize("NFC", t) for t in obj["tokens"]],
            gold_tags=obj.get("gold_tags"),
            source=obj.get("source", "other"),
            doc_id=obj.get("doc_id"),
        )
        sent.validate(labels)
        sentences.append(sent)
    return sentences
