"""LLM annotation driver: chat-completion client with on-disk response
cache and bounded retry, plus parsing and repair of the dictionary output.

The parser extracts the LAST balanced output dict from a transcript, since
chain-of-thought reasoning precedes the answer and may itself contain
brace-like text. Repair never rewrites a surface into something absent
from the source sentence: the only permitted rewrite is re-casing to a
token run actually present, and anything else is dropped with a note.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import time
import unicodedata
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Callable, Iterable, Sequence

from . import dicttext
from .align import find_token_matches
from .corpus import DEFAULT_LABELS, EntityMention, Sentence
from .prompts import PromptTemplate, render_prompt

logger = logging.getLogger(__name__)

PROVENANCES = ("gold", "llm-standard", "llm-cot")


class AnnotatorError(RuntimeError):
    pass


class CacheMissError(AnnotatorError):
    pass


class HttpError(AnnotatorError):
    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


@dataclass(frozen=True)
class LlmRequest:
    model_name: str
    prompt_text: str
    temperature: float
    max_output_tokens: int
    request_key: str


def make_request(
    model_name: str, prompt_text: str, temperature: float = 0.0, max_output_tokens: int = 1024
) -> LlmRequest:
    payload = json.dumps([model_name, prompt_text, temperature], ensure_ascii=False)
    key = hashlib.sha256(payload.encode("utf-8")).hexdigest()
    return LlmRequest(model_name, prompt_text, temperature, max_output_tokens, key)


@dataclass(frozen=True)
class LlmResponse:
    raw_text: str
    latency_ms: int
    from_cache: bool
    attempt: int


@dataclass
class AnnotationRecord:
    sentence_id: str
    provenance: str
    raw_pairs: list[tuple[str, str]] = field(default_factory=list)
    entities: list[EntityMention] = field(default_factory=list)
    raw_text: str = ""
    repairs: list[str] = field(default_factory=list)
    status: str = "ok"


@dataclass
class ClientConfig:
    """Endpoint description. Field paths are dotted, with integer segments
    indexing lists, so non-OpenAI-shaped APIs only need different paths."""

    url: str
    model_name: str
    temperature: float = 0.0
    max_output_tokens: int = 1024
    api_key_env: str = "ANNOTATOR_API_KEY"
    timeout_s: float = 60.0
    prompt_path: str = "messages.0.content"
    model_path: str = "model"
    temperature_path: str = "temperature"
    max_tokens_path: str = "max_tokens"
    response_text_path: str = "choices.0.message.content"
    max_attempts: int = 4
    base_delay_s: float = 0.5
    parallelism: int = 1
    cache_only: bool = False


Transport = Callable[[str, dict, dict, float], tuple[int, str]]


def _http_transport(url: str, headers: dict, body: dict, timeout: float) -> tuple[int, str]:
    import requests

    resp = requests.post(url, json=body, headers=headers, timeout=timeout)
    return resp.status_code, resp.text


def set_by_path(obj: dict | list, path: str, value) -> None:
    parts = path.split(".")
    cur = obj
    for i, part in enumerate(parts):
        last = i == len(parts) - 1
        key: int | str = int(part) if part.lstrip("-").isdigit() else part
        if isinstance(key, int):
            if not isinstance(cur, list):
                raise ValueError(f"path {path!r}: expected list at {part!r}")
            while len(cur) <= key:
                cur.append({})
            if last:
                cur[key] = value
            else:
                cur = cur[key]
        else:
            if last:
                cur[key] = value
            else:
                nxt_is_index = parts[i + 1].lstrip("-").isdigit()
                if key not in cur:
                    cur[key] = [] if nxt_is_index else {}
                cur = cur[key]


def get_by_path(obj, path: str):
    cur = obj
    for part in path.split("."):
        if part.lstrip("-").isdigit():
            cur = cur[int(part)]
        else:
            cur = cur[part]
    return cur


def build_body(config: ClientConfig, request: LlmRequest) -> dict:
    body: dict = {}
    set_by_path(body, config.model_path, request.model_name)
    set_by_path(body, config.prompt_path, request.prompt_text)
    set_by_path(body, config.temperature_path, request.temperature)
    set_by_path(body, config.max_tokens_path, request.max_output_tokens)
    return body


def cache_path(cache_dir: str | Path, key: str) -> Path:
    return Path(cache_dir) / key[:2] / key[2:4] / f"{key}.json"


def cache_get(cache_dir: str | Path, key: str) -> dict | None:
    path = cache_path(cache_dir, key)
    if not path.exists():
        return None
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def cache_put(cache_dir: str | Path, key: str, entry: dict) -> None:
    path = cache_path(cache_dir, key)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            json.dump(entry, f, ensure_ascii=False)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def seed_cache(cache_dir: str | Path, request: LlmRequest, raw_text: str, latency_ms: int = 0) -> None:
    """Store a transcript for a request, e.g. to replay canned outputs."""
    cache_put(
        cache_dir,
        request.request_key,
        {
            "request": {
                "model_name": request.model_name,
                "prompt_text": request.prompt_text,
                "temperature": request.temperature,
                "max_output_tokens": request.max_output_tokens,
                "request_key": request.request_key,
            },
            "response": {"raw_text": raw_text, "latency_ms": latency_ms, "attempt": 1},
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        },
    )


def send_with_cache(
    request: LlmRequest,
    cache_dir: str | Path,
    config: ClientConfig,
    transport: Transport | None = None,
    sleeper: Callable[[float], None] = time.sleep,
) -> LlmResponse:
    """Resolve a request from the cache or the endpoint.

    Misses perform the HTTP call with exponential backoff (429, 5xx, and
    transport failures retry; other 4xx do not) and persist atomically.
    In cache_only mode a miss is an error instead.
    """
    cached = cache_get(cache_dir, request.request_key)
    if cached is not None:
        resp = cached["response"]
        return LlmResponse(resp["raw_text"], resp["latency_ms"], True, resp.get("attempt", 1))
    if config.cache_only:
        raise CacheMissError(f"cache miss for request {request.request_key}")

    transport = transport or _http_transport
    headers = {"Content-Type": "application/json"}
    api_key = os.environ.get(config.api_key_env)
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    body = build_body(config, request)

    last_error: Exception | None = None
    for attempt in range(1, config.max_attempts + 1):
        started = time.monotonic()
        try:
            status, text = transport(config.url, headers, body, config.timeout_s)
        except Exception as exc:
            last_error = HttpError(f"transport failure: {exc}")
            logger.warning("attempt %d transport failure: %s", attempt, exc)
        else:
            latency_ms = int((time.monotonic() - started) * 1000)
            if 200 <= status < 300:
                try:
                    raw_text = get_by_path(json.loads(text), config.response_text_path)
                except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
                    raise HttpError(f"cannot extract response text: {exc}", status) from None
                seed_cache(cache_dir, request, raw_text, latency_ms)
                return LlmResponse(raw_text, latency_ms, False, attempt)
            if 400 <= status < 500 and status != 429:
                raise HttpError(f"non-retryable HTTP {status}: {text[:200]}", status)
            last_error = HttpError(f"HTTP {status}: {text[:200]}", status)
            logger.warning("attempt %d got HTTP %d", attempt, status)
        if attempt < config.max_attempts:
            sleeper(config.base_delay_s * 2 ** (attempt - 1))
    raise HttpError(
        f"giving up after {config.max_attempts} attempts: {last_error}",
        getattr(last_error, "status", None),
    )


def parse_llm_output(
    raw_text: str, labels: Sequence[str] = DEFAULT_LABELS
) -> tuple[list[tuple[str, str]], list[str]]:
    """Extract (label, surface) pairs from a transcript.

    Scans for the last balanced {...} region that parses under the output
    grammar. Labels matching a configured label case-insensitively are
    normalized to its canonical casing; unknown labels pass through for
    repair to judge. Duplicate keys merge with a note.
    """
    notes: list[str] = []
    regions = dicttext.balanced_regions(raw_text)
    if not regions:
        if dicttext.has_unbalanced_braces(raw_text):
            return [], ["unbalanced braces in output dict region"]
        return [], ["no output dict found"]

    canonical = {label.casefold(): label for label in labels}
    last_error: dicttext.DictTextError | None = None
    for start, end in reversed(regions):
        try:
            items, merged = dicttext.parse_dict_text(raw_text[start:end])
        except dicttext.DictTextError as exc:
            last_error = exc
            continue
        pairs = []
        for label, surfaces in items:
            label = canonical.get(label.strip().casefold(), label.strip())
            pairs.extend((label, surface) for surface in surfaces)
        notes.extend(f"duplicate label {label!r} merged" for label in merged)
        return pairs, notes
    return [], [f"no parseable output dict: {last_error}"]


_REJECT_PREFIXES = ("no output dict", "unbalanced braces", "no parseable output dict")


@dataclass(frozen=True)
class RepairPolicy:
    labels: tuple[str, ...] = DEFAULT_LABELS
    case_repair: bool = True


def repair_output(
    pairs: Sequence[tuple[str, str]],
    sentence: Sentence,
    policy: RepairPolicy = RepairPolicy(),
) -> tuple[list[tuple[str, str]], list[str]]:
    """Apply the ordered repair rules to parsed pairs.

    1. drop pairs whose label is outside the configured set;
    2. NFC-normalize surfaces;
    3. re-case a surface missing from the sentence onto a case-insensitive
       token-run match when one exists;
    4. drop what still cannot be located (hallucinated surface).
    """
    repaired: list[tuple[str, str]] = []
    notes: list[str] = []
    for label, surface in pairs:
        if label not in policy.labels:
            notes.append(f"dropped pair with unknown label {label!r}: {surface!r}")
            continue
        surface = unicodedata.normalize("NFC", surface)
        if find_token_matches(sentence.tokens, surface):
            repaired.append((label, surface))
            continue
        if policy.case_repair:
            occs = find_token_matches(sentence.tokens, surface, casefold=True)
            if occs:
                s, e = occs[0]
                fixed = " ".join(sentence.tokens[s : e + 1])
                notes.append(f"case repair: {surface!r} -> {fixed!r}")
                repaired.append((label, fixed))
                continue
        notes.append(f"hallucinated surface: {surface!r}")
    return repaired, notes


def annotate(
    sentence: Sentence,
    template: PromptTemplate,
    config: ClientConfig,
    cache_dir: str | Path,
    labels: Sequence[str] = DEFAULT_LABELS,
    repair_policy: RepairPolicy | None = None,
    transport: Transport | None = None,
) -> AnnotationRecord:
    """Annotate one sentence: render, send (with cache), parse, repair."""
    rendered = render_prompt(template, sentence, labels)
    request = make_request(config.model_name, rendered.text, config.temperature, config.max_output_tokens)
    response = send_with_cache(request, cache_dir, config, transport)
    provenance = "llm-standard" if template.mode == "standard" else "llm-cot"

    pairs, parse_notes = parse_llm_output(response.raw_text, labels)
    if not pairs and any(note.startswith(_REJECT_PREFIXES) for note in parse_notes):
        return AnnotationRecord(
            sentence_id=sentence.id,
            provenance=provenance,
            raw_pairs=[],
            entities=[],
            raw_text=response.raw_text,
            repairs=parse_notes,
            status="rejected",
        )

    policy = repair_policy or RepairPolicy(labels=tuple(labels))
    repaired, repair_notes = repair_output(pairs, sentence, policy)
    notes = parse_notes + repair_notes
    return AnnotationRecord(
        sentence_id=sentence.id,
        provenance=provenance,
        raw_pairs=repaired,
        entities=[],
        raw_text=response.raw_text,
        repairs=notes,
        status="repaired" if notes else "ok",
    )


def annotate_many(
    sentences: Sequence[Sentence],
    template: PromptTemplate,
    config: ClientConfig,
    cache_dir: str | Path,
    labels: Sequence[str] = DEFAULT_LABELS,
    repair_policy: RepairPolicy | None = None,
    transport: Transport | None = None,
) -> list[AnnotationRecord]:
    """Annotate sentences, concurrently up to config.parallelism, preserving order."""
    if config.parallelism <= 1:
        return [
            annotate(s, template, config, cache_dir, labels, repair_policy, transport)
            for s in sentences
        ]
    with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
        futures = [
            pool.submit(annotate, s, template, config, cache_dir, labels, repair_policy, transport)
            for s in sentences
        ]
        return [f.result() for f in futures]


def format_pairs(pairs: Sequence[tuple[str, str]]) -> str:
    return dicttext.format_pairs(list(pairs))


def records_to_jsonl(records: Iterable[AnnotationRecord]) -> str:
    """Transcript JSONL for dataset interchange; entity spans live in the
    aligned-record JSONL, not here."""
    lines = []
    for r in records:
        obj = {
            "sentence_id": r.sentence_id,
            "provenance": r.provenance,
            "raw_pairs": [[label, surface] for label, surface in r.raw_pairs],
            "raw_text": r.raw_text,
            "repairs": list(r.repairs),
            "status": r.status,
        }
        lines.append(json.dumps(obj, ensure_ascii=False))
    return "".join(line + "\n" for line in lines)


def records_from_jsonl(data: str | IO) -> list[AnnotationRecord]:
    text = data if isinstance(data, str) else data.read()
    records = []
    for line in text.splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        records.append(
            AnnotationRecord(
                sentence_id=obj["sentence_id"],
                provenance=obj["provenance"],
                raw_pairs=[(p[0], p[1]) for p in obj.get("raw_pairs", [])],
                entities=[],
                raw_text=obj.get("raw_text", ""),
                repairs=list(obj.get("repairs", [])),
                status=obj.get("status", "ok"),
            )
        )
    return records


def gold_record(sentence: Sentence) -> AnnotationRecord:
    """View a sentence's gold tags as an AnnotationRecord."""
    from .corpus import tags_to_spans

    if sentence.gold_tags is None:
        raise ValueError(f"sentence {sentence.id} has no gold tags")
    mentions = tags_to_spans(sentence.gold_tags, sentence.tokens)
    return AnnotationRecord(
        sentence_id=sentence.id,
        provenance="gold",
        raw_pairs=[(m.etype, m.surfaces[0]) for m in mentions],
        entities=mentions,
        raw_text="",
        repairs=[],
        status="ok",
    )
