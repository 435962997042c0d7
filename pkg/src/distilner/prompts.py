"""Prompt construction for LLM annotation runs.

Two template modes exist: "standard" (few-shot only) and "cot", which adds
an explicit numbered reasoning procedure the model must walk through before
emitting the output dict. Templates are plain data loaded from JSON files,
so prompt wording can be changed without touching code; the defaults below
are a usable reconstruction, not canonical text.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .corpus import DEFAULT_LABELS, Sentence
from .dicttext import DictTextError, parse_dict_text

MODES = ("standard", "cot")


@dataclass
class Exemplar:
    sentence: str
    output: str
    reasoning: str | None = None


@dataclass
class PromptTemplate:
    mode: str
    role_preamble: str
    entity_definitions: dict[str, str]
    reasoning_steps: list[str] = field(default_factory=list)
    exemplars: list[Exemplar] = field(default_factory=list)
    output_instruction: str = ""

    def validate(self, labels: Sequence[str] = DEFAULT_LABELS) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown prompt mode {self.mode!r}")
        if self.mode == "cot" and not self.reasoning_steps:
            raise ValueError("cot template requires at least one reasoning step")
        if self.mode == "standard" and self.reasoning_steps:
            raise ValueError("standard template must not carry reasoning steps")
        if set(self.entity_definitions) != set(labels):
            raise ValueError(
                f"entity definitions cover {sorted(self.entity_definitions)}, "
                f"configured labels are {sorted(labels)}"
            )
        for ex in self.exemplars:
            try:
                parse_dict_text(ex.output.strip())
            except DictTextError as exc:
                raise ValueError(f"exemplar output does not parse: {ex.output!r} ({exc})") from None


@dataclass(frozen=True)
class RenderedPrompt:
    text: str
    template_hash: str
    target_sentence_id: str


ExemplarSelector = Callable[[Sentence, list[Exemplar]], list[Exemplar]]


def _hash_content(template: PromptTemplate, exemplars: list[Exemplar], sentence_text: str) -> str:
    payload = json.dumps(
        {
            "mode": template.mode,
            "role_preamble": template.role_preamble,
            "entity_definitions": template.entity_definitions,
            "reasoning_steps": template.reasoning_steps,
            "exemplars": [[e.sentence, e.output, e.reasoning] for e in exemplars],
            "output_instruction": template.output_instruction,
            "sentence": sentence_text,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def render_prompt(
    template: PromptTemplate,
    sentence: Sentence,
    labels: Sequence[str] = DEFAULT_LABELS,
    selector: ExemplarSelector | None = None,
) -> RenderedPrompt:
    """Render the annotation prompt for one sentence.

    Section order: role preamble, entity definitions, reasoning steps (cot
    only), exemplars, output instruction, target sentence. The selector hook
    may narrow the exemplar bank per sentence; the default keeps the static
    bank as-is.
    """
    if not sentence.tokens:
        raise ValueError(f"sentence {sentence.id} has no tokens")
    template.validate(labels)
    exemplars = selector(sentence, template.exemplars) if selector else template.exemplars

    parts = [template.role_preamble, "", "Entity types:"]
    for label in labels:
        parts.append(f"- {label}: {template.entity_definitions[label]}")
    if template.mode == "cot":
        parts += ["", "Work through these steps before answering:"]
        for i, step in enumerate(template.reasoning_steps, start=1):
            parts.append(f"{i}. {step}")
    if exemplars:
        parts += ["", "Examples:"]
        for ex in exemplars:
            parts.append(f"Sentence: {ex.sentence}")
            if ex.reasoning:
                parts.append(f"Reasoning: {ex.reasoning}")
            parts.append(f"Output: {ex.output}")
    parts += ["", template.output_instruction, "", f"Sentence: {sentence.text()}", "Output:"]
    return RenderedPrompt(
        text="\n".join(parts),
        template_hash=_hash_content(template, list(exemplars), sentence.text()),
        target_sentence_id=sentence.id,
    )


_DEFAULT_DEFINITIONS = {
    "LOC": "Location - a geographic place such as a city, country, region, river, or landmark.",
    "ORG": "Organization - a company, institution, agency, political body, or sports team.",
    "PER": "Person - the name of a person, typically a given name, surname, or both.",
    "MISC": "Miscellaneous - a named entity outside the other three types, such as a nationality, event, or product.",
}

_DEFAULT_PREAMBLE = (
    "You are an expert annotator for natural language processing tasks. "
    "Read the sentence and decide the type of every named entity it contains."
)

_DEFAULT_OUTPUT_INSTRUCTION = (
    "Give your final answer as a dictionary that maps each entity type to the list of "
    "entity strings found in the sentence, copied exactly as they appear, for example "
    '{"PER": ["Ada Lovelace"], "LOC": ["London"]}. Use {} when the sentence has no named entities. '
    "A dictionary value may also group the fragments of a single split-up entity, and overlapping "
    "entities may be listed under each of their types."
)

_DEFAULT_REASONING_STEPS = [
    "Read the sentence and establish its overall context.",
    "List every candidate named entity the sentence mentions.",
    "Decide the entity type of each candidate from the surrounding context.",
    "Justify each classification briefly, then give the final answer.",
]

_DEFAULT_EXEMPLARS = [
    Exemplar(
        sentence="Maria Sanchez flew from Madrid to Lisbon on Friday .",
        output="{'PER': ['Maria Sanchez'], 'LOC': ['Madrid', 'Lisbon']}",
        reasoning=(
            "The sentence describes a trip. 'Maria Sanchez' names a person, "
            "while 'Madrid' and 'Lisbon' are cities, so they are locations."
        ),
    ),
    Exemplar(
        sentence="She joined the Bank of England in 1994 .",
        output="{'ORG': ['Bank of England'], 'LOC': ['England']}",
        reasoning=(
            "'Bank of England' as a whole names an institution, an organization. "
            "Inside it, 'England' is itself a country, so the nested location is also reported."
        ),
    ),
    Exemplar(
        sentence="The committee rejected the proposal after a long debate .",
        output="{}",
        reasoning="No word in the sentence names a specific person, place, organization, or other named entity.",
    ),
]


def default_templates(labels: Sequence[str] = DEFAULT_LABELS) -> tuple[PromptTemplate, PromptTemplate]:
    """Built-in (standard, cot) templates for the default label set."""
    definitions = {label: _DEFAULT_DEFINITIONS[label] for label in labels}
    standard = PromptTemplate(
        mode="standard",
        role_preamble=_DEFAULT_PREAMBLE,
        entity_definitions=dict(definitions),
        reasoning_steps=[],
        exemplars=[Exemplar(e.sentence, e.output) for e in _DEFAULT_EXEMPLARS],
        output_instruction=_DEFAULT_OUTPUT_INSTRUCTION,
    )
    cot = PromptTemplate(
        mode="cot",
        role_preamble=_DEFAULT_PREAMBLE,
        entity_definitions=dict(definitions),
        reasoning_steps=list(_DEFAULT_REASONING_STEPS),
        exemplars=[Exemplar(e.sentence, e.output, e.reasoning) for e in _DEFAULT_EXEMPLARS],
        output_instruction=_DEFAULT_OUTPUT_INSTRUCTION,
    )
    return standard, cot


def template_to_json(template: PromptTemplate) -> str:
    return json.dumps(
        {
            "mode": template.mode,
            "role_preamble": template.role_preamble,
            "entity_definitions": template.entity_definitions,
            "reasoning_steps": template.reasoning_steps,
            "exemplars": [
                {"sentence": e.sentence, "output": e.output, "reasoning": e.reasoning}
                for e in template.exemplars
            ],
            "output_instruction": template.output_instruction,
        },
        indent=2,
        ensure_ascii=False,
    )


def template_from_json(text: str) -> PromptTemplate:
    obj = json.loads(text)
    return PromptTemplate(
        mode=obj["mode"],
        role_preamble=obj["role_preamble"],
        entity_definitions=dict(obj["entity_definitions"]),
        reasoning_steps=list(obj.get("reasoning_steps", [])),
        exemplars=[
            Exemplar(e["sentence"], e["output"], e.get("reasoning")) for e in obj.get("exemplars", [])
        ],
        output_instruction=obj["output_instruction"],
    )
