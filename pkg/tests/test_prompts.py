import pytest

from distilner.corpus import Sentence
from distilner.prompts import (
    Exemplar,
    PromptTemplate,
    default_templates,
    render_prompt,
    template_from_json,
    template_to_json,
)


@pytest.fixture()
def sentence():
    return Sentence("conll-train-00000", ["EU", "rejects", "German", "call", "."])


class TestDefaults:
    def test_cot_has_four_reasoning_steps(self):
        _, cot = default_templates()
        assert cot.mode == "cot"
        assert len(cot.reasoning_steps) == 4

    def test_standard_has_zero_steps(self):
        standard, _ = default_templates()
        assert standard.mode == "standard"
        assert standard.reasoning_steps == []

    def test_default_label_set(self):
        standard, cot = default_templates()
        assert set(standard.entity_definitions) == {"LOC", "ORG", "PER", "MISC"}
        assert set(cot.entity_definitions) == {"LOC", "ORG", "PER", "MISC"}

    def test_defaults_validate(self):
        for template in default_templates():
            template.validate()


class TestRender:
    def test_cot_contains_steps_and_target(self, sentence):
        _, cot = default_templates()
        rendered = render_prompt(cot, sentence)
        for step in cot.reasoning_steps:
            assert step in rendered.text
        assert "EU rejects German call ." in rendered.text
        assert rendered.target_sentence_id == sentence.id

    def test_section_order(self, sentence):
        _, cot = default_templates()
        text = render_prompt(cot, sentence).text
        positions = [
            text.index(cot.role_preamble),
            text.index("Entity types:"),
            text.index(cot.reasoning_steps[0]),
            text.index("Examples:"),
            text.index(cot.output_instruction),
            text.rindex("Sentence: EU rejects German call ."),
        ]
        assert positions == sorted(positions)

    def test_standard_without_exemplars_has_no_example_block(self, sentence):
        standard, _ = default_templates()
        standard.exemplars = []
        text = render_prompt(standard, sentence).text
        assert "Examples:" not in text

    def test_every_label_appears_in_text(self, sentence):
        for template in default_templates():
            text = render_prompt(template, sentence).text
            for label in ("LOC", "ORG", "PER", "MISC"):
                assert label in text

    def test_empty_sentence_rejected(self):
        _, cot = default_templates()
        with pytest.raises(ValueError, match="no tokens"):
            render_prompt(cot, Sentence("x-0", []))

    def test_label_set_mismatch(self, sentence):
        _, cot = default_templates()
        with pytest.raises(ValueError, match="labels"):
            render_prompt(cot, sentence, labels=("LOC", "ORG", "PER", "MISC", "DATE"))

    def test_selector_hook(self, sentence):
        _, cot = default_templates()
        rendered = render_prompt(cot, sentence, selector=lambda s, bank: bank[:1])
        assert cot.exemplars[0].sentence in rendered.text
        assert cot.exemplars[1].sentence not in rendered.text


class TestHash:
    def test_deterministic(self, sentence):
        _, cot = default_templates()
        assert render_prompt(cot, sentence).template_hash == render_prompt(cot, sentence).template_hash

    def test_changes_with_template_field(self, sentence):
        _, cot = default_templates()
        base = render_prompt(cot, sentence).template_hash
        cot.role_preamble += " Be careful."
        assert render_prompt(cot, sentence).template_hash != base

    def test_changes_with_sentence(self):
        _, cot = default_templates()
        a = render_prompt(cot, Sentence("x-0", ["Alpha"]))
        b = render_prompt(cot, Sentence("x-1", ["Beta"]))
        assert a.template_hash != b.template_hash

    def test_same_tokens_same_hash(self):
        _, cot = default_templates()
        a = render_prompt(cot, Sentence("x-0", ["Alpha"]))
        b = render_prompt(cot, Sentence("x-9", ["Alpha"]))
        assert a.template_hash == b.template_hash


class TestValidation:
    def test_cot_requires_steps(self):
        _, cot = default_templates()
        cot.reasoning_steps = []
        with pytest.raises(ValueError, match="reasoning step"):
            cot.validate()

    def test_standard_rejects_steps(self):
        standard, _ = default_templates()
        standard.reasoning_steps = ["think"]
        with pytest.raises(ValueError, match="must not carry"):
            standard.validate()

    def test_exemplar_output_must_parse(self):
        standard, _ = default_templates()
        standard.exemplars = [Exemplar("hi there .", "not a dict")]
        with pytest.raises(ValueError, match="does not parse"):
            standard.validate()

    def test_bad_mode(self):
        standard, _ = default_templates()
        standard.mode = "zero-shot"
        with pytest.raises(ValueError, match="mode"):
            standard.validate()


class TestTemplateFiles:
    def test_json_round_trip(self):
        _, cot = default_templates()
        back = template_from_json(template_to_json(cot))
        assert back == cot

    def test_file_fields_verbatim(self):
        import json

        standard, _ = default_templates()
        obj = json.loads(template_to_json(standard))
        assert set(obj) == {
            "mode",
            "role_preamble",
            "entity_definitions",
            "reasoning_steps",
            "exemplars",
            "output_instruction",
        }
