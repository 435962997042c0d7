"""distilner: build NER training data by distilling LLM annotations.

Pipeline pieces: CoNLL corpus tooling (corpus), prompt construction
(prompts), the LLM annotation client with output repair (annotator),
surface-to-span alignment (align), entity-level evaluation (metrics),
data-blending schedules (schedule), and experiment orchestration (harness).
"""

from .align import AlignmentPolicy, FlattenReport, align_record, align_surface_to_spans, flatten, record_to_tags
from .annotator import (
    AnnotationRecord,
    ClientConfig,
    LlmRequest,
    LlmResponse,
    RepairPolicy,
    annotate,
    annotate_many,
    parse_llm_output,
    repair_output,
    send_with_cache,
)
from .corpus import (
    DEFAULT_LABELS,
    ConllParseError,
    EntityMention,
    Sentence,
    TagScheme,
    filter_by_length,
    parse_conll,
    sample_sentences,
    spans_to_tags,
    tags_to_spans,
    write_conll,
)
from .harness import (
    BaselineModel,
    DatasetRef,
    EpochManifest,
    GroupPreset,
    RunResult,
    aggregate_runs,
    baseline_tagger_train,
    compose_epoch,
    compose_run,
    emit_report,
    group_preset,
    run_experiment,
)
from .metrics import EvalReport, MatchCounts, aggregate, evaluate_annotations, match_entities
from .prompts import PromptTemplate, RenderedPrompt, default_templates, render_prompt
from .schedule import LrSpec, ScheduleSpec, emit_curves, lr_at_epoch, paper_curve_family, w0, w1

__version__ = "0.1.0"
