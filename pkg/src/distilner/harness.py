"""Experiment orchestration: per-epoch training manifests from blend
schedules, the A-E group presets, a frequency-baseline trainer, an external
trainer contract, run averaging, and comparison report emission.

Weights map to deterministic subset sizes (round half away from zero of
w * N) instead of per-sample draws, so the pure schedules recover the full
datasets exactly and runs are reproducible byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
import statistics
import subprocess
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import DEFAULT_LABELS, Sentence, parse_conll, sentences_to_jsonl, tags_to_spans, write_conll
from .metrics import AvgMetrics, EvalReport, TypeMetrics, evaluate_annotations, report_from_dict, report_to_dict
from .schedule import LrSpec, ScheduleSpec, lr_at_epoch, w0, w1

TRAINER_HINTS = {"train_batch_size": 4, "eval_batch_size": 2, "max_seq_length": 128}


class TrainerError(RuntimeError):
    pass


@dataclass
class DatasetRef:
    name: str
    sentence_ids: list[str]
    annotation_source: str  # "gold" | "llm"

    def __post_init__(self):
        if len(set(self.sentence_ids)) != len(self.sentence_ids):
            raise ValueError(f"dataset {self.name}: duplicate sentence ids")

    def __len__(self) -> int:
        return len(self.sentence_ids)


def concat_refs(a: DatasetRef, b: DatasetRef, name: str | None = None) -> DatasetRef:
    return DatasetRef(name or f"{a.name}+{b.name}", a.sentence_ids + b.sentence_ids, a.annotation_source)


EMPTY_GOLD = DatasetRef("none", [], "gold")
EMPTY_LLM = DatasetRef("none", [], "llm")


@dataclass
class EpochManifest:
    epoch: int
    w0: float
    w1: float
    distilled_ids: list[str]
    original_ids: list[str]
    learning_rate: float
    boundary: bool = False  # w0 differs from the previous epoch's

    def interleaved_ids(self, seed: int) -> list[str]:
        """Training order for order-sensitive trainers: a seeded shuffle of
        the union of both id lists."""
        ids = self.distilled_ids + self.original_ids
        random.Random(_sub_seed(seed, self.epoch, "interleave")).shuffle(ids)
        return ids


@dataclass
class RunResult:
    run_seed: int
    strategy: ScheduleSpec
    lr: LrSpec
    report: EvalReport


def round_half_away(x: float) -> int:
    return math.floor(x + 0.5)


def _sub_seed(seed: int, t: int, role: str = "epoch") -> int:
    digest = hashlib.sha256(f"{role}:{seed}:{t}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _pick(ids: Sequence[str], count: int, rng: random.Random) -> list[str]:
    if count >= len(ids):
        return list(ids)
    return [ids[i] for i in sorted(rng.sample(range(len(ids)), count))]


def compose_epoch(
    spec: ScheduleSpec,
    t: int,
    distilled: DatasetRef,
    original: DatasetRef,
    lr: LrSpec,
    seed: int,
) -> EpochManifest:
    """Resolve epoch t to concrete id lists and learning rate.

    Sampling uses a sub-seed derived from (seed, t), so any epoch can be
    recomputed independently and runs are deterministic per seed.
    """
    w0_t, w1_t = w0(spec, t), w1(spec, t)
    if w0_t > 0 and not distilled.sentence_ids:
        raise ValueError(f"epoch {t}: distilled weight {w0_t} > 0 but dataset {distilled.name!r} is empty")
    if w1_t > 0 and not original.sentence_ids:
        raise ValueError(f"epoch {t}: original weight {w1_t} > 0 but dataset {original.name!r} is empty")
    rng = random.Random(_sub_seed(seed, t))
    if spec.kind == "all_blend":
        distilled_ids = list(distilled.sentence_ids)
        original_ids = list(original.sentence_ids)
    else:
        distilled_ids = _pick(distilled.sentence_ids, round_half_away(w0_t * len(distilled)), rng)
        original_ids = _pick(original.sentence_ids, round_half_away(w1_t * len(original)), rng)
    boundary = t > 0 and w0(spec, t - 1) != w0_t
    return EpochManifest(
        epoch=t,
        w0=w0_t,
        w1=w1_t,
        distilled_ids=distilled_ids,
        original_ids=original_ids,
        learning_rate=lr_at_epoch(lr, t),
        boundary=boundary,
    )


def compose_run(
    spec: ScheduleSpec,
    distilled: DatasetRef,
    original: DatasetRef,
    lr: LrSpec,
    seed: int,
    T: int | None = None,
) -> list[EpochManifest]:
    if T is not None and T != spec.T:
        raise ValueError(f"T={T} conflicts with spec.T={spec.T}")
    return [compose_epoch(spec, t, distilled, original, lr, seed) for t in range(spec.T)]


@dataclass
class GroupPreset:
    name: str
    spec: ScheduleSpec
    distilled: DatasetRef
    original: DatasetRef


GROUP_DESCRIPTIONS = {
    "A": "pure original data",
    "B": "pure CONLL distilled data",
    "C": "CONLL + BBC distilled data",
    "D": "simple mix with CONLL only",
    "E": "simple mix with CONLL + BBC",
}


def group_preset(
    name: str,
    distilled_conll: DatasetRef,
    original: DatasetRef,
    distilled_bbc: DatasetRef | None = None,
    T: int = 20,
) -> GroupPreset:
    """The five comparison regimens: A pure original, B pure distilled CoNLL,
    C pure distilled CoNLL+BBC, D/E the sequential simple mixes."""
    name = name.upper()
    if name in ("C", "E") and distilled_bbc is None:
        raise ValueError(f"group {name} needs the distilled BBC dataset")
    if name == "A":
        return GroupPreset(name, ScheduleSpec("pure_original", T), EMPTY_LLM, original)
    if name == "B":
        return GroupPreset(name, ScheduleSpec("pure_distilled", T), distilled_conll, EMPTY_GOLD)
    if name == "C":
        return GroupPreset(name, ScheduleSpec("pure_distilled", T), concat_refs(distilled_conll, distilled_bbc), EMPTY_GOLD)
    if name == "D":
        return GroupPreset(name, ScheduleSpec("simple_mix", T), distilled_conll, original)
    if name == "E":
        return GroupPreset(name, ScheduleSpec("simple_mix", T), concat_refs(distilled_conll, distilled_bbc), original)
    raise ValueError(f"unknown group {name!r}; expected A-E")


# --- manifest directory layout -------------------------------------------------

def write_run_dir(
    manifests: Sequence[EpochManifest],
    root: str | Path,
    seed: int,
    spec: ScheduleSpec,
    lr: LrSpec,
) -> Path:
    """Write run-<seed>/epoch-<t>/{distilled.ids, original.ids, meta.json}.

    Content is byte-deterministic for identical inputs (sorted keys, no
    timestamps), which is what manifest determinism tests compare.
    """
    run_dir = Path(root) / f"run-{seed}"
    for m in manifests:
        epoch_dir = run_dir / f"epoch-{m.epoch}"
        epoch_dir.mkdir(parents=True, exist_ok=True)
        (epoch_dir / "distilled.ids").write_text("".join(i + "\n" for i in m.distilled_ids))
        (epoch_dir / "original.ids").write_text("".join(i + "\n" for i in m.original_ids))
        meta = {
            "epoch": m.epoch,
            "w0": m.w0,
            "w1": m.w1,
            "learning_rate": m.learning_rate,
            "boundary": m.boundary,
            "seed": seed,
            "strategy": {"kind": spec.kind, "T": spec.T, "k": spec.k, "n": spec.n},
            "lr": {"base_lr": lr.base_lr, "decay_factor": lr.decay_factor},
            "trainer_hints": TRAINER_HINTS,
        }
        (epoch_dir / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    return run_dir


def read_run_dir(run_dir: str | Path) -> list[EpochManifest]:
    run_dir = Path(run_dir)
    manifests = []
    for epoch_dir in sorted(run_dir.glob("epoch-*"), key=lambda p: int(p.name.split("-")[1])):
        meta = json.loads((epoch_dir / "meta.json").read_text())
        manifests.append(
            EpochManifest(
                epoch=meta["epoch"],
                w0=meta["w0"],
                w1=meta["w1"],
                distilled_ids=(epoch_dir / "distilled.ids").read_text().splitlines(),
                original_ids=(epoch_dir / "original.ids").read_text().splitlines(),
                learning_rate=meta["learning_rate"],
                boundary=meta["boundary"],
            )
        )
    return manifests


# --- trainers --------------------------------------------------------------------

@dataclass
class BaselineModel:
    """Frequency tagger: each token string maps to its most frequent training
    tag; unseen tokens map to O; ties break O-first then lexicographically."""

    tag_by_token: dict[str, str] = field(default_factory=dict)

    def predict(self, tokens: Sequence[str]) -> list[str]:
        return [self.tag_by_token.get(tok, "O") for tok in tokens]


def baseline_tagger_train(
    manifests: Sequence[EpochManifest], store: Mapping[str, Sentence]
) -> BaselineModel:
    counts: dict[str, Counter] = defaultdict(Counter)
    for m in manifests:
        for sid in m.distilled_ids + m.original_ids:
            try:
                sent = store[sid]
            except KeyError:
                raise TrainerError(f"manifest id {sid!r} not found in corpus store") from None
            if sent.gold_tags is None:
                raise TrainerError(f"sentence {sid} has no training tags")
            for tok, tag in zip(sent.tokens, sent.gold_tags):
                counts[tok][tag] += 1
    model = BaselineModel()
    for tok, ctr in counts.items():
        best = max(ctr.values())
        candidates = sorted(tag for tag, c in ctr.items() if c == best)
        model.tag_by_token[tok] = "O" if "O" in candidates else candidates[0]
    return model


def _external_predict(
    command: Sequence[str],
    manifests: Sequence[EpochManifest],
    store: Mapping[str, Sentence],
    test_sentences: Sequence[Sentence],
    workdir: Path,
    seed: int,
    spec: ScheduleSpec,
    lr: LrSpec,
) -> list[list[str]]:
    """Invoke the external trainer contract.

    The command receives: run directory, training corpus JSONL, test corpus
    CoNLL, and the path where it must write IOB2 CoNLL predictions for the
    test set, in that order. Nonzero exit fails with captured output.
    """
    workdir.mkdir(parents=True, exist_ok=True)
    run_dir = write_run_dir(manifests, workdir, seed, spec, lr)
    train_ids = sorted({sid for m in manifests for sid in m.distilled_ids + m.original_ids})
    train_path = workdir / "train.jsonl"
    train_path.write_text(sentences_to_jsonl(store[sid] for sid in train_ids))
    test_path = workdir / "test.conll"
    test_path.write_bytes(write_conll(test_sentences))
    pred_path = workdir / "predictions.conll"

    proc = subprocess.run(
        [*command, str(run_dir), str(train_path), str(test_path), str(pred_path)],
        capture_output=True,
        text=True,
    )
    if proc.returncode != 0:
        raise TrainerError(
            f"external trainer exited {proc.returncode}\nstdout: {proc.stdout}\nstderr: {proc.stderr}"
        )
    pred_sentences = parse_conll(pred_path.read_text(), source="other")
    if len(pred_sentences) != len(test_sentences):
        raise TrainerError(
            f"trainer wrote {len(pred_sentences)} sentences for a test set of {len(test_sentences)}"
        )
    predictions = []
    for test_sent, pred_sent in zip(test_sentences, pred_sentences):
        if len(pred_sent.tokens) != len(test_sent.tokens):
            raise TrainerError(
                f"prediction length mismatch for sentence {test_sent.id}: "
                f"{len(pred_sent.tokens)} tokens vs {len(test_sent.tokens)}"
            )
        predictions.append(pred_sent.gold_tags)
    return predictions


def run_experiment(
    spec: ScheduleSpec,
    distilled: DatasetRef,
    original: DatasetRef,
    lr: LrSpec,
    store: Mapping[str, Sentence],
    test_sentences: Sequence[Sentence],
    trainer: str | Sequence[str] = "baseline",
    iterations: int = 5,
    seeds: Sequence[int] | None = None,
    labels: Sequence[str] = DEFAULT_LABELS,
    workdir: str | Path | None = None,
) -> list[RunResult]:
    """Run the full loop: compose manifests, train, predict, evaluate; one
    RunResult per iteration. trainer is "baseline", "gold-echo", or an
    external command (sequence of argv parts)."""
    if seeds is None:
        seeds = list(range(iterations))
    if len(seeds) != iterations:
        raise ValueError(f"{iterations} iterations but {len(seeds)} seeds")
    gold_map = {s.id: tags_to_spans(s.gold_tags, s.tokens) for s in test_sentences}

    results = []
    for seed in seeds:
        manifests = compose_run(spec, distilled, original, lr, seed)
        if trainer == "baseline":
            model = baseline_tagger_train(manifests, store)
            predicted = [model.predict(s.tokens) for s in test_sentences]
        elif trainer == "gold-echo":
            predicted = [list(s.gold_tags) for s in test_sentences]
        elif isinstance(trainer, str):
            raise ValueError(f"unknown trainer {trainer!r}; use 'baseline', 'gold-echo', or a command")
        else:
            if workdir is None:
                raise ValueError("external trainer requires a workdir")
            predicted = _external_predict(
                trainer, manifests, store, test_sentences, Path(workdir) / f"run-{seed}-work", seed, spec, lr
            )
        pred_map = {
            s.id: tags_to_spans(tags, s.tokens) for s, tags in zip(test_sentences, predicted)
        }
        report = evaluate_annotations(gold_map, pred_map, labels)
        results.append(RunResult(run_seed=seed, strategy=spec, lr=lr, report=report))
    return results


# --- aggregation and reporting ----------------------------------------------------

@dataclass(frozen=True)
class MetricSpread:
    mean: float
    min: float
    max: float
    stddev: float


@dataclass
class RunAggregate:
    strategy: ScheduleSpec
    lr: LrSpec
    n_runs: int
    mean: EvalReport
    dispersion: dict[str, MetricSpread]
    label: str | None = None

    def column_label(self) -> str:
        return self.label or self.strategy.label()

    def lr_label(self) -> str:
        return "no LR decay" if self.lr.decay_factor == 1.0 else "LR decay"


def _spread(values: Sequence[float]) -> MetricSpread:
    return MetricSpread(
        mean=statistics.fmean(values),
        min=min(values),
        max=max(values),
        stddev=statistics.pstdev(values),
    )


def aggregate_runs(results: Sequence[RunResult], label: str | None = None) -> RunAggregate:
    """Average repeated runs of one strategy into a mean report plus
    per-metric min/max/stddev."""
    if not results:
        raise ValueError("cannot aggregate zero results")
    first = results[0]
    for r in results[1:]:
        if r.strategy != first.strategy or r.lr != first.lr:
            raise ValueError(
                f"mixed strategies in one aggregate: {r.strategy.label()} vs {first.strategy.label()}"
            )
    label_names = list(first.report.per_type)
    supports = {lab: first.report.per_type[lab].support for lab in label_names}
    for r in results[1:]:
        if {lab: t.support for lab, t in r.report.per_type.items()} != supports:
            raise ValueError("runs disagree on test-set supports")

    dispersion: dict[str, MetricSpread] = {}
    per_type = {}
    for lab in label_names:
        values = {m: [getattr(r.report.per_type[lab], m) for r in results] for m in ("precision", "recall", "f1")}
        for m, vals in values.items():
            dispersion[f"{lab}.{m}"] = _spread(vals)
        per_type[lab] = TypeMetrics(
            precision=statistics.fmean(values["precision"]),
            recall=statistics.fmean(values["recall"]),
            f1=statistics.fmean(values["f1"]),
            support=supports[lab],
        )
    averages = {}
    for scope in ("micro", "macro", "weighted"):
        values = {m: [getattr(getattr(r.report, scope), m) for r in results] for m in ("precision", "recall", "f1")}
        for m, vals in values.items():
            dispersion[f"{scope}.{m}"] = _spread(vals)
        averages[scope] = AvgMetrics(
            precision=statistics.fmean(values["precision"]),
            recall=statistics.fmean(values["recall"]),
            f1=statistics.fmean(values["f1"]),
        )
    mean_report = EvalReport(
        per_type=per_type,
        micro=averages["micro"],
        macro=averages["macro"],
        weighted=averages["weighted"],
        total_support=first.report.total_support,
    )
    return RunAggregate(
        strategy=first.strategy,
        lr=first.lr,
        n_runs=len(results),
        mean=mean_report,
        dispersion=dispersion,
        label=label,
    )


def aggregate_to_dict(agg: RunAggregate) -> dict:
    return {
        "label": agg.label,
        "strategy": {"kind": agg.strategy.kind, "T": agg.strategy.T, "k": agg.strategy.k, "n": agg.strategy.n},
        "lr": {"base_lr": agg.lr.base_lr, "decay_factor": agg.lr.decay_factor},
        "n_runs": agg.n_runs,
        "mean": report_to_dict(agg.mean),
        "dispersion": {
            name: {"mean": s.mean, "min": s.min, "max": s.max, "stddev": s.stddev}
            for name, s in agg.dispersion.items()
        },
    }


def aggregate_from_dict(obj: Mapping) -> RunAggregate:
    strategy = obj["strategy"]
    lr = obj["lr"]
    return RunAggregate(
        strategy=ScheduleSpec(strategy["kind"], strategy["T"], k=strategy.get("k"), n=strategy.get("n")),
        lr=LrSpec(lr["base_lr"], lr["decay_factor"]),
        n_runs=obj["n_runs"],
        mean=report_from_dict(obj["mean"]),
        dispersion={
            name: MetricSpread(s["mean"], s["min"], s["max"], s["stddev"])
            for name, s in obj.get("dispersion", {}).items()
        },
        label=obj.get("label"),
    )


@dataclass
class ReportTables:
    markdown: str
    csv: str


def emit_report(aggregates: Sequence[RunAggregate], layout: str = "phase2") -> ReportTables:
    """Comparison tables: rows are metric x scope (overall averages and each
    type, with supports); columns are strategy x LR mode; the best value per
    row is flagged in the markdown (CSV keeps raw full-precision values)."""
    if layout not in ("phase2", "phase3"):
        raise ValueError(f"unknown layout {layout!r}")
    if not aggregates:
        raise ValueError("nothing to report")
    first = aggregates[0].mean
    scopes = [("micro avg", None), ("macro avg", None), ("weighted avg", None)]
    scopes += [(lab, lab) for lab in first.per_type]
    metrics = ("f1-score", "precision", "recall")
    attr = {"f1-score": "f1", "precision": "precision", "recall": "recall"}

    def cell(agg: RunAggregate, scope_key: str | None, scope_name: str, metric: str) -> float:
        report = agg.mean
        if scope_key is None:
            group = {"micro avg": report.micro, "macro avg": report.macro, "weighted avg": report.weighted}[scope_name]
        else:
            group = report.per_type[scope_key]
        return getattr(group, attr[metric])

    def support(scope_key: str | None) -> int:
        return first.total_support if scope_key is None else first.per_type[scope_key].support

    headers = [f"{a.column_label()} / {a.lr_label()}" for a in aggregates]

    md = ["| Scope | Metric | " + " | ".join(headers) + " |",
          "|---|---|" + "---|" * len(headers)]
    csv_rows = ["scope,metric,support," + ",".join('"%s"' % h for h in headers)]
    for scope_name, scope_key in scopes:
        for metric in metrics:
            values = [cell(a, scope_key, scope_name, metric) for a in aggregates]
            best = max(values)
            rendered = [
                f"**{v:.3f}**" if v == best else f"{v:.3f}" for v in values
            ]
            md.append(
                f"| {scope_name} (support: {support(scope_key)}) | {metric} | " + " | ".join(rendered) + " |"
            )
            csv_rows.append(
                f"{scope_name},{metric},{support(scope_key)}," + ",".join(repr(v) for v in values)
            )
    return ReportTables(markdown="\n".join(md) + "\n", csv="\n".join(csv_rows) + "\n")


def build_store(*sentence_groups: Sequence[Sentence]) -> dict[str, Sentence]:
    """Merge sentence lists into an id-keyed corpus store."""
    store: dict[str, Sentence] = {}
    for group in sentence_groups:
        for sent in group:
            if sent.id in store:
                raise ValueError(f"duplicate sentence id across corpora: {sent.id}")
            store[sent.id] = sent
    return store
