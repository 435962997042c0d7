"""Command-line interface.

Subcommands: sample, annotate, align, evaluate, schedule, compose, run,
report. A JSON or TOML config file (--config) mirrors the library's spec
objects; explicit flags win over config values, which win over defaults.
"""

from __future__ import annotations

import argparse
import json
import shlex
import sys
from pathlib import Path

from . import align as align_mod
from . import annotator as annot_mod
from . import harness, metrics, prompts, schedule
from .corpus import (
    DEFAULT_LABELS,
    Sentence,
    TagScheme,
    filter_by_length,
    parse_conll,
    sample_sentences,
    sentences_from_jsonl,
    sentences_to_jsonl,
    tags_to_spans,
    write_conll,
)


def load_config(path: str) -> dict:
    p = Path(path)
    if p.suffix.lower() == ".toml":
        try:
            import tomllib
        except ImportError:
            import tomli as tomllib
        return tomllib.loads(p.read_text())
    return json.loads(p.read_text())


def cfg_get(config: dict, *keys, default=None):
    cur = config
    for key in keys:
        if not isinstance(cur, dict) or key not in cur:
            return default
        cur = cur[key]
    return cur


def _read_sentences(path: str, source: str = "other", scheme: str = "IOB2", labels=DEFAULT_LABELS) -> list[Sentence]:
    p = Path(path)
    if p.suffix == ".jsonl":
        return sentences_from_jsonl(p.read_text(), labels)
    return parse_conll(p.read_bytes(), TagScheme[scheme], source=source, labels=labels)


def _write_sentences(sentences: list[Sentence], path: str, scheme: str = "IOB2") -> None:
    p = Path(path)
    if p.suffix == ".jsonl":
        p.write_text(sentences_to_jsonl(sentences))
    else:
        p.write_bytes(write_conll(sentences, TagScheme[scheme]))


def _labels(args, config) -> tuple[str, ...]:
    if getattr(args, "labels", None):
        return tuple(args.labels.split(","))
    return tuple(cfg_get(config, "labels", default=DEFAULT_LABELS))


def cmd_sample(args, config) -> int:
    sentences = _read_sentences(args.infile, args.source, args.scheme)
    if args.min_tokens:
        sentences = filter_by_length(sentences, args.min_tokens)
    if args.exclude_ids:
        excluded = set(Path(args.exclude_ids).read_text().split())
        sentences = [s for s in sentences if s.id not in excluded]
    if args.n is not None:
        seed = args.seed if args.seed is not None else cfg_get(config, "seed", default=0)
        sentences = sample_sentences(sentences, args.n, seed)
    _write_sentences(sentences, args.out, args.scheme)
    print(f"wrote {len(sentences)} sentences to {args.out}")
    return 0


def cmd_annotate(args, config) -> int:
    labels = _labels(args, config)
    sentences = _read_sentences(args.infile, labels=labels)
    if args.template:
        template = prompts.template_from_json(Path(args.template).read_text())
    else:
        standard, cot = prompts.default_templates(labels)
        template = standard if args.mode == "standard" else cot
    if template.mode != args.mode:
        raise SystemExit(f"template mode {template.mode!r} does not match --mode {args.mode!r}")
    client = annot_mod.ClientConfig(
        url=args.url or cfg_get(config, "client", "url", default=""),
        model_name=args.model or cfg_get(config, "client", "model_name", default="gpt-4"),
        temperature=cfg_get(config, "client", "temperature", default=0.0),
        max_output_tokens=cfg_get(config, "client", "max_output_tokens", default=1024),
        parallelism=args.parallelism,
        cache_only=args.cache_only,
    )
    if not client.url and not client.cache_only:
        raise SystemExit("either --url (or client.url in config) or --cache-only is required")
    records = annot_mod.annotate_many(sentences, template, client, args.cache_dir, labels)
    Path(args.out).write_text(annot_mod.records_to_jsonl(records))
    n_rejected = sum(1 for r in records if r.status == "rejected")
    print(f"annotated {len(records)} sentences ({n_rejected} rejected) -> {args.out}")
    return 0


def _alignment_policy(args, config, labels) -> align_mod.AlignmentPolicy:
    tiebreak = cfg_get(config, "alignment", "type_tiebreak", default=None)
    if getattr(args, "tiebreak", None):
        tiebreak = args.tiebreak.split(",")
    if tiebreak is None:
        default = align_mod.AlignmentPolicy().type_tiebreak
        tiebreak = default if sorted(default) == sorted(labels) else tuple(labels)
    policy = align_mod.AlignmentPolicy(
        case_sensitive_first=cfg_get(config, "alignment", "case_sensitive_first", default=True),
        all_occurrences=getattr(args, "all_occurrences", False)
        or cfg_get(config, "alignment", "all_occurrences", default=False),
        type_tiebreak=tuple(tiebreak),
    )
    policy.check_labels(labels)
    return policy


def cmd_align(args, config) -> int:
    labels = _labels(args, config)
    sentences = {s.id: s for s in _read_sentences(args.sentences, labels=labels)}
    records = annot_mod.records_from_jsonl(Path(args.records).read_text())
    policy = _alignment_policy(args, config, labels)
    items = []
    for record in records:
        if record.sentence_id not in sentences:
            raise SystemExit(f"record sentence id {record.sentence_id!r} not in {args.sentences}")
        items.append(align_mod.align_record(sentences[record.sentence_id], record, policy))
    Path(args.out).write_text(align_mod.aligned_records_to_jsonl(items))
    n_dropped = sum(len(d) for _, d in items)
    print(f"aligned {len(items)} records ({n_dropped} unaligned pairs) -> {args.out}")
    return 0


def _mention_map(path: str, labels) -> dict:
    p = Path(path)
    if p.suffix == ".jsonl":
        text = p.read_text()
        head = text.lstrip().splitlines()[0] if text.strip() else "{}"
        if '"entities"' in head:
            return align_mod.aligned_records_from_jsonl(text)
        sentences = sentences_from_jsonl(text, labels)
    else:
        sentences = parse_conll(p.read_bytes(), labels=labels)
    return {s.id: tags_to_spans(s.gold_tags, s.tokens) for s in sentences}


def cmd_evaluate(args, config) -> int:
    labels = _labels(args, config)
    gold = _mention_map(args.gold, labels)
    pred = _mention_map(args.pred, labels)
    report = metrics.evaluate_annotations(gold, pred, labels)
    Path(args.out).write_text(metrics.report_to_json(report) + "\n")
    if args.markdown:
        Path(args.markdown).write_text(metrics.report_to_markdown(report))
    print(f"micro F1 {report.micro.f1:.3f} precision {report.micro.precision:.3f} "
          f"recall {report.micro.recall:.3f} over {report.total_support} gold mentions")
    return 0


def _spec_from_args(args, config) -> schedule.ScheduleSpec:
    kind = args.kind or cfg_get(config, "schedule", "kind", default=None)
    if kind is None:
        raise SystemExit("--kind (or schedule.kind in config) is required")
    T = args.epochs or cfg_get(config, "schedule", "epochs", default=20)
    k = args.k if args.k is not None else cfg_get(config, "schedule", "k", default=None)
    n = args.n if args.n is not None else cfg_get(config, "schedule", "n", default=None)
    return schedule.ScheduleSpec(kind, T, k=k if kind == "sigmoid" else None, n=n if kind == "power" else None)


def cmd_schedule(args, config) -> int:
    if args.paper_family:
        specs = schedule.paper_curve_family(args.epochs or cfg_get(config, "schedule", "epochs", default=20))
    else:
        specs = [_spec_from_args(args, config)]
    Path(args.out).write_text(schedule.emit_curves(specs))
    if args.svg:
        Path(args.svg).write_text(schedule.render_curves_svg(specs))
    print(f"wrote {sum(s.T for s in specs)} curve rows for {len(specs)} schedule(s) to {args.out}")
    return 0


def _lr_from_args(args, config) -> schedule.LrSpec:
    return schedule.LrSpec(
        base_lr=args.base_lr or cfg_get(config, "lr", "base_lr", default=1e-5),
        decay_factor=args.lr_decay if args.lr_decay is not None else cfg_get(config, "lr", "decay_factor", default=1.0),
    )


def _dataset_ref(path: str | None, name: str, source: str, labels) -> harness.DatasetRef:
    if path is None:
        return harness.DatasetRef(name, [], source)
    sentences = _read_sentences(path, labels=labels)
    return harness.DatasetRef(name, [s.id for s in sentences], source)


def cmd_compose(args, config) -> int:
    labels = _labels(args, config)
    spec = _spec_from_args(args, config)
    lr = _lr_from_args(args, config)
    distilled = _dataset_ref(args.distilled, "distilled", "llm", labels)
    original = _dataset_ref(args.original, "original", "gold", labels)
    seed = args.seed if args.seed is not None else cfg_get(config, "seed", default=0)
    manifests = harness.compose_run(spec, distilled, original, lr, seed)
    run_dir = harness.write_run_dir(manifests, args.out_dir, seed, spec, lr)
    print(f"wrote {len(manifests)} epoch manifests under {run_dir}")
    return 0


def cmd_run(args, config) -> int:
    labels = _labels(args, config)
    lr = _lr_from_args(args, config)
    test_sentences = _read_sentences(args.test, source="conll-test", labels=labels)
    groups: list[list[Sentence]] = [test_sentences]

    if args.preset:
        distilled_conll = _read_sentences(args.distilled_conll, labels=labels) if args.distilled_conll else []
        distilled_bbc = _read_sentences(args.distilled_bbc, source="bbc", labels=labels) if args.distilled_bbc else None
        original = _read_sentences(args.original, labels=labels) if args.original else []
        groups += [g for g in (distilled_conll, distilled_bbc, original) if g]
        preset = harness.group_preset(
            args.preset,
            harness.DatasetRef("distilled-conll", [s.id for s in distilled_conll], "llm"),
            harness.DatasetRef("original", [s.id for s in original], "gold"),
            distilled_bbc=harness.DatasetRef("distilled-bbc", [s.id for s in distilled_bbc], "llm")
            if distilled_bbc
            else None,
            T=args.epochs or cfg_get(config, "schedule", "epochs", default=20),
        )
        spec, distilled_ref, original_ref = preset.spec, preset.distilled, preset.original
        label = f"Group {preset.name}"
    else:
        spec = _spec_from_args(args, config)
        distilled_sentences = _read_sentences(args.distilled_conll, labels=labels) if args.distilled_conll else []
        if args.distilled_bbc:
            bbc = _read_sentences(args.distilled_bbc, source="bbc", labels=labels)
            groups.append(bbc)
            distilled_sentences = distilled_sentences + bbc
        original_sentences = _read_sentences(args.original, labels=labels) if args.original else []
        groups += [g for g in (distilled_sentences, original_sentences) if g]
        distilled_ref = harness.DatasetRef("distilled", [s.id for s in distilled_sentences], "llm")
        original_ref = harness.DatasetRef("original", [s.id for s in original_sentences], "gold")
        label = spec.label()

    store = harness.build_store(*groups)
    trainer = args.trainer
    if trainer not in ("baseline", "gold-echo"):
        trainer = shlex.split(trainer)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
    iterations = args.iterations if args.iterations else (len(seeds) if seeds else 5)
    results = harness.run_experiment(
        spec,
        distilled_ref,
        original_ref,
        lr,
        store,
        test_sentences,
        trainer=trainer,
        iterations=iterations,
        seeds=seeds,
        labels=labels,
        workdir=args.workdir,
    )
    aggregate = harness.aggregate_runs(results, label=label)
    out = {
        "aggregate": harness.aggregate_to_dict(aggregate),
        "runs": [
            {"seed": r.run_seed, "micro_f1": r.report.micro.f1} for r in results
        ],
    }
    Path(args.out).write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    print(f"{label}: mean micro F1 {aggregate.mean.micro.f1:.3f} over {aggregate.n_runs} run(s) -> {args.out}")
    return 0


def cmd_report(args, config) -> int:
    aggregates = []
    for path in args.inputs:
        obj = json.loads(Path(path).read_text())
        aggregates.append(harness.aggregate_from_dict(obj["aggregate"]))
    tables = harness.emit_report(aggregates, layout=args.layout)
    if args.out_md:
        Path(args.out_md).write_text(tables.markdown)
    if args.out_csv:
        Path(args.out_csv).write_text(tables.csv)
    if not args.out_md and not args.out_csv:
        print(tables.markdown)
    else:
        print(f"report over {len(aggregates)} column(s): md={args.out_md or '-'} csv={args.out_csv or '-'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="distilner")
    parser.add_argument("--config", help="JSON or TOML config mirroring the spec objects")
    parser.add_argument("--seed", type=int, default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="filter/sample a corpus and convert formats")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--source", default="other", help="provenance tag, e.g. conll-train")
    p.add_argument("--scheme", choices=["IOB1", "IOB2"], default="IOB2")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p.add_argument("--min-tokens", type=int, default=0)
    p.add_argument("--exclude-ids", help="file of ids to exclude before sampling")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("annotate", help="run LLM annotation with cache and repair")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--mode", choices=["standard", "cot"], default="cot")
    p.add_argument("--template", help="template JSON path (default: built-in)")
    p.add_argument("--cache-dir", required=True)
    p.add_argument("--url")
    p.add_argument("--model")
    p.add_argument("--labels")
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--cache-only", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("align", help="align transcript pairs to token spans")
    p.add_argument("--sentences", required=True)
    p.add_argument("--records", required=True)
    p.add_argument("--labels")
    p.add_argument("--all-occurrences", action="store_true")
    p.add_argument("--tiebreak", help="comma list, e.g. PER,LOC,ORG,MISC")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("evaluate", help="entity-level evaluation of predictions vs gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--labels")
    p.add_argument("--out", required=True)
    p.add_argument("--markdown")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("schedule", help="emit blend-schedule curves")
    p.add_argument("--kind", choices=list(schedule.KINDS))
    p.add_argument("--k", type=float)
    p.add_argument("--n", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--paper-family", action="store_true", help="emit all 14 studied schedules")
    p.add_argument("--out", required=True)
    p.add_argument("--svg")
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("compose", help="write per-epoch training manifests")
    p.add_argument("--kind", choices=list(schedule.KINDS))
    p.add_argument("--k", type=float)
    p.add_argument("--n", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p.add_argument("--distilled")
    p.add_argument("--original")
    p.add_argument("--base-lr", type=float)
    p.add_argument("--lr-decay", type=float)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("run", help="compose, train, evaluate, aggregate")
    p.add_argument("--preset", choices=["A", "B", "C", "D", "E"])
    p.add_argument("--kind", choices=list(schedule.KINDS))
    p.add_argument("--k", type=float)
    p.add_argument("--n", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--distilled-conll")
    p.add_argument("--distilled-bbc")
    p.add_argument("--original")
    p.add_argument("--test", required=True)
    p.add_argument("--trainer", default="baseline",
                   help='"baseline", "gold-echo", or an external command line')
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--seeds", help="comma list of per-iteration seeds")
    p.add_argument("--labels")
    p.add_argument("--workdir")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="comparison tables from run outputs")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--layout", choices=["phase2", "phase3"], default="phase2")
    p.add_argument("--out-md")
    p.add_argument("--out-csv")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    config = load_config(args.config) if args.config else {}
    return args.func(args, config)


if __name__ == "__main__":
    sys.exit(main())
