import json

import pytest

from distilner.annotator import ClientConfig, make_request, seed_cache
from distilner.cli import load_config, main
from distilner.corpus import parse_conll, sentences_from_jsonl, tags_to_spans, write_conll
from distilner.prompts import default_templates, render_prompt


@pytest.fixture()
def corpus_file(tmp_path, fixture_bytes):
    path = tmp_path / "corpus.conll"
    path.write_bytes(fixture_bytes)
    return path


class TestSample:
    def test_sample_to_jsonl(self, tmp_path, corpus_file):
        out = tmp_path / "sample.jsonl"
        rc = main([
            "sample", "--in", str(corpus_file), "--source", "conll-train",
            "--n", "10", "--seed", "13", "--out", str(out),
        ])
        assert rc == 0
        sents = sentences_from_jsonl(out.read_text())
        assert len(sents) == 10

    def test_sample_deterministic(self, tmp_path, corpus_file):
        outs = []
        for name in ("a.jsonl", "b.jsonl"):
            out = tmp_path / name
            main(["sample", "--in", str(corpus_file), "--n", "10", "--seed", "4", "--out", str(out)])
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_exclude_ids_gives_disjoint_samples(self, tmp_path, corpus_file):
        first = tmp_path / "first.jsonl"
        main(["sample", "--in", str(corpus_file), "--source", "conll-train",
              "--n", "20", "--seed", "1", "--out", str(first)])
        ids = [s.id for s in sentences_from_jsonl(first.read_text())]
        (tmp_path / "ids.txt").write_text("\n".join(ids) + "\n")
        second = tmp_path / "second.jsonl"
        main(["sample", "--in", str(corpus_file), "--source", "conll-train",
              "--n", "20", "--seed", "1", "--exclude-ids", str(tmp_path / "ids.txt"),
              "--out", str(second)])
        other = {s.id for s in sentences_from_jsonl(second.read_text())}
        assert not other & set(ids)

    def test_min_tokens_filter(self, tmp_path, corpus_file):
        out = tmp_path / "long.jsonl"
        main(["sample", "--in", str(corpus_file), "--min-tokens", "9", "--out", str(out)])
        assert all(len(s.tokens) >= 9 for s in sentences_from_jsonl(out.read_text()))


class TestScheduleCommand:
    def test_single_schedule_csv_and_svg(self, tmp_path):
        csv_path, svg_path = tmp_path / "curves.csv", tmp_path / "curves.svg"
        rc = main(["schedule", "--kind", "sigmoid", "--k", "32", "--epochs", "20",
                   "--out", str(csv_path), "--svg", str(svg_path)])
        assert rc == 0
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0] == "strategy,params,t,w0"
        assert len(lines) == 21
        assert svg_path.read_text().startswith("<svg")

    def test_paper_family(self, tmp_path):
        out = tmp_path / "curves.csv"
        main(["schedule", "--paper-family", "--epochs", "20", "--out", str(out)])
        assert len(out.read_text().strip().splitlines()) == 1 + 14 * 20


class TestComposeCommand:
    def test_manifest_layout(self, tmp_path, corpus_file):
        sample = tmp_path / "original.jsonl"
        main(["sample", "--in", str(corpus_file), "--source", "conll-train", "--out", str(sample)])
        out_dir = tmp_path / "runs"
        rc = main(["--seed", "3", "compose", "--kind", "pure_original", "--epochs", "4",
                   "--original", str(sample), "--base-lr", "1e-5", "--lr-decay", "0.95",
                   "--out-dir", str(out_dir)])
        assert rc == 0
        run_dir = out_dir / "run-3"
        assert (run_dir / "epoch-0" / "meta.json").exists()
        meta = json.loads((run_dir / "epoch-3" / "meta.json").read_text())
        assert meta["learning_rate"] == pytest.approx(1e-5 * 0.95**3)


class TestEvaluateCommand:
    def test_gold_vs_itself(self, tmp_path, corpus_file):
        report_path = tmp_path / "report.json"
        md_path = tmp_path / "report.md"
        rc = main(["evaluate", "--gold", str(corpus_file), "--pred", str(corpus_file),
                   "--out", str(report_path), "--markdown", str(md_path)])
        assert rc == 0
        report = json.loads(report_path.read_text())
        assert report["micro"]["f1"] == 1.0
        assert "| micro avg" in md_path.read_text()


class TestAnnotateAlignPipeline:
    def seed_transcripts(self, cache_dir, sentences, texts):
        _, cot = default_templates()
        for sent, text in zip(sentences, texts):
            rendered = render_prompt(cot, sent)
            seed_cache(cache_dir, make_request("test-model", rendered.text, 0.0, 1024), text)

    def test_annotate_then_align_then_evaluate(self, tmp_path, corpus_file):
        sentences = parse_conll(corpus_file.read_bytes(), source="conll-train")[:2]
        sent_path = tmp_path / "sents.jsonl"
        main(["sample", "--in", str(corpus_file), "--source", "conll-train", "--n", "2",
              "--seed", "0", "--out", str(sent_path)])
        picked = sentences_from_jsonl(sent_path.read_text())
        cache = tmp_path / "cache"
        texts = []
        for s in picked:
            gold = tags_to_spans(s.gold_tags, s.tokens)
            body = ", ".join("'%s': ['%s']" % (m.etype, m.surfaces[0]) for m in gold)
            texts.append("Reasoning steps here.\n{%s}" % body)
        self.seed_transcripts(cache, picked, texts)

        transcripts = tmp_path / "transcripts.jsonl"
        rc = main(["annotate", "--in", str(sent_path), "--mode", "cot", "--model", "test-model",
                   "--cache-dir", str(cache), "--cache-only", "--out", str(transcripts)])
        assert rc == 0

        aligned = tmp_path / "aligned.jsonl"
        rc = main(["align", "--sentences", str(sent_path), "--records", str(transcripts),
                   "--out", str(aligned)])
        assert rc == 0

        report_path = tmp_path / "report.json"
        rc = main(["evaluate", "--gold", str(sent_path), "--pred", str(aligned),
                   "--out", str(report_path)])
        assert rc == 0
        report = json.loads(report_path.read_text())
        assert report["micro"]["recall"] == 1.0

    def test_cache_only_miss_fails(self, tmp_path, corpus_file):
        sent_path = tmp_path / "sents.jsonl"
        main(["sample", "--in", str(corpus_file), "--n", "1", "--seed", "0", "--out", str(sent_path)])
        from distilner.annotator import CacheMissError

        with pytest.raises(CacheMissError):
            main(["annotate", "--in", str(sent_path), "--mode", "cot",
                  "--cache-dir", str(tmp_path / "empty"), "--cache-only",
                  "--out", str(tmp_path / "t.jsonl")])


class TestRunAndReport:
    def test_gold_echo_run_and_report(self, tmp_path, corpus_file):
        out_a = tmp_path / "a.json"
        rc = main(["run", "--kind", "pure_original", "--epochs", "2",
                   "--original", str(corpus_file), "--test", str(corpus_file),
                   "--trainer", "gold-echo", "--iterations", "1", "--out", str(out_a)])
        assert rc == 0
        obj = json.loads(out_a.read_text())
        assert obj["aggregate"]["mean"]["micro"]["f1"] == 1.0

        out_b = tmp_path / "b.json"
        main(["run", "--kind", "pure_original", "--epochs", "2",
              "--original", str(corpus_file), "--test", str(corpus_file),
              "--trainer", "baseline", "--iterations", "2", "--out", str(out_b)])

        md, csv = tmp_path / "report.md", tmp_path / "report.csv"
        rc = main(["report", str(out_a), str(out_b), "--layout", "phase2",
                   "--out-md", str(md), "--out-csv", str(csv)])
        assert rc == 0
        assert "pure_original / no LR decay" in md.read_text()
        assert csv.read_text().splitlines()[0].startswith("scope,metric,support")

    def test_preset_run(self, tmp_path, corpus_file):
        out = tmp_path / "groupA.json"
        rc = main(["run", "--preset", "A", "--original", str(corpus_file),
                   "--test", str(corpus_file), "--trainer", "gold-echo",
                   "--iterations", "1", "--epochs", "2", "--out", str(out)])
        assert rc == 0
        obj = json.loads(out.read_text())
        assert obj["aggregate"]["label"] == "Group A"
        assert obj["aggregate"]["strategy"]["kind"] == "pure_original"


class TestConfig:
    def test_json_config(self, tmp_path):
        cfg = tmp_path / "conf.json"
        cfg.write_text(json.dumps({"schedule": {"kind": "cosine", "epochs": 5}}))
        out = tmp_path / "curves.csv"
        rc = main(["--config", str(cfg), "schedule", "--out", str(out)])
        assert rc == 0
        assert len(out.read_text().strip().splitlines()) == 6

    def test_toml_config(self, tmp_path):
        cfg = tmp_path / "conf.toml"
        cfg.write_text('[schedule]\nkind = "cosine"\nepochs = 4\n\n[lr]\nbase_lr = 1e-5\n')
        assert load_config(str(cfg))["schedule"]["kind"] == "cosine"
        out = tmp_path / "curves.csv"
        rc = main(["--config", str(cfg), "schedule", "--out", str(out)])
        assert rc == 0
        assert len(out.read_text().strip().splitlines()) == 5

    def test_flag_overrides_config(self, tmp_path):
        cfg = tmp_path / "conf.json"
        cfg.write_text(json.dumps({"schedule": {"kind": "cosine", "epochs": 5}}))
        out = tmp_path / "curves.csv"
        main(["--config", str(cfg), "schedule", "--kind", "simple_mix", "--epochs", "8",
              "--out", str(out)])
        body = out.read_text().strip().splitlines()[1:]
        assert len(body) == 8
        assert all(row.startswith("simple_mix") for row in body)
