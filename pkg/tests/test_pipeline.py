import json
import shutil

import pytest

from stance_transfer.cli import main
from stance_transfer.config import CONFIG_ENV, ConfigError, PipelineConfig, RunManifest, sha256_file, trace_provenance
from stance_transfer.semeval import StanceRow, StanceTable
from stance_transfer.synthetic import write_toy_world


def _write_raw(path, texts):
    path.write_text("".join(json.dumps({"id": str(i), "text": t}) + "\n" for i, t in enumerate(texts)))
    return path


def _mini_config(tmp_path, raw):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(f"paths:\n  raw: {raw}\n  artifacts: {tmp_path / 'art'}\n"
                   "vocab:\n  min_count: 1\nphrases:\n  thresholds: [1.0]\n")
    return cfg


class TestPrepare:
    def test_three_lines(self, tmp_path, capsys):
        raw = _write_raw(tmp_path / "r.jsonl", ["Hello world", "Gun control now #2A", "so it goes"])
        assert main(["prepare", "-c", str(_mini_config(tmp_path, raw))]) == 0
        rows = [json.loads(x) for x in (tmp_path / "art/prepare/corpus.jsonl").read_text().splitlines()]
        assert len(rows) == 3
        assert rows[1]["tokens"] == ["gun", "control", "now", "#2a"]

    def test_duplicate_dropped(self, tmp_path):
        raw = _write_raw(tmp_path / "r.jsonl", ["a b", "a b", "c d"])
        assert main(["prepare", "-c", str(_mini_config(tmp_path, raw))]) == 0
        m = RunManifest.read(tmp_path / "art/manifests/prepare.json")
        assert m.notes["records_out"] == 2 and m.notes["dropped"] == 1
        assert m.inputs[str(raw)] == sha256_file(raw)

    def test_corrupted_line(self, tmp_path, capsys):
        raw = tmp_path / "r.jsonl"
        raw.write_text('{"id": "1", "text": "ok"}\n{"id": 2, "text"\n{"id": "3", "text": "x"}\n')
        assert main(["prepare", "-c", str(_mini_config(tmp_path, raw))]) == 2
        assert "line 2" in capsys.readouterr().err

    def test_rerun_is_bit_identical(self, tmp_path):
        raw = _write_raw(tmp_path / "r.jsonl", ["new york is big", "new york again", "x y z"] * 4)
        cfg = str(_mini_config(tmp_path, raw))
        assert main(["prepare", "-c", cfg]) == 0
        first = {p.name: p.read_bytes() for p in (tmp_path / "art/prepare").iterdir()}
        assert main(["prepare", "-c", cfg]) == 0
        assert first == {p.name: p.read_bytes() for p in (tmp_path / "art/prepare").iterdir()}

    def test_env_var_config(self, tmp_path, monkeypatch):
        raw = _write_raw(tmp_path / "r.jsonl", ["a b c"])
        monkeypatch.setenv(CONFIG_ENV, str(_mini_config(tmp_path, raw)))
        assert main(["prepare"]) == 0
        assert (tmp_path / "art/prepare/vocab.tsv").exists()


class TestExitCodes:
    def test_usage(self, capsys):
        assert main([]) == 1
        assert main(["bogus"]) == 1
        assert main(["finetune", "--init-source", "nope"]) == 1

    def test_config_errors(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("sgns:\n  dimension: 3\n")
        assert main(["prepare", "-c", str(bad)]) == 1
        assert main(["prepare", "--set", "novalue"]) == 1
        assert main(["prepare", "--set", "sgns.window=0"]) == 1

    def test_missing_artifact_names_stage(self, tmp_path, capsys):
        assert main(["embed", "--artifacts", str(tmp_path / "empty")]) == 2
        assert "'prepare' stage" in capsys.readouterr().err
        assert main(["pretrain", "--artifacts", str(tmp_path / "empty")]) == 2

    def test_missing_input(self, tmp_path):
        assert main(["prepare", "--raw", str(tmp_path / "nope.jsonl"), "--artifacts", str(tmp_path)]) == 2


class TestConfig:
    def test_overrides_and_flags(self, tmp_path):
        cfg = PipelineConfig.load(None, ["sgns.dim=12", "phrases.thresholds=[3, 2]", "tags.topics=[A, B]"])
        assert cfg.sgns.dim == 12 and cfg.phrases.thresholds == [3, 2] and cfg.tags.topics == ["A", "B"]
        assert cfg.section_hash("sgns") != PipelineConfig().section_hash("sgns")
        with pytest.raises(ConfigError):
            PipelineConfig.from_dict({"extra": {}})

    def test_defaults_are_explicit_seeds(self):
        cfg = PipelineConfig()
        assert isinstance(cfg.sgns.seed, int) and isinstance(cfg.pretrain.seed, int)
        assert isinstance(cfg.finetune.seed, int)


class TestTsv:
    @pytest.mark.parametrize("newline, trailing", [("\n", True), ("\r\n", True), ("\n", False)])
    def test_byte_round_trip(self, tmp_path, newline, trailing):
        text = newline.join(["ID\tTarget\tTweet\tStance",
                             "101\tAtheism\tGod is great! #SemST\tAGAINST",
                             "102\tHillary Clinton\t@user élève \U0001f600 #SemST\tNONE"])
        if trailing:
            text += newline
        p = tmp_path / "in.tsv"
        p.write_bytes(text.encode("utf-8"))
        t = StanceTable.read(p)
        t.write(tmp_path / "out.tsv")
        assert (tmp_path / "out.tsv").read_bytes() == p.read_bytes()
        assert t.targets == ["Atheism", "Hillary Clinton"]

    def test_latin1(self, tmp_path):
        p = tmp_path / "in.tsv"
        p.write_bytes("ID\tTarget\tTweet\tStance\n1\tT\tcaf\xe9\tFAVOR\n".encode("latin-1"))
        StanceTable.read(p).write(tmp_path / "out.tsv")
        assert (tmp_path / "out.tsv").read_bytes() == p.read_bytes()

    def test_bad_rows(self, tmp_path):
        p = tmp_path / "in.tsv"
        p.write_text("ID\tTarget\tTweet\tStance\n1\tT\tonly three\n")
        with pytest.raises(ValueError, match="line 2"):
            StanceTable.read(p)
        p.write_text("id,target\n")
        with pytest.raises(ValueError, match="header"):
            StanceTable.read(p)

    def test_evaluate_gold_against_itself(self, tmp_path, capsys):
        rows = [StanceRow(str(i), "T", f"tweet {i}", s) for i, s in enumerate(["FAVOR", "AGAINST", "NONE"] * 3)]
        StanceTable(rows).write(tmp_path / "g.tsv")
        g = str(tmp_path / "g.tsv")
        assert main(["evaluate", g, g, "--artifacts", str(tmp_path / "a")]) == 0
        report = json.loads((tmp_path / "a/evaluate/report.json").read_text())
        assert report["official_score"] == 1.0
        assert "official    1.0000" in capsys.readouterr().out


@pytest.fixture(scope="session")
def toy_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy")
    paths = write_toy_world(root, seed=3, n_unlabeled=3000, n_per_topic=90)
    cfg = str(paths["config"])
    codes = {}
    for stage in (["prepare"], ["embed"], ["select-tags"], ["pretrain"], ["finetune"],
                  ["predict", str(paths["test"])]):
        codes[stage[0]] = main(stage + ["-c", cfg])
    art = root / "artifacts"
    codes["evaluate"] = main(["evaluate", str(paths["test"]), str(art / "predict/predictions.tsv"),
                              "--train", str(paths["train"]), "-c", cfg])
    return paths, art, codes


class TestToyPipeline:
    def test_all_stages_succeed(self, toy_run):
        _, art, codes = toy_run
        assert all(c == 0 for c in codes.values()), codes
        names = sorted(p.stem for p in (art / "manifests").glob("*.json"))
        assert names == sorted(["prepare", "embed", "select-tags", "pretrain", "finetune", "predict", "evaluate"])
        for name in ("report.json", "report.txt", "breakdown.csv", "f1_breakdown.png", "count_vs_f1.png"):
            assert (art / "evaluate" / name).stat().st_size > 0

    def test_provenance_reaches_raw(self, toy_run):
        paths, art, _ = toy_run
        trace = trace_provenance(art / "manifests", "evaluate")
        assert sha256_file(paths["raw"]) in trace
        assert sha256_file(paths["test"]) in trace

    def test_manifest_hashes_match_files(self, toy_run):
        _, art, _ = toy_run
        m = RunManifest.read(art / "manifests/finetune.json")
        for label, digest in m.outputs.items():
            assert sha256_file(art / label) == digest
        assert len(m.config_hash) == 64 and m.wall_time >= 0

    def test_predictions_in_submission_format(self, toy_run):
        paths, art, _ = toy_run
        pred = StanceTable.read(art / "predict/predictions.tsv")
        test = StanceTable.read(paths["test"])
        assert [r.id for r in pred.rows] == [r.id for r in test.rows]
        assert {r.stance for r in pred.rows} <= {"FAVOR", "AGAINST", "NONE"}

    def test_topic_mismatch(self, toy_run, tmp_path, capsys):
        paths, art, _ = toy_run
        StanceTable([StanceRow("1", "Atheism", "god #SemST", "NONE")]).write(tmp_path / "t.tsv")
        assert main(["predict", str(tmp_path / "t.tsv"), "-o", str(tmp_path / "p.tsv"),
                     "-c", str(paths["config"])]) == 2
        assert "Atheism" in capsys.readouterr().err

    def test_evaluate_rejects_mismatched_ids(self, toy_run, tmp_path):
        paths, art, _ = toy_run
        StanceTable([StanceRow("zzz", "Gun Control", "x", "NONE")]).write(tmp_path / "p.tsv")
        assert main(["evaluate", str(paths["test"]), str(tmp_path / "p.tsv"),
                     "-o", str(tmp_path / "ev"), "-c", str(paths["config"])]) == 2

    def test_similarity_tags_found(self, toy_run):
        _, art, _ = toy_run
        tags = (art / "select-tags/hashtags.txt").read_text().splitlines()
        assert tags[0] == "# mode=similarity"
        assert {"#actonclimate", "#2a"} <= set(tags[1:])

    def test_text_export(self, toy_run, tmp_path):
        paths, art, _ = toy_run
        out = tmp_path / "copy"
        shutil.copytree(art / "prepare", out / "prepare")
        assert main(["embed", "--text", "--artifacts", str(out), "-c", str(paths["config"])]) == 0
        first = (out / "embed/embeddings.txt").read_text().splitlines()[0].split(" ")
        assert len(first) == 1 + 24
        assert (out / "embed/embeddings.bin").read_bytes() == (art / "embed/embeddings.bin").read_bytes()
