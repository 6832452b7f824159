"""Pipeline stages. Each reads upstream artifacts from the artifact directory,
writes its outputs there, and records a manifest under ``manifests/``."""

from __future__ import annotations

import json
import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .config import PipelineConfig, RunManifest, atomic_write, sha256_file
from .corpus import (
    OOV,
    CorpusError,
    PhraseModel,
    Vocabulary,
    apply_phrases,
    build_vocabulary,
    encode,
    filter_stream,
    iter_tweets,
    learn_phrases,
    prepare_tokens,
    read_jsonl,
    tokenize,
)
from .evaluation import evaluate
from .hashtags import (
    HashtagCandidateSet,
    PretrainedEncoder,
    extract_hashtag_corpus,
    pretrain_encoder,
    select_hashtags_by_frequency,
    select_hashtags_by_similarity,
)
from .labels import LABELS, StanceLabel
from .neural import load_checkpoint, save_checkpoint
from .plotting import plot_count_vs_f1, plot_f1_breakdown
from .semeval import StanceTable
from .skipgram import EmbeddingMatrix, train_skipgram
from .stance import StanceExample, TopicModel, predict_many, train_topic

logger = logging.getLogger(__name__)

STAGES = ("prepare", "embed", "select-tags", "pretrain", "finetune", "predict", "evaluate")


class PipelineError(Exception):
    """Data or state problem; the CLI maps it to exit code 2."""


class MissingArtifact(PipelineError):
    pass


class Workspace:
    def __init__(self, config: PipelineConfig):
        self.config = config
        self.root = Path(config.paths.artifacts)

    def path(self, stage: str, name: str) -> Path:
        return self.root / stage / name

    def manifest_path(self, stage: str) -> Path:
        return self.root / "manifests" / f"{stage}.json"

    def need(self, stage: str, name: str) -> Path:
        p = self.path(stage, name)
        if not p.exists():
            raise MissingArtifact(f"missing artifact {p}; run the '{stage}' stage first")
        return p

    def record(self, stage: str, config_hash: str, inputs: dict[str, Path],
               outputs: list[Path], started: float, notes: dict | None = None) -> RunManifest:
        def label(p: Path) -> str:
            p = Path(p)
            try:
                return str(p.resolve().relative_to(self.root.resolve()))
            except ValueError:
                return str(p)
        m = RunManifest(
            stage=stage,
            config_hash=config_hash,
            inputs={label(p): sha256_file(p) for p in inputs.values()},
            outputs={label(p): sha256_file(p) for p in outputs},
            wall_time=round(time.time() - started, 3),
            version=__version__,
            notes=notes or {},
        )
        m.write(self.manifest_path(stage))
        return m


def _need_file(path, what: str) -> Path:
    if not path:
        raise PipelineError(f"no {what} path configured")
    p = Path(path)
    if not p.exists():
        raise PipelineError(f"{what} not found: {p}")
    return p


def _slug(topic: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", topic.lower()).strip("_") or "topic"


def _load_text_artifacts(ws: Workspace):
    phrases = PhraseModel.from_tsv(ws.need("prepare", "phrases.tsv").read_text(encoding="utf-8"))
    vocab = Vocabulary.from_text(ws.need("prepare", "vocab.tsv").read_text(encoding="utf-8"))
    return phrases, vocab


# --------------------------------------------------------------------------

def cmd_prepare(config: PipelineConfig) -> RunManifest:
    started = time.time()
    ws = Workspace(config)
    raw = _need_file(config.paths.raw, "raw tweet corpus")
    try:
        records = list(iter_tweets(raw))
    except CorpusError as exc:
        raise PipelineError(str(exc)) from exc
    kept = filter_stream(records)
    if not kept:
        raise PipelineError("no records left after filtering")
    stops = set(config.tokenizer.stop_tokens)
    token_lists = [[t for t in tokenize(r.text) if t not in stops] for r in kept]
    th = config.phrases.thresholds
    phrases = learn_phrases(token_lists, config.phrases.delta, th, passes=len(th))
    token_lists = [apply_phrases(t, phrases) for t in token_lists]
    try:
        vocab = build_vocabulary(token_lists, config.vocab.min_count)
    except CorpusError as exc:
        raise PipelineError(str(exc)) from exc

    out = ws.root / "prepare"
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    for rec, toks in zip(kept, token_lists):
        row = rec.to_json()
        row["tokens"] = toks
        lines.append(json.dumps(row, ensure_ascii=False, sort_keys=True))
    atomic_write(out / "corpus.jsonl", "\n".join(lines) + "\n")
    atomic_write(out / "phrases.tsv", phrases.to_tsv())
    atomic_write(out / "vocab.tsv", vocab.to_text())
    notes = {"records_in": len(records), "records_out": len(kept),
             "dropped": len(records) - len(kept), "vocab_size": len(vocab),
             "merges_per_pass": [len(m) for m in phrases.merges]}
    logger.info("prepare: %s", notes)
    return ws.record("prepare", config.section_hash("tokenizer", "phrases", "vocab"),
                     {"raw": raw},
                     [out / "corpus.jsonl", out / "phrases.tsv", out / "vocab.tsv"],
                     started, notes)


def cmd_embed(config: PipelineConfig, text_export: bool = False) -> RunManifest:
    started = time.time()
    ws = Workspace(config)
    corpus_path = ws.need("prepare", "corpus.jsonl")
    vocab_path = ws.need("prepare", "vocab.tsv")
    vocab = Vocabulary.from_text(vocab_path.read_text(encoding="utf-8"))
    rows = read_jsonl(corpus_path)
    encoded = [encode(r["tokens"], vocab, max(1, len(r["tokens"]))) for r in rows]
    emb = train_skipgram(encoded, vocab, config.sgns)
    out = ws.root / "embed"
    out.mkdir(parents=True, exist_ok=True)
    emb.save(out / "embeddings.bin")
    outputs = [out / "embeddings.bin"]
    if text_export:
        atomic_write(out / "embeddings.txt", emb.to_text())
        outputs.append(out / "embeddings.txt")
    return ws.record("embed", config.section_hash("sgns"),
                     {"corpus": corpus_path, "vocab": vocab_path}, outputs, started)


def _topics(config: PipelineConfig) -> list[str]:
    if config.tags.topics:
        return list(config.tags.topics)
    train = _need_file(config.paths.train, "training TSV (or tags.topics)")
    return StanceTable.read(train).targets


def cmd_select_tags(config: PipelineConfig) -> RunManifest:
    started = time.time()
    ws = Workspace(config)
    vocab_path = ws.need("prepare", "vocab.tsv")
    inputs = {"vocab": vocab_path}
    notes = {}
    if config.tags.mode == "frequency":
        vocab = Vocabulary.from_text(vocab_path.read_text(encoding="utf-8"))
        cands = select_hashtags_by_frequency(vocab, config.tags.n)
    elif config.tags.mode == "similarity":
        emb_path = ws.need("embed", "embeddings.bin")
        phrases_path = ws.need("prepare", "phrases.tsv")
        inputs.update(embeddings=emb_path, phrases=phrases_path)
        if not config.tags.topics and config.paths.train:
            inputs["train"] = Path(config.paths.train)
        emb = EmbeddingMatrix.load(emb_path)
        phrases = PhraseModel.from_tsv(phrases_path.read_text(encoding="utf-8"))
        try:
            cands = select_hashtags_by_similarity(_topics(config), emb, config.tags.k, phrases,
                                                  config.tokenizer.stop_tokens)
        except ValueError as exc:
            raise PipelineError(str(exc)) from exc
        notes["provenance"] = cands.provenance
    else:
        raise PipelineError(f"unknown tag selection mode {config.tags.mode!r}")
    if not len(cands):
        raise PipelineError("no hashtags selected")
    out = ws.path("select-tags", "hashtags.txt")
    atomic_write(out, cands.to_text())
    notes["count"] = len(cands)
    return ws.record("select-tags", config.section_hash("tags"), inputs, [out], started, notes)


def load_encoder(ws: Workspace) -> PretrainedEncoder:
    meta = json.loads(ws.need("pretrain", "encoder.json").read_text(encoding="utf-8"))
    cands = HashtagCandidateSet.from_text(ws.need("select-tags", "hashtags.txt").read_text("utf-8"))
    tensors = load_checkpoint(ws.need("pretrain", "encoder.ckpt"))
    return PretrainedEncoder.from_tensors(tensors, cands, meta["dev_accuracy"], meta["history"])


def cmd_pretrain(config: PipelineConfig) -> RunManifest:
    started = time.time()
    ws = Workspace(config)
    corpus_path = ws.need("prepare", "corpus.jsonl")
    vocab_path = ws.need("prepare", "vocab.tsv")
    emb_path = ws.need("embed", "embeddings.bin")
    tags_path = ws.need("select-tags", "hashtags.txt")
    vocab = Vocabulary.from_text(vocab_path.read_text(encoding="utf-8"))
    cands = HashtagCandidateSet.from_text(tags_path.read_text(encoding="utf-8"))
    rows = read_jsonl(corpus_path)
    pc = config.pretrain
    try:
        hc = extract_hashtag_corpus([(r["id"], r["tokens"]) for r in rows], cands, vocab,
                                    pc.split_ratio, pc.seed, config.vocab.max_len)
        encoder = pretrain_encoder(hc, EmbeddingMatrix.load(emb_path), pc)
    except ValueError as exc:
        raise PipelineError(str(exc)) from exc
    out = ws.root / "pretrain"
    out.mkdir(parents=True, exist_ok=True)
    atomic_write(out / "hashtag_corpus.jsonl",
                 "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n"
                         for r in hc.rows(vocab)))
    save_checkpoint(out / "encoder.ckpt", encoder.tensors())
    meta = {"dev_accuracy": encoder.dev_accuracy, "history": encoder.history,
            "candidates_sha256": cands.digest(), "mode": cands.mode,
            "train_size": hc.split.count("train"), "dev_size": hc.split.count("dev")}
    atomic_write(out / "encoder.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return ws.record("pretrain", config.section_hash("pretrain", "vocab"),
                     {"corpus": corpus_path, "vocab": vocab_path, "embeddings": emb_path,
                      "hashtags": tags_path},
                     [out / "hashtag_corpus.jsonl", out / "encoder.ckpt", out / "encoder.json"],
                     started, meta)


def encode_rows(rows, phrases, vocab, config: PipelineConfig) -> list[list[int]]:
    """Tokenize SemEval tweets like the pretraining corpus. Tweets that come
    out empty are represented by a single OOV id."""
    seqs = []
    for r in rows:
        toks = prepare_tokens(r.tweet, phrases, config.tokenizer.stop_tokens)
        seqs.append(encode(toks, vocab, config.vocab.max_len) or [OOV])
    return seqs


def cmd_finetune(config: PipelineConfig, workers: int = 1) -> RunManifest:
    started = time.time()
    ws = Workspace(config)
    fc = config.finetune
    train_path = _need_file(config.paths.train, "training TSV")
    phrases, vocab = _load_text_artifacts(ws)
    inputs = {"train": train_path, "phrases": ws.path("prepare", "phrases.tsv"),
              "vocab": ws.path("prepare", "vocab.tsv")}
    encoder = embeddings = None
    cand_hash = None
    if fc.init_source == "pretrained":
        encoder = load_encoder(ws)
        inputs.update(encoder=ws.path("pretrain", "encoder.ckpt"),
                      hashtags=ws.path("select-tags", "hashtags.txt"))
        cand_hash = encoder.candidates.digest()
    elif fc.init_source == "random-rnn":
        embeddings = EmbeddingMatrix.load(ws.need("embed", "embeddings.bin"))
        inputs["embeddings"] = ws.path("embed", "embeddings.bin")
    dim = config.sgns.dim

    table = StanceTable.read(train_path)
    seqs = encode_rows(table.rows, phrases, vocab, config)
    try:
        golds = [StanceLabel.parse(r.stance) for r in table.rows]
    except ValueError as exc:
        raise PipelineError(f"{train_path}: {exc}") from exc

    def fit(topic):
        idx = [i for i, r in enumerate(table.rows) if r.target == topic]
        ex = [StanceExample(seqs[i], golds[i], topic) for i in idx]
        return idx, train_topic(ex, fc, encoder=encoder, embeddings=embeddings,
                                vocab_size=len(vocab), dim=dim)

    topics = table.targets
    try:
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                results = list(pool.map(fit, topics))
        else:
            results = [fit(t) for t in topics]
    except (ValueError, FloatingPointError) as exc:
        raise PipelineError(str(exc)) from exc

    out = ws.root / "finetune"
    outputs = []
    cv = [""] * len(table.rows)
    index = {}
    counts = {}
    for topic, (idx, model) in zip(topics, results):
        d = out / _slug(topic)
        model.save(d, {"candidates_sha256": cand_hash})
        outputs += [d / f"member{k}.ckpt" for k in range(fc.folds)] + [d / "manifest.json"]
        index[topic] = _slug(topic)
        counts[topic] = {lab.name: sum(golds[i] == lab for i in idx) for lab in LABELS}
        for local, i in enumerate(idx):
            cv[i] = model.cv_predictions[local].name
    atomic_write(out / "topics.json", json.dumps(
        {"topics": index, "train_counts": counts, "init_source": fc.init_source},
        indent=2, sort_keys=True) + "\n")
    table.with_stances(cv).write(out / "cv_predictions.tsv")
    outputs += [out / "topics.json", out / "cv_predictions.tsv"]
    return ws.record("finetune", config.section_hash("finetune", "vocab", "tokenizer"),
                     inputs, outputs, started, {"topics": index})


def load_topic_models(ws: Workspace) -> dict[str, TopicModel]:
    index = json.loads(ws.need("finetune", "topics.json").read_text(encoding="utf-8"))
    return {t: TopicModel.load(ws.root / "finetune" / d) for t, d in index["topics"].items()}


def cmd_predict(config: PipelineConfig, test_path, output=None) -> RunManifest:
    started = time.time()
    ws = Workspace(config)
    test_path = _need_file(test_path, "test TSV")
    phrases, vocab = _load_text_artifacts(ws)
    models = load_topic_models(ws)
    table = StanceTable.read(test_path)
    missing = [t for t in table.targets if t not in models]
    if missing:
        raise PipelineError(f"no trained model for topic(s) {missing}; "
                            f"models exist for {sorted(models)}")
    seqs = encode_rows(table.rows, phrases, vocab, config)
    stances = [""] * len(table.rows)
    for topic, model in models.items():
        idx = [i for i, r in enumerate(table.rows) if r.target == topic]
        for i, lab in zip(idx, predict_many(model, [seqs[i] for i in idx])):
            stances[i] = lab.name
    output = Path(output) if output else ws.path("predict", "predictions.tsv")
    output.parent.mkdir(parents=True, exist_ok=True)
    table.with_stances(stances).write(output)
    inputs = {"test": test_path, "topics": ws.path("finetune", "topics.json"),
              "phrases": ws.path("prepare", "phrases.tsv"), "vocab": ws.path("prepare", "vocab.tsv")}
    for topic in models:
        for k in range(models[topic].config.folds):
            p = ws.root / "finetune" / _slug(topic) / f"member{k}.ckpt"
            inputs[f"{topic}/{k}"] = p
    return ws.record("predict", config.section_hash("vocab", "tokenizer"), inputs, [output], started)


def _train_counts(path) -> dict[str, dict[str, int]]:
    table = StanceTable.read(path)
    counts: dict[str, dict[str, int]] = {}
    for r in table.rows:
        c = counts.setdefault(r.target, {lab.name: 0 for lab in LABELS})
        c[StanceLabel.parse(r.stance).name] += 1
    return counts


def cmd_evaluate(config: PipelineConfig, gold_path, pred_path, train_path=None,
                 out_dir=None) -> tuple[RunManifest, object]:
    started = time.time()
    ws = Workspace(config)
    gold_path = _need_file(gold_path, "gold TSV")
    pred_path = _need_file(pred_path, "prediction TSV")
    gold = StanceTable.read(gold_path)
    pred = {r.id: r for r in StanceTable.read(pred_path).rows}
    golds, preds, topics = [], [], []
    for r in gold.rows:
        p = pred.get(r.id)
        if p is None:
            raise PipelineError(f"prediction file lacks ID {r.id}")
        if p.target != r.target:
            raise PipelineError(f"ID {r.id}: topic {p.target!r} does not match gold {r.target!r}")
        try:
            golds.append(StanceLabel.parse(r.stance))
            preds.append(StanceLabel.parse(p.stance))
        except ValueError as exc:
            raise PipelineError(f"ID {r.id}: {exc}") from exc
        topics.append(r.target)
    inputs = {"gold": gold_path, "pred": pred_path}
    counts = None
    if train_path:
        inputs["train"] = _need_file(train_path, "training TSV")
        counts = _train_counts(train_path)
    report = evaluate(golds, preds, topics, counts)
    out = Path(out_dir) if out_dir else ws.root / "evaluate"
    out.mkdir(parents=True, exist_ok=True)
    atomic_write(out / "report.json", report.to_json())
    atomic_write(out / "report.txt", report.to_table())
    atomic_write(out / "breakdown.csv", report.breakdown_csv())
    plot_f1_breakdown(report, out / "f1_breakdown.png")
    outputs = [out / "report.json", out / "report.txt", out / "breakdown.csv", out / "f1_breakdown.png"]
    if plot_count_vs_f1(report, out / "count_vs_f1.png"):
        outputs.append(out / "count_vs_f1.png")
    m = ws.record("evaluate", config.section_hash(), inputs, outputs, started,
                  {"official_score": report.official, "r_squared": report.r_squared})
    return m, report


def run_all(config: PipelineConfig, test_path=None) -> dict[str, RunManifest]:
    """Run every stage in order on the configured inputs (toy-scale helper)."""
    ms = {
        "prepare": cmd_prepare(config),
        "embed": cmd_embed(config),
        "select-tags": cmd_select_tags(config),
        "pretrain": cmd_pretrain(config),
        "finetune": cmd_finetune(config),
    }
    ws = Workspace(config)
    if test_path:
        ms["predict"] = cmd_predict(config, test_path)
    ms["evaluate"] = cmd_evaluate(config, config.paths.train, ws.path("finetune", "cv_predictions.tsv"),
                                  config.paths.train)[0]
    return ms
