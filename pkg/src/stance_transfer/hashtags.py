"""Distant supervision from hashtags.

Candidate hashtags are chosen either by cosine similarity to topic titles or
by raw frequency. Tweets carrying a candidate become training examples whose
label is that tag, with every hashtag stripped from the input. An
embedding + LSTM encoder is then pretrained to predict the tag.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import PhraseModel, Vocabulary, encode, is_hashtag, prepare_tokens
from .network import SequenceClassifier, run_epoch
from .neural import LstmParams, adadelta_init, adadelta_step
from .skipgram import EmbeddingMatrix, nearest_neighbors, oov_vector

logger = logging.getLogger(__name__)


@dataclass
class HashtagCandidateSet:
    tags: list[str]
    mode: str
    provenance: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("similarity", "frequency"):
            raise ValueError(f"unknown selection mode {self.mode!r}")
        if len(set(self.tags)) != len(self.tags):
            raise ValueError("candidate hashtags must be unique")
        if any(not is_hashtag(t) for t in self.tags):
            raise ValueError("candidates must start with '#'")

    def __len__(self):
        return len(self.tags)

    def to_text(self) -> str:
        return f"# mode={self.mode}\n" + "".join(t + "\n" for t in self.tags)

    @classmethod
    def from_text(cls, text: str) -> HashtagCandidateSet:
        lines = text.splitlines()
        if not lines or not lines[0].startswith("# mode="):
            raise ValueError("candidate file lacks '# mode=' header")
        return cls([ln for ln in lines[1:] if ln], lines[0].split("=", 1)[1].strip())

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


def topic_query(title: str, emb: EmbeddingMatrix, phrases: PhraseModel | None = None,
                stop_tokens: Sequence[str] = ()) -> tuple[np.ndarray, str | None]:
    """Query vector for a topic title and the vocabulary token it came from.

    A title that phrase-merges into one known token uses that token's vector;
    otherwise the in-vocabulary tokens are averaged.
    """
    tokens = prepare_tokens(title, phrases, stop_tokens)
    known = [t for t in tokens if t in emb.vocab]
    if not known:
        raise ValueError(f"topic {title!r} has no in-vocabulary words")
    if len(tokens) == 1:
        return emb[tokens[0]].astype(np.float64), tokens[0]
    vecs = np.stack([emb[t] for t in known]).astype(np.float64)
    return vecs.mean(axis=0), None


def select_hashtags_by_similarity(topics: Sequence[str], emb: EmbeddingMatrix, k: int = 50,
                                  phrases: PhraseModel | None = None,
                                  stop_tokens: Sequence[str] = ()) -> HashtagCandidateSet:
    if not topics:
        raise ValueError("no topics given")
    tags: dict[str, None] = {}
    provenance = {}
    for title in topics:
        query, own = topic_query(title, emb, phrases, stop_tokens)
        hits = nearest_neighbors(query, emb, k, keep=is_hashtag, exclude=own)
        provenance[title] = [tok for tok, _ in hits]
        for tok, _ in hits:
            tags.setdefault(tok)
    return HashtagCandidateSet(list(tags), "similarity", provenance)


def select_hashtags_by_frequency(vocab: Vocabulary, n: int = 10000) -> HashtagCandidateSet:
    # vocabulary order is already descending count with lexicographic ties
    tags = [t for t in vocab.tokens if is_hashtag(t)][:n]
    return HashtagCandidateSet(tags, "frequency")


# --------------------------------------------------------------------------

@dataclass
class HashtagCorpus:
    ids: list[str]
    sequences: list[list[int]]
    targets: list[int]
    split: list[str]
    candidates: HashtagCandidateSet

    def part(self, name: str) -> tuple[list[list[int]], list[int]]:
        idx = [i for i, s in enumerate(self.split) if s == name]
        return [self.sequences[i] for i in idx], [self.targets[i] for i in idx]

    def rows(self, vocab: Vocabulary):
        """JSON-lines rows: the tweet format plus ``target`` and ``split``."""
        for rid, seq, tgt, sp in zip(self.ids, self.sequences, self.targets, self.split):
            toks = [vocab.tokens[i] if i >= 0 else "<oov>" for i in seq]
            yield {"id": rid, "text": " ".join(toks), "ids": seq,
                   "target": self.candidates.tags[tgt], "split": sp}

    @classmethod
    def from_rows(cls, rows, candidates: HashtagCandidateSet) -> HashtagCorpus:
        index = {t: i for i, t in enumerate(candidates.tags)}
        rows = list(rows)
        return cls([r["id"] for r in rows], [list(r["ids"]) for r in rows],
                   [index[r["target"]] for r in rows], [r["split"] for r in rows], candidates)


def stratified_split(labels: Sequence[int], ratio: float, rng: np.random.Generator,
                     min_stratum: int = 10) -> list[str]:
    """Assign "train"/"dev" so the dev set holds round((1 - ratio) * N) items.

    Labels with at least ``min_stratum`` examples get proportional dev
    quotas; the rest are pooled and split at random. Quota remainders are
    settled by largest fractional part.
    """
    n = len(labels)
    order = rng.permutation(n)
    n_dev = int(round((1 - ratio) * n))
    counts: dict[int, int] = {}
    for lab in labels:
        counts[lab] = counts.get(lab, 0) + 1
    groups: dict[object, list[int]] = {}
    for i in order:
        key = labels[i] if counts[labels[i]] >= min_stratum else "pool"
        groups.setdefault(key, []).append(int(i))
    keys = sorted(groups, key=lambda g: (g == "pool", g if g != "pool" else -1))
    quota = {g: (1 - ratio) * len(groups[g]) for g in keys}
    alloc = {g: int(np.floor(quota[g])) for g in keys}
    short = n_dev - sum(alloc.values())
    for g in sorted(keys, key=lambda g: -(quota[g] - alloc[g]))[:max(0, short)]:
        alloc[g] += 1
    split = ["train"] * n
    for g in keys:
        for i in groups[g][:alloc[g]]:
            split[i] = "dev"
    return split


def extract_hashtag_corpus(tweets: Sequence[tuple[str, Sequence[str]]],
                           candidates: HashtagCandidateSet, vocab: Vocabulary,
                           split_ratio: float = 0.9, seed: int = 0,
                           max_len: int = 30) -> HashtagCorpus:
    """Label prepared tweets with their most frequent candidate tag.

    ``tweets`` holds (id, tokens) pairs already tokenized and phrase-merged.
    Ties in corpus frequency go to the better vocabulary rank. Every
    hashtag is removed from the input; tweets left empty are dropped.
    """
    if not len(candidates):
        raise ValueError("empty candidate set")
    index = {t: i for i, t in enumerate(candidates.tags)}
    ids, seqs, targets = [], [], []
    for rid, tokens in tweets:
        present = {t for t in tokens if t in index}
        if not present:
            continue
        label = min(present, key=lambda t: (-vocab.count(t), vocab.id(t)))
        stripped = [t for t in tokens if not is_hashtag(t)]
        if not stripped:
            continue
        ids.append(rid)
        seqs.append(encode(stripped, vocab, max_len))
        targets.append(index[label])
    if not ids:
        raise ValueError("no tweets contain a candidate hashtag")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ids))
    ids = [ids[i] for i in perm]
    seqs = [seqs[i] for i in perm]
    targets = [targets[i] for i in perm]
    split = stratified_split(targets, split_ratio, rng)
    logger.info("hashtag corpus: %d tweets (%d dev)", len(ids), split.count("dev"))
    return HashtagCorpus(ids, seqs, targets, split, candidates)


# --------------------------------------------------------------------------

@dataclass
class PretrainConfig:
    hidden: int = 128
    max_epochs: int = 50
    patience: int = 3
    batch_size: int = 32
    rho: float = 0.95
    eps: float = 1e-6
    lr: float = 1.0
    split_ratio: float = 0.9
    seed: int = 0


@dataclass
class PretrainedEncoder:
    embedding: np.ndarray
    oov: np.ndarray
    lstm: LstmParams
    candidates: HashtagCandidateSet
    dev_accuracy: float
    history: list[float] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.embedding.shape[1]

    @property
    def hidden(self) -> int:
        return self.lstm.hidden

    def tensors(self) -> dict[str, np.ndarray]:
        return {"embedding": self.embedding, "oov": self.oov, "lstm.W": self.lstm.W,
                "lstm.U": self.lstm.U, "lstm.b": self.lstm.b}

    @classmethod
    def from_tensors(cls, t: dict, candidates: HashtagCandidateSet, dev_accuracy: float,
                     history=()) -> PretrainedEncoder:
        return cls(t["embedding"], t["oov"], LstmParams(t["lstm.W"], t["lstm.U"], t["lstm.b"]),
                   candidates, dev_accuracy, list(history))


def _accuracy(net: SequenceClassifier, seqs, targets) -> float:
    if not seqs:
        return 0.0
    pred = net.predict_proba(seqs).argmax(axis=1)
    return float(np.mean(pred == np.asarray(targets)))


def pretrain_encoder(corpus: HashtagCorpus, init_emb: EmbeddingMatrix,
                     config: PretrainConfig = PretrainConfig()) -> PretrainedEncoder:
    """Train embedding -> LSTM -> softmax(tags) with AdaDelta and keep the
    epoch with the best dev accuracy (stopping after ``patience`` epochs
    without improvement)."""
    if len(set(corpus.targets)) < 2:
        raise ValueError("need at least two distinct hashtag targets")
    rng = np.random.default_rng(config.seed)
    net = SequenceClassifier.initialize(init_emb.input_vectors, len(corpus.candidates), rng,
                                        hidden=config.hidden, oov=oov_vector(init_emb))
    train_x, train_y = corpus.part("train")
    dev_x, dev_y = corpus.part("dev")
    weights = np.ones(len(corpus.candidates))
    state = adadelta_init(net.params)

    def step(p, g, s):
        return adadelta_step(p, g, s, config.rho, config.eps, config.lr)

    best_acc = _accuracy(net, dev_x, dev_y)
    best = net.copy()
    history = []
    since_best = 0
    for epoch in range(config.max_epochs):
        loss, state = run_epoch(net, step, state, train_x, train_y, weights,
                                config.batch_size, rng, train_dropout=False)
        acc = _accuracy(net, dev_x, dev_y)
        history.append(acc)
        logger.info("pretrain epoch %d: loss %.4f dev acc %.4f", epoch + 1, loss, acc)
        if epoch == 0 or acc > best_acc:
            best_acc, best, since_best = acc, net.copy(), 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break
    p = best.params
    return PretrainedEncoder(p["embedding"], best.oov,
                             LstmParams(p["lstm.W"], p["lstm.U"], p["lstm.b"]),
                             corpus.candidates, best_acc, history)
