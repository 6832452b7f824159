"""Per-topic stance ensembles.

Each topic gets five networks, one per cross-validation fold, fine-tuned from
the pretrained encoder with class-weighted cross entropy and SGD with
momentum. Decoding takes a plurality vote over the members.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .labels import LABELS, StanceLabel
from .network import Diverged, SequenceClassifier, run_epoch
from .neural import LstmParams, load_checkpoint, save_checkpoint, sgd_momentum_init, sgd_momentum_step

logger = logging.getLogger(__name__)

INIT_SOURCES = ("pretrained", "random-rnn", "random-all")


@dataclass
class StanceExample:
    ids: list[int]
    gold: StanceLabel
    topic: str

    def __post_init__(self):
        if not self.ids:
            raise ValueError("stance example has an empty sequence")
        self.gold = StanceLabel.parse(self.gold)


@dataclass
class FineTuneConfig:
    lr: float = 0.015
    momentum: float = 0.9
    epochs: int = 50
    folds: int = 5
    dropout: float = 0.9
    dense: int = 128
    hidden: int = 128
    batch_size: int = 32
    init_source: str = "pretrained"
    seed: int = 0

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.init_source not in INIT_SOURCES:
            raise ValueError(f"init_source must be one of {INIT_SOURCES}")


def class_weights(counts: Sequence[int]) -> np.ndarray:
    """w_c = N / (3 * max(1, n_c)); rarer classes weigh more."""
    counts = [int(c) for c in counts]
    n = sum(counts)
    if n < 1:
        raise ValueError("no examples")
    return np.array([n / (len(counts) * max(1, c)) for c in counts])


def make_folds(n_examples: int, folds: int = 5, seed: int = 0) -> list[list[int]]:
    """Shuffle example indices and cut them into ``folds`` near-equal chunks."""
    if n_examples < folds:
        raise ValueError(f"{n_examples} examples cannot fill {folds} folds")
    order = np.random.default_rng(seed).permutation(n_examples)
    return [sorted(int(i) for i in chunk) for chunk in np.array_split(order, folds)]


def fold_train_indices(chunks: list[list[int]], k: int) -> list[int]:
    return sorted(i for j, chunk in enumerate(chunks) if j != k for i in chunk)


@dataclass
class MemberRecord:
    best_epoch: int
    val_losses: list[float]


@dataclass
class TopicModel:
    topic: str
    members: list[SequenceClassifier]
    chunks: list[list[int]]
    config: FineTuneConfig
    records: list[MemberRecord] = field(default_factory=list)
    cv_predictions: dict[int, StanceLabel] = field(default_factory=dict)
    vote_rule: str = "plurality/prob-sum/class-order"

    def __post_init__(self):
        if len(self.members) != self.config.folds:
            raise ValueError(f"expected {self.config.folds} members, got {len(self.members)}")
        shapes = {tuple((k, v.shape) for k, v in m.params.items()) for m in self.members}
        if len(shapes) != 1:
            raise ValueError("member architectures differ")

    def save(self, directory: str | Path, extra: dict | None = None) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for k, m in enumerate(self.members):
            save_checkpoint(d / f"member{k}.ckpt", {**m.params, "oov": m.oov})
        manifest = {
            "topic": self.topic,
            "fold_seed": self.config.seed,
            "config": asdict(self.config),
            "chunks": self.chunks,
            "records": [asdict(r) for r in self.records],
            "vote_rule": self.vote_rule,
            **(extra or {}),
        }
        (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory: str | Path) -> TopicModel:
        d = Path(directory)
        manifest = json.loads((d / "manifest.json").read_text())
        config = FineTuneConfig(**manifest["config"])
        members = []
        for k in range(config.folds):
            t = load_checkpoint(d / f"member{k}.ckpt")
            oov = t.pop("oov")
            members.append(SequenceClassifier(t, oov, config.dropout))
        records = [MemberRecord(**r) for r in manifest.get("records", [])]
        return cls(manifest["topic"], members, manifest["chunks"], config, records)


def _init_member(config: FineTuneConfig, rng, encoder=None, embeddings=None,
                 vocab_size: int | None = None, dim: int | None = None) -> SequenceClassifier:
    src = config.init_source
    if src == "pretrained":
        if encoder is None:
            raise ValueError("init source 'pretrained' needs a pretrained encoder")
        return SequenceClassifier.initialize(encoder.embedding, len(LABELS), rng,
                                             lstm=encoder.lstm, dense=config.dense,
                                             dropout=config.dropout, oov=encoder.oov)
    if src == "random-rnn":
        # projection layer keeps its skip-gram initialization, recurrent layer is fresh
        if embeddings is not None:
            table = embeddings.input_vectors
            oov = embeddings.input_vectors.mean(axis=0, dtype=np.float64)
        elif encoder is not None:
            table, oov = encoder.embedding, encoder.oov
        else:
            raise ValueError("init source 'random-rnn' needs embeddings or an encoder")
        return SequenceClassifier.initialize(table, len(LABELS), rng, hidden=config.hidden,
                                             dense=config.dense, dropout=config.dropout, oov=oov)
    if vocab_size is None or dim is None:
        ref = encoder.embedding if encoder is not None else (
            embeddings.input_vectors if embeddings is not None else None)
        if ref is None:
            raise ValueError("init source 'random-all' needs vocab_size and dim")
        vocab_size, dim = ref.shape
    table = rng.uniform(-0.05, 0.05, size=(vocab_size, dim)).astype(np.float32)
    return SequenceClassifier.initialize(table, len(LABELS), rng, hidden=config.hidden,
                                         dense=config.dense, dropout=config.dropout)


def train_topic(examples: Sequence[StanceExample], config: FineTuneConfig = FineTuneConfig(),
                encoder=None, embeddings=None, vocab_size: int | None = None,
                dim: int | None = None) -> TopicModel:
    """Fine-tune one network per fold and keep each at its best validation loss.

    Validation loss is the unweighted mean cross entropy on the held-out
    chunk. With ``epochs == 0`` members stay at initialization.
    """
    if not examples:
        raise ValueError("no examples")
    topic = examples[0].topic
    golds = np.array([int(e.gold) for e in examples])
    if len(set(golds.tolist())) < 2:
        raise ValueError(f"topic {topic!r}: examples span fewer than two classes")
    seqs = [e.ids for e in examples]
    chunks = make_folds(len(examples), config.folds, config.seed)
    members, records, cv = [], [], {}
    for k, val_idx in enumerate(chunks):
        rng = np.random.default_rng([config.seed, k])
        tr_idx = fold_train_indices(chunks, k)
        tr_x = [seqs[i] for i in tr_idx]
        tr_y = golds[tr_idx]
        va_x = [seqs[i] for i in val_idx]
        va_y = golds[val_idx]
        weights = class_weights(np.bincount(tr_y, minlength=len(LABELS)))
        net = _init_member(config, rng, encoder, embeddings, vocab_size, dim)
        state = sgd_momentum_init(net.params)

        def step(p, g, s):
            return sgd_momentum_step(p, g, s, config.lr, config.momentum)

        best, best_loss, best_epoch, losses = net.copy(), np.inf, 0, []
        for epoch in range(config.epochs):
            try:
                run_epoch(net, step, state, tr_x, tr_y, weights, config.batch_size, rng)
            except Diverged:
                raise Diverged(f"topic {topic!r}: fold {k} diverged") from None
            vl = net.mean_loss(va_x, va_y)
            if not np.isfinite(vl):
                raise Diverged(f"topic {topic!r}: fold {k} diverged")
            losses.append(vl)
            if vl < best_loss:
                best, best_loss, best_epoch = net.copy(), vl, epoch + 1
        logger.info("topic %s fold %d: best epoch %d val loss %.4f", topic, k, best_epoch, best_loss)
        members.append(best)
        records.append(MemberRecord(best_epoch, losses))
        if va_x:
            for i, p in zip(val_idx, best.predict_proba(va_x).argmax(axis=1)):
                cv[i] = StanceLabel(int(p))
    return TopicModel(topic, members, chunks, config, records, cv)


def vote(distributions: np.ndarray) -> StanceLabel:
    """Plurality of member argmaxes; ties go to the larger summed probability,
    then to the lower class id."""
    distributions = np.asarray(distributions, dtype=np.float64)
    votes = np.bincount(distributions.argmax(axis=1), minlength=len(LABELS))
    mass = distributions.sum(axis=0)
    tied = [c for c in range(len(LABELS)) if votes[c] == votes.max()]
    best = max(tied, key=lambda c: (mass[c], -c))
    return StanceLabel(best)


def predict(model: TopicModel, ids: Sequence[int]) -> tuple[StanceLabel, np.ndarray]:
    if not len(ids):
        raise ValueError("empty sequence")
    dists = np.stack([m.predict_proba([list(ids)])[0] for m in model.members])
    return vote(dists), dists


def predict_many(model: TopicModel, seqs: Sequence[Sequence[int]]) -> list[StanceLabel]:
    if not seqs:
        return []
    per_member = np.stack([m.predict_proba(list(seqs)) for m in model.members], axis=1)
    return [vote(d) for d in per_member]
