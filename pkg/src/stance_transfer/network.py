"""The sequence classifier shared by hashtag pretraining and stance fine-tuning:
embedding -> LSTM -> [dense ReLU with dropout] -> softmax."""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from .corpus import PAD
from .neural import (
    DenseParams,
    DropoutSpec,
    LstmParams,
    NonDeterministicLoss,
    dense_backward,
    dense_forward,
    lstm_backward,
    lstm_forward,
    weighted_cross_entropy,
)

logger = logging.getLogger(__name__)

ENCODER_KEYS = ("embedding", "lstm.W", "lstm.U", "lstm.b")


class Diverged(FloatingPointError):
    pass


def pad_batch(seqs: Sequence[Sequence[int]]) -> np.ndarray:
    """Front-pad id sequences with ``PAD`` into a (B, T) array."""
    T = max(1, max(len(s) for s in seqs))
    out = np.full((len(seqs), T), PAD, dtype=np.int64)
    for r, s in enumerate(seqs):
        if len(s):
            out[r, T - len(s):] = s
    return out


class SequenceClassifier:
    """Trainable parameters live in ``params`` (a name -> array dict, the unit
    the optimizers and checkpoints work on). The OOV vector and the zero pad
    row are frozen and kept outside it.
    """

    def __init__(self, params: dict[str, np.ndarray], oov: np.ndarray, dropout: float = 0.0):
        self.params = params
        self.oov = np.asarray(oov, dtype=params["embedding"].dtype)
        self.dropout = dropout

    @property
    def has_hidden(self) -> bool:
        return "dense.W" in self.params

    @property
    def n_classes(self) -> int:
        return self.params["out.W"].shape[1]

    @classmethod
    def initialize(cls, embedding: np.ndarray, n_classes: int, rng, hidden: int = 128,
                   lstm: LstmParams | None = None, dense: int | None = None,
                   dropout: float = 0.0, oov: np.ndarray | None = None) -> SequenceClassifier:
        """Build a network around an existing embedding table.

        When ``lstm`` is None the recurrent layer is freshly initialized.
        The output head (and the dense layer, if ``dense`` is set) is
        always random.
        """
        dt = np.float32
        emb = np.array(embedding, dtype=dt)
        if lstm is None:
            lstm = LstmParams.initialize(emb.shape[1], hidden, rng, dt)
        params = {
            "embedding": emb,
            "lstm.W": np.array(lstm.W, dtype=dt),
            "lstm.U": np.array(lstm.U, dtype=dt),
            "lstm.b": np.array(lstm.b, dtype=dt),
        }
        H = lstm.hidden
        head_in = H
        if dense:
            d = DenseParams.initialize(H, dense, "relu", rng, dt)
            params["dense.W"], params["dense.b"] = d.W, d.b
            head_in = dense
        o = DenseParams.initialize(head_in, n_classes, "softmax", rng, dt)
        params["out.W"], params["out.b"] = o.W, o.b
        if oov is None:
            oov = emb.mean(axis=0, dtype=np.float64)
        return cls(params, oov, dropout)

    def astype(self, dtype) -> SequenceClassifier:
        return SequenceClassifier({k: v.astype(dtype) for k, v in self.params.items()},
                                  self.oov.astype(dtype), self.dropout)

    def copy(self) -> SequenceClassifier:
        return SequenceClassifier({k: v.copy() for k, v in self.params.items()},
                                  self.oov.copy(), self.dropout)

    @property
    def lstm(self) -> LstmParams:
        p = self.params
        return LstmParams(p["lstm.W"], p["lstm.U"], p["lstm.b"])

    # ------------------------------------------------------------------

    def _lookup(self, ids: np.ndarray):
        emb = self.params["embedding"]
        V = emb.shape[0]
        table = np.concatenate([emb, self.oov[None], np.zeros((1, emb.shape[1]), emb.dtype)])
        # OOV (-1) -> row V, PAD (-2) -> row V + 1
        rows = np.where(ids >= 0, ids, V - ids - 1)
        return table[rows], ids != PAD

    def _forward(self, ids: np.ndarray, train: bool, rng):
        p = self.params
        X, mask = self._lookup(ids)
        h, lcache = lstm_forward(X, self.lstm, mask=mask)
        dcache = None
        if self.has_hidden:
            spec = DropoutSpec(self.dropout, train)
            h, dcache = dense_forward(h, DenseParams(p["dense.W"], p["dense.b"], "relu"), spec, rng)
        probs, ocache = dense_forward(h, DenseParams(p["out.W"], p["out.b"], "softmax"))
        return probs, (ids, lcache, dcache, ocache)

    def loss_and_grads(self, seqs, golds, class_weights, train: bool = False, rng=None):
        """Mean weighted cross entropy over the batch and its gradients."""
        ids = seqs if isinstance(seqs, np.ndarray) else pad_batch(seqs)
        probs, (ids, lcache, dcache, ocache) = self._forward(ids, train, rng)
        loss, dlogits = weighted_cross_entropy(probs, golds, class_weights)
        grads = {}
        grads["out.W"], grads["out.b"], dh = dense_backward(dlogits, ocache)
        if dcache is not None:
            grads["dense.W"], grads["dense.b"], dh = dense_backward(dh, dcache)
        lg, dX, _, _ = lstm_backward(dh, lcache)
        grads["lstm.W"], grads["lstm.U"], grads["lstm.b"] = lg.W, lg.U, lg.b
        emb = self.params["embedding"]
        d_emb = np.zeros_like(emb)
        real = ids >= 0
        np.add.at(d_emb, ids[real], dX[real])
        grads["embedding"] = d_emb
        return loss, grads

    def predict_proba(self, seqs: Sequence[Sequence[int]], batch_size: int = 256) -> np.ndarray:
        out = []
        for start in range(0, len(seqs), batch_size):
            probs, _ = self._forward(pad_batch(seqs[start:start + batch_size]), False, None)
            out.append(probs)
        if not out:
            return np.zeros((0, self.n_classes), dtype=self.params["out.W"].dtype)
        return np.concatenate(out)

    def mean_loss(self, seqs, golds, class_weights=None, batch_size: int = 256) -> float:
        """Inference-mode loss averaged over all examples."""
        if class_weights is None:
            class_weights = np.ones(self.n_classes)
        probs = self.predict_proba(seqs, batch_size).astype(np.float64)
        loss, _ = weighted_cross_entropy(probs, np.asarray(golds), class_weights)
        return loss

    # flat-vector view for gradient checking

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.params.values()])

    def unflat(self, theta: np.ndarray) -> dict[str, np.ndarray]:
        out, off = {}, 0
        for k, v in self.params.items():
            out[k] = theta[off:off + v.size].reshape(v.shape).astype(v.dtype)
            off += v.size
        return out

    def loss_fn(self, seqs, golds, class_weights, train: bool = False, rng=None):
        """Closure over a batch: flat float64 params -> (loss, flat grad).

        Gradient checks need inference mode; active dropout is refused.
        """
        if train and self.has_hidden and self.dropout > 0:
            raise NonDeterministicLoss("non-deterministic loss")

        def fn(theta):
            net = SequenceClassifier(self.unflat(theta), self.oov, self.dropout)
            loss, grads = net.loss_and_grads(seqs, golds, class_weights, train=train, rng=rng)
            return loss, np.concatenate([grads[k].ravel() for k in net.params])
        return fn


def run_epoch(net: SequenceClassifier, step, opt_state, seqs, golds, class_weights,
              batch_size: int, rng: np.random.Generator, train_dropout: bool = True):
    """One shuffled pass of minibatch updates. ``step(params, grads, state)``
    is an optimizer step. Returns (mean batch loss, optimizer state)."""
    order = rng.permutation(len(seqs))
    golds = np.asarray(golds)
    losses = []
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        loss, grads = net.loss_and_grads([seqs[i] for i in idx], golds[idx], class_weights,
                                         train=train_dropout, rng=rng)
        if not np.isfinite(loss):
            raise Diverged("diverged")
        net.params, opt_state = step(net.params, grads, opt_state)
        losses.append(loss)
    return float(np.mean(losses)) if losses else 0.0, opt_state
