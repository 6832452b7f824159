"""Skip-gram embeddings with negative sampling, plus cosine search helpers.

The inner update loop is compiled with numba. Deterministic mode (one worker)
is bit-reproducible for a given seed; with several workers the shards update
the shared tables without locking and only statistical properties hold.
"""

from __future__ import annotations

import io
import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numba import njit

from .corpus import Vocabulary

logger = logging.getLogger(__name__)

MAGIC = b"SGNSv1"
_LCG_MUL = np.uint64(25214903917)
_LCG_ADD = np.uint64(11)


@dataclass
class SgnsConfig:
    dim: int = 256
    window: int = 10
    negatives: int = 15
    epochs: int = 5
    initial_lr: float = 0.025
    noise_power: float = 0.75
    seed: int = 1
    workers: int = 1

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.negatives < 1:
            raise ValueError("negatives must be >= 1")
        if self.initial_lr <= 0:
            raise ValueError("initial_lr must be > 0")


@dataclass
class EmbeddingMatrix:
    input_vectors: np.ndarray
    output_vectors: np.ndarray
    vocab: Vocabulary

    def __post_init__(self):
        if self.input_vectors.shape != self.output_vectors.shape:
            raise ValueError("input and output tables differ in shape")
        if self.input_vectors.shape[0] != len(self.vocab):
            raise ValueError("embedding rows do not match vocabulary size")

    @property
    def dim(self) -> int:
        return self.input_vectors.shape[1]

    def __getitem__(self, token: str) -> np.ndarray:
        return self.input_vectors[self.vocab.index[token]]

    def save(self, path: str | Path) -> None:
        V, D = self.input_vectors.shape
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<qq", V, D))
            fh.write(np.ascontiguousarray(self.input_vectors, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(self.output_vectors, dtype="<f4").tobytes())
            fh.write(self.vocab.to_text().encode("utf-8"))

    @classmethod
    def load(cls, path: str | Path) -> EmbeddingMatrix:
        data = Path(path).read_bytes()
        if data[:6] != MAGIC:
            raise ValueError(f"{path}: not an SGNSv1 embedding file")
        V, D = struct.unpack_from("<qq", data, 6)
        off = 22
        n = V * D * 4
        inp = np.frombuffer(data, dtype="<f4", count=V * D, offset=off).reshape(V, D)
        out = np.frombuffer(data, dtype="<f4", count=V * D, offset=off + n).reshape(V, D)
        vocab = Vocabulary.from_text(data[off + 2 * n:].decode("utf-8"))
        return cls(inp.astype(np.float32), out.astype(np.float32), vocab)

    def to_text(self) -> str:
        buf = io.StringIO()
        for tok, row in zip(self.vocab.tokens, self.input_vectors):
            buf.write(tok + " " + " ".join(repr(float(x)) for x in row) + "\n")
        return buf.getvalue()


class NoiseDistribution:
    """Unigram distribution raised to ``power``, stored as a cumulative table."""

    def __init__(self, counts: Sequence[int], power: float = 0.75):
        weights = np.asarray(counts, dtype=np.float64) ** power
        if len(weights) == 0 or np.any(weights <= 0):
            raise ValueError("noise distribution needs positive counts")
        self.probabilities = weights / weights.sum()
        cum = np.cumsum(self.probabilities)
        cum[-1] = 1.0
        self.cumulative = cum

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(n)
        return np.minimum(np.searchsorted(self.cumulative, u, side="right"),
                          len(self.cumulative) - 1)


# --------------------------------------------------------------------------
# compiled kernels

@njit(cache=True, nogil=True)
def _next(state):
    state[0] = state[0] * _LCG_MUL + _LCG_ADD
    return state[0]


@njit(cache=True, nogil=True)
def _uniform(state):
    return (_next(state) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True, nogil=True)
def _draw(cum, state):
    i = np.searchsorted(cum, _uniform(state), side="right")
    if i >= cum.shape[0]:
        i = cum.shape[0] - 1
    return i


@njit(cache=True, nogil=True)
def draw_noise(cum, n, seed):
    """Draw ``n`` ids with the kernel's own sampler (exposed for testing)."""
    state = np.array([np.uint64(seed)], dtype=np.uint64)
    out = np.empty(n, dtype=np.int64)
    for k in range(n):
        out[k] = _draw(cum, state)
    return out


@njit(cache=True, nogil=True)
def pair_update(center, ctx, negs, w_in, w_out, lr):
    """One ascent step on log s(u_ctx . v_c) + sum_k log s(-u_neg_k . v_c).

    ``negs`` entries < 0 are skipped. Output rows are updated in turn; the
    center row receives its accumulated step at the end.
    """
    v = w_in[center]
    acc = np.zeros_like(v)
    f = np.dot(v, w_out[ctx])
    g = lr * (1.0 - 1.0 / (1.0 + np.exp(-f)))
    acc += g * w_out[ctx]
    w_out[ctx] += g * v
    for k in range(negs.shape[0]):
        n = negs[k]
        if n < 0:
            continue
        f = np.dot(v, w_out[n])
        g = -lr / (1.0 + np.exp(-f))
        acc += g * w_out[n]
        w_out[n] += g * v
    w_in[center] += acc


@njit(cache=True, nogil=True)
def _train_span(tokens, offsets, first, last, w_in, w_out, cum, window, negatives,
                lr0, done, total, state):
    negs = np.empty(negatives, dtype=np.int64)
    for s in range(first, last):
        start = offsets[s]
        end = offsets[s + 1]
        for pos in range(start, end):
            frac = 1.0 - done / total
            if frac < 1e-4:
                frac = 1e-4
            lr = lr0 * frac
            done += 1
            b = 1 + np.int64((_next(state) >> np.uint64(33)) % np.uint64(window))
            lo = max(start, pos - b)
            hi = min(end, pos + b + 1)
            center = tokens[pos]
            for cpos in range(lo, hi):
                if cpos == pos:
                    continue
                ctx = tokens[cpos]
                for k in range(negatives):
                    n = _draw(cum, state)
                    if n == ctx:
                        n = _draw(cum, state)
                        if n == ctx:
                            n = -1
                    negs[k] = n
                pair_update(center, ctx, negs, w_in, w_out, lr)
    return done


# --------------------------------------------------------------------------

def init_embeddings(vocab_size: int, dim: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    w_in = rng.uniform(-0.5 / dim, 0.5 / dim, size=(vocab_size, dim)).astype(np.float32)
    return w_in, np.zeros((vocab_size, dim), dtype=np.float32)


def _flatten(corpus: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    toks, offsets = [], [0]
    for seq in corpus:
        ids = [i for i in seq if i >= 0]
        toks.extend(ids)
        offsets.append(len(toks))
    return np.asarray(toks, dtype=np.int64), np.asarray(offsets, dtype=np.int64)


def train_skipgram(corpus: Sequence[Sequence[int]], vocab: Vocabulary,
                   config: SgnsConfig) -> EmbeddingMatrix:
    """Train SGNS embeddings on id-encoded sentences (OOV ids are dropped)."""
    if len(vocab) < 2:
        raise ValueError("vocabulary size must be >= 2")
    tokens, offsets = _flatten(corpus)
    if tokens.size == 0:
        raise ValueError("empty corpus")
    w_in, w_out = init_embeddings(len(vocab), config.dim, config.seed)
    cum = NoiseDistribution(vocab.counts, config.noise_power).cumulative
    n_sent = len(offsets) - 1
    workers = max(1, min(config.workers, n_sent))
    bounds = np.linspace(0, n_sent, workers + 1).astype(np.int64)
    shard_words = [int(offsets[bounds[w + 1]] - offsets[bounds[w]]) for w in range(workers)]
    done = [0] * workers
    states = [np.array([np.uint64(config.seed * 1000003 + w + 1)], dtype=np.uint64)
              for w in range(workers)]

    def run(w):
        total = float(max(1, shard_words[w] * config.epochs))
        done[w] = _train_span(tokens, offsets, bounds[w], bounds[w + 1], w_in, w_out, cum,
                              config.window, config.negatives, config.initial_lr,
                              done[w], total, states[w])

    for epoch in range(config.epochs):
        if workers == 1:
            run(0)
        else:
            with ThreadPoolExecutor(workers) as pool:
                list(pool.map(run, range(workers)))
        logger.info("sgns epoch %d/%d done", epoch + 1, config.epochs)
    if not (np.all(np.isfinite(w_in)) and np.all(np.isfinite(w_out))):
        raise FloatingPointError("skip-gram training produced non-finite values")
    return EmbeddingMatrix(w_in, w_out, vocab)


def sgns_pair_loss(v: np.ndarray, u_ctx: np.ndarray, u_negs: np.ndarray) -> float:
    """Negative log-likelihood of one positive pair and its negatives."""
    def log_sig(x):
        return -np.logaddexp(0.0, -x)
    return float(-log_sig(u_ctx @ v) - np.sum(log_sig(-(u_negs @ v))))


# --------------------------------------------------------------------------
# similarity

def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("zero vector")
    # sum of elementwise products is symmetric in (a, b) bit for bit
    return float(np.clip(np.sum(a * b) / (na * nb), -1.0, 1.0))


def nearest_neighbors(query, emb: EmbeddingMatrix, k: int,
                      keep: Callable[[str], bool] | None = None,
                      exclude: str | None = None) -> list[tuple[str, float]]:
    """Top-``k`` vocabulary tokens by cosine against ``input_vectors``.

    Ties are broken by token id. ``exclude`` names the query's own token.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    q = np.asarray(query, dtype=np.float64)
    qn = np.linalg.norm(q)
    if qn == 0:
        raise ValueError("zero vector")
    mat = emb.input_vectors.astype(np.float64)
    norms = np.linalg.norm(mat, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        sims = (mat @ q) / (norms * qn)
    candidates = [
        i for i, tok in enumerate(emb.vocab.tokens)
        if norms[i] > 0 and tok != exclude and (keep is None or keep(tok))
    ]
    candidates.sort(key=lambda i: (-sims[i], i))
    return [(emb.vocab.tokens[i], float(sims[i])) for i in candidates[:k]]


def oov_vector(emb: EmbeddingMatrix) -> np.ndarray:
    """Mean of all in-vocabulary input vectors."""
    if emb.input_vectors.shape[0] == 0:
        raise ValueError("empty vocabulary")
    return emb.input_vectors.mean(axis=0, dtype=np.float64).astype(emb.input_vectors.dtype)
