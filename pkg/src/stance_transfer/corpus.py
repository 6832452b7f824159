"""Tweet text normalization: tokenizing, stream filtering, two-pass phrase
merging, vocabulary construction and id encoding."""

from __future__ import annotations

import json
import logging
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

logger = logging.getLogger(__name__)

URL_TOKEN = "<url>"
OOV = -1
PAD = -2

_URL_RE = re.compile(r"^(?:https?://|www\.)\S*$", re.IGNORECASE)


class CorpusError(ValueError):
    """Raised for empty or malformed corpus input."""


@dataclass(frozen=True)
class TweetRecord:
    id: str
    text: str
    topic: str | None = None
    stance: str | None = None

    def __post_init__(self):
        if not self.id:
            raise CorpusError("tweet id must be non-empty")
        if not self.text.strip():
            raise CorpusError(f"tweet {self.id!r} has empty text")

    @property
    def hashtags(self) -> list[str]:
        return [tok for tok in tokenize(self.text) if is_hashtag(tok)]

    def to_json(self) -> dict:
        out = {"id": self.id, "text": self.text}
        if self.topic is not None:
            out["topic"] = self.topic
        if self.stance is not None:
            out["stance"] = self.stance
        return out


def is_hashtag(token: str) -> bool:
    return token.startswith("#") and len(token) > 1


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch)[0] in "PS" and not unicodedata.category(ch) == "So"


def is_punctuation(token: str) -> bool:
    """True for tokens made only of punctuation/symbol characters."""
    return bool(token) and all(_is_punct(ch) for ch in token)


def _keeps_prefix(chunk: str, i: int) -> bool:
    # '#' and '@' stay attached when they open a word.
    return chunk[i] in "#@" and i + 1 < len(chunk) and not _is_punct(chunk[i + 1])


def _split_chunk(chunk: str) -> list[str]:
    if chunk == URL_TOKEN:
        return [chunk]
    if _URL_RE.match(chunk):
        return [URL_TOKEN]
    start, end = 0, len(chunk)
    lead = []
    while start < end and _is_punct(chunk[start]) and not _keeps_prefix(chunk, start):
        lead.append(chunk[start])
        start += 1
    trail = []
    while end > start and _is_punct(chunk[end - 1]):
        trail.append(chunk[end - 1])
        end -= 1
    core = [chunk[start:end]] if end > start else []
    return lead + core + trail[::-1]


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace and detach edge punctuation.

    URLs become ``<url>``; ``#`` and ``@`` prefixes stay on their word.

    >>> tokenize("Al Gore is a politician, not a scientist")
    ['al', 'gore', 'is', 'a', 'politician', ',', 'not', 'a', 'scientist']
    """
    tokens = []
    for chunk in text.lower().split():
        tokens.extend(_split_chunk(chunk))
    return tokens


def filter_stream(records: Iterable[TweetRecord]) -> list[TweetRecord]:
    """Drop retweets (``rt @`` prefix) and exact duplicate texts."""
    seen = set()
    kept = []
    for rec in records:
        if rec.text.lower().startswith("rt @"):
            continue
        if rec.text in seen:
            continue
        seen.add(rec.text)
        kept.append(rec)
    return kept


# --------------------------------------------------------------------------
# phrases

@dataclass
class PhraseModel:
    """Per-pass bigram merge tables.

    ``merges[k]`` maps an adjacent pair to its merged token for pass ``k``;
    ``scores[k]`` holds the score that admitted it.
    """

    merges: list[dict[tuple[str, str], str]]
    scores: list[dict[tuple[str, str], float]]
    delta: int
    thresholds: list[float]

    @property
    def pass_count(self) -> int:
        return len(self.merges)

    def __post_init__(self):
        if self.pass_count not in (1, 2):
            raise ValueError("pass_count must be 1 or 2")

    def to_tsv(self) -> str:
        lines = [f"#delta={self.delta}\tpasses={self.pass_count}\t"
                 f"thresholds={','.join(repr(t) for t in self.thresholds)}"]
        for k, table in enumerate(self.merges):
            for (a, b) in sorted(table):
                lines.append(f"{k}\t{a}\t{b}\t{self.scores[k][(a, b)]!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_tsv(cls, text: str) -> PhraseModel:
        lines = text.splitlines()
        header = dict(part.split("=", 1) for part in lines[0].lstrip("#").split("\t"))
        passes = int(header["passes"])
        merges: list[dict] = [{} for _ in range(passes)]
        scores: list[dict] = [{} for _ in range(passes)]
        for line in lines[1:]:
            k, a, b, score = line.split("\t")
            merges[int(k)][(a, b)] = f"{a}_{b}"
            scores[int(k)][(a, b)] = float(score)
        thresholds = [float(t) for t in header["thresholds"].split(",")]
        return cls(merges, scores, int(header["delta"]), thresholds)


def phrase_scores(corpus: Sequence[Sequence[str]], delta: int) -> dict[tuple[str, str], float]:
    """Score every adjacent pair of word tokens (no punctuation, no URLs).

    score(a, b) = (count(ab) - delta) * V / (count(a) * count(b)), V being the
    number of distinct tokens. Computed with a single division so the result
    is the correctly rounded value of the exact ratio.
    """
    if not corpus:
        raise CorpusError("empty corpus")
    unigrams: Counter = Counter()
    bigrams: Counter = Counter()
    for seq in corpus:
        unigrams.update(seq)
        for a, b in zip(seq, seq[1:]):
            if _phrase_eligible(a) and _phrase_eligible(b):
                bigrams[a, b] += 1
    if not unigrams:
        raise CorpusError("empty corpus")
    vocab_size = len(unigrams)
    return {
        pair: ((n - delta) * vocab_size) / (unigrams[pair[0]] * unigrams[pair[1]])
        for pair, n in bigrams.items()
    }


def _phrase_eligible(token: str) -> bool:
    return token != URL_TOKEN and not is_punctuation(token)


def _apply_pass(seq: Sequence[str], table: dict[tuple[str, str], str]) -> list[str]:
    out = []
    i = 0
    while i < len(seq):
        if i + 1 < len(seq) and (seq[i], seq[i + 1]) in table:
            out.append(table[seq[i], seq[i + 1]])
            i += 2
        else:
            out.append(seq[i])
            i += 1
    return out


def learn_phrases(corpus: Sequence[Sequence[str]], delta: int = 5,
                  threshold: float | Sequence[float] = 100.0, passes: int = 1) -> PhraseModel:
    """Learn bigram merges; with ``passes=2`` the second pass runs on the
    output of the first, so phrases of up to four words can form.

    ``threshold`` may be one value for all passes or one per pass.
    """
    if isinstance(threshold, (int, float)):
        thresholds = [float(threshold)] * passes
    else:
        thresholds = [float(t) for t in threshold]
        if len(thresholds) != passes:
            raise ValueError(f"expected {passes} thresholds, got {len(thresholds)}")
    current = [list(seq) for seq in corpus]
    merges, kept_scores = [], []
    for k in range(passes):
        scores = phrase_scores(current, delta)
        admitted = {pair: s for pair, s in scores.items() if s >= thresholds[k]}
        table = {pair: f"{pair[0]}_{pair[1]}" for pair in admitted}
        logger.info("phrase pass %d: %d merges", k + 1, len(table))
        merges.append(table)
        kept_scores.append(admitted)
        if k + 1 < passes:
            current = [_apply_pass(seq, table) for seq in current]
    return PhraseModel(merges, kept_scores, delta, thresholds)


def apply_phrases(seq: Sequence[str], model: PhraseModel) -> list[str]:
    out = list(seq)
    for table in model.merges:
        out = _apply_pass(out, table)
    return out


# --------------------------------------------------------------------------
# vocabulary

@dataclass
class Vocabulary:
    tokens: list[str]
    counts: list[int]
    min_count: int
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise CorpusError("vocabulary tokens must be unique")

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def id(self, token: str) -> int:
        return self.index.get(token, OOV)

    def count(self, token: str) -> int:
        i = self.index.get(token)
        return 0 if i is None else self.counts[i]

    def to_text(self) -> str:
        lines = [f"#min_count={self.min_count}"]
        lines += [f"{tok}\t{n}" for tok, n in zip(self.tokens, self.counts)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> Vocabulary:
        lines = text.splitlines()
        if not lines or not lines[0].startswith("#min_count="):
            raise CorpusError("vocabulary file lacks '#min_count=' header")
        min_count = int(lines[0].split("=", 1)[1])
        tokens, counts = [], []
        for line in lines[1:]:
            tok, n = line.rsplit("\t", 1)
            tokens.append(tok)
            counts.append(int(n))
        return cls(tokens, counts, min_count)


def build_vocabulary(corpus: Iterable[Sequence[str]], min_count: int = 100) -> Vocabulary:
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter = Counter()
    for seq in corpus:
        counts.update(seq)
    kept = sorted(((t, n) for t, n in counts.items() if n >= min_count),
                  key=lambda tn: (-tn[1], tn[0]))
    if not kept:
        raise CorpusError("vocabulary empty")
    return Vocabulary([t for t, _ in kept], [n for _, n in kept], min_count)


def encode(seq: Sequence[str], vocab: Vocabulary, max_len: int = 30) -> list[int]:
    """Map tokens to ids (``OOV`` for unknowns), keeping the final
    ``max_len`` tokens."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    return [vocab.id(tok) for tok in seq[-max_len:]]


def decode(ids: Sequence[int], vocab: Vocabulary, oov_token: str = "<oov>") -> list[str]:
    return [vocab.tokens[i] if i >= 0 else oov_token for i in ids]


# --------------------------------------------------------------------------
# pipeline helper and I/O

def prepare_tokens(text: str, phrases: PhraseModel | None = None,
                   stop_tokens: Iterable[str] = ()) -> list[str]:
    """Tokenize, drop configured stop tokens, then merge phrases."""
    stops = set(stop_tokens)
    tokens = [t for t in tokenize(text) if t not in stops]
    if phrases is not None:
        tokens = apply_phrases(tokens, phrases)
    return tokens


def iter_tweets(path: str | Path) -> Iterator[TweetRecord]:
    """Read JSON-lines tweets; malformed lines raise with their line number."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                yield TweetRecord(str(obj["id"]), obj["text"], obj.get("topic"), obj.get("stance"))
            except (json.JSONDecodeError, KeyError, TypeError, CorpusError) as exc:
                raise CorpusError(f"{path}: line {lineno}: {exc}") from exc


def write_jsonl(path: str | Path, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def read_jsonl(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
