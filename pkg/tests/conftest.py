import numpy as np
import pytest

from stance_transfer.corpus import Vocabulary, build_vocabulary, tokenize
from stance_transfer.skipgram import EmbeddingMatrix


def tokenized(records):
    return [(r["id"], tokenize(r["text"])) for r in records]


def random_embedding(vocab: Vocabulary, dim: int, seed: int = 0) -> EmbeddingMatrix:
    rng = np.random.default_rng(seed)
    w = rng.normal(scale=0.3, size=(len(vocab), dim)).astype(np.float32)
    return EmbeddingMatrix(w, np.zeros_like(w), vocab)


@pytest.fixture
def cue_tweets():
    """Each tweet carries one cue word that fully determines its tag."""
    rng = np.random.default_rng(4)
    filler = ["we", "the", "a", "now", "so", "it", "go", "yes"]
    out = []
    for i in range(900):
        t = int(rng.integers(4))
        words = list(rng.choice(filler, size=5))
        words.insert(int(rng.integers(6)), f"cue{t}")
        out.append((f"c{i}", words + [f"#tag{t}"]))
    vocab = build_vocabulary([toks for _, toks in out], 1)
    return out, vocab


# one PASS/FAIL line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def report_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} [{detail}]"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
