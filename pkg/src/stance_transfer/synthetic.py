"""Deterministic toy data: an unlabeled tweet stream whose hashtags correlate
with stance words, plus SemEval-format labeled topic files.

Used by the test-suite and for trying the CLI without real data::

    python -m stance_transfer.synthetic OUTDIR
"""

from __future__ import annotations

import argparse
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .semeval import StanceRow, StanceTable

FILLER = (
    "the a to and of is in it you that for on my this be with are just so was "
    "have not but at all what can like do we they me if about out up how get now "
    "know time think people really one more would today"
).split()


@dataclass
class TopicSpec:
    title: str
    words: list[str]
    favor: list[str]
    against: list[str]
    tags: dict[str, list[str]]


TOPICS = [
    TopicSpec("Climate Change", ["climate", "warming", "planet", "carbon"],
              ["science", "protect", "act"], ["hoax", "scam", "lies"],
              {"FAVOR": ["#actonclimate", "#climatejustice"],
               "AGAINST": ["#climatescam", "#globalhoax"], "NONE": ["#weather"]}),
    TopicSpec("Gun Control", ["gun", "rifle", "ammo", "nra"],
              ["ban", "safety", "regulate"], ["rights", "freedom", "defend"],
              {"FAVOR": ["#guncontrolnow", "#endgunviolence"],
               "AGAINST": ["#2a", "#molonlabe"], "NONE": ["#shooting"]}),
]

SEPARABLE = TopicSpec("Toy Topic", ["toy"], ["good"], ["bad"],
                      {"FAVOR": ["#yes", "#win"], "AGAINST": ["#no", "#fail"], "NONE": ["#news"]})


def _sentence(rng, spec: TopicSpec, stance: str, hashtag: bool, noise: float = 0.1) -> str:
    words = list(rng.choice(FILLER, size=rng.integers(4, 9)))
    inserts = []
    title_words = spec.title.lower().split()
    if len(title_words) > 1 and rng.random() < 0.6:
        inserts.append(" ".join(title_words))
    inserts += list(rng.choice(spec.words, size=rng.integers(1, 3)))
    if stance == "FAVOR":
        inserts += list(rng.choice(spec.favor, size=rng.integers(1, 3)))
    elif stance == "AGAINST":
        inserts += list(rng.choice(spec.against, size=rng.integers(1, 3)))
    for w in inserts:
        words.insert(int(rng.integers(0, len(words) + 1)), str(w))
    if rng.random() < 0.3:
        words[0] = words[0].capitalize()
    text = " ".join(words) + str(rng.choice(["", "!", ".", "?"]))
    if hashtag:
        pool = spec.tags[stance]
        if rng.random() < noise:
            pool = spec.tags[str(rng.choice(["FAVOR", "AGAINST", "NONE"]))]
        text += " " + str(rng.choice(pool))
    if rng.random() < 0.1:
        text += " http://t.co/" + "".join(rng.choice(list("abcdefgh"), size=6))
    return text


def unlabeled_stream(n: int, seed: int, topics=TOPICS) -> list[dict]:
    """JSON-ready tweet records; a few retweets and duplicates are mixed in."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        spec = topics[int(rng.integers(len(topics)))]
        stance = str(rng.choice(["FAVOR", "AGAINST", "NONE"]))
        text = _sentence(rng, spec, stance, hashtag=rng.random() < 0.85)
        if rng.random() < 0.02:
            text = "RT @someone: " + text
        out.append({"id": f"u{i}", "text": text})
        if rng.random() < 0.02:
            out.append({"id": f"u{i}d", "text": text})
    return out


def labeled_topic(spec: TopicSpec, n: int, seed: int, start_id: int = 1,
                  mix=(0.4, 0.35, 0.25)) -> list[StanceRow]:
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        stance = str(rng.choice(["FAVOR", "AGAINST", "NONE"], p=list(mix)))
        text = _sentence(rng, spec, stance, hashtag=False) + " #SemST"
        rows.append(StanceRow(str(start_id + i), spec.title, text, stance))
    return rows


def separable_examples(n: int = 300, seed: int = 0) -> list[StanceRow]:
    """Balanced topic where 'good' marks FAVOR, 'bad' AGAINST, neither NONE."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        stance = ("FAVOR", "AGAINST", "NONE")[i % 3]
        rows.append(StanceRow(str(i + 1), SEPARABLE.title,
                              _sentence(rng, SEPARABLE, stance, hashtag=False), stance))
    return rows


def planted_hashtag_stream(n: int = 5000, n_tags: int = 10, seed: int = 0) -> list[dict]:
    """Each tag has three cue words; a tweet mentions one or two cues of its
    tag in 70% of cases and only filler otherwise. Tag frequencies are skewed."""
    rng = np.random.default_rng(seed)
    p = 1.0 / np.arange(1, n_tags + 1) ** 0.5
    p /= p.sum()
    out = []
    for i in range(n):
        t = int(rng.choice(n_tags, p=p))
        words = list(rng.choice(FILLER, size=rng.integers(4, 10)))
        if rng.random() < 0.7:
            for _ in range(int(rng.integers(1, 3))):
                words.insert(int(rng.integers(0, len(words) + 1)), f"cue{t}x{int(rng.integers(3))}")
        out.append({"id": f"h{i}", "text": " ".join(words) + f" #tag{t}"})
    return out


def write_toy_world(outdir: str | Path, seed: int = 7, n_unlabeled: int = 6000,
                    n_per_topic: int = 150) -> dict[str, Path]:
    """Write raw tweets, train/test TSVs and a matching pipeline config."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"raw": out / "tweets.jsonl", "train": out / "train.tsv",
             "test": out / "test.tsv", "config": out / "config.yaml"}
    with open(paths["raw"], "w", encoding="utf-8", newline="\n") as fh:
        for rec in unlabeled_stream(n_unlabeled, seed):
            fh.write(json.dumps(rec) + "\n")
    train, test = [], []
    for k, spec in enumerate(TOPICS):
        train += labeled_topic(spec, n_per_topic, seed + 100 + k, start_id=1 + k * 1000)
        test += labeled_topic(spec, n_per_topic // 3, seed + 200 + k, start_id=50001 + k * 1000)
    StanceTable(train).write(paths["train"])
    StanceTable(test).write(paths["test"])
    paths["config"].write_text(TOY_CONFIG.format(artifacts=out / "artifacts",
                                                 raw=paths["raw"], train=paths["train"]))
    return paths


TOY_CONFIG = """\
paths:
  raw: {raw}
  train: {train}
  artifacts: {artifacts}
tokenizer:
  stop_tokens: ["#semst"]
phrases:
  delta: 5
  thresholds: [0.01, 0.01]
vocab:
  min_count: 3
  max_len: 30
sgns:
  dim: 24
  window: 5
  negatives: 5
  epochs: 3
  initial_lr: 0.025
  seed: 11
tags:
  mode: similarity
  k: 5
  n: 10000
pretrain:
  hidden: 24
  max_epochs: 6
  patience: 3
  split_ratio: 0.9
  seed: 13
finetune:
  epochs: 12
  hidden: 24
  dense: 32
  dropout: 0.5
  init_source: pretrained
  seed: 17
"""


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("outdir")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args(argv)
    for name, path in write_toy_world(args.outdir, args.seed).items():
        print(f"{name}\t{path}")


if __name__ == "__main__":
    main()
