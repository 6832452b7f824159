"""Pipeline configuration (one YAML/JSON file plus overrides) and run manifests."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .hashtags import PretrainConfig
from .skipgram import SgnsConfig
from .stance import FineTuneConfig

CONFIG_ENV = "STANCE_TRANSFER_CONFIG"


@dataclass
class PathsConfig:
    raw: str | None = None
    train: str | None = None
    artifacts: str = "artifacts"


@dataclass
class TokenizerConfig:
    stop_tokens: list[str] = field(default_factory=list)


@dataclass
class PhraseConfig:
    delta: int = 5
    thresholds: list[float] = field(default_factory=lambda: [200.0, 100.0])


@dataclass
class VocabConfig:
    min_count: int = 100
    max_len: int = 30


@dataclass
class TagConfig:
    mode: str = "similarity"
    k: int = 50
    n: int = 10000
    topics: list[str] | None = None


SECTIONS = {
    "paths": PathsConfig,
    "tokenizer": TokenizerConfig,
    "phrases": PhraseConfig,
    "vocab": VocabConfig,
    "sgns": SgnsConfig,
    "tags": TagConfig,
    "pretrain": PretrainConfig,
    "finetune": FineTuneConfig,
}


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    tokenizer: TokenizerConfig = field(default_factory=TokenizerConfig)
    phrases: PhraseConfig = field(default_factory=PhraseConfig)
    vocab: VocabConfig = field(default_factory=VocabConfig)
    sgns: SgnsConfig = field(default_factory=SgnsConfig)
    tags: TagConfig = field(default_factory=TagConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    finetune: FineTuneConfig = field(default_factory=FineTuneConfig)

    @classmethod
    def from_dict(cls, data: dict | None) -> PipelineConfig:
        data = dict(data or {})
        unknown = set(data) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        kwargs = {}
        for name, klass in SECTIONS.items():
            section = data.get(name) or {}
            names = {f.name for f in dataclasses.fields(klass)}
            bad = set(section) - names
            if bad:
                raise ConfigError(f"unknown keys in [{name}]: {sorted(bad)}")
            try:
                kwargs[name] = klass(**section)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"[{name}]: {exc}") from exc
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path | None = None, overrides: list[str] = ()) -> PipelineConfig:
        path = path or os.environ.get(CONFIG_ENV)
        data: dict[str, Any] = {}
        if path:
            with open(path, encoding="utf-8") as fh:
                data = yaml.safe_load(fh) or {}
        for item in overrides:
            key, sep, raw = item.partition("=")
            if not sep or "." not in key:
                raise ConfigError(f"override must look like section.key=value, got {item!r}")
            section, name = key.split(".", 1)
            data.setdefault(section, {})
            data[section][name] = yaml.safe_load(raw)
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def section_hash(self, *names: str) -> str:
        payload = {n: asdict(getattr(self, n)) for n in names}
        return sha256_bytes(json.dumps(payload, sort_keys=True).encode("utf-8"))


# --------------------------------------------------------------------------
# manifests

def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def atomic_write(path: str | Path, data: bytes | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class RunManifest:
    stage: str
    config_hash: str
    inputs: dict[str, str]
    outputs: dict[str, str]
    wall_time: float
    version: str
    notes: dict = field(default_factory=dict)

    def write(self, path: str | Path) -> None:
        atomic_write(path, json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path: str | Path) -> RunManifest:
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))


def trace_provenance(manifest_dir: str | Path, stage: str) -> dict[str, str]:
    """Every input hash reachable from ``stage`` by following each input to
    the manifest that produced it. Returns hash -> input label."""
    manifests = {p.stem: RunManifest.read(p) for p in Path(manifest_dir).glob("*.json")}
    producer = {}
    for name, m in manifests.items():
        for digest in m.outputs.values():
            producer.setdefault(digest, name)
    seen: dict[str, str] = {}
    todo = [stage]
    visited = set()
    while todo:
        name = todo.pop()
        if name in visited or name not in manifests:
            continue
        visited.add(name)
        for label, digest in manifests[name].inputs.items():
            seen.setdefault(digest, label)
            if digest in producer:
                todo.append(producer[digest])
    return seen
