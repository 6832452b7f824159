"""SemEval stance TSV files: header ``ID<TAB>Target<TAB>Tweet<TAB>Stance``."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

HEADER = ("ID", "Target", "Tweet", "Stance")


@dataclass(frozen=True)
class StanceRow:
    id: str
    target: str
    tweet: str
    stance: str


@dataclass
class StanceTable:
    rows: list[StanceRow]
    newline: str = "\n"
    trailing_newline: bool = True
    encoding: str = "utf-8"
    header: tuple[str, ...] = field(default=HEADER)

    @property
    def targets(self) -> list[str]:
        return list(dict.fromkeys(r.target for r in self.rows))

    def for_target(self, target: str) -> list[StanceRow]:
        return [r for r in self.rows if r.target == target]

    def with_stances(self, stances: list[str]) -> StanceTable:
        if len(stances) != len(self.rows):
            raise ValueError("one stance per row required")
        return replace(self, rows=[replace(r, stance=s) for r, s in zip(self.rows, stances)])

    @classmethod
    def read(cls, path: str | Path) -> StanceTable:
        raw = Path(path).read_bytes()
        try:
            text, encoding = raw.decode("utf-8"), "utf-8"
        except UnicodeDecodeError:
            text, encoding = raw.decode("latin-1"), "latin-1"
        newline = "\r\n" if "\r\n" in text else "\n"
        trailing = text.endswith(newline)
        lines = text.split(newline)
        if trailing:
            lines.pop()
        if not lines:
            raise ValueError(f"{path}: empty file")
        header = tuple(lines[0].split("\t"))
        if header != HEADER:
            raise ValueError(f"{path}: expected header {HEADER}, got {header}")
        rows = []
        for lineno, line in enumerate(lines[1:], 2):
            parts = line.split("\t")
            if len(parts) != 4:
                raise ValueError(f"{path}: line {lineno}: expected 4 tab-separated fields")
            rows.append(StanceRow(*parts))
        return cls(rows, newline, trailing, encoding, header)

    def to_text(self) -> str:
        lines = ["\t".join(self.header)]
        lines += ["\t".join((r.id, r.target, r.tweet, r.stance)) for r in self.rows]
        return self.newline.join(lines) + (self.newline if self.trailing_newline else "")

    def write(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_text().encode(self.encoding))
