from __future__ import annotations

from enum import IntEnum


class StanceLabel(IntEnum):
    FAVOR = 0
    AGAINST = 1
    NONE = 2

    @classmethod
    def parse(cls, value) -> StanceLabel:
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            try:
                return cls[value.strip().upper()]
            except KeyError:
                raise ValueError(f"unknown stance label {value!r}") from None
        return cls(int(value))


LABELS = tuple(StanceLabel)
