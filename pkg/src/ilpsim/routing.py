"""Longest-prefix routing over hierarchical ILP addresses."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .ilp import IlpAddress, parse_address


class DuplicateRoute(ValueError):
    pass


@dataclass
class RouteTable:
    own_address: IlpAddress
    entries: dict[tuple[str, ...], str] = field(default_factory=dict)

    def insert(self, prefix: IlpAddress | str, next_hop: str) -> None:
        if isinstance(prefix, str):
            prefix = parse_address(prefix)
        if prefix.segments in self.entries:
            raise DuplicateRoute(str(prefix))
        self.entries[prefix.segments] = next_hop

    def remove(self, prefix: IlpAddress | str) -> None:
        if isinstance(prefix, str):
            prefix = parse_address(prefix)
        self.entries.pop(prefix.segments, None)

    def lookup(self, destination: IlpAddress) -> Optional[str]:
        best: Optional[tuple[str, ...]] = None
        for prefix in self.entries:
            if destination.segments[: len(prefix)] == prefix:
                if best is None or len(prefix) > len(best):
                    best = prefix
        return self.entries[best] if best is not None else None

    def as_list(self) -> list[dict]:
        return [
            {"prefix": ".".join(prefix), "next_hop": hop}
            for prefix, hop in sorted(self.entries.items())
        ]
