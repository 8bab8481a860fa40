"""Error reports and their text / machine renderings."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

from .trace import SourceLoc

VIOLATION = "violation"
COVERAGE = "coverage"


@dataclass(frozen=True)
class ErrorReport:
    kind: str
    function: str
    scope: str | None
    messages: tuple[str, ...]
    error_class: str | None
    trigger: SourceLoc | None
    locations: tuple[SourceLoc, ...] = ()
    seq: int = 0
    trace: str = ""

    @property
    def is_violation(self) -> bool:
        return self.kind == VIOLATION

    def with_trace(self, tag: str) -> "ErrorReport":
        return ErrorReport(self.kind, self.function, self.scope, self.messages,
                           self.error_class, self.trigger, self.locations, self.seq, tag)

    def to_record(self) -> dict:
        return {
            "kind": self.kind,
            "function": self.function,
            "scope": self.scope,
            "class": self.error_class,
            "messages": list(self.messages),
            "trigger": str(self.trigger) if self.trigger else None,
            "locations": [str(loc) for loc in self.locations],
            "seq": self.seq,
            "trace": self.trace,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "ErrorReport":
        return cls(
            kind=rec["kind"],
            function=rec["function"],
            scope=rec["scope"],
            messages=tuple(rec["messages"]),
            error_class=rec["class"],
            trigger=SourceLoc.parse(rec["trigger"]) if rec["trigger"] else None,
            locations=tuple(SourceLoc.parse(s) for s in rec["locations"]),
            seq=rec["seq"],
            trace=rec.get("trace", ""),
        )

    def format_text(self) -> str:
        where = f" at {self.trigger}" if self.trigger else ""
        if self.kind == COVERAGE:
            head = f"coverage error{where}: statically reported location was never executed"
        else:
            head = f"contract violation in {self.scope} of {self.function}{where}"
        if self.trace:
            head = f"[{self.trace}] {head}"
        lines = [head]
        lines.extend(f"  - {m}" for m in self.messages)
        others = [str(loc) for loc in self.locations if loc != self.trigger]
        if others:
            lines.append("  involved: " + ", ".join(others))
        return "\n".join(lines)


def machine_lines(reports: Iterable[ErrorReport]) -> str:
    return "".join(json.dumps(r.to_record(), sort_keys=True) + "\n" for r in reports)
