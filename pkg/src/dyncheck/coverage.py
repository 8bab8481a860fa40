"""Static-dynamic coupling: relevance reports, filtering and coverage files.

Relevance report format, one entry per line::

    file:line<TAB>error-class<TAB>tool

Blank lines and lines starting with ``#`` are ignored.  Every location may
appear once, and all entries must name the same tool.

Coverage files are named ``<prefix>.<process-tag>.cov`` and hold the
visited relevant locations as sorted ``file:line`` lines.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .reports import COVERAGE, ErrorReport
from .trace import FunctionCall, Memory, SourceLoc, TraceEvent


class ReportSchemaError(ValueError):
    pass


class MissingCoverageError(FileNotFoundError):
    pass


@dataclass(frozen=True)
class RelevanceReport:
    entries: tuple[tuple[SourceLoc, str], ...]
    source_tool: str = ""

    def __post_init__(self):
        locs = [loc for loc, _ in self.entries]
        if len(set(locs)) != len(locs):
            raise ReportSchemaError("duplicate location in relevance report")
        object.__setattr__(self, "_locations", frozenset(locs))
        object.__setattr__(self, "_classes", dict(self.entries))

    @property
    def locations(self) -> frozenset[SourceLoc]:
        return self._locations

    def error_class(self, loc: SourceLoc) -> str:
        return self._classes[loc]

    def __len__(self) -> int:
        return len(self.entries)


def parse_report(text: str) -> RelevanceReport:
    entries = []
    seen = set()
    tools = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = raw.rstrip("\r\n").split("\t")
        if len(fields) != 3:
            raise ReportSchemaError(f"line {lineno}: expected 3 tab-separated fields, got {len(fields)}")
        loc_text, cls, tool = (f.strip() for f in fields)
        try:
            loc = SourceLoc.parse(loc_text)
        except ValueError as e:
            raise ReportSchemaError(f"line {lineno}: {e}") from None
        if not cls or not tool:
            raise ReportSchemaError(f"line {lineno}: empty error class or tool")
        if loc in seen:
            raise ReportSchemaError(f"line {lineno}: duplicate location {loc}")
        seen.add(loc)
        tools.add(tool)
        entries.append((loc, cls))
    if len(tools) > 1:
        raise ReportSchemaError(f"report mixes tools: {', '.join(sorted(tools))}")
    return RelevanceReport(tuple(entries), tools.pop() if tools else "")


def load_report(path: str | Path) -> RelevanceReport:
    return parse_report(Path(path).read_text(encoding="utf-8"))


def format_report(report: RelevanceReport) -> str:
    tool = report.source_tool or "unknown"
    return "".join(f"{loc}\t{cls}\t{tool}\n" for loc, cls in report.entries)


def mark_trace(events: Iterable[TraceEvent], report: RelevanceReport) -> Iterator[TraceEvent]:
    """Set the relevance flag on every call/memory event from ``report``."""
    relevant = report.locations
    for ev in events:
        if isinstance(ev, Memory):
            rel = ev.location in relevant
            if rel != ev.is_relevant_marked:
                ev = Memory(rel, ev.address, ev.is_write, ev.location)
        elif isinstance(ev, FunctionCall):
            rel = ev.location in relevant
            if rel != ev.is_relevant_marked:
                ev = FunctionCall(rel, ev.callee, ev.args, ev.location)
        yield ev


def filter_trace(events: Iterable[TraceEvent], report: RelevanceReport) -> Iterator[TraceEvent]:
    """Drop memory events at unreported locations and mark the rest.

    Function calls are always kept, since contracts need the full call
    history; only their relevance flag depends on the report.
    """
    relevant = report.locations
    for ev in events:
        if isinstance(ev, Memory):
            if ev.location not in relevant:
                continue
            if not ev.is_relevant_marked:
                ev = Memory(True, ev.address, ev.is_write, ev.location)
        elif isinstance(ev, FunctionCall):
            rel = ev.location in relevant
            if rel != ev.is_relevant_marked:
                ev = FunctionCall(rel, ev.callee, ev.args, ev.location)
        yield ev


# ------------------------------------------------------------ coverage files


@dataclass(frozen=True)
class CoverageFile:
    process_tag: str
    visited: frozenset[SourceLoc]


def coverage_path(prefix: str | Path, process_tag: str) -> Path:
    prefix = Path(prefix)
    return prefix.with_name(f"{prefix.name}.{process_tag}.cov")


def _sort_key(loc: SourceLoc):
    return (loc.file, loc.line)


def write_coverage(prefix: str | Path, process_tag: str, visited: Iterable[SourceLoc]) -> Path:
    path = coverage_path(prefix, process_tag)
    lines = sorted(set(visited), key=_sort_key)
    path.write_text("".join(f"{loc}\n" for loc in lines), encoding="utf-8")
    return path


def read_coverage(path: str | Path) -> CoverageFile:
    path = Path(path)
    visited = set()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if line.strip():
            try:
                visited.add(SourceLoc.parse(line.strip()))
            except ValueError as e:
                raise ReportSchemaError(f"{path}:{lineno}: {e}") from None
    tag = path.name[:-len(".cov")].rsplit(".", 1)[-1]
    return CoverageFile(tag, frozenset(visited))


def find_coverage_files(prefix: str | Path) -> list[Path]:
    prefix = Path(prefix)
    parent = prefix.parent if str(prefix.parent) else Path(".")
    return sorted(parent.glob(f"{glob_escape(prefix.name)}.*.cov"))


def glob_escape(name: str) -> str:
    return re.sub(r"([*?\[])", r"[\1]", name)


def normalize_class(error_class: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", error_class.lower()).strip("-")


def coverage_errors(visited_sets: Iterable[Iterable[SourceLoc]], report: RelevanceReport) -> list[ErrorReport]:
    """One coverage error per reported location missing from every visited set."""
    union: set[SourceLoc] = set()
    for visited in visited_sets:
        union.update(visited)
    out = []
    for loc in sorted(report.locations - union, key=_sort_key):
        cls = report.error_class(loc)
        out.append(ErrorReport(
            kind=COVERAGE,
            function="",
            scope=None,
            messages=(
                f"{loc} was reported by {report.source_tool or 'a static tool'} but never visited",
                f"reported class: {cls}",
                f"normalized class: {normalize_class(cls)}",
            ),
            error_class=normalize_class(cls),
            trigger=loc,
            locations=(loc,),
        ))
    return out


def check_coverage(prefix: str | Path, report: RelevanceReport) -> list[ErrorReport]:
    """Collate all ``<prefix>.*.cov`` files against ``report``."""
    files = find_coverage_files(prefix)
    if not files:
        raise MissingCoverageError(f"no coverage files match {prefix}.*.cov")
    return coverage_errors((read_coverage(f).visited for f in files), report)
