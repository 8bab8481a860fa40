"""Runtime contract checker.

Every call to a function with a contract creates a :class:`ContractInstance`.
Its PRE operations are decided on the spot against the call history; each
POST operation becomes an :class:`AnalysisInstance` that watches later
events until it is fulfilled or violated.  Whenever an operation resolves,
:meth:`Engine.verify_state` propagates the verdict toward the scope root and
reports a violation as soon as the root is violated.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

from .contract_db import ContractDatabase
from .contract_lang import (
    Call,
    CallTag,
    Connective,
    ContractTree,
    Formula,
    MemRead,
    MemWrite,
    Release,
    ScopeKind,
)
from .coverage import RelevanceReport, write_coverage
from .reports import VIOLATION, ErrorReport
from .trace import (
    Exit,
    FunctionCall,
    Init,
    Memory,
    SizedArg,
    SourceLoc,
    TraceEvent,
    arg_as_address,
)


class EngineError(Exception):
    pass


class ArityMismatchError(EngineError):
    pass


class TriState(enum.Enum):
    UNKNOWN = "unknown"
    FULFILLED = "fulfilled"
    VIOLATED = "violated"


U, F, V = TriState.UNKNOWN, TriState.FULFILLED, TriState.VIOLATED


def combine(connective: Connective, states: list[TriState]) -> TriState:
    """State of a compound formula given the states of its children."""
    if connective is Connective.AND:
        if V in states:
            return V
        return F if all(s is F for s in states) else U
    if connective is Connective.OR:
        if F in states:
            return F
        return V if all(s is V for s in states) else U
    if connective is Connective.XOR:
        n_fulfilled = states.count(F)
        n_violated = states.count(V)
        if n_fulfilled >= 2 or n_violated == len(states):
            return V
        if n_fulfilled == 1 and n_violated == len(states) - 1:
            return F
        return U
    raise ValueError(f"not a compound connective: {connective}")


class Kind(enum.Enum):
    PRE_CALL = "PreCall"
    POST_CALL = "PostCall"
    RELEASE = "Release"


# ------------------------------------------------------------- runtime tree


class Node:
    __slots__ = ("formula", "parent", "children", "state", "analysis", "resolved_at", "scope")

    def __init__(self, formula: Formula, parent: "Node | None", scope: "ScopeRun"):
        self.formula = formula
        self.parent = parent
        self.scope = scope
        self.state = U
        self.analysis: AnalysisInstance | None = None
        self.resolved_at: SourceLoc | None = None
        self.children = [Node(c, self, scope) for c in formula.children]

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()

    def leaves(self):
        if not self.children:
            yield self
        for c in self.children:
            yield from c.leaves()


class ScopeRun:
    __slots__ = ("kind", "owner", "root")

    def __init__(self, kind: ScopeKind, owner: "ContractInstance", formula: Formula):
        self.kind = kind
        self.owner = owner
        self.root = Node(formula, None, self)


@dataclass(frozen=True)
class Trigger:
    function: str
    args: tuple[SizedArg, ...]
    location: SourceLoc
    seq: int


class ContractInstance:
    """One dynamic occurrence of a call to a function with a contract."""

    def __init__(self, contract: ContractTree, trigger: Trigger):
        self.contract = contract
        self.trigger = trigger
        self.scopes = []
        for kind in (ScopeKind.PRE, ScopeKind.POST):
            s = contract.scope(kind)
            if s is not None:
                self.scopes.append(ScopeRun(kind, self, s.formula))

    def node_states(self) -> dict[tuple[str, int], TriState]:
        """Snapshot of every node state keyed by (scope, pre-order index)."""
        out = {}
        for s in self.scopes:
            for i, node in enumerate(s.root.walk()):
                out[(s.kind.value, i)] = node.state
        return out

    def verdict(self, kind: ScopeKind) -> TriState | None:
        for s in self.scopes:
            if s.kind is kind:
                return s.root.state
        return None


class AnalysisInstance:
    """A live checker for exactly one POST operation of one contract instance."""

    __slots__ = (
        "kind", "node", "operation", "bound_args", "live", "deliveries",
        "wants_function_events", "wants_memory_events",
        "rel_name", "rel_tag", "rel_value",
        "bad_name", "bad_tag", "bad_value", "bad_address", "bad_write",
    )

    def __init__(self, node: Node, bound_args: tuple[SizedArg, ...]):
        op = node.formula.operation
        self.node = node
        self.operation = op
        self.bound_args = bound_args
        self.live = True
        self.deliveries = 0
        self.wants_function_events = True
        self.bad_name = self.bad_tag = self.bad_value = self.bad_address = None
        self.bad_write = False
        if isinstance(op, Release):
            self.kind = Kind.RELEASE
            self.rel_name, self.rel_tag, self.rel_value = self._target(op.releaser)
            forbidden = op.forbidden
            if isinstance(forbidden, (MemRead, MemWrite)):
                try:
                    self.bad_address = arg_as_address(bound_args[forbidden.param])
                except ValueError as e:
                    raise EngineError(f"{node.scope.owner.trigger.function}: {e}") from None
                self.bad_write = isinstance(forbidden, MemWrite)
            else:
                self.bad_name, self.bad_tag, self.bad_value = self._target(forbidden)
        else:
            self.kind = Kind.POST_CALL
            self.rel_name, self.rel_tag, self.rel_value = self._target(op)
        self.wants_memory_events = self.bad_address is not None

    def _target(self, op):
        if isinstance(op, Call):
            return op.callee, None, None
        return None, op.tag, self.bound_args[op.param]

    def observe_call(self, name: str, tags: dict[str, int], args: tuple[SizedArg, ...]) -> TriState:
        if self.rel_name is not None:
            if name == self.rel_name:
                return F
        else:
            idx = tags.get(self.rel_tag)
            if idx is not None and args[idx] == self.rel_value:
                return F
        if self.bad_name is not None:
            if name == self.bad_name:
                return V
        elif self.bad_tag is not None:
            idx = tags.get(self.bad_tag)
            if idx is not None and args[idx] == self.bad_value:
                return V
        return U

    def observe_memory(self, address: int, is_write: bool) -> TriState:
        if self.bad_address == address and self.bad_write == is_write:
            return V
        return U


# -------------------------------------------------------------------- engine

_CONNECTIVE_LABEL = {
    Connective.AND: "all of",
    Connective.OR: "any of",
    Connective.XOR: "exactly one of",
}


class Engine:
    """Consumes one process's event stream and reports contract violations.

    ``memory_opt_out`` restricts memory-event delivery to analyses whose
    forbidden operation is a memory access. ``report`` enables relevance
    tracking; with ``coverage_prefix`` the visited relevant locations are
    written to ``<prefix>.<process_tag>.cov`` on exit.
    """

    def __init__(
        self,
        db: ContractDatabase,
        report: RelevanceReport | None = None,
        *,
        memory_opt_out: bool = True,
        coverage_prefix: str | Path | None = None,
        process_tag: str = "0",
        keep_instances: bool = False,
        on_report: Callable[[ErrorReport], None] | None = None,
    ):
        self.db = db
        self.report = report
        self.memory_opt_out = memory_opt_out
        self.coverage_prefix = coverage_prefix
        self.process_tag = process_tag
        self.on_report = on_report
        self.history: list[tuple[int, tuple[SizedArg, ...], SourceLoc, int]] = []
        self.instances: list[ContractInstance] | None = [] if keep_instances else None
        self.visited: set[SourceLoc] = set()
        self.seq = 0
        self.deliveries = 0
        self.program_args: tuple[str, ...] = ()
        self.exited = False
        self.coverage_file: Path | None = None
        self._relevant_locs = report.locations if report is not None else None
        self._live: list[AnalysisInstance] = []
        self._mem_live: list[AnalysisInstance] = []
        self._dirty = False
        # latest location of each callee / (tag, handle) seen so far
        self._called: dict[str, SourceLoc] = {}
        self._tag_seen: dict[tuple[str, SizedArg], SourceLoc] = {}
        self._reported: set = set()
        self._names = {fid.token: name for name, fid in db.functions.items()}
        self._tags = {
            db.functions[name].token: dict(db.tags_of(name)) for name in db.functions
        }

    # ---------------------------------------------------------- bookkeeping

    @property
    def registered_contracts(self) -> int:
        return len(self.db.contracts)

    @property
    def relevant_functions(self) -> frozenset[str]:
        return self.db.relevant

    @property
    def live_instances(self) -> list[AnalysisInstance]:
        return [a for a in self._live if a.live]

    def _record_visit(self, ev) -> None:
        if self._relevant_locs is not None and ev.is_relevant_marked and ev.location in self._relevant_locs:
            self.visited.add(ev.location)

    def _compact(self) -> None:
        if self._dirty:
            self._live = [a for a in self._live if a.live]
            self._mem_live = [a for a in self._mem_live if a.live]
            self._dirty = False

    # -------------------------------------------------------------- events

    def process(self, ev: TraceEvent) -> list[ErrorReport]:
        if isinstance(ev, Memory):
            return self.on_memory_event(ev)
        if isinstance(ev, FunctionCall):
            return self.on_function_event(ev)
        if isinstance(ev, Exit):
            return self.on_exit_event(ev)
        if isinstance(ev, Init):
            self.seq += 1
            self.program_args = ev.args
            return []
        raise EngineError(f"not a trace event: {ev!r}")

    def run(self, events: Iterable[TraceEvent]) -> list[ErrorReport]:
        reports = []
        for ev in events:
            reports.extend(self.process(ev))
        return reports

    def on_function_event(self, ev: FunctionCall) -> list[ErrorReport]:
        self.seq += 1
        seq = self.seq
        self._record_visit(ev)
        self.history.append((ev.callee, ev.args, ev.location, seq))
        name = self._names.get(ev.callee)
        if name is None:
            return []
        if len(ev.args) != self.db.arities[name]:
            raise ArityMismatchError(
                f"{name} called with {len(ev.args)} arguments, contract arity is {self.db.arities[name]}"
            )
        tags = self._tags[ev.callee]
        args = ev.args

        resolved = []
        for a in self._live:
            if not a.live:
                continue
            a.deliveries += 1
            state = a.observe_call(name, tags, args)
            if state is not U:
                resolved.append((a, state))
        self.deliveries += len(self._live)
        reports = self._resolve(resolved, ev.location)

        tree = self.db.contracts.get(name)
        if tree is not None and (tree.pre is not None or tree.post is not None):
            reports.extend(self._instantiate(tree, Trigger(name, args, ev.location, seq)))

        self._called[name] = ev.location
        for tag, idx in tags.items():
            self._tag_seen[(tag, args[idx])] = ev.location
        self._compact()
        return reports

    def on_memory_event(self, ev: Memory) -> list[ErrorReport]:
        self.seq += 1
        self._record_visit(ev)
        targets = self._mem_live if self.memory_opt_out else self._live
        if not targets:
            return []
        resolved = []
        address, is_write = ev.address, ev.is_write
        for a in targets:
            if not a.live:
                continue
            a.deliveries += 1
            if a.bad_address is not None and a.observe_memory(address, is_write) is V:
                resolved.append((a, V))
        self.deliveries += len(targets)
        if not resolved:
            return []
        reports = self._resolve(resolved, ev.location)
        self._compact()
        return reports

    def on_exit_event(self, ev: Exit) -> list[ErrorReport]:
        self.seq += 1
        resolved = [(a, V if a.kind is Kind.POST_CALL else F) for a in self._live if a.live]
        reports = self._resolve(resolved, None)
        self._compact()
        self.exited = True
        self.dump_coverage()
        return reports

    def dump_coverage(self) -> Path | None:
        if self.report is None or self.coverage_prefix is None:
            return None
        self.coverage_file = write_coverage(self.coverage_prefix, self.process_tag, self.visited)
        return self.coverage_file

    # ------------------------------------------------------ instantiation

    def _instantiate(self, tree: ContractTree, trigger: Trigger) -> list[ErrorReport]:
        inst = ContractInstance(tree, trigger)
        if self.instances is not None:
            self.instances.append(inst)
        reports = []
        for scope in inst.scopes:
            if scope.kind is ScopeKind.PRE:
                for leaf in scope.root.leaves():
                    if scope.root.state is not U:
                        break
                    leaf.resolved_at = self._pre_match(leaf.formula.operation, trigger.args)
                    leaf.state = V if leaf.resolved_at is None else F
                    reports.extend(self.verify_state(leaf))
            else:
                for leaf in scope.root.leaves():
                    a = AnalysisInstance(leaf, trigger.args)
                    leaf.analysis = a
                    self._live.append(a)
                    if a.wants_memory_events:
                        self._mem_live.append(a)
        return reports

    def _pre_match(self, op, args: tuple[SizedArg, ...]) -> SourceLoc | None:
        """Location of the earlier call satisfying ``op``, if any."""
        if isinstance(op, Call):
            return self._called.get(op.callee)
        if isinstance(op, CallTag):
            return self._tag_seen.get((op.tag, args[op.param]))
        raise EngineError(f"operation {op} cannot be checked before a call")

    # --------------------------------------------------- state verification

    def _resolve(self, resolved, location: SourceLoc | None) -> list[ErrorReport]:
        reports = []
        for a, state in resolved:
            if not a.live:
                continue
            a.live = False
            self._dirty = True
            node = a.node
            node.state = state
            node.resolved_at = location
            reports.extend(self.verify_state(node))
        return reports

    def _cancel(self, node: Node) -> None:
        for leaf in node.leaves():
            a = leaf.analysis
            if a is not None and a.live:
                a.live = False
                self._dirty = True

    def verify_state(self, node: Node) -> list[ErrorReport]:
        """Propagate a freshly resolved ``node`` toward its scope root."""
        while node.parent is not None:
            parent = node.parent
            if parent.state is not U:
                return []
            state = combine(parent.formula.connective, [c.state for c in parent.children])
            if state is U:
                return []
            parent.state = state
            self._cancel(parent)
            node = parent
        if node.state is V:
            self._cancel(node)
            return self._emit(node.scope)
        return []

    def _emit(self, scope: ScopeRun) -> list[ErrorReport]:
        messages: list[str] = []
        locations: list[SourceLoc] = []
        error_class = [None]

        def blame(node: Node, status: str) -> None:
            f = node.formula
            if f.message is not None and error_class[0] is None:
                error_class[0] = f.message
            label = f.message if f.message is not None else (
                str(f.operation) if f.is_leaf else _CONNECTIVE_LABEL[f.connective]
            )
            messages.append(f"{label} [{status}]")
            if f.is_leaf:
                if node.resolved_at is not None and node.resolved_at not in locations:
                    locations.append(node.resolved_at)
                return
            kids = node.children
            if f.connective is Connective.XOR:
                fulfilled = [c for c in kids if c.state is F]
                if len(fulfilled) >= 2:
                    for c in fulfilled:
                        blame(c, "over-fulfilled")
                    return
            for c in kids:
                if c.state is V:
                    blame(c, "violated")

        blame(scope.root, "violated")
        trigger = scope.owner.trigger
        key = (trigger.function, scope.kind, trigger.location, tuple(locations))
        if key in self._reported:
            return []
        self._reported.add(key)
        report = ErrorReport(
            kind=VIOLATION,
            function=trigger.function,
            scope=scope.kind.value,
            messages=tuple(messages),
            error_class=error_class[0],
            trigger=trigger.location,
            locations=(trigger.location, *[loc for loc in locations if loc != trigger.location]),
            seq=self.seq,
        )
        if self.on_report is not None:
            self.on_report(report)
        return [report]

    # --------------------------------------------------------- diagnostics

    def pending_summary(self) -> list[tuple[str, str, TriState]]:
        return [
            (a.node.scope.owner.trigger.function, str(a.operation), a.node.state)
            for a in self._live
            if a.live
        ]


def init_engine(db: ContractDatabase, report: RelevanceReport | None = None, **kwargs) -> Engine:
    return Engine(db, report, **kwargs)


def check_events(db: ContractDatabase, events: Iterable[TraceEvent], **kwargs) -> list[ErrorReport]:
    return Engine(db, **kwargs).run(events)
