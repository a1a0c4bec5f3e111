"""Dispatch parsed scenario commands to a :class:`World`."""

from __future__ import annotations

import json
from collections import Counter, deque
from dataclasses import asdict, dataclass, field
from typing import Deque, Dict, List, Optional, Set, Tuple

from gcbridge.errors import GcBridgeError, ScenarioError, WouldBlock
from gcbridge.scenario.oracle import oracle_reachable
from gcbridge.scenario.parser import Command
from gcbridge.scenario.world import World
from gcbridge.sides import Side
from gcbridge.weakref_bridge import WeakKind

COUNTED, TRACED, WEAK = "counted", "traced", "weak"


@dataclass(frozen=True)
class Binding:
    kind: str
    ident: int


@dataclass
class CommandResult:
    line_no: int
    verb: str
    output: Optional[str] = None


@dataclass
class Assertion:
    line_no: int
    ok: bool
    message: str


@dataclass
class RunReport:
    results: List[CommandResult] = field(default_factory=list)
    reports: List[str] = field(default_factory=list)
    assertions: List[Assertion] = field(default_factory=list)
    callbacks: List[Tuple[int, str]] = field(default_factory=list)
    oracle_violations: List[str] = field(default_factory=list)
    float_violations: List[str] = field(default_factory=list)
    error: Optional[str] = None
    reproduction: Optional[str] = None
    stats: Dict[str, int] = field(default_factory=dict)

    @property
    def final_report(self) -> Optional[str]:
        return self.reports[-1] if self.reports else None

    @property
    def ok(self) -> bool:
        return (self.error is None and not self.oracle_violations and not self.float_violations
                and all(a.ok for a in self.assertions))

    @property
    def exit_code(self) -> int:
        return 0 if self.ok else 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ok"] = self.ok
        d["final_report"] = self.final_report
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def text(self) -> str:
        lines = []
        for r in self.results:
            if r.output is not None:
                lines.append(r.output)
        for a in self.assertions:
            if not a.ok:
                lines.append(f"assertion failed (line {a.line_no}): {a.message}")
        lines.extend(f"oracle violation: {v}" for v in self.oracle_violations)
        lines.extend(f"float violation: {v}" for v in self.float_violations)
        if self.error:
            lines.append(f"error: {self.error}")
        if self.reproduction:
            lines.append("reproduction:")
            lines.append(self.reproduction.rstrip("\n"))
        return "\n".join(lines)


class Aborted(Exception):
    pass


class Executor:
    """Runs commands one at a time; state survives between :meth:`step` calls.

    ``audit`` re-checks refcount accounting after every command and
    ``check_safety`` runs the oracle at every free, before any listener has
    reacted to it, and records a violation if the object must survive.
    """

    def __init__(self, world: Optional[World] = None, audit: bool = False,
                 check_safety: bool = False, mem_debug: bool = True) -> None:
        self.world = world if world is not None else World(mem_debug=mem_debug)
        self.audit = audit
        self.check_safety = check_safety
        self.names: Dict[str, Binding] = {}
        self.name_handles: Counter = Counter()
        self.report = RunReport()
        self.pending: Dict[str, Deque[Command]] = {}
        self._line = 0
        # first in line, so the bridge has not yet forgotten the object
        self.world.counted.free_listeners.insert(0, self._on_free)
        self._fired_seen = 0

    # name helpers

    def _bind(self, name: str, kind: str, ident: int, handles: int = 1) -> None:
        if name in self.names and self.name_handles[name]:
            raise GcBridgeError(f"name {name!r} still holds handles")
        self.names[name] = Binding(kind, ident)
        self.name_handles[name] = handles

    def _lookup(self, name: str, *kinds: str) -> Binding:
        b = self.names.get(name)
        if b is None:
            raise GcBridgeError(f"name {name!r} is not bound")
        if kinds and b.kind not in kinds:
            raise GcBridgeError(f"{name!r} is a {b.kind} name, expected {'/'.join(kinds)}")
        return b

    def _side_ref(self, name: str) -> Tuple[int, Side]:
        b = self._lookup(name, COUNTED, TRACED)
        return b.ident, Side.COUNTED if b.kind == COUNTED else Side.TRACED

    # running

    def run(self, commands: List[Command]) -> RunReport:
        try:
            for cmd in commands:
                self.step(cmd)
            self.finish()
        except Aborted:
            pass
        return self.report

    def finish(self) -> None:
        for actor, queue in sorted(self.pending.items()):
            if queue:
                cmd = queue[0]
                self.report.assertions.append(
                    Assertion(cmd.line_no, False, f"actor {actor} still blocked at {cmd.verb}"))

    def step(self, cmd: Command) -> None:
        world = self.world
        world.monitor.tick()
        world.counted.current_site = f"scenario:{cmd.line_no}"
        self._line = cmd.line_no
        try:
            output = self._dispatch(cmd)
            if cmd.verb not in ("ENTER", "EXIT", "ALLOW", "ENDALLOW"):
                self._retry_blocked()
            if self.audit:
                world.audit()
        except Aborted:
            raise
        except (GcBridgeError, ValueError, TypeError) as exc:
            err = ScenarioError(cmd.line_no, cmd.verb, exc)
            self.report.error = str(err)
            raise Aborted from err
        finally:
            world.counted.current_site = ""
            fired = self._collect_callbacks()
        if fired:
            lines = [output] if output else []
            lines += [f"callback {cb} fired" for _, cb in fired]
            output = "\n".join(lines)
        self.report.results.append(CommandResult(cmd.line_no, cmd.verb, output))

    def _on_free(self, obj) -> None:
        if self.check_safety and obj.oid in oracle_reachable(self.world):
            self.report.oracle_violations.append(
                f"line {self._line}: freed oid {obj.oid} while reachable")

    def _collect_callbacks(self) -> List[Tuple[int, str]]:
        fired = self.world.weakrefs.fired[self._fired_seen:]
        self.report.callbacks.extend(fired)
        self._fired_seen += len(fired)
        return fired

    # lock scheduling: blocked commands are queued per actor and retried

    def _lock(self, cmd: Command) -> str:
        actor, op = cmd.opts["actor"], cmd.opts["op"]
        queue = self.pending.setdefault(actor, deque())
        if queue:
            queue.append(cmd)
            return f"{actor} queued {cmd.verb}"
        try:
            self.world.locks.apply(actor, op)
        except WouldBlock:
            queue.append(cmd)
            return f"{actor} blocked on {cmd.verb}"
        resumed = self._retry_blocked()
        return " ".join([f"{actor} {cmd.verb}"] + resumed)

    def _retry_blocked(self) -> List[str]:
        resumed = []
        progress = True
        while progress:
            progress = False
            for actor in sorted(self.pending):
                queue = self.pending[actor]
                if not queue:
                    continue
                cmd = queue[0]
                try:
                    self.world.locks.apply(actor, cmd.opts["op"])
                except WouldBlock:
                    continue
                queue.popleft()
                resumed.append(f"(resumed {actor} {cmd.verb} from line {cmd.line_no})")
                progress = True
        return resumed

    # verbs

    def _dispatch(self, cmd: Command) -> Optional[str]:
        handler = getattr(self, "_do_" + cmd.verb.lower())
        return handler(cmd, cmd.opts)

    def _do_new(self, cmd, o):
        world = self.world
        if o["managed"]:
            tid = world.new_managed(o["type"], o["gc"], o["repr"])
            self._bind(o["name"], TRACED, tid)
        else:
            oid = world.new_counted(o["type"], o["gc"], o["repr"], world.counted.current_site)
            self._bind(o["name"], COUNTED, oid)

    def _do_link(self, cmd, o):
        b = self._lookup(o["name"], COUNTED, TRACED)
        child = None
        if o["child"] is not None:
            child = self._lookup(o["child"], b.kind).ident
        if b.kind == COUNTED:
            self.world.counted.set_edge(b.ident, o["slot"], child, silent=o["silent"])
        else:
            if o["silent"]:
                raise GcBridgeError("SILENT applies to native objects only")
            self.world.set_managed_slot(b.ident, o["slot"], child)

    _do_unlink = _do_link

    def _do_handle(self, cmd, o):
        b = self._lookup(o["name"], COUNTED, TRACED)
        if b.kind == COUNTED:
            self.world.hold_counted(b.ident)
        else:
            self.world.hold_traced(b.ident)
        self.name_handles[o["name"]] += 1

    def _do_drop(self, cmd, o):
        name = o["name"]
        b = self._lookup(name)
        if self.name_handles[name] <= 0:
            raise GcBridgeError(f"{name!r} holds no handle")
        self.name_handles[name] -= 1
        if not self.name_handles[name]:
            del self.name_handles[name]
        if b.kind == COUNTED:
            self.world.drop_counted(b.ident)
        elif b.kind == TRACED:
            self.world.drop_traced(b.ident)
        else:
            self.world.weakrefs.drop_weakref(b.ident)

    def _do_passn(self, cmd, o):
        src = self._lookup(o["src"], TRACED)
        oid = self.world.bridge.pass_to_native(src.ident, self.world.counted.current_site)
        self.world.adopt_counted(oid)
        self._bind(o["new"], COUNTED, oid)

    def _do_passm(self, cmd, o):
        src = self._lookup(o["src"], COUNTED)
        tid = self.world.bridge.pass_to_managed(src.ident)
        self.world.hold_traced(tid)
        self._bind(o["new"], TRACED, tid)

    def _do_mirror(self, cmd, o):
        self.world.bridge.mirror_subgraph(self._lookup(o["name"], COUNTED).ident)

    def _do_notify(self, cmd, o):
        self.world.bridge.notify_change(self._lookup(o["name"], COUNTED).ident)

    def _do_gc(self, cmd, o):
        self.world.gc(process=o["process"])

    def _do_process(self, cmd, o):
        self.world.process()

    def _do_weak(self, cmd, o):
        ident, side = self._side_ref(o["referent"])
        handle = self.world.weakrefs.new_weakref(ident, side, WeakKind(o["kind"]), o["callback"])
        self._bind(o["new"], WEAK, handle.handle_id)

    def _do_deref(self, cmd, o):
        b = self._lookup(o["weak"], WEAK)
        side = {None: None, "NATIVE": Side.COUNTED, "MANAGED": Side.TRACED}[o["side"]]
        weakrefs = self.world.weakrefs
        if side is None:
            side = weakrefs.handles[b.ident].origin
        result = weakrefs.deref(b.ident, side)
        expect = o["expect"]
        if expect is not None:
            if expect == "CLEARED":
                ok, want = result is None, "cleared"
            else:
                ok, want = self._same_referent(result, side, expect), expect
            if not ok:
                self.report.assertions.append(
                    Assertion(cmd.line_no, False, f"DEREF {o['weak']} expected {want}, got {result}"))
                raise Aborted
            self.report.assertions.append(Assertion(cmd.line_no, True, f"DEREF {o['weak']}"))
        if o["bind"] is not None:
            if result is None:
                raise GcBridgeError(f"cannot bind {o['bind']!r}: weak reference is cleared")
            if side is Side.COUNTED:
                self.world.hold_counted(result)
                self._bind(o["bind"], COUNTED, result)
            else:
                self.world.hold_traced(result)
                self._bind(o["bind"], TRACED, result)
        return None if result is None else f"{o['weak']} -> {side.value}:{result}"

    def _logical(self, ident: int, side: Side) -> Tuple[str, int]:
        if side is Side.TRACED:
            bridge = self.world.bridge
            oid = bridge.counterpart_of.get(ident, bridge.lineage.get(ident))
            return ("t", ident) if oid is None else ("c", oid)
        return ("c", ident)

    def _same_referent(self, result: Optional[int], side: Side, name: str) -> bool:
        # recreated backends stand in for collected ones, so compare logical values
        if result is None:
            return False
        ident, name_side = self._side_ref(name)
        return self._logical(result, side) == self._logical(ident, name_side)

    def _do_realloc(self, cmd, o):
        self.world.counted.realloc(self._lookup(o["name"], COUNTED).ident, o["repr"])

    def _do_enter(self, cmd, o):
        return self._lock(cmd)

    _do_exit = _do_allow = _do_endallow = _do_enter

    def _do_report(self, cmd, o):
        monitor = self.world.monitor
        text = monitor.list_leaks() if monitor.enabled else "native monitoring disabled"
        self.report.reports.append(text)
        return text

    def _do_assert_leaks(self, cmd, o):
        monitor = self.world.monitor
        if not monitor.enabled:
            raise GcBridgeError("ASSERT_LEAKS needs native monitoring")
        have = len(monitor.current_leaks())
        ok = have == o["count"]
        self.report.assertions.append(
            Assertion(cmd.line_no, ok, f"expected {o['count']} leaks, found {have}"))
        if not ok:
            raise Aborted

    def _do_clear_history(self, cmd, o):
        self.world.monitor.clear_history()


def execute(commands: List[Command], *, mem_debug: bool = True, audit: bool = False,
            check_safety: bool = False) -> RunReport:
    return Executor(mem_debug=mem_debug, audit=audit, check_safety=check_safety).run(commands)


def run_script(text: str, **kwargs) -> RunReport:
    from gcbridge.scenario.parser import parse
    return execute(parse(text), **kwargs)
