"""Seeded random scenario campaigns checked against the reachability oracle.

Two properties are tracked:

* safety: nothing the oracle says must survive is ever freed;
* bounded float: a counted object that is oracle-dead at the start of a
  collection, while the head mirror is faithful, is freed within ``bound``
  completed collect+process pairs (unless the program revives it first).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

from gcbridge.bridge import ManagedValue
from gcbridge.scenario.executor import (COUNTED, TRACED, WEAK, Aborted, Executor,
                                        RunReport)
from gcbridge.scenario.oracle import oracle_reachable
from gcbridge.scenario.parser import Command, parse_line, render
from gcbridge.scenario.shrink import shrink

MAX_POPULATION = 64
TYPES = [("list", True, "[...]"), ("tuple", True, "(...)"), ("dict", True, "{...}"),
         ("str", False, "s"), ("int", False, "7")]


@dataclass
class FuzzConfig:
    seed: int = 1
    steps: int = 1000
    silent: bool = True
    bound: Optional[int] = None
    minimize: bool = True

    @property
    def float_bound(self) -> int:
        if self.bound is not None:
            return self.bound
        return 2 if self.silent else 1


@dataclass
class FloatTracker:
    bound: int
    ages: Dict[int, int] = field(default_factory=dict)
    collected_since_process: bool = False
    violations: List[str] = field(default_factory=list)
    tracked: int = 0
    freed_in_bound: int = 0

    def before(self, ex: Executor, cmd: Command) -> None:
        if cmd.verb != "GC":
            return
        world = ex.world
        bridge, traced = world.bridge, world.traced
        if any(h.alive and h.head_tid not in traced for h in bridge.heads.values()):
            return  # swept heads still awaiting processing
        live = oracle_reachable(world)
        dead = [o for o in world.counted.objects if o not in live]
        # whatever an unmirrored dead object reaches is not fully reported
        hidden = set()
        stack = [o for o in dead if o not in bridge.heads]
        while stack:
            cur = stack.pop()
            if cur not in hidden:
                hidden.add(cur)
                stack.extend(world.counted.traverse(cur))
        # nor is anything a stale head can still reach in the traced heap
        stale = [bridge.heads[o].head_tid for o in world.counted.objects
                 if o in bridge.heads and not bridge.head_matches(o)]
        shadowed = set()
        while stale:
            cur = stale.pop()
            if cur not in shadowed:
                shadowed.add(cur)
                stale.extend(traced.get(cur).strong_edges)
        for oid in dead:
            if oid in hidden or bridge.heads[oid].head_tid in shadowed:
                continue
            if oid not in self.ages:
                self.ages[oid] = 0
                self.tracked += 1

    def after(self, ex: Executor, cmd: Command) -> None:
        world = ex.world
        for oid in [o for o in self.ages if o not in world.counted]:
            del self.ages[oid]
            self.freed_in_bound += 1
        if self.ages:
            live = oracle_reachable(world)
            for oid in [o for o in self.ages if o in live]:
                del self.ages[oid]
        if cmd.verb == "GC":
            self.collected_since_process = True
        completed = self.collected_since_process and (
            cmd.verb == "PROCESS" or (cmd.verb == "GC" and cmd.opts["process"]))
        if not completed:
            return
        self.collected_since_process = False
        for oid in sorted(self.ages):
            self.ages[oid] += 1
            if self.ages[oid] >= self.bound:
                self.violations.append(
                    f"line {cmd.line_no}: oid {oid} still alive after {self.ages[oid]} cycles")
                del self.ages[oid]


class Generator:
    def __init__(self, rng: random.Random, silent: bool) -> None:
        self.rng = rng
        self.silent = silent
        self.counter = 0

    def fresh(self, prefix: str) -> str:
        self.counter += 1
        return f"{prefix}{self.counter}"

    def _held(self, ex: Executor, kind: str, container: Optional[bool] = None) -> List[str]:
        out = []
        for name in ex.name_handles:
            b = ex.names[name]
            if b.kind != kind:
                continue
            if container is not None and self._is_container(ex, b) != container:
                continue
            out.append(name)
        return out

    @staticmethod
    def _is_container(ex: Executor, b) -> bool:
        if b.kind == COUNTED:
            return ex.world.counted.get(b.ident).gc_tracked
        value = ex.world.traced.get(b.ident).payload
        return isinstance(value, ManagedValue) and value.gc_tracked

    @staticmethod
    def population(ex: Executor) -> int:
        managed = sum(1 for n in ex.world.traced.nodes.values() if isinstance(n.payload, ManagedValue))
        return len(ex.world.counted) + managed

    def next_line(self, ex: Executor) -> str:
        rng = self.rng
        room = self.population(ex) + 4 < MAX_POPULATION
        counted = self._held(ex, COUNTED)
        traced = self._held(ex, TRACED)
        weak = self._held(ex, WEAK)
        c_cont = self._held(ex, COUNTED, True)
        t_cont = self._held(ex, TRACED, True)
        options: List[tuple] = [(2, "GC"), (1, "GC ONLY"), (1, "PROCESS")]
        if room:
            options += [(5, "new_native"), (5, "new_managed")]
        if c_cont and counted:
            options += [(8, "link_native"), (3, "unlink_native")]
        if t_cont and traced:
            options += [(6, "link_managed"), (2, "unlink_managed")]
        if counted or traced:
            options += [(6, "drop"), (2, "handle"), (2, "weak")]
        if traced and room:
            options.append((4, "passn"))
        if counted and room:
            options.append((3, "passm"))
        if counted:
            options += [(2, "notify"), (1, "mirror"), (1, "realloc")]
        if weak:
            options += [(3, "deref"), (1, "drop_weak")]
        total = sum(w for w, _ in options)
        pick = rng.uniform(0, total)
        for w, op in options:
            pick -= w
            if pick <= 0:
                break
        return self._render(op, ex, counted, traced, weak, c_cont, t_cont)

    def _render(self, op, ex, counted, traced, weak, c_cont, t_cont) -> str:
        rng = self.rng
        if op in ("GC", "GC ONLY", "PROCESS"):
            return op
        if op in ("new_native", "new_managed"):
            type_name, gc, text = rng.choice(TYPES)
            side = "MANAGED" if op == "new_managed" else "NATIVE"
            return f'NEW {self.fresh("o")} {type_name} {"GC " if gc else ""}"{text}" {side}'
        if op == "link_native":
            silent = " SILENT" if self.silent and rng.random() < 0.35 else ""
            return f"LINK {rng.choice(c_cont)} {rng.randrange(4)} {rng.choice(counted)}{silent}"
        if op == "unlink_native":
            silent = " SILENT" if self.silent and rng.random() < 0.35 else ""
            return f"UNLINK {rng.choice(c_cont)} {rng.randrange(4)}{silent}"
        if op == "link_managed":
            return f"LINK {rng.choice(t_cont)} {rng.randrange(4)} {rng.choice(traced)}"
        if op == "unlink_managed":
            return f"UNLINK {rng.choice(t_cont)} {rng.randrange(4)}"
        if op in ("drop", "handle"):
            return f"{op.upper()} {rng.choice(counted + traced)}"
        if op == "weak":
            cb = f" CALLBACK cb{self.counter + 1}" if rng.random() < 0.5 else ""
            kind = rng.choice(["REF", "PROXY", "CALLABLE"])
            return f"WEAK {self.fresh('w')} {rng.choice(counted + traced)} {kind}{cb}"
        if op == "passn":
            return f"PASSN {self.fresh('o')} {rng.choice(traced)}"
        if op == "passm":
            return f"PASSM {self.fresh('o')} {rng.choice(counted)}"
        if op in ("notify", "mirror", "realloc"):
            return f"{op.upper()} {rng.choice(counted)}"
        if op == "deref":
            w = rng.choice(weak)
            side = rng.choice(["NATIVE", "MANAGED"])
            if ex.world.weakrefs.is_cleared(ex.names[w].ident):
                return f"DEREF {w} {side} EXPECT CLEARED"
            if ex.world.weakrefs.resolvable(ex.names[w].ident):
                return f"DEREF {w} {side} BIND {self.fresh('o')}"
            return f"DEREF {w} {side}"
        if op == "drop_weak":
            return f"DROP {rng.choice(weak)}"
        raise AssertionError(op)


def replay(commands: List[Command], silent_bound: int,
           stop_at_violation: bool = True) -> RunReport:
    """Re-run ``commands`` with every check enabled."""
    ex = Executor(check_safety=True, mem_debug=False)
    tracker = FloatTracker(silent_bound)
    try:
        for cmd in commands:
            tracker.before(ex, cmd)
            ex.step(cmd)
            tracker.after(ex, cmd)
            ex.report.float_violations = list(tracker.violations)
            if stop_at_violation and not ex.report.ok:
                break
    except Aborted:
        pass
    return ex.report


def fuzz(seed: int, steps: int, silent: bool = True, bound: Optional[int] = None,
         minimize: bool = True) -> RunReport:
    cfg = FuzzConfig(seed, steps, silent, bound, minimize)
    rng = random.Random(seed)
    gen = Generator(rng, silent)
    ex = Executor(check_safety=True, mem_debug=False)
    tracker = FloatTracker(cfg.float_bound)
    history: List[Command] = []
    peak = 0
    for i in range(1, steps + 1):
        peak = max(peak, len(ex.world.counted))
        cmd = parse_line(gen.next_line(ex), i)
        history.append(cmd)
        tracker.before(ex, cmd)
        try:
            ex.step(cmd)
        except Aborted:
            break
        tracker.after(ex, cmd)
        ex.report.float_violations = list(tracker.violations)
        if not ex.report.ok:
            break
    report = ex.report
    report.float_violations = list(tracker.violations)
    report.stats = {"steps": len(report.results), "peak_population": max(peak, len(ex.world.counted)),
                    "float_tracked": tracker.tracked, "float_freed": tracker.freed_in_bound}
    if not report.ok and minimize:
        report.reproduction = render(_minimize(history, cfg.float_bound, report))
    return report


def _signature(report: RunReport) -> tuple:
    return (bool(report.oracle_violations), bool(report.float_violations), report.error is not None)


def _minimize(history: List[Command], bound: int, failing: RunReport) -> List[Command]:
    want = _signature(failing)

    def still_fails(candidate: List[Command]) -> bool:
        renumbered = _renumber(candidate)
        if renumbered is None:
            return False
        return _signature(replay(renumbered, bound)) == want

    return _renumber(shrink(history, still_fails)) or history


def _renumber(commands: List[Command]) -> Optional[List[Command]]:
    out, bound = [], set()
    try:
        for i, c in enumerate(commands, start=1):
            out.append(parse_line(c.to_line(), i, bound))
    except Exception:
        return None
    return out
