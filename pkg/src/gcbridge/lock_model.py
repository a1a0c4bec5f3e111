"""Native-side interpreter lock over deterministic logical actors.

Any actor entering native code takes the lock and keeps it until it returns
to managed code; calling back into managed code does not release it. Inside
an allow-threads window the lock is released so others may enter, and it is
taken back when the outermost window closes. Windows may nest; only the
outermost begin/end pair touches the lock.

Blocking is not simulated: a transition that would have to wait raises
:class:`WouldBlock` and leaves the state untouched, so a driver can retry.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Dict, Iterable, List, Optional, Set, Tuple

from gcbridge.errors import (DoubleEnter, ExitInsideAllowWindow, LockError, NotHolding,
                             Underflow, WouldBlock)


class Location(str, enum.Enum):
    MANAGED = "managed"
    NATIVE = "native"


@dataclass(frozen=True)
class ActorState:
    actor_id: str
    location: Location = Location.MANAGED
    holds_lock: bool = False
    allow_depth: int = 0


class LockModel:
    def __init__(self, actors: Iterable[str] = ()) -> None:
        self.actors: Dict[str, ActorState] = {}
        for a in actors:
            self.actor(a)

    def actor(self, actor_id: str) -> ActorState:
        if actor_id not in self.actors:
            self.actors[actor_id] = ActorState(actor_id)
        return self.actors[actor_id]

    @property
    def holder(self) -> Optional[str]:
        holders = [a.actor_id for a in self.actors.values() if a.holds_lock]
        assert len(holders) <= 1, f"lock held by {holders}"
        return holders[0] if holders else None

    def _held_by_other(self, actor_id: str) -> bool:
        h = self.holder
        return h is not None and h != actor_id

    def enter_native(self, actor_id: str) -> None:
        st = self.actor(actor_id)
        if st.location is Location.NATIVE:
            raise DoubleEnter(f"{actor_id} is already in native code")
        if self._held_by_other(actor_id):
            raise WouldBlock(f"{actor_id} waits for the lock held by {self.holder}")
        self.actors[actor_id] = replace(st, location=Location.NATIVE, holds_lock=True)

    def exit_native(self, actor_id: str) -> None:
        st = self.actor(actor_id)
        if st.location is not Location.NATIVE:
            raise NotHolding(f"{actor_id} is not in native code")
        if st.allow_depth:
            raise ExitInsideAllowWindow(f"{actor_id} returns inside an allow-threads window")
        self.actors[actor_id] = replace(st, location=Location.MANAGED, holds_lock=False)

    def call_managed(self, actor_id: str) -> None:
        """A native -> managed callback: the lock stays where it is."""
        if self.actor(actor_id).location is not Location.NATIVE:
            raise NotHolding(f"{actor_id} is not in native code")

    def begin_allow(self, actor_id: str) -> None:
        st = self.actor(actor_id)
        if not st.holds_lock and st.allow_depth == 0:
            raise NotHolding(f"{actor_id} does not hold the lock")
        self.actors[actor_id] = replace(st, holds_lock=False, allow_depth=st.allow_depth + 1)

    def end_allow(self, actor_id: str) -> None:
        st = self.actor(actor_id)
        if st.allow_depth == 0:
            raise Underflow(f"{actor_id} has no open allow-threads window")
        if st.allow_depth == 1:
            if self._held_by_other(actor_id):
                raise WouldBlock(f"{actor_id} waits to re-acquire the lock from {self.holder}")
            self.actors[actor_id] = replace(st, holds_lock=True, allow_depth=0)
        else:
            self.actors[actor_id] = replace(st, allow_depth=st.allow_depth - 1)

    OPS = ("enter_native", "exit_native", "begin_allow", "end_allow")

    def apply(self, actor_id: str, op: str) -> None:
        if op not in self.OPS and op != "call_managed":
            raise ValueError(f"unknown lock operation {op!r}")
        getattr(self, op)(actor_id)

    def snapshot(self) -> Tuple[ActorState, ...]:
        return tuple(self.actors[a] for a in sorted(self.actors))

    @classmethod
    def from_snapshot(cls, snap: Tuple[ActorState, ...]) -> "LockModel":
        model = cls()
        for st in snap:
            model.actors[st.actor_id] = st
        return model


def check_invariants(snap: Tuple[ActorState, ...]) -> List[str]:
    problems = []
    holders = [s.actor_id for s in snap if s.holds_lock]
    if len(holders) > 1:
        problems.append(f"several lock holders: {holders}")
    for s in snap:
        if s.holds_lock and (s.location is not Location.NATIVE or s.allow_depth):
            problems.append(f"{s.actor_id}: holds lock outside native code or inside a window")
        if s.allow_depth < 0:
            problems.append(f"{s.actor_id}: negative allow depth")
    return problems


def explore(n_actors: int = 3, steps: int = 6) -> Tuple[Set[Tuple[ActorState, ...]], List[str]]:
    """Breadth-first enumeration of every state reachable in at most ``steps`` transitions.

    Failed transitions (any LockError) leave the state unchanged, so the set
    covers every interleaving of every operation sequence of that length.
    """
    actors = [f"a{i}" for i in range(n_actors)]
    start = LockModel(actors).snapshot()
    seen = {start}
    frontier = {start}
    problems = check_invariants(start)
    for _ in range(steps):
        nxt = set()
        for snap in frontier:
            for a in actors:
                for op in LockModel.OPS:
                    model = LockModel.from_snapshot(snap)
                    try:
                        model.apply(a, op)
                    except LockError:
                        continue
                    s = model.snapshot()
                    if s not in seen:
                        seen.add(s)
                        nxt.add(s)
                        problems.extend(check_invariants(s))
        frontier = nxt
    return seen, problems


def balanced_windows(max_len: int) -> List[Tuple[str, ...]]:
    """All non-empty balanced begin/end sequences up to ``max_len`` operations."""
    out: List[Tuple[str, ...]] = []

    def grow(seq: Tuple[str, ...], depth: int) -> None:
        if seq and depth == 0:
            out.append(seq)
        if len(seq) >= max_len:
            return
        if len(seq) + depth + 1 <= max_len:
            grow(seq + ("begin_allow",), depth + 1)
        if depth:
            grow(seq + ("end_allow",), depth - 1)

    grow((), 0)
    return out


def check_window_roundtrips(states: Iterable[Tuple[ActorState, ...]], max_len: int = 6) -> List[str]:
    """Every balanced window run by a lock holder must return the model to where it started."""
    problems = []
    windows = balanced_windows(max_len)
    for snap in states:
        for st in snap:
            if not st.holds_lock:
                continue
            for seq in windows:
                model = LockModel.from_snapshot(snap)
                for op in seq:
                    model.apply(st.actor_id, op)
                if model.snapshot() != snap:
                    problems.append(f"{st.actor_id} window {seq} changed {snap}")
    return problems
