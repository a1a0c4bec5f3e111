"""Native memory ledger: allocation, finalization, reallocation and free events.

The monitor keeps two things: an append-only history of :class:`MemEvent`
records (which may be cleared) and the live set of objects that were
allocated but not yet freed (which survives clearing). ``list_leaks`` renders
the live set in the classic one-line-per-object format::

    100000000000016_GC (list) #2: "[([...],), 'test']"_j *12

Addresses are fake but stable (derived from the oid) and timestamps come from
a logical clock, so reports are byte-identical between runs.
"""

from __future__ import annotations

import enum
import json
import os
from dataclasses import asdict, dataclass, replace
from typing import Callable, Dict, Iterable, List, Optional

from gcbridge.sides import Side

ADDRESS_BASE = 100_000_000_000_000
MEM_DEBUG_ENV = "GCBRIDGE_MEM_DEBUG"


class Action(str, enum.Enum):
    ALLOC = "alloc"
    REALLOC = "realloc"
    FREE = "free"
    FINALIZE = "finalize"


@dataclass(frozen=True)
class MemEvent:
    action: Action
    oid: int
    type_name: str
    gc_tracked: bool
    repr_text: str
    repr_origin: Side
    refcount_at_event: int
    site: str
    ts: int
    seq: int = -1

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["action"] = self.action.value
        rec["repr_origin"] = self.repr_origin.value
        return rec


def address_of(oid: int) -> str:
    return str(ADDRESS_BASE + oid * 8)


def format_entry(event: MemEvent, refcount: int) -> str:
    gc = "_GC" if event.gc_tracked else ""
    j = "_j" if event.repr_origin is Side.TRACED else ""
    return f'{address_of(event.oid)}{gc} ({event.type_name}) #{refcount}: "{event.repr_text}"{j} *{event.ts}'


def mem_debug_from_env() -> bool:
    return os.environ.get(MEM_DEBUG_ENV, "").strip().lower() in {"1", "true", "yes", "on"}


class RefMonitor:
    """Event ledger with leak listing.

    ``refcount_source`` lets reports show the *current* reference count of a
    live object instead of the count at allocation time.
    """

    def __init__(self, enabled: bool = True,
                 refcount_source: Optional[Callable[[int], int]] = None) -> None:
        self.enabled = enabled
        self.refcount_source = refcount_source
        self._clock = 0
        self._seq = 0
        self._history: List[MemEvent] = []
        self._live: Dict[int, MemEvent] = {}

    # logical clock, in "milliseconds since init"
    def now(self) -> int:
        return self._clock

    def tick(self, n: int = 1) -> int:
        self._clock += n
        return self._clock

    def record(self, event: MemEvent) -> None:
        if not self.enabled:
            return
        event = replace(event, seq=self._seq, ts=max(event.ts, self._last_ts()))
        self._seq += 1
        self._history.append(event)
        if event.action is Action.ALLOC:
            self._live[event.oid] = event
        elif event.action is Action.FREE:
            self._live.pop(event.oid, None)
        elif event.action is Action.REALLOC and event.oid in self._live:
            # keep the original creation time for the leak line
            alloc = self._live[event.oid]
            self._live[event.oid] = replace(alloc, repr_text=event.repr_text)

    def _last_ts(self) -> int:
        return self._history[-1].ts if self._history else 0

    def emit(self, action: Action, *, oid: int, type_name: str, gc_tracked: bool,
             repr_text: str, repr_origin: Side, refcount: int, site: str) -> None:
        self.record(MemEvent(action, oid, type_name, gc_tracked, repr_text,
                             repr_origin, refcount, site, self._clock))

    @property
    def history(self) -> List[MemEvent]:
        return list(self._history)

    def clear_history(self) -> None:
        self._history.clear()

    def current_leaks(self) -> List[int]:
        return sorted(self._live)

    def live_event(self, oid: int) -> MemEvent:
        return self._live[oid]

    def list_leaks(self) -> str:
        if not self._live:
            return "no leaks recorded"
        lines = ["Current native leaks:"]
        for oid in sorted(self._live):
            ev = self._live[oid]
            rc = ev.refcount_at_event
            if self.refcount_source is not None:
                rc = self.refcount_source(oid)
            lines.append(format_entry(ev, rc))
        return "\n".join(lines)

    def export_history(self) -> List[dict]:
        return [ev.to_record() for ev in self._history]

    def export_json(self) -> str:
        return json.dumps(self.export_history(), indent=2)

    @staticmethod
    def replay_live(events: Iterable[MemEvent]) -> List[int]:
        """Recompute the live set from a full history."""
        live = set()
        for ev in events:
            if ev.action is Action.ALLOC:
                live.add(ev.oid)
            elif ev.action is Action.FREE:
                live.discard(ev.oid)
        return sorted(live)
