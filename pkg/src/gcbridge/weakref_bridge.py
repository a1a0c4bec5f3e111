"""Weak references that stay coherent across both runtimes.

There is exactly one :class:`WeakHub` per logical referent, shared by the
counted-side and traced-side weak references to it. While the referent has a
live managed object *and* a counted counterpart, the hub holds one counted
reference increment (an *anchor*), so the native object cannot die before its
managed pendant does. Anchors are kept in a ledger of their own: they are not
mirrored by GC heads and the consistency check counts them as explained.

Lifecycle of a bridged hub:

* managed referent collected: the anchor is released, the hub stays valid and
  no callbacks run; a later deref recreates the managed object;
* counted referent freed: the hub is cleared and every callback fires once,
  counted-origin handles first (in creation order), then traced-origin ones.

A hub whose referent never had a counted counterpart behaves like an ordinary
managed weak reference and is cleared when the referent is collected.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set, Tuple

from gcbridge.bridge import Bridge
from gcbridge.counted_heap import CountedObject
from gcbridge.errors import UnknownHandle, UnknownReferent
from gcbridge.sides import Side


class WeakKind(str, enum.Enum):
    REF = "ref"
    PROXY = "proxy"
    CALLABLE_PROXY = "callable_proxy"


@dataclass
class WeakRefHandle:
    handle_id: int
    hub: int
    kind: WeakKind = WeakKind.REF
    callback: Optional[str] = None
    origin: Side = Side.COUNTED
    fired: bool = False


@dataclass
class WeakHub:
    hub_id: int
    traced_referent: Optional[int] = None
    counted_referent: Optional[int] = None
    holds_counted_increment: bool = False
    cleared: bool = False
    # counted-origin handles in insertion order (the referent's weak list)
    native_list: List[int] = field(default_factory=list)
    traced_list: List[int] = field(default_factory=list)
    cell: Optional[int] = None

    @property
    def members(self) -> Set[int]:
        return set(self.native_list) | set(self.traced_list)


class WeakRefBridge:
    def __init__(self, bridge: Bridge) -> None:
        self.bridge = bridge
        self.counted = bridge.counted
        self.traced = bridge.traced
        bridge.weakrefs = self
        self.hubs: Dict[int, WeakHub] = {}
        self.handles: Dict[int, WeakRefHandle] = {}
        self._by_oid: Dict[int, int] = {}
        self._by_tid: Dict[int, int] = {}
        self._hub_ids = itertools.count(1)
        self._handle_ids = itertools.count(1)
        self.hub_queue = self.traced.create_queue()
        # (handle id, callback id) in firing order, for the whole run
        self.fired: List[Tuple[int, str]] = []
        # registered after the bridge so mappings are gone before hubs clear
        self.counted.free_listeners.append(self._on_free)

    # anchor ledger

    def anchor_count(self, oid: int) -> int:
        hub_id = self._by_oid.get(oid)
        if hub_id is None:
            return 0
        return int(self.hubs[hub_id].holds_counted_increment)

    def anchors(self) -> Dict[int, int]:
        return {h.counted_referent: 1 for h in self.hubs.values()
                if h.holds_counted_increment and h.counted_referent is not None}

    def _acquire(self, hub: WeakHub) -> None:
        if (not hub.holds_counted_increment and hub.counted_referent is not None
                and hub.traced_referent is not None and hub.traced_referent in self.traced):
            self.counted.incref(hub.counted_referent)
            hub.holds_counted_increment = True

    def _release(self, hub: WeakHub) -> None:
        if hub.holds_counted_increment:
            hub.holds_counted_increment = False
            self.counted.decref(hub.counted_referent)

    def release_anchor(self, oid: int) -> None:
        hub_id = self._by_oid.get(oid)
        if hub_id is not None:
            self._release(self.hubs[hub_id])

    # hub bookkeeping

    def hub_for(self, referent: int, side: Side) -> Optional[WeakHub]:
        table = self._by_oid if side is Side.COUNTED else self._by_tid
        hub_id = table.get(referent)
        return self.hubs[hub_id] if hub_id is not None else None

    def _set_traced(self, hub: WeakHub, tid: Optional[int]) -> None:
        if hub.traced_referent is not None:
            self._by_tid.pop(hub.traced_referent, None)
        if hub.cell is not None:
            self.traced.discard_weak(hub.cell)
            hub.cell = None
        hub.traced_referent = tid
        if tid is not None:
            self._by_tid[tid] = hub.hub_id
            hub.cell = self.traced.register_weak(tid, self.hub_queue)

    def _locate(self, referent: int, side: Side) -> WeakHub:
        if side is Side.COUNTED:
            if referent not in self.counted:
                raise UnknownReferent(f"counted referent {referent} is not alive")
            oid, tid = referent, self.bridge.live_backend(referent)
        else:
            if referent not in self.traced:
                raise UnknownReferent(f"traced referent {referent} is not alive")
            tid, oid = referent, self.bridge.counterpart_of.get(referent)
        hub = (self.hub_for(oid, Side.COUNTED) if oid is not None else None) or \
              (self.hub_for(tid, Side.TRACED) if tid is not None else None)
        if hub is None:
            hub = WeakHub(next(self._hub_ids))
            self.hubs[hub.hub_id] = hub
        if oid is not None and hub.counted_referent is None:
            hub.counted_referent = oid
            self._by_oid[oid] = hub.hub_id
        if tid is not None and hub.traced_referent != tid:
            self._set_traced(hub, tid)
        self._acquire(hub)
        return hub

    def new_weakref(self, referent: int, side: Side, kind: WeakKind = WeakKind.REF,
                    callback: Optional[str] = None) -> WeakRefHandle:
        hub = self._locate(referent, side)
        handle = WeakRefHandle(next(self._handle_ids), hub.hub_id, kind, callback, side)
        self.handles[handle.handle_id] = handle
        if side is Side.COUNTED:
            hub.native_list.append(handle.handle_id)
        else:
            hub.traced_list.append(handle.handle_id)
        return handle

    def drop_weakref(self, handle_id: int) -> None:
        handle = self._handle(handle_id)
        del self.handles[handle_id]
        hub = self.hubs[handle.hub]
        for lst in (hub.native_list, hub.traced_list):
            if handle_id in lst:
                lst.remove(handle_id)
        if not hub.members:
            self._unregister(hub)

    def _unregister(self, hub: WeakHub) -> None:
        self._release(hub)
        self._set_traced(hub, None)
        if hub.counted_referent is not None:
            self._by_oid.pop(hub.counted_referent, None)
        del self.hubs[hub.hub_id]

    def _handle(self, handle_id: int) -> WeakRefHandle:
        try:
            return self.handles[handle_id]
        except KeyError:
            raise UnknownHandle(handle_id) from None

    # dereferencing

    def is_cleared(self, handle_id: int) -> bool:
        return self.hubs[self._handle(handle_id).hub].cleared

    def resolvable(self, handle_id: int, side: Optional[Side] = None) -> bool:
        """Whether :meth:`deref` would return a referent; no side effects."""
        handle = self._handle(handle_id)
        hub = self.hubs[handle.hub]
        if hub.cleared:
            return False
        traced_alive = hub.traced_referent is not None and hub.traced_referent in self.traced
        return traced_alive or hub.counted_referent is not None

    def deref(self, handle_id: int, side: Optional[Side] = None) -> Optional[int]:
        """Return the referent on ``side`` (default: the handle's own side), or None if cleared.

        A bridged referent whose managed object was collected is recreated
        from its native state, which re-anchors the hub.
        """
        handle = self._handle(handle_id)
        hub = self.hubs[handle.hub]
        side = handle.origin if side is None else side
        if hub.cleared:
            return None
        traced_alive = hub.traced_referent is not None and hub.traced_referent in self.traced
        if side is Side.TRACED:
            if traced_alive:
                return hub.traced_referent
            if hub.counted_referent is not None:
                return self.bridge.pass_to_managed(hub.counted_referent)
            return None
        if hub.counted_referent is not None:
            return hub.counted_referent
        if traced_alive:
            # managed-only referent requested from native code: bridge it now
            oid = self.bridge.pass_to_native(hub.traced_referent)
            # the caller gets a borrowed view; the hub anchor keeps it alive
            self.counted.decref(oid)
            return oid
        return None

    # hooks called by the bridge and the heaps

    def on_bridged(self, oid: int, tid: int) -> None:
        """A counted object and a managed object were just paired."""
        hub = self.hub_for(oid, Side.COUNTED) or self.hub_for(tid, Side.TRACED)
        if hub is None or hub.cleared:
            return
        if hub.counted_referent is None:
            hub.counted_referent = oid
            self._by_oid[oid] = hub.hub_id
        if hub.traced_referent != tid:
            self._set_traced(hub, tid)
        self._acquire(hub)

    def on_backend_lost(self, oid: int, tid: int) -> None:
        hub = self.hub_for(oid, Side.COUNTED)
        if hub is not None and hub.traced_referent == tid:
            self.on_traced_referent_collected(hub.hub_id)

    def on_traced_referent_collected(self, hub_id: int) -> None:
        hub = self.hubs.get(hub_id)
        if hub is None or hub.cleared:
            return
        self._set_traced(hub, None)
        if hub.counted_referent is None:
            self._clear(hub)
            return
        self._release(hub)

    def process_queue(self) -> None:
        for wid in self.traced.drain_queue(self.hub_queue):
            cell = self.traced.cells.pop(wid, None)
            if cell is None:
                continue
            hub_id = self._by_tid.get(cell.target)
            if hub_id is not None and self.hubs[hub_id].cell == wid:
                self.hubs[hub_id].cell = None
                self.on_traced_referent_collected(hub_id)

    def _on_free(self, obj: CountedObject) -> None:
        self.on_counted_referent_death(obj.oid)

    def on_counted_referent_death(self, oid: int) -> List[str]:
        hub_id = self._by_oid.pop(oid, None)
        if hub_id is None:
            return []
        hub = self.hubs[hub_id]
        hub.holds_counted_increment = False
        self._set_traced(hub, None)
        return self._clear(hub)

    def _clear(self, hub: WeakHub) -> List[str]:
        hub.cleared = True
        fired = []
        for hid in hub.native_list + hub.traced_list:
            handle = self.handles[hid]
            if handle.callback is not None and not handle.fired:
                handle.fired = True
                fired.append(handle.callback)
                self.fired.append((hid, handle.callback))
        if not hub.members:
            self._unregister(hub)
        return fired
