"""Reference-counted heap exposing a traverse protocol.

This models the native side of the bridge. Every object carries an explicit
reference count and, if it is gc-tracked, an ordered list of edge slots.
Dropping the count to zero frees the object immediately and releases its
children depth-first in slot order. Cycles are never reclaimed here; that is
the bridge's job.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional

from gcbridge.errors import NegativeRefcount, NotContainer, UnknownObject
from gcbridge.monitor import Action, RefMonitor
from gcbridge.sides import BridgeMode, Side


@dataclass
class CountedObject:
    oid: int
    type_name: str
    refcount: int
    gc_tracked: bool
    repr_text: str
    repr_origin: Side = Side.COUNTED
    bridge_mode: BridgeMode = BridgeMode.NONE
    alloc_site: str = ""
    edges: List[Optional[int]] = field(default_factory=list)

    def children(self) -> List[int]:
        return [c for c in self.edges if c is not None]


class CountedHeap:
    def __init__(self, monitor: Optional[RefMonitor] = None) -> None:
        self.monitor = monitor
        self.objects: Dict[int, CountedObject] = {}
        self._ids = itertools.count(1)
        # set by the driver so cascaded frees are attributed to a source line
        self.current_site = ""
        self.change_listeners: List[Callable[[int], None]] = []
        self.free_listeners: List[Callable[[CountedObject], None]] = []

    def __contains__(self, oid: object) -> bool:
        return oid in self.objects

    def __len__(self) -> int:
        return len(self.objects)

    def __iter__(self) -> Iterator[int]:
        return iter(sorted(self.objects))

    def get(self, oid: int) -> CountedObject:
        try:
            return self.objects[oid]
        except KeyError:
            raise UnknownObject(oid) from None

    def refcount(self, oid: int) -> int:
        return self.get(oid).refcount

    def _emit(self, action: Action, obj: CountedObject, site: Optional[str] = None) -> None:
        if self.monitor is None:
            return
        self.monitor.emit(action, oid=obj.oid, type_name=obj.type_name,
                          gc_tracked=obj.gc_tracked, repr_text=obj.repr_text,
                          repr_origin=obj.repr_origin, refcount=obj.refcount,
                          site=site if site is not None else self.current_site)

    def alloc(self, type_name: str, gc_tracked: bool, repr_text: str, site: str = "",
              repr_origin: Side = Side.COUNTED) -> int:
        oid = next(self._ids)
        obj = CountedObject(oid, type_name, 1, gc_tracked, repr_text,
                            repr_origin=repr_origin, alloc_site=site)
        self.objects[oid] = obj
        self._emit(Action.ALLOC, obj, site or None)
        return oid

    def realloc(self, oid: int, repr_text: Optional[str] = None, site: Optional[str] = None) -> None:
        obj = self.get(oid)
        if repr_text is not None:
            obj.repr_text = repr_text
        self._emit(Action.REALLOC, obj, site)

    def incref(self, oid: int) -> int:
        obj = self.get(oid)
        obj.refcount += 1
        return obj.refcount

    def decref(self, oid: int) -> int:
        """Drop one reference; returns the new count, 0 meaning the object was freed."""
        obj = self.get(oid)
        if obj.refcount <= 0:
            raise NegativeRefcount(f"decref of oid {oid} with refcount {obj.refcount}")
        obj.refcount -= 1
        if obj.refcount:
            return obj.refcount
        # iterative cascade: children of a freed object are pushed in reverse
        # so the lowest slot is released (and fully cascades) first
        stack = list(reversed(self._free(obj)))
        while stack:
            child = self.objects.get(stack.pop())
            if child is None:
                raise NegativeRefcount("cascade reached an already freed child")
            child.refcount -= 1
            if child.refcount == 0:
                stack.extend(reversed(self._free(child)))
        return 0

    def _free(self, obj: CountedObject) -> List[int]:
        children = obj.children()
        obj.edges = []
        del self.objects[obj.oid]
        self._emit(Action.FREE, obj)
        for listener in self.free_listeners:
            listener(obj)
        return children

    def set_edge(self, oid: int, slot: int, child: Optional[int], silent: bool = False,
                 steal: bool = False) -> None:
        """Store ``child`` in ``slot`` of ``oid``.

        With ``steal`` the caller's reference to ``child`` is transferred
        into the slot instead of taking a new one. A silent update skips the
        change notification, the way direct struct access in an extension
        would.
        """
        obj = self.get(oid)
        if not obj.gc_tracked:
            raise NotContainer(f"{obj.type_name} object {oid} is not gc-tracked")
        if slot < 0:
            raise IndexError(f"negative slot {slot}")
        if child is not None:
            self.get(child)
            if not steal:
                self.incref(child)
        if slot >= len(obj.edges):
            obj.edges.extend([None] * (slot + 1 - len(obj.edges)))
        old = obj.edges[slot]
        obj.edges[slot] = child
        if old is not None:
            self.decref(old)
        if not silent and oid in self.objects:
            for listener in self.change_listeners:
                listener(oid)

    def clear_edges(self, oid: int) -> None:
        """Empty every slot without notification (the tp_clear step of cycle breaking)."""
        obj = self.get(oid)
        olds = obj.children()
        obj.edges = []
        for old in olds:
            self.decref(old)

    def traverse(self, oid: int) -> List[int]:
        return self.get(oid).children()
