"""The wired-up simulator: both heaps, bridge, weak references, monitor, locks.

External handles model references held by the program itself: on the counted
side each handle is one reference increment, on the traced side any positive
handle count makes the node a root.
"""

from __future__ import annotations

from collections import Counter
from typing import Dict, List, Optional

from gcbridge.bridge import Bridge, BridgeReport, ManagedValue
from gcbridge.counted_heap import CountedHeap
from gcbridge.errors import AccountingError, GcBridgeError
from gcbridge.lock_model import LockModel
from gcbridge.monitor import RefMonitor
from gcbridge.traced_heap import CollectionReport, Role, TracedHeap
from gcbridge.weakref_bridge import WeakRefBridge


class World:
    def __init__(self, mem_debug: bool = True) -> None:
        self.monitor = RefMonitor(enabled=mem_debug)
        self.counted = CountedHeap(self.monitor)
        self.monitor.refcount_source = self.counted.refcount
        self.traced = TracedHeap()
        self.bridge = Bridge(self.counted, self.traced, self.monitor)
        self.weakrefs = WeakRefBridge(self.bridge)
        self.locks = LockModel()
        self.counted_handles: Counter = Counter()
        self.traced_handles: Counter = Counter()
        self.last_collection: Optional[CollectionReport] = None
        self.last_process: Optional[BridgeReport] = None

    # counted-side handles

    def new_counted(self, type_name: str, gc_tracked: bool, repr_text: str, site: str = "") -> int:
        oid = self.counted.alloc(type_name, gc_tracked, repr_text, site)
        self.counted_handles[oid] += 1
        return oid

    def hold_counted(self, oid: int) -> None:
        self.counted.incref(oid)
        self.counted_handles[oid] += 1

    def adopt_counted(self, oid: int) -> None:
        """Take ownership of a new reference returned by the bridge."""
        self.counted_handles[oid] += 1

    def drop_counted(self, oid: int) -> None:
        if self.counted_handles[oid] <= 0:
            raise GcBridgeError(f"no external handle on counted object {oid}")
        self.counted_handles[oid] -= 1
        if not self.counted_handles[oid]:
            del self.counted_handles[oid]
        self.counted.decref(oid)

    # traced-side handles

    def new_managed(self, type_name: str, gc_tracked: bool, repr_text: str) -> int:
        tid = self.traced.create_node(payload=ManagedValue(type_name, repr_text, gc_tracked))
        self.hold_traced(tid)
        return tid

    def hold_traced(self, tid: int) -> None:
        self.traced.get(tid)
        self.traced_handles[tid] += 1
        self.traced.set_root(tid, True)

    def drop_traced(self, tid: int) -> None:
        if self.traced_handles[tid] <= 0:
            raise GcBridgeError(f"no external handle on traced node {tid}")
        self.traced_handles[tid] -= 1
        if not self.traced_handles[tid]:
            del self.traced_handles[tid]
            if tid in self.traced:
                self.traced.set_root(tid, False)

    def set_managed_slot(self, tid: int, slot: int, child: Optional[int]) -> None:
        node = self.traced.get(tid)
        value = node.payload
        if not isinstance(value, ManagedValue):
            raise GcBridgeError(f"traced node {tid} holds no managed value")
        if not value.gc_tracked:
            raise GcBridgeError(f"managed {value.type_name} {tid} cannot hold references")
        if child is not None:
            self.traced.get(child)
        if slot >= len(value.slots):
            value.slots.extend([None] * (slot + 1 - len(value.slots)))
        old = value.slots[slot]
        value.slots[slot] = child
        if child is not None:
            self.traced.link(tid, child)
        if old is not None and old != child and old not in value.slots and old in self.traced:
            self.traced.unlink(tid, old)

    # collection

    def gc(self, process: bool = True) -> Optional[BridgeReport]:
        self.last_collection = self.traced.collect()
        # slots pointing at swept nodes cannot exist: only unreachable nodes hold them
        if process:
            return self.process()
        return None

    def process(self) -> BridgeReport:
        self.last_process = self.bridge.process_cleared_heads()
        return self.last_process

    # audit

    def expected_refcounts(self) -> Dict[int, int]:
        expected = {oid: 0 for oid in self.counted.objects}
        for obj in self.counted.objects.values():
            for child in obj.children():
                expected[child] = expected.get(child, 0) + 1
        for oid, n in self.bridge.head_increments().items():
            expected[oid] = expected.get(oid, 0) + n
        for oid, n in self.weakrefs.anchors().items():
            expected[oid] = expected.get(oid, 0) + n
        for oid, n in self.counted_handles.items():
            expected[oid] = expected.get(oid, 0) + n
        return expected

    def audit_problems(self) -> List[str]:
        problems = []
        expected = self.expected_refcounts()
        for oid, want in sorted(expected.items()):
            if oid not in self.counted:
                problems.append(f"oid {oid} is referenced but not alive")
                continue
            have = self.counted.refcount(oid)
            if have != want:
                problems.append(f"oid {oid}: refcount {have}, attributed {want}")
        for obj in self.counted.objects.values():
            if not obj.gc_tracked and obj.children():
                problems.append(f"non-container {obj.oid} has edges")
        for node in self.traced.nodes.values():
            dead = [t for t in node.strong_edges if t not in self.traced]
            if dead:
                problems.append(f"traced node {node.tid} points at swept nodes {dead}")
        live_heads = {}
        for oid, head in self.bridge.heads.items():
            if head.alive and head.head_tid in self.traced:
                if head.head_tid in live_heads:
                    problems.append(f"head {head.head_tid} shared by {oid} and {live_heads[head.head_tid]}")
                live_heads[head.head_tid] = oid
                node = self.traced.nodes.get(head.head_tid)
                if node is None or node.role is not Role.GC_HEAD or node.ref != oid:
                    problems.append(f"head record of {oid} points at a wrong node")
        if self.monitor.enabled and self.monitor.current_leaks() != sorted(self.counted.objects):
            problems.append("monitor live set differs from the counted heap")
        return problems

    def audit(self) -> None:
        problems = self.audit_problems()
        if problems:
            raise AccountingError("; ".join(problems))
