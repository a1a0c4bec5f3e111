"""Tracing mark/sweep heap with roots, weak cells, reference queues and finalizers.

This models the managed side. Nothing is collected until :meth:`TracedHeap.collect`
is called explicitly. A collection is two-phase: after the first mark, the
one-shot finalizers of unreachable finalizable nodes run (they may restore
reachability), then marking is repeated and whatever is still unmarked is
swept. Weak cells of swept nodes are cleared and pushed onto their queues;
cells of resurrected nodes are left alone.

All iteration happens in ascending tid order so runs are reproducible.
"""

from __future__ import annotations

import enum
import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Deque, Dict, List, Optional, Set

from gcbridge.errors import ReentrantCollection, UnknownNode, UnknownQueue


class Role(str, enum.Enum):
    PLAIN = "plain"
    BACKEND = "backend"
    GC_HEAD = "gc_head"
    WEAK_HUB = "weak_hub"


Finalizer = Callable[["TracedHeap", int], None]


@dataclass
class TracedNode:
    tid: int
    role: Role = Role.PLAIN
    # counted oid for backend and gc_head roles
    ref: Optional[int] = None
    payload: Any = None
    strong_edges: Set[int] = field(default_factory=set)
    is_root: bool = False
    finalizable: bool = False
    finalizer_ran: bool = False
    finalizer: Optional[Finalizer] = None


@dataclass
class WeakCell:
    wid: int
    target: int
    cleared: bool = False
    queue: Optional[int] = None


@dataclass
class CollectionReport:
    cycle_index: int
    swept: Set[int] = field(default_factory=set)
    finalized: Set[int] = field(default_factory=set)
    resurrected: Set[int] = field(default_factory=set)
    weak_cleared: Set[int] = field(default_factory=set)


class TracedHeap:
    def __init__(self) -> None:
        self.nodes: Dict[int, TracedNode] = {}
        self.cells: Dict[int, WeakCell] = {}
        self._cells_by_target: Dict[int, List[int]] = {}
        self._queues: Dict[int, Deque[int]] = {}
        self._tids = itertools.count(1)
        self._wids = itertools.count(1)
        self._qids = itertools.count(1)
        self._collecting = False
        self.cycle_index = 0

    def __contains__(self, tid: object) -> bool:
        return tid in self.nodes

    def get(self, tid: int) -> TracedNode:
        try:
            return self.nodes[tid]
        except KeyError:
            raise UnknownNode(tid) from None

    def create_node(self, finalizable: bool = False, role: Role = Role.PLAIN,
                    payload: Any = None, ref: Optional[int] = None,
                    finalizer: Optional[Finalizer] = None) -> int:
        tid = next(self._tids)
        self.nodes[tid] = TracedNode(tid, role=role, ref=ref, payload=payload,
                                     finalizable=finalizable, finalizer=finalizer)
        return tid

    def set_root(self, tid: int, flag: bool) -> None:
        self.get(tid).is_root = flag

    def link(self, src: int, dst: int) -> None:
        node = self.get(src)
        self.get(dst)
        node.strong_edges.add(dst)

    def unlink(self, src: int, dst: int) -> None:
        node = self.get(src)
        self.get(dst)
        node.strong_edges.discard(dst)

    def create_queue(self) -> int:
        qid = next(self._qids)
        self._queues[qid] = deque()
        return qid

    def register_weak(self, target: int, queue: Optional[int] = None) -> int:
        self.get(target)
        if queue is not None and queue not in self._queues:
            raise UnknownQueue(queue)
        wid = next(self._wids)
        self.cells[wid] = WeakCell(wid, target, queue=queue)
        self._cells_by_target.setdefault(target, []).append(wid)
        return wid

    def weak_get(self, wid: int) -> Optional[int]:
        cell = self.cells[wid]
        return None if cell.cleared else cell.target

    def discard_weak(self, wid: int) -> None:
        """Forget a cell that nobody will poll (its owner went away)."""
        cell = self.cells.pop(wid, None)
        if cell is not None and not cell.cleared:
            wids = self._cells_by_target.get(cell.target, [])
            if wid in wids:
                wids.remove(wid)

    def poll_queue(self, queue: int) -> Optional[int]:
        try:
            q = self._queues[queue]
        except KeyError:
            raise UnknownQueue(queue) from None
        return q.popleft() if q else None

    def drain_queue(self, queue: int) -> List[int]:
        out = []
        while (wid := self.poll_queue(queue)) is not None:
            out.append(wid)
        return out

    def _mark(self) -> Set[int]:
        marked: Set[int] = set()
        stack = [tid for tid in sorted(self.nodes, reverse=True) if self.nodes[tid].is_root]
        while stack:
            tid = stack.pop()
            if tid in marked:
                continue
            marked.add(tid)
            stack.extend(sorted(self.nodes[tid].strong_edges - marked, reverse=True))
        return marked

    def reachable(self) -> Set[int]:
        return self._mark()

    def collect(self) -> CollectionReport:
        if self._collecting:
            raise ReentrantCollection("collect() called from inside a collection")
        self._collecting = True
        try:
            self.cycle_index += 1
            report = CollectionReport(self.cycle_index)
            candidates = sorted(self.nodes)
            marked = self._mark()
            for tid in candidates:
                node = self.nodes.get(tid)
                if node is None or tid in marked or not node.finalizable or node.finalizer_ran:
                    continue
                node.finalizer_ran = True
                report.finalized.add(tid)
                if node.finalizer is not None:
                    node.finalizer(self, tid)
            remarked = self._mark() if report.finalized else marked
            condemned = [tid for tid in candidates if tid in self.nodes and tid not in remarked]
            report.resurrected = {tid for tid in candidates
                                  if tid not in marked and tid in remarked}
            for tid in condemned:
                for wid in self._cells_by_target.pop(tid, []):
                    cell = self.cells[wid]
                    cell.cleared = True
                    report.weak_cleared.add(wid)
                    if cell.queue is not None:
                        self._queues[cell.queue].append(wid)
            for tid in condemned:
                del self.nodes[tid]
            report.swept = set(condemned)
            if report.finalized:
                # nodes made by finalizers are spared but may point at the condemned
                for node in self.nodes.values():
                    node.strong_edges -= report.swept
            return report
        finally:
            self._collecting = False
