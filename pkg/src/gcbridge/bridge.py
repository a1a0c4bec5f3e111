"""Bridge between the reference-counted heap and the tracing heap.

Every counted object that becomes visible to the managed side gets a GC head:
a small traced node that owns one reference increment on the object. Head
edges copy the counted edges, so a native reference cycle shows up on the
traced side as an ordinary cycle of heads and the tracing collector can find
it. Heads and managed backends point at each other strongly, which keeps the
native graph alive exactly while something managed can reach it.

When the tracer sweeps heads, :meth:`Bridge.process_cleared_heads` drains the
head queue and groups the cleared objects into connected subgraphs. A
subgraph is only released if every reference count inside it is explained
by internal edges, head increments and weak-hub anchors. Anything that is
not explained (for instance an edge an extension wrote without reporting it)
keeps the offending object, and everything it reaches, alive: those objects
are re-explored, get fresh heads, and swept backends are resurrected.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, List, Mapping, Optional, Set

from gcbridge.counted_heap import CountedHeap, CountedObject
from gcbridge.errors import BackendAlive, NoBackend, UnknownNode, UnknownObject
from gcbridge.monitor import Action, RefMonitor
from gcbridge.sides import BridgeMode, Side
from gcbridge.traced_heap import Role, TracedHeap

if TYPE_CHECKING:
    from gcbridge.weakref_bridge import WeakRefBridge


# immutable types are mirrored; everything else lives on one side and is wrapped
MODE_TABLE: Dict[str, BridgeMode] = {
    "str": BridgeMode.MIRRORED,
    "int": BridgeMode.MIRRORED,
    "tuple": BridgeMode.MIRRORED,
    "list": BridgeMode.WRAPS_TRACED,
    "dict": BridgeMode.WRAPS_TRACED,
}


@dataclass
class ManagedValue:
    """State of a managed-side object as seen by the bridge."""

    type_name: str
    repr_text: str
    gc_tracked: bool
    slots: List[Optional[int]] = field(default_factory=list)


@dataclass
class GcHead:
    head_tid: int
    target_oid: int
    holds_increment: bool = True
    finalizable: bool = False
    # False once the traced node has been swept and not yet recreated
    alive: bool = True


@dataclass
class WeakAnchor:
    target_oid: int
    backend_cell: int


@dataclass(frozen=True)
class ConsistencyResult:
    witness: Optional[int] = None

    @property
    def consistent(self) -> bool:
        return self.witness is None

    def __bool__(self) -> bool:
        return self.consistent


@dataclass
class BridgeReport:
    released: Set[int] = field(default_factory=set)
    reexplored: Set[int] = field(default_factory=set)
    resurrected_backends: Set[int] = field(default_factory=set)
    # first unexplained member per inconsistent component, keyed by its smallest oid
    witnesses: Dict[int, int] = field(default_factory=dict)
    freed: Set[int] = field(default_factory=set)

    def __bool__(self) -> bool:
        return bool(self.released or self.reexplored or self.freed)


class Bridge:
    def __init__(self, counted: CountedHeap, traced: TracedHeap,
                 monitor: Optional[RefMonitor] = None,
                 mode_table: Optional[Mapping[str, BridgeMode]] = None,
                 silent_mutable: Optional[Set[str]] = None) -> None:
        self.counted = counted
        self.traced = traced
        self.monitor = monitor
        self.mode_table = dict(MODE_TABLE if mode_table is None else mode_table)
        # None means "every gc-tracked type may be mutated behind our back"
        self.silent_mutable = silent_mutable
        self.weakrefs: Optional["WeakRefBridge"] = None

        self.heads: Dict[int, GcHead] = {}
        self._head_owner: Dict[int, int] = {}     # head tid -> oid
        self._head_cells: Dict[int, int] = {}     # head tid -> weak cell id
        self.backend_of: Dict[int, int] = {}      # oid -> backend tid (possibly swept)
        self.counterpart_of: Dict[int, int] = {}  # backend tid -> oid
        self.lineage: Dict[int, int] = {}         # every backend tid ever made -> oid
        self.anchors: Dict[int, WeakAnchor] = {}
        self.head_queue = traced.create_queue()
        self._processing_frees: Optional[Set[int]] = None

        counted.change_listeners.append(self.notify_change)
        counted.free_listeners.append(self._on_free)

    # lookups

    def _head_live(self, head: Optional[GcHead]) -> bool:
        # a head swept by a collect that was not processed yet counts as dead
        return head is not None and head.alive and head.head_tid in self.traced

    def head_tid(self, oid: int) -> Optional[int]:
        head = self.heads.get(oid)
        return head.head_tid if self._head_live(head) else None

    def live_backend(self, oid: int) -> Optional[int]:
        tid = self.backend_of.get(oid)
        return tid if tid is not None and tid in self.traced else None

    def is_mirrored(self, oid: int) -> bool:
        return oid in self.heads

    def mode_for(self, type_name: str, from_side: Side) -> BridgeMode:
        mode = self.mode_table.get(type_name, BridgeMode.WRAPS_TRACED)
        if mode is BridgeMode.MIRRORED:
            return mode
        return BridgeMode.WRAPS_TRACED if from_side is Side.TRACED else BridgeMode.WRAPPED_BY_TRACED

    def _silently_mutable(self, obj: CountedObject) -> bool:
        if not obj.gc_tracked:
            return False
        return self.silent_mutable is None or obj.type_name in self.silent_mutable

    # crossing the border

    def pass_to_native(self, tid: int, site: str = "") -> int:
        """Return a new counted reference to the native counterpart of ``tid``.

        Unmapped managed objects are converted together with everything they
        reach through their slots; cycles are handled by registering each
        counterpart before its children are filled in.
        """
        self.traced.get(tid)
        if tid in self.counterpart_of:
            oid = self.counterpart_of[tid]
            self.counted.incref(oid)
            return oid
        root = self._convert(tid, site)
        self.mirror_subgraph(root)
        return root

    def _convert(self, tid: int, site: str) -> int:
        created: List[int] = []
        fills: List[tuple] = []

        def counterpart(t: int) -> int:
            # new reference, either to an existing mapping or to a fresh object
            if t in self.counterpart_of:
                oid = self.counterpart_of[t]
                self.counted.incref(oid)
                return oid
            node = self.traced.get(t)
            value = node.payload
            if not isinstance(value, ManagedValue):
                raise TypeError(f"traced node {t} carries no convertible value")
            oid = self.counted.alloc(value.type_name, value.gc_tracked, value.repr_text,
                                     site, repr_origin=Side.TRACED)
            obj = self.counted.get(oid)
            obj.bridge_mode = self.mode_for(value.type_name, Side.TRACED)
            self._attach_backend(oid, t)
            created.append(oid)
            fills.append((oid, list(value.slots)))
            return oid

        root = counterpart(tid)
        while fills:
            oid, slots = fills.pop(0)
            for slot, child in enumerate(slots):
                if child is None:
                    continue
                self.counted.set_edge(oid, slot, counterpart(child), silent=True, steal=True)
        for oid in created:
            if self.weakrefs is not None:
                self.weakrefs.on_bridged(oid, self.backend_of[oid])
        return root

    def _attach_backend(self, oid: int, tid: int) -> None:
        node = self.traced.get(tid)
        node.role = Role.BACKEND
        node.ref = oid
        old = self.backend_of.get(oid)
        if old is not None:
            self.counterpart_of.pop(old, None)
        self.backend_of[oid] = tid
        self.counterpart_of[tid] = oid
        self.lineage[tid] = oid
        anchor = self.anchors.pop(oid, None)
        if anchor is not None:
            self.traced.discard_weak(anchor.backend_cell)
        self.anchors[oid] = WeakAnchor(oid, self.traced.register_weak(tid))

    def _new_backend(self, oid: int) -> int:
        obj = self.counted.get(oid)
        value = ManagedValue(obj.type_name, obj.repr_text, obj.gc_tracked,
                             [None] * len(obj.edges))
        tid = self.traced.create_node(role=Role.BACKEND, payload=value, ref=oid)
        self._attach_backend(oid, tid)
        return tid

    def pass_to_managed(self, oid: int) -> int:
        """Return the managed counterpart of ``oid``, creating (or recreating) it if needed."""
        obj = self.counted.get(oid)
        tid = self.live_backend(oid)
        if tid is not None:
            return tid
        if obj.bridge_mode is BridgeMode.NONE:
            obj.bridge_mode = self.mode_for(obj.type_name, Side.COUNTED)
        tid = self._new_backend(oid)
        self.mirror_subgraph(oid)
        if self.weakrefs is not None:
            self.weakrefs.on_bridged(oid, tid)
        return tid

    # mirroring

    def _finalize_head(self, traced: TracedHeap, tid: int) -> None:
        oid = self._head_owner.get(tid)
        if oid is None or oid not in self.counted or self.counted.monitor is None:
            return
        self.counted._emit(Action.FINALIZE, self.counted.get(oid))

    def _ensure_head(self, oid: int) -> int:
        head = self.heads.get(oid)
        if self._head_live(head):
            return head.head_tid
        obj = self.counted.get(oid)
        finalizable = self._silently_mutable(obj)
        tid = self.traced.create_node(finalizable=finalizable, role=Role.GC_HEAD, ref=oid,
                                      finalizer=self._finalize_head if finalizable else None)
        if head is None:
            self.counted.incref(oid)
            self.heads[oid] = GcHead(tid, oid, True, finalizable)
        else:
            # recreated head takes over the increment its swept predecessor held
            self._head_owner.pop(head.head_tid, None)
            head.head_tid, head.alive, head.finalizable = tid, True, finalizable
        self._head_owner[tid] = oid
        self._head_cells[tid] = self.traced.register_weak(tid, self.head_queue)
        return tid

    def _rebuild_head_edges(self, oid: int) -> List[int]:
        """Point head(oid) at the heads of its children and at its backend.

        Returns children that had no head yet.
        """
        tid = self.heads[oid].head_tid
        node = self.traced.get(tid)
        wanted: Set[int] = set()
        missing = []
        for child in self.counted.traverse(oid):
            ctid = self.head_tid(child)
            if ctid is None:
                missing.append(child)
            else:
                wanted.add(ctid)
        backend = self.live_backend(oid)
        if backend is not None:
            wanted.add(backend)
            self.traced.link(backend, tid)
        node.strong_edges = wanted
        return missing

    def mirror_subgraph(self, oid: int) -> Set[int]:
        self.counted.get(oid)
        order: List[int] = []
        seen: Set[int] = set()
        stack = [oid]
        while stack:
            cur = stack.pop()
            if cur in seen:
                continue
            seen.add(cur)
            order.append(cur)
            self._ensure_head(cur)
            stack.extend(reversed(self.counted.traverse(cur)))
        for cur in order:
            self._rebuild_head_edges(cur)
        return {self.heads[o].head_tid for o in order}

    def notify_change(self, oid: int) -> None:
        """Refresh the mirror after a reported change to ``oid``'s edges."""
        self.counted.get(oid)
        head = self.heads.get(oid)
        if head is None:
            return
        live = self._head_live(head)
        if live:
            missing = self._rebuild_head_edges(oid)
        else:
            # head swept and awaiting processing: still bridge the new children
            missing = [c for c in self.counted.traverse(oid) if self.head_tid(c) is None]
        for child in missing:
            if child in self.counted and self.head_tid(child) is None:
                self.mirror_subgraph(child)
        if missing and live:
            self._rebuild_head_edges(oid)

    # deletion path

    def _anchor_increments(self, oid: int) -> int:
        return self.weakrefs.anchor_count(oid) if self.weakrefs is not None else 0

    def _unexplained(self, members: Set[int]) -> List[int]:
        incoming = dict.fromkeys(members, 0)
        for m in members:
            for child in self.counted.traverse(m):
                if child in incoming:
                    incoming[child] += 1
        bad = []
        for m in sorted(members):
            head = self.heads.get(m)
            explained = incoming[m] + self._anchor_increments(m)
            if head is not None and head.holds_increment:
                explained += 1
            if self.counted.refcount(m) != explained:
                bad.append(m)
        return bad

    def consistency_check(self, subgraph: Set[int]) -> ConsistencyResult:
        members = set(subgraph)
        for m in members:
            self.counted.get(m)
        bad = self._unexplained(members)
        return ConsistencyResult(bad[0] if bad else None)

    def _closure(self, start: List[int], within: Set[int]) -> Set[int]:
        out: Set[int] = set()
        stack = list(start)
        while stack:
            cur = stack.pop()
            if cur in out:
                continue
            out.add(cur)
            stack.extend(c for c in self.counted.traverse(cur) if c in within)
        return out

    def _components(self, candidates: Set[int]) -> List[Set[int]]:
        adj: Dict[int, Set[int]] = {c: set() for c in candidates}
        for c in candidates:
            for child in self.counted.traverse(c):
                if child in adj and child != c:
                    adj[c].add(child)
                    adj[child].add(c)
        comps, seen = [], set()
        for c in sorted(candidates):
            if c in seen:
                continue
            comp = self._closure_undirected(c, adj)
            seen |= comp
            comps.append(comp)
        return comps

    @staticmethod
    def _closure_undirected(start: int, adj: Dict[int, Set[int]]) -> Set[int]:
        comp, stack = set(), [start]
        while stack:
            cur = stack.pop()
            if cur not in comp:
                comp.add(cur)
                stack.extend(adj[cur] - comp)
        return comp

    def _drain_cleared_heads(self) -> Set[int]:
        candidates = set()
        for wid in self.traced.drain_queue(self.head_queue):
            cell = self.traced.cells.pop(wid, None)
            if cell is None:
                continue
            tid = cell.target
            self._head_cells.pop(tid, None)
            oid = self._head_owner.pop(tid, None)
            if oid is None:
                continue
            head = self.heads.get(oid)
            # recreated in the meantime: stale entry
            if head is None or head.head_tid != tid:
                continue
            head.alive = False
            if oid in self.counted:
                candidates.add(oid)
        # a head may already be back (mirrored again between collect and process)
        return {oid for oid in candidates if not self.heads[oid].alive}

    def process_cleared_heads(self) -> BridgeReport:
        report = BridgeReport()
        self._processing_frees = report.freed
        try:
            candidates = self._drain_cleared_heads()
            for comp in self._components(candidates):
                self._process_component(comp, report)
            if self.weakrefs is not None:
                self.weakrefs.process_queue()
        finally:
            self._processing_frees = None
        report.released -= report.reexplored
        return report

    def _process_component(self, comp: Set[int], report: BridgeReport) -> None:
        # a live backend means managed code can still reach the object
        bad = [m for m in sorted(comp) if self.live_backend(m) is not None]
        bad += self._unexplained(comp)
        keep: Set[int] = set()
        if bad:
            report.witnesses[min(comp)] = min(bad)
            keep = self._closure(bad, comp)
        release = comp - keep
        if release:
            assert self.consistency_check(release), "residual subgraph must be self-explained"
            self._release(release)
            report.released |= release
        if keep:
            self._reexplore(keep, report)

    def _release(self, members: Set[int]) -> None:
        order = sorted(members)
        # guard references keep members from dying halfway through unlinking
        for m in order:
            self.counted.incref(m)
        for m in order:
            head = self.heads.pop(m)
            if head.holds_increment:
                head.holds_increment = False
                self.counted.decref(m)
            if self.weakrefs is not None:
                self.weakrefs.release_anchor(m)
        for m in order:
            self.counted.clear_edges(m)
        for m in order:
            self.counted.decref(m)

    def _reexplore(self, keep: Set[int], report: BridgeReport) -> None:
        for m in sorted(keep):
            if m in self.counted:
                self.mirror_subgraph(m)
        for m in sorted(keep):
            if m not in self.counted or m not in self.backend_of or self.live_backend(m) is not None:
                continue
            if self.counted.get(m).bridge_mode is BridgeMode.MIRRORED:
                # mirrored state is recreated on demand; drop the dead pendant
                self._forget_backend(m)
            else:
                self.resurrect_backend(m)
                report.resurrected_backends.add(m)
        report.reexplored |= keep

    def _forget_backend(self, oid: int) -> None:
        tid = self.backend_of.pop(oid)
        self.counterpart_of.pop(tid, None)
        anchor = self.anchors.pop(oid, None)
        if anchor is not None:
            self.traced.discard_weak(anchor.backend_cell)
        if self.weakrefs is not None:
            self.weakrefs.on_backend_lost(oid, tid)

    def resurrect_backend(self, oid: int) -> int:
        """Recreate the swept managed backend of ``oid`` from its counted state."""
        self.counted.get(oid)
        if self.live_backend(oid) is not None:
            raise BackendAlive(f"backend of oid {oid} is still alive")
        if oid not in self.backend_of:
            raise NoBackend(f"oid {oid} never had a managed backend")
        old = self.backend_of[oid]
        tid = self._new_backend(oid)
        self.counterpart_of.pop(old, None)
        head = self.head_tid(oid)
        if head is not None:
            self.traced.link(head, tid)
            self.traced.link(tid, head)
        if self.weakrefs is not None:
            self.weakrefs.on_bridged(oid, tid)
        return tid

    def _on_free(self, obj: CountedObject) -> None:
        oid = obj.oid
        if self._processing_frees is not None:
            self._processing_frees.add(oid)
        head = self.heads.pop(oid, None)
        if head is not None:
            self._head_owner.pop(head.head_tid, None)
        tid = self.backend_of.pop(oid, None)
        if tid is not None:
            self.counterpart_of.pop(tid, None)
            node = self.traced.nodes.get(tid)
            if node is not None:
                node.ref = None
        anchor = self.anchors.pop(oid, None)
        if anchor is not None:
            self.traced.discard_weak(anchor.backend_cell)

    # introspection used by audits and tests

    def head_increments(self) -> Dict[int, int]:
        return {oid: 1 for oid, h in self.heads.items() if h.holds_increment}

    def head_matches(self, oid: int) -> bool:
        """True when the live head of ``oid`` points at exactly the heads of its children."""
        head = self.heads.get(oid)
        if not self._head_live(head):
            return False
        want = set()
        for child in self.counted.traverse(oid):
            ctid = self.head_tid(child)
            if ctid is None:
                return False
            want.add(ctid)
        have = {t for t in self.traced.get(head.head_tid).strong_edges
                if self.traced.nodes[t].role is Role.GC_HEAD}
        return want == have

    def mirror_is_faithful(self) -> bool:
        """True when every live head's edges match its object's counted edges."""
        return all(self.head_matches(oid) for oid, head in self.heads.items()
                   if head.alive and oid in self.counted)
