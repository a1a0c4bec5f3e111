"""Brute-force reachability over the union of both heaps.

Deliberately ignores the bridge's own bookkeeping (heads, head increments,
mirror edges) and reads raw heap state only, so it can judge the bridge.
"""

from __future__ import annotations

from typing import Dict, List, Set, Tuple

from gcbridge.traced_heap import Role

Node = Tuple[str, int]


def union_graph(world) -> Tuple[Set[Node], Dict[Node, List[Node]]]:
    counted, traced = world.counted, world.traced
    roots: Set[Node] = {("c", oid) for oid, n in world.counted_handles.items() if n > 0}
    roots |= {("t", tid) for tid, node in traced.nodes.items()
              if node.is_root and node.role is not Role.GC_HEAD}
    adj: Dict[Node, List[Node]] = {}
    for oid, obj in counted.objects.items():
        adj[("c", oid)] = [("c", c) for c in obj.edges if c is not None]
    for tid, node in traced.nodes.items():
        if node.role is Role.GC_HEAD:
            continue
        out = [("t", t) for t in sorted(node.strong_edges)
               if t in traced.nodes and traced.nodes[t].role is not Role.GC_HEAD]
        adj[("t", tid)] = out
    # a live backend and its native object are one logical value
    for tid, node in traced.nodes.items():
        if node.role is Role.BACKEND and node.ref is not None:
            adj[("t", tid)].append(("c", node.ref))
            adj.setdefault(("c", node.ref), []).append(("t", tid))
    for hub in world.weakrefs.hubs.values():
        if hub.holds_counted_increment and hub.traced_referent is not None:
            adj.setdefault(("t", hub.traced_referent), []).append(("c", hub.counted_referent))
    return roots, adj


def oracle_reachable(world) -> Set[int]:
    """Counted oids that must survive in the current state."""
    roots, adj = union_graph(world)
    seen: Set[Node] = set()
    stack = sorted(roots)
    while stack:
        cur = stack.pop()
        if cur in seen:
            continue
        seen.add(cur)
        stack.extend(adj.get(cur, ()))
    return {i for side, i in seen if side == "c"}
