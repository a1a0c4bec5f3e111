import pytest

from gcbridge.errors import BackendAlive, NoBackend
from gcbridge.sides import BridgeMode
from gcbridge.traced_heap import Role


def demo_world(world):
    """lst = ([..., 'test'],) with lst[0][0] = lst, bridged through an argument tuple."""
    t = world.new_managed("tuple", True, "t")
    l = world.new_managed("list", True, "l")
    s = world.new_managed("str", False, "test")
    world.set_managed_slot(t, 0, l)
    world.set_managed_slot(l, 0, t)
    world.set_managed_slot(l, 1, s)
    args = world.new_managed("tuple", True, "args")
    world.set_managed_slot(args, 0, t)
    oid = world.bridge.pass_to_native(args)
    world.adopt_counted(oid)
    return [t, l, s, args], oid


def test_conversion_builds_the_same_shape(world):
    tids, args_oid = demo_world(world)
    c = world.counted
    a = args_oid
    t = c.traverse(args_oid)[0]
    l = c.traverse(t)[0]
    s = c.traverse(l)[1]
    assert c.traverse(l)[0] == t
    assert [c.get(o).type_name for o in (a, t, l, s)] == ["tuple", "tuple", "list", "str"]
    assert [c.refcount(o) for o in (a, t, l, s)] == [2, 3, 2, 2]
    world.audit()


def test_mode_table(world):
    tids, args_oid = demo_world(world)
    c = world.counted
    modes = {c.get(o).type_name: c.get(o).bridge_mode for o in c.objects}
    assert modes == {"tuple": BridgeMode.MIRRORED, "list": BridgeMode.WRAPS_TRACED,
                     "str": BridgeMode.MIRRORED}
    native = world.new_counted("dict", True, "{}")
    world.bridge.pass_to_managed(native)
    assert c.get(native).bridge_mode is BridgeMode.WRAPPED_BY_TRACED


def test_pass_to_native_twice_returns_same_object(world):
    t = world.new_managed("list", True, "[]")
    o1 = world.bridge.pass_to_native(t)
    o2 = world.bridge.pass_to_native(t)
    assert o1 == o2 and world.counted.refcount(o1) == 3  # two passes + head


def test_heads_mirror_counted_edges(world):
    _, args_oid = demo_world(world)
    b, tr, c = world.bridge, world.traced, world.counted
    for oid in c.objects:
        head = tr.get(b.head_tid(oid))
        assert head.role is Role.GC_HEAD and head.ref == oid
        child_heads = {t for t in head.strong_edges if tr.get(t).role is Role.GC_HEAD}
        assert child_heads == {b.head_tid(x) for x in c.traverse(oid)}
    assert b.mirror_is_faithful()


def test_mirror_subgraph_is_idempotent(world):
    _, args_oid = demo_world(world)
    before = dict(world.bridge.head_increments())
    heads = world.bridge.mirror_subgraph(args_oid)
    assert world.bridge.mirror_subgraph(args_oid) == heads
    assert world.bridge.head_increments() == before


def test_notify_change_extends_the_mirror(world):
    parent = world.new_counted("list", True, "[]")
    world.bridge.mirror_subgraph(parent)
    child = world.new_counted("str", False, "x")
    world.counted.set_edge(parent, 0, child)
    assert world.bridge.head_tid(child) is not None
    assert world.bridge.mirror_is_faithful()


def test_silent_edge_leaves_mirror_stale(world):
    parent = world.new_counted("list", True, "[]")
    world.bridge.mirror_subgraph(parent)
    child = world.new_counted("str", False, "x")
    world.counted.set_edge(parent, 0, child, silent=True)
    assert world.bridge.head_tid(child) is None
    assert not world.bridge.mirror_is_faithful()


def test_consistency_check(world):
    _, args_oid = demo_world(world)
    world.drop_counted(args_oid)
    everything = set(world.counted.objects)
    assert world.bridge.consistency_check(everything).consistent
    # an external handle on one member is a reference the subgraph cannot explain
    t = world.counted.traverse(args_oid)[0]
    world.hold_counted(t)
    result = world.bridge.consistency_check(everything)
    assert not result and result.witness == t


def test_demo_graph_is_freed_in_one_cycle(world):
    tids, args_oid = demo_world(world)
    world.drop_counted(args_oid)
    for tid in tids:
        world.drop_traced(tid)
    report = world.gc()
    assert len(world.counted) == 0
    assert report.freed == {1, 2, 3, 4}
    assert world.monitor.list_leaks() == "no leaks recorded"


def test_live_managed_backend_blocks_release(world):
    tids, args_oid = demo_world(world)
    world.drop_counted(args_oid)
    for tid in tids[:3]:
        world.drop_traced(tid)
    # managed args tuple still rooted: its backend is alive, nothing may go
    world.gc()
    assert len(world.counted) == 4
    world.drop_traced(tids[3])
    world.gc()
    assert len(world.counted) == 0


def hard_case(world):
    t = world.new_managed("tuple", True, "t")
    l = world.new_managed("list", True, "l")
    world.set_managed_slot(t, 0, l)
    world.set_managed_slot(l, 0, t)
    holder = world.new_managed("list", True, "holder")
    nx = world.bridge.pass_to_native(holder)
    world.adopt_counted(nx)
    nt = world.bridge.pass_to_native(t)
    world.adopt_counted(nt)
    nl = world.counted.traverse(nt)[0]
    world.drop_traced(t)
    world.drop_traced(l)
    world.counted.set_edge(nx, 0, nt, silent=True)
    world.drop_counted(nt)
    return nx, nt, nl


def test_hard_case_keeps_and_resurrects(world):
    nx, nt, nl = hard_case(world)
    freed = []
    world.counted.free_listeners.append(lambda o: freed.append(o.oid))
    report = world.gc()
    assert freed == []
    assert report.witnesses == {nt: nt}
    assert report.reexplored == {nt, nl}
    # the list wraps a managed object, so its backend comes back
    assert report.resurrected_backends == {nl}
    assert world.bridge.live_backend(nl) is not None
    # the tuple is mirrored and gets a fresh backend only on demand
    assert world.bridge.live_backend(nt) is None
    assert world.bridge.head_tid(nt) is not None and world.bridge.head_tid(nl) is not None
    world.audit()


def test_hard_case_frees_after_notification(world):
    nx, nt, nl = hard_case(world)
    world.gc()
    world.bridge.notify_change(nx)
    world.gc()
    assert nt in world.counted
    world.counted.set_edge(nx, 0, None)
    cycles = 0
    while nt in world.counted and cycles < 5:
        world.gc()
        cycles += 1
    assert cycles <= 2 and nl not in world.counted


def test_resurrect_backend_errors(world):
    native = world.new_counted("list", True, "[]")
    with pytest.raises(NoBackend):
        world.bridge.resurrect_backend(native)
    world.bridge.pass_to_managed(native)
    with pytest.raises(BackendAlive):
        world.bridge.resurrect_backend(native)


def test_resurrected_backend_is_linked_to_head(world):
    native = world.new_counted("list", True, "[]")
    old = world.bridge.pass_to_managed(native)
    report = world.gc()
    assert old not in world.traced
    assert report.resurrected_backends == {native}
    new = world.bridge.live_backend(native)
    head = world.bridge.head_tid(native)
    assert head in world.traced.get(new).strong_edges
    assert new in world.traced.get(head).strong_edges
    assert world.traced.get(new).ref == native


def test_head_finalizer_emits_finalize_event(world):
    native = world.new_counted("list", True, "[]")
    world.bridge.mirror_subgraph(native)
    world.gc()
    actions = [e.action.value for e in world.monitor.history if e.oid == native]
    assert "finalize" in actions


def test_pass_to_managed_recreates_after_collection(world):
    native = world.new_counted("str", False, "x")
    t1 = world.bridge.pass_to_managed(native)
    world.gc()
    t2 = world.bridge.pass_to_managed(native)
    assert t1 != t2 and world.traced.get(t2).payload.repr_text == "x"
