import pytest

from gcbridge.errors import UnknownHandle, UnknownReferent
from gcbridge.sides import Side
from gcbridge.weakref_bridge import WeakKind


def bridged(world, type_name="list"):
    oid = world.new_counted(type_name, True, "[]")
    tid = world.bridge.pass_to_managed(oid)
    world.hold_traced(tid)
    return oid, tid


def test_one_hub_per_referent(world):
    oid, tid = bridged(world)
    a = world.weakrefs.new_weakref(oid, Side.COUNTED)
    b = world.weakrefs.new_weakref(tid, Side.TRACED, WeakKind.PROXY)
    assert a.hub == b.hub
    assert world.weakrefs.anchor_count(oid) == 1
    world.audit()


def test_unknown_referent_and_handle(world):
    with pytest.raises(UnknownReferent):
        world.weakrefs.new_weakref(77, Side.COUNTED)
    with pytest.raises(UnknownReferent):
        world.weakrefs.new_weakref(77, Side.TRACED)
    with pytest.raises(UnknownHandle):
        world.weakrefs.deref(5)


def test_traced_collection_keeps_hub_and_fires_nothing(world):
    oid, tid = bridged(world, "tuple")
    h = world.weakrefs.new_weakref(tid, Side.TRACED, callback="cb")
    world.drop_traced(tid)
    world.gc()
    assert oid in world.counted
    assert world.weakrefs.fired == []
    assert not world.weakrefs.is_cleared(h.handle_id)
    assert world.weakrefs.anchor_count(oid) == 0


def test_wrapping_backend_is_resurrected_and_reanchored(world):
    oid, tid = bridged(world, "list")
    world.weakrefs.new_weakref(tid, Side.TRACED)
    world.drop_traced(tid)
    report = world.gc()
    assert report.resurrected_backends == {oid}
    assert world.weakrefs.anchor_count(oid) == 1
    assert world.weakrefs.fired == []


def test_deref_recreates_equivalent_referent(world):
    oid, tid = bridged(world, "tuple")
    h = world.weakrefs.new_weakref(tid, Side.TRACED)
    world.drop_traced(tid)
    world.gc()
    new = world.weakrefs.deref(h.handle_id)
    assert new is not None and new != tid
    assert world.bridge.counterpart_of[new] == oid
    assert world.traced.get(new).payload.type_name == "tuple"
    # recreation re-anchors the hub
    assert world.weakrefs.anchor_count(oid) == 1
    world.audit()


def test_counted_death_fires_each_callback_once_native_first(world):
    oid, tid = bridged(world)
    wm = world.weakrefs.new_weakref(tid, Side.TRACED, callback="managed")
    wn = world.weakrefs.new_weakref(oid, Side.COUNTED, callback="native")
    world.drop_traced(tid)
    world.drop_counted(oid)
    world.gc()
    world.gc()
    assert oid not in world.counted
    assert [cb for _, cb in world.weakrefs.fired] == ["native", "managed"]
    assert world.weakrefs.is_cleared(wm.handle_id) and world.weakrefs.is_cleared(wn.handle_id)
    assert world.weakrefs.deref(wm.handle_id) is None
    assert world.weakrefs.deref(wn.handle_id, Side.TRACED) is None


def test_managed_only_referent_clears_on_collection(world):
    tid = world.new_managed("dict", True, "{}")
    h = world.weakrefs.new_weakref(tid, Side.TRACED, callback="cb")
    world.drop_traced(tid)
    world.gc()
    assert world.weakrefs.is_cleared(h.handle_id)
    assert [cb for _, cb in world.weakrefs.fired] == ["cb"]


def test_native_deref_of_managed_only_referent_bridges_it(world):
    tid = world.new_managed("list", True, "[]")
    h = world.weakrefs.new_weakref(tid, Side.TRACED)
    oid = world.weakrefs.deref(h.handle_id, Side.COUNTED)
    assert world.bridge.counterpart_of[tid] == oid
    assert world.weakrefs.anchor_count(oid) == 1
    world.audit()


def test_anchor_does_not_block_dead_cycle(world):
    a = world.new_counted("list", True, "a")
    b = world.new_counted("list", True, "b")
    world.counted.set_edge(a, 0, b)
    world.counted.set_edge(b, 0, a)
    tid = world.bridge.pass_to_managed(a)
    world.weakrefs.new_weakref(a, Side.COUNTED)
    assert world.weakrefs.anchor_count(a) == 1
    world.drop_counted(a)
    world.drop_counted(b)
    world.gc()
    assert a not in world.counted and b not in world.counted


def test_drop_last_handle_releases_anchor(world):
    oid, tid = bridged(world)
    h = world.weakrefs.new_weakref(oid, Side.COUNTED)
    assert world.weakrefs.anchor_count(oid) == 1
    world.weakrefs.drop_weakref(h.handle_id)
    assert world.weakrefs.anchor_count(oid) == 0
    assert world.weakrefs.hubs == {}
    world.audit()


def test_both_sides_agree_on_cleared_status(world):
    oid, tid = bridged(world)
    wn = world.weakrefs.new_weakref(oid, Side.COUNTED)
    wm = world.weakrefs.new_weakref(tid, Side.TRACED)
    steps = [lambda: world.drop_traced(tid), world.gc, lambda: world.drop_counted(oid),
             world.gc, world.gc]
    for step in steps:
        step()
        assert world.weakrefs.is_cleared(wn.handle_id) == world.weakrefs.is_cleared(wm.handle_id)
    assert world.weakrefs.is_cleared(wn.handle_id)
