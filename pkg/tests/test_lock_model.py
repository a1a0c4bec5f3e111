import pytest

from gcbridge.errors import DoubleEnter, ExitInsideAllowWindow, NotHolding, Underflow, WouldBlock
from gcbridge.lock_model import (LockModel, balanced_windows, check_invariants,
                                 check_window_roundtrips, explore)


def test_enter_takes_lock_and_others_block():
    m = LockModel()
    m.enter_native("a")
    assert m.holder == "a"
    before = m.snapshot()
    with pytest.raises(WouldBlock):
        m.enter_native("b")
    assert m.snapshot()[0] == before[0]
    assert not m.actor("b").holds_lock


def test_callback_into_managed_keeps_lock():
    m = LockModel()
    m.enter_native("a")
    m.call_managed("a")
    assert m.holder == "a"


def test_allow_window_lets_others_in():
    m = LockModel()
    m.enter_native("a")
    m.begin_allow("a")
    m.enter_native("b")
    with pytest.raises(WouldBlock):
        m.end_allow("a")
    m.exit_native("b")
    m.end_allow("a")
    assert m.holder == "a"


def test_nested_windows_touch_lock_once():
    m = LockModel()
    m.enter_native("a")
    m.begin_allow("a")
    m.begin_allow("a")
    m.end_allow("a")
    assert m.holder is None
    m.end_allow("a")
    assert m.holder == "a"


def test_discipline_errors():
    m = LockModel()
    with pytest.raises(NotHolding):
        m.exit_native("a")
    with pytest.raises(NotHolding):
        m.begin_allow("a")
    with pytest.raises(Underflow):
        m.end_allow("a")
    m.enter_native("a")
    with pytest.raises(DoubleEnter):
        m.enter_native("a")
    m.begin_allow("a")
    with pytest.raises(ExitInsideAllowWindow):
        m.exit_native("a")


def test_balanced_windows_enumeration():
    assert balanced_windows(2) == [("begin_allow", "end_allow")]
    # Catalan numbers: 1 + 2 + 5 sequences of length 2, 4, 6
    assert len(balanced_windows(6)) == 8


def brute_force_states(n_actors, steps):
    """Independent enumeration: every operation sequence, replayed from scratch."""
    import itertools
    actors = [f"a{i}" for i in range(n_actors)]
    moves = [(a, op) for a in actors for op in LockModel.OPS]
    seen = set()
    for k in range(steps + 1):
        for seq in itertools.product(moves, repeat=k):
            m = LockModel(actors)
            for a, op in seq:
                try:
                    m.apply(a, op)
                except Exception:
                    pass
            seen.add(m.snapshot())
    return seen


def test_explore_matches_brute_force_on_small_space():
    states, problems = explore(2, 4)
    assert problems == []
    assert states == brute_force_states(2, 4)


def test_invariant_checker_flags_two_holders():
    m = LockModel(["a", "b"])
    m.enter_native("a")
    snap = m.snapshot()
    from dataclasses import replace
    bad = (snap[0], replace(snap[1], holds_lock=True, location=snap[0].location))
    assert check_invariants(bad)


def test_window_roundtrips_small():
    states, _ = explore(2, 3)
    assert check_window_roundtrips(states, 4) == []
