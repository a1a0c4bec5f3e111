"""Exception hierarchy shared by the heaps, the bridge and the scenario layer."""

from __future__ import annotations


class GcBridgeError(Exception):
    """Base class for every error raised by this package."""


# counted heap

class UnknownObject(GcBridgeError, KeyError):
    def __init__(self, oid: int) -> None:
        super().__init__(f"no live counted object with oid {oid}")
        self.oid = oid

    def __str__(self) -> str:
        return self.args[0]


class NegativeRefcount(GcBridgeError):
    """A decref was issued on an object that holds no references (double free)."""


class NotContainer(GcBridgeError):
    """Edges were set on an object that is not gc-tracked."""


# traced heap

class UnknownNode(GcBridgeError, KeyError):
    def __init__(self, tid: int) -> None:
        super().__init__(f"no live traced node with tid {tid}")
        self.tid = tid

    def __str__(self) -> str:
        return self.args[0]


class UnknownQueue(GcBridgeError, KeyError):
    def __str__(self) -> str:
        return f"unknown reference queue {self.args[0]!r}"


class ReentrantCollection(GcBridgeError):
    """collect() was called while a collection (typically a finalizer) was running."""


# bridge

class BackendAlive(GcBridgeError):
    pass


class NoBackend(GcBridgeError):
    pass


# weak references

class UnknownReferent(GcBridgeError):
    pass


class HubCleared(GcBridgeError):
    pass


class UnknownHandle(GcBridgeError, KeyError):
    def __str__(self) -> str:
        return f"unknown weak reference handle {self.args[0]!r}"


# lock model

class LockError(GcBridgeError):
    pass


class WouldBlock(LockError):
    pass


class DoubleEnter(LockError):
    pass


class NotHolding(LockError):
    pass


class ExitInsideAllowWindow(LockError):
    pass


class Underflow(LockError):
    pass


# scenarios

class ParseError(GcBridgeError):
    def __init__(self, line_no: int, message: str) -> None:
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class UnboundName(ParseError):
    pass


class ScenarioError(GcBridgeError):
    """A module error raised while executing a scenario command."""

    def __init__(self, line_no: int, verb: str, cause: Exception) -> None:
        super().__init__(f"line {line_no} ({verb}): {type(cause).__name__}: {cause}")
        self.line_no = line_no
        self.verb = verb
        self.cause = cause


class AccountingError(GcBridgeError):
    """The refcount audit found an object whose count is not fully attributed."""
