"""Simulator for bridging a reference-counted heap with a tracing collector."""

from gcbridge.bridge import Bridge, BridgeReport, ConsistencyResult, ManagedValue
from gcbridge.counted_heap import CountedHeap, CountedObject
from gcbridge.lock_model import LockModel
from gcbridge.monitor import Action, MemEvent, RefMonitor
from gcbridge.sides import BridgeMode, Side
from gcbridge.traced_heap import CollectionReport, Role, TracedHeap, TracedNode, WeakCell
from gcbridge.weakref_bridge import WeakHub, WeakKind, WeakRefBridge, WeakRefHandle

__all__ = [
    "Action", "Bridge", "BridgeMode", "BridgeReport", "CollectionReport", "ConsistencyResult",
    "CountedHeap", "CountedObject", "LockModel", "ManagedValue", "MemEvent", "RefMonitor",
    "Role", "Side", "TracedHeap", "TracedNode", "WeakCell", "WeakHub", "WeakKind",
    "WeakRefBridge", "WeakRefHandle",
]
