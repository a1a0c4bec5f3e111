from __future__ import annotations

import enum


class Side(str, enum.Enum):
    """Which runtime produced an object or a reference."""

    COUNTED = "counted"
    TRACED = "traced"


class BridgeMode(str, enum.Enum):
    NONE = "none"
    MIRRORED = "mirrored"
    WRAPS_TRACED = "wraps_traced"
    WRAPPED_BY_TRACED = "wrapped_by_traced"
