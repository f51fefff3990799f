"""Instrumentation: region checks, taint-aware CFI magic and the memory layout."""

from .constants import (
    GIB,
    KIB,
    MIB,
    MPX_MAX_STACK_OFFSET,
    SEGMENT_GUARD,
    SEGMENT_MAX_NEGATIVE_OFFSET,
    SEGMENT_MAX_REACH,
    SEGMENT_STRIDE,
    SEGMENT_USABLE,
)
from .layout import compute_layout, place_globals, spill_slot
from .lower import instrument_program
from .magic import apply_magic_prefixes, assign_magic_prefixes

__all__ = [
    "KIB",
    "MIB",
    "GIB",
    "SEGMENT_USABLE",
    "SEGMENT_GUARD",
    "SEGMENT_STRIDE",
    "SEGMENT_MAX_REACH",
    "SEGMENT_MAX_NEGATIVE_OFFSET",
    "MPX_MAX_STACK_OFFSET",
    "compute_layout",
    "place_globals",
    "spill_slot",
    "instrument_program",
    "assign_magic_prefixes",
    "apply_magic_prefixes",
]
