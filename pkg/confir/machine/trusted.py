"""
Host implementations of trusted functions.

A trusted implementation runs as one big step. It reads its arguments from
r1..r4, may read and write any memory, and returns False to halt the run in
the bottom state (for instance on an out-of-range buffer).
"""

from __future__ import annotations

import random
from collections.abc import Callable

from confir.ir.constants import RET_REG
from confir.ir.memory import MemoryLayout
from confir.ir.taint import TaintLabel

from .state import Configuration

TrustedImpl = Callable[[MemoryLayout, Configuration], bool]

# Longest buffer a builtin accepts; ranges beyond it halt in bottom.
MAX_BUFFER = 4096
DECLASSIFIED_VALUE = 42

SECRET_SEED_CELL = 0
SECRET_COUNTER_CELL = 1


def _memory(config: Configuration, region: TaintLabel) -> dict[int, int]:
    return config.mu_h if region is TaintLabel.H else config.mu_l


def _in_range(layout: MemoryLayout, region: TaintLabel, start: int, count: int) -> bool:
    if count > MAX_BUFFER:
        return False
    return count == 0 or (
        layout.contains(region, start) and layout.contains(region, start + count - 1)
    )


def _copy(
    layout: MemoryLayout, config: Configuration, src_region: TaintLabel, dst_region: TaintLabel
) -> bool:
    dst, src, count = config.rho[1], config.rho[2], config.rho[3]
    if not _in_range(layout, dst_region, dst, count):
        return False
    if not _in_range(layout, src_region, src, count):
        return False
    source, target = _memory(config, src_region), _memory(config, dst_region)
    for i in range(count):
        target[dst + i] = source.get(src + i, 0)
    config.rho[RET_REG] = 0
    return True


def t_read_secret(layout: MemoryLayout, config: Configuration) -> bool:
    """Fill ``count`` private cells at ``dst`` with values drawn from the trusted seed."""
    dst, count = config.rho[1], config.rho[2]
    if not _in_range(layout, TaintLabel.H, dst, count):
        return False
    seed_cell = layout.trusted_base + SECRET_SEED_CELL
    counter_cell = layout.trusted_base + SECRET_COUNTER_CELL
    draw = config.tau.get(counter_cell, 0)
    rng = random.Random(f"{config.tau.get(seed_cell, 0)}:{draw}")
    for i in range(count):
        config.mu_h[dst + i] = rng.getrandbits(64)
    config.tau[counter_cell] = draw + 1
    config.rho[RET_REG] = 0
    return True


def t_copy_pub(layout: MemoryLayout, config: Configuration) -> bool:
    """Copy ``count`` public cells from ``src`` to ``dst``."""
    return _copy(layout, config, TaintLabel.L, TaintLabel.L)


def t_declassify_const(layout: MemoryLayout, config: Configuration) -> bool:
    """Write a fixed value to the public cell ``dst``."""
    dst = config.rho[1]
    if not _in_range(layout, TaintLabel.L, dst, 1):
        return False
    config.mu_l[dst] = DECLASSIFIED_VALUE
    config.rho[RET_REG] = 0
    return True


def t_leaky(layout: MemoryLayout, config: Configuration) -> bool:
    """Copy private cells into public memory. Leaks on purpose, for negative controls."""
    return _copy(layout, config, TaintLabel.H, TaintLabel.L)


BUILTINS: dict[str, TrustedImpl] = {
    "t_read_secret": t_read_secret,
    "t_copy_pub": t_copy_pub,
    "t_declassify_const": t_declassify_const,
}

LEAKY_BUILTINS: dict[str, TrustedImpl] = {"t_leaky": t_leaky}


def builtin_registry(include_leaky: bool = False) -> dict[str, TrustedImpl]:
    """A fresh name-to-implementation map of the builtin trusted library."""
    registry = dict(BUILTINS)
    if include_leaky:
        registry.update(LEAKY_BUILTINS)
    return registry
