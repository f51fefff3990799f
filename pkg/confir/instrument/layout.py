"""Memory layout computation and placement of globals."""

from __future__ import annotations

import logging
from collections.abc import Iterable

from pydantic import ValidationError

from confir.config import settings
from confir.errors import ConfigError
from confir.ir.constants import CALLEE_SAVE_REGS
from confir.ir.memory import GlobalCell, MemoryLayout, Scheme
from confir.ir.program import GlobalDecl
from confir.ir.taint import H, L

from .constants import (
    MPX_GUARD,
    MPX_MAX_STACK_OFFSET,
    SEGMENT_STRIDE,
    SEGMENT_USABLE,
    TRUSTED_SIZE_MPX,
)

logger = logging.getLogger(__name__)


def compute_layout(
    scheme: Scheme | str,
    *,
    public_size: int | None = None,
    private_size: int | None = None,
    stack_offset: int | None = None,
    stack_size: int | None = None,
) -> MemoryLayout:
    """
    Compute the region geometry of a partitioning scheme.

    MPX regions are contiguous and sized by configuration. Segment regions are
    fixed: 4 GiB usable per segment, segments 40 GiB apart, and the stacks one
    stride apart.

    Args:
        scheme: ``mpx`` or ``segment``
        public_size: MPX public region size in cells (default from settings)
        private_size: MPX private region size in cells (default from settings)
        stack_offset: MPX lock-step distance between the stacks (default from settings)
        stack_size: Cells per stack (default from settings)

    Returns:
        The layout

    Raises:
        ConfigError: sizes outside their bounds
    """
    try:
        scheme = Scheme(scheme)
    except ValueError as exc:
        raise ConfigError(f"unknown scheme '{scheme}'") from exc
    stack_size = settings.stack_size if stack_size is None else stack_size
    if stack_size <= 0:
        raise ConfigError("stack size must be positive")

    if scheme is Scheme.SEGMENT:
        if stack_size > SEGMENT_USABLE:
            raise ConfigError("stack does not fit in a 4 GiB segment")
        public_base = SEGMENT_USABLE
        values = dict(
            public_base=public_base,
            public_size=SEGMENT_USABLE,
            private_base=public_base + SEGMENT_STRIDE,
            private_size=SEGMENT_USABLE,
            stack_offset=SEGMENT_STRIDE,
            stack_size=stack_size,
            guard_low=public_base,
            guard_between=SEGMENT_STRIDE - SEGMENT_USABLE,
            trusted_base=public_base + 2 * SEGMENT_STRIDE,
            trusted_size=SEGMENT_USABLE,
        )
    else:
        public_size = settings.mpx_public_size if public_size is None else public_size
        private_size = settings.mpx_private_size if private_size is None else private_size
        stack_offset = settings.mpx_stack_offset if stack_offset is None else stack_offset
        if public_size <= 0 or private_size <= 0:
            raise ConfigError("region sizes must be positive")
        if stack_offset > MPX_MAX_STACK_OFFSET:
            raise ConfigError(f"stack offset {stack_offset} exceeds 2^31 - 1")
        if stack_size > public_size:
            raise ConfigError("stack does not fit in the public region")
        if not stack_size <= stack_offset <= private_size:
            raise ConfigError(
                f"stack offset must lie in [{stack_size}, {private_size}], got {stack_offset}"
            )
        public_base = MPX_GUARD
        private_base = public_base + public_size
        values = dict(
            public_base=public_base,
            public_size=public_size,
            private_base=private_base,
            private_size=private_size,
            stack_offset=stack_offset,
            stack_size=stack_size,
            guard_low=MPX_GUARD,
            guard_between=0,
            trusted_base=private_base + private_size + MPX_GUARD,
            trusted_size=TRUSTED_SIZE_MPX,
        )

    try:
        layout = MemoryLayout(scheme=scheme, **values)
    except ValidationError as exc:
        raise ConfigError(f"invalid layout: {exc.errors()[0]['msg']}") from exc
    logger.debug(
        f"{scheme} layout: public {layout.public_base:#x}, private {layout.private_base:#x}"
    )
    return layout


def spill_slot(layout: MemoryLayout, function_index: int, reg: int) -> int:
    """Private-stack cell holding callee-save register ``reg`` across calls in a function."""
    return (
        layout.private_stack_base
        + function_index * len(CALLEE_SAVE_REGS)
        + CALLEE_SAVE_REGS.index(reg)
    )


def place_globals(decls: Iterable[GlobalDecl], layout: MemoryLayout) -> tuple[GlobalCell, ...]:
    """
    Place globals one after another from the base of their region.

    Raises:
        ConfigError: the globals of a region run into its stack
    """
    cursor = {L: layout.public_base, H: layout.private_base}
    limit = {L: layout.public_stack_base, H: layout.private_stack_base}
    cells = []
    for decl in decls:
        base = cursor[decl.region]
        if base + decl.size > limit[decl.region]:
            raise ConfigError(f"global '{decl.name}' does not fit in the {decl.region} region")
        cells.append(GlobalCell(name=decl.name, region=decl.region, base=base, size=decl.size))
        cursor[decl.region] = base + decl.size
    return tuple(cells)
