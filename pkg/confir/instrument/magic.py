"""Random magic-prefix generation with a uniqueness check on the container bytes."""

from __future__ import annotations

import logging
import random

from confir.config import settings
from confir.errors import ExhaustedAttempts
from confir.ir.codec import serialize_with_offsets, stray_magic_windows
from confir.ir.constants import MAGIC_PREFIX_BITS
from confir.ir.program import FuncEntry, Program

logger = logging.getLogger(__name__)


def apply_magic_prefixes(p: Program, m_call: int, m_ret: int) -> Program:
    """Copy of ``p`` whose entry and return-site magic use the given prefixes."""
    functions = {}
    for name, info in p.functions.items():
        body = tuple(
            node if node.magic is None
            else node.model_copy(update={"magic": node.magic.with_prefix(m_ret)})
            for node in info.body
        )
        functions[name] = info.model_copy(
            update={"magic": info.magic.with_prefix(m_call), "body": body}
        )
    table = {
        name: FuncEntry(entry_pc=info.entry_pc, magic=info.magic)
        for name, info in functions.items()
    }
    return Program(
        functions=functions,
        func_table=table,
        entry=p.entry,
        convention=p.convention,
        m_call_prefix=m_call,
        m_ret_prefix=m_ret,
        layout=p.layout,
        globals=p.globals,
    )


def assign_magic_prefixes(
    p: Program, seed: int, max_attempts: int | None = None
) -> tuple[int, int]:
    """
    Draw ``(m_call, m_ret)`` prefixes for ``p``.

    Each attempt draws the call prefix then the return prefix from a generator
    seeded with ``seed``. A draw is kept when both prefixes are non-zero and
    distinct and the container bytes contain them only at magic fields.

    Args:
        p: Program whose bytes must stay free of the prefixes
        seed: Generator seed
        max_attempts: Draw limit (default from settings)

    Returns:
        The call and return prefixes

    Raises:
        ExhaustedAttempts: no acceptable draw within the limit
    """
    limit = settings.magic_max_attempts if max_attempts is None else max_attempts
    rng = random.Random(seed)
    for attempt in range(1, limit + 1):
        m_call = rng.getrandbits(MAGIC_PREFIX_BITS)
        m_ret = rng.getrandbits(MAGIC_PREFIX_BITS)
        if m_call == 0 or m_ret == 0 or m_call == m_ret:
            logger.debug(f"magic draw {attempt} rejected: degenerate prefixes")
            continue
        data, offsets = serialize_with_offsets(apply_magic_prefixes(p, m_call, m_ret))
        stray = stray_magic_windows(data, offsets, (m_call, m_ret))
        if stray:
            logger.debug(f"magic draw {attempt} rejected: {len(stray)} stray occurrence(s)")
            continue
        logger.debug(f"magic prefixes accepted after {attempt} draw(s)")
        return m_call, m_ret
    raise ExhaustedAttempts(f"no unique magic prefixes after {limit} draws")
