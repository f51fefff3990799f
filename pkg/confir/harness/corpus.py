"""Corpora of generated, compiled programs."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from confir.errors import InstrumentError, QualifierError
from confir.ir.program import Program, SourceProgram
from confir.pipeline import compile_program

from .generator import GenParams, gen_program

logger = logging.getLogger(__name__)

# Seeds tried per requested program before giving up.
MAX_SEEDS_PER_PROGRAM = 10


@dataclass
class CorpusEntry:
    program_id: int
    program_seed: int
    source: SourceProgram
    program: Program


SEED_MASK = (1 << 63) - 1


def derive_seed(*parts: int) -> int:
    """Deterministic non-negative seed from a sequence of integers."""
    value = 0
    for part in parts:
        value = (value * 1_000_003 + part) & SEED_MASK
    return value


def build_corpus(
    seed: int,
    count: int,
    params: GenParams | None = None,
    scheme: str | None = None,
) -> list[CorpusEntry]:
    """
    Generate and compile ``count`` programs, skipping seeds that fail inference.

    Args:
        seed: Corpus seed; program seeds are derived from it
        count: Programs wanted
        params: Generator parameters
        scheme: Partitioning scheme (default from settings)

    Returns:
        Up to ``count`` entries, in seed order
    """
    entries: list[CorpusEntry] = []
    skipped = 0
    index = 0
    while len(entries) < count and index < count * MAX_SEEDS_PER_PROGRAM:
        ps = derive_seed(seed, index)
        index += 1
        source = gen_program(ps, params)
        try:
            compiled = compile_program(source, ps, scheme=scheme)
        except (QualifierError, InstrumentError) as exc:
            skipped += 1
            logger.debug(f"seed {ps} skipped: {exc.message}")
            continue
        entries.append(CorpusEntry(len(entries), ps, source, compiled.program))
    if len(entries) < count:
        logger.warning(f"corpus has {len(entries)} of {count} programs after {index} seeds")
    logger.info(f"built corpus of {len(entries)} programs ({skipped} seeds skipped)")
    return entries
