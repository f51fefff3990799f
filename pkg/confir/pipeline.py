"""
The compile half of the workflow: parse, infer qualifiers, lay out memory and
instrument.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from confir.config import settings
from confir.instrument import compute_layout, instrument_program
from confir.ir.memory import MemoryLayout, Scheme
from confir.ir.parser import parse_source
from confir.ir.program import Program, SourceProgram
from confir.qualinfer import InferenceResult, infer_program

logger = logging.getLogger(__name__)


@dataclass
class Compiled:
    source: SourceProgram
    inference: InferenceResult
    program: Program


def compile_program(
    sp: SourceProgram,
    seed: int,
    scheme: Scheme | str | None = None,
    strict: bool | None = None,
    layout: MemoryLayout | None = None,
) -> Compiled:
    """
    Infer, lay out and instrument a parsed source program.

    Raises:
        QualifierError: private data reaches a public position
        InstrumentError: the program cannot be lowered soundly
        ConfigError: the layout configuration is out of bounds
    """
    strict = settings.strict if strict is None else strict
    layout = layout or compute_layout(scheme or settings.scheme)
    inference = infer_program(sp, strict=strict)
    program = instrument_program(sp, inference, layout, seed)
    return Compiled(sp, inference, program)


def compile_source(
    text: str,
    seed: int,
    scheme: Scheme | str | None = None,
    strict: bool | None = None,
) -> Compiled:
    """``compile_program`` on ``.cir`` text."""
    return compile_program(parse_source(text), seed, scheme=scheme, strict=strict)
