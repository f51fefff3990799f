"""Independent verifier for instrumented programs."""

from __future__ import annotations

import logging

from confir.ir.program import Program

from .cfg import ProgramIndex, command_targets
from .diagnostics import Diagnostic, RuleId, Severity, Verdict
from .rules import check_flow, check_node, recompute_taints
from .structural import check_structural

logger = logging.getLogger(__name__)


def verify(program: Program, strict: bool = True) -> Verdict:
    """
    Check every untrusted node, every edge and the structural side conditions.

    Args:
        program: A decoded, instrumented program
        strict: Reject control flow on private data; when False it is a warning

    Returns:
        Verdict whose diagnostics are sorted by pc, rule and message
    """
    index = ProgramIndex.build(program)
    found: list[Diagnostic] = []
    for info in program.untrusted():
        for node in info.body:
            found += check_node(program, node, index, strict=strict)
    found += check_flow(program, index)
    found += check_structural(program, index)
    verdict = Verdict.of(found)
    logger.debug(
        f"verified {len(index.nodes)} nodes: "
        f"{'accepted' if verdict.accepted else f'{len(verdict.rejects())} rejects'}"
    )
    return verdict


__all__ = [
    "Diagnostic",
    "ProgramIndex",
    "RuleId",
    "Severity",
    "Verdict",
    "check_flow",
    "check_node",
    "check_structural",
    "command_targets",
    "recompute_taints",
    "verify",
]
