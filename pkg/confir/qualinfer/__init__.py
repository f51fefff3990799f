"""Qualifier inference: constraints from annotated signatures, then register taints."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from confir.ir.program import SourceProgram
from confir.ir.syntax import CallT, CallU, Command, ICall
from confir.ir.taint import H, TaintEnv, TaintLabel

from .constraints import (
    ENTRY_SITE,
    ConstraintSystem,
    Eq,
    Le,
    TaintVar,
    generate_constraints,
    reaching_definitions,
    source_cfg,
    source_successors,
)
from .dataflow import compute_node_taints, entry_env, expr_taint, transfer
from .solver import constraint_graph, satisfies, solve_constraints

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ImplicitFlowWarning:
    """A branch on private data, reported instead of rejected in warn mode."""

    function: str
    index: int

    def __str__(self) -> str:
        return f"{self.function}#{self.index}: branch condition depends on private data"


@dataclass
class InferenceResult:
    solution: dict[TaintVar, TaintLabel]
    access_regions: dict[tuple[str, int], TaintLabel]
    node_taints: dict[str, list[tuple[TaintEnv, TaintEnv]]]
    warnings: list[ImplicitFlowWarning] = field(default_factory=list)


def infer_program(sp: SourceProgram, strict: bool = True) -> InferenceResult:
    """Generate and solve constraints, then compute per-statement taints.

    Raises:
        QualifierError: a private value reaches a public position.
    """
    system = generate_constraints(sp, strict=strict)
    solution = solve_constraints(system.constraints, system.variables())

    def label_of(atom) -> TaintLabel:
        return atom if isinstance(atom, TaintLabel) else solution.get(atom, H)

    access_regions = {key: label_of(atom) for key, atom in system.access_regions.items()}

    warnings = []
    for (fn, index), atoms in sorted(system.branch_conditions.items()):
        if any(label_of(a) is H for a in atoms):
            warnings.append(ImplicitFlowWarning(fn, index))
    for w in warnings:
        logger.warning(str(w))

    signatures = sp.signatures()

    def call_return(cmd: Command) -> TaintLabel:
        if isinstance(cmd, ICall):
            return cmd.ret_taint
        if isinstance(cmd, (CallU, CallT)):
            return signatures[cmd.func].ret
        return H

    node_taints = {}
    for fn in sp.functions:
        regions = {
            index: label
            for (name, index), label in access_regions.items()
            if name == fn.name
        }
        node_taints[fn.name] = compute_node_taints(
            fn.body,
            [source_successors(fn, i) for i in range(len(fn.body))],
            entry_env(fn.signature.taint_vec()),
            regions=regions,
            call_return=call_return,
            restore_callee_save=True,
        )
    logger.debug(f"inferred {len(solution)} qualifiers across {len(sp.functions)} functions")
    return InferenceResult(solution, access_regions, node_taints, warnings)


__all__ = [
    "ENTRY_SITE",
    "TaintVar",
    "Le",
    "Eq",
    "ConstraintSystem",
    "generate_constraints",
    "reaching_definitions",
    "source_cfg",
    "source_successors",
    "solve_constraints",
    "constraint_graph",
    "satisfies",
    "compute_node_taints",
    "entry_env",
    "expr_taint",
    "transfer",
    "ImplicitFlowWarning",
    "InferenceResult",
    "infer_program",
]
