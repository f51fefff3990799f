"""
Mutation catalog for verifier soundness.

Each mutation changes exactly one site of a verified program in a way that
breaks a property the verifier is meant to enforce. A removed node is replaced
by ``goto pc+1`` so that pcs and recorded edges stay unchanged.
"""

from __future__ import annotations

import logging
import random
from collections.abc import Iterable
from dataclasses import dataclass
from enum import StrEnum

from pydantic import BaseModel, Field

from confir.confverify import RuleId, verify
from confir.errors import NoApplicableSite
from confir.ir.program import FuncEntry, MagicKind, Node, Program, Trust
from confir.ir.syntax import (
    AddrInRegion,
    Assert,
    Const,
    Goto,
    Ldr,
    MagicCallMatch,
    Mov,
    Str,
    const,
    expr_registers,
)
from confir.ir.taint import TaintEnv, TaintLabel, TaintVec5

from .corpus import CorpusEntry, derive_seed
from .reports import run_jobs

logger = logging.getLogger(__name__)


class MutationKind(StrEnum):
    DROP_ASSERT = "DropAssert"
    FLIP_MAGIC_TAINT_BIT = "FlipMagicTaintBit"
    RETARGET_STORE_REGION = "RetargetStoreRegion"
    WEAKEN_GAMMA_RECORD = "WeakenGammaRecord"
    DUPLICATE_MAGIC_IN_DATA = "DuplicateMagicInData"
    CROSS_FUNCTION_GOTO = "CrossFunctionGoto"
    ICALL_WITHOUT_CHECK = "ICallWithoutCheck"


# Rules a mutant of each kind is expected to trip.
TARGET_RULES: dict[MutationKind, frozenset[RuleId]] = {
    MutationKind.DROP_ASSERT: frozenset({RuleId.LDR, RuleId.STR}),
    MutationKind.FLIP_MAGIC_TAINT_BIT: frozenset({RuleId.CALL, RuleId.RET}),
    MutationKind.RETARGET_STORE_REGION: frozenset({RuleId.STR}),
    MutationKind.WEAKEN_GAMMA_RECORD: frozenset({RuleId.FLOW}),
    MutationKind.DUPLICATE_MAGIC_IN_DATA: frozenset({RuleId.MAGIC_NOT_UNIQUE}),
    MutationKind.CROSS_FUNCTION_GOTO: frozenset({RuleId.JUMP_ESCAPES_FUNCTION}),
    MutationKind.ICALL_WITHOUT_CHECK: frozenset({RuleId.ICALL}),
}


@dataclass
class Mutant:
    kind: MutationKind
    pc: int
    description: str
    program: Program


# -----------------------------------------------------------------------------
# Rewriting helpers
# -----------------------------------------------------------------------------


def _nodes(program: Program) -> list[Node]:
    return [node for info in program.untrusted() for node in info.body]


def _node_map(program: Program) -> dict[int, Node]:
    return {node.pc: node for node in _nodes(program)}


def _replace_node(program: Program, node: Node) -> Program:
    functions = dict(program.functions)
    for name, info in program.functions.items():
        if info.trust is Trust.U and any(n.pc == node.pc for n in info.body):
            body = tuple(node if n.pc == node.pc else n for n in info.body)
            functions[name] = info.model_copy(update={"body": body})
    return program.model_copy(update={"functions": functions})


def _replace_entry_magic(program: Program, name: str, taints: TaintVec5) -> Program:
    info = program.functions[name]
    magic = info.magic.model_copy(update={"taints": taints})
    functions = dict(program.functions)
    functions[name] = info.model_copy(update={"magic": magic})
    table = dict(program.func_table)
    table[name] = FuncEntry(entry_pc=info.entry_pc, magic=magic)
    return program.model_copy(update={"functions": functions, "func_table": table})


def _drop(node: Node) -> Node:
    return node.model_copy(update={"cmd": Goto(target=const(node.pc + 1))})


def _flip_label(label: TaintLabel) -> TaintLabel:
    return TaintLabel.L if label is TaintLabel.H else TaintLabel.H


# -----------------------------------------------------------------------------
# Mutation kinds
# -----------------------------------------------------------------------------


def _drop_assert(program: Program, rng: random.Random) -> Mutant:
    nodes = _node_map(program)
    sites = [
        node for node in nodes.values()
        if isinstance(node.cmd, Assert) and isinstance(node.cmd.pred, AddrInRegion)
        and node.pc + 1 in nodes and isinstance(nodes[node.pc + 1].cmd, (Ldr, Str))
    ]
    if not sites:
        raise NoApplicableSite("no region check guards a memory access")
    node = rng.choice(sites)
    return Mutant(
        MutationKind.DROP_ASSERT, node.pc, f"dropped the region check at pc={node.pc}",
        _replace_node(program, _drop(node)),
    )


def _flip_magic_taint_bit(program: Program, rng: random.Random) -> Mutant:
    private_returns = sorted(
        name for name, info in program.functions.items()
        if info.trust is Trust.U and info.magic.taints.ret is TaintLabel.H
    )
    if private_returns:
        name = rng.choice(private_returns)
        info = program.functions[name]
        taints = info.magic.taints.model_copy(update={"ret": TaintLabel.L})
        return Mutant(
            MutationKind.FLIP_MAGIC_TAINT_BIT, info.entry_pc,
            f"{name} entry magic {info.magic.bits()} -> {taints.bits()}",
            _replace_entry_magic(program, name, taints),
        )
    public_args = [
        (name, k) for name, info in sorted(program.functions.items())
        if info.trust is Trust.U
        for k in range(1, 5) if info.magic.taints.arg(k) is TaintLabel.L
    ]
    if public_args:
        name, k = rng.choice(public_args)
        info = program.functions[name]
        args = list(info.magic.taints.args)
        args[k - 1] = TaintLabel.H
        taints = info.magic.taints.model_copy(update={"args": tuple(args)})
        return Mutant(
            MutationKind.FLIP_MAGIC_TAINT_BIT, info.entry_pc,
            f"{name} entry magic {info.magic.bits()} -> {taints.bits()}",
            _replace_entry_magic(program, name, taints),
        )
    sites = [
        node for node in _nodes(program)
        if node.magic is not None and node.magic.kind is MagicKind.RET_SITE
    ]
    if not sites:
        raise NoApplicableSite("no magic sequence to flip")
    node = rng.choice(sites)
    magic = node.magic.model_copy(update={"ret_taint": _flip_label(node.magic.ret_taint)})
    return Mutant(
        MutationKind.FLIP_MAGIC_TAINT_BIT, node.pc,
        f"return-site magic at pc={node.pc} {node.magic.bits()} -> {magic.bits()}",
        _replace_node(program, node.model_copy(update={"magic": magic})),
    )


def _private_value(gamma: TaintEnv, cmd: Str) -> bool:
    regs = {cmd.reg} | expr_registers(cmd.addr)
    return any(gamma[r] is TaintLabel.H for r in regs)


def _retarget_store_region(program: Program, rng: random.Random) -> Mutant:
    nodes = _node_map(program)
    sites = [
        nodes[node.pc - 1] for node in nodes.values()
        if isinstance(node.cmd, Str) and _private_value(node.gamma_in, node.cmd)
        and node.pc - 1 in nodes
        and isinstance(nodes[node.pc - 1].cmd, Assert)
        and isinstance(nodes[node.pc - 1].cmd.pred, AddrInRegion)
        and nodes[node.pc - 1].cmd.pred.region is TaintLabel.H
    ]
    if not sites:
        raise NoApplicableSite("no private value is stored")
    guard = rng.choice(sites)
    pred = guard.cmd.pred.model_copy(update={"region": TaintLabel.L})
    mutated = guard.model_copy(update={"cmd": Assert(pred=pred)})
    return Mutant(
        MutationKind.RETARGET_STORE_REGION, guard.pc + 1,
        f"store at pc={guard.pc + 1} now checked against the public region",
        _replace_node(program, mutated),
    )


def _weaken_gamma_record(program: Program, rng: random.Random) -> Mutant:
    sites = [
        (node, reg) for node in _nodes(program) for reg in node.gamma_in.high_registers()
    ]
    if not sites:
        raise NoApplicableSite("no private register is recorded")
    node, reg = rng.choice(sites)
    weakened = node.gamma_in.set(reg, TaintLabel.L)
    return Mutant(
        MutationKind.WEAKEN_GAMMA_RECORD, node.pc,
        f"recorded r{reg} at pc={node.pc} as public",
        _replace_node(program, node.model_copy(update={"gamma_in": weakened})),
    )


def _duplicate_magic_in_data(program: Program, rng: random.Random) -> Mutant:
    sites = [
        node for node in _nodes(program)
        if isinstance(node.cmd, Mov) and isinstance(node.cmd.src, Const)
    ]
    if not sites:
        raise NoApplicableSite("no constant move to overwrite")
    node = rng.choice(sites)
    info = program.functions[rng.choice(sorted(program.functions))]
    cmd = Mov(reg=node.cmd.reg, src=Const(value=info.magic.encode()))
    return Mutant(
        MutationKind.DUPLICATE_MAGIC_IN_DATA, node.pc,
        f"constant at pc={node.pc} replaced by the entry magic of {info.name}",
        _replace_node(program, node.model_copy(update={"cmd": cmd})),
    )


def _cross_function_goto(program: Program, rng: random.Random) -> Mutant:
    sites = [node for node in _nodes(program) if isinstance(node.cmd, Goto)]
    if not sites:
        raise NoApplicableSite("no goto to retarget")
    node = rng.choice(sites)
    own = next(info for info in program.untrusted() if any(n.pc == node.pc for n in info.body))
    others = sorted(info.entry_pc for info in program.functions.values() if info is not own)
    if not others:
        raise NoApplicableSite("no other function to jump into")
    target = rng.choice(others)
    return Mutant(
        MutationKind.CROSS_FUNCTION_GOTO, node.pc,
        f"goto at pc={node.pc} retargeted to pc={target}",
        _replace_node(program, node.model_copy(update={"cmd": Goto(target=const(target))})),
    )


def _icall_without_check(program: Program, rng: random.Random) -> Mutant:
    sites = [
        node for node in _nodes(program)
        if isinstance(node.cmd, Assert) and isinstance(node.cmd.pred, MagicCallMatch)
    ]
    if not sites:
        raise NoApplicableSite("no indirect call")
    node = rng.choice(sites)
    return Mutant(
        MutationKind.ICALL_WITHOUT_CHECK, node.pc + 1,
        f"dropped the magic check of the indirect call at pc={node.pc + 1}",
        _replace_node(program, _drop(node)),
    )


_MUTATORS = {
    MutationKind.DROP_ASSERT: _drop_assert,
    MutationKind.FLIP_MAGIC_TAINT_BIT: _flip_magic_taint_bit,
    MutationKind.RETARGET_STORE_REGION: _retarget_store_region,
    MutationKind.WEAKEN_GAMMA_RECORD: _weaken_gamma_record,
    MutationKind.DUPLICATE_MAGIC_IN_DATA: _duplicate_magic_in_data,
    MutationKind.CROSS_FUNCTION_GOTO: _cross_function_goto,
    MutationKind.ICALL_WITHOUT_CHECK: _icall_without_check,
}


def mutate(program: Program, kind: MutationKind | str, site_seed: int) -> Mutant:
    """
    Apply one mutation of ``kind`` at a site chosen by ``site_seed``.

    Raises:
        NoApplicableSite: the program lacks the construct ``kind`` targets
    """
    return _MUTATORS[MutationKind(kind)](program, random.Random(site_seed))


# -----------------------------------------------------------------------------
# Audit
# -----------------------------------------------------------------------------


class AuditRow(BaseModel):
    kind: MutationKind
    programs: int = 0
    applied: int = 0
    rejected: int = 0
    matched: int = 0
    rules: dict[str, int] = Field(default_factory=dict)

    @property
    def rejected_fraction(self) -> float:
        return self.rejected / self.applied if self.applied else 0.0

    @property
    def matched_fraction(self) -> float:
        return self.matched / self.applied if self.applied else 0.0

    @property
    def applicable_fraction(self) -> float:
        return self.applied / self.programs if self.programs else 0.0


class MutantRecord(BaseModel):
    program_id: int
    program_seed: int
    kind: MutationKind
    pc: int
    description: str
    rejected: bool
    matched: bool
    rules: list[str]


def audit_program(
    program: Program, program_id: int, program_seed: int, kinds: Iterable[MutationKind]
) -> list[MutantRecord]:
    """Mutate ``program`` once per kind and verify every mutant."""
    records = []
    order = list(MutationKind)
    for kind in kinds:
        try:
            mutant = mutate(program, kind, derive_seed(program_seed, order.index(kind)))
        except NoApplicableSite:
            continue
        verdict = verify(mutant.program)
        fired = verdict.rules_fired()
        records.append(
            MutantRecord(
                program_id=program_id,
                program_seed=program_seed,
                kind=kind,
                pc=mutant.pc,
                description=mutant.description,
                rejected=not verdict.accepted,
                matched=bool(fired & TARGET_RULES[kind]),
                rules=sorted(r.value for r in fired),
            )
        )
    return records


def _audit_job(job: tuple[int, int, Program]) -> list[MutantRecord]:
    program_id, program_seed, program = job
    return audit_program(program, program_id, program_seed, list(MutationKind))


def mutation_audit(
    corpus: list[CorpusEntry], jobs: int = 1
) -> tuple[list[AuditRow], list[MutantRecord]]:
    """
    Apply every mutation kind to every corpus program and verify the mutants.

    Returns:
        One summary row per kind and one record per mutant, ordered by program
    """
    work = [(e.program_id, e.program_seed, e.program) for e in corpus]
    records = [r for batch in run_jobs(_audit_job, work, jobs) for r in batch]
    rows = {kind: AuditRow(kind=kind, programs=len(corpus)) for kind in MutationKind}
    for record in records:
        row = rows[record.kind]
        row.applied += 1
        row.rejected += record.rejected
        row.matched += record.matched
        for rule in record.rules:
            row.rules[rule] = row.rules.get(rule, 0) + 1
    for row in rows.values():
        logger.info(
            f"{row.kind}: {row.rejected}/{row.applied} rejected, "
            f"{row.matched} by the targeted rule"
        )
    return list(rows.values()), records
