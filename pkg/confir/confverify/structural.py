"""Whole-program structural checks: jumps, call kinds, layout and magic placement."""

from __future__ import annotations

from confir.ir.codec import serialize_with_offsets, stray_magic_windows
from confir.ir.program import MagicKind, Program, Trust
from confir.ir.syntax import (
    CallT,
    CallU,
    Const,
    Expr,
    FuncAddr,
    ICall,
    command_expressions,
    is_terminator,
    walk_expr,
)
from confir.ir.taint import TaintLabel

from .cfg import ProgramIndex, command_targets
from .diagnostics import Diagnostic, RuleId


def _d(pc: int, rule: RuleId, message: str) -> Diagnostic:
    return Diagnostic(pc=pc, rule=rule, message=message)


def _check_layout(program: Program) -> list[Diagnostic]:
    found = []
    for info in program.untrusted():
        pcs = [node.pc for node in info.body]
        if pcs[0] != info.entry_pc or pcs != list(range(pcs[0], pcs[0] + len(pcs))):
            found.append(
                _d(info.entry_pc, RuleId.ENTRY_LAYOUT, f"{info.name}: body is not contiguous "
                   "from its entry")
            )
    return found


def _check_jumps(index: ProgramIndex) -> list[Diagnostic]:
    found = []
    for info in index.program.untrusted():
        members = {node.pc for node in info.body}
        for node in info.body:
            cmd = node.cmd
            targets = command_targets(cmd, node.pc)
            if targets is None:
                found.append(_d(node.pc, RuleId.NON_CONSTANT_JUMP, "jump target is not a constant"))
                continue
            escaping = [t for t in targets if t not in members]
            if escaping:
                what = "falls off the end" if not is_terminator(cmd) else "jumps"
                found.append(
                    _d(node.pc, RuleId.JUMP_ESCAPES_FUNCTION, f"{what} to pc={escaping[0]} "
                       f"outside {info.name}")
                )
            recorded = sorted(index.graphs[info.name].successors(node.pc))
            if recorded != sorted(set(targets) & members):
                found.append(
                    _d(node.pc, RuleId.EDGE_MISMATCH, f"recorded successors {recorded} differ "
                       f"from the command's {targets}")
                )
    return found


def _targets_trusted_entry(index: ProgramIndex, target: Expr) -> bool:
    """
    True when an indirect call target is statically a trusted entry.

    Only ``&name`` and constant targets are decided here. A computed target is
    left to the ``MagicCallMatch`` assert in front of the call, which only admits
    untrusted entries, so a trusted address reached at run time stops at the
    assert with Bottom.
    """
    if isinstance(target, FuncAddr):
        callee = index.program.functions.get(target.name)
        return callee is not None and callee.trust is Trust.T
    if isinstance(target, Const):
        return target.value in index.trusted_entries
    return False


def _check_calls(index: ProgramIndex) -> list[Diagnostic]:
    program = index.program
    found = []
    for info in program.untrusted():
        for node in info.body:
            cmd = node.cmd
            for e in command_expressions(cmd):
                for leaf in walk_expr(e):
                    if isinstance(leaf, FuncAddr) and leaf.name not in program.functions:
                        found.append(
                            _d(node.pc, RuleId.UNKNOWN_FUNCTION, f"unknown function '{leaf.name}'")
                        )
            if isinstance(cmd, (CallU, CallT)):
                callee = program.functions.get(cmd.func)
                if callee is None:
                    found.append(
                        _d(node.pc, RuleId.UNKNOWN_FUNCTION, f"unknown function '{cmd.func}'")
                    )
                    continue
                wanted = Trust.U if isinstance(cmd, CallU) else Trust.T
                if callee.trust is not wanted:
                    found.append(
                        _d(node.pc, RuleId.TRUST_MISMATCH, f"{cmd.kind} to {callee.trust} "
                           f"function '{cmd.func}'")
                    )
            elif isinstance(cmd, ICall) and _targets_trusted_entry(index, cmd.target):
                found.append(
                    _d(node.pc, RuleId.ICALL_TO_TRUSTED, "indirect call to a trusted entry")
                )
    return found


def _return_bit(program: Program, cmd: CallU | ICall) -> TaintLabel | None:
    if isinstance(cmd, ICall):
        return cmd.ret_taint
    row = program.func_table.get(cmd.func)
    return row.magic.taints.ret if row is not None else None


def _check_return_sites(index: ProgramIndex) -> list[Diagnostic]:
    program = index.program
    found = []
    sites: set[int] = set()
    for info in program.untrusted():
        for node in info.body:
            if not isinstance(node.cmd, (CallU, ICall)):
                continue
            site = index.nodes.get(node.pc + 1)
            sites.add(node.pc + 1)
            expected = _return_bit(program, node.cmd)
            if site is None or index.owner[node.pc + 1] != info.name:
                found.append(_d(node.pc, RuleId.MISSING_RET_SITE_MAGIC, "call has no return site"))
            elif site.magic is None or site.magic.kind is not MagicKind.RET_SITE:
                found.append(
                    _d(site.pc, RuleId.MISSING_RET_SITE_MAGIC, "return site without magic")
                )
            elif expected is not None and site.magic.ret_taint is not expected:
                found.append(
                    _d(site.pc, RuleId.MISSING_RET_SITE_MAGIC, f"return site accepts "
                       f"{site.magic.ret_taint} but the callee returns {expected}")
                )
    for pc, node in sorted(index.nodes.items()):
        if node.magic is not None and pc not in sites:
            found.append(_d(pc, RuleId.STRAY_MAGIC, "magic sequence on a node that is not a "
                            "return site"))
    return found


def _check_magic_unique(program: Program) -> list[Diagnostic]:
    m_call, m_ret = program.m_call_prefix, program.m_ret_prefix
    if m_call == 0 or m_ret == 0 or m_call == m_ret:
        return [_d(-1, RuleId.MAGIC_NOT_UNIQUE, "magic prefixes are unset or equal")]
    data, offsets = serialize_with_offsets(program)
    return [
        _d(-1, RuleId.MAGIC_NOT_UNIQUE, f"magic prefix {prefix:#x} also occurs at byte {offset}")
        for offset, prefix in stray_magic_windows(data, offsets, (m_call, m_ret))
    ]


def check_structural(program: Program, index: ProgramIndex | None = None) -> list[Diagnostic]:
    """Structural side conditions of a verifiable program."""
    index = index or ProgramIndex.build(program)
    found = _check_layout(program)
    found += _check_jumps(index)
    found += _check_calls(index)
    found += _check_return_sites(index)
    found += _check_magic_unique(program)
    return found


__all__ = ["check_structural"]
