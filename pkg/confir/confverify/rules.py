"""
Per-node type rules and the taint recomputation used by the flow check.

Taints are handled as plain 16-bit masks here (bit r set = register r private).
"""

from __future__ import annotations

from confir.ir.constants import ARG_REGS, RET_REG
from confir.ir.program import FuncInfo, Node, Program, Trust
from confir.ir.syntax import (
    AddrInRegion,
    CallT,
    CallU,
    Command,
    Expr,
    Goto,
    ICall,
    IfThenElse,
    Ldr,
    MagicCallMatch,
    MagicRetMatch,
    Mov,
    Ret,
    Str,
    expr_registers,
)
from confir.ir.taint import TaintLabel, TaintVec5

from .cfg import ProgramIndex
from .diagnostics import Diagnostic, RuleId, Severity

HIGH = 1
LOW = 0


def _mask(regs) -> int:
    m = 0
    for r in regs:
        m |= 1 << r
    return m


def taint_of(mask: int, e: Expr) -> int:
    """1 when any register read by ``e`` is private in ``mask``."""
    return 1 if mask & _mask(expr_registers(e)) else 0


def _assign(mask: int, reg: int, bit: int) -> int:
    return mask | 1 << reg if bit else mask & ~(1 << reg)


def _fmt(mask: int) -> str:
    return "".join("H" if mask >> r & 1 else "L" for r in range(16))


def _label_bit(label: TaintLabel) -> int:
    return 1 if label is TaintLabel.H else 0


def _region_guard(index: ProgramIndex, node: Node, addr: Expr) -> AddrInRegion | None:
    found = index.find_guard(
        node,
        lambda a: isinstance(a.pred, AddrInRegion) and a.pred.addr == addr,
        expr_registers(addr),
    )
    return found.pred if found is not None else None


def callee_vector(program: Program, cmd: CallU | CallT) -> TaintVec5 | None:
    row = program.func_table.get(cmd.func)
    return row.magic.taints if row is not None else None


def arg_bits(mask: int, args: tuple[Expr, ...]) -> list[int]:
    """Taint of r1..r4 as seen by the callee."""
    return [
        taint_of(mask, args[k - 1]) if k <= len(args) else mask >> k & 1 for k in ARG_REGS
    ]


def call_effect(program: Program, mask: int, ret_bit: int) -> int:
    caller = _mask(program.convention.caller_save)
    callee = _mask(program.convention.callee_save)
    return _assign((mask | caller) & ~callee, RET_REG, ret_bit)


def post_state(index: ProgramIndex, node: Node, mask: int) -> int:
    """Least post-state the rules allow for ``node`` given pre-state ``mask``."""
    program = index.program
    cmd = node.cmd
    if isinstance(cmd, Mov):
        return _assign(mask, cmd.reg, taint_of(mask, cmd.src))
    if isinstance(cmd, Ldr):
        guard = _region_guard(index, node, cmd.addr)
        # unguarded loads are rejected separately; assume private data
        region = _label_bit(guard.region) if guard is not None else HIGH
        return _assign(mask, cmd.reg, region | taint_of(mask, cmd.addr))
    if isinstance(cmd, (CallU, CallT)):
        vector = callee_vector(program, cmd)
        ret = _label_bit(vector.ret) if vector is not None else HIGH
        return call_effect(program, mask, ret)
    if isinstance(cmd, ICall):
        return call_effect(program, mask, _label_bit(cmd.ret_taint))
    return mask


def entry_mask(program: Program, info: FuncInfo) -> int:
    """Pre-state of a function entry implied by its call-site magic."""
    taints = info.magic.taints
    mask = _mask(r for r in program.convention.caller_save)
    for k in ARG_REGS:
        mask = _assign(mask, k, _label_bit(taints.arg(k)))
    return mask


def recompute_taints(index: ProgramIndex, info: FuncInfo) -> dict[int, int]:
    """Least pre-state mask of every node, from the entry magic and the rules."""
    pre = {node.pc: 0 for node in info.body}
    post = {node.pc: post_state(index, node, 0) for node in info.body}
    graph = index.graphs[info.name]
    start = entry_mask(index.program, info)
    pending = [node.pc for node in info.body]
    while pending:
        pc = pending.pop(0)
        mask = start if pc == info.entry_pc else 0
        for p in graph.predecessors(pc):
            mask |= post[p]
        pre[pc] = mask
        out = post_state(index, index.nodes[pc], mask)
        if out != post[pc]:
            post[pc] = out
            pending.extend(sorted(graph.successors(pc)))
    return pre


def _reject(node: Node, rule: RuleId, message: str) -> Diagnostic:
    return Diagnostic(pc=node.pc, rule=rule, message=message)


def _rule_for(cmd: Command) -> RuleId:
    return {
        "mov": RuleId.MOV, "ldr": RuleId.LDR, "str": RuleId.STR, "goto": RuleId.GOTO,
        "if": RuleId.IF, "ret": RuleId.RET, "callu": RuleId.CALL, "callt": RuleId.CALL,
        "icall": RuleId.ICALL, "assert": RuleId.ASSERT,
    }[cmd.kind]


def check_node(
    program: Program, node: Node, index: ProgramIndex | None = None, strict: bool = True
) -> list[Diagnostic]:
    """
    Check one untrusted node against the type rule of its command.

    Args:
        program: The program the node belongs to
        node: The node
        index: Prebuilt lookup structures (built on demand)
        strict: Reject jumps on private data; when False they are warnings

    Returns:
        Diagnostics for every violated premise; never raises
    """
    index = index or ProgramIndex.build(program)
    cmd = node.cmd
    gamma, gamma_out = node.gamma_in.mask, node.gamma_out.mask
    callee_save = _mask(program.convention.callee_save)
    found: list[Diagnostic] = []

    if isinstance(cmd, Ldr):
        if _region_guard(index, node, cmd.addr) is None:
            found.append(_reject(node, RuleId.LDR, "load without a region check in its block"))
    elif isinstance(cmd, Str):
        guard = _region_guard(index, node, cmd.addr)
        if guard is None:
            found.append(_reject(node, RuleId.STR, "store without a region check in its block"))
        else:
            value = (gamma >> cmd.reg & 1) | taint_of(gamma, cmd.addr)
            if value > _label_bit(guard.region):
                found.append(
                    _reject(node, RuleId.STR, f"private r{cmd.reg} stored to {guard.region} region")
                )
    elif isinstance(cmd, (CallU, CallT)):
        vector = callee_vector(program, cmd)
        if vector is not None:
            for k, bit in zip(ARG_REGS, arg_bits(gamma, cmd.args)):
                if bit > _label_bit(vector.arg(k)):
                    found.append(
                        _reject(node, RuleId.CALL, f"private r{k} passed to public parameter "
                                f"of {cmd.func}")
                    )
        if gamma & callee_save:
            found.append(_reject(node, RuleId.CALL, "private callee-save register at call"))
    elif isinstance(cmd, ICall):
        if taint_of(gamma, cmd.target):
            found.append(
                _reject(node, RuleId.ICALL, "indirect call target depends on private data")
            )
        guard = index.find_guard(
            node,
            lambda a: isinstance(a.pred, MagicCallMatch) and a.pred.target == cmd.target,
            expr_registers(cmd.target),
        )
        if guard is None:
            found.append(_reject(node, RuleId.ICALL, "indirect call without a magic check"))
        else:
            want = guard.pred.want
            for k, bit in zip(ARG_REGS, arg_bits(gamma, cmd.args)):
                if bit > _label_bit(want.arg(k)):
                    found.append(
                        _reject(node, RuleId.ICALL, f"magic check admits public r{k} "
                                "but the argument is private")
                    )
            if want.ret is not cmd.ret_taint:
                found.append(_reject(node, RuleId.ICALL, "magic check return bit disagrees"))
        if gamma & callee_save:
            found.append(_reject(node, RuleId.ICALL, "private callee-save register at call"))
    elif isinstance(cmd, Ret):
        if gamma & callee_save:
            found.append(_reject(node, RuleId.RET, "private callee-save register at return"))
        guard = index.find_guard(
            node, lambda a: isinstance(a.pred, MagicRetMatch), frozenset()
        )
        if guard is None:
            found.append(_reject(node, RuleId.RET, "return without a magic check"))
        else:
            declared = _label_bit(guard.pred.ret_taint)
            if gamma >> RET_REG & 1 > declared:
                found.append(_reject(node, RuleId.RET, "private r0 returned to a public site"))
            own = index.function_of(node.pc).magic.taints.ret
            if declared > _label_bit(own):
                found.append(
                    _reject(node, RuleId.RET, "return check exceeds the function's return taint")
                )
    elif isinstance(cmd, (Goto, IfThenElse)):
        exprs = (cmd.target,) if isinstance(cmd, Goto) else (cmd.cond, cmd.then_pc, cmd.else_pc)
        if any(taint_of(gamma, e) for e in exprs):
            rule = _rule_for(cmd)
            severity = Severity.REJECT if strict else Severity.WARNING
            found.append(
                Diagnostic(
                    pc=node.pc, rule=rule, message="control flow depends on private data",
                    severity=severity,
                )
            )

    expected = post_state(index, node, gamma)
    if expected & ~gamma_out:
        found.append(
            _reject(node, _rule_for(cmd), f"recorded post-state {_fmt(gamma_out)} is below "
                    f"{_fmt(expected)}")
        )
    return found


def check_flow(program: Program, index: ProgramIndex | None = None) -> list[Diagnostic]:
    """
    Check that taints flow along every edge and that the recorded pre-states are
    at least the recomputed ones.
    """
    index = index or ProgramIndex.build(program)
    found: list[Diagnostic] = []
    for info in program.functions.values():
        if info.trust is not Trust.U:
            continue
        for src, dst in info.edges:
            out, into = index.nodes[src].gamma_out.mask, index.nodes[dst].gamma_in.mask
            if out & ~into:
                found.append(
                    Diagnostic(
                        pc=dst, rule=RuleId.FLOW,
                        message=f"pre-state {_fmt(into)} is below post-state {_fmt(out)} "
                        f"of pc={src}",
                    )
                )
        recomputed = recompute_taints(index, info)
        for node in info.body:
            least = recomputed[node.pc]
            if least & ~node.gamma_in.mask:
                found.append(
                    Diagnostic(
                        pc=node.pc, rule=RuleId.FLOW,
                        message=f"recorded pre-state {_fmt(node.gamma_in.mask)} is below "
                        f"recomputed {_fmt(least)}",
                    )
                )
    return found
