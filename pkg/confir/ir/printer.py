"""Render source programs and IR values back to ``.cir`` text."""

from __future__ import annotations

from collections.abc import Callable

from .program import Signature, SourceFunction, SourceProgram
from .syntax import (
    AddrInRegion,
    Assert,
    BinOp,
    CallT,
    CallU,
    Command,
    Const,
    Expr,
    FuncAddr,
    GlobalRef,
    Goto,
    ICall,
    IfThenElse,
    Ldr,
    MagicCallMatch,
    MagicRetMatch,
    Mov,
    Reg,
    Ret,
    Str,
    UnOp,
)
from .taint import TaintLabel


def format_expr(e: Expr) -> str:
    """Fully parenthesised rendering; parses back to the same tree."""
    if isinstance(e, Const):
        return str(e.value)
    if isinstance(e, Reg):
        return f"r{e.index}"
    if isinstance(e, FuncAddr):
        return f"&{e.name}"
    if isinstance(e, GlobalRef):
        return f"@{e.name}"
    if isinstance(e, UnOp):
        if isinstance(e.operand, Const):
            return f"{e.op}({e.operand.value})"
        return f"{e.op}{_operand(e.operand)}"
    return f"{_operand(e.left)} {e.op} {_operand(e.right)}"


def _operand(e: Expr) -> str:
    if isinstance(e, (UnOp, BinOp)):
        return f"({format_expr(e)})"
    return format_expr(e)


def _args(args: tuple[Expr, ...]) -> str:
    return ", ".join(format_expr(a) for a in args)


def _signature(sig: Signature) -> str:
    params = ", ".join(f"{label.qualifier} r{i}" for i, label in enumerate(sig.params, start=1))
    return f"({params}) -> {sig.ret.qualifier}"


def format_command(cmd: Command, target_name: Callable[[int], str] = str) -> str:
    """One statement; ``target_name`` turns a jump target value into text."""
    if isinstance(cmd, Mov):
        return f"r{cmd.reg} = {format_expr(cmd.src)}"
    if isinstance(cmd, Ldr):
        return f"r{cmd.reg} = load [{format_expr(cmd.addr)}]"
    if isinstance(cmd, Str):
        return f"store [{format_expr(cmd.addr)}], r{cmd.reg}"
    if isinstance(cmd, Goto):
        return f"goto {_target(cmd.target, target_name)}"
    if isinstance(cmd, IfThenElse):
        then_pc = _target(cmd.then_pc, target_name)
        else_pc = _target(cmd.else_pc, target_name)
        return f"if {format_expr(cmd.cond)} goto {then_pc} else {else_pc}"
    if isinstance(cmd, Ret):
        return "ret"
    if isinstance(cmd, CallU):
        return f"call {cmd.func}({_args(cmd.args)})"
    if isinstance(cmd, CallT):
        return f"tcall {cmd.func}({_args(cmd.args)})"
    if isinstance(cmd, ICall):
        text = f"icall {_operand(cmd.target)}({_args(cmd.args)})"
        if cmd.ret_taint is not TaintLabel.H:
            text += f" -> {cmd.ret_taint.qualifier}"
        return text
    if isinstance(cmd, Assert):
        pred = cmd.pred
        if isinstance(pred, AddrInRegion):
            return f"assert {format_expr(pred.addr)} in {pred.region.qualifier}"
        if isinstance(pred, MagicCallMatch):
            return f"assert magic_call {format_expr(pred.target)} {pred.want.bits()}"
        if isinstance(pred, MagicRetMatch):
            return f"assert magic_ret {pred.ret_taint.bit}"
    raise TypeError(f"cannot format {cmd!r}")


def _target(e: Expr, target_name: Callable[[int], str]) -> str:
    if isinstance(e, Const):
        return target_name(e.value)
    return format_expr(e)


def _format_function(fn: SourceFunction) -> list[str]:
    names: dict[int, list[str]] = {}
    for label, index in fn.labels:
        names.setdefault(index, []).append(label)
    # unlabelled jump targets get a synthetic label so the text stays parseable
    for cmd in fn.body:
        targets = (cmd.target,) if isinstance(cmd, Goto) else ()
        if isinstance(cmd, IfThenElse):
            targets = (cmd.then_pc, cmd.else_pc)
        for t in targets:
            if isinstance(t, Const) and t.value not in names:
                names[t.value] = [f"L{t.value}"]

    def target_name(index: int) -> str:
        return names[index][0]

    lines = [f"fn {fn.name}{_signature(fn.signature)} {{"]
    for index, cmd in enumerate(fn.body):
        for label in names.get(index, []):
            lines.append(f"{label}:")
        lines.append(f"    {format_command(cmd, target_name)}")
    lines.append("}")
    return lines


def format_source(sp: SourceProgram) -> str:
    """Render ``sp`` as ``.cir`` text that parses back to an equal program."""
    lines: list[str] = []
    for g in sp.globals:
        lines.append(f"global {g.name} region={g.region.qualifier} size={g.size}")
    for t in sp.trusted:
        lines.append(f"trusted fn {t.name}{_signature(t.signature)}")
    if lines:
        lines.append("")
    for fn in sp.functions:
        lines.extend(_format_function(fn))
        lines.append("")
    lines.append(f"entry {sp.entry}")
    return "\n".join(lines) + "\n"
