"""
Expressions, assert predicates and commands of the abstract assembly language.

Every node is a frozen pydantic model tagged by a ``kind`` literal, so IR values
can be compared, hashed and validated the same way everywhere.
"""

from __future__ import annotations

from collections.abc import Callable, Iterator
from typing import Annotated, Literal

from pydantic import BaseModel, ConfigDict, Field

from .constants import CALLEE_SAVE_REGS, MAX_ARGS, NUM_REGS, RET_REG, WORD_MASK
from .taint import TaintLabel, TaintVec5

RegIndex = Annotated[int, Field(ge=0, lt=NUM_REGS)]
Word = Annotated[int, Field(ge=0, le=WORD_MASK)]

UnaryOperator = Literal["-", "~", "!"]
BinaryOperator = Literal[
    "+", "-", "*", "/", "%", "&", "|", "^", "<<", ">>", "==", "!=", "<", "<=", ">", ">="
]

UNARY_OPERATORS: tuple[str, ...] = ("-", "~", "!")
BINARY_OPERATORS: tuple[str, ...] = (
    "+", "-", "*", "/", "%", "&", "|", "^", "<<", ">>", "==", "!=", "<", "<=", ">", ">=",
)


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True)


# -----------------------------------------------------------------------------
# Expressions
# -----------------------------------------------------------------------------


class Const(_Frozen):
    kind: Literal["const"] = "const"
    value: Word


class Reg(_Frozen):
    kind: Literal["reg"] = "reg"
    index: RegIndex


class UnOp(_Frozen):
    kind: Literal["unop"] = "unop"
    op: UnaryOperator
    operand: Expr


class BinOp(_Frozen):
    kind: Literal["binop"] = "binop"
    op: BinaryOperator
    left: Expr
    right: Expr


class FuncAddr(_Frozen):
    """Entry pc of the named function."""

    kind: Literal["funcaddr"] = "funcaddr"
    name: str


class GlobalRef(_Frozen):
    """Base address of a declared global. Source programs only."""

    kind: Literal["globalref"] = "globalref"
    name: str


Expr = Annotated[
    Const | Reg | UnOp | BinOp | FuncAddr | GlobalRef,
    Field(discriminator="kind"),
]

UnOp.model_rebuild()
BinOp.model_rebuild()


def const(value: int) -> Const:
    """A constant, wrapped to 64 bits."""
    return Const(value=value & WORD_MASK)


def reg(index: int) -> Reg:
    return Reg(index=index)


# -----------------------------------------------------------------------------
# Assert predicates
# -----------------------------------------------------------------------------


class AddrInRegion(_Frozen):
    """The address ``addr`` evaluates to lies in the memory region labelled ``region``."""

    kind: Literal["in_region"] = "in_region"
    addr: Expr
    region: TaintLabel


class MagicCallMatch(_Frozen):
    """``target`` is an untrusted entry whose magic taints cover ``want``."""

    kind: Literal["magic_call"] = "magic_call"
    target: Expr
    want: TaintVec5


class MagicRetMatch(_Frozen):
    """The return address on top of the public stack is a return site accepting ``ret_taint``."""

    kind: Literal["magic_ret"] = "magic_ret"
    ret_taint: TaintLabel


AssertPred = Annotated[
    AddrInRegion | MagicCallMatch | MagicRetMatch,
    Field(discriminator="kind"),
]


# -----------------------------------------------------------------------------
# Commands
# -----------------------------------------------------------------------------


class Mov(_Frozen):
    kind: Literal["mov"] = "mov"
    reg: RegIndex
    src: Expr


class Ldr(_Frozen):
    kind: Literal["ldr"] = "ldr"
    reg: RegIndex
    addr: Expr


class Str(_Frozen):
    """Store register ``reg`` to the address ``addr`` evaluates to."""

    kind: Literal["str"] = "str"
    reg: RegIndex
    addr: Expr


class Goto(_Frozen):
    kind: Literal["goto"] = "goto"
    target: Expr


class IfThenElse(_Frozen):
    kind: Literal["if"] = "if"
    cond: Expr
    then_pc: Expr
    else_pc: Expr


class Ret(_Frozen):
    kind: Literal["ret"] = "ret"


class CallU(_Frozen):
    kind: Literal["callu"] = "callu"
    func: str
    args: tuple[Expr, ...] = Field(default=(), max_length=MAX_ARGS)


class CallT(_Frozen):
    kind: Literal["callt"] = "callt"
    func: str
    args: tuple[Expr, ...] = Field(default=(), max_length=MAX_ARGS)


class ICall(_Frozen):
    """Indirect call; ``ret_taint`` is the return qualifier the caller expects."""

    kind: Literal["icall"] = "icall"
    target: Expr
    args: tuple[Expr, ...] = Field(default=(), max_length=MAX_ARGS)
    ret_taint: TaintLabel = TaintLabel.H


class Assert(_Frozen):
    kind: Literal["assert"] = "assert"
    pred: AssertPred


Command = Annotated[
    Mov | Ldr | Str | Goto | IfThenElse | Ret | CallU | CallT | ICall | Assert,
    Field(discriminator="kind"),
]

CALL_COMMANDS = (CallU, CallT, ICall)
JUMP_COMMANDS = (Goto, IfThenElse)
MEMORY_COMMANDS = (Ldr, Str)


# -----------------------------------------------------------------------------
# Helpers
# -----------------------------------------------------------------------------


def walk_expr(e: Expr) -> Iterator[Expr]:
    """Yield ``e`` and every sub-expression, parents first."""
    stack = [e]
    while stack:
        node = stack.pop()
        yield node
        if isinstance(node, UnOp):
            stack.append(node.operand)
        elif isinstance(node, BinOp):
            stack.append(node.right)
            stack.append(node.left)


def expr_registers(e: Expr) -> frozenset[int]:
    return frozenset(node.index for node in walk_expr(e) if isinstance(node, Reg))


def expr_globals(e: Expr) -> frozenset[str]:
    return frozenset(node.name for node in walk_expr(e) if isinstance(node, GlobalRef))


def expr_functions(e: Expr) -> frozenset[str]:
    return frozenset(node.name for node in walk_expr(e) if isinstance(node, FuncAddr))


def map_expr(e: Expr, leaf: Callable[[Expr], Expr]) -> Expr:
    """Rebuild ``e`` bottom-up, passing every leaf through ``leaf``."""
    if isinstance(e, UnOp):
        return UnOp(op=e.op, operand=map_expr(e.operand, leaf))
    if isinstance(e, BinOp):
        return BinOp(op=e.op, left=map_expr(e.left, leaf), right=map_expr(e.right, leaf))
    return leaf(e)


def command_expressions(cmd: Command) -> tuple[Expr, ...]:
    """Every expression a command evaluates, in evaluation order."""
    if isinstance(cmd, Mov):
        return (cmd.src,)
    if isinstance(cmd, (Ldr, Str)):
        return (cmd.addr,)
    if isinstance(cmd, Goto):
        return (cmd.target,)
    if isinstance(cmd, IfThenElse):
        return (cmd.cond, cmd.then_pc, cmd.else_pc)
    if isinstance(cmd, (CallU, CallT)):
        return cmd.args
    if isinstance(cmd, ICall):
        return (cmd.target, *cmd.args)
    if isinstance(cmd, Assert):
        pred = cmd.pred
        if isinstance(pred, AddrInRegion):
            return (pred.addr,)
        if isinstance(pred, MagicCallMatch):
            return (pred.target,)
    return ()


def command_registers_read(cmd: Command) -> frozenset[int]:
    regs: set[int] = set()
    for e in command_expressions(cmd):
        regs |= expr_registers(e)
    if isinstance(cmd, Str):
        regs.add(cmd.reg)
    elif isinstance(cmd, Ret):
        regs.add(RET_REG)
    return frozenset(regs)


def command_registers_written(
    cmd: Command, callee_save: tuple[int, ...] = CALLEE_SAVE_REGS
) -> frozenset[int]:
    """Registers a command may overwrite (calls clobber every caller-save register)."""
    if isinstance(cmd, (Mov, Ldr)):
        return frozenset({cmd.reg})
    if isinstance(cmd, CALL_COMMANDS):
        return frozenset(r for r in range(NUM_REGS) if r not in callee_save)
    return frozenset()


def is_terminator(cmd: Command) -> bool:
    """True for commands that never fall through to pc+1."""
    return isinstance(cmd, (Goto, IfThenElse, Ret))
