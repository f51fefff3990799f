"""Expression evaluation over unsigned 64-bit words."""

from __future__ import annotations

from collections.abc import Mapping, Sequence

from confir.ir.constants import WORD_MASK
from confir.ir.program import FuncEntry
from confir.ir.syntax import BinOp, Const, Expr, FuncAddr, GlobalRef, Reg, UnOp


def _binary(op: str, a: int, b: int) -> int:
    match op:
        case "+":
            return (a + b) & WORD_MASK
        case "-":
            return (a - b) & WORD_MASK
        case "*":
            return (a * b) & WORD_MASK
        case "/":
            return a // b if b else 0
        case "%":
            return a % b if b else 0
        case "&":
            return a & b
        case "|":
            return a | b
        case "^":
            return a ^ b
        case "<<":
            return (a << (b & 63)) & WORD_MASK
        case ">>":
            return a >> (b & 63)
        case "==":
            return int(a == b)
        case "!=":
            return int(a != b)
        case "<":
            return int(a < b)
        case "<=":
            return int(a <= b)
        case ">":
            return int(a > b)
        case ">=":
            return int(a >= b)
    raise ValueError(f"unknown operator {op!r}")


def _unary(op: str, a: int) -> int:
    if op == "-":
        return -a & WORD_MASK
    if op == "~":
        return ~a & WORD_MASK
    return int(a == 0)


def eval_expr(
    rho: Sequence[int],
    func_table: Mapping[str, FuncEntry],
    e: Expr,
    globals_: Mapping[str, int] | None = None,
) -> int:
    """
    Evaluate ``e`` in register file ``rho``.

    Total: division and remainder by zero give 0, an unknown function address
    gives 0 (never a valid pc), and source-level global references resolve
    through ``globals_`` when given.
    """
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Reg):
        return rho[e.index]
    if isinstance(e, FuncAddr):
        row = func_table.get(e.name)
        return row.entry_pc if row is not None else 0
    if isinstance(e, GlobalRef):
        return (globals_ or {}).get(e.name, 0)
    if isinstance(e, UnOp):
        return _unary(e.op, eval_expr(rho, func_table, e.operand, globals_))
    if isinstance(e, BinOp):
        left = eval_expr(rho, func_table, e.left, globals_)
        right = eval_expr(rho, func_table, e.right, globals_)
        return _binary(e.op, left, right)
    raise TypeError(f"not an expression: {e!r}")
