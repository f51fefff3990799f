"""
Source programs, instrumented control-flow graphs and their metadata.

A :class:`SourceProgram` is what the parser produces: annotated signatures and
assert-free bodies. A :class:`Program` is the instrumented CFG together with the
function table, register convention, magic prefixes and memory layout.
"""

from __future__ import annotations

from enum import StrEnum
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .constants import CALLEE_SAVE_REGS, MAGIC_PREFIX_LIMIT, MAGIC_TAINT_BITS, MAX_ARGS, NUM_REGS
from .memory import GlobalCell, MemoryLayout
from .syntax import (
    Assert,
    CallT,
    CallU,
    Command,
    Const,
    Goto,
    IfThenElse,
    command_expressions,
    expr_functions,
    expr_globals,
    is_terminator,
)
from .taint import TaintEnv, TaintLabel, TaintVec5


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True)


class Trust(StrEnum):
    U = "U"
    T = "T"


class MagicKind(StrEnum):
    CALL_SITE = "call"
    RET_SITE = "ret"


# -----------------------------------------------------------------------------
# Magic sequences
# -----------------------------------------------------------------------------


class MagicSeq(_Frozen):
    """A 59-bit prefix plus the taint suffix of a function entry or return site."""

    kind: MagicKind
    prefix: int = Field(ge=0, lt=MAGIC_PREFIX_LIMIT)
    taints: TaintVec5 | None = None
    ret_taint: TaintLabel | None = None

    @model_validator(mode="after")
    def _check_form(self) -> MagicSeq:
        if self.kind is MagicKind.CALL_SITE and (self.taints is None or self.ret_taint is not None):
            raise ValueError("call-site magic carries exactly a 5-bit taint vector")
        if self.kind is MagicKind.RET_SITE and (self.ret_taint is None or self.taints is not None):
            raise ValueError("return-site magic carries exactly one taint bit")
        return self

    @classmethod
    def call_site(cls, prefix: int, taints: TaintVec5) -> MagicSeq:
        return cls(kind=MagicKind.CALL_SITE, prefix=prefix, taints=taints)

    @classmethod
    def ret_site(cls, prefix: int, ret_taint: TaintLabel) -> MagicSeq:
        return cls(kind=MagicKind.RET_SITE, prefix=prefix, ret_taint=ret_taint)

    def bits(self) -> str:
        """The 5-bit suffix as text, e.g. ``11111`` or ``00001``."""
        if self.taints is not None:
            return self.taints.bits()
        return f"0000{self.ret_taint.bit}"

    def suffix(self) -> int:
        return int(self.bits(), 2)

    def encode(self) -> int:
        return self.prefix << MAGIC_TAINT_BITS | self.suffix()

    def with_prefix(self, prefix: int) -> MagicSeq:
        return self.model_copy(update={"prefix": prefix})

    @classmethod
    def decode(cls, kind: MagicKind, value: int) -> MagicSeq:
        prefix, suffix = value >> MAGIC_TAINT_BITS, value & 0b11111
        if kind is MagicKind.CALL_SITE:
            return cls.call_site(prefix, TaintVec5.from_value(suffix))
        if suffix & 0b11110:
            raise ValueError("return-site magic padding bits must be zero")
        return cls.ret_site(prefix, TaintLabel.from_bit(suffix))


# -----------------------------------------------------------------------------
# Instrumented program
# -----------------------------------------------------------------------------


class Node(_Frozen):
    """One command at a fixed pc with its pre- and post-state register taints."""

    pc: int = Field(ge=0)
    cmd: Command
    gamma_in: TaintEnv
    gamma_out: TaintEnv
    magic: MagicSeq | None = None


class FuncInfo(_Frozen):
    name: str
    trust: Trust
    entry_pc: int = Field(ge=0)
    magic: MagicSeq
    body: tuple[Node, ...] = ()
    edges: tuple[tuple[int, int], ...] = ()

    @model_validator(mode="after")
    def _check_shape(self) -> FuncInfo:
        if self.magic.kind is not MagicKind.CALL_SITE:
            raise ValueError(f"{self.name}: entry magic must be call-site form")
        if self.trust is Trust.T:
            if self.body or self.edges:
                raise ValueError(f"{self.name}: trusted functions carry metadata only")
            return self
        if not self.body:
            raise ValueError(f"{self.name}: untrusted function without a body")
        pcs = [node.pc for node in self.body]
        if pcs != sorted(set(pcs)):
            raise ValueError(f"{self.name}: node pcs must be unique and ascending")
        if self.body[0].pc != self.entry_pc:
            raise ValueError(f"{self.name}: entry pc is not the first node")
        for node in self.body:
            if node.magic is not None and node.magic.kind is not MagicKind.RET_SITE:
                raise ValueError(f"{self.name}: pc={node.pc} carries call-site magic")
        members = set(pcs)
        if list(self.edges) != sorted(set(self.edges)):
            raise ValueError(f"{self.name}: edges must be unique and sorted")
        sources = set()
        for src, dst in self.edges:
            if src not in members or dst not in members:
                raise ValueError(f"{self.name}: edge ({src}, {dst}) leaves the function")
            sources.add(src)
        for node in self.body:
            terminal = node.cmd.kind == "ret"
            if terminal and node.pc in sources:
                raise ValueError(f"{self.name}: ret at pc={node.pc} has successors")
            if not terminal and node.pc not in sources:
                raise ValueError(f"{self.name}: pc={node.pc} has no successor edge")
        return self


class FuncEntry(_Frozen):
    """One row of the function table: entry pc and call-site magic."""

    entry_pc: int = Field(ge=0)
    magic: MagicSeq


class RegisterConvention(_Frozen):
    num_regs: Literal[16] = NUM_REGS
    callee_save: tuple[int, ...] = CALLEE_SAVE_REGS

    @model_validator(mode="after")
    def _check_partition(self) -> RegisterConvention:
        if any(not 0 < r < self.num_regs for r in self.callee_save):
            raise ValueError("callee-save registers must lie in r1..r15")
        if any(r <= MAX_ARGS for r in self.callee_save):
            raise ValueError("return and argument registers are caller-save")
        return self

    @property
    def caller_save(self) -> tuple[int, ...]:
        return tuple(r for r in range(self.num_regs) if r not in self.callee_save)


class Program(_Frozen):
    """The instrumented CFG ``G`` plus the function table ``F``."""

    functions: dict[str, FuncInfo]
    func_table: dict[str, FuncEntry]
    entry: str
    convention: RegisterConvention = RegisterConvention()
    m_call_prefix: int = Field(ge=0, lt=MAGIC_PREFIX_LIMIT)
    m_ret_prefix: int = Field(ge=0, lt=MAGIC_PREFIX_LIMIT)
    layout: MemoryLayout
    globals: tuple[GlobalCell, ...] = ()

    @model_validator(mode="after")
    def _check_program(self) -> Program:
        for name, info in self.functions.items():
            if info.name != name:
                raise ValueError(f"function '{info.name}' stored under '{name}'")
        if set(self.func_table) != set(self.functions):
            raise ValueError("function table and functions name different sets")
        for name, info in self.functions.items():
            row = self.func_table[name]
            if row.entry_pc != info.entry_pc or row.magic != info.magic:
                raise ValueError(f"function table disagrees with '{name}'")
        entry = self.functions.get(self.entry)
        if entry is None or entry.trust is not Trust.U:
            raise ValueError(f"entry '{self.entry}' is not an untrusted function")

        seen: dict[int, str] = {}
        for info in self.functions.values():
            pcs = [n.pc for n in info.body] if info.trust is Trust.U else [info.entry_pc]
            for pc in pcs:
                if pc in seen:
                    raise ValueError(f"pc={pc} used by both '{seen[pc]}' and '{info.name}'")
                seen[pc] = info.name

        placeholder = self.m_call_prefix == 0 and self.m_ret_prefix == 0
        if not placeholder and self.m_call_prefix == self.m_ret_prefix:
            raise ValueError("call and return magic prefixes must differ")
        for info in self.functions.values():
            if info.magic.prefix != self.m_call_prefix:
                raise ValueError(f"'{info.name}' entry magic does not use the call prefix")
            for node in info.body:
                if node.magic is not None and node.magic.prefix != self.m_ret_prefix:
                    raise ValueError(f"pc={node.pc} magic does not use the return prefix")

        for cell in self.globals:
            region_end = self.layout.end_of(cell.region)
            if cell.base < self.layout.base_of(cell.region) or cell.end > region_end:
                raise ValueError(f"global '{cell.name}' lies outside its region")
        return self

    def untrusted(self) -> list[FuncInfo]:
        return [f for f in self.functions.values() if f.trust is Trust.U]

    def global_cell(self, name: str) -> GlobalCell | None:
        for cell in self.globals:
            if cell.name == name:
                return cell
        return None


# -----------------------------------------------------------------------------
# Source program
# -----------------------------------------------------------------------------


class Signature(_Frozen):
    params: tuple[TaintLabel, ...] = Field(default=(), max_length=MAX_ARGS)
    ret: TaintLabel

    def taint_vec(self) -> TaintVec5:
        return TaintVec5.from_signature(self.params, self.ret)


class GlobalDecl(_Frozen):
    name: str
    region: TaintLabel
    size: int = Field(gt=0)


class TrustedDecl(_Frozen):
    name: str
    signature: Signature


class SourceFunction(_Frozen):
    """An untrusted function as written: body indices are the jump targets."""

    name: str
    signature: Signature
    body: tuple[Command, ...] = Field(min_length=1)
    labels: tuple[tuple[str, int], ...] = ()

    @model_validator(mode="after")
    def _check_body(self) -> SourceFunction:
        for index, cmd in enumerate(self.body):
            if isinstance(cmd, Assert):
                raise ValueError(f"{self.name}#{index}: source bodies cannot contain asserts")
            targets = ()
            if isinstance(cmd, Goto):
                targets = (cmd.target,)
            elif isinstance(cmd, IfThenElse):
                targets = (cmd.then_pc, cmd.else_pc)
            for t in targets:
                if not isinstance(t, Const) or t.value >= len(self.body):
                    raise ValueError(f"{self.name}#{index}: jump target is not a body index")
        if not is_terminator(self.body[-1]):
            raise ValueError(f"{self.name}: body must end with ret, goto or if")
        for label, index in self.labels:
            if not 0 <= index < len(self.body):
                raise ValueError(f"{self.name}: label '{label}' out of range")
        return self


class SourceProgram(_Frozen):
    globals: tuple[GlobalDecl, ...] = ()
    trusted: tuple[TrustedDecl, ...] = ()
    functions: tuple[SourceFunction, ...] = Field(min_length=1)
    entry: str

    @model_validator(mode="after")
    def _check_names(self) -> SourceProgram:
        names = [g.name for g in self.globals]
        names += [t.name for t in self.trusted] + [f.name for f in self.functions]
        if len(names) != len(set(names)):
            raise ValueError("duplicate global or function name")
        untrusted = {f.name: f.signature for f in self.functions}
        trusted = {t.name: t.signature for t in self.trusted}
        declared_globals = {g.name for g in self.globals}
        if self.entry not in untrusted:
            raise ValueError(f"entry '{self.entry}' is not a declared fn")
        for fn in self.functions:
            for index, cmd in enumerate(fn.body):
                where = f"{fn.name}#{index}"
                for e in command_expressions(cmd):
                    missing = expr_functions(e) - untrusted.keys() - trusted.keys()
                    missing |= expr_globals(e) - declared_globals
                    if missing:
                        raise ValueError(f"{where}: unresolved {sorted(missing)}")
                if isinstance(cmd, (CallU, CallT)):
                    table = untrusted if isinstance(cmd, CallU) else trusted
                    if cmd.func not in table:
                        raise ValueError(f"{where}: '{cmd.func}' is not callable this way")
                    if len(cmd.args) != len(table[cmd.func].params):
                        raise ValueError(f"{where}: wrong number of arguments to '{cmd.func}'")
        return self

    def function(self, name: str) -> SourceFunction | None:
        for fn in self.functions:
            if fn.name == name:
                return fn
        return None

    def signatures(self) -> dict[str, Signature]:
        """Signatures of every callable, trusted and untrusted."""
        table = {t.name: t.signature for t in self.trusted}
        table.update({f.name: f.signature for f in self.functions})
        return table
