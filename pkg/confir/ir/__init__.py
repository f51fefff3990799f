"""The abstract assembly IR: syntax, taints, programs and their file formats."""

from .codec import deserialize_cfg, serialize_cfg, serialize_with_offsets, stray_magic_windows
from .memory import GlobalCell, MemoryLayout, Scheme
from .parser import parse_source
from .printer import format_command, format_expr, format_source
from .program import (
    FuncEntry,
    FuncInfo,
    GlobalDecl,
    MagicKind,
    MagicSeq,
    Node,
    Program,
    RegisterConvention,
    Signature,
    SourceFunction,
    SourceProgram,
    Trust,
    TrustedDecl,
)
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
from .taint import H, L, TaintEnv, TaintLabel, TaintVec5

__all__ = [
    "H",
    "L",
    "TaintLabel",
    "TaintEnv",
    "TaintVec5",
    "Expr",
    "Const",
    "Reg",
    "UnOp",
    "BinOp",
    "FuncAddr",
    "GlobalRef",
    "AddrInRegion",
    "MagicCallMatch",
    "MagicRetMatch",
    "Command",
    "Mov",
    "Ldr",
    "Str",
    "Goto",
    "IfThenElse",
    "Ret",
    "CallU",
    "CallT",
    "ICall",
    "Assert",
    "Scheme",
    "MemoryLayout",
    "GlobalCell",
    "MagicKind",
    "MagicSeq",
    "Node",
    "Trust",
    "FuncInfo",
    "FuncEntry",
    "RegisterConvention",
    "Program",
    "Signature",
    "GlobalDecl",
    "TrustedDecl",
    "SourceFunction",
    "SourceProgram",
    "parse_source",
    "format_source",
    "format_expr",
    "format_command",
    "serialize_cfg",
    "deserialize_cfg",
    "serialize_with_offsets",
    "stray_magic_windows",
]
