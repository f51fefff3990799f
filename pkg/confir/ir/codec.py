"""
Canonical binary container (``.ccfg``) for instrumented programs.

Layout: the header ``CCFG\\x01`` followed by little-endian fields in a fixed
order; functions and function-table rows are sorted by name. Every magic
sequence is written as its full 64-bit encoding so that prefix uniqueness can be
checked on the byte stream itself. See docs/CCFG_FORMAT.md.
"""

from __future__ import annotations

import struct

from pydantic import ValidationError

from confir.errors import InvariantViolation, MalformedContainer

from .constants import MAGIC_TAINT_BITS
from .memory import GlobalCell, MemoryLayout, Scheme
from .program import (
    FuncEntry,
    FuncInfo,
    MagicKind,
    MagicSeq,
    Node,
    Program,
    RegisterConvention,
    Trust,
)
from .syntax import (
    BINARY_OPERATORS,
    UNARY_OPERATORS,
    AddrInRegion,
    Assert,
    BinOp,
    CallT,
    CallU,
    Command,
    Const,
    Expr,
    FuncAddr,
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
from .taint import TaintEnv, TaintLabel, TaintVec5

HEADER = b"CCFG\x01"
MAGIC = b"CCFG"
VERSION = 1

_EXPR_TAGS = {"const": 0, "reg": 1, "unop": 2, "binop": 3, "funcaddr": 4}
_PRED_TAGS = {"in_region": 0, "magic_call": 1, "magic_ret": 2}
_CMD_TAGS = {
    "mov": 0, "ldr": 1, "str": 2, "goto": 3, "if": 4,
    "ret": 5, "callu": 6, "callt": 7, "icall": 8, "assert": 9,
}
_SCHEMES = (Scheme.MPX, Scheme.SEGMENT)
_LAYOUT_FIELDS = (
    "public_base", "public_size", "private_base", "private_size", "stack_offset",
    "stack_size", "guard_low", "guard_between", "trusted_base", "trusted_size",
)


class _Writer:
    def __init__(self):
        self.buf = bytearray()
        self.magic_offsets: list[int] = []

    def u8(self, value: int) -> None:
        self.buf += struct.pack("<B", value)

    def u16(self, value: int) -> None:
        self.buf += struct.pack("<H", value)

    def u32(self, value: int) -> None:
        self.buf += struct.pack("<I", value)

    def u64(self, value: int) -> None:
        self.buf += struct.pack("<Q", value)

    def label(self, label: TaintLabel) -> None:
        self.u8(label.bit)

    def text(self, value: str) -> None:
        data = value.encode("utf-8")
        self.u16(len(data))
        self.buf += data

    def magic(self, seq: MagicSeq) -> None:
        self.magic_offsets.append(len(self.buf))
        self.u64(seq.encode())

    def expr(self, e: Expr) -> None:
        if e.kind not in _EXPR_TAGS:
            raise MalformedContainer(f"expression kind '{e.kind}' cannot be serialized")
        self.u8(_EXPR_TAGS[e.kind])
        if isinstance(e, Const):
            self.u64(e.value)
        elif isinstance(e, Reg):
            self.u8(e.index)
        elif isinstance(e, UnOp):
            self.u8(UNARY_OPERATORS.index(e.op))
            self.expr(e.operand)
        elif isinstance(e, BinOp):
            self.u8(BINARY_OPERATORS.index(e.op))
            self.expr(e.left)
            self.expr(e.right)
        elif isinstance(e, FuncAddr):
            self.text(e.name)

    def args(self, args: tuple[Expr, ...]) -> None:
        self.u8(len(args))
        for a in args:
            self.expr(a)

    def command(self, cmd: Command) -> None:
        self.u8(_CMD_TAGS[cmd.kind])
        if isinstance(cmd, Mov):
            self.u8(cmd.reg)
            self.expr(cmd.src)
        elif isinstance(cmd, (Ldr, Str)):
            self.u8(cmd.reg)
            self.expr(cmd.addr)
        elif isinstance(cmd, Goto):
            self.expr(cmd.target)
        elif isinstance(cmd, IfThenElse):
            self.expr(cmd.cond)
            self.expr(cmd.then_pc)
            self.expr(cmd.else_pc)
        elif isinstance(cmd, (CallU, CallT)):
            self.text(cmd.func)
            self.args(cmd.args)
        elif isinstance(cmd, ICall):
            self.expr(cmd.target)
            self.args(cmd.args)
            self.label(cmd.ret_taint)
        elif isinstance(cmd, Assert):
            pred = cmd.pred
            self.u8(_PRED_TAGS[pred.kind])
            if isinstance(pred, AddrInRegion):
                self.expr(pred.addr)
                self.label(pred.region)
            elif isinstance(pred, MagicCallMatch):
                self.expr(pred.target)
                self.u8(pred.want.value())
            else:
                self.label(pred.ret_taint)


def serialize_with_offsets(p: Program) -> tuple[bytes, tuple[int, ...]]:
    """Canonical bytes of ``p`` plus the offsets of every magic-sequence field."""
    w = _Writer()
    w.buf += HEADER
    w.u64(p.m_call_prefix)
    w.u64(p.m_ret_prefix)
    w.u8(p.convention.num_regs)
    w.u16(sum(1 << r for r in p.convention.callee_save))
    w.text(p.entry)

    w.u8(_SCHEMES.index(p.layout.scheme))
    for name in _LAYOUT_FIELDS:
        w.u64(getattr(p.layout, name))

    w.u32(len(p.globals))
    for cell in p.globals:
        w.text(cell.name)
        w.label(cell.region)
        w.u64(cell.base)
        w.u64(cell.size)

    w.u32(len(p.functions))
    for name in sorted(p.functions):
        info = p.functions[name]
        w.text(info.name)
        w.u8(0 if info.trust is Trust.U else 1)
        w.u64(info.entry_pc)
        w.magic(info.magic)
        w.u32(len(info.body))
        for node in info.body:
            w.u64(node.pc)
            w.command(node.cmd)
            w.u16(node.gamma_in.mask)
            w.u16(node.gamma_out.mask)
            if node.magic is None:
                w.u8(0)
            else:
                w.u8(1)
                w.magic(node.magic)
        w.u32(len(info.edges))
        for src, dst in info.edges:
            w.u64(src)
            w.u64(dst)

    w.u32(len(p.func_table))
    for name in sorted(p.func_table):
        row = p.func_table[name]
        w.text(name)
        w.u64(row.entry_pc)
        w.magic(row.magic)
    return bytes(w.buf), tuple(w.magic_offsets)


def serialize_cfg(p: Program) -> bytes:
    """Canonical container bytes; equal programs give identical bytes."""
    return serialize_with_offsets(p)[0]


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt: str) -> int:
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise MalformedContainer(f"truncated container at offset {self.pos}")
        (value,) = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return value

    def u8(self) -> int:
        return self.take("<B")

    def u16(self) -> int:
        return self.take("<H")

    def u32(self) -> int:
        return self.take("<I")

    def u64(self) -> int:
        return self.take("<Q")

    def label(self) -> TaintLabel:
        bit = self.u8()
        if bit > 1:
            raise MalformedContainer(f"bad taint byte {bit} at offset {self.pos - 1}")
        return TaintLabel.from_bit(bit)

    def text(self) -> str:
        size = self.u16()
        if self.pos + size > len(self.data):
            raise MalformedContainer(f"truncated string at offset {self.pos}")
        raw = self.data[self.pos : self.pos + size]
        self.pos += size
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedContainer(f"invalid utf-8 at offset {self.pos - size}") from exc

    def tag(self, table: dict[str, int], what: str) -> str:
        value = self.u8()
        for kind, tag in table.items():
            if tag == value:
                return kind
        raise MalformedContainer(f"unknown {what} tag {value} at offset {self.pos - 1}")

    def index(self, choices: tuple, what: str):
        value = self.u8()
        if value >= len(choices):
            raise MalformedContainer(f"unknown {what} {value} at offset {self.pos - 1}")
        return choices[value]

    def magic(self, kind: MagicKind) -> MagicSeq:
        value = self.u64()
        if kind is MagicKind.RET_SITE and value & 0b11110:
            raise MalformedContainer("return-site magic with non-zero padding bits")
        return MagicSeq.decode(kind, value)

    def expr(self) -> Expr:
        kind = self.tag(_EXPR_TAGS, "expression")
        if kind == "const":
            return Const(value=self.u64())
        if kind == "reg":
            return Reg(index=self.u8())
        if kind == "unop":
            op = self.index(UNARY_OPERATORS, "unary operator")
            return UnOp(op=op, operand=self.expr())
        if kind == "binop":
            op = self.index(BINARY_OPERATORS, "binary operator")
            left = self.expr()
            return BinOp(op=op, left=left, right=self.expr())
        return FuncAddr(name=self.text())

    def args(self) -> tuple[Expr, ...]:
        return tuple(self.expr() for _ in range(self.u8()))

    def command(self) -> Command:
        kind = self.tag(_CMD_TAGS, "command")
        if kind == "mov":
            dst = self.u8()
            return Mov(reg=dst, src=self.expr())
        if kind in ("ldr", "str"):
            r = self.u8()
            command = Ldr if kind == "ldr" else Str
            return command(reg=r, addr=self.expr())
        if kind == "goto":
            return Goto(target=self.expr())
        if kind == "if":
            cond = self.expr()
            then_pc = self.expr()
            return IfThenElse(cond=cond, then_pc=then_pc, else_pc=self.expr())
        if kind == "ret":
            return Ret()
        if kind in ("callu", "callt"):
            func = self.text()
            command = CallU if kind == "callu" else CallT
            return command(func=func, args=self.args())
        if kind == "icall":
            target = self.expr()
            args = self.args()
            return ICall(target=target, args=args, ret_taint=self.label())
        pred_kind = self.tag(_PRED_TAGS, "assert predicate")
        if pred_kind == "in_region":
            addr = self.expr()
            return Assert(pred=AddrInRegion(addr=addr, region=self.label()))
        if pred_kind == "magic_call":
            target = self.expr()
            want = self.u8()
            if want > 0b11111:
                raise MalformedContainer(f"taint vector {want} wider than five bits")
            return Assert(pred=MagicCallMatch(target=target, want=TaintVec5.from_value(want)))
        return Assert(pred=MagicRetMatch(ret_taint=self.label()))


def _decode(data: bytes) -> Program:
    if not data.startswith(MAGIC):
        raise MalformedContainer("missing CCFG header")
    r = _Reader(data)
    r.pos = len(MAGIC)
    version = r.u8()
    if version != VERSION:
        raise MalformedContainer(f"unsupported container version {version}")

    m_call_prefix = r.u64()
    m_ret_prefix = r.u64()
    num_regs = r.u8()
    callee_mask = r.u16()
    entry = r.text()

    scheme = r.index(_SCHEMES, "scheme")
    layout_values = {name: r.u64() for name in _LAYOUT_FIELDS}
    layout = MemoryLayout(scheme=scheme, **layout_values)

    cells = []
    for _ in range(r.u32()):
        name = r.text()
        region = r.label()
        base = r.u64()
        cells.append(GlobalCell(name=name, region=region, base=base, size=r.u64()))

    functions: dict[str, FuncInfo] = {}
    for _ in range(r.u32()):
        name = r.text()
        trust = r.index((Trust.U, Trust.T), "trust")
        entry_pc = r.u64()
        magic = r.magic(MagicKind.CALL_SITE)
        body = []
        for _ in range(r.u32()):
            pc = r.u64()
            cmd = r.command()
            gamma_in = TaintEnv(mask=r.u16())
            gamma_out = TaintEnv(mask=r.u16())
            flag = r.u8()
            if flag > 1:
                raise MalformedContainer(f"bad magic flag {flag} at pc={pc}")
            node_magic = r.magic(MagicKind.RET_SITE) if flag else None
            body.append(
                Node(pc=pc, cmd=cmd, gamma_in=gamma_in, gamma_out=gamma_out, magic=node_magic)
            )
        edges = []
        for _ in range(r.u32()):
            src = r.u64()
            edges.append((src, r.u64()))
        functions[name] = FuncInfo(
            name=name, trust=trust, entry_pc=entry_pc, magic=magic,
            body=tuple(body), edges=tuple(edges),
        )

    func_table: dict[str, FuncEntry] = {}
    for _ in range(r.u32()):
        name = r.text()
        entry_pc = r.u64()
        func_table[name] = FuncEntry(entry_pc=entry_pc, magic=r.magic(MagicKind.CALL_SITE))

    if r.pos != len(data):
        raise MalformedContainer(f"{len(data) - r.pos} trailing bytes after container")

    callee_save = tuple(i for i in range(16) if callee_mask >> i & 1)
    return Program(
        functions=functions,
        func_table=func_table,
        entry=entry,
        convention=RegisterConvention(num_regs=num_regs, callee_save=callee_save),
        m_call_prefix=m_call_prefix,
        m_ret_prefix=m_ret_prefix,
        layout=layout,
        globals=tuple(cells),
    )


def deserialize_cfg(data: bytes) -> Program:
    """Decode a container, rejecting anything that is not the canonical encoding.

    Raises:
        MalformedContainer: bad header or version, truncation, trailing bytes or
            a non-canonical byte stream.
        InvariantViolation: the decoded values break a Program invariant.
    """
    try:
        program = _decode(data)
    except ValidationError as exc:
        raise InvariantViolation(f"container violates program invariants: {exc}") from exc
    if serialize_cfg(program) != data:
        raise MalformedContainer("container is not in canonical form")
    return program


def magic_windows(data: bytes, prefix: int) -> list[int]:
    """Byte offsets of every 8-byte window whose 64-bit value starts with ``prefix``."""
    hits = []
    for offset in range(len(data) - 7):
        if int.from_bytes(data[offset : offset + 8], "little") >> MAGIC_TAINT_BITS == prefix:
            hits.append(offset)
    return hits


def stray_magic_windows(
    data: bytes, designated: tuple[int, ...], prefixes: tuple[int, ...]
) -> list[tuple[int, int]]:
    """(offset, prefix) for every prefix occurrence outside the designated magic fields."""
    allowed = set(designated)
    stray = []
    for prefix in prefixes:
        stray.extend(
            (offset, prefix) for offset in magic_windows(data, prefix) if offset not in allowed
        )
    return sorted(stray)
