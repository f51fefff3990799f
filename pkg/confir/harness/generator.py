"""
Random source-program generator.

Generated programs follow a fixed register discipline so that they type-check
by construction:

* r10..r12 only ever hold public values (constants, other pinned registers,
  loads from public globals at public addresses);
* r13 is the loop counter and is written only by loop headers and latches;
* r14 may hold private data and is cleared before every return, so calls
  made while it is private exercise callee-save spilling;
* r5..r9 and the argument registers float and may hold anything.

Public positions (branch conditions, public stores, indirect call targets,
arguments to public parameters, public return values) are filled only from
the pinned registers and constants. A leak is injected on purpose with
probability ``leak_rate`` so that the inference-failure path is exercised.
"""

from __future__ import annotations

import random
from collections.abc import Callable

from pydantic import BaseModel, ConfigDict, Field

from confir.ir.program import GlobalDecl, Signature, SourceFunction, SourceProgram, TrustedDecl
from confir.ir.syntax import (
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
    Mov,
    Reg,
    Ret,
    Str,
)
from confir.ir.taint import H, L, TaintLabel

MAX_FUNCTIONS = 8
MAX_SOURCE_STATEMENTS = 64

PINNED = (10, 11, 12)
COUNTER = 13
SPILLED = 14
FLOATING = (5, 6, 7, 8, 9)
ANYWHERE = (0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 14)

GLOBAL_SIZE = 8
GLOBALS = (
    GlobalDecl(name="pub", region=L, size=GLOBAL_SIZE),
    GlobalDecl(name="out", region=L, size=GLOBAL_SIZE),
    GlobalDecl(name="sec", region=H, size=GLOBAL_SIZE),
)
PUBLIC_GLOBALS = ("pub", "out")

TRUSTED = (
    TrustedDecl(name="t_read_secret", signature=Signature(params=(L, L), ret=L)),
    TrustedDecl(name="t_copy_pub", signature=Signature(params=(L, L, L), ret=L)),
    TrustedDecl(name="t_declassify_const", signature=Signature(params=(L,), ret=L)),
)
LEAKY = TrustedDecl(name="t_leaky", signature=Signature(params=(L, L, L), ret=L))

_PUBLIC_OPS = ("+", "-", "*", "&", "|", "^")
_ANY_OPS = ("+", "-", "*", "/", "%", "&", "|", "^", "<<", ">>", "==", "!=", "<", ">=")


class GenParams(BaseModel):
    """Size and shape knobs of the generator."""

    model_config = ConfigDict(frozen=True)

    max_functions: int = Field(default=3, ge=0, le=MAX_FUNCTIONS - 1)
    max_statements: int = Field(default=10, ge=1, le=24)
    leak_rate: float = Field(default=0.1, ge=0.0, le=1.0)
    include_leaky: bool = False


class _FunctionBuilder:
    def __init__(
        self,
        rng: random.Random,
        name: str,
        signature: Signature,
        callees: dict[str, Signature],
        trusted: tuple[str, ...],
    ):
        self.rng = rng
        self.name = name
        self.signature = signature
        self.callees = callees
        self.trusted = trusted
        self.body: list[Command | None] = []
        self.labels: list[tuple[str, int]] = []

    # -------------------------------------------------------------------------
    # Emission
    # -------------------------------------------------------------------------

    def emit(self, cmd: Command | None) -> int:
        self.body.append(cmd)
        return len(self.body) - 1

    def label(self, prefix: str, index: int) -> None:
        self.labels.append((f"{prefix}_{index}", index))

    def room(self) -> bool:
        # leave space for the largest unit plus the epilogue
        return len(self.body) < MAX_SOURCE_STATEMENTS - 16

    # -------------------------------------------------------------------------
    # Expressions
    # -------------------------------------------------------------------------

    def public_operand(self) -> Expr:
        if self.rng.random() < 0.4:
            return Const(value=self.rng.randrange(16))
        return Reg(index=self.rng.choice(PINNED))

    def public_expr(self) -> Expr:
        if self.rng.random() < 0.5:
            return self.public_operand()
        op = self.rng.choice(_PUBLIC_OPS)
        return BinOp(op=op, left=self.public_operand(), right=self.public_operand())

    def any_operand(self) -> Expr:
        if self.rng.random() < 0.25:
            return Const(value=self.rng.randrange(256))
        return Reg(index=self.rng.choice(ANYWHERE))

    def any_expr(self) -> Expr:
        if self.rng.random() < 0.4:
            return self.any_operand()
        op = self.rng.choice(_ANY_OPS)
        return BinOp(op=op, left=self.any_operand(), right=self.any_operand())

    def address(self, name: str, index: Expr | None = None) -> Expr:
        if index is None:
            offset: Expr = Const(value=self.rng.randrange(GLOBAL_SIZE))
        else:
            offset = BinOp(op="&", left=index, right=Const(value=GLOBAL_SIZE - 1))
        return BinOp(op="+", left=GlobalRef(name=name), right=offset)

    def maybe_indexed(self, index: Callable[[], Expr]) -> Expr | None:
        return index() if self.rng.random() < 0.5 else None

    def arguments(self, signature: Signature) -> tuple[Expr, ...]:
        return tuple(
            self.public_expr() if label is L else self.any_expr() for label in signature.params
        )

    # -------------------------------------------------------------------------
    # Simple statements
    # -------------------------------------------------------------------------

    def pinned_mov(self) -> None:
        self.emit(Mov(reg=self.rng.choice(PINNED), src=self.public_expr()))

    def floating_mov(self) -> None:
        self.emit(Mov(reg=self.rng.choice(FLOATING), src=self.any_expr()))

    def pinned_load(self) -> None:
        name = self.rng.choice(PUBLIC_GLOBALS)
        addr = self.address(name, self.maybe_indexed(self.public_operand))
        self.emit(Ldr(reg=self.rng.choice(PINNED), addr=addr))

    def floating_load(self) -> None:
        name = self.rng.choice([g.name for g in GLOBALS])
        addr = self.address(name, self.maybe_indexed(self.any_operand))
        self.emit(Ldr(reg=self.rng.choice(FLOATING), addr=addr))

    def public_store(self) -> None:
        name = self.rng.choice(PUBLIC_GLOBALS)
        addr = self.address(name, self.maybe_indexed(self.public_operand))
        self.emit(Str(reg=self.rng.choice(PINNED), addr=addr))

    def private_store(self) -> None:
        addr = self.address("sec", self.maybe_indexed(self.any_operand))
        self.emit(Str(reg=self.rng.choice(FLOATING + PINNED), addr=addr))

    def taint_spilled(self) -> None:
        self.emit(Mov(reg=SPILLED, src=Reg(index=self.rng.choice(FLOATING))))

    def direct_call(self) -> None:
        callee = self.rng.choice(sorted(self.callees))
        self.emit(CallU(func=callee, args=self.arguments(self.callees[callee])))

    def indirect_call(self) -> None:
        callee = self.rng.choice(sorted(self.callees))
        signature = self.callees[callee]
        if self.rng.random() < 0.5:
            self.emit(Mov(reg=PINNED[-1], src=FuncAddr(name=callee)))
            target: Expr = Reg(index=PINNED[-1])
        else:
            target = FuncAddr(name=callee)
        self.emit(ICall(target=target, args=self.arguments(signature), ret_taint=signature.ret))

    def trusted_call(self) -> None:
        name = self.rng.choice(self.trusted)
        count = Const(value=self.rng.randint(1, GLOBAL_SIZE // 2))
        if name == "t_read_secret":
            args: tuple[Expr, ...] = (BinOp(op="+", left=GlobalRef(name="sec"),
                                            right=Const(value=self.rng.randrange(4))), count)
        elif name == "t_declassify_const":
            args = (self.address(self.rng.choice(PUBLIC_GLOBALS)),)
        else:
            args = (GlobalRef(name="out"), GlobalRef(name="pub"), count)
        self.emit(CallT(func=name, args=args))

    def leaky_call(self) -> None:
        args = (GlobalRef(name="out"), GlobalRef(name="sec"), Const(value=GLOBAL_SIZE // 2))
        self.emit(CallT(func=LEAKY.name, args=args))

    def simple(self, allow_calls: bool = True) -> None:
        choices: list[tuple[Callable[[], None], int]] = [
            (self.pinned_mov, 3),
            (self.floating_mov, 3),
            (self.pinned_load, 2),
            (self.floating_load, 3),
            (self.public_store, 2),
            (self.private_store, 2),
            (self.taint_spilled, 1),
        ]
        if allow_calls:
            choices.append((self.trusted_call, 1))
            if self.callees:
                choices += [(self.direct_call, 2), (self.indirect_call, 1)]
        actions, weights = zip(*choices)
        self.rng.choices(actions, weights=weights)[0]()

    # -------------------------------------------------------------------------
    # Compound statements
    # -------------------------------------------------------------------------

    def condition(self) -> Expr:
        op = self.rng.choice(("<", "==", "!=", ">="))
        return BinOp(op=op, left=Reg(index=self.rng.choice(PINNED)), right=self.public_operand())

    def diamond(self) -> None:
        branch = self.emit(None)
        then_start = len(self.body)
        for _ in range(self.rng.randint(0, 2)):
            self.simple()
        jump = self.emit(None)
        else_start = len(self.body)
        for _ in range(self.rng.randint(0, 2)):
            self.simple()
        join = len(self.body)
        self.body[branch] = IfThenElse(
            cond=self.condition(), then_pc=Const(value=then_start), else_pc=Const(value=else_start)
        )
        self.body[jump] = Goto(target=Const(value=join))
        self.label("then", then_start)
        if else_start != join:
            self.label("else", else_start)
        # the join point is the next statement emitted
        self.label("join", join)

    def loop(self) -> None:
        self.emit(Mov(reg=COUNTER, src=Const(value=0)))
        head = self.emit(None)
        for _ in range(self.rng.randint(1, 3)):
            self.simple(allow_calls=False)
        self.emit(Mov(reg=COUNTER, src=BinOp(op="+", left=Reg(index=COUNTER),
                                             right=Const(value=1))))
        self.emit(Goto(target=Const(value=head)))
        done = len(self.body)
        bound = Const(value=self.rng.randint(1, 4))
        self.body[head] = IfThenElse(
            cond=BinOp(op="<", left=Reg(index=COUNTER), right=bound),
            then_pc=Const(value=head + 1),
            else_pc=Const(value=done),
        )
        self.label("loop", head)
        self.label("done", done)

    def unit(self) -> None:
        roll = self.rng.random()
        if roll < 0.12:
            self.diamond()
        elif roll < 0.2:
            self.loop()
        else:
            self.simple()

    # -------------------------------------------------------------------------
    # Functions
    # -------------------------------------------------------------------------

    def epilogue(self) -> None:
        self.emit(Mov(reg=SPILLED, src=Const(value=0)))
        value = self.public_expr() if self.signature.ret is L else self.any_expr()
        self.emit(Mov(reg=0, src=value))
        self.emit(Ret())

    def finish(self) -> SourceFunction:
        body = tuple(self.body)
        labels = tuple(sorted(set(self.labels), key=lambda item: (item[1], item[0])))
        return SourceFunction(name=self.name, signature=self.signature, body=body, labels=labels)


def _signature(rng: random.Random, ret: TaintLabel | None = None) -> Signature:
    params = tuple(rng.choice((L, H)) for _ in range(rng.randint(0, 4)))
    return Signature(params=params, ret=ret if ret is not None else rng.choice((L, H)))


def _helper(
    rng: random.Random,
    name: str,
    signature: Signature,
    callees: dict[str, Signature],
    trusted: tuple[str, ...],
    params: GenParams,
) -> SourceFunction:
    fb = _FunctionBuilder(rng, name, signature, callees, trusted)
    for _ in range(rng.randint(1, params.max_statements)):
        if not fb.room():
            break
        fb.unit()
    fb.epilogue()
    return fb.finish()


def _main(
    rng: random.Random,
    callees: dict[str, Signature],
    trusted: tuple[str, ...],
    params: GenParams,
) -> SourceFunction:
    fb = _FunctionBuilder(rng, "main", Signature(params=(), ret=L), callees, trusted)

    # private input, then a private value stored back to private memory
    fb.emit(CallT(func="t_read_secret", args=(GlobalRef(name="sec"), Const(value=4))))
    fb.emit(Ldr(reg=FLOATING[0], addr=fb.address("sec")))
    fb.emit(Str(reg=FLOATING[0], addr=fb.address("sec")))

    units: list[Callable[[], None]] = [
        fb.diamond, fb.direct_call, fb.indirect_call, fb.public_store,
    ]
    if params.include_leaky:
        units.append(fb.leaky_call)
    units += [fb.unit] * rng.randint(0, params.max_statements)
    rng.shuffle(units)
    leak_at = rng.randrange(len(units) + 1) if rng.random() < params.leak_rate else None
    for position, unit in enumerate(units):
        if position == leak_at:
            _leak(fb)
        if fb.room():
            unit()
    if leak_at == len(units):
        _leak(fb)
    fb.epilogue()
    return fb.finish()


def _leak(fb: _FunctionBuilder) -> None:
    fb.emit(Ldr(reg=FLOATING[1], addr=fb.address("sec")))
    fb.emit(Str(reg=FLOATING[1], addr=fb.address("pub")))


def gen_program(seed: int, params: GenParams | None = None) -> SourceProgram:
    """
    Generate a source program deterministically from ``seed``.

    With ``max_functions == 0`` the program is a lone ``main`` that returns.
    Otherwise ``main`` always reads a secret, stores private data, branches,
    and makes a direct and an indirect call; helpers only call helpers
    declared after them, so the call graph is acyclic.
    """
    params = params or GenParams()
    rng = random.Random(seed)
    if params.max_functions == 0:
        main = SourceFunction(name="main", signature=Signature(params=(), ret=H), body=(Ret(),))
        return SourceProgram(functions=(main,), entry="main")

    trusted_decls = TRUSTED + ((LEAKY,) if params.include_leaky else ())
    trusted = tuple(t.name for t in TRUSTED)
    count = rng.randint(1, params.max_functions)
    names = [f"f{i}" for i in range(1, count + 1)]
    # the first helper returns private data so return-taint mutations have a target
    signatures = {name: _signature(rng, H if i == 0 else None) for i, name in enumerate(names)}

    helpers = []
    for i, name in enumerate(names):
        callees = {n: signatures[n] for n in names[i + 1 :]}
        helpers.append(_helper(rng, name, signatures[name], callees, trusted, params))
    main = _main(rng, dict(signatures), trusted, params)
    return SourceProgram(
        globals=GLOBALS,
        trusted=trusted_decls,
        functions=(main, *helpers),
        entry="main",
    )
