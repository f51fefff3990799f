"""
Lowering of a source program into an instrumented control-flow graph.

Each source statement becomes a short run of instrumented commands:

* loads and stores are guarded by an ``AddrInRegion`` assert;
* ``ret`` is preceded by a ``MagicRetMatch`` assert;
* calls spill and clear private callee-save registers, clear private
  temporaries, check indirect targets with ``MagicCallMatch`` and restore the
  spilled registers at the return site, which carries the return magic.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from confir.errors import InstrumentError
from confir.ir.constants import ARG_REGS, CALLEE_SAVE_REGS, CODE_BASE, MAX_ARGS, TEMP_REGS
from confir.ir.memory import GlobalCell, MemoryLayout
from confir.ir.program import (
    FuncEntry,
    FuncInfo,
    MagicSeq,
    Node,
    Program,
    RegisterConvention,
    Signature,
    SourceFunction,
    SourceProgram,
    Trust,
)
from confir.ir.syntax import (
    AddrInRegion,
    Assert,
    CallT,
    CallU,
    Command,
    Const,
    Expr,
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
    const,
    expr_registers,
    map_expr,
)
from confir.ir.taint import H, L, TaintEnv, TaintLabel, TaintVec5
from confir.qualinfer import InferenceResult
from confir.qualinfer.dataflow import compute_node_taints, entry_env, expr_taint, transfer

from .callgraph import recursive_functions
from .layout import place_globals, spill_slot
from .magic import apply_magic_prefixes, assign_magic_prefixes

logger = logging.getLogger(__name__)


@dataclass
class _Lowered:
    """Instrumented commands of one function before pcs are assigned."""

    commands: list[Command] = field(default_factory=list)
    # region label of every load, by position
    regions: dict[int, TaintLabel] = field(default_factory=dict)
    # position -> return taint for nodes that follow a CallU/ICall
    ret_sites: dict[int, TaintLabel] = field(default_factory=dict)
    # first position emitted for each source index
    starts: list[int] = field(default_factory=list)
    # source index of the first call that spills a callee-save register
    first_spill: int | None = None

    def emit(self, cmd: Command) -> int:
        self.commands.append(cmd)
        return len(self.commands) - 1


class _FunctionLowering:
    def __init__(
        self,
        fn: SourceFunction,
        index: int,
        inference: InferenceResult,
        layout: MemoryLayout,
        cells: dict[str, GlobalCell],
        signatures: dict[str, Signature],
    ):
        self.fn = fn
        self.index = index
        self.inference = inference
        self.layout = layout
        self.cells = cells
        self.signatures = signatures
        self.out = _Lowered()
        self.pending_ret_site: TaintLabel | None = None

    def emit(self, cmd: Command) -> int:
        position = self.out.emit(cmd)
        if self.pending_ret_site is not None:
            self.out.ret_sites[position] = self.pending_ret_site
            self.pending_ret_site = None
        return position

    def lower_expr(self, e: Expr) -> Expr:
        def leaf(node: Expr) -> Expr:
            if isinstance(node, GlobalRef):
                return Const(value=self.cells[node.name].base)
            return node

        return map_expr(e, leaf)

    def guarded_access(self, cmd: Ldr | Str, i: int) -> None:
        region = self.inference.access_regions[(self.fn.name, i)]
        addr = self.lower_expr(cmd.addr)
        self.emit(Assert(pred=AddrInRegion(addr=addr, region=region)))
        position = self.emit(cmd.model_copy(update={"addr": addr}))
        if isinstance(cmd, Ldr):
            self.out.regions[position] = region

    def run(self) -> _Lowered:
        taints = self.inference.node_taints[self.fn.name]
        for i, cmd in enumerate(self.fn.body):
            self.out.starts.append(len(self.out.commands))
            gamma = taints[i][0]
            if isinstance(cmd, Mov):
                self.emit(Mov(reg=cmd.reg, src=self.lower_expr(cmd.src)))
            elif isinstance(cmd, (Ldr, Str)):
                self.guarded_access(cmd, i)
            elif isinstance(cmd, Ret):
                ret = self.fn.signature.ret
                self.emit(Assert(pred=MagicRetMatch(ret_taint=ret)))
                self.emit(Ret())
            elif isinstance(cmd, Goto):
                self.emit(cmd)
            elif isinstance(cmd, IfThenElse):
                self.emit(cmd.model_copy(update={"cond": self.lower_expr(cmd.cond)}))
            else:
                self.call(cmd, i, gamma)
        return self.out

    def call(self, cmd: CallU | CallT | ICall, i: int, gamma: TaintEnv) -> None:
        where = f"{self.fn.name}#{i}"
        args = [self.lower_expr(a) for a in cmd.args]
        target = self.lower_expr(cmd.target) if isinstance(cmd, ICall) else None
        spilled = [r for r in CALLEE_SAVE_REGS if gamma[r] is H]
        if spilled and self.out.first_spill is None:
            self.out.first_spill = i
        env = gamma
        pre: list[Command] = []

        # arguments reading a register about to be spilled are evaluated first
        read = set(expr_registers(target)) if target is not None else set()
        for a in args:
            read |= expr_registers(a)
        free = [t for t in TEMP_REGS if t not in read]
        for position, a in enumerate(args):
            if expr_registers(a) & set(spilled):
                if not free:
                    raise InstrumentError(-1, f"{where}: no free temporary to materialise argument")
                temp = free.pop(0)
                pre.append(Mov(reg=temp, src=a))
                args[position] = Reg(index=temp)
                read.add(temp)

        for r in spilled:
            slot = const(spill_slot(self.layout, self.index, r))
            pre.append(Assert(pred=AddrInRegion(addr=slot, region=H)))
            pre.append(Str(reg=r, addr=slot))
            pre.append(Mov(reg=r, src=const(0)))

        for cmd_pre in pre:
            env = transfer(cmd_pre, env, H, H)
        for t in TEMP_REGS:
            if env[t] is H and t not in read:
                clear = Mov(reg=t, src=const(0))
                pre.append(clear)
                env = transfer(clear, env, L, H)

        for command in pre:
            self.emit(command)

        lowered_args = tuple(args)
        if isinstance(cmd, ICall):
            want = TaintVec5(
                args=tuple(
                    expr_taint(env, lowered_args[k - 1]) if k <= len(lowered_args) else env[k]
                    for k in ARG_REGS
                ),
                ret=cmd.ret_taint,
            )
            self.emit(Assert(pred=MagicCallMatch(target=target, want=want)))
            self.emit(ICall(target=target, args=lowered_args, ret_taint=cmd.ret_taint))
            self.pending_ret_site = cmd.ret_taint
        else:
            self.emit(cmd.model_copy(update={"args": lowered_args}))
            if isinstance(cmd, CallU):
                self.pending_ret_site = self.signatures[cmd.func].ret

        for r in spilled:
            slot = const(spill_slot(self.layout, self.index, r))
            self.emit(Assert(pred=AddrInRegion(addr=slot, region=H)))
            position = self.emit(Ldr(reg=r, addr=slot))
            self.out.regions[position] = H


def _successors(commands: list[Command], position: int) -> list[int]:
    cmd = commands[position]
    if isinstance(cmd, Ret):
        return []
    if isinstance(cmd, Goto):
        return [cmd.target.value]
    if isinstance(cmd, IfThenElse):
        return sorted({cmd.then_pc.value, cmd.else_pc.value})
    return [position + 1]


def _retarget(cmd: Command, starts: list[int]) -> Command:
    """Rewrite source-index jump targets to positions in the lowered body."""
    if isinstance(cmd, Goto):
        return Goto(target=Const(value=starts[cmd.target.value]))
    if isinstance(cmd, IfThenElse):
        return cmd.model_copy(
            update={
                "then_pc": Const(value=starts[cmd.then_pc.value]),
                "else_pc": Const(value=starts[cmd.else_pc.value]),
            }
        )
    return cmd


def _relocate(cmd: Command, base: int) -> Command:
    if isinstance(cmd, Goto):
        return Goto(target=Const(value=base + cmd.target.value))
    if isinstance(cmd, IfThenElse):
        return cmd.model_copy(
            update={
                "then_pc": Const(value=base + cmd.then_pc.value),
                "else_pc": Const(value=base + cmd.else_pc.value),
            }
        )
    return cmd


def _check_direct_call(cmd: CallU | CallT, gamma: TaintEnv, callee: TaintVec5, pc: int) -> None:
    for k in range(1, MAX_ARGS + 1):
        label = expr_taint(gamma, cmd.args[k - 1]) if k <= len(cmd.args) else gamma[k]
        if not label.leq(callee.arg(k)):
            raise InstrumentError(
                pc, f"argument r{k} of call {cmd.func} is {label} but the callee expects "
                f"{callee.arg(k)}"
            )


def instrument_program(
    sp: SourceProgram,
    inference: InferenceResult,
    layout: MemoryLayout,
    seed: int,
    max_attempts: int | None = None,
) -> Program:
    """
    Build the instrumented program for an inferred source program.

    Args:
        sp: The source program
        inference: Result of qualifier inference on ``sp``
        layout: Memory layout; globals are placed in it
        seed: Seed of the magic-prefix draw
        max_attempts: Magic-prefix draw limit (default from settings)

    Returns:
        The instrumented program with unique magic prefixes

    Raises:
        InstrumentError: a direct call passes a private value to a public parameter,
            an argument cannot be materialised, or a function that spills may recurse
    """
    cells_tuple = place_globals(sp.globals, layout)
    cells = {c.name: c for c in cells_tuple}
    signatures = sp.signatures()
    if len(sp.functions) * len(CALLEE_SAVE_REGS) > layout.stack_size:
        raise InstrumentError(-1, "spill slots do not fit in the private stack")

    lowered: dict[str, _Lowered] = {}
    for index, fn in enumerate(sp.functions):
        out = _FunctionLowering(fn, index, inference, layout, cells, signatures).run()
        out.commands = [_retarget(cmd, out.starts) for cmd in out.commands]
        lowered[fn.name] = out

    # spill slots are static per function, so a spilling function must not re-enter itself
    recursive = recursive_functions(sp)
    for fn in sp.functions:
        first_spill = lowered[fn.name].first_spill
        if first_spill is not None and fn.name in recursive:
            raise InstrumentError(
                -1, f"{fn.name}#{first_spill}: spills a private callee-save register "
                "but may be re-entered through a call cycle"
            )

    functions: dict[str, FuncInfo] = {}
    pc = CODE_BASE
    for fn in sp.functions:
        out = lowered[fn.name]
        base = pc
        pc += len(out.commands)
        successors = [_successors(out.commands, p) for p in range(len(out.commands))]

        def call_return(cmd: Command) -> TaintLabel:
            if isinstance(cmd, ICall):
                return cmd.ret_taint
            return signatures[cmd.func].ret

        taints = compute_node_taints(
            out.commands,
            successors,
            entry_env(fn.signature.taint_vec()),
            regions=out.regions,
            call_return=call_return,
        )
        nodes = []
        for p, cmd in enumerate(out.commands):
            gamma_in, gamma_out = taints[p]
            if isinstance(cmd, (CallU, CallT)):
                _check_direct_call(cmd, gamma_in, signatures[cmd.func].taint_vec(), base + p)
            magic = None
            if p in out.ret_sites:
                magic = MagicSeq.ret_site(0, out.ret_sites[p])
            nodes.append(
                Node(
                    pc=base + p,
                    cmd=_relocate(cmd, base),
                    gamma_in=gamma_in,
                    gamma_out=gamma_out,
                    magic=magic,
                )
            )
        edges = sorted(
            {(base + p, base + s) for p in range(len(out.commands)) for s in successors[p]}
        )
        functions[fn.name] = FuncInfo(
            name=fn.name,
            trust=Trust.U,
            entry_pc=base,
            magic=MagicSeq.call_site(0, fn.signature.taint_vec()),
            body=tuple(nodes),
            edges=tuple(edges),
        )

    for decl in sp.trusted:
        functions[decl.name] = FuncInfo(
            name=decl.name,
            trust=Trust.T,
            entry_pc=pc,
            magic=MagicSeq.call_site(0, decl.signature.taint_vec()),
        )
        pc += 1

    draft = Program(
        functions=functions,
        func_table={
            name: FuncEntry(entry_pc=info.entry_pc, magic=info.magic)
            for name, info in functions.items()
        },
        entry=sp.entry,
        convention=RegisterConvention(),
        m_call_prefix=0,
        m_ret_prefix=0,
        layout=layout,
        globals=cells_tuple,
    )
    m_call, m_ret = assign_magic_prefixes(draft, seed, max_attempts)
    program = apply_magic_prefixes(draft, m_call, m_ret)
    node_count = sum(len(f.body) for f in program.functions.values())
    logger.info(f"instrumented {len(sp.functions)} function(s) into {node_count} nodes")
    return program
