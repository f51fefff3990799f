"""Small-step interpreter for instrumented programs."""

from __future__ import annotations

import logging
from collections.abc import Mapping

from confir.errors import UnknownTrustedFunction
from confir.ir.constants import ARG_REGS
from confir.ir.program import MagicKind, Node, Program, Trust
from confir.ir.syntax import (
    AddrInRegion,
    Assert,
    CallT,
    CallU,
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
)
from confir.ir.taint import TaintLabel

from .evaluate import eval_expr
from .state import (
    Bottom,
    Configuration,
    Final,
    Lightning,
    Outcome,
    RunResult,
    Status,
    Step,
)
from .trusted import SECRET_SEED_CELL, TrustedImpl, builtin_registry

logger = logging.getLogger(__name__)

# Marker pushed on the private stack for every call frame.
FRAME_MARKER = 0


class Machine:
    """
    Executes one program with a fixed set of trusted implementations.

    ``advance`` updates a configuration in place; the module-level ``step`` and
    ``run`` functions are the copying entry points.
    """

    def __init__(self, program: Program, trusted: Mapping[str, TrustedImpl] | None = None):
        self.program = program
        self.layout = program.layout
        self.trusted: dict[str, TrustedImpl] = {}
        self.nodes: dict[int, Node] = {}
        self.untrusted_entries: dict[int, str] = {}
        for info in program.functions.values():
            if info.trust is Trust.U:
                self.untrusted_entries[info.entry_pc] = info.name
                for node in info.body:
                    self.nodes[node.pc] = node
        for name, impl in (trusted if trusted is not None else builtin_registry()).items():
            if self._is_trusted(name):
                self.trusted[name] = impl

    def _is_trusted(self, name: str) -> bool:
        info = self.program.functions.get(name)
        return info is not None and info.trust is Trust.T

    def register_trusted(self, name: str, impl: TrustedImpl) -> None:
        """Install the host implementation invoked by ``tcall name``."""
        if not self._is_trusted(name):
            raise UnknownTrustedFunction(f"'{name}' is not a trusted function of this program")
        self.trusted[name] = impl

    def initial(
        self,
        registers: Mapping[int, int] | None = None,
        public: Mapping[int, int] | None = None,
        private: Mapping[int, int] | None = None,
        trusted_seed: int = 0,
    ) -> Configuration:
        """The configuration at the first node of the entry function."""
        config = Configuration(pc=self.program.functions[self.program.entry].entry_pc)
        for reg, value in (registers or {}).items():
            config.rho[reg] = value
        config.mu_l.update(public or {})
        config.mu_h.update(private or {})
        config.tau[self.layout.trusted_base + SECRET_SEED_CELL] = trusted_seed
        return config

    # -------------------------------------------------------------------------
    # Single steps
    # -------------------------------------------------------------------------

    def eval(self, config: Configuration, e: Expr) -> int:
        return eval_expr(config.rho, self.program.func_table, e)

    def _memory(self, config: Configuration, addr: int) -> dict[int, int] | None:
        region = self.layout.region_of(addr)
        if region is TaintLabel.L:
            return config.mu_l
        if region is TaintLabel.H:
            return config.mu_h
        return None

    def _holds(self, config: Configuration, cmd: Assert) -> bool:
        pred = cmd.pred
        if isinstance(pred, AddrInRegion):
            return self.layout.contains(pred.region, self.eval(config, pred.addr))
        if isinstance(pred, MagicCallMatch):
            name = self.untrusted_entries.get(self.eval(config, pred.target))
            if name is None:
                return False
            return self.program.functions[name].magic.taints.covers(pred.want)
        if isinstance(pred, MagicRetMatch):
            if not config.sigma_l:
                return True
            site = self.nodes.get(config.sigma_l[-1])
            if site is None or site.magic is None or site.magic.kind is not MagicKind.RET_SITE:
                return False
            return pred.ret_taint.leq(site.magic.ret_taint)
        return False

    def _enter(self, config: Configuration, entry_pc: int, args: tuple[Expr, ...]) -> None:
        values = [self.eval(config, a) for a in args]
        for reg, value in zip(ARG_REGS, values):
            config.rho[reg] = value
        config.sigma_l.append(config.pc + 1)
        config.sigma_h.append(FRAME_MARKER)
        config.pc = entry_pc

    def advance(self, config: Configuration) -> Outcome:
        """Apply one transition to ``config`` in place."""
        node = self.nodes.get(config.pc)
        if node is None:
            return Lightning(f"pc={config.pc} is not a node")
        cmd = node.cmd

        if isinstance(cmd, Mov):
            config.rho[cmd.reg] = self.eval(config, cmd.src)
        elif isinstance(cmd, (Ldr, Str)):
            addr = self.eval(config, cmd.addr)
            memory = self._memory(config, addr)
            if memory is None:
                return Lightning(f"pc={config.pc}: access to {addr:#x} outside both regions")
            if isinstance(cmd, Ldr):
                config.rho[cmd.reg] = memory.get(addr, 0)
            else:
                memory[addr] = config.rho[cmd.reg]
        elif isinstance(cmd, Goto):
            config.pc = self.eval(config, cmd.target)
            return Step(config)
        elif isinstance(cmd, IfThenElse):
            taken = cmd.then_pc if self.eval(config, cmd.cond) != 0 else cmd.else_pc
            config.pc = self.eval(config, taken)
            return Step(config)
        elif isinstance(cmd, Assert):
            if not self._holds(config, cmd):
                return Bottom(f"pc={config.pc}: assert {cmd.pred.kind} failed")
        elif isinstance(cmd, CallU):
            callee = self.program.functions.get(cmd.func)
            if callee is None or callee.trust is not Trust.U:
                return Lightning(f"pc={config.pc}: call to unknown function '{cmd.func}'")
            self._enter(config, callee.entry_pc, cmd.args)
            return Step(config)
        elif isinstance(cmd, ICall):
            target = self.eval(config, cmd.target)
            if target not in self.untrusted_entries:
                return Lightning(f"pc={config.pc}: indirect call to {target:#x}")
            self._enter(config, target, cmd.args)
            return Step(config)
        elif isinstance(cmd, CallT):
            impl = self.trusted.get(cmd.func)
            if impl is None:
                return Lightning(f"pc={config.pc}: no implementation for '{cmd.func}'")
            values = [self.eval(config, a) for a in cmd.args]
            for reg, value in zip(ARG_REGS, values):
                config.rho[reg] = value
            if not impl(self.layout, config):
                return Bottom(f"pc={config.pc}: {cmd.func} refused its arguments")
        elif isinstance(cmd, Ret):
            if not config.sigma_l:
                return Final(config)
            target = config.sigma_l.pop()
            config.sigma_h.pop()
            if target not in self.nodes:
                return Lightning(f"pc={config.pc}: return to {target:#x}")
            config.pc = target
            return Step(config)

        config.pc += 1
        return Step(config)

    # -------------------------------------------------------------------------
    # Runs
    # -------------------------------------------------------------------------

    def run(self, config: Configuration, fuel: int) -> RunResult:
        """Step ``config`` in place until it halts or ``fuel`` steps have been taken."""
        steps = 0
        while steps < fuel:
            outcome = self.advance(config)
            steps += 1
            match outcome:
                case Final():
                    return RunResult(Status.FINAL, steps, config)
                case Bottom(reason=reason):
                    return RunResult(Status.BOTTOM, steps, config, reason)
                case Lightning(reason=reason):
                    logger.debug(f"lightning after {steps} steps: {reason}")
                    return RunResult(Status.LIGHTNING, steps, config, reason)
        return RunResult(Status.OUT_OF_FUEL, steps, config)


def step(
    program: Program, config: Configuration, trusted: Mapping[str, TrustedImpl] | None = None
) -> Outcome:
    """One transition from a copy of ``config``."""
    return Machine(program, trusted).advance(config.copy())


def run(
    program: Program,
    config: Configuration,
    fuel: int,
    trusted: Mapping[str, TrustedImpl] | None = None,
) -> RunResult:
    """Run from a copy of ``config`` for at most ``fuel`` steps."""
    return Machine(program, trusted).run(config.copy(), fuel)


def observable_dump(program: Program, config: Configuration) -> list[str]:
    """
    The public part of a configuration as ``name=value`` lines: every public
    global cell, then the registers that are public at the current node.
    """
    lines = []
    for cell in sorted(program.globals, key=lambda c: c.base):
        if cell.region is not TaintLabel.L:
            continue
        for i in range(cell.size):
            name = cell.name if cell.size == 1 else f"{cell.name}[{i}]"
            lines.append(f"{name}={config.mu_l.get(cell.base + i, 0)}")
    node = Machine(program, {}).nodes.get(config.pc)
    if node is not None:
        for reg in range(len(config.rho)):
            if node.gamma_in[reg] is TaintLabel.L:
                lines.append(f"r{reg}={config.rho[reg]}")
    return lines
