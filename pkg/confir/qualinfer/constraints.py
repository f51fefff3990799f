"""
Constraint generation for qualifier inference.

Every register definition in a source function gets a :class:`TaintVar`; uses are
connected to the definitions that reach them, and each dataflow edge becomes a
subtyping constraint ``a ⊑ b``. Annotated positions (parameters, returns, globals)
become equalities with concrete labels.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import networkx as nx

from confir.ir.constants import CALLEE_SAVE_REGS, NUM_REGS, RET_REG
from confir.ir.program import SourceFunction, SourceProgram
from confir.ir.syntax import (
    CallT,
    CallU,
    Command,
    Const,
    Expr,
    Goto,
    ICall,
    IfThenElse,
    Ldr,
    Mov,
    Ret,
    Str,
    command_registers_written,
    expr_globals,
    expr_registers,
)
from confir.ir.taint import H, L, TaintLabel

logger = logging.getLogger(__name__)

ENTRY_SITE = -1


@dataclass(frozen=True, order=True)
class TaintVar:
    """Label of one definition: register ``slot`` ("r3") or access region ("mem")."""

    function: str
    site: int
    slot: str

    def __str__(self) -> str:
        where = "entry" if self.site == ENTRY_SITE else f"#{self.site}"
        return f"{self.function}{where}.{self.slot}"


Atom = TaintVar | TaintLabel


@dataclass(frozen=True)
class Le:
    """``a ⊑ b``."""

    a: Atom
    b: Atom
    origin: str = ""

    def __str__(self) -> str:
        return f"{self.a} ⊑ {self.b} ({self.origin})" if self.origin else f"{self.a} ⊑ {self.b}"


@dataclass(frozen=True)
class Eq:
    """``a = b``."""

    a: Atom
    b: Atom
    origin: str = ""

    def __str__(self) -> str:
        return f"{self.a} = {self.b} ({self.origin})" if self.origin else f"{self.a} = {self.b}"


Constraint = Le | Eq


@dataclass
class ConstraintSystem:
    """Output of :func:`generate_constraints`.

    ``var_map`` maps (function, site, register) to the definition variable, and
    ``access_regions`` maps (function, body index) of every load/store to the atom
    holding its region label. ``branch_conditions`` lists the atoms each branch
    condition depends on, for the warn-implicit mode.
    """

    constraints: list[Constraint] = field(default_factory=list)
    var_map: dict[tuple[str, int, int], TaintVar] = field(default_factory=dict)
    access_regions: dict[tuple[str, int], Atom] = field(default_factory=dict)
    branch_conditions: dict[tuple[str, int], list[Atom]] = field(default_factory=dict)

    def variables(self) -> set[TaintVar]:
        found: set[TaintVar] = set(self.var_map.values())
        for atom in self.access_regions.values():
            if isinstance(atom, TaintVar):
                found.add(atom)
        return found

    def __iter__(self):
        # unpacks as (constraints, var_map)
        return iter((self.constraints, self.var_map))


def source_successors(fn: SourceFunction, index: int) -> list[int]:
    cmd = fn.body[index]
    if isinstance(cmd, Ret):
        return []
    if isinstance(cmd, Goto):
        return [cmd.target.value]
    if isinstance(cmd, IfThenElse):
        return sorted({cmd.then_pc.value, cmd.else_pc.value})
    return [index + 1]


def source_cfg(fn: SourceFunction) -> nx.DiGraph:
    """Body-index control-flow graph of a source function."""
    graph = nx.DiGraph()
    graph.add_nodes_from(range(len(fn.body)))
    for index in range(len(fn.body)):
        for succ in source_successors(fn, index):
            graph.add_edge(index, succ)
    return graph


def _defined(cmd: Command) -> frozenset[int]:
    # calls restore callee-save registers, so at source level they only define r0..r9
    return command_registers_written(cmd)


def reaching_definitions(fn: SourceFunction) -> list[dict[int, frozenset[int]]]:
    """For each body index, the defining sites of every register on entry to it.

    Worklist over the source CFG; site ``ENTRY_SITE`` stands for the function entry.
    """
    graph = source_cfg(fn)
    entry_defs = {r: frozenset({ENTRY_SITE}) for r in range(NUM_REGS)}
    empty: dict[int, frozenset[int]] = {}
    reach_in: list[dict[int, frozenset[int]]] = [dict(empty) for _ in fn.body]
    reach_out: list[dict[int, frozenset[int]]] = [dict(empty) for _ in fn.body]

    worklist = list(graph.nodes())
    while worklist:
        n = worklist.pop(0)
        merged: dict[int, set[int]] = {}
        sources = [reach_out[p] for p in graph.predecessors(n)]
        if n == 0:
            sources.append(entry_defs)
        for defs in sources:
            for r, sites in defs.items():
                merged.setdefault(r, set()).update(sites)
        new_in = {r: frozenset(s) for r, s in merged.items()}
        reach_in[n] = new_in
        killed = _defined(fn.body[n])
        new_out = {r: s for r, s in new_in.items() if r not in killed}
        for r in killed:
            new_out[r] = frozenset({n})
        if new_out != reach_out[n]:
            reach_out[n] = new_out
            worklist.extend(graph.successors(n))
    return reach_in


class _Generator:
    def __init__(self, sp: SourceProgram, strict: bool):
        self.sp = sp
        self.strict = strict
        self.signatures = sp.signatures()
        self.global_labels = {g.name: g.region for g in sp.globals}
        self.system = ConstraintSystem()

    def var(self, fn: str, site: int, reg: int) -> TaintVar:
        key = (fn, site, reg)
        if key not in self.system.var_map:
            self.system.var_map[key] = TaintVar(fn, site, f"r{reg}")
        return self.system.var_map[key]

    def le(self, a: Atom, b: Atom, origin: str) -> None:
        self.system.constraints.append(Le(a, b, origin))

    def eq(self, a: Atom, b: Atom, origin: str) -> None:
        self.system.constraints.append(Eq(a, b, origin))

    def uses(self, fn: str, reach: dict[int, frozenset[int]], regs) -> list[TaintVar]:
        atoms = []
        for r in sorted(regs):
            for site in sorted(reach.get(r, ())):
                atoms.append(self.var(fn, site, r))
        return atoms

    def expr_uses(self, fn: str, reach, e: Expr) -> list[TaintVar]:
        return self.uses(fn, reach, expr_registers(e))

    def access_region(self, fn: str, index: int, addr: Expr) -> Atom:
        named = sorted(expr_globals(addr))
        if len(named) == 1:
            region: Atom = self.global_labels[named[0]]
        else:
            region = TaintVar(fn, index, "mem")
        self.system.access_regions[(fn, index)] = region
        return region

    def function(self, fn: SourceFunction) -> None:
        name = fn.name
        params = fn.signature.params
        for r in range(NUM_REGS):
            origin = f"{name}: entry r{r}"
            if 1 <= r <= len(params):
                self.eq(self.var(name, ENTRY_SITE, r), params[r - 1], f"{origin} (parameter)")
            elif r in CALLEE_SAVE_REGS:
                self.eq(self.var(name, ENTRY_SITE, r), L, origin)
            else:
                self.eq(self.var(name, ENTRY_SITE, r), H, origin)

        reach_in = reaching_definitions(fn)
        for index, cmd in enumerate(fn.body):
            self.command(fn, index, cmd, reach_in[index])

    def command(self, fn: SourceFunction, index: int, cmd: Command, reach) -> None:
        name = fn.name
        where = f"{name}#{index}"
        if isinstance(cmd, Mov):
            dest = self.var(name, index, cmd.reg)
            for atom in self.expr_uses(name, reach, cmd.src):
                self.le(atom, dest, f"{where}: assignment to r{cmd.reg}")
        elif isinstance(cmd, Ldr):
            dest = self.var(name, index, cmd.reg)
            region = self.access_region(name, index, cmd.addr)
            self.le(region, dest, f"{where}: load into r{cmd.reg}")
            for atom in self.expr_uses(name, reach, cmd.addr):
                self.le(atom, dest, f"{where}: load address")
        elif isinstance(cmd, Str):
            region = self.access_region(name, index, cmd.addr)
            for atom in self.uses(name, reach, {cmd.reg}):
                self.le(atom, region, f"{where}: store of r{cmd.reg}")
            for atom in self.expr_uses(name, reach, cmd.addr):
                self.le(atom, region, f"{where}: store address")
        elif isinstance(cmd, IfThenElse):
            atoms = self.expr_uses(name, reach, cmd.cond)
            self.system.branch_conditions[(name, index)] = list(atoms)
            if self.strict:
                for atom in atoms:
                    self.le(atom, L, f"{where}: branch condition")
        elif isinstance(cmd, Goto):
            if not isinstance(cmd.target, Const):
                for atom in self.expr_uses(name, reach, cmd.target):
                    self.le(atom, L, f"{where}: jump target")
        elif isinstance(cmd, Ret):
            for atom in self.uses(name, reach, {RET_REG}):
                self.le(atom, fn.signature.ret, f"{where}: return value of {name}")
            for atom in self.uses(name, reach, CALLEE_SAVE_REGS):
                self.le(atom, L, f"{where}: callee-save {atom.slot} at return")
        elif isinstance(cmd, (CallU, CallT, ICall)):
            self.call(fn, index, cmd, reach)

    def call(self, fn: SourceFunction, index: int, cmd: Command, reach) -> None:
        name = fn.name
        where = f"{name}#{index}"
        if isinstance(cmd, ICall):
            for atom in self.expr_uses(name, reach, cmd.target):
                self.le(atom, L, f"{where}: icall target")
            ret_label = cmd.ret_taint
        else:
            signature = self.signatures[cmd.func]
            verb = "call" if isinstance(cmd, CallU) else "tcall"
            for position, arg in enumerate(cmd.args, start=1):
                expected = signature.params[position - 1]
                for atom in self.expr_uses(name, reach, arg):
                    self.le(atom, expected, f"{where}: argument {position} of {verb} {cmd.func}")
            ret_label = signature.ret
        for r in sorted(_defined(cmd)):
            label = ret_label if r == RET_REG else H
            self.eq(self.var(name, index, r), label, f"{where}: r{r} after call")


def generate_constraints(sp: SourceProgram, strict: bool = True) -> ConstraintSystem:
    """Build the subtyping constraints of ``sp``.

    Args:
        sp: A resolved source program.
        strict: Constrain branch conditions to be public. When False the
            conditions are only recorded for warnings.

    Returns:
        The constraint system; unpacks as ``(constraints, var_map)``.
    """
    gen = _Generator(sp, strict)
    for fn in sp.functions:
        gen.function(fn)
    logger.debug(
        f"generated {len(gen.system.constraints)} constraints over "
        f"{len(gen.system.variables())} variables"
    )
    return gen.system
