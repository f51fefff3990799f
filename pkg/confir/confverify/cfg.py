"""Lookup structures over a decoded program: node index and per-function graphs."""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field

import networkx as nx

from confir.ir.program import FuncInfo, Node, Program, Trust
from confir.ir.syntax import (
    Assert,
    Command,
    Const,
    Goto,
    IfThenElse,
    Mov,
    Ret,
)


def command_targets(cmd: Command, pc: int) -> list[int] | None:
    """Successor pcs implied by a command, or None when a jump target is not constant."""
    if isinstance(cmd, Ret):
        return []
    if isinstance(cmd, Goto):
        return [cmd.target.value] if isinstance(cmd.target, Const) else None
    if isinstance(cmd, IfThenElse):
        if not isinstance(cmd.then_pc, Const) or not isinstance(cmd.else_pc, Const):
            return None
        return sorted({cmd.then_pc.value, cmd.else_pc.value})
    return [pc + 1]


@dataclass
class ProgramIndex:
    program: Program
    nodes: dict[int, Node] = field(default_factory=dict)
    owner: dict[int, str] = field(default_factory=dict)
    graphs: dict[str, nx.DiGraph] = field(default_factory=dict)
    trusted_entries: dict[int, str] = field(default_factory=dict)
    untrusted_entries: dict[int, str] = field(default_factory=dict)

    @classmethod
    def build(cls, program: Program) -> ProgramIndex:
        index = cls(program)
        for info in program.functions.values():
            if info.trust is Trust.T:
                index.trusted_entries[info.entry_pc] = info.name
                continue
            index.untrusted_entries[info.entry_pc] = info.name
            graph = nx.DiGraph()
            for node in info.body:
                index.nodes[node.pc] = node
                index.owner[node.pc] = info.name
                graph.add_node(node.pc)
            graph.add_edges_from(info.edges)
            index.graphs[info.name] = graph
        return index

    def function_of(self, pc: int) -> FuncInfo:
        return self.program.functions[self.owner[pc]]

    def predecessors(self, pc: int) -> list[int]:
        return sorted(self.graphs[self.owner[pc]].predecessors(pc))

    def find_guard(
        self, node: Node, matches: Callable[[Assert], bool], guarded: frozenset[int]
    ) -> Assert | None:
        """
        Search backwards in the basic block of ``node`` for an assert accepted by
        ``matches``.

        The search passes over other asserts and over moves that do not write a
        register in ``guarded``; it stops where the block has more than one
        predecessor or is entered other than by falling through.
        """
        current = node
        while True:
            preds = self.predecessors(current.pc)
            if preds != [current.pc - 1]:
                return None
            prev = self.nodes[preds[0]]
            if isinstance(prev.cmd, Assert):
                if matches(prev.cmd):
                    return prev.cmd
            elif not (isinstance(prev.cmd, Mov) and prev.cmd.reg not in guarded):
                return None
            current = prev
