"""Call graph of a source program, used to find functions that may recurse."""

from __future__ import annotations

import networkx as nx

from confir.ir.program import SourceFunction, SourceProgram
from confir.ir.syntax import (
    CallT,
    CallU,
    Command,
    FuncAddr,
    Goto,
    ICall,
    IfThenElse,
    Ldr,
    Mov,
    Reg,
    Ret,
    command_expressions,
    expr_functions,
)


def _source_successors(fn: SourceFunction, i: int) -> list[int]:
    cmd = fn.body[i]
    if isinstance(cmd, Ret):
        return []
    if isinstance(cmd, Goto):
        return [cmd.target.value]
    if isinstance(cmd, IfThenElse):
        return [cmd.then_pc.value, cmd.else_pc.value]
    return [i + 1] if i + 1 < len(fn.body) else []


def _defines(cmd: Command, reg: int) -> bool:
    if isinstance(cmd, (Mov, Ldr)):
        return cmd.reg == reg
    # a call may leave any register changed
    return isinstance(cmd, (CallU, CallT, ICall))


def _reaching_functions(fn: SourceFunction, at: int, reg: int) -> frozenset[str] | None:
    """
    Functions whose address reaches ``reg`` at body index ``at``.

    None when some path carries another value there, including a value live on entry.
    """
    graph = nx.DiGraph()
    graph.add_nodes_from(range(len(fn.body)))
    graph.add_edges_from((i, s) for i in range(len(fn.body)) for s in _source_successors(fn, i))

    found: set[str] = set()
    seen: set[int] = set()
    pending = [at]
    while pending:
        i = pending.pop()
        if i == 0:
            return None
        for p in graph.predecessors(i):
            if p in seen:
                continue
            seen.add(p)
            cmd = fn.body[p]
            if isinstance(cmd, Mov) and cmd.reg == reg and isinstance(cmd.src, FuncAddr):
                found.add(cmd.src.name)
            elif _defines(cmd, reg):
                return None
            else:
                pending.append(p)
    return frozenset(found)


def address_taken(sp: SourceProgram) -> frozenset[str]:
    """Untrusted functions whose address appears anywhere in the program."""
    untrusted = {fn.name for fn in sp.functions}
    taken: set[str] = set()
    for fn in sp.functions:
        for cmd in fn.body:
            for e in command_expressions(cmd):
                taken |= expr_functions(e)
    return frozenset(taken & untrusted)


def indirect_targets(sp: SourceProgram, fn: SourceFunction, i: int) -> frozenset[str]:
    """Over-approximation of the untrusted functions an ``icall`` at ``fn#i`` can reach."""
    cmd = fn.body[i]
    if isinstance(cmd.target, FuncAddr):
        return frozenset({cmd.target.name}) & {f.name for f in sp.functions}
    if isinstance(cmd.target, Reg):
        resolved = _reaching_functions(fn, i, cmd.target.index)
        if resolved is not None:
            return resolved
    return address_taken(sp)


def call_graph(sp: SourceProgram) -> nx.DiGraph:
    """Direct and indirect call edges between untrusted functions."""
    graph = nx.DiGraph()
    graph.add_nodes_from(fn.name for fn in sp.functions)
    untrusted = {fn.name for fn in sp.functions}
    for fn in sp.functions:
        for i, cmd in enumerate(fn.body):
            if isinstance(cmd, CallU) and cmd.func in untrusted:
                graph.add_edge(fn.name, cmd.func)
            elif isinstance(cmd, ICall):
                graph.add_edges_from((fn.name, g) for g in indirect_targets(sp, fn, i))
    return graph


def recursive_functions(sp: SourceProgram) -> frozenset[str]:
    """Functions on a call cycle, self-calls included."""
    graph = call_graph(sp)
    found: set[str] = set()
    for component in nx.strongly_connected_components(graph):
        if len(component) > 1:
            found |= component
    found |= {name for name in graph.nodes if graph.has_edge(name, name)}
    return frozenset(found)
