"""Least-solution solver for two-point lattice constraints."""

from __future__ import annotations

import logging
from collections.abc import Iterable

import networkx as nx

from confir.errors import QualifierError
from confir.ir.taint import H, L, TaintLabel

from .constraints import Constraint, Eq, Le, TaintVar

logger = logging.getLogger(__name__)


def constraint_graph(constraints: Iterable[Constraint]) -> nx.DiGraph:
    """Flow graph with an edge ``a -> b`` for every ``a ⊑ b`` (both ways for ``=``).

    Each edge keeps the first constraint that introduced it under ``"constraint"``.
    """
    graph = nx.DiGraph()
    graph.add_nodes_from((H, L))
    for c in constraints:
        pairs = [(c.a, c.b)]
        if isinstance(c, Eq):
            pairs.append((c.b, c.a))
        for a, b in pairs:
            if not graph.has_edge(a, b):
                graph.add_edge(a, b, constraint=c)
    return graph


def solve_constraints(
    constraints: Iterable[Constraint], variables: Iterable[TaintVar] = ()
) -> dict[TaintVar, TaintLabel]:
    """Least assignment satisfying every constraint.

    A variable is H exactly when H flows to it; everything else stays L.

    Args:
        constraints: ``Le``/``Eq`` constraints over variables and labels.
        variables: Extra variables to include even if no constraint mentions them.

    Returns:
        The least solution.

    Raises:
        QualifierError: H flows to L. ``witness`` is the shortest chain of
            constraints from H to L.
    """
    constraints = list(constraints)
    graph = constraint_graph(constraints)
    graph.add_nodes_from(variables)

    raised = nx.descendants(graph, H)
    if L in raised:
        path = nx.shortest_path(graph, H, L)
        witness = [graph.edges[a, b]["constraint"] for a, b in zip(path, path[1:])]
        logger.debug(f"unsatisfiable: witness of length {len(witness)}")
        raise QualifierError(witness)

    solution = {
        node: (H if node in raised else L) for node in graph.nodes if isinstance(node, TaintVar)
    }
    logger.debug(f"solved {len(solution)} variables, {len(raised)} private")
    return solution


def satisfies(solution: dict[TaintVar, TaintLabel], constraints: Iterable[Constraint]) -> bool:
    """True when ``solution`` meets every constraint."""

    def value(atom) -> TaintLabel:
        return atom if isinstance(atom, TaintLabel) else solution.get(atom, L)

    for c in constraints:
        a, b = value(c.a), value(c.b)
        if isinstance(c, Le) and not a.leq(b):
            return False
        if isinstance(c, Eq) and a is not b:
            return False
    return True
