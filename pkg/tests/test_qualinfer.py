"""Tests for qualifier inference."""

import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from confir.errors import QualifierError
from confir.ir import (
    BinOp,
    CallU,
    Const,
    Goto,
    H,
    IfThenElse,
    L,
    Ldr,
    Mov,
    Reg,
    Ret,
    TaintEnv,
    parse_source,
)
from confir.qualinfer import (
    ENTRY_SITE,
    Eq,
    Le,
    TaintVar,
    infer_program,
    satisfies,
    solve_constraints,
)
from confir.qualinfer.dataflow import compute_node_taints, transfer

VARS = [TaintVar("f", i, "r5") for i in range(4)]
atoms = st.sampled_from(VARS + [L, H])


def _brute_force(constraints):
    """Least satisfying assignment by enumeration, or None."""
    best = None
    for labels in itertools.product([L, H], repeat=len(VARS)):
        solution = dict(zip(VARS, labels))
        if satisfies(solution, constraints):
            count = sum(1 for label in labels if label is H)
            if best is None or count < best[0]:
                best = (count, solution)
    return None if best is None else best[1]


class TestSolver:
    """Tests for the least-solution solver."""

    def test_chain(self):
        """H flows along a chain of variables."""
        a, b, c = VARS[:3]
        solution = solve_constraints([Le(H, a), Le(a, b)], [c])
        assert solution[a] is H
        assert solution[b] is H
        assert solution[c] is L

    def test_unsatisfiable_witness(self):
        """The witness is a chain of constraints from H to L."""
        a, b = VARS[:2]
        with pytest.raises(QualifierError) as exc:
            solve_constraints([Le(H, a), Eq(a, b), Le(b, L)])
        witness = exc.value.witness
        assert witness[0].a is H
        assert witness[-1].b is L
        assert len(witness) == 3

    @settings(max_examples=200)
    @given(st.lists(st.tuples(st.booleans(), atoms, atoms), max_size=8))
    def test_matches_brute_force(self, raw):
        """The solver finds the least solution whenever one exists."""
        constraints = [Eq(a, b) if eq else Le(a, b) for eq, a, b in raw]
        expected = _brute_force(constraints)
        if expected is None:
            with pytest.raises(QualifierError):
                solve_constraints(constraints, VARS)
            return
        solution = solve_constraints(constraints, VARS)
        assert {v: solution[v] for v in VARS} == expected

    @settings(max_examples=200)
    @given(
        st.lists(st.tuples(st.booleans(), atoms, atoms), max_size=8),
        st.tuples(st.booleans(), atoms, atoms),
    )
    def test_monotone(self, raw, extra):
        """Adding a constraint never lowers a label of the least solution."""
        constraints = [Eq(a, b) if eq else Le(a, b) for eq, a, b in raw]
        eq, a, b = extra
        try:
            before = solve_constraints(constraints, VARS)
            after = solve_constraints([*constraints, Eq(a, b) if eq else Le(a, b)], VARS)
        except QualifierError:
            return
        assert all(before[v].leq(after[v]) for v in VARS)


class TestInference:
    """Tests for whole-program inference."""

    def test_webserver_leak_is_rejected(self, source_of):
        """Copying the password into the public log is a qualifier error."""
        with pytest.raises(QualifierError) as exc:
            infer_program(source_of("webserver_leak.cir"))
        chain = " ".join(str(c) for c in exc.value.witness)
        assert "store of r5" in chain
        assert "handle_req" in chain

    def test_fixtures_infer(self, source_of):
        """The well-typed fixtures infer without warnings."""
        for name in ("add_incr.cir", "ok.cir", "peek.cir", "leaky.cir"):
            result = infer_program(source_of(name))
            assert result.warnings == []

    def test_entry_taints(self, source_of):
        """incr starts with a public pointer, a private value and public callee-save registers."""
        result = infer_program(source_of("add_incr.cir"))
        gamma = result.node_taints["incr"][0][0]
        assert gamma[1] is L
        assert gamma[2] is H
        assert gamma[3] is H
        assert gamma[0] is H
        assert all(gamma[r] is L for r in range(10, 16))

    def test_store_region_follows_value(self, source_of):
        """A store of a private value through a plain register is a private access."""
        result = infer_program(source_of("add_incr.cir"))
        assert result.access_regions[("incr", 2)] is H

    def test_load_region_is_least(self, source_of):
        """A load nothing forces private stays public."""
        result = infer_program(source_of("peek.cir"))
        assert result.access_regions[("main", 0)] is L

    def test_entry_variables(self, source_of):
        """Entry definitions of parameters take their declared labels."""
        result = infer_program(source_of("add_incr.cir"))
        assert result.solution[TaintVar("incr", ENTRY_SITE, "r1")] is L
        assert result.solution[TaintVar("incr", ENTRY_SITE, "r2")] is H

    def test_private_return_to_public(self):
        """Returning a private value from a public function is rejected."""
        sp = parse_source(
            "global s region=private size=1\n"
            "fn main() -> public {\n  r0 = load [@s]\n  ret\n}\n"
        )
        with pytest.raises(QualifierError) as exc:
            infer_program(sp)
        assert "return value of main" in str(exc.value)


class TestImplicitFlows:
    """Tests for branches on private data."""

    SOURCE = (
        "global s region=private size=1\n"
        "fn main() -> public {\n"
        "  r5 = load [@s]\n"
        "  if r5 goto a else b\n"
        "a:\n"
        "  r0 = 1\n"
        "  ret\n"
        "b:\n"
        "  r0 = 0\n"
        "  ret\n"
        "}\n"
    )

    def test_strict_rejects(self):
        """Strict mode rejects a branch on private data."""
        with pytest.raises(QualifierError) as exc:
            infer_program(parse_source(self.SOURCE))
        assert "branch condition" in str(exc.value)

    def test_warn_mode_reports(self):
        """Warn mode accepts the program and reports the branch."""
        result = infer_program(parse_source(self.SOURCE), strict=False)
        assert len(result.warnings) == 1
        assert result.warnings[0].function == "main"
        assert result.warnings[0].index == 1


DATAFLOW_REGS = (0, 1, 2, 5, 10, 14)


def _body_successors(commands, i):
    cmd = commands[i]
    if isinstance(cmd, Ret):
        return []
    if isinstance(cmd, Goto):
        return [cmd.target.value]
    if isinstance(cmd, IfThenElse):
        return sorted({cmd.then_pc.value, cmd.else_pc.value})
    return [i + 1] if i + 1 < len(commands) else []


@st.composite
def small_bodies(draw):
    """Bodies of at most six commands with in-range jumps, plus analysis inputs."""
    size = draw(st.integers(1, 6))
    registers = st.sampled_from(DATAFLOW_REGS)
    targets = st.integers(0, size - 1).map(lambda i: Const(value=i))
    operands = st.one_of(
        registers.map(lambda r: Reg(index=r)),
        st.integers(0, 9).map(lambda v: Const(value=v)),
    )
    exprs = st.one_of(
        operands,
        st.builds(lambda a, b: BinOp(op="+", left=a, right=b), operands, operands),
    )
    command = st.one_of(
        st.builds(lambda r, e: Mov(reg=r, src=e), registers, exprs),
        st.builds(lambda r, e: Ldr(reg=r, addr=e), registers, exprs),
        st.builds(lambda t: Goto(target=t), targets),
        st.builds(
            lambda c, t, e: IfThenElse(cond=c, then_pc=t, else_pc=e), exprs, targets, targets
        ),
        st.just(Ret()),
        st.just(CallU(func="g")),
    )
    commands = draw(st.lists(command, min_size=size, max_size=size))
    regions = {
        i: draw(st.sampled_from([L, H])) for i, cmd in enumerate(commands) if isinstance(cmd, Ldr)
    }
    entry = TaintEnv.of_mask(draw(st.integers(0, (1 << 16) - 1)))
    call_ret = draw(st.sampled_from([L, H]))
    restore = draw(st.booleans())
    return commands, regions, entry, call_ret, restore


class TestDataflow:
    """Tests for the per-node taint analysis."""

    @settings(max_examples=200)
    @given(small_bodies())
    def test_covers_every_path(self, case):
        """Every register taint reachable along some path is within the recorded pre-state."""
        commands, regions, entry, call_ret, restore = case
        successors = [_body_successors(commands, i) for i in range(len(commands))]
        recorded = compute_node_taints(
            commands, successors, entry, regions=regions,
            call_return=lambda cmd: call_ret, restore_callee_save=restore,
        )

        # every (index, taints) state a path from the entry can produce
        reached: dict[int, int] = {}
        seen = {(0, entry.mask)}
        pending = [(0, entry.mask)]
        while pending:
            i, mask = pending.pop()
            reached[i] = reached.get(i, 0) | mask
            out = transfer(
                commands[i], TaintEnv.of_mask(mask), regions.get(i, L), call_ret,
                restore_callee_save=restore,
            )
            for s in successors[i]:
                if (s, out.mask) not in seen:
                    seen.add((s, out.mask))
                    pending.append((s, out.mask))

        for i, mask in reached.items():
            assert mask & ~recorded[i][0].mask == 0
        if len(reached) == len(commands):
            assert all(recorded[i][0].mask == reached[i] for i in reached)

    @settings(max_examples=100)
    @given(small_bodies())
    def test_post_state_is_transfer(self, case):
        """The recorded post-state is the command's effect on the recorded pre-state."""
        commands, regions, entry, call_ret, restore = case
        successors = [_body_successors(commands, i) for i in range(len(commands))]
        recorded = compute_node_taints(
            commands, successors, entry, regions=regions,
            call_return=lambda cmd: call_ret, restore_callee_save=restore,
        )
        for i, (gamma, gamma_out) in enumerate(recorded):
            expected = transfer(
                commands[i], gamma, regions.get(i, L), call_ret, restore_callee_save=restore
            )
            assert gamma_out == expected
