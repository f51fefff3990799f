"""Tests for the interpreter and the trusted builtins."""

import pytest

from confir.errors import UnknownTrustedFunction
from confir.harness import MutationKind, mutate
from confir.instrument import compute_layout
from confir.ir import BinOp, Const, UnOp
from confir.ir.constants import NUM_REGS, WORD_MASK
from confir.machine import (
    DECLASSIFIED_VALUE,
    MAX_BUFFER,
    Configuration,
    Machine,
    Status,
    Step,
    eval_expr,
    observable_dump,
    run,
    step,
    t_copy_pub,
    t_declassify_const,
    t_read_secret,
)
from confir.pipeline import compile_source

from .test_instrument import ICALL_SOURCE, SPILL_SOURCE

LOOP_SOURCE = "fn main() -> public {\ntop:\n  goto top\n}\n"


def _eval(e):
    return eval_expr([0] * NUM_REGS, {}, e)


class TestEvaluate:
    """Tests for expression evaluation."""

    def test_division_by_zero(self):
        """Division and remainder by zero give 0."""
        assert _eval(BinOp(op="/", left=Const(value=5), right=Const(value=0))) == 0
        assert _eval(BinOp(op="%", left=Const(value=5), right=Const(value=0))) == 0

    def test_wraparound(self):
        """Arithmetic wraps at 64 bits."""
        assert _eval(BinOp(op="+", left=Const(value=WORD_MASK), right=Const(value=1))) == 0
        assert _eval(UnOp(op="-", operand=Const(value=1))) == WORD_MASK

    def test_comparison(self):
        """Comparisons give 0 or 1."""
        assert _eval(BinOp(op="<", left=Const(value=2), right=Const(value=3))) == 1
        assert _eval(BinOp(op="==", left=Const(value=2), right=Const(value=3))) == 0


class TestRuns:
    """Tests for whole runs of compiled programs."""

    def test_ok_program(self, ok_program):
        """The ok example terminates with its public results visible."""
        machine = Machine(ok_program)
        result = machine.run(machine.initial(trusted_seed=1), 1000)
        assert result.status is Status.FINAL
        dump = observable_dump(ok_program, result.final)
        assert "counter=42" in dump
        assert "r0=42" in dump

    def test_add_incr(self, add_incr):
        """incr stores add(5) through its pointer argument."""
        machine = Machine(add_incr)
        result = machine.run(machine.initial(), 1000)
        assert result.status is Status.FINAL
        box = add_incr.global_cell("box")
        assert result.final.mu_h[box.base] == 6

    def test_public_callee_save_not_saved_for_caller(self):
        """A callee that overwrites a public r10 without restoring it changes the caller's r10."""
        source = (
            "global out region=public size=1\n"
            "fn g() -> public {\n  r10 = 7\n  r0 = 0\n  ret\n}\n"
            "fn main() -> public {\n  r10 = 1\n  call g()\n"
            "  store [@out], r10\n  r0 = 0\n  ret\n}\n"
        )
        program = compile_source(source, 5).program
        result = run(program, Machine(program).initial(), 1000)
        assert result.status is Status.FINAL
        assert result.final.mu_l[program.global_cell("out").base] == 7

    def test_spill_and_icall_run(self):
        """Spilled registers and indirect calls run to completion."""
        spill = compile_source(SPILL_SOURCE, 5).program
        assert run(spill, Machine(spill).initial(), 1000).status is Status.FINAL
        icall = compile_source(ICALL_SOURCE, 5).program
        result = run(icall, Machine(icall).initial(), 1000)
        assert result.status is Status.FINAL
        assert "r0=3" in observable_dump(icall, result.final)

    def test_region_check_halts(self, compile_fixture):
        """A pointer outside public memory stops at the region check."""
        program = compile_fixture("peek.cir")
        machine = Machine(program)
        result = machine.run(machine.initial(registers={1: 0}), 100)
        assert result.status is Status.BOTTOM
        assert "assert" in result.reason

    def test_checked_load(self, compile_fixture):
        """A pointer into the public cell loads its value."""
        program = compile_fixture("peek.cir")
        cell = program.global_cell("cell")
        machine = Machine(program)
        config = machine.initial(registers={1: cell.base}, public={cell.base: 9})
        result = machine.run(config, 100)
        assert result.status is Status.FINAL
        dump = observable_dump(program, result.final)
        assert dump[0] == "cell=9"
        assert "r0=9" in dump

    def test_unchecked_access_is_lightning(self, compile_fixture):
        """Without its region check the same access is ill-formed."""
        program = mutate(compile_fixture("peek.cir"), MutationKind.DROP_ASSERT, 0).program
        machine = Machine(program)
        result = machine.run(machine.initial(registers={1: 0}), 100)
        assert result.status is Status.LIGHTNING

    def test_out_of_fuel(self):
        """A loop exhausts its fuel."""
        program = compile_source(LOOP_SOURCE, 5).program
        result = run(program, Machine(program).initial(), 25)
        assert result.status is Status.OUT_OF_FUEL
        assert result.steps == 25

    def test_step_copies(self, ok_program):
        """The module-level step leaves its input untouched."""
        config = Machine(ok_program).initial()
        before = config.copy()
        outcome = step(ok_program, config)
        assert isinstance(outcome, Step)
        assert outcome.config.pc == config.pc + 1
        assert config == before


class TestTrusted:
    """Tests for the builtin trusted library."""

    @pytest.fixture
    def layout(self):
        return compute_layout("mpx")

    def test_read_secret_deterministic(self, layout):
        """Secrets are drawn from the trusted seed and a draw counter."""
        configs = []
        for _ in range(2):
            config = Configuration(pc=0)
            config.tau[layout.trusted_base] = 11
            config.rho[1], config.rho[2] = layout.private_base, 3
            assert t_read_secret(layout, config)
            configs.append(config)
        assert configs[0].mu_h == configs[1].mu_h
        assert len(configs[0].mu_h) == 3

    def test_read_secret_range(self, layout):
        """Oversized or public destinations are refused."""
        config = Configuration(pc=0)
        config.rho[1], config.rho[2] = layout.private_base, MAX_BUFFER + 1
        assert not t_read_secret(layout, config)
        config.rho[1], config.rho[2] = layout.public_base, 1
        assert not t_read_secret(layout, config)

    def test_declassify(self, layout):
        """The declassifier writes its fixed value to public memory."""
        config = Configuration(pc=0)
        config.rho[1] = layout.public_base
        assert t_declassify_const(layout, config)
        assert config.mu_l[layout.public_base] == DECLASSIFIED_VALUE

    def test_copy_pub_stays_public(self, layout):
        """Public copies refuse private sources."""
        config = Configuration(pc=0)
        config.rho[1], config.rho[2], config.rho[3] = layout.public_base, layout.private_base, 1
        assert not t_copy_pub(layout, config)

    def test_register_unknown(self, ok_program):
        """Only declared trusted functions can be given an implementation."""
        machine = Machine(ok_program, {})
        machine.register_trusted("t_read_secret", t_read_secret)
        with pytest.raises(UnknownTrustedFunction):
            machine.register_trusted("double", t_read_secret)

    def test_missing_implementation(self, ok_program):
        """A trusted call with no implementation is ill-formed."""
        machine = Machine(ok_program, {})
        result = machine.run(machine.initial(), 1000)
        assert result.status is Status.LIGHTNING
