"""Tests for the .cir parser and printer."""

import pytest

from confir.errors import SourceSyntaxError, UnresolvedName
from confir.harness import GenParams, gen_program
from confir.ir import (
    BinOp,
    CallU,
    Const,
    GlobalRef,
    Goto,
    H,
    IfThenElse,
    L,
    Mov,
    Reg,
    Str,
    format_source,
    parse_source,
)


class TestParseFixtures:
    """Tests against the hand-written fixtures."""

    def test_add_incr(self, source_of):
        """Signatures, bodies and the default entry are recovered."""
        sp = source_of("add_incr.cir")
        assert [f.name for f in sp.functions] == ["add", "incr", "main"]
        assert sp.entry == "main"
        incr = sp.function("incr")
        assert incr.signature.params == (L, H)
        assert incr.signature.ret is H
        assert incr.body[0] == Mov(reg=10, src=Reg(index=1))
        assert incr.body[1] == CallU(func="add", args=(Reg(index=2),))
        assert incr.body[2] == Str(reg=0, addr=Reg(index=10))

    def test_globals_and_trusted(self, source_of):
        """Global and trusted declarations keep their regions and signatures."""
        sp = source_of("ok.cir")
        assert {(g.name, g.region, g.size) for g in sp.globals} == {
            ("counter", L, 1),
            ("secret", H, 2),
        }
        assert [t.name for t in sp.trusted] == ["t_read_secret"]
        store = sp.function("main").body[3]
        assert store.addr == BinOp(op="+", left=GlobalRef(name="secret"), right=Const(value=1))


class TestParseStatements:
    """Tests for individual statement forms."""

    def test_labels_resolve_to_indices(self):
        """Jump labels become body indices."""
        sp = parse_source(
            "fn main() -> public {\n"
            "  r10 = 0\n"
            "top:\n"
            "  if r10 < 3 goto body else done\n"
            "body:\n"
            "  r10 = r10 + 1\n"
            "  goto top\n"
            "done:\n"
            "  r0 = r10\n"
            "  ret\n"
            "}\n"
        )
        body = sp.function("main").body
        assert body[1] == IfThenElse(
            cond=BinOp(op="<", left=Reg(index=10), right=Const(value=3)),
            then_pc=Const(value=2),
            else_pc=Const(value=4),
        )
        assert body[3] == Goto(target=Const(value=1))

    def test_semicolons_separate_statements(self):
        """A one-line body parses like a multi-line one."""
        sp = parse_source("fn main() -> public { r0 = 1; ret }")
        assert len(sp.function("main").body) == 2

    def test_precedence(self):
        """Multiplication binds tighter than addition."""
        sp = parse_source("fn main() -> public { r0 = 1 + 2 * 3; ret }")
        src = sp.function("main").body[0].src
        assert src.op == "+"
        assert src.right.op == "*"

    def test_negative_literal_wraps(self):
        """A negated literal is folded into a 64-bit constant."""
        sp = parse_source("fn main() -> public { r0 = -1; ret }")
        assert sp.function("main").body[0].src == Const(value=(1 << 64) - 1)


class TestParseErrors:
    """Tests for rejected sources."""

    def test_missing_expression(self):
        """The error points at the line with the incomplete statement."""
        with pytest.raises(SourceSyntaxError) as exc:
            parse_source("fn main() -> public {\n  r0 =\n  ret\n}\n")
        assert exc.value.line == 2

    def test_unknown_function(self):
        """Calling an undeclared function names it."""
        with pytest.raises(UnresolvedName) as exc:
            parse_source("fn main() -> public {\n  call nowhere()\n  ret\n}\n")
        assert exc.value.symbol == "nowhere"
        assert exc.value.line == 2

    def test_unknown_global(self):
        """Referencing an undeclared global names it."""
        with pytest.raises(UnresolvedName) as exc:
            parse_source("fn main() -> public { r0 = load [@nothing]; ret }")
        assert exc.value.symbol == "nothing"

    def test_unknown_label(self):
        """A jump to a missing label is unresolved."""
        with pytest.raises(UnresolvedName):
            parse_source("fn main() -> public { goto away }")

    def test_trusted_needs_tcall(self):
        """Trusted functions cannot be invoked with call."""
        with pytest.raises(SourceSyntaxError):
            parse_source(
                "trusted fn t_read_secret(public r1, public r2) -> public\n"
                "fn main() -> public { call t_read_secret(0, 0); ret }\n"
            )

    def test_arity(self):
        """Calls must pass every declared parameter."""
        with pytest.raises(SourceSyntaxError):
            parse_source(
                "fn f(public r1) -> public { r0 = r1; ret }\n"
                "fn main() -> public { call f(); ret }\n"
            )

    def test_body_must_end_in_jump_or_ret(self):
        """Falling off the end of a function is a syntax error."""
        with pytest.raises(SourceSyntaxError):
            parse_source("fn main() -> public { r0 = 1 }")

    def test_parameter_registers_in_order(self):
        """Parameters are r1, r2, ... in order."""
        with pytest.raises(SourceSyntaxError):
            parse_source("fn f(public r2) -> public { ret }")

    def test_unexpected_character(self):
        """Characters outside the grammar are rejected with a position."""
        with pytest.raises(SourceSyntaxError) as exc:
            parse_source("fn main() -> public { r0 = 1 $ 2; ret }")
        assert exc.value.line == 1


class TestPrinter:
    """Tests for rendering sources back to text."""

    def test_fixture_reparses(self, source_of):
        """Printing a parsed fixture gives text with the same bodies."""
        sp = source_of("add_incr.cir")
        again = parse_source(format_source(sp))
        assert [f.body for f in again.functions] == [f.body for f in sp.functions]
        assert again.globals == sp.globals

    @pytest.mark.parametrize("seed", [1, 2, 3, 4, 5])
    def test_generated_programs_reparse(self, seed):
        """Generated programs survive a print/parse cycle."""
        sp = gen_program(seed, GenParams(max_functions=3))
        again = parse_source(format_source(sp))
        assert [f.body for f in again.functions] == [f.body for f in sp.functions]
        assert [f.signature for f in again.functions] == [f.signature for f in sp.functions]
        assert again.trusted == sp.trusted
