"""Tests for the generator, the noninterference fuzzer and the mutation audit."""

import pytest

from confir.errors import InstrumentError, QualifierError
from confir.harness import (
    GenParams,
    MutationKind,
    NiOutcome,
    classify,
    derive_seed,
    gen_program,
    lightning_check_corpus,
    mutation_audit,
    ni_check,
    ni_check_corpus,
    run_jobs,
    to_jsonl,
    write_atomic,
)
from confir.machine import Configuration, RunResult, Status, builtin_registry
from confir.pipeline import compile_program

FUEL = 2000


class TestGenerator:
    """Tests for random program generation."""

    def test_deterministic(self):
        """The same seed gives the same program."""
        assert gen_program(5) == gen_program(5)
        assert gen_program(5) != gen_program(6)

    def test_lone_main(self):
        """With no helpers the program is a single returning main."""
        sp = gen_program(1, GenParams(max_functions=0))
        assert [f.name for f in sp.functions] == ["main"]

    def test_leaky_declares_trusted(self):
        """Leaky generation declares the leaking builtin."""
        sp = gen_program(1, GenParams(include_leaky=True))
        assert "t_leaky" in [t.name for t in sp.trusted]

    def test_params_bounds(self):
        """Out-of-range generator knobs are refused."""
        with pytest.raises(ValueError):
            GenParams(leak_rate=1.5)


class TestCorpus:
    """Tests for corpus construction and seeds."""

    def test_derive_seed(self):
        """Seeds combine their parts deterministically."""
        assert derive_seed() == 0
        assert derive_seed(1, 2) == 1_000_005
        assert derive_seed(1, 2) != derive_seed(2, 1)

    def test_entries_numbered(self, small_corpus):
        """Corpus entries are numbered in order."""
        assert small_corpus
        assert [e.program_id for e in small_corpus] == list(range(len(small_corpus)))

    def test_most_seeds_compile(self):
        """At least half of the generated programs pass inference and instrumentation."""
        passed = 0
        for index in range(40):
            seed = derive_seed(2024, index)
            try:
                compile_program(gen_program(seed), seed)
            except (QualifierError, InstrumentError):
                continue
            passed += 1
        assert passed >= 20

    def test_forced_leak_never_compiles(self):
        """With every program leaking, inference rejects them all."""
        params = GenParams(leak_rate=1.0)
        for index in range(5):
            with pytest.raises(QualifierError):
                compile_program(gen_program(index, params), index)


class TestNoninterference:
    """Tests for low-equivalent pair runs."""

    def test_corpus_has_no_violations(self, small_corpus):
        """Verified programs never separate low-equivalent states."""
        report = ni_check_corpus(small_corpus, 4, FUEL)
        assert report.programs_tested == len(small_corpus)
        assert len(report.verdicts) == 4 * len(small_corpus)
        assert report.violations() == []

    def test_no_lightning(self, small_corpus):
        """Verified programs never take an ill-formed transition."""
        assert sum(lightning_check_corpus(small_corpus, 4, FUEL)) == 0

    def test_ok_program(self, ok_program):
        """The ok example is noninterferent."""
        report = ni_check(ok_program, 8, FUEL, 3)
        assert report.counts()[NiOutcome.VIOLATION] == 0

    def test_leaky_trusted_function(self, compile_fixture):
        """A trusted function that copies secrets out is caught."""
        program = compile_fixture("leaky.cir")
        report = ni_check(program, 8, FUEL, 3, trusted=builtin_registry(True))
        violations = report.violations()
        assert violations
        assert violations[0].witness is not None
        assert violations[0].detail == "final states differ on public data"

    def test_reports_replay(self, small_corpus):
        """The same corpus and seeds give byte-identical reports."""
        first = to_jsonl(ni_check_corpus(small_corpus[:3], 3, FUEL).verdicts)
        second = to_jsonl(ni_check_corpus(small_corpus[:3], 3, FUEL).verdicts)
        assert first == second


class TestClassify:
    """Tests for pair classification."""

    @staticmethod
    def _result(status):
        return RunResult(status, 1, Configuration(pc=0))

    @pytest.mark.parametrize(
        ("a", "b", "expected"),
        [
            (Status.FINAL, Status.FINAL, NiOutcome.EQUIVALENT),
            (Status.BOTTOM, Status.FINAL, NiOutcome.ONE_BOTTOM),
            (Status.OUT_OF_FUEL, Status.OUT_OF_FUEL, NiOutcome.BOTH_NON_TERM),
            (Status.FINAL, Status.OUT_OF_FUEL, NiOutcome.VIOLATION),
            (Status.LIGHTNING, Status.BOTTOM, NiOutcome.VIOLATION),
        ],
    )
    def test_outcomes(self, ok_program, a, b, expected):
        """Status pairs map to outcomes."""
        outcome, _ = classify(ok_program, self._result(a), self._result(b))
        assert outcome is expected

    def test_public_difference(self, ok_program):
        """Final states that differ in public memory are a violation."""
        r0, r1 = self._result(Status.FINAL), self._result(Status.FINAL)
        r1.final.mu_l[1] = 5
        outcome, detail = classify(ok_program, r0, r1)
        assert outcome is NiOutcome.VIOLATION
        assert "public" in detail


class TestMutationAudit:
    """Tests for the mutation audit."""

    def test_every_mutant_rejected(self, small_corpus):
        """The verifier rejects every applicable mutant."""
        rows, records = mutation_audit(small_corpus)
        assert [row.kind for row in rows] == list(MutationKind)
        assert records
        assert all(record.rejected for record in records)
        for row in rows:
            assert row.applied <= row.programs
            assert row.rejected == row.applied

    def test_kinds_apply_and_hit_their_rule(self, small_corpus):
        """Every kind applies to nearly every program; the targeted rule catches its mutants."""
        rows, _ = mutation_audit(small_corpus)
        for row in rows:
            assert row.applicable_fraction >= 0.9, row.kind
        matched = {row.kind: row.matched_fraction for row in rows}
        for kind in (
            MutationKind.DROP_ASSERT,
            MutationKind.FLIP_MAGIC_TAINT_BIT,
            MutationKind.RETARGET_STORE_REGION,
        ):
            assert matched[kind] >= 0.95, kind


class TestReports:
    """Tests for report helpers."""

    def test_write_atomic(self, tmp_path):
        """Atomic writes replace the file and leave no temporaries."""
        target = tmp_path / "report.jsonl"
        target.write_text("old")
        write_atomic(target, b"new\n")
        assert target.read_bytes() == b"new\n"
        assert [p.name for p in tmp_path.iterdir()] == ["report.jsonl"]

    def test_run_jobs_keeps_order(self):
        """Serial job runs keep input order."""
        assert run_jobs(abs, [-3, 2, -1], 1) == [3, 2, 1]
