"""Tests for the command-line interface."""

import json
import shutil
from dataclasses import replace

import pytest

import confir.main as cli
from confir.config import settings
from confir.errors import (
    EXIT_BOTTOM,
    EXIT_OK,
    EXIT_OUT_OF_FUEL,
    EXIT_REJECTED,
    EXIT_USAGE,
    EXIT_VIOLATIONS,
)
from confir.harness import MutationKind, build_corpus, mutate
from confir.main import main

from .test_machine import LOOP_SOURCE


@pytest.fixture
def workdir(tmp_path, fixtures_dir):
    """A scratch directory holding copies of the fixtures."""
    for path in fixtures_dir.glob("*.cir"):
        shutil.copy(path, tmp_path / path.name)
    (tmp_path / "loop.cir").write_text(LOOP_SOURCE)
    return tmp_path


@pytest.fixture
def no_env_seed(monkeypatch):
    monkeypatch.setattr(settings, "seed", None)


def _compile(workdir, name):
    assert main(["compile", str(workdir / name), "--seed", "7"]) == EXIT_OK
    return workdir / name.replace(".cir", ".ccfg")


class TestCompileAndVerify:
    """Tests for compile and verify."""

    def test_compile_then_verify(self, workdir, capsys):
        """A compiled container is written next to its source and verifies."""
        container = _compile(workdir, "ok.cir")
        assert container.exists()
        capsys.readouterr()
        assert main(["verify", str(container)]) == EXIT_OK
        assert capsys.readouterr().out == ""

    def test_explicit_output(self, workdir):
        """-o names the container."""
        target = workdir / "out.ccfg"
        assert main(["compile", str(workdir / "ok.cir"), "-o", str(target)]) == EXIT_OK
        assert target.exists()

    def test_seed_is_echoed(self, workdir, capsys):
        """The seed in use is reported."""
        _compile(workdir, "ok.cir")
        assert "seed=7" in capsys.readouterr().err

    def test_leak_rejected(self, workdir, capsys):
        """An information leak is rejected with its constraint chain."""
        code = main(["compile", str(workdir / "webserver_leak.cir"), "--seed", "1"])
        assert code == EXIT_REJECTED
        err = capsys.readouterr().err
        assert "store of r5" in err
        assert not (workdir / "webserver_leak.ccfg").exists()

    def test_verify_json(self, workdir, capsys):
        """JSON output has one object per diagnostic."""
        container = _compile(workdir, "ok.cir")
        capsys.readouterr()
        assert main(["verify", str(container), "--json"]) == EXIT_OK
        lines = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
        assert lines == []

    def test_missing_file(self, workdir):
        """A missing input is a usage error."""
        assert main(["verify", str(workdir / "absent.ccfg")]) == EXIT_USAGE


class TestRun:
    """Tests for running containers."""

    def test_final(self, workdir, capsys):
        """A terminating run prints the public state."""
        container = _compile(workdir, "ok.cir")
        capsys.readouterr()
        assert main(["run", str(container)]) == EXIT_OK
        out = capsys.readouterr()
        assert "counter=42" in out.out.splitlines()
        assert "status=final" in out.err

    def test_bottom(self, workdir):
        """A failed region check exits with the bottom code."""
        container = _compile(workdir, "peek.cir")
        assert main(["run", str(container), "--entry-args", "r1=0"]) == EXIT_BOTTOM

    def test_global_arguments(self, workdir, capsys):
        """Entry arguments may name global cells."""
        container = _compile(workdir, "peek.cir")
        capsys.readouterr()
        assert main(["run", str(container), "--entry-args", "cell=5", "r1=0"]) == EXIT_BOTTOM
        assert "cell=5" in capsys.readouterr().out

    def test_out_of_fuel(self, workdir):
        """A loop runs out of fuel."""
        container = _compile(workdir, "loop.cir")
        assert main(["run", str(container), "--fuel", "50"]) == EXIT_OUT_OF_FUEL

    def test_bad_entry_argument(self, workdir):
        """Unknown globals in entry arguments are usage errors."""
        container = _compile(workdir, "ok.cir")
        assert main(["run", str(container), "--entry-args", "nowhere=1"]) == EXIT_USAGE


class TestHarnessCommands:
    """Tests for the fuzzing subcommands."""

    def test_ni_check_file(self, workdir, capsys):
        """A verified container has no violations."""
        container = _compile(workdir, "ok.cir")
        capsys.readouterr()
        code = main(["ni-check", str(container), "--seed", "1", "--pairs", "4"])
        assert code == EXIT_OK
        assert "VIOLATION=0" in capsys.readouterr().out.splitlines()

    def test_ni_check_leaky(self, workdir):
        """A leaking trusted function is reported."""
        container = _compile(workdir, "leaky.cir")
        code = main(["ni-check", str(container), "--seed", "1", "--pairs", "4", "--leaky"])
        assert code == EXIT_VIOLATIONS

    def test_ni_check_report(self, workdir):
        """Verdicts are written as JSON lines."""
        container = _compile(workdir, "ok.cir")
        report = workdir / "ni.jsonl"
        main(["ni-check", str(container), "--seed", "1", "--pairs", "3", "-o", str(report)])
        rows = [json.loads(line) for line in report.read_text().splitlines()]
        assert [r["pair_id"] for r in rows] == [0, 1, 2]

    def test_ni_check_corpus_skips_rejected(self, workdir, monkeypatch, capsys):
        """Corpus programs the verifier rejects are reported and never paired."""

        def corpus_with_mutant(seed, count, params=None, scheme=None):
            corpus = build_corpus(seed, count, params, scheme=scheme)
            bad = mutate(corpus[0].program, MutationKind.DROP_ASSERT, 0).program
            corpus[0] = replace(corpus[0], program=bad)
            return corpus

        monkeypatch.setattr(cli, "build_corpus", corpus_with_mutant)
        report = workdir / "ni.jsonl"
        code = main(
            ["ni-check", "--seed", "1", "--programs", "2", "--pairs", "2", "-o", str(report)]
        )
        assert code == EXIT_VIOLATIONS
        captured = capsys.readouterr()
        assert "rejected=1" in captured.out.splitlines()
        assert "REJECTED program=0" in captured.err
        rows = [json.loads(line) for line in report.read_text().splitlines()]
        assert rows
        assert {r["program_id"] for r in rows} == {1}

    def test_seed_required(self, no_env_seed, capsys):
        """Randomized commands refuse to run without a seed."""
        assert main(["mutate-audit", "--programs", "1"]) == EXIT_USAGE
        assert "--seed" in capsys.readouterr().err

    def test_gen(self, capsys):
        """gen prints a parseable program."""
        assert main(["gen", "--seed", "3"]) == EXIT_OK
        assert "fn main()" in capsys.readouterr().out

    def test_bad_generator_knob(self):
        """Out-of-range generator knobs are usage errors."""
        assert main(["gen", "--seed", "3", "--leak-rate", "2"]) == EXIT_USAGE


class TestLayoutCommand:
    """Tests for layout printing."""

    def test_segment(self, capsys):
        """The segment layout reports its geometry in GiB."""
        assert main(["layout", "--scheme", "segment"]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert "scheme=segment" in lines
        assert "stride=40 GiB" in lines
        assert "usable=4 GiB" in lines
        assert "guard=36 GiB" in lines

    def test_json(self, capsys):
        """JSON output is the layout model."""
        assert main(["layout", "--scheme", "mpx", "--json"]) == EXIT_OK
        assert json.loads(capsys.readouterr().out)["scheme"] == "mpx"


def test_usage_errors():
    """Unknown subcommands and options exit with the usage code."""
    assert main(["transmogrify"]) == EXIT_USAGE
    assert main(["layout", "--scheme", "paging"]) == EXIT_USAGE
