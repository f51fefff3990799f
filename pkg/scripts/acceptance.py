#!/usr/bin/env python3
"""Full-size acceptance runs over generated corpora and the hand-written fixtures."""

from __future__ import annotations

import argparse
import time
from collections.abc import Callable
from pathlib import Path

from confir.confverify import verify
from confir.errors import EXIT_OK, EXIT_VIOLATIONS, InstrumentError, QualifierError
from confir.harness import (
    MutationKind,
    build_corpus,
    derive_seed,
    gen_program,
    lightning_check_corpus,
    mutate,
    mutation_audit,
    ni_check,
    ni_check_corpus,
    to_jsonl,
)
from confir.instrument import GIB, compute_layout
from confir.machine import Machine, Status, builtin_registry
from confir.pipeline import compile_program, compile_source

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
MATCH_KINDS = (
    MutationKind.DROP_ASSERT,
    MutationKind.FLIP_MAGIC_TAINT_BIT,
    MutationKind.RETARGET_STORE_REGION,
)


class CriterionFailed(Exception):
    """An acceptance criterion did not hold."""


def _check(condition: object, detail: object) -> None:
    if not condition:
        raise CriterionFailed(str(detail))


def _fixture(name: str, seed: int):
    return compile_source((FIXTURES / name).read_text(encoding="utf-8"), seed).program


def worked_example(args) -> str:
    program = _fixture("add_incr.cir", args.seed)
    bits = {name: program.functions[name].magic.bits() for name in ("add", "incr")}
    _check(bits == {"add": "11111", "incr": "01111"}, bits)
    incr = program.functions["incr"].body
    sites = [n.magic.bits() for n in incr if n.magic is not None]
    _check(sites == ["00001"], sites)
    return "add=11111 incr=01111 site=00001"


def segment_constants(args) -> str:
    layout = compute_layout("segment")
    _check(layout.public_size == 4 * GIB, layout.public_size)
    _check(layout.guard_between == 36 * GIB, layout.guard_between)
    _check(layout.stride == 40 * GIB, layout.stride)
    _check(layout.guard_low >= 2 * GIB, layout.guard_low)
    return "usable=4 GiB guard=36 GiB stride=40 GiB"


def generator_pass_rate(args) -> str:
    passed = 0
    for index in range(args.completeness_programs):
        seed = derive_seed(args.seed, index)
        try:
            compile_program(gen_program(seed), seed)
        except (QualifierError, InstrumentError):
            continue
        passed += 1
    _check(2 * passed >= args.completeness_programs, f"{passed} seeds compiled")
    return f"{passed}/{args.completeness_programs} seeds compiled"


def completeness(args) -> str:
    corpus = build_corpus(args.seed, args.completeness_programs)
    rejected = [e.program_seed for e in corpus if not verify(e.program).accepted]
    _check(len(corpus) >= args.completeness_programs, len(corpus))
    _check(not rejected, rejected[:5])
    return f"{len(corpus)} programs accepted"


def mutation_soundness(args) -> str:
    rows, records = mutation_audit(args.corpus, args.jobs)
    accepted = [r for r in records if not r.rejected]
    _check(not accepted, [(r.program_seed, r.kind) for r in accepted[:5]])
    for row in rows:
        _check(row.applicable_fraction >= 0.9, (row.kind, row.applicable_fraction))
        if row.kind in MATCH_KINDS:
            _check(row.matched_fraction >= 0.95, (row.kind, row.matched_fraction))
    args.reports["mutants"] = to_jsonl(records)
    return f"{len(records)} mutants rejected"


def noninterference(args) -> str:
    report = ni_check_corpus(args.corpus, args.pairs, args.fuel, args.jobs)
    _check(not report.violations(), report.violations()[:3])
    args.reports["ni"] = to_jsonl(report.verdicts)
    return f"{report.counts()}"


def no_lightning(args) -> str:
    counts = lightning_check_corpus(args.corpus, args.runs, args.fuel, args.jobs)
    _check(sum(counts) == 0, sum(counts))
    args.reports["lightning"] = ",".join(map(str, counts))
    return f"{len(counts) * args.runs} runs"


def negative_controls(args) -> str:
    try:
        _fixture("webserver_leak.cir", args.seed)
    except QualifierError as exc:
        _check(exc.witness, "empty witness")
    else:
        raise CriterionFailed("web-server leak compiled")

    leaky = _fixture("leaky.cir", args.seed)
    report = ni_check(leaky, args.pairs, args.fuel, args.seed, trusted=builtin_registry(True))
    _check(report.violations(), "t_leaky went unnoticed")

    peek = mutate(_fixture("peek.cir", args.seed), MutationKind.DROP_ASSERT, 0).program
    machine = Machine(peek)
    result = machine.run(machine.initial(registers={1: 0}), args.fuel)
    _check(result.status is Status.LIGHTNING, result.status)
    return "leak rejected, t_leaky caught, unguarded load reaches lightning"


def determinism(args) -> str:
    first = dict(args.reports)
    args.reports.clear()
    args.corpus = build_corpus(args.seed, args.programs)
    mutation_soundness(args)
    noninterference(args)
    no_lightning(args)
    _check(args.reports == first, sorted(k for k in first if first[k] != args.reports.get(k)))
    return "reports byte-identical"


CRITERIA: list[tuple[str, Callable]] = [
    ("worked example", worked_example),
    ("segment constants", segment_constants),
    ("generator pass rate", generator_pass_rate),
    ("compile-then-verify completeness", completeness),
    ("mutation soundness", mutation_soundness),
    ("noninterference", noninterference),
    ("no lightning", no_lightning),
    ("negative controls", negative_controls),
    ("determinism", determinism),
]


def main() -> int:
    p = argparse.ArgumentParser(description="Run the confir acceptance criteria")
    p.add_argument("--seed", type=int, default=1, help="Corpus seed")
    p.add_argument("--programs", type=int, default=200, help="Corpus size")
    p.add_argument("--completeness-programs", type=int, default=500)
    p.add_argument("--pairs", type=int, default=20, help="Pairs per program")
    p.add_argument("--runs", type=int, default=10, help="Lightning runs per program")
    p.add_argument("--fuel", type=int, default=10_000, help="Step budget per run")
    p.add_argument("--jobs", type=int, default=1, help="Worker processes")
    args = p.parse_args()

    args.reports = {}
    args.corpus = build_corpus(args.seed, args.programs)

    failed = 0
    for number, (title, check) in enumerate(CRITERIA, start=1):
        start = time.perf_counter()
        try:
            detail = check(args)
            verdict = "PASS"
        except CriterionFailed as exc:
            detail = str(exc)
            verdict = "FAIL"
            failed += 1
        print(f"{verdict} {number}. {title} ({time.perf_counter() - start:.1f}s): {detail}")
    return EXIT_VIOLATIONS if failed else EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
