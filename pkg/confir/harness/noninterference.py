"""
Two-run noninterference and no-lightning fuzzing.

A pair of runs starts from configurations that agree on everything public and
differ in private registers, private memory and the trusted secret seed. Both
runs are classified termination-insensitively: a run that halts in bottom never
counts against the program, and two runs that both exhaust their fuel are not a
violation either.
"""

from __future__ import annotations

import logging
import random
from collections.abc import Mapping
from enum import StrEnum

from pydantic import BaseModel

from confir.ir.codec import deserialize_cfg, serialize_cfg
from confir.ir.constants import NUM_REGS
from confir.ir.program import Node, Program
from confir.ir.taint import TaintLabel
from confir.machine import (
    Configuration,
    Machine,
    RunResult,
    Status,
    TrustedImpl,
    builtin_registry,
    observable_dump,
    same_cells,
)
from confir.machine.trusted import SECRET_SEED_CELL

from .corpus import CorpusEntry, derive_seed
from .reports import run_jobs

logger = logging.getLogger(__name__)

VALUE_BITS = 16
SECRET_SEED_BITS = 32


class NiOutcome(StrEnum):
    EQUIVALENT = "Equivalent"
    ONE_BOTTOM = "OneBottom"
    BOTH_NON_TERM = "BothNonTerm"
    VIOLATION = "VIOLATION"


class NiVerdict(BaseModel):
    """Classification of one pair; replayable from its seeds and fuel."""

    program_id: int
    pair_id: int
    program_seed: int
    pair_seed: int
    fuel: int
    outcome: NiOutcome
    statuses: tuple[Status, Status]
    detail: str = ""
    witness: tuple[list[str], list[str]] | None = None


class NiReport(BaseModel):
    programs_tested: int
    pairs_per_program: int
    verdicts: list[NiVerdict]

    def violations(self) -> list[NiVerdict]:
        return [v for v in self.verdicts if v.outcome is NiOutcome.VIOLATION]

    def counts(self) -> dict[str, int]:
        counts = {outcome.value: 0 for outcome in NiOutcome}
        for v in self.verdicts:
            counts[v.outcome.value] += 1
        return counts


# -----------------------------------------------------------------------------
# Configurations
# -----------------------------------------------------------------------------


def _node_at(program: Program, pc: int) -> Node | None:
    for info in program.untrusted():
        for node in info.body:
            if node.pc == pc:
                return node
    return None


def low_equiv(program: Program, s0: Configuration, s1: Configuration) -> bool:
    """
    True when the two configurations agree on the program counter, the public
    stack, all of public memory and every register that is public before the
    node at ``pc``.
    """
    if s0.pc != s1.pc or s0.sigma_l != s1.sigma_l:
        return False
    if not same_cells(s0.mu_l, s1.mu_l):
        return False
    node = _node_at(program, s0.pc)
    for reg in range(NUM_REGS):
        public = node is None or node.gamma_in[reg] is TaintLabel.L
        if public and s0.rho[reg] != s1.rho[reg]:
            return False
    return True


def random_state(machine: Machine, rng: random.Random) -> Configuration:
    """Initial configuration with random registers, globals and secret seed."""
    program = machine.program
    registers = {r: rng.getrandbits(VALUE_BITS) for r in range(NUM_REGS)}
    public: dict[int, int] = {}
    private: dict[int, int] = {}
    for cell in program.globals:
        memory = private if cell.region is TaintLabel.H else public
        for addr in range(cell.base, cell.end):
            memory[addr] = rng.getrandbits(VALUE_BITS)
    return machine.initial(registers, public, private, rng.getrandbits(SECRET_SEED_BITS))


def vary_private(machine: Machine, config: Configuration, rng: random.Random) -> Configuration:
    """A low-equivalent copy of ``config`` with fresh private inputs."""
    other = config.copy()
    node = machine.nodes[config.pc]
    for reg in node.gamma_in.high_registers():
        other.rho[reg] = rng.getrandbits(VALUE_BITS)
    for addr in other.mu_h:
        other.mu_h[addr] = rng.getrandbits(VALUE_BITS)
    other.tau[machine.layout.trusted_base + SECRET_SEED_CELL] = rng.getrandbits(SECRET_SEED_BITS)
    return other


# -----------------------------------------------------------------------------
# Pairs
# -----------------------------------------------------------------------------


def classify(program: Program, r0: RunResult, r1: RunResult) -> tuple[NiOutcome, str]:
    statuses = {r0.status, r1.status}
    if Status.LIGHTNING in statuses:
        return NiOutcome.VIOLATION, "ill-formed transition"
    if Status.BOTTOM in statuses:
        return NiOutcome.ONE_BOTTOM, ""
    if statuses == {Status.OUT_OF_FUEL}:
        return NiOutcome.BOTH_NON_TERM, ""
    if statuses == {Status.FINAL}:
        if low_equiv(program, r0.final, r1.final):
            return NiOutcome.EQUIVALENT, ""
        return NiOutcome.VIOLATION, "final states differ on public data"
    return NiOutcome.VIOLATION, "one run terminated and the other did not"


def run_pair(
    machine: Machine, pair_seed: int, fuel: int
) -> tuple[NiOutcome, RunResult, RunResult, str]:
    """Build a low-equivalent pair from ``pair_seed``, run both and classify."""
    rng = random.Random(pair_seed)
    s0 = random_state(machine, rng)
    s1 = vary_private(machine, s0, rng)
    r0 = machine.run(s0, fuel)
    r1 = machine.run(s1, fuel)
    outcome, detail = classify(machine.program, r0, r1)
    return outcome, r0, r1, detail


def ni_check(
    program: Program,
    n_pairs: int,
    fuel: int,
    seed: int,
    *,
    program_id: int = 0,
    trusted: Mapping[str, TrustedImpl] | None = None,
) -> NiReport:
    """
    Run ``n_pairs`` low-equivalent pairs of ``program``.

    Args:
        program: A verified program
        n_pairs: Pairs to run
        fuel: Step budget per run
        seed: Program seed; pair seeds are derived from it
        program_id: Identifier recorded in the verdicts
        trusted: Trusted implementations (default: the builtins satisfying the
            no-leak assumption)

    Returns:
        One verdict per pair, in pair order
    """
    machine = Machine(program, trusted if trusted is not None else builtin_registry())
    verdicts = []
    for pair_id in range(n_pairs):
        pair_seed = derive_seed(seed, pair_id)
        outcome, r0, r1, detail = run_pair(machine, pair_seed, fuel)
        witness = None
        if outcome is NiOutcome.VIOLATION:
            witness = (observable_dump(program, r0.final), observable_dump(program, r1.final))
            logger.warning(f"program {program_id} pair {pair_id}: {detail}")
        verdicts.append(
            NiVerdict(
                program_id=program_id,
                pair_id=pair_id,
                program_seed=seed,
                pair_seed=pair_seed,
                fuel=fuel,
                outcome=outcome,
                statuses=(r0.status, r1.status),
                detail=detail,
                witness=witness,
            )
        )
    return NiReport(programs_tested=1, pairs_per_program=n_pairs, verdicts=verdicts)


def lightning_check(
    program: Program,
    n_runs: int,
    fuel: int,
    seed: int,
    trusted: Mapping[str, TrustedImpl] | None = None,
) -> int:
    """Number of runs from random initial states that end in an ill-formed transition."""
    machine = Machine(program, trusted if trusted is not None else builtin_registry())
    count = 0
    for run_id in range(n_runs):
        rng = random.Random(derive_seed(seed, run_id))
        result = machine.run(random_state(machine, rng), fuel)
        if result.status is Status.LIGHTNING:
            logger.debug(f"run {run_id}: {result.reason}")
            count += 1
    return count


# -----------------------------------------------------------------------------
# Corpus-level runs
# -----------------------------------------------------------------------------


def _ni_job(job: tuple[int, int, bytes, int, int, bool]) -> NiReport:
    program_id, program_seed, data, n_pairs, fuel, include_leaky = job
    return ni_check(
        deserialize_cfg(data),
        n_pairs,
        fuel,
        program_seed,
        program_id=program_id,
        trusted=builtin_registry(include_leaky),
    )


def _lightning_job(job: tuple[int, bytes, int, int]) -> int:
    program_seed, data, n_runs, fuel = job
    return lightning_check(deserialize_cfg(data), n_runs, fuel, program_seed)


def ni_check_corpus(
    corpus: list[CorpusEntry],
    n_pairs: int,
    fuel: int,
    jobs: int = 1,
    include_leaky: bool = False,
) -> NiReport:
    """``ni_check`` over a corpus; verdicts are ordered by program and pair."""
    work = [
        (e.program_id, e.program_seed, serialize_cfg(e.program), n_pairs, fuel, include_leaky)
        for e in corpus
    ]
    reports = run_jobs(_ni_job, work, jobs)
    verdicts = sorted(
        (v for report in reports for v in report.verdicts),
        key=lambda v: (v.program_id, v.pair_id),
    )
    merged = NiReport(programs_tested=len(corpus), pairs_per_program=n_pairs, verdicts=verdicts)
    logger.info(f"noninterference over {len(corpus)} programs: {merged.counts()}")
    return merged


def lightning_check_corpus(
    corpus: list[CorpusEntry], n_runs: int, fuel: int, jobs: int = 1
) -> list[int]:
    """Lightning counts per corpus program, in corpus order."""
    work = [(e.program_seed, serialize_cfg(e.program), n_runs, fuel) for e in corpus]
    return run_jobs(_lightning_job, work, jobs)
