"""
confir - command-line entry point.

Wires the workflow: parse -> infer -> instrument -> serialize -> verify -> run/fuzz.
"""

import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from confir import __version__
from confir.config import settings
from confir.confverify import verify
from confir.errors import (
    EXIT_BOTTOM,
    EXIT_INTERNAL,
    EXIT_LIGHTNING,
    EXIT_OK,
    EXIT_OUT_OF_FUEL,
    EXIT_REJECTED,
    EXIT_USAGE,
    EXIT_VIOLATIONS,
    ConfigError,
    ConfirError,
    QualifierError,
)
from confir.harness import (
    CorpusEntry,
    GenParams,
    build_corpus,
    gen_program,
    lightning_check_corpus,
    mutation_audit,
    ni_check,
    ni_check_corpus,
    to_jsonl,
    write_atomic,
    write_jsonl,
)
from confir.instrument import GIB, compute_layout
from confir.ir import TaintLabel, deserialize_cfg, format_source, serialize_cfg
from confir.ir.constants import NUM_REGS
from confir.ir.program import Program
from confir.machine import Machine, Status, builtin_registry, observable_dump
from confir.pipeline import compile_source

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
)
logger = logging.getLogger("confir")

RUN_EXIT_CODES = {
    Status.FINAL: EXIT_OK,
    Status.BOTTOM: EXIT_BOTTOM,
    Status.LIGHTNING: EXIT_LIGHTNING,
    Status.OUT_OF_FUEL: EXIT_OUT_OF_FUEL,
}


def _out(line: str = "") -> None:
    print(line, file=sys.stdout)


def _err(line: str) -> None:
    print(line, file=sys.stderr)


# -----------------------------------------------------------------------------
# Option helpers
# -----------------------------------------------------------------------------


def _seed(args: argparse.Namespace, required: bool = True) -> int:
    """``--seed``, then ``CONFIR_SEED``; echoed so every run can be replayed."""
    seed = args.seed if args.seed is not None else settings.seed
    if seed is None:
        if required:
            raise ConfigError(f"{args.command} needs --seed (or CONFIR_SEED)")
        seed = 0
    _err(f"seed={seed}")
    return seed


def _strict(args: argparse.Namespace) -> bool:
    return False if getattr(args, "warn_implicit", False) else settings.strict


def _read_program(path: str) -> Program:
    return deserialize_cfg(Path(path).read_bytes())


def _parse_entry_args(
    program: Program, items: Sequence[str]
) -> tuple[dict[int, int], dict[int, int], dict[int, int]]:
    """
    Split ``k=v`` items into register values and public/private memory cells.

    Keys are registers (``r3``), globals (``buf``, meaning cell 0) or global
    cells (``buf[3]``). Values accept any Python integer literal.
    """
    registers: dict[int, int] = {}
    public: dict[int, int] = {}
    private: dict[int, int] = {}
    for item in items:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"entry argument '{item}' is not of the form key=value")
        try:
            value = int(raw, 0)
        except ValueError as exc:
            raise ConfigError(f"entry argument '{item}' has a non-integer value") from exc

        if key.startswith("r") and key[1:].isdigit():
            reg = int(key[1:])
            if reg >= NUM_REGS:
                raise ConfigError(f"no register '{key}'")
            registers[reg] = value
            continue

        name, index = key, 0
        if key.endswith("]") and "[" in key:
            name, _, rest = key[:-1].partition("[")
            if not rest.isdigit():
                raise ConfigError(f"bad cell index in '{key}'")
            index = int(rest)
        cell = program.global_cell(name)
        if cell is None:
            raise ConfigError(f"no global named '{name}'")
        if index >= cell.size:
            raise ConfigError(f"'{key}' is outside '{name}' (size {cell.size})")
        memory = private if cell.region is TaintLabel.H else public
        memory[cell.base + index] = value
    return registers, public, private


def _gen_params(args: argparse.Namespace) -> GenParams:
    return GenParams(
        max_functions=args.functions,
        max_statements=args.statements,
        leak_rate=args.leak_rate,
        include_leaky=getattr(args, "leaky", False),
    )


def _verified(corpus: list[CorpusEntry]) -> tuple[list[CorpusEntry], list[CorpusEntry]]:
    """Split a corpus into entries the verifier accepts and entries it rejects."""
    accepted, rejected = [], []
    for entry in corpus:
        (accepted if verify(entry.program).accepted else rejected).append(entry)
    for entry in rejected:
        _err(f"REJECTED program={entry.program_id} seed={entry.program_seed}")
    return accepted, rejected


# -----------------------------------------------------------------------------
# Subcommands
# -----------------------------------------------------------------------------


def cmd_compile(args: argparse.Namespace) -> int:
    seed = _seed(args, required=False)
    source = Path(args.input)
    try:
        compiled = compile_source(
            source.read_text(encoding="utf-8"), seed, scheme=args.scheme, strict=_strict(args)
        )
    except QualifierError as exc:
        _err(f"{source}: private data reaches a public position")
        for constraint in exc.witness:
            _err(f"  {constraint}")
        return exc.exit_code
    for warning in compiled.inference.warnings:
        _err(f"{source}: warning: {warning}")
    output = Path(args.output) if args.output else source.with_suffix(".ccfg")
    write_atomic(output, serialize_cfg(compiled.program))
    logger.info(f"wrote {output}")
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    verdict = verify(_read_program(args.input), strict=_strict(args))
    if args.json:
        sys.stdout.write(to_jsonl(verdict.diagnostics))
    else:
        for diagnostic in verdict.diagnostics:
            _out(str(diagnostic))
    logger.info(f"{args.input}: {'accepted' if verdict.accepted else 'rejected'}")
    return EXIT_OK if verdict.accepted else EXIT_REJECTED


def cmd_run(args: argparse.Namespace) -> int:
    program = _read_program(args.input)
    machine = Machine(program, builtin_registry(args.leaky))
    registers, public, private = _parse_entry_args(program, args.entry_args)
    config = machine.initial(registers, public, private, args.trusted_seed)
    fuel = args.fuel if args.fuel is not None else settings.fuel
    result = machine.run(config, fuel)
    for line in observable_dump(program, result.final):
        _out(line)
    reason = f" ({result.reason})" if result.reason else ""
    _err(f"status={result.status} steps={result.steps}{reason}")
    return RUN_EXIT_CODES[result.status]


def cmd_ni_check(args: argparse.Namespace) -> int:
    seed = _seed(args)
    fuel = args.fuel if args.fuel is not None else settings.fuel
    pairs = args.pairs if args.pairs is not None else settings.pairs_per_program
    rejected: list[CorpusEntry] = []
    if args.input:
        program = _read_program(args.input)
        verdict = verify(program)
        if not verdict.accepted:
            for diagnostic in verdict.rejects():
                _err(str(diagnostic))
            return EXIT_REJECTED
        report = ni_check(program, pairs, fuel, seed, trusted=builtin_registry(args.leaky))
    else:
        count = args.programs if args.programs is not None else settings.corpus_size
        corpus = build_corpus(seed, count, _gen_params(args), scheme=args.scheme)
        checked, rejected = _verified(corpus)
        _out(f"rejected={len(rejected)}")
        report = ni_check_corpus(checked, pairs, fuel, _jobs(args), include_leaky=args.leaky)
    if args.out:
        write_jsonl(args.out, report.verdicts)
    for outcome, n in report.counts().items():
        _out(f"{outcome}={n}")
    for v in report.violations():
        _err(f"VIOLATION program={v.program_id} pair={v.pair_id} seed={v.pair_seed}: {v.detail}")
    failed = report.violations() or rejected
    return EXIT_VIOLATIONS if failed else EXIT_OK


def cmd_mutate_audit(args: argparse.Namespace) -> int:
    seed = _seed(args)
    count = args.programs if args.programs is not None else settings.corpus_size
    corpus = build_corpus(seed, count, _gen_params(args), scheme=args.scheme)
    rows, records = mutation_audit(corpus, _jobs(args))
    if args.out:
        write_jsonl(args.out, records)
    for row in rows:
        _out(
            f"{row.kind}: applied={row.applied}/{row.programs} "
            f"rejected={row.rejected} matched={row.matched}"
        )
    accepted = [r for r in records if not r.rejected]
    for r in accepted:
        _err(f"ACCEPTED program={r.program_id} kind={r.kind} pc={r.pc}: {r.description}")
    return EXIT_VIOLATIONS if accepted else EXIT_OK


def cmd_fuzz(args: argparse.Namespace) -> int:
    seed = _seed(args)
    fuel = args.fuel if args.fuel is not None else settings.fuel
    count = args.programs if args.programs is not None else settings.corpus_size
    pairs = args.pairs if args.pairs is not None else settings.pairs_per_program
    runs = args.runs if args.runs is not None else settings.runs_per_program
    corpus = build_corpus(seed, count, _gen_params(args), scheme=args.scheme)

    checked, rejected = _verified(corpus)
    report = ni_check_corpus(checked, pairs, fuel, _jobs(args))
    lightning = lightning_check_corpus(checked, runs, fuel, _jobs(args))
    if args.out:
        write_jsonl(args.out, report.verdicts)

    _out(f"programs={len(corpus)}")
    _out(f"rejected={len(rejected)}")
    for outcome, n in report.counts().items():
        _out(f"{outcome}={n}")
    _out(f"lightning={sum(lightning)}")
    failed = rejected or report.violations() or any(lightning)
    return EXIT_VIOLATIONS if failed else EXIT_OK


def cmd_layout(args: argparse.Namespace) -> int:
    layout = compute_layout(args.scheme or settings.scheme)
    if args.json:
        _out(layout.model_dump_json())
        return EXIT_OK

    def fmt(cells: int) -> str:
        if cells % GIB == 0:
            return f"{cells // GIB} GiB"
        return str(cells)

    _out(f"scheme={layout.scheme}")
    for name in ("public_base", "public_size", "private_base", "private_size"):
        _out(f"{name}={fmt(getattr(layout, name))}")
    _out(f"stride={fmt(layout.stride)}")
    _out(f"usable={fmt(layout.public_size)}")
    _out(f"guard={fmt(layout.guard_between)}")
    _out(f"low_guard={fmt(layout.guard_low)}")
    _out(f"stack_offset={fmt(layout.stack_offset)}")
    _out(f"stack_size={fmt(layout.stack_size)}")
    _out(f"public_stack_base={fmt(layout.public_stack_base)}")
    _out(f"private_stack_base={fmt(layout.private_stack_base)}")
    _out(f"trusted_base={fmt(layout.trusted_base)}")
    return EXIT_OK


def cmd_gen(args: argparse.Namespace) -> int:
    text = format_source(gen_program(_seed(args), _gen_params(args)))
    if args.output:
        write_atomic(Path(args.output), text.encode("utf-8"))
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _jobs(args: argparse.Namespace) -> int:
    return args.jobs if args.jobs is not None else settings.jobs


# -----------------------------------------------------------------------------
# Argument parsing
# -----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    noise = common.add_mutually_exclusive_group()
    noise.add_argument("-v", "--verbose", action="store_true", help="Log at DEBUG")
    noise.add_argument("-q", "--quiet", action="store_true", help="Log warnings only")

    seeded = argparse.ArgumentParser(add_help=False)
    seeded.add_argument(
        "--seed", type=int, default=None, help="Random seed (default: CONFIR_SEED env var)"
    )
    seeded.add_argument(
        "--scheme",
        choices=["mpx", "segment"],
        default=None,
        help=f"Partitioning scheme (default: {settings.scheme})",
    )

    corpus = argparse.ArgumentParser(add_help=False)
    corpus.add_argument("--programs", type=int, default=None, help="Corpus size")
    corpus.add_argument("--functions", type=int, default=3, help="Helper functions per program")
    corpus.add_argument("--statements", type=int, default=10, help="Statements per function")
    corpus.add_argument("--leak-rate", type=float, default=0.1, help="Injected leak probability")
    corpus.add_argument("--jobs", type=int, default=None, help="Worker processes")
    corpus.add_argument("--fuel", type=int, default=None, help="Step budget per run")
    corpus.add_argument("-o", "--out", default=None, help="JSON-lines report file")

    parser = argparse.ArgumentParser(
        prog="confir", description="confir - confidentiality-preserving IR toolchain"
    )
    parser.add_argument("--version", action="version", version=f"confir {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", parents=[common, seeded], help="Compile .cir to .ccfg")
    p.add_argument("input", help="Source program (.cir)")
    p.add_argument("-o", "--output", default=None, help="Output container (default: .ccfg)")
    p.add_argument("--warn-implicit", action="store_true", help="Warn on branch-on-private")
    p.set_defaults(handler=cmd_compile)

    p = sub.add_parser("verify", parents=[common], help="Verify an instrumented container")
    p.add_argument("input", help="Instrumented program (.ccfg)")
    p.add_argument("--json", action="store_true", help="Diagnostics as JSON lines")
    p.add_argument("--warn-implicit", action="store_true", help="Warn on branch-on-private")
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser("run", parents=[common], help="Run a container on the abstract machine")
    p.add_argument("input", help="Instrumented program (.ccfg)")
    p.add_argument(
        "--entry-args", nargs="*", default=[], metavar="K=V", help="Initial registers and cells"
    )
    p.add_argument("--fuel", type=int, default=None, help=f"Step budget (default: {settings.fuel})")
    p.add_argument("--trusted-seed", type=int, default=0, help="Seed of t_read_secret")
    p.add_argument("--leaky", action="store_true", help="Register the leaking builtin")
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser(
        "ni-check", parents=[common, seeded, corpus], help="Two-run noninterference fuzzing"
    )
    p.add_argument("input", nargs="?", default=None, help="Container (default: a fresh corpus)")
    p.add_argument("--pairs", type=int, default=None, help="Pairs per program")
    p.add_argument("--leaky", action="store_true", help="Register and generate the leaking builtin")
    p.set_defaults(handler=cmd_ni_check)

    p = sub.add_parser(
        "mutate-audit", parents=[common, seeded, corpus], help="Verify mutants of a corpus"
    )
    p.set_defaults(handler=cmd_mutate_audit)

    p = sub.add_parser(
        "fuzz", parents=[common, seeded, corpus], help="Completeness, NI and no-lightning runs"
    )
    p.add_argument("--pairs", type=int, default=None, help="Pairs per program")
    p.add_argument("--runs", type=int, default=None, help="Lightning runs per program")
    p.set_defaults(handler=cmd_fuzz)

    p = sub.add_parser("layout", parents=[common], help="Print the memory layout")
    p.add_argument("--scheme", choices=["mpx", "segment"], default=None)
    p.add_argument("--json", action="store_true", help="Layout as one JSON object")
    p.set_defaults(handler=cmd_layout)

    p = sub.add_parser("gen", parents=[common, seeded], help="Print a generated program")
    p.add_argument("--functions", type=int, default=3, help="Helper functions")
    p.add_argument("--statements", type=int, default=10, help="Statements per function")
    p.add_argument("--leak-rate", type=float, default=0.1, help="Injected leak probability")
    p.add_argument("--leaky", action="store_true", help="Generate calls to the leaking builtin")
    p.add_argument("-o", "--output", default=None, help="Output file (default: stdout)")
    p.set_defaults(handler=cmd_gen)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Parse ``argv``, run one subcommand and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK

    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    elif args.quiet:
        logging.getLogger().setLevel(logging.WARNING)

    try:
        return args.handler(args)
    except ConfirError as exc:
        _err(f"error: {exc.message}")
        return exc.exit_code
    except ValueError as exc:
        # pydantic validation of command-line values (generator knobs)
        _err(f"error: {exc}")
        return EXIT_USAGE
    except OSError as exc:
        _err(f"error: {exc}")
        return EXIT_USAGE
    except Exception:
        logger.exception("internal error")
        return EXIT_INTERNAL


def run():
    """Console-script entry point."""
    sys.exit(main())
