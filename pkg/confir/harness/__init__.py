"""Empirical validation: program generation, noninterference fuzzing and mutation audits."""

from .corpus import CorpusEntry, build_corpus, derive_seed
from .generator import GenParams, gen_program
from .mutations import (
    TARGET_RULES,
    AuditRow,
    Mutant,
    MutantRecord,
    MutationKind,
    audit_program,
    mutate,
    mutation_audit,
)
from .noninterference import (
    NiOutcome,
    NiReport,
    NiVerdict,
    classify,
    lightning_check,
    lightning_check_corpus,
    low_equiv,
    ni_check,
    ni_check_corpus,
    random_state,
    run_pair,
    vary_private,
)
from .reports import run_jobs, to_jsonl, write_atomic, write_jsonl

__all__ = [
    "GenParams",
    "gen_program",
    "CorpusEntry",
    "build_corpus",
    "derive_seed",
    "NiOutcome",
    "NiVerdict",
    "NiReport",
    "low_equiv",
    "random_state",
    "vary_private",
    "classify",
    "run_pair",
    "ni_check",
    "ni_check_corpus",
    "lightning_check",
    "lightning_check_corpus",
    "MutationKind",
    "Mutant",
    "TARGET_RULES",
    "mutate",
    "AuditRow",
    "MutantRecord",
    "audit_program",
    "mutation_audit",
    "write_atomic",
    "write_jsonl",
    "to_jsonl",
    "run_jobs",
]
