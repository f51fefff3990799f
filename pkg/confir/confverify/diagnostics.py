"""Verifier outcomes: rule identifiers, diagnostics and verdicts."""

from __future__ import annotations

from enum import StrEnum

from pydantic import BaseModel, ConfigDict, Field, model_validator


class RuleId(StrEnum):
    # one per command form
    MOV = "MOV"
    LDR = "LDR"
    STR = "STR"
    CALL = "CALL"
    ICALL = "ICALL"
    RET = "RET"
    GOTO = "GOTO"
    IF = "IF"
    ASSERT = "ASSERT"
    # edges and recomputed taints
    FLOW = "FLOW"
    # structural side conditions
    NON_CONSTANT_JUMP = "NON_CONSTANT_JUMP"
    JUMP_ESCAPES_FUNCTION = "JUMP_ESCAPES_FUNCTION"
    EDGE_MISMATCH = "EDGE_MISMATCH"
    ICALL_TO_TRUSTED = "ICALL_TO_TRUSTED"
    TRUST_MISMATCH = "TRUST_MISMATCH"
    UNKNOWN_FUNCTION = "UNKNOWN_FUNCTION"
    MAGIC_NOT_UNIQUE = "MAGIC_NOT_UNIQUE"
    MISSING_RET_SITE_MAGIC = "MISSING_RET_SITE_MAGIC"
    STRAY_MAGIC = "STRAY_MAGIC"
    ENTRY_LAYOUT = "ENTRY_LAYOUT"


class Severity(StrEnum):
    REJECT = "REJECT"
    WARNING = "WARNING"


class Diagnostic(BaseModel):
    """One finding; ``pc`` is -1 for whole-program findings."""

    model_config = ConfigDict(frozen=True)

    pc: int
    rule: RuleId
    message: str
    severity: Severity = Severity.REJECT

    def sort_key(self) -> tuple[int, str, str]:
        return (self.pc, self.rule.value, self.message)

    def __str__(self) -> str:
        pc = "-" if self.pc < 0 else str(self.pc)
        return f"{self.severity} pc={pc} rule={self.rule} {self.message}"


class Verdict(BaseModel):
    accepted: bool
    diagnostics: list[Diagnostic] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_consistent(self) -> Verdict:
        rejected = any(d.severity is Severity.REJECT for d in self.diagnostics)
        if self.accepted == rejected:
            raise ValueError("accepted must hold exactly when nothing is rejected")
        return self

    @classmethod
    def of(cls, diagnostics: list[Diagnostic]) -> Verdict:
        ordered = sorted(set(diagnostics), key=Diagnostic.sort_key)
        accepted = not any(d.severity is Severity.REJECT for d in ordered)
        return cls(accepted=accepted, diagnostics=ordered)

    def rejects(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity is Severity.REJECT]

    def rules_fired(self) -> set[RuleId]:
        return {d.rule for d in self.rejects()}
