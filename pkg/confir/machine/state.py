"""Machine configurations and step outcomes."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import StrEnum

from confir.ir.constants import NUM_REGS


@dataclass
class Configuration:
    """
    One machine state: trusted memory, the two untrusted memories, registers,
    the lock-step stacks and the program counter.

    Memories are sparse; a cell that was never written reads as 0. Which
    addresses belong to which memory is decided by the program's layout, not
    by the keys present here.
    """

    pc: int
    rho: list[int] = field(default_factory=lambda: [0] * NUM_REGS)
    mu_l: dict[int, int] = field(default_factory=dict)
    mu_h: dict[int, int] = field(default_factory=dict)
    tau: dict[int, int] = field(default_factory=dict)
    sigma_l: list[int] = field(default_factory=list)
    sigma_h: list[int] = field(default_factory=list)

    def copy(self) -> Configuration:
        return Configuration(
            pc=self.pc,
            rho=list(self.rho),
            mu_l=dict(self.mu_l),
            mu_h=dict(self.mu_h),
            tau=dict(self.tau),
            sigma_l=list(self.sigma_l),
            sigma_h=list(self.sigma_h),
        )


def same_cells(a: dict[int, int], b: dict[int, int]) -> bool:
    """Pointwise equality of two sparse memories (missing cells are 0)."""
    return all(a.get(k, 0) == b.get(k, 0) for k in a.keys() | b.keys())


# -----------------------------------------------------------------------------
# Outcomes
# -----------------------------------------------------------------------------


@dataclass
class Step:
    config: Configuration


@dataclass
class Bottom:
    """A failed assert or trusted-function precondition; the run halts safely."""

    reason: str = ""


@dataclass
class Lightning:
    """An ill-formed transition: bad memory access, bad jump or bad return."""

    reason: str = ""


@dataclass
class Final:
    config: Configuration


Outcome = Step | Bottom | Lightning | Final


class Status(StrEnum):
    FINAL = "final"
    BOTTOM = "bottom"
    LIGHTNING = "lightning"
    OUT_OF_FUEL = "out_of_fuel"


@dataclass
class RunResult:
    status: Status
    steps: int
    final: Configuration
    reason: str = ""
