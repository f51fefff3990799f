"""The two-point secrecy lattice and the register taint maps built on it."""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from enum import StrEnum

from pydantic import BaseModel, ConfigDict, Field

from .constants import MAX_ARGS, NUM_REGS


class TaintLabel(StrEnum):
    """Secrecy label: L (public) below H (private)."""

    L = "L"
    H = "H"

    def leq(self, other: TaintLabel) -> bool:
        return self is TaintLabel.L or other is TaintLabel.H

    def join(self, other: TaintLabel) -> TaintLabel:
        if self is TaintLabel.H or other is TaintLabel.H:
            return TaintLabel.H
        return TaintLabel.L

    @property
    def bit(self) -> int:
        return 1 if self is TaintLabel.H else 0

    @property
    def qualifier(self) -> str:
        return "private" if self is TaintLabel.H else "public"

    @classmethod
    def from_bit(cls, bit: int) -> TaintLabel:
        return cls.H if bit else cls.L

    @classmethod
    def from_qualifier(cls, word: str) -> TaintLabel:
        if word == "private":
            return cls.H
        if word == "public":
            return cls.L
        raise ValueError(f"unknown qualifier '{word}'")


L = TaintLabel.L
H = TaintLabel.H


def join_all(labels: Iterable[TaintLabel]) -> TaintLabel:
    """Least upper bound of any number of labels (L for none)."""
    for label in labels:
        if label is H:
            return H
    return L


class TaintEnv(BaseModel):
    """A total map from registers to labels, stored as a bitmask (bit r set = H)."""

    model_config = ConfigDict(frozen=True)

    mask: int = Field(default=0, ge=0, lt=1 << NUM_REGS)

    @classmethod
    def of_mask(cls, mask: int) -> TaintEnv:
        return cls.model_construct(mask=mask)

    @classmethod
    def from_labels(cls, labels: Mapping[int, TaintLabel]) -> TaintEnv:
        mask = 0
        for reg, label in labels.items():
            if label is H:
                mask |= 1 << reg
        return cls(mask=mask)

    @classmethod
    def all_low(cls) -> TaintEnv:
        return cls.of_mask(0)

    @classmethod
    def all_high(cls) -> TaintEnv:
        return cls.of_mask((1 << NUM_REGS) - 1)

    def __getitem__(self, reg: int) -> TaintLabel:
        return H if self.mask >> reg & 1 else L

    def set(self, reg: int, label: TaintLabel) -> TaintEnv:
        if label is H:
            return TaintEnv.of_mask(self.mask | 1 << reg)
        return TaintEnv.of_mask(self.mask & ~(1 << reg))

    def set_many(self, regs: Iterable[int], label: TaintLabel) -> TaintEnv:
        bits = 0
        for reg in regs:
            bits |= 1 << reg
        if label is H:
            return TaintEnv.of_mask(self.mask | bits)
        return TaintEnv.of_mask(self.mask & ~bits)

    def join(self, other: TaintEnv) -> TaintEnv:
        return TaintEnv.of_mask(self.mask | other.mask)

    def leq(self, other: TaintEnv) -> bool:
        return self.mask & ~other.mask == 0

    def high_registers(self) -> tuple[int, ...]:
        return tuple(r for r in range(NUM_REGS) if self.mask >> r & 1)

    def __str__(self) -> str:
        return "".join(self[r].value for r in range(NUM_REGS))


class TaintVec5(BaseModel):
    """Expected taints of r1..r4 plus the return register r0.

    Renders MSB first as b1 b2 b3 b4 b0, so a private one-argument function with a
    private result is ``11111``.
    """

    model_config = ConfigDict(frozen=True)

    args: tuple[TaintLabel, TaintLabel, TaintLabel, TaintLabel]
    ret: TaintLabel

    @classmethod
    def from_signature(cls, params: Iterable[TaintLabel], ret: TaintLabel) -> TaintVec5:
        declared = list(params)
        if len(declared) > MAX_ARGS:
            raise ValueError(f"at most {MAX_ARGS} parameters")
        # unused argument registers are conservatively private
        padded = declared + [H] * (MAX_ARGS - len(declared))
        return cls(args=tuple(padded), ret=ret)

    @classmethod
    def from_bits(cls, bits: str) -> TaintVec5:
        if len(bits) != 5 or any(ch not in "01" for ch in bits):
            raise ValueError(f"taint bits must be five 0/1 characters, got '{bits}'")
        labels = [TaintLabel.from_bit(int(ch)) for ch in bits]
        return cls(args=tuple(labels[:4]), ret=labels[4])

    @classmethod
    def from_value(cls, value: int) -> TaintVec5:
        return cls.from_bits(format(value & 0b11111, "05b"))

    def bits(self) -> str:
        return "".join(str(label.bit) for label in (*self.args, self.ret))

    def value(self) -> int:
        return int(self.bits(), 2)

    def arg(self, index: int) -> TaintLabel:
        """Label of argument register r<index> (1-based)."""
        return self.args[index - 1]

    def covers(self, want: TaintVec5) -> bool:
        """True when every argument bit is at least ``want``'s and the return bits agree."""
        return self.ret is want.ret and all(w.leq(a) for a, w in zip(self.args, want.args))
