"""Memory-region geometry and placed global cells."""

from __future__ import annotations

from enum import StrEnum

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .taint import TaintLabel


class Scheme(StrEnum):
    MPX = "mpx"
    SEGMENT = "segment"


class MemoryLayout(BaseModel):
    """Where the public, private and trusted regions live.

    Addresses are abstract cell indices. ``[public_base, public_end)`` and
    ``[private_base, private_end)`` are the untrusted regions; the public and
    private stacks each span ``stack_size`` cells and sit ``stack_offset`` apart.
    """

    model_config = ConfigDict(frozen=True)

    scheme: Scheme
    public_base: int = Field(ge=0)
    public_size: int = Field(gt=0)
    private_base: int = Field(ge=0)
    private_size: int = Field(gt=0)
    stack_offset: int = Field(gt=0)
    stack_size: int = Field(gt=0)
    guard_low: int = Field(ge=0)
    guard_between: int = Field(ge=0)
    trusted_base: int = Field(ge=0)
    trusted_size: int = Field(gt=0)

    @property
    def public_end(self) -> int:
        return self.public_base + self.public_size

    @property
    def private_end(self) -> int:
        return self.private_base + self.private_size

    @property
    def trusted_end(self) -> int:
        return self.trusted_base + self.trusted_size

    @property
    def stride(self) -> int:
        """Distance between the starts of the public and private regions."""
        return self.private_base - self.public_base

    @property
    def public_stack_base(self) -> int:
        return self.public_end - self.stack_size

    @property
    def private_stack_base(self) -> int:
        return self.public_stack_base + self.stack_offset

    def base_of(self, region: TaintLabel) -> int:
        return self.private_base if region is TaintLabel.H else self.public_base

    def end_of(self, region: TaintLabel) -> int:
        return self.private_end if region is TaintLabel.H else self.public_end

    def contains(self, region: TaintLabel, addr: int) -> bool:
        return self.base_of(region) <= addr < self.end_of(region)

    def region_of(self, addr: int) -> TaintLabel | None:
        if self.public_base <= addr < self.public_end:
            return TaintLabel.L
        if self.private_base <= addr < self.private_end:
            return TaintLabel.H
        return None

    def in_trusted(self, addr: int) -> bool:
        return self.trusted_base <= addr < self.trusted_end

    @model_validator(mode="after")
    def _check_geometry(self) -> MemoryLayout:
        if self.public_base < self.guard_low:
            raise ValueError("public region overlaps the low guard")
        if self.private_base < self.public_end + self.guard_between:
            raise ValueError("private region overlaps the public region or its guard")
        if self.trusted_base < self.private_end:
            raise ValueError("trusted memory overlaps the private region")
        if self.stack_size > self.public_size:
            raise ValueError("public stack does not fit in the public region")
        if not self.private_base <= self.private_stack_base <= self.private_end - self.stack_size:
            raise ValueError("private stack does not fit in the private region")
        return self


class GlobalCell(BaseModel):
    """A named global placed in one of the untrusted regions."""

    model_config = ConfigDict(frozen=True)

    name: str
    region: TaintLabel
    base: int = Field(ge=0)
    size: int = Field(gt=0)

    @property
    def end(self) -> int:
        return self.base + self.size

    def contains(self, addr: int) -> bool:
        return self.base <= addr < self.end
