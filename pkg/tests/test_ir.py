"""Tests for the lattice, taint maps, magic sequences and memory layout values."""

import pytest
from hypothesis import given
from hypothesis import strategies as st
from pydantic import ValidationError

from confir.ir import H, L, MagicKind, MagicSeq, MemoryLayout, TaintEnv, TaintLabel, TaintVec5
from confir.ir.constants import NUM_REGS

labels = st.sampled_from([L, H])
masks = st.integers(min_value=0, max_value=(1 << NUM_REGS) - 1)


class TestTaintLabel:
    """Tests for the two-point lattice."""

    def test_order(self):
        """L is below H and nothing else is ordered."""
        assert L.leq(L)
        assert L.leq(H)
        assert H.leq(H)
        assert not H.leq(L)

    @given(labels, labels)
    def test_join_is_least_upper_bound(self, a, b):
        """The join sits above both operands and below every common upper bound."""
        j = a.join(b)
        assert a.leq(j) and b.leq(j)
        for c in (L, H):
            if a.leq(c) and b.leq(c):
                assert j.leq(c)

    @given(labels, labels, labels)
    def test_join_laws(self, a, b, c):
        """Join is commutative, associative and idempotent."""
        assert a.join(b) is b.join(a)
        assert a.join(b).join(c) is a.join(b.join(c))
        assert a.join(a) is a

    def test_qualifiers(self):
        """Source qualifiers map onto labels and back."""
        assert TaintLabel.from_qualifier("private") is H
        assert TaintLabel.from_qualifier("public") is L
        assert H.qualifier == "private"
        with pytest.raises(ValueError):
            TaintLabel.from_qualifier("secret")


class TestTaintEnv:
    """Tests for register taint maps."""

    def test_set_and_get(self):
        """Setting one register leaves the others alone."""
        env = TaintEnv.all_low().set(3, H)
        assert env[3] is H
        assert all(env[r] is L for r in range(NUM_REGS) if r != 3)
        assert env.set(3, L) == TaintEnv.all_low()

    @given(masks, masks)
    def test_join_is_pointwise(self, a, b):
        """Join of two maps is the pointwise join and bounds both."""
        ea, eb = TaintEnv(mask=a), TaintEnv(mask=b)
        joined = ea.join(eb)
        assert ea.leq(joined) and eb.leq(joined)
        for r in range(NUM_REGS):
            assert joined[r] is ea[r].join(eb[r])

    def test_mask_out_of_range(self):
        """Masks wider than the register file are rejected."""
        with pytest.raises(ValidationError):
            TaintEnv(mask=1 << NUM_REGS)

    def test_str(self):
        """Rendering lists r0 first."""
        assert str(TaintEnv.all_low().set(0, H)) == "H" + "L" * (NUM_REGS - 1)


class TestTaintVec5:
    """Tests for the five taint bits of a call site."""

    def test_private_single_argument(self):
        """A private one-argument function with a private result is 11111."""
        assert TaintVec5.from_signature([H], H).bits() == "11111"

    def test_public_pointer_argument(self):
        """A public first argument clears the leading bit."""
        assert TaintVec5.from_signature([L, H], H).bits() == "01111"

    def test_unused_arguments_are_private(self):
        """Padding registers are H even for a public-only signature."""
        vec = TaintVec5.from_signature([L], L)
        assert vec.bits() == "01110"

    @given(st.integers(min_value=0, max_value=31))
    def test_from_value(self, value):
        """Bit strings and integer values agree."""
        assert TaintVec5.from_value(value).value() == value

    def test_covers(self):
        """A callee covers a call whose arguments are no more private than declared."""
        callee = TaintVec5.from_bits("11111")
        assert callee.covers(TaintVec5.from_bits("01111"))
        assert not TaintVec5.from_bits("01111").covers(callee)
        # return bits must agree exactly
        assert not callee.covers(TaintVec5.from_bits("11110"))

    def test_bad_bits(self):
        """Only five 0/1 characters are accepted."""
        with pytest.raises(ValueError):
            TaintVec5.from_bits("1111")


class TestMagicSeq:
    """Tests for magic sequences."""

    def test_ret_site_bits(self):
        """A private return site renders with four bits of padding."""
        assert MagicSeq.ret_site(5, H).bits() == "00001"

    def test_encode(self):
        """The encoding is the prefix followed by the five suffix bits."""
        seq = MagicSeq.call_site(0x1234, TaintVec5.from_bits("01111"))
        assert seq.encode() == 0x1234 << 5 | 0b01111

    def test_decode_roundtrip(self):
        """Decoding an encoding gives the same sequence."""
        seq = MagicSeq.ret_site(99, L)
        assert MagicSeq.decode(MagicKind.RET_SITE, seq.encode()) == seq

    def test_ret_padding_must_be_zero(self):
        """Return-site magic with a set padding bit is invalid."""
        with pytest.raises(ValueError):
            MagicSeq.decode(MagicKind.RET_SITE, 7 << 5 | 0b00011)

    def test_form_is_checked(self):
        """A call-site sequence cannot carry a return bit."""
        with pytest.raises(ValidationError):
            MagicSeq(kind=MagicKind.CALL_SITE, prefix=1, ret_taint=H)

    def test_prefix_width(self):
        """Prefixes are limited to 59 bits."""
        with pytest.raises(ValidationError):
            MagicSeq.ret_site(1 << 59, L)


class TestMemoryLayout:
    """Tests for layout validation."""

    def test_overlapping_regions_rejected(self):
        """A private region starting inside the public one is invalid."""
        with pytest.raises(ValidationError):
            MemoryLayout(
                scheme="mpx",
                public_base=16,
                public_size=100,
                private_base=50,
                private_size=100,
                stack_offset=10,
                stack_size=10,
                guard_low=16,
                guard_between=0,
                trusted_base=1000,
                trusted_size=10,
            )

    def test_region_of(self):
        """Addresses map to the region containing them and nothing else."""
        layout = MemoryLayout(
            scheme="mpx",
            public_base=16,
            public_size=100,
            private_base=116,
            private_size=100,
            stack_offset=20,
            stack_size=10,
            guard_low=16,
            guard_between=0,
            trusted_base=300,
            trusted_size=10,
        )
        assert layout.region_of(16) is L
        assert layout.region_of(115) is L
        assert layout.region_of(116) is H
        assert layout.region_of(215) is H
        assert layout.region_of(216) is None
        assert layout.region_of(0) is None
        assert layout.stride == 100
