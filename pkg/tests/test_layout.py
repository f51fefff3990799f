"""Tests for memory layouts and global placement."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from confir.errors import ConfigError
from confir.instrument import (
    GIB,
    MPX_MAX_STACK_OFFSET,
    SEGMENT_GUARD,
    SEGMENT_STRIDE,
    SEGMENT_USABLE,
    compute_layout,
    place_globals,
    spill_slot,
)
from confir.ir import GlobalDecl, H, L, Scheme
from confir.ir.constants import CALLEE_SAVE_REGS


class TestSegmentLayout:
    """Tests for the segment scheme constants."""

    def test_constants(self):
        """Segments are 4 GiB usable, 36 GiB guard, 40 GiB apart."""
        assert SEGMENT_USABLE == 4 * GIB
        assert SEGMENT_GUARD == 36 * GIB
        assert SEGMENT_STRIDE == 40 * GIB

    def test_geometry(self):
        """The computed layout follows the segment constants."""
        layout = compute_layout("segment")
        assert layout.scheme is Scheme.SEGMENT
        assert layout.public_size == 4 * GIB
        assert layout.private_size == 4 * GIB
        assert layout.stride == 40 * GIB
        assert layout.guard_between == 36 * GIB
        assert layout.guard_low >= 2 * GIB
        assert layout.stack_offset == layout.stride

    def test_stacks_in_lock_step(self):
        """The private stack sits one stride above the public stack."""
        layout = compute_layout("segment")
        assert layout.private_stack_base - layout.public_stack_base == 40 * GIB
        assert layout.contains(H, layout.private_stack_base)


class TestMpxLayout:
    """Tests for the MPX scheme."""

    def test_contiguous(self):
        """Private memory starts where public memory ends."""
        layout = compute_layout("mpx", public_size=4096, private_size=4096, stack_offset=1024,
                                stack_size=512)
        assert layout.private_base == layout.public_end
        assert layout.public_base >= 1

    def test_offset_bounds(self):
        """The stack offset must fit a signed 32-bit displacement."""
        with pytest.raises(ConfigError):
            compute_layout("mpx", stack_offset=MPX_MAX_STACK_OFFSET + 1)

    def test_offset_must_fit_region(self):
        """A stack offset past the private region is rejected."""
        with pytest.raises(ConfigError):
            compute_layout("mpx", public_size=4096, private_size=4096, stack_offset=8192,
                           stack_size=512)

    def test_unknown_scheme(self):
        """Unknown scheme names are configuration errors."""
        with pytest.raises(ConfigError):
            compute_layout("paging")

    @given(
        st.integers(min_value=64, max_value=1 << 20),
        st.integers(min_value=64, max_value=1 << 20),
        st.integers(min_value=1, max_value=64),
        st.data(),
    )
    def test_regions_disjoint(self, public_size, private_size, stack_size, data):
        """Every valid MPX layout keeps the regions and stacks where they belong."""
        stack_offset = data.draw(st.integers(min_value=stack_size, max_value=private_size))
        layout = compute_layout(
            "mpx",
            public_size=public_size,
            private_size=private_size,
            stack_offset=stack_offset,
            stack_size=stack_size,
        )
        assert layout.public_end <= layout.private_base
        assert layout.private_end <= layout.trusted_base
        assert layout.contains(L, layout.public_stack_base)
        assert layout.contains(H, layout.private_stack_base)
        assert layout.contains(H, layout.private_stack_base + stack_size - 1)


class TestPlacement:
    """Tests for global cells and spill slots."""

    def test_globals_packed_per_region(self):
        """Globals are placed one after another from their region base."""
        layout = compute_layout("mpx")
        cells = place_globals(
            [
                GlobalDecl(name="a", region=L, size=4),
                GlobalDecl(name="s", region=H, size=2),
                GlobalDecl(name="b", region=L, size=1),
            ],
            layout,
        )
        by_name = {c.name: c for c in cells}
        assert by_name["a"].base == layout.public_base
        assert by_name["b"].base == layout.public_base + 4
        assert by_name["s"].base == layout.private_base

    def test_spill_slots_private_and_distinct(self):
        """Spill slots are distinct private-stack cells."""
        layout = compute_layout("mpx")
        slots = {spill_slot(layout, f, r) for f in range(3) for r in CALLEE_SAVE_REGS}
        assert len(slots) == 3 * len(CALLEE_SAVE_REGS)
        assert all(layout.contains(H, s) for s in slots)
