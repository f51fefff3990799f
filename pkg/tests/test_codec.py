"""Tests for the canonical .ccfg container."""

import pytest

from confir.errors import InvariantViolation, MalformedContainer
from confir.ir import deserialize_cfg, serialize_cfg, serialize_with_offsets
from confir.ir.codec import HEADER, magic_windows


class TestContainer:
    """Tests for encoding and decoding instrumented programs."""

    def test_header(self, ok_program):
        """Containers start with the format header."""
        assert serialize_cfg(ok_program).startswith(HEADER)

    def test_decode_gives_equal_program(self, ok_program, add_incr):
        """Decoding a container gives back the program it was made from."""
        for program in (ok_program, add_incr):
            assert deserialize_cfg(serialize_cfg(program)) == program

    def test_encoding_is_deterministic(self, compile_fixture):
        """Compiling the same source with the same seed gives identical bytes."""
        first = serialize_cfg(compile_fixture("ok.cir", seed=3))
        second = serialize_cfg(compile_fixture("ok.cir", seed=3))
        assert first == second

    def test_magic_fields_hold_the_prefixes(self, add_incr):
        """Every designated magic field starts with one of the two prefixes."""
        data, offsets = serialize_with_offsets(add_incr)
        prefixes = {add_incr.m_call_prefix, add_incr.m_ret_prefix}
        assert offsets
        for offset in offsets:
            value = int.from_bytes(data[offset : offset + 8], "little")
            assert value >> 5 in prefixes

    def test_prefixes_only_at_magic_fields(self, add_incr):
        """The prefixes appear nowhere else in the byte stream."""
        data, offsets = serialize_with_offsets(add_incr)
        for prefix in (add_incr.m_call_prefix, add_incr.m_ret_prefix):
            assert set(magic_windows(data, prefix)) <= set(offsets)


class TestMalformed:
    """Tests for rejected byte streams."""

    def test_bad_header(self, ok_program):
        """A stream without the header is malformed."""
        data = serialize_cfg(ok_program)
        with pytest.raises(MalformedContainer):
            deserialize_cfg(b"XXXX" + data[4:])

    def test_bad_version(self, ok_program):
        """An unknown version byte is malformed."""
        data = bytearray(serialize_cfg(ok_program))
        data[4] = 9
        with pytest.raises(MalformedContainer):
            deserialize_cfg(bytes(data))

    def test_truncated(self, ok_program):
        """A truncated stream is malformed."""
        data = serialize_cfg(ok_program)
        with pytest.raises(MalformedContainer):
            deserialize_cfg(data[: len(data) // 2])

    def test_trailing_bytes(self, ok_program):
        """Bytes after the last field are malformed."""
        with pytest.raises(MalformedContainer):
            deserialize_cfg(serialize_cfg(ok_program) + b"\x00")

    def test_equal_prefixes_break_invariants(self, ok_program):
        """A container whose call and return prefixes agree fails validation."""
        data = bytearray(serialize_cfg(ok_program))
        call_prefix = bytes(data[5:13])
        data[13:21] = call_prefix
        with pytest.raises((InvariantViolation, MalformedContainer)):
            deserialize_cfg(bytes(data))
