"""Region geometry constants for the two partitioning schemes."""

KIB = 1 << 10
MIB = 1 << 20
GIB = 1 << 30

# Segment scheme: each segment is 4 GiB of usable space followed by 36 GiB of guard
SEGMENT_USABLE = 4 * GIB
SEGMENT_GUARD = 36 * GIB
SEGMENT_STRIDE = SEGMENT_USABLE + SEGMENT_GUARD
# base + 32-bit index scaled by 8 + 32-bit displacement
SEGMENT_MAX_REACH = 4 * GIB + 4 * GIB * 8 + 2 * GIB
SEGMENT_MAX_NEGATIVE_OFFSET = 2 * GIB

# MPX scheme: lock-step stack distance must fit a signed 32-bit displacement
MPX_MAX_STACK_OFFSET = (1 << 31) - 1
MPX_GUARD = 1 * MIB

TRUSTED_SIZE_MPX = 1 * MIB
