"""Machine and encoding constants shared by every stage."""

# Register file: r0 return, r1..r4 arguments, r5..r9 temporaries, r10..r15 callee-save
NUM_REGS = 16
RET_REG = 0
ARG_REGS = (1, 2, 3, 4)
MAX_ARGS = 4
TEMP_REGS = (5, 6, 7, 8, 9)
CALLEE_SAVE_REGS = (10, 11, 12, 13, 14, 15)

WORD_BITS = 64
WORD_MASK = (1 << WORD_BITS) - 1

# Magic sequences: 59-bit prefix followed by 5 taint bits
MAGIC_PREFIX_BITS = 59
MAGIC_TAINT_BITS = 5
MAGIC_PREFIX_LIMIT = 1 << MAGIC_PREFIX_BITS

# First pc handed out to untrusted code
CODE_BASE = 0x1000
