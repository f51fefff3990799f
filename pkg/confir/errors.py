"""Error types raised by the confir toolchain.

Library code raises these; only ``confir.main`` turns them into exit codes.
"""

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_REJECTED = 3
EXIT_BOTTOM = 4
EXIT_LIGHTNING = 5
EXIT_OUT_OF_FUEL = 6
EXIT_VIOLATIONS = 7


class ConfirError(Exception):
    """Base error carrying a message and the CLI exit code it maps to."""

    def __init__(self, message: str, exit_code: int = EXIT_REJECTED):
        self.message = message
        self.exit_code = exit_code
        super().__init__(message)


class SourceSyntaxError(ConfirError):
    """Malformed `.cir` text."""

    def __init__(self, message: str, line: int, column: int):
        self.line = line
        self.column = column
        super().__init__(f"{line}:{column}: {message}")


class UnresolvedName(ConfirError):
    """A function, global or label that is referenced but never declared."""

    def __init__(self, symbol: str, line: int = 0, column: int = 0):
        self.symbol = symbol
        self.line = line
        self.column = column
        where = f"{line}:{column}: " if line else ""
        super().__init__(f"{where}unresolved name '{symbol}'")


class MalformedContainer(ConfirError):
    """A `.ccfg` byte stream that cannot be decoded."""


class InvariantViolation(ConfirError):
    """A decoded container whose contents break a Program invariant."""


class QualifierError(ConfirError):
    """Unsatisfiable qualifier constraints; ``witness`` is an H-to-L chain."""

    def __init__(self, witness: list):
        self.witness = witness
        chain = "; ".join(str(c) for c in witness)
        super().__init__(f"private data flows to a public sink: {chain}")


class ConfigError(ConfirError):
    """Layout or toolchain configuration outside its allowed bounds."""

    def __init__(self, message: str):
        super().__init__(message, exit_code=EXIT_USAGE)


class ExhaustedAttempts(ConfirError):
    """Magic-prefix generation failed to find unique prefixes."""


class InstrumentError(ConfirError):
    """Instrumentation found a condition it cannot lower soundly."""

    def __init__(self, pc: int, reason: str):
        self.pc = pc
        self.reason = reason
        super().__init__(f"pc={pc}: {reason}")


class NoApplicableSite(ConfirError):
    """A mutation kind has nothing to mutate in the given program."""


class UnknownTrustedFunction(ConfirError):
    """A tcall names a trusted function with no registered implementation."""
