"""Operational semantics: configurations, stepping and trusted builtins."""

from .evaluate import eval_expr
from .interpreter import Machine, observable_dump, run, step
from .state import (
    Bottom,
    Configuration,
    Final,
    Lightning,
    Outcome,
    RunResult,
    Status,
    Step,
    same_cells,
)
from .trusted import (
    BUILTINS,
    DECLASSIFIED_VALUE,
    LEAKY_BUILTINS,
    MAX_BUFFER,
    TrustedImpl,
    builtin_registry,
    t_copy_pub,
    t_declassify_const,
    t_leaky,
    t_read_secret,
)

__all__ = [
    "Configuration",
    "Outcome",
    "Step",
    "Bottom",
    "Lightning",
    "Final",
    "Status",
    "RunResult",
    "same_cells",
    "eval_expr",
    "Machine",
    "step",
    "run",
    "observable_dump",
    "TrustedImpl",
    "BUILTINS",
    "LEAKY_BUILTINS",
    "MAX_BUFFER",
    "DECLASSIFIED_VALUE",
    "builtin_registry",
    "t_read_secret",
    "t_copy_pub",
    "t_declassify_const",
    "t_leaky",
]
