"""Forward register-taint dataflow over a function body."""

from __future__ import annotations

from collections.abc import Callable, Mapping, Sequence

from confir.ir.constants import CALLEE_SAVE_REGS, MAX_ARGS, NUM_REGS, RET_REG
from confir.ir.syntax import (
    CallT,
    CallU,
    Command,
    Expr,
    ICall,
    Ldr,
    Mov,
    expr_registers,
)
from confir.ir.taint import H, L, TaintEnv, TaintLabel, TaintVec5, join_all


def entry_env(taints: TaintVec5, callee_save: tuple[int, ...] = CALLEE_SAVE_REGS) -> TaintEnv:
    """Register taints on function entry.

    Arguments take their declared labels, callee-save registers are L and every
    other register (r0, temporaries, unused arguments) is H.
    """
    labels = {r: (L if r in callee_save else H) for r in range(NUM_REGS)}
    for position in range(1, MAX_ARGS + 1):
        labels[position] = taints.arg(position)
    return TaintEnv.from_labels(labels)


def expr_taint(env: TaintEnv, e: Expr) -> TaintLabel:
    return join_all(env[r] for r in expr_registers(e))


def transfer(
    cmd: Command,
    env: TaintEnv,
    region: TaintLabel,
    call_return: TaintLabel,
    callee_save: tuple[int, ...] = CALLEE_SAVE_REGS,
    restore_callee_save: bool = False,
) -> TaintEnv:
    """Effect of one command on the register taints.

    Args:
        cmd: The command.
        env: Taints before it.
        region: Region label of the access when ``cmd`` is a load.
        call_return: Return label of the callee when ``cmd`` is a call.
        callee_save: The callee-save registers of the convention.
        restore_callee_save: Keep callee-save taints across calls (the view of
            a source body whose spills are implicit) instead of resetting them to L.
    """
    if isinstance(cmd, Mov):
        return env.set(cmd.reg, expr_taint(env, cmd.src))
    if isinstance(cmd, Ldr):
        return env.set(cmd.reg, region.join(expr_taint(env, cmd.addr)))
    if isinstance(cmd, (CallU, CallT, ICall)):
        caller_save = [r for r in range(NUM_REGS) if r not in callee_save]
        out = env.set_many(caller_save, H)
        if not restore_callee_save:
            out = out.set_many(callee_save, L)
        return out.set(RET_REG, call_return)
    return env


def compute_node_taints(
    commands: Sequence[Command],
    successors: Sequence[Sequence[int]],
    entry: TaintEnv,
    regions: Mapping[int, TaintLabel] | None = None,
    call_return: Callable[[Command], TaintLabel] | None = None,
    callee_save: tuple[int, ...] = CALLEE_SAVE_REGS,
    restore_callee_save: bool = False,
) -> list[tuple[TaintEnv, TaintEnv]]:
    """Least fixpoint of the forward taint analysis.

    Γ at a node is the join of its predecessors' Γ′ (plus ``entry`` at index 0),
    and Γ′ is the command's transfer of Γ.

    Args:
        commands: Function body; index 0 is the entry.
        successors: Successor indices for every body index.
        entry: Taints on function entry.
        regions: Region label for each load, by body index (default L).
        call_return: Return label of the callee of a call command (default H).

    Returns:
        ``(Γ, Γ′)`` per body index.
    """
    regions = regions or {}
    predecessors: list[list[int]] = [[] for _ in commands]
    for n, succs in enumerate(successors):
        for s in succs:
            predecessors[s].append(n)

    def out_of(n: int, env: TaintEnv) -> TaintEnv:
        cmd = commands[n]
        ret = H
        if call_return is not None and isinstance(cmd, (CallU, CallT, ICall)):
            ret = call_return(cmd)
        return transfer(cmd, env, regions.get(n, L), ret, callee_save, restore_callee_save)

    gamma_in = [TaintEnv.all_low() for _ in commands]
    gamma_out = [out_of(n, gamma_in[n]) for n in range(len(commands))]

    worklist = list(range(len(commands)))
    while worklist:
        n = worklist.pop(0)
        mask = entry.mask if n == 0 else 0
        for p in predecessors[n]:
            mask |= gamma_out[p].mask
        gamma_in[n] = TaintEnv.of_mask(mask)
        new_out = out_of(n, gamma_in[n])
        if new_out != gamma_out[n]:
            gamma_out[n] = new_out
            worklist.extend(successors[n])
    return list(zip(gamma_in, gamma_out))
