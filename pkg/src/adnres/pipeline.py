"""Normalizer pre-solves, the joint solve and the c2 polish."""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .case import HOURS, PuNetwork
from .exchange import branch_exchange
from .model import (NORMALIZER_FLOOR, ModelInstance, ModelOptions, ObjectiveSplit, Schedule, assemble_objective,
                    build_model, extract_solution, loss_coefficients, objective_split,
                    rounding_heuristic, shed_coefficients, total_load_energy)
from .solver import SolveError, SolveResult, SolverOptions, solve

MODE_NAMES = {"normal": ("c1",), "emergency": ("c2",), "both": ("c1", "c2")}
POLISH_SLACK = 1e-6  # relative room on the shed energy while c2 losses are minimized
POLISH_CONE_TOL = 1e-9
PRESOLVE_SHARE = 0.9
EXCHANGE_SHARE = 0.5  # of a pre-solve's budget


@dataclass
class ModeRun:
    mode: str
    instance: ModelInstance
    result: SolveResult
    x: np.ndarray | None  # after polishing
    value: float  # single-mode objective at ``x`` (MWh)


@dataclass
class RunResult:
    net: PuNetwork
    modes: tuple[str, ...]
    status: str
    objective: float
    bound: float
    gap: float
    nodes: int
    cuts: int
    runtime: float
    presolves: dict[str, ModeRun]
    joint: SolveResult
    instance: ModelInstance
    x: np.ndarray | None
    schedule: Schedule | None = None
    split: ObjectiveSplit | None = None
    log: list[str] = field(default_factory=list)

    @property
    def has_solution(self) -> bool:
        return self.x is not None


def mode_objective(instance: ModelInstance, mode: str) -> np.ndarray:
    return loss_coefficients(instance) if mode == "c1" else shed_coefficients(instance)


def c2_loss_coefficients(net: PuNetwork, instance: ModelInstance) -> np.ndarray:
    c = np.zeros(instance.n_cols)
    vs = instance.varspace
    for k, ln in enumerate(net.case.lines):
        for t in range(1, HOURS + 1):
            c[vs.col("J", ln.id, "c2", t)] = net.case.base_mva * net.r[k]
    return c


def map_point(src: ModelInstance, x: np.ndarray, dst: ModelInstance, into: np.ndarray) -> None:
    """Copy the values of ``x`` into ``into`` for every column ``dst`` shares with ``src``."""
    index = {key: c for c, key in enumerate(dst.varspace.keys)}
    for c, key in enumerate(src.varspace.keys):
        d = index.get(key)
        if d is not None:
            into[d] = x[c]


def fix_binaries(instance: ModelInstance, x: np.ndarray) -> ModelInstance:
    cols = instance.binary_columns
    lb, ub = instance.lb.copy(), instance.ub.copy()
    lb[cols] = ub[cols] = np.round(x[cols])
    return instance.with_bounds(lb, ub)


def polish(net: PuNetwork, inst: ModelInstance, x: np.ndarray, mode: str,
           opts: SolverOptions) -> np.ndarray:
    """Re-solve with the switching fixed and a much tighter cone tolerance.

    In c2 a second pass holds the shed energy and minimizes c2 losses:
    shedding alone leaves line currents free inside the relaxation, and
    charging losses pushes every cone back onto its boundary.
    """
    # no warm starts: the root cut loop then runs to cone feasibility, whereas an
    # incumbent would let the absolute gap floor stop it early
    tight = replace(opts, verbose=0, cone_feas_tol=POLISH_CONE_TOL)
    fixed = fix_binaries(inst, x)
    res = solve(fixed, tight)
    if res.x is None:
        return x
    x = res.x
    if mode == "c2":
        shed = shed_coefficients(inst)
        value = float(shed @ x)
        held = fixed.with_row(shed, -math.inf, value + POLISH_SLACK * max(1.0, value),
                              "polish", "polish[c2]")
        res = solve(held.with_objective(c2_loss_coefficients(net, inst)), tight)
        if res.x is not None:
            x = res.x
    return x


def presolve(net: PuNetwork, mode: str, model_options: ModelOptions,
             opts: SolverOptions) -> ModeRun:
    start = time.perf_counter()
    inst = build_model(net, (mode,), model_options)
    inst = inst.with_objective(mode_objective(inst, mode))
    warm, notes = None, []
    if mode == "c1":
        # losses respond smoothly to switching, so local search finds good trees cheaply
        warm = branch_exchange(net, inst, mode, opts, start + EXCHANGE_SHARE * opts.time_limit_s, notes)
    left = max(1.0, opts.time_limit_s - (time.perf_counter() - start))
    res = solve(inst, replace(opts, time_limit_s=left), heuristic=rounding_heuristic, warm_start=warm)
    res.log[:0] = notes
    x = res.x
    if x is not None:
        x = polish(net, inst, x, mode, opts)
    value = float(inst.objective @ x) if x is not None else math.inf
    return ModeRun(mode, inst, res, x, value)


def solve_case(net: PuNetwork, modes: tuple[str, ...] = ("c1", "c2"),
               opts: SolverOptions | None = None,
               model_options: ModelOptions | None = None) -> RunResult:
    """Pre-solve each mode for its normalizer, then solve the weighted joint problem."""
    opts = opts or SolverOptions()
    model_options = model_options or ModelOptions()
    start = time.perf_counter()
    workers = max(1, min(len(modes), opts.threads))
    # the time limit covers the whole run; pre-solves that share a thread split their part
    share = PRESOLVE_SHARE if workers >= len(modes) else PRESOLVE_SHARE / len(modes)
    pre_opts = replace(opts, time_limit_s=opts.time_limit_s * share)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {m: pool.submit(presolve, net, m, model_options, pre_opts) for m in modes}
        runs = {m: f.result() for m, f in futures.items()}
    log = []
    for m, run in runs.items():
        log.extend(f"[{m}] {line}" for line in run.result.log)
        if run.x is None:
            inst = build_model(net, modes, model_options)
            return RunResult(net, modes, run.result.status, math.inf, math.inf, math.inf,
                             sum(r.result.nodes for r in runs.values()),
                             sum(r.result.cuts for r in runs.values()),
                             time.perf_counter() - start, runs, run.result, inst, None, log=log)

    # normalizers are the best values known for each mode (optimal within the gap)
    of1_opt = runs["c1"].value if "c1" in runs else 0.0
    of2_opt = runs["c2"].value if "c2" in runs else 0.0
    joint = build_model(net, modes, model_options)
    joint = joint.with_objective(assemble_objective(joint, of1_opt, of2_opt), (of1_opt, of2_opt))
    warm = np.zeros(joint.n_cols)
    for run in runs.values():
        map_point(run.instance, run.x, joint, warm)

    # with per-mode storage binaries the joint problem splits into the pre-solved
    # blocks, so their proven bounds add up to a valid joint bound
    hint = None
    if not model_options.shared_ess_binaries:
        optima = {"c1": of1_opt, "c2": of2_opt}
        hint = sum(run.result.bound * _weight(optima[m]) for m, run in runs.items())
    elapsed = time.perf_counter() - start
    joint_opts = replace(opts, time_limit_s=max(1.0, opts.time_limit_s - elapsed))
    res = solve(joint, joint_opts, heuristic=rounding_heuristic, warm_start=warm, lower_bound=hint)
    log.extend(f"[joint] {line}" for line in res.log)
    runtime = time.perf_counter() - start
    out = RunResult(net, modes, res.status, res.objective, res.bound, res.gap,
                    res.nodes + sum(r.result.nodes for r in runs.values()),
                    res.cuts + sum(r.result.cuts for r in runs.values()),
                    runtime, runs, res, joint, res.x, log=log)
    if res.x is not None:
        out.schedule = extract_solution(joint, res.x)
        p_total = total_load_energy(net.load_factor, float(net.p_load.sum()) * net.case.base_mva)
        out.split = objective_split(out.schedule, of1_opt, of2_opt, p_total)
    return out


def _weight(opt: float) -> float:
    return 1.0 / opt if opt >= NORMALIZER_FLOOR else 1.0


def exit_status(result: RunResult) -> int:
    """0 solved (possibly with a gap), 2 infeasible, 3 limit hit with no incumbent."""
    if result.has_solution:
        return 0
    return 2 if result.status == "infeasible" else 3


__all__ = ["MODE_NAMES", "ModeRun", "RunResult", "SolveError", "c2_loss_coefficients",
           "exit_status", "fix_binaries", "map_point", "polish", "presolve", "solve_case"]
