"""Branch-exchange improvement of a normal-mode incumbent.

Closing an open line closes one loop; opening any other switchable line on
that loop gives a neighbouring tree. Neighbours are ranked by daily sweep
losses under the current dispatch, and only the best few are re-optimized
with the switching fixed, so each pass costs a handful of small solves.
"""
from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import replace

import numpy as np

from .case import HOURS, PuNetwork
from .model import ModelInstance, extract_solution, rounding_heuristic
from .powerflow import PowerFlowError, schedule_injections, sweep_power_flow
from .radiality import Topology, check_radial
from .solver import SolverOptions, solve

CANDIDATES_PER_PASS = 3
V_SLACK = 1e-6


def _x_cols(inst: ModelInstance, net: PuNetwork, mode: str) -> np.ndarray:
    return np.array([inst.varspace.col("X", ln.id, mode) for ln in net.case.lines])


def fix_topology(inst: ModelInstance, cols: np.ndarray, status: np.ndarray) -> ModelInstance:
    lb, ub = inst.lb.copy(), inst.ub.copy()
    lb[cols] = ub[cols] = status
    return inst.with_bounds(lb, ub)


def _tree_path(net: PuNetwork, status: np.ndarray, a: int, b: int) -> list[int]:
    """Line indices on the tree path from bus ``a`` to bus ``b``."""
    adj: dict[int, list[tuple[int, int]]] = {}
    for k, ln in enumerate(net.case.lines):
        if status[k]:
            adj.setdefault(ln.from_bus, []).append((ln.to_bus, k))
            adj.setdefault(ln.to_bus, []).append((ln.from_bus, k))
    prev: dict[int, tuple[int, int] | None] = {a: None}
    queue = deque([a])
    while queue:
        u = queue.popleft()
        for w, k in adj.get(u, []):
            if w not in prev:
                prev[w] = (u, k)
                queue.append(w)
    if b not in prev:
        return []
    path = []
    while prev[b] is not None:
        b, k = prev[b]
        path.append(k)
    return path


def neighbours(net: PuNetwork, status: np.ndarray, may_open: np.ndarray,
               may_close: np.ndarray) -> list[np.ndarray]:
    out, seen = [], set()
    for o in np.flatnonzero((status == 0) & may_close):
        ln = net.case.lines[o]
        for k in _tree_path(net, status, ln.from_bus, ln.to_bus):
            if not may_open[k]:
                continue
            cand = status.copy()
            cand[o], cand[k] = 1, 0
            key = cand.tobytes()
            if key not in seen:
                seen.add(key)
                out.append(cand)
    return out


class _Ranker:
    """Daily sweep losses of a tree with the dispatch of one schedule held fixed."""

    def __init__(self, net: PuNetwork, inst: ModelInstance, x: np.ndarray, mode: str):
        sched = extract_solution(inst, x)
        self.net = net
        self.buses = list(sched.bus_ids)
        self.root = sched.slack_bus
        self.vmin, self.vmax = net.case.voltage_bounds[mode]
        root_k = self.buses.index(self.root)
        self.hours = [(*schedule_injections(sched, mode, h), float(sched.modes[mode].v[h - 1, root_k]))
                      for h in range(1, HOURS + 1)]

    def __call__(self, status: np.ndarray) -> float:
        lines = [(ln.from_bus, ln.to_bus, float(self.net.r[k]), float(self.net.x[k]))
                 for k, ln in enumerate(self.net.case.lines) if status[k]]
        topo = Topology.from_lines(self.buses, [(a, b) for a, b, _, _ in lines])
        if not check_radial(topo).radial:
            return math.inf
        total = 0.0
        for p, q, v_root in self.hours:
            try:
                pf = sweep_power_flow(topo, lines, p, q, self.root, v_root)
            except PowerFlowError:
                return math.inf
            if not pf.converged or pf.v.min() < self.vmin - V_SLACK or pf.v.max() > self.vmax + V_SLACK:
                return math.inf
            total += pf.total_loss
        return total


def initial_tree(net: PuNetwork, inst: ModelInstance, mode: str) -> np.ndarray | None:
    """The case's normal tree (main lines closed, ties open) when it fits the bounds."""
    cols = _x_cols(inst, net, mode)
    status = np.array([1.0 if ln.kind == "main" else 0.0 for ln in net.case.lines])
    if np.any(status < inst.lb[cols]) or np.any(status > inst.ub[cols]):
        return None
    topo = Topology.from_lines([b.id for b in net.case.buses],
                               [(ln.from_bus, ln.to_bus) for k, ln in enumerate(net.case.lines) if status[k]])
    return status if check_radial(topo).radial else None


def branch_exchange(net: PuNetwork, inst: ModelInstance, mode: str, opts: SolverOptions,
                    deadline: float, log: list[str]) -> np.ndarray | None:
    """Best point found by exchange from the normal tree, or None if that tree fails."""
    status = initial_tree(net, inst, mode)
    if status is None:
        return None
    cols = _x_cols(inst, net, mode)
    may_open, may_close = inst.lb[cols] < 0.5, inst.ub[cols] > 0.5
    quiet = replace(opts, verbose=0, log=None)

    def evaluate(st):
        left = deadline - time.perf_counter()
        if left <= 0:
            return None
        res = solve(fix_topology(inst, cols, st), replace(quiet, time_limit_s=left),
                    heuristic=rounding_heuristic)
        return res if res.x is not None else None

    best = evaluate(status)
    if best is None:
        return None
    log.append(f"exchange start {best.objective:.10g}")
    tried = {status.tobytes()}
    while time.perf_counter() < deadline:
        rank = _Ranker(net, inst, best.x, mode)
        here = rank(status)
        scored = sorted(((rank(c), k, c) for k, c in enumerate(neighbours(net, status, may_open, may_close))
                         if c.tobytes() not in tried), key=lambda t: (t[0], t[1]))
        moved = False
        for score, _, cand in scored[:CANDIDATES_PER_PASS]:
            if not score < here:
                break
            tried.add(cand.tobytes())
            res = evaluate(cand)
            if res is not None and res.objective < best.objective - 1e-12:
                best, status, moved = res, cand, True
                opened = [net.case.lines[k].id for k in np.flatnonzero(status == 0)]
                log.append(f"exchange {best.objective:.10g} open {opened}")
                break
        if not moved:
            break
    return best.x
