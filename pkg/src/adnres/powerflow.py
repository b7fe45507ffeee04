"""Backward/forward sweep AC power flow on a radial feeder.

Used as an independent physics check of the line-flow-based schedule: the
sweep never optimizes, it takes the schedule's topology and dispatch as fixed
constant-power injections.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import Schedule
from .radiality import Topology, check_radial


class PowerFlowError(ValueError):
    pass


@dataclass
class PFResult:
    bus_ids: tuple[int, ...]
    line_ids: tuple[int, ...]  # lines of the topology, in the order given
    v: np.ndarray  # bus voltage magnitudes
    i: np.ndarray  # line current magnitudes
    line_loss: np.ndarray
    total_loss: float
    iterations: int
    converged: bool
    mismatch: float
    closed: tuple[tuple[int, int], ...] = ()


def sweep_power_flow(topo: Topology, lines: Sequence[tuple[int, int, float, float]],
                     load_p: Sequence[float], load_q: Sequence[float], root: int,
                     v_root: float = 1.0, tol: float = 1e-10, max_iter: int = 100) -> PFResult:
    """Ladder-method power flow.

    ``lines`` holds ``(from_bus, to_bus, r, x)`` per closed line; loads are net
    consumption per bus in ``topo.buses`` order (generation negative). The root
    bus balances the feeder, so its own load entry is ignored.
    """
    verdict = check_radial(topo)
    if not verdict.radial:
        raise PowerFlowError(f"topology is not radial: {verdict.verdict} {verdict.witness}")
    if root not in topo.buses:
        raise PowerFlowError(f"root bus {root} not in topology")
    closed = {(min(a, b), max(a, b)) for a, b, _, _ in lines}
    if closed != set(topo.closed):
        raise PowerFlowError("line list does not match the topology")

    pos = {b: k for k, b in enumerate(topo.buses)}
    n = len(topo.buses)
    s_load = np.asarray(load_p, float) + 1j * np.asarray(load_q, float)
    if s_load.shape != (n,):
        raise PowerFlowError("load vectors must have one entry per bus")
    adj: dict[int, list[tuple[int, int]]] = {k: [] for k in range(n)}
    for li, (a, b, _, _) in enumerate(lines):
        adj[pos[a]].append((pos[b], li))
        adj[pos[b]].append((pos[a], li))

    # orient the tree away from the root
    order = []
    parent_line = np.full(n, -1)
    parent = np.full(n, -1)
    seen = np.zeros(n, bool)
    r0 = pos[root]
    seen[r0] = True
    queue = deque([r0])
    while queue:
        u = queue.popleft()
        order.append(u)
        for w, li in adj[u]:
            if not seen[w]:
                seen[w] = True
                parent[w] = u
                parent_line[w] = li
                queue.append(w)
    z = np.array([complex(r, x) for _, _, r, x in lines])

    v = np.full(n, complex(v_root))
    i_line = np.zeros(len(lines), complex)
    converged = False
    mismatch = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        i_bus = np.conj(s_load / v)
        i_bus[r0] = 0.0
        acc = i_bus.copy()
        for u in reversed(order[1:]):
            i_line[parent_line[u]] = acc[u]
            acc[parent[u]] += acc[u]
        v_new = v.copy()
        for u in order[1:]:
            v_new[u] = v_new[parent[u]] - z[parent_line[u]] * i_line[parent_line[u]]
        mismatch = _mismatch(v_new, i_line, s_load, parent, parent_line, r0, n)
        v = v_new
        if mismatch <= tol:
            converged = True
            break

    line_loss = (np.abs(i_line) ** 2) * z.real
    return PFResult(
        bus_ids=tuple(topo.buses),
        line_ids=tuple(range(len(lines))),
        v=np.abs(v),
        i=np.abs(i_line),
        line_loss=line_loss,
        total_loss=float(line_loss.sum()),
        iterations=it,
        converged=converged,
        mismatch=float(mismatch),
        closed=tuple(sorted(closed)),
    )


def _mismatch(v, i_line, s_load, parent, parent_line, root, n) -> float:
    """Largest gap between consumed power V*conj(I_in - I_out) and the load."""
    net_in = np.zeros(n, complex)
    for u in range(n):
        if u == root:
            continue
        net_in[u] += i_line[parent_line[u]]
        net_in[parent[u]] -= i_line[parent_line[u]]
    consumed = v * np.conj(net_in)
    gap = np.abs(consumed - s_load)
    gap[root] = 0.0
    return float(gap.max()) if n else 0.0


# ---------------------------------------------------------- schedule glue

def schedule_injections(sched: Schedule, mode: str, hour: int) -> tuple[np.ndarray, np.ndarray]:
    """Net consumption (P, Q) per bus at one hour, all dispatch taken as fixed."""
    ms = sched.modes[mode]
    t = hour - 1
    p = sched.p_demand[t].copy() - ms.p_shed[t]
    q = sched.q_demand[t].copy() - ms.q_shed[t]
    idx = {b: k for k, b in enumerate(sched.bus_ids)}
    for k, b in enumerate(sched.dg_buses):
        p[idx[b]] -= ms.p_dg[t, k]
        q[idx[b]] -= ms.q_dg[t, k]
    for k, b in enumerate(sched.wt_buses):
        p[idx[b]] -= ms.p_wt[t, k]
    for k, b in enumerate(sched.ess_buses):
        p[idx[b]] += ms.p_ch[t, k] - ms.p_dis[t, k]
    return p, q


def schedule_root(sched: Schedule, mode: str) -> int:
    if mode == "c2":
        bus = sched.grid_forming_bus(mode)
        if bus is None:
            raise PowerFlowError("emergency schedule has no unique grid-forming DG")
        return bus
    return sched.slack_bus if sched.slack_bus is not None else sched.bus_ids[0]


def schedule_topology(sched: Schedule, mode: str) -> tuple[Topology, list[tuple[int, int, float, float]]]:
    status = sched.modes[mode].line_status
    lines = [(a, b, float(sched.r[k]), float(sched.x[k]))
             for k, (a, b) in enumerate(sched.line_ends) if status[k] == 1]
    topo = Topology.from_lines(sched.bus_ids, [(a, b) for a, b, _, _ in lines])
    return topo, lines


def sweep_schedule(sched: Schedule, mode: str, hour: int, tol: float = 1e-10,
                   max_iter: int = 100) -> PFResult:
    """Sweep on the schedule's topology with its dispatch and root voltage."""
    topo, lines = schedule_topology(sched, mode)
    p, q = schedule_injections(sched, mode, hour)
    root = schedule_root(sched, mode)
    v_root = float(sched.modes[mode].v[hour - 1, sched.bus_ids.index(root)])
    return sweep_power_flow(topo, lines, p, q, root, v_root, tol, max_iter)


@dataclass(frozen=True)
class Comparison:
    mode: str
    hour: int
    max_dv: float
    max_di: float
    loss_lfb: float
    loss_pf: float
    rel_loss_diff: float
    passed: bool


def compare_lfb(pf: PFResult, sched: Schedule, mode: str, hour: int,
                vtol: float = 1e-4, ltol: float = 1e-3) -> Comparison:
    topo, lines = schedule_topology(sched, mode)
    if set(topo.closed) != set(pf.closed):
        raise PowerFlowError("sweep topology differs from the schedule topology")
    ms = sched.modes[mode]
    t = hour - 1
    closed_idx = np.flatnonzero(ms.line_status == 1)
    pf_v = np.array([pf.v[pf.bus_ids.index(b)] for b in sched.bus_ids])
    dv = float(np.abs(ms.v[t] - pf_v).max()) if pf_v.size else 0.0
    di = float(np.abs(ms.i[t, closed_idx] - pf.i).max()) if pf.i.size else 0.0
    loss_lfb = float((ms.j[t] * sched.r).sum())
    loss_pf = pf.total_loss
    denom = max(abs(loss_pf), 1e-12)
    rel = abs(loss_lfb - loss_pf) / denom if max(loss_lfb, loss_pf) > 1e-12 else 0.0
    return Comparison(mode, hour, dv, di, loss_lfb, loss_pf, rel, dv <= vtol and rel <= ltol)
