"""Independent reference computations for the tests.

Nothing here imports the package's model or solver: data comes straight from
the TOML files and per-tree dispatch is a conic program handed to cvxpy.
"""
from __future__ import annotations

import itertools
import math
import sys
from importlib import resources

import networkx as nx
import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def raw_case(name: str) -> dict:
    text = resources.files("adnres.data").joinpath(f"{name}.toml").read_text()
    return tomllib.loads(text)


def two_bus_closed_form(r: float, p: float) -> tuple[float, float]:
    """Receiving voltage and loss of a resistive 2-bus feeder with V1 = 1.

    V2 solves V2^2 = V2 - r*p/V2 on the high-voltage branch, i.e.
    V2 = (1 + sqrt(1 - 4 r p)) / 2, and the loss is r * (p / V2)^2.
    """
    v2 = (1.0 + math.sqrt(1.0 - 4.0 * r * p)) / 2.0
    return v2, r * (p / v2) ** 2


def _wind(speed, unit):
    if speed < unit["v_cut_in"] or speed >= unit["v_cut_out"]:
        return 0.0
    if speed < unit["v_rated"]:
        return unit["p_rated_mw"] * (speed - unit["v_cut_in"]) / (unit["v_rated"] - unit["v_cut_in"])
    return unit["p_rated_mw"]


def radial_line_sets(data: dict) -> list[tuple[int, ...]]:
    """Line-id sets forming spanning trees, honouring non-switchable lines."""
    buses = [b["id"] for b in data["buses"]]
    lines = {ln["id"]: ln for ln in data["lines"]}
    sw = data.get("switchable", "all")
    switchable = set(lines) if sw == "all" else set(sw)
    fixed_closed = {i for i in lines if i not in switchable and lines[i]["kind"] == "main"}
    fixed_open = {i for i in lines if i not in switchable and lines[i]["kind"] == "tie"}
    free = sorted(set(lines) - fixed_closed - fixed_open)
    need = len(buses) - 1 - len(fixed_closed)
    out = []
    for extra in itertools.combinations(free, need):
        chosen = sorted(fixed_closed | set(extra))
        g = nx.Graph()
        g.add_nodes_from(buses)
        g.add_edges_from((lines[i]["from"], lines[i]["to"]) for i in chosen)
        if nx.is_tree(g):
            out.append(tuple(chosen))
    return out


def tree_dispatch(data: dict, tree: tuple[int, ...], mode: str) -> float:
    """Optimal daily objective (MWh) of one mode on one fixed radial tree."""
    import cvxpy as cp

    if data.get("ess"):
        raise ValueError("oracle covers cases without storage only")
    base_kv, base_mva = data["base"]["kv"], data["base"]["mva"]
    zb = base_kv ** 2 / base_mva
    ib = base_mva * 1e3 / (math.sqrt(3) * base_kv)
    buses = [b["id"] for b in data["buses"]]
    pos = {b: k for k, b in enumerate(buses)}
    slack = next(b["id"] for b in data["buses"] if b["kind"] == "slack")
    pl = np.array([b["p_mw"] for b in data["buses"]]) / base_mva
    ql = np.array([b["q_mvar"] for b in data["buses"]]) / base_mva
    lines = [ln for ln in data["lines"] if ln["id"] in tree]
    vmin, vmax = data["bounds"][mode]
    lam = data["profiles"]["load_factor"]
    speeds = data["profiles"]["wind_speed"]
    dgs = data.get("dg", [])
    wts = data.get("wind", [])
    emergency = mode == "c2"

    cons = []
    obj = 0
    for t in range(24):
        n, m = len(buses), len(lines)
        U = cp.Variable(n)
        P, Q, J = cp.Variable(m), cp.Variable(m), cp.Variable(m, nonneg=True)
        pdg = cp.Variable(len(dgs), nonneg=True)
        qdg = cp.Variable(len(dgs))
        pw = cp.Variable(len(wts), nonneg=True)
        cons += [U >= vmin ** 2, U <= vmax ** 2]
        gen_p = [0] * n
        gen_q = [0] * n
        if emergency:
            shed = cp.Variable(n, nonneg=True)
            cons += [shed <= lam[t] * pl]
            qshed = cp.multiply(np.divide(ql, pl, out=np.zeros_like(ql), where=pl > 0), shed)
            obj = obj + base_mva * cp.sum(shed)
        else:
            pg, qg = cp.Variable(nonneg=True), cp.Variable(nonneg=True)
            cons += [U[pos[slack]] == 1.0, pg <= data["bounds"]["substation_p_max_mw"] / base_mva,
                     qg <= data["bounds"]["substation_q_max_mvar"] / base_mva]
            gen_p[pos[slack]] = pg
            gen_q[pos[slack]] = qg
        for k, g in enumerate(dgs):
            pf = g["pf_emergency"] if emergency else g["pf_normal"]
            tan = math.tan(math.acos(pf))
            s = g["s_max_mva"] / base_mva
            cons += [qdg[k] <= tan * pdg[k], qdg[k] >= -tan * pdg[k],
                     cp.norm(cp.hstack([pdg[k], qdg[k]])) <= s]
            gen_p[pos[g["bus"]]] = gen_p[pos[g["bus"]]] + pdg[k]
            gen_q[pos[g["bus"]]] = gen_q[pos[g["bus"]]] + qdg[k]
        for k, w in enumerate(wts):
            cons += [pw[k] <= _wind(speeds[t], w) / base_mva]
            gen_p[pos[w["bus"]]] = gen_p[pos[w["bus"]]] + pw[k]
        out_p = [0] * n
        out_q = [0] * n
        for li, ln in enumerate(lines):
            r, x = ln["r_ohm"] / zb, ln["x_ohm"] / zb
            imax = ln["i_max_amp"] / ib
            f, to = pos[ln["from"]], pos[ln["to"]]
            # P, Q: flow arriving at the 'to' end; the 'from' end also feeds the loss
            out_p[f] = out_p[f] + P[li] + r * J[li]
            out_q[f] = out_q[f] + Q[li] + x * J[li]
            out_p[to] = out_p[to] - P[li]
            out_q[to] = out_q[to] - Q[li]
            cons += [U[to] == U[f] - 2 * (r * P[li] + x * Q[li]) - (r * r + x * x) * J[li],
                     cp.quad_over_lin(cp.hstack([P[li], Q[li]]), U[to]) <= J[li],
                     J[li] <= imax ** 2,
                     cp.abs(P[li]) <= vmax * imax, cp.abs(Q[li]) <= vmax * imax]
            if not emergency:
                obj = obj + base_mva * r * J[li]
        for k in range(n):
            dp = lam[t] * pl[k] - (shed[k] if emergency else 0)
            dq = lam[t] * ql[k] - (qshed[k] if emergency else 0)
            cons += [gen_p[k] - out_p[k] == dp, gen_q[k] - out_q[k] == dq]
    prob = cp.Problem(cp.Minimize(obj), cons)
    prob.solve(solver="CLARABEL", tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        return math.inf
    return float(prob.value)


def brute_force(name: str, mode: str) -> tuple[float, tuple[int, ...], dict]:
    data = raw_case(name)
    results = {tree: tree_dispatch(data, tree, mode) for tree in radial_line_sets(data)}
    best = min(results, key=lambda t: (results[t], t))
    return results[best], best, results


def zbus_power_flow(buses, lines, load_p, load_q, root, v_root=1.0, tol=1e-13, max_iter=200):
    """Implicit Z-bus Gauss iteration on the full admittance matrix.

    ``lines`` holds (from, to, r, x) in p.u. Returns (voltage magnitudes by
    bus order, total I^2 R loss).
    """
    idx = {b: k for k, b in enumerate(buses)}
    n = len(buses)
    y = np.zeros((n, n), complex)
    for a, b, r, x in lines:
        g = 1.0 / complex(r, x)
        i, j = idx[a], idx[b]
        y[i, i] += g
        y[j, j] += g
        y[i, j] -= g
        y[j, i] -= g
    s = np.asarray(load_p, float) + 1j * np.asarray(load_q, float)
    rest = [k for k in range(n) if k != idx[root]]
    yrr = y[np.ix_(rest, rest)]
    yrs = y[rest, idx[root]]
    v = np.full(n, complex(v_root))
    for _ in range(max_iter):
        inj = -np.conj(s[rest] / v[rest])
        new = np.linalg.solve(yrr, inj - yrs * v_root)
        done = np.abs(new - v[rest]).max() < tol
        v[rest] = new
        if done:
            break
    loss = 0.0
    for a, b, r, x in lines:
        i = (v[idx[a]] - v[idx[b]]) / complex(r, x)
        loss += r * abs(i) ** 2
    return np.abs(v), loss
