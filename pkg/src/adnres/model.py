"""Mixed-integer second-order-cone model of joint normal/emergency operation.

Mode ``c1`` is grid-connected normal operation (minimize line losses), mode
``c2`` is the islanded emergency state (minimize shed load). Both share the
line-flow-based power flow: squared voltages ``U``, squared currents ``J`` and
receiving-end line flows ``P``/``Q``, with the rotated cone
``P^2 + Q^2 <= J * U_to`` as the only nonlinear constraint per line and hour.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .case import HOURS, PuNetwork, incidence

MODES = ("c1", "c2")
LOSS_RELIEF_CAP = 0.99  # hypothetical shedding cap, fraction of hourly load
NORMALIZER_FLOOR = 1e-9


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelOptions:
    big_m: str | float = "formula"  # "formula", "gated" or an explicit constant
    flow_bound: str = "current"  # "current": v_max*sqrt(Jmax); "demand": also capped by served load
    shared_ess_binaries: bool = False
    loop_rows: bool = True  # valid inequalities: a cycle never has all its lines closed
    fix_bridges: bool = True  # lines every spanning tree needs are closed up front
    eff_charge: float | None = None  # overrides the case values when set
    eff_discharge: float | None = None


# ------------------------------------------------------------------ columns

class VarSpace:
    """Dense column index keyed by (quantity, element, mode, hour)."""

    def __init__(self):
        self.keys: list[tuple] = []
        self.index: dict[tuple, int] = {}
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.integral: list[bool] = []

    def __len__(self) -> int:
        return len(self.keys)

    def add(self, quantity: str, element, mode: str | None, hour: int | None,
            lb: float, ub: float, integral: bool = False) -> int:
        key = (quantity, element, mode, hour)
        if key in self.index:
            raise ModelError(f"duplicate column {key}")
        col = len(self.keys)
        self.keys.append(key)
        self.index[key] = col
        self.lb.append(lb)
        self.ub.append(ub)
        self.integral.append(integral)
        return col

    def col(self, quantity: str, element, mode: str | None, hour: int | None = None) -> int:
        return self.index[(quantity, element, mode, hour)]

    def get(self, quantity: str, element, mode: str | None, hour: int | None = None):
        return self.index.get((quantity, element, mode, hour))

    def name(self, col: int) -> str:
        q, e, m, t = self.keys[col]
        parts = [p for p in (m, None if t is None else f"t{t:02d}", None if e is None else str(e))
                 if p is not None]
        return f"{q}[{','.join(parts)}]"


@dataclass(frozen=True)
class ConeBlock:
    """Rotated cone ``sum(p_k^2) <= a * b`` with ``a, b >= 0``.

    ``a``/``b`` are column indices, or None to use the constant
    ``a_const``/``b_const`` instead.
    """

    p: tuple[int, ...]
    a: int | None
    b: int | None
    a_const: float = 0.0
    b_const: float = 0.0
    tag: str = ""
    name: str = ""

    def columns(self) -> tuple[int, ...]:
        return self.p + tuple(c for c in (self.a, self.b) if c is not None)


@dataclass
class ModelInstance:
    varspace: VarSpace
    lb: np.ndarray
    ub: np.ndarray
    integral: np.ndarray
    objective: np.ndarray
    row_ptr: np.ndarray  # CSR
    row_idx: np.ndarray
    row_val: np.ndarray
    row_lo: np.ndarray
    row_hi: np.ndarray
    row_tag: list[str]
    row_name: list[str]
    cones: list[ConeBlock]
    modes: tuple[str, ...] = MODES
    net: PuNetwork | None = None
    options: ModelOptions = field(default_factory=ModelOptions)
    normalizers: tuple[float, float] | None = None

    @property
    def n_cols(self) -> int:
        return len(self.lb)

    @property
    def n_rows(self) -> int:
        return len(self.row_lo)

    def row(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        s, e = self.row_ptr[k], self.row_ptr[k + 1]
        return self.row_idx[s:e], self.row_val[s:e]

    def matrix(self):
        from scipy.sparse import csr_matrix
        return csr_matrix((self.row_val, self.row_idx, self.row_ptr),
                          shape=(self.n_rows, self.n_cols))

    def with_objective(self, c: np.ndarray, normalizers=None) -> "ModelInstance":
        c = np.asarray(c, dtype=float)
        if c.shape != (self.n_cols,):
            raise ModelError("objective length does not match column count")
        return replace(self, objective=c, normalizers=normalizers)

    def with_bounds(self, lb: np.ndarray, ub: np.ndarray) -> "ModelInstance":
        return replace(self, lb=np.asarray(lb, float), ub=np.asarray(ub, float))

    def with_row(self, coef: np.ndarray, lo: float, hi: float, tag: str, name: str) -> "ModelInstance":
        """Copy with one more linear row ``lo <= coef @ x <= hi``."""
        idx = np.flatnonzero(coef)
        return replace(self,
                       row_ptr=np.append(self.row_ptr, self.row_ptr[-1] + idx.size),
                       row_idx=np.concatenate([self.row_idx, idx]),
                       row_val=np.concatenate([self.row_val, np.asarray(coef, float)[idx]]),
                       row_lo=np.append(self.row_lo, lo),
                       row_hi=np.append(self.row_hi, hi),
                       row_tag=[*self.row_tag, tag],
                       row_name=[*self.row_name, name])

    @property
    def binary_columns(self) -> np.ndarray:
        return np.flatnonzero(self.integral)


class _Rows:
    def __init__(self):
        self.ptr = [0]
        self.idx: list[int] = []
        self.val: list[float] = []
        self.lo: list[float] = []
        self.hi: list[float] = []
        self.tag: list[str] = []
        self.name: list[str] = []

    def add(self, terms: Iterable[tuple[int, float]], lo: float, hi: float, tag: str, name: str):
        merged: dict[int, float] = {}
        for c, v in terms:
            merged[c] = merged.get(c, 0.0) + v
        for c, v in merged.items():
            if v != 0.0:
                self.idx.append(c)
                self.val.append(v)
        self.ptr.append(len(self.idx))
        self.lo.append(lo)
        self.hi.append(hi)
        self.tag.append(tag)
        self.name.append(name)


# ------------------------------------------------------------ bound sizing

def line_caps(net: PuNetwork, mode: str, options: ModelOptions | None = None):
    """Per-line caps (J_max, P_max, Q_max) in p.u. for one mode."""
    options = options or ModelOptions()
    vmin, vmax = net.case.voltage_bounds[mode]
    j_max = net.i_max ** 2
    s_cap = vmax * np.sqrt(j_max)
    if options.flow_bound == "demand":
        served = _max_throughput(net)
        s_cap = np.minimum(s_cap, served)
        j_max = np.minimum(j_max, (served / vmin) ** 2)
    elif options.flow_bound != "current":
        raise ModelError(f"unknown flow-bound policy {options.flow_bound!r}")
    return j_max, s_cap.copy(), s_cap.copy()


def _max_throughput(net: PuNetwork) -> float:
    lam = float(np.max(net.load_factor))
    return lam * float(np.hypot(net.p_load.sum(), net.q_load.sum())) * 1.5


def compute_big_m(r: float, x: float, v_bounds: tuple[float, float],
                  p_cap: float, q_cap: float, j_cap: float) -> float:
    """Per-line constant that leaves the voltage-drop pair slack when a line is open."""
    vals = (r, x, p_cap, q_cap, j_cap, *v_bounds)
    if not all(math.isfinite(v) for v in vals):
        raise ModelError("non-finite line caps")
    vmin, vmax = v_bounds
    return (vmax ** 2 - vmin ** 2) + 2.0 * (r * p_cap + x * q_cap) + (r * r + x * x) * j_cap


def _big_m(net: PuNetwork, mode: str, options: ModelOptions) -> np.ndarray:
    vmin, vmax = net.case.voltage_bounds[mode]
    if isinstance(options.big_m, (int, float)):
        return np.full(net.n_line, float(options.big_m))
    if options.big_m == "gated":
        # open lines carry P = Q = J = 0, so only the voltage spread remains
        return np.full(net.n_line, vmax ** 2 - vmin ** 2)
    if options.big_m != "formula":
        raise ModelError(f"unknown big-M policy {options.big_m!r}")
    j_max, p_cap, q_cap = line_caps(net, mode, options)
    return np.array([compute_big_m(net.r[k], net.x[k], (vmin, vmax), p_cap[k], q_cap[k], j_max[k])
                     for k in range(net.n_line)])


# --------------------------------------------------------------- building

def build_model(net: PuNetwork, modes: Sequence[str] = MODES,
                options: ModelOptions | None = None) -> ModelInstance:
    options = options or ModelOptions()
    modes = tuple(m for m in MODES if m in set(modes))
    if not modes:
        raise ModelError("mode set is empty")
    case = net.case
    if len(net.load_factor) != HOURS or len(case.profiles.wind_speed) != HOURS:
        raise ModelError("profiles must hold 24 hourly entries")
    for unit in (*case.der.wind_units, *case.der.ess_units, *case.der.sync_dgs):
        if unit.bus not in net.bus_ids:
            raise ModelError(f"DER bus {unit.bus} not in network")
    if "c2" in modes and not case.der.sync_dgs:
        raise ModelError("mode c2 needs at least one grid-forming DG candidate")

    vs = VarSpace()
    rows = _Rows()
    cones: list[ConeBlock] = []
    for mode in modes:
        _build_mode(net, mode, options, vs, rows, cones)

    return ModelInstance(
        varspace=vs,
        lb=np.array(vs.lb, dtype=float),
        ub=np.array(vs.ub, dtype=float),
        integral=np.array(vs.integral, dtype=bool),
        objective=np.zeros(len(vs)),
        row_ptr=np.array(rows.ptr, dtype=np.int64),
        row_idx=np.array(rows.idx, dtype=np.int64),
        row_val=np.array(rows.val, dtype=float),
        row_lo=np.array(rows.lo, dtype=float),
        row_hi=np.array(rows.hi, dtype=float),
        row_tag=rows.tag,
        row_name=rows.name,
        cones=cones,
        modes=modes,
        net=net,
        options=options,
    )


def _build_mode(net: PuNetwork, mode: str, options: ModelOptions,
                vs: VarSpace, rows: _Rows, cones: list[ConeBlock]) -> None:
    case = net.case
    lines = case.lines
    bus_ids = net.bus_ids
    A, B = incidence(net)
    vmin, vmax = case.voltage_bounds[mode]
    j_max, p_cap, q_cap = line_caps(net, mode, options)
    big_m = _big_m(net, mode, options)
    slack = net.slack
    emergency = mode == "c2"
    load_buses = [i for i in range(net.n_bus) if net.p_load[i] > 0]
    dgs = case.der.sync_dgs
    ess = case.der.ess_units
    wts = case.der.wind_units
    eff_c = [options.eff_charge or e.eff_charge for e in ess]
    eff_d = [options.eff_discharge or e.eff_discharge for e in ess]
    base = case.base_mva

    # hour-invariant switch states, one column per line (X_ij = X_ji by construction)
    pairs = [(ln.from_bus, ln.to_bus) for ln in lines]
    forced = set()
    if options.fix_bridges:
        from .radiality import bridges

        forced = set(bridges(bus_ids, pairs))
    xcol = []
    for k, ln in enumerate(lines):
        if not ln.switchable:
            lo = hi = 1.0 if ln.kind == "main" else 0.0
        elif k in forced:
            lo, hi = 1.0, 1.0
        else:
            lo, hi = 0.0, 1.0
        xcol.append(vs.add("X", ln.id, mode, None, lo, hi, integral=True))
    rows.add(((c, 2.0) for c in xcol), 2.0 * (net.n_bus - 1), 2.0 * (net.n_bus - 1),
             "eq20", f"radial_count[{mode}]")

    if options.loop_rows:
        from .radiality import simple_cycles

        for cyc in simple_cycles(bus_ids, pairs):
            rows.add(((xcol[k], 1.0) for k in cyc), -np.inf, len(cyc) - 1.0, "loop",
                     f"loop[{mode},{'-'.join(str(lines[k].id) for k in cyc)}]")

    dga = []
    if emergency:
        dga = [vs.add("DG_a", g.bus, mode, None, 0.0, 1.0, integral=True) for g in dgs]
        rows.add(((c, 1.0) for c in dga), 1.0, 1.0, "eq27", f"grid_forming[{mode}]")

    if options.shared_ess_binaries:
        ess_bin_mode = None
        ess_bin_new = vs.get("ich", ess[0].bus, None, 1) is None if ess else False
    else:
        ess_bin_mode = mode
        ess_bin_new = True

    pf = [g.pf_emergency if emergency else g.pf_normal for g in dgs]
    q_ratio = [math.tan(math.acos(p)) for p in pf]

    for t in range(1, HOURS + 1):
        lam = float(net.load_factor[t - 1])
        tag_t = f"{mode},t{t:02d}"

        U = [vs.add("U", b, mode, t, vmin ** 2, vmax ** 2) for b in bus_ids]
        if mode == "c1":
            vs.lb[U[slack]] = vs.ub[U[slack]] = 1.0
        J = [vs.add("J", ln.id, mode, t, 0.0, float(j_max[k])) for k, ln in enumerate(lines)]
        P = [vs.add("P", ln.id, mode, t, -float(p_cap[k]), float(p_cap[k])) for k, ln in enumerate(lines)]
        Q = [vs.add("Q", ln.id, mode, t, -float(q_cap[k]), float(q_cap[k])) for k, ln in enumerate(lines)]
        if not emergency:
            pg = vs.add("PG", bus_ids[slack], mode, t, 0.0, case.substation_limits[0] / base)
            qg = vs.add("QG", bus_ids[slack], mode, t, 0.0, case.substation_limits[1] / base)
        pdg = [vs.add("PDG", g.bus, mode, t, 0.0, g.s_max / base) for g in dgs]
        qdg = [vs.add("QDG", g.bus, mode, t, -g.s_max / base, g.s_max / base) for g in dgs]
        pwt = [vs.add("PWT", w.bus, mode, t, 0.0, float(net.wind_avail[k, t - 1]))
               for k, w in enumerate(wts)]
        pc = [vs.add("PC", e.bus, mode, t, 0.0, e.p_max / base) for e in ess]
        pd = [vs.add("PD", e.bus, mode, t, 0.0, e.p_max / base) for e in ess]
        soc = [vs.add("SOC", e.bus, mode, t, 0.0, e.soc_max / base) for e in ess]
        if ess_bin_new:
            ich = [vs.add("ich", e.bus, ess_bin_mode, t, 0.0, 1.0, integral=True) for e in ess]
            idch = [vs.add("idch", e.bus, ess_bin_mode, t, 0.0, 1.0, integral=True) for e in ess]
        else:
            ich = [vs.col("ich", e.bus, None, t) for e in ess]
            idch = [vs.col("idch", e.bus, None, t) for e in ess]
        pls, qls = {}, {}
        if emergency:
            for i in load_buses:
                pls[i] = vs.add("PLsh", bus_ids[i], mode, t, 0.0, lam * net.p_load[i])
                qls[i] = vs.add("QLsh", bus_ids[i], mode, t, 0.0, lam * net.q_load[i])

        # hypothetical flow
        g_max = lam * float(net.p_load.sum())
        sources = [net.bus_index(g.bus) for g in dgs] if emergency else [slack]
        G = {i: vs.add("G", bus_ids[i], mode, t, 0.0, g_max) for i in dict.fromkeys(sources)}
        H = [vs.add("H", ln.id, mode, t, -g_max, g_max) for ln in lines]
        pla = {i: vs.add("PLsh_a", bus_ids[i], mode, t, 0.0, LOSS_RELIEF_CAP * lam * net.p_load[i])
               for i in load_buses}

        # power balance at every bus
        inj_p = {i: [] for i in range(net.n_bus)}
        inj_q = {i: [] for i in range(net.n_bus)}
        if not emergency:
            inj_p[slack].append((pg, -1.0))
            inj_q[slack].append((qg, -1.0))
        for k, g in enumerate(dgs):
            i = net.bus_index(g.bus)
            inj_p[i].append((pdg[k], -1.0))
            inj_q[i].append((qdg[k], -1.0))
        for k, w in enumerate(wts):
            inj_p[net.bus_index(w.bus)].append((pwt[k], -1.0))
        for k, e in enumerate(ess):
            i = net.bus_index(e.bus)
            inj_p[i] += [(pd[k], -1.0), (pc[k], 1.0)]
        for i in pls:
            inj_p[i].append((pls[i], -1.0))
            inj_q[i].append((qls[i], -1.0))
        for i, b in enumerate(bus_ids):
            incident = np.flatnonzero(A[:, i])
            tp = [(P[l], A[l, i]) for l in incident] + [(J[l], B[l, i] * net.r[l]) for l in incident]
            tq = [(Q[l], A[l, i]) for l in incident] + [(J[l], B[l, i] * net.x[l]) for l in incident]
            rows.add(tp + inj_p[i], -lam * net.p_load[i], -lam * net.p_load[i],
                     "eq4", f"bal_p[{tag_t},b{b}]")
            rows.add(tq + inj_q[i], -lam * net.q_load[i], -lam * net.q_load[i],
                     "eq5", f"bal_q[{tag_t},b{b}]")

        for k, ln in enumerate(lines):
            fr, to = net.line_from[k], net.line_to[k]
            r, x = net.r[k], net.x[k]
            drop = [(U[to], 1.0), (P[k], 2 * r), (Q[k], 2 * x), (U[fr], -1.0), (J[k], r * r + x * x)]
            m = float(big_m[k])
            rows.add(drop + [(xcol[k], m)], -np.inf, m, "eq6", f"vdrop_hi[{tag_t},l{ln.id}]")
            rows.add(drop + [(xcol[k], -m)], -m, np.inf, "eq6", f"vdrop_lo[{tag_t},l{ln.id}]")
            cones.append(ConeBlock((P[k], Q[k]), J[k], U[to], tag="eq7", name=f"cone[{tag_t},l{ln.id}]"))
            rows.add([(P[k], 1.0), (xcol[k], -p_cap[k])], -np.inf, 0.0, "eq10", f"pmax[{tag_t},l{ln.id}]")
            rows.add([(P[k], 1.0), (xcol[k], p_cap[k])], 0.0, np.inf, "eq10", f"pmin[{tag_t},l{ln.id}]")
            rows.add([(Q[k], 1.0), (xcol[k], -q_cap[k])], -np.inf, 0.0, "eq11", f"qmax[{tag_t},l{ln.id}]")
            rows.add([(Q[k], 1.0), (xcol[k], q_cap[k])], 0.0, np.inf, "eq11", f"qmin[{tag_t},l{ln.id}]")
            rows.add([(J[k], 1.0), (xcol[k], -j_max[k])], -np.inf, 0.0, "eq16", f"jmax[{tag_t},l{ln.id}]")
            rows.add([(H[k], 1.0), (xcol[k], -g_max)], -np.inf, 0.0, "eq23", f"hmax[{tag_t},l{ln.id}]")
            rows.add([(H[k], 1.0), (xcol[k], g_max)], 0.0, np.inf, "eq23", f"hmin[{tag_t},l{ln.id}]")

        for i, b in enumerate(bus_ids):
            terms = [(H[l], -A[l, i]) for l in np.flatnonzero(A[:, i])]
            if i in G:
                terms.append((G[i], 1.0))
            if i in pla:
                terms.append((pla[i], 1.0))
            rhs = lam * net.p_load[i]
            rows.add(terms, rhs, rhs, "eq21", f"hyp_bal[{tag_t},b{b}]")
        if emergency:
            for k, g in enumerate(dgs):
                rows.add([(G[net.bus_index(g.bus)], 1.0), (dga[k], -g_max)], -np.inf, 0.0,
                         "eq24", f"gform[{tag_t},b{g.bus}]")
            for i in pls:
                ratio = net.q_load[i] / net.p_load[i]
                rows.add([(qls[i], 1.0), (pls[i], -ratio)], 0.0, 0.0, "eq28",
                         f"shed_pf[{tag_t},b{bus_ids[i]}]")

        for k, g in enumerate(dgs):
            rows.add([(qdg[k], 1.0), (pdg[k], -q_ratio[k])], -np.inf, 0.0, "eq32", f"dg_qhi[{tag_t},b{g.bus}]")
            rows.add([(qdg[k], 1.0), (pdg[k], q_ratio[k])], 0.0, np.inf, "eq32", f"dg_qlo[{tag_t},b{g.bus}]")
            s = g.s_max / base
            cones.append(ConeBlock((pdg[k], qdg[k]), None, None, s, s, tag="eq33",
                                   name=f"dg_cap[{tag_t},b{g.bus}]"))

        for k, e in enumerate(ess):
            terms = [(soc[k], 1.0), (pc[k], -eff_c[k]), (pd[k], 1.0 / eff_d[k])]
            rhs = 0.0
            if t == 1:
                rhs = e.soc_initial / base
            else:
                terms.append((vs.col("SOC", e.bus, mode, t - 1), -1.0))
            rows.add(terms, rhs, rhs, "eq34", f"soc[{tag_t},b{e.bus}]")
            pmax = e.p_max / base
            rows.add([(pc[k], 1.0), (ich[k], -pmax)], -np.inf, 0.0, "eq36", f"ess_ch[{tag_t},b{e.bus}]")
            rows.add([(pd[k], 1.0), (idch[k], -pmax)], -np.inf, 0.0, "eq37", f"ess_dis[{tag_t},b{e.bus}]")
            if ess_bin_new:
                rows.add([(ich[k], 1.0), (idch[k], 1.0)], -np.inf, 1.0, "eq38",
                         f"ess_excl[{'' if ess_bin_mode is None else mode + ','}t{t:02d},b{e.bus}]")
            if t == HOURS:
                s0 = e.soc_initial / base
                rows.add([(soc[k], 1.0)], s0, s0, "eq39", f"soc_cycle[{mode},b{e.bus}]")


# -------------------------------------------------------------- objective

def loss_coefficients(instance: ModelInstance) -> np.ndarray:
    """Objective vector of OF1 (MWh of c1 line losses)."""
    net = instance.net
    c = np.zeros(instance.n_cols)
    if "c1" not in instance.modes:
        return c
    vs = instance.varspace
    for k, ln in enumerate(net.case.lines):
        for t in range(1, HOURS + 1):
            c[vs.col("J", ln.id, "c1", t)] = net.case.base_mva * net.r[k]
    return c


def shed_coefficients(instance: ModelInstance) -> np.ndarray:
    """Objective vector of OF2 (MWh of shed load in c2)."""
    net = instance.net
    c = np.zeros(instance.n_cols)
    if "c2" not in instance.modes:
        return c
    vs = instance.varspace
    for b in net.bus_ids:
        for t in range(1, HOURS + 1):
            col = vs.get("PLsh", b, "c2", t)
            if col is not None:
                c[col] = net.case.base_mva
    return c


def assemble_objective(instance: ModelInstance, of1_opt: float, of2_opt: float) -> np.ndarray:
    """Coefficients of OF1/of1_opt + OF2/of2_opt; a degenerate normalizer drops to 1."""
    w1 = 1.0 / of1_opt if of1_opt >= NORMALIZER_FLOOR else 1.0
    w2 = 1.0 / of2_opt if of2_opt >= NORMALIZER_FLOOR else 1.0
    return w1 * loss_coefficients(instance) + w2 * shed_coefficients(instance)


def normalized_objective(of1: float, of2: float, of1_opt: float, of2_opt: float) -> float:
    t1 = of1 / of1_opt if of1_opt >= NORMALIZER_FLOOR else of1
    t2 = of2 / of2_opt if of2_opt >= NORMALIZER_FLOOR else of2
    return t1 + t2


def objective_normalizers(net: PuNetwork, options: ModelOptions | None = None,
                          solver_options=None) -> tuple[float, float, dict]:
    """Single-objective optima (MWh) of OF1 over c1 and OF2 over c2.

    Returns ``(of1_opt, of2_opt, results)`` where ``results`` maps each mode
    to its ``(instance, SolveResult)``.
    """
    from .solver import SolveError, solve

    out = {}
    optima = []
    for mode, coef in (("c1", loss_coefficients), ("c2", shed_coefficients)):
        inst = build_model(net, (mode,), options)
        inst = inst.with_objective(coef(inst))
        res = solve(inst, solver_options)
        if res.x is None:
            raise SolveError(f"normalizer pre-solve for mode {mode} failed: {res.status}", res.status)
        out[mode] = (inst, res)
        optima.append(float(inst.objective @ res.x))
    return optima[0], optima[1], out


# --------------------------------------------------------------- decoding

@dataclass
class ModeSchedule:
    mode: str
    u: np.ndarray  # (24, n_bus)
    j: np.ndarray  # (24, n_line)
    p_flow: np.ndarray
    q_flow: np.ndarray
    line_status: np.ndarray  # (n_line,) 0/1
    pg: np.ndarray  # (24,)
    qg: np.ndarray
    p_dg: np.ndarray  # (24, n_dg)
    q_dg: np.ndarray
    p_wt: np.ndarray  # (24, n_wt)
    p_wta: np.ndarray
    p_shed: np.ndarray  # (24, n_bus)
    q_shed: np.ndarray
    p_ch: np.ndarray  # (24, n_ess)
    p_dis: np.ndarray
    soc: np.ndarray
    soc0: np.ndarray  # (n_ess,)
    ich: np.ndarray
    idch: np.ndarray
    dg_active: np.ndarray  # (n_dg,) grid-forming flags (c2)

    @property
    def v(self) -> np.ndarray:
        return np.sqrt(np.clip(self.u, 0.0, None))

    @property
    def i(self) -> np.ndarray:
        return np.sqrt(np.clip(self.j, 0.0, None))


@dataclass
class Schedule:
    case_name: str
    base_mva: float
    bus_ids: tuple[int, ...]
    line_ids: tuple[int, ...]
    line_ends: tuple[tuple[int, int], ...]
    r: np.ndarray  # p.u. line resistance
    x: np.ndarray
    dg_buses: tuple[int, ...]
    wt_buses: tuple[int, ...]
    ess_buses: tuple[int, ...]
    modes: dict[str, ModeSchedule]
    p_demand: np.ndarray | None = None  # (24, n_bus) hourly load before shedding
    q_demand: np.ndarray | None = None
    slack_bus: int | None = None

    def cone_residual(self, mode: str) -> np.ndarray:
        """J*U_to - (P^2 + Q^2) per hour and line; zero means the relaxation is exact."""
        ms = self.modes[mode]
        to = [self.bus_ids.index(e[1]) for e in self.line_ends]
        return ms.j * ms.u[:, to] - (ms.p_flow ** 2 + ms.q_flow ** 2)

    def loss_energy(self, mode: str) -> float:
        ms = self.modes[mode]
        return float(self.base_mva * (ms.j * self.r).sum())

    def shed_energy(self, mode: str) -> float:
        return float(self.base_mva * self.modes[mode].p_shed.sum())

    def grid_forming_bus(self, mode: str) -> int | None:
        flags = self.modes[mode].dg_active
        on = [b for b, f in zip(self.dg_buses, flags) if f > 0.5]
        return on[0] if len(on) == 1 else None


def extract_solution(instance: ModelInstance, point: Sequence[float]) -> Schedule:
    x = np.asarray(point, dtype=float)
    if x.shape != (instance.n_cols,):
        raise ModelError(f"point has {x.size} entries, model has {instance.n_cols} columns")
    net = instance.net
    vs = instance.varspace
    case = net.case
    for q in ("U", "J"):
        cols = [c for c, key in enumerate(vs.keys) if key[0] == q]
        if cols and x[cols].min() < -1e-9:
            raise ModelError(f"negative {q} beyond tolerance")
    bin_cols = instance.binary_columns
    x = x.copy()
    x[bin_cols] = np.round(x[bin_cols])

    lines = case.lines
    dgs, wts, ess = case.der.sync_dgs, case.der.wind_units, case.der.ess_units
    modes = {}
    for mode in instance.modes:
        def grid(q, elems, hourly=True, scale=1.0, mode_key=mode):
            out = np.zeros((HOURS, len(elems)))
            for t in range(1, HOURS + 1):
                for k, e in enumerate(elems):
                    col = vs.get(q, e, mode_key, t)
                    if col is not None:
                        out[t - 1, k] = x[col] * scale
            return out

        status = np.array([x[vs.col("X", ln.id, mode)] for ln in lines])
        line_ids = [ln.id for ln in lines]
        j = np.clip(grid("J", line_ids), 0.0, None)
        p = grid("P", line_ids)
        q = grid("Q", line_ids)
        open_ = status < 0.5
        j[:, open_] = 0.0
        p[:, open_] = 0.0
        q[:, open_] = 0.0
        ess_mode = None if instance.options.shared_ess_binaries else mode
        slack_id = [net.bus_ids[net.slack]]
        pg = grid("PG", slack_id)[:, 0]
        qg = grid("QG", slack_id)[:, 0]
        dg_active = np.array([x[vs.col("DG_a", g.bus, mode)] if mode == "c2" else 0.0 for g in dgs])
        modes[mode] = ModeSchedule(
            mode=mode,
            u=np.clip(grid("U", list(net.bus_ids)), 0.0, None),
            j=j, p_flow=p, q_flow=q,
            line_status=status.astype(int),
            pg=pg, qg=qg,
            p_dg=grid("PDG", [g.bus for g in dgs]),
            q_dg=grid("QDG", [g.bus for g in dgs]),
            p_wt=grid("PWT", [w.bus for w in wts]),
            p_wta=net.wind_avail.T.copy() if len(wts) else np.zeros((HOURS, 0)),
            p_shed=grid("PLsh", list(net.bus_ids)),
            q_shed=grid("QLsh", list(net.bus_ids)),
            p_ch=grid("PC", [e.bus for e in ess]),
            p_dis=grid("PD", [e.bus for e in ess]),
            soc=grid("SOC", [e.bus for e in ess]),
            soc0=np.array([e.soc_initial / case.base_mva for e in ess]),
            ich=grid("ich", [e.bus for e in ess], mode_key=ess_mode),
            idch=grid("idch", [e.bus for e in ess], mode_key=ess_mode),
            dg_active=dg_active,
        )
    return Schedule(
        case_name=case.name,
        base_mva=case.base_mva,
        bus_ids=net.bus_ids,
        line_ids=tuple(ln.id for ln in lines),
        line_ends=tuple((ln.from_bus, ln.to_bus) for ln in lines),
        r=net.r.copy(), x=net.x.copy(),
        dg_buses=tuple(g.bus for g in dgs),
        wt_buses=tuple(w.bus for w in wts),
        ess_buses=tuple(e.bus for e in ess),
        modes=modes,
        p_demand=np.outer(net.load_factor, net.p_load),
        q_demand=np.outer(net.load_factor, net.q_load),
        slack_bus=net.bus_ids[net.slack],
    )


# ------------------------------------------------------------- indicators

def total_load_energy(load_factor: Sequence[float], p_load_peak_total: float) -> float:
    return float(sum(load_factor)) * p_load_peak_total


def compute_resiliency_index(of2: float, p_load_total: float) -> float:
    """Percent of the day's load energy served in emergency mode."""
    if of2 < 0:
        raise ValueError("shed energy must be non-negative")
    if p_load_total <= 0:
        raise ValueError("total load energy must be positive")
    return (p_load_total - of2) / p_load_total * 100.0


@dataclass(frozen=True)
class ObjectiveSplit:
    of1: float  # MWh
    of2: float  # MWh
    of1_opt: float
    of2_opt: float
    of: float
    ri: float  # percent


def objective_split(schedule: Schedule, of1_opt: float, of2_opt: float,
                    p_load_total: float) -> ObjectiveSplit:
    of1 = schedule.loss_energy("c1") if "c1" in schedule.modes else 0.0
    of2 = schedule.shed_energy("c2") if "c2" in schedule.modes else 0.0
    ri = compute_resiliency_index(of2, p_load_total) if "c2" in schedule.modes else float("nan")
    return ObjectiveSplit(of1, of2, of1_opt, of2_opt,
                          normalized_objective(of1, of2, of1_opt, of2_opt), ri)


# -------------------------------------------------------------- rounding

def rounding_heuristic(x: np.ndarray, instance: ModelInstance) -> dict[int, float] | None:
    """Binary assignment built from a relaxed point.

    Per mode: the closed set is a maximum-weight spanning tree over the
    relaxed switch values, the grid-forming DG is the largest ``DG_a``, and
    each storage unit charges or discharges according to its dominant flow.
    """
    from .radiality import max_weight_tree

    net = instance.net
    vs = instance.varspace
    lines = net.case.lines
    pairs = [(ln.from_bus, ln.to_bus) for ln in lines]
    out: dict[int, float] = {}
    for mode in instance.modes:
        cols = [vs.col("X", ln.id, mode) for ln in lines]
        forced = [k for k, c in enumerate(cols) if instance.lb[c] > 0.5]
        banned = [k for k, c in enumerate(cols) if instance.ub[c] < 0.5]
        # relaxed switch values first, mean relaxed current breaks near-ties
        jmean = [np.mean([x[vs.col("J", ln.id, mode, t)] for t in range(1, HOURS + 1)]) for ln in lines]
        jscale = max(max(jmean), 1e-12)
        weights = [round(float(x[c]), 4) + 1e-3 * jm / jscale for c, jm in zip(cols, jmean)]
        tree = max_weight_tree(net.bus_ids, pairs, weights, forced, banned)
        if tree is None:
            return None
        closed = set(tree)
        for k, c in enumerate(cols):
            out[c] = 1.0 if k in closed else 0.0
        if mode == "c2":
            dga = [vs.col("DG_a", g.bus, mode) for g in net.case.der.sync_dgs]
            best = max(range(len(dga)), key=lambda k: (x[dga[k]], -k))
            for k, c in enumerate(dga):
                out[c] = 1.0 if k == best else 0.0
        ess_mode = None if instance.options.shared_ess_binaries else mode
        for e in net.case.der.ess_units:
            for t in range(1, HOURS + 1):
                ch = vs.col("ich", e.bus, ess_mode, t)
                dis = vs.col("idch", e.bus, ess_mode, t)
                if ch in out:
                    continue
                pc = x[vs.col("PC", e.bus, mode, t)]
                pd = x[vs.col("PD", e.bus, mode, t)]
                out[ch] = 1.0 if pc > pd + 1e-9 else 0.0
                out[dis] = 1.0 if pd > pc + 1e-9 else 0.0
    return out
