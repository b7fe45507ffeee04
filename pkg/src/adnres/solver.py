"""Branch-and-bound with outer approximation for mixed-integer rotated-cone programs.

Every node solves a linear relaxation in which each cone block is replaced by
the linear cuts accumulated so far, separates tangent cuts at violated blocks,
and re-solves until the point lies inside every cone (to ``cone_feas_tol``).
Nodes whose cut loop settles on fractional binaries are branched on the most
fractional column. The LP core is HiGHS' dual simplex, kept warm across nodes:
branching only moves column bounds and cuts only append rows, so the previous
basis stays dual feasible.
"""
from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence, TextIO

import highspy
import numpy as np

from .model import ConeBlock, ModelInstance

INF = highspy.kHighsInf
STALL_FRACTION = 0.05  # cut rounds stop once a round lifts the bound by less than this share of the gap tolerance
PURGE_RATIO = 3  # slack cut rows leave the LP once there are more than this many per cone block


class SolveError(RuntimeError):
    def __init__(self, message: str, status: str = "error"):
        super().__init__(message)
        self.status = status


@dataclass(frozen=True)
class SolverOptions:
    rel_gap_tol: float = 1e-4
    cone_feas_tol: float = 1e-6
    integer_tol: float = 1e-6
    max_nodes: int = 100_000
    max_cuts_per_node: int = 20  # cuts any one cone block may receive at one node
    time_limit_s: float = 3600.0
    deterministic: bool = True
    threads: int = 1
    seed_cuts: int = 8
    verbose: int = 0  # 0 silent, 1 summary, 2 one line per node
    log: TextIO | None = None

    def __post_init__(self):
        for name in ("rel_gap_tol", "cone_feas_tol", "integer_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_nodes < 1 or self.max_cuts_per_node < 1:
            raise ValueError("node and cut limits must be positive")


@dataclass(frozen=True)
class Cut:
    idx: np.ndarray
    val: np.ndarray
    rhs: float  # sum(val * x[idx]) <= rhs
    block: int

    def violation(self, x: np.ndarray) -> float:
        return float(self.val @ x[self.idx] - self.rhs)


@dataclass
class BBNode:
    id: int
    depth: int
    bound: float
    fixed: dict[int, tuple[float, float]] = field(default_factory=dict)  # col -> (lb, ub)
    cuts: list[int] = field(default_factory=list)  # ids of cuts separated at this node

    def __post_init__(self):
        for col, (lo, hi) in self.fixed.items():
            if lo > hi:
                raise ValueError(f"inconsistent overrides on column {col}")


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible" | "time_limit" | "error"
    x: np.ndarray | None = None
    objective: float = math.inf


@dataclass
class SolveResult:
    status: str  # optimal | infeasible | gap_limit | node_limit | time_limit
    x: np.ndarray | None
    objective: float
    bound: float
    gap: float
    nodes: int
    cuts: int
    runtime: float
    log: list[str] = field(default_factory=list)

    @property
    def has_incumbent(self) -> bool:
        return self.x is not None


@dataclass
class FeasibilityReport:
    max_fractionality: float
    max_row_violation: float
    worst_row: str | None
    max_bound_violation: float
    max_cone_residual: float
    worst_cone: str | None
    max_tightness_slack: float  # J*U - (P^2+Q^2) over line cones, exactness diagnostic
    worst_slack_cone: str | None

    def feasible(self, opts: SolverOptions) -> bool:
        return (self.max_fractionality <= opts.integer_tol
                and self.max_row_violation <= 1e-6
                and self.max_bound_violation <= 1e-6
                and self.max_cone_residual <= opts.cone_feas_tol)


# ------------------------------------------------------------------ cones

def cone_values(block: ConeBlock, x: np.ndarray) -> tuple[np.ndarray, float, float]:
    p = x[list(block.p)]
    a = x[block.a] if block.a is not None else block.a_const
    b = x[block.b] if block.b is not None else block.b_const
    return p, float(a), float(b)


def cone_residual(block: ConeBlock, x: np.ndarray) -> float:
    """g = ||(2p, a-b)|| - (a+b); the block holds iff g <= 0."""
    p, a, b = cone_values(block, x)
    return math.sqrt(4.0 * float(p @ p) + (a - b) ** 2) - (a + b)


def separate_cone_cut(block: ConeBlock, x: np.ndarray, tol: float, block_id: int = -1) -> Cut | None:
    """Tangent cut of the rotated cone at ``x`` if ``x`` violates it by more than ``tol``."""
    p, a, b = cone_values(block, x)
    norm = math.sqrt(4.0 * float(p @ p) + (a - b) ** 2)
    g = norm - (a + b)
    if g <= tol:
        return None
    coef: dict[int, float] = {}
    rhs = 0.0
    if norm == 0.0:
        # only reachable with a + b < 0: cut -(a + b) <= 0
        ga = gb = -1.0
        gp = np.zeros(len(block.p))
    else:
        gp = 4.0 * p / norm
        ga = (a - b) / norm - 1.0
        gb = -(a - b) / norm - 1.0
    for c, v in zip(block.p, gp):
        coef[c] = coef.get(c, 0.0) + float(v)
    # g is positively homogeneous, so the linearization passes through the origin
    for col, const, gv in ((block.a, block.a_const, ga), (block.b, block.b_const, gb)):
        if col is None:
            rhs -= gv * const
        else:
            coef[col] = coef.get(col, 0.0) + gv
    idx = np.array(sorted(coef), dtype=np.int64)
    val = np.array([coef[c] for c in idx])
    return Cut(idx, val, rhs, block_id)


def seed_cuts(block: ConeBlock, count: int, block_id: int = -1) -> list[Cut]:
    """Tangent planes at ``count`` evenly spaced directions of the p-part."""
    cuts = []
    dim = len(block.p)
    if count <= 0 or dim == 0:
        return cuts
    scale_a = block.a_const if block.a is None else 1.0
    scale_b = block.b_const if block.b is None else 1.0
    radius = math.sqrt(scale_a * scale_b)
    for k in range(count):
        theta = 2.0 * math.pi * k / count
        direction = np.zeros(dim)
        direction[0] = math.cos(theta)
        if dim > 1:
            direction[1] = math.sin(theta)
        point = np.zeros(max(max(block.columns()) + 1, 1))
        point[list(block.p)] = direction * radius * 1.5
        if block.a is not None:
            point[block.a] = scale_a
        if block.b is not None:
            point[block.b] = scale_b
        cut = separate_cone_cut(block, point, -math.inf, block_id)
        if cut is not None:
            cuts.append(cut)
    return cuts


# --------------------------------------------------------------- LP core

class LPCore:
    """Persistent HiGHS dual-simplex model with bound changes and appended cuts."""

    def __init__(self, instance: ModelInstance, threads: int = 1):
        self.instance = instance
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("solver", "simplex")
        h.setOptionValue("simplex_strategy", 1)  # dual
        h.setOptionValue("threads", int(threads))
        h.setOptionValue("random_seed", 0)
        h.setOptionValue("presolve", "off")
        h.setOptionValue("primal_feasibility_tolerance", 1e-9)
        self.h = h
        n = instance.n_cols
        lp = highspy.HighsLp()
        lp.num_col_ = n
        lp.num_row_ = instance.n_rows
        lp.col_cost_ = np.asarray(instance.objective, float)
        lp.col_lower_ = np.asarray(instance.lb, float)
        lp.col_upper_ = np.asarray(instance.ub, float)
        lp.row_lower_ = np.where(np.isfinite(instance.row_lo), instance.row_lo, -INF)
        lp.row_upper_ = np.where(np.isfinite(instance.row_hi), instance.row_hi, INF)
        lp.a_matrix_.format_ = highspy.MatrixFormat.kRowwise
        lp.a_matrix_.start_ = np.asarray(instance.row_ptr, np.int32)
        lp.a_matrix_.index_ = np.asarray(instance.row_idx, np.int32)
        lp.a_matrix_.value_ = np.asarray(instance.row_val, float)
        lp.a_matrix_.num_col_ = n
        lp.a_matrix_.num_row_ = instance.n_rows
        h.passModel(lp)
        self.base_lb = np.asarray(instance.lb, float).copy()
        self.base_ub = np.asarray(instance.ub, float).copy()
        self.cur_lb = self.base_lb.copy()
        self.cur_ub = self.base_ub.copy()
        self.n_base = instance.n_rows
        self.n_cuts = 0
        self.deadline = math.inf  # perf_counter time after which solves give up
        self.active: list[int] = []  # pool id of each cut row, in row order

    def add_cuts(self, cuts: Sequence[Cut], ids: Sequence[int] | None = None) -> None:
        if not cuts:
            return
        self.active.extend(ids if ids is not None else [-1] * len(cuts))
        starts, idx, val = [], [], []
        for c in cuts:
            starts.append(len(idx))
            idx.extend(c.idx.tolist())
            val.extend(c.val.tolist())
        lo = np.full(len(cuts), -INF)
        hi = np.array([c.rhs for c in cuts], float)
        self.h.addRows(len(cuts), lo, hi, len(idx), np.array(starts, np.int32),
                       np.array(idx, np.int32), np.array(val, float))
        self.n_cuts += len(cuts)

    def remove_cuts(self, positions: np.ndarray) -> None:
        """Drop cut rows by their position among the cut rows."""
        if positions.size == 0:
            return
        rows = (positions + self.n_base).astype(np.int32)
        self.h.deleteRows(rows.size, rows)
        gone = set(positions.tolist())
        self.active = [c for k, c in enumerate(self.active) if k not in gone]
        self.n_cuts -= positions.size

    def row_duals(self) -> np.ndarray:
        return np.array(self.h.getSolution().row_dual)[self.n_base:]

    def set_bounds(self, lb: np.ndarray, ub: np.ndarray) -> None:
        changed = np.flatnonzero((lb != self.cur_lb) | (ub != self.cur_ub))
        if changed.size:
            self.h.changeColsBounds(changed.size, changed.astype(np.int32),
                                    lb[changed].astype(float), ub[changed].astype(float))
            self.cur_lb[changed] = lb[changed]
            self.cur_ub[changed] = ub[changed]

    def apply(self, fixed: dict[int, tuple[float, float]]) -> None:
        lb = self.base_lb.copy()
        ub = self.base_ub.copy()
        for col, (lo, hi) in fixed.items():
            lb[col] = max(lb[col], lo)
            ub[col] = min(ub[col], hi)
        self.set_bounds(lb, ub)

    def solve(self) -> LPResult:
        h = self.h
        for attempt in range(2):
            left = self.deadline - time.perf_counter()
            if left <= 0:
                return LPResult("time_limit")
            # the HiGHS clock keeps running across calls, so the limit is on its total
            h.setOptionValue("time_limit", h.getRunTime() + float(left) if math.isfinite(left) else INF)
            if attempt:
                # retry once from scratch before giving up on a numerically stuck basis
                h.clearSolver()
            h.run()
            status = h.getModelStatus()
            if status == highspy.HighsModelStatus.kOptimal:
                x = np.array(h.getSolution().col_value)
                return LPResult("optimal", x, h.getInfo().objective_function_value)
            if status == highspy.HighsModelStatus.kInfeasible:
                return LPResult("infeasible")
            if status == highspy.HighsModelStatus.kTimeLimit:
                return LPResult("time_limit")
        return LPResult("error")


def solve_relaxation(instance: ModelInstance, node: BBNode | None = None,
                     cuts: Sequence[Cut] = (), core: LPCore | None = None) -> LPResult:
    """Single LP solve of the relaxation under the node's overrides and the given cuts."""
    if instance.n_cols == 0:
        return LPResult("optimal", np.zeros(0), 0.0)
    core = core or LPCore(instance)
    core.add_cuts(list(cuts))
    core.apply(node.fixed if node else {})
    return core.solve()


# -------------------------------------------------------------- branching

def select_branch_var(x: np.ndarray, instance: ModelInstance, tol: float = 1e-6) -> int | None:
    """Most fractional integral column; ties go to the lowest index."""
    cols = instance.binary_columns
    if cols.size == 0:
        return None
    frac = x[cols] - np.floor(x[cols])
    dist = np.minimum(frac, 1.0 - frac)
    mask = dist > tol
    if not mask.any():
        return None
    score = np.abs(frac - 0.5)
    score[~mask] = np.inf
    return int(cols[int(np.argmin(score))])  # argmin returns the first minimum


def evaluate_incumbent(point: np.ndarray, instance: ModelInstance,
                       opts: SolverOptions | None = None) -> FeasibilityReport:
    x = np.asarray(point, float)
    cols = instance.binary_columns
    frac = 0.0
    if cols.size:
        f = x[cols] - np.round(x[cols])
        frac = float(np.abs(f).max())
    ax = instance.matrix() @ x
    viol = np.maximum(instance.row_lo - ax, ax - instance.row_hi)
    viol = np.where(np.isnan(viol), 0.0, viol)
    worst = int(np.argmax(viol)) if viol.size else None
    bviol = np.maximum(instance.lb - x, x - instance.ub)
    res = [cone_residual(b, x) for b in instance.cones]
    wc = int(np.argmax(res)) if res else None
    slack_vals = []
    for k, b in enumerate(instance.cones):
        if b.tag == "eq7":
            p, a, bb = cone_values(b, x)
            slack_vals.append((a * bb - float(p @ p), k))
    ws = max(slack_vals) if slack_vals else (0.0, None)
    return FeasibilityReport(
        max_fractionality=frac,
        max_row_violation=float(max(viol.max(), 0.0)) if viol.size else 0.0,
        worst_row=instance.row_name[worst] if worst is not None and viol[worst] > 0 else None,
        max_bound_violation=float(max(bviol.max(), 0.0)) if bviol.size else 0.0,
        max_cone_residual=float(max(max(res), 0.0)) if res else 0.0,
        worst_cone=instance.cones[wc].name if wc is not None and res[wc] > 0 else None,
        max_tightness_slack=float(ws[0]),
        worst_slack_cone=instance.cones[ws[1]].name if ws[1] is not None else None,
    )


# ------------------------------------------------------------------ search

Heuristic = Callable[[np.ndarray, ModelInstance], "dict[int, float] | None"]


class _Search:
    def __init__(self, instance: ModelInstance, opts: SolverOptions,
                 heuristic: Heuristic | None, warm_start: np.ndarray | None,
                 lower_bound: float = -math.inf):
        self.inst = instance
        self.lower_bound = lower_bound
        self.opts = opts
        self.heuristic = heuristic
        self.core = LPCore(instance, threads=1 if opts.deterministic else opts.threads)
        self.cuts: list[Cut] = []
        self.cut_count = np.zeros(len(instance.cones), dtype=np.int64)
        self.incumbent: np.ndarray | None = None
        self.inc_obj = math.inf
        self.nodes = 0
        self.log: list[str] = []
        self.start = time.perf_counter()
        self.core.deadline = self.start + opts.time_limit_s
        self.next_id = 0
        self.bin_cols = instance.binary_columns
        self.matrix = instance.matrix()
        self.in_lp = np.zeros(0, bool)
        self._pool = None
        seeds = []
        for k, block in enumerate(instance.cones):
            seeds.extend(seed_cuts(block, opts.seed_cuts, k))
        self._add_cuts(seeds)
        self.cut_count[:] = 0
        if warm_start is not None:
            self._try_point(np.asarray(warm_start, float))

    # ---- helpers
    def elapsed(self) -> float:
        return time.perf_counter() - self.start

    def gap(self, bound: float) -> float:
        if self.incumbent is None:
            return math.inf
        return max(self.inc_obj - bound, 0.0) / max(1.0, abs(self.inc_obj))

    def prune_level(self) -> float:
        if self.incumbent is None:
            return math.inf
        return self.inc_obj - self.opts.rel_gap_tol * max(1.0, abs(self.inc_obj)) * 0.5

    def emit(self, line: str, level: int = 2) -> None:
        self.log.append(line)
        if self.opts.verbose >= level and self.opts.log is not None:
            self.opts.log.write(line + "\n")
            self.opts.log.flush()

    def _add_cuts(self, cuts: list[Cut]) -> None:
        for c in cuts:
            self.cut_count[c.block] += 1
        ids = list(range(len(self.cuts), len(self.cuts) + len(cuts)))
        self.cuts.extend(cuts)
        self.core.add_cuts(cuts, ids)
        self.in_lp = np.concatenate([self.in_lp, np.ones(len(cuts), bool)])
        self._pool = None

    def _pool_arrays(self):
        if self._pool is None:
            lens = np.array([c.idx.size for c in self.cuts])
            self._pool = (np.repeat(np.arange(len(self.cuts)), lens),
                          np.concatenate([c.idx for c in self.cuts]),
                          np.concatenate([c.val for c in self.cuts]),
                          np.array([c.rhs for c in self.cuts]))
        return self._pool

    def _pool_violated(self, x: np.ndarray) -> list[int]:
        """Pooled cuts outside the LP that ``x`` violates."""
        if self.in_lp.all():
            return []
        row, idx, val, rhs = self._pool_arrays()
        viol = np.bincount(row, val * x[idx], minlength=rhs.size) - rhs
        return np.flatnonzero(~self.in_lp & (viol > self.opts.cone_feas_tol)).tolist()

    def _restore(self, ids: list[int]) -> None:
        self.core.add_cuts([self.cuts[i] for i in ids], ids)
        self.in_lp[ids] = True

    def _purge(self) -> None:
        """Move cut rows with a zero dual out of the LP; they stay in the pool.

        The current solution stays optimal without them. Cuts on a cone whose
        line is open all pass through the origin, so slack alone would keep them.
        """
        ids = np.array(self.core.active)
        if ids.size <= PURGE_RATIO * max(1, len(self.inst.cones)):
            return
        dual = self.core.row_duals()
        if dual.size != ids.size:
            return
        idle = np.flatnonzero(np.abs(dual) <= 1e-12)
        self.core.remove_cuts(idle)
        self.in_lp[ids[idle]] = False

    def _separate(self, x: np.ndarray) -> list[Cut]:
        out = []
        for k, block in enumerate(self.inst.cones):
            cut = separate_cone_cut(block, x, self.opts.cone_feas_tol, k)
            if cut is not None:
                out.append(cut)
        return out

    def cut_loop(self, fixed: dict[int, tuple[float, float]], node: BBNode | None,
                 stop_at: float = math.inf, integral_only: bool = False) -> LPResult:
        """Solve the node LP, adding tangent cuts until cone-feasible or capped."""
        lp = self._cut_rounds(fixed, node, stop_at, integral_only)
        if lp.status == "optimal":
            self._purge()
        return lp

    def _cut_rounds(self, fixed, node, stop_at, integral_only) -> LPResult:
        self.core.apply(fixed)
        per_block = np.zeros(len(self.inst.cones), dtype=np.int64)
        prev = -math.inf
        while True:
            lp = self.core.solve()
            if lp.status != "optimal":
                return lp
            if lp.objective >= stop_at:
                return lp
            cuts = self._separate(lp.x)
            if not cuts:
                return lp
            integral = self._fractionality(lp.x) <= self.opts.integer_tol
            if not (integral or integral_only):
                # fractional point: the bound has settled, branching pays more than cutting
                if lp.objective - prev <= STALL_FRACTION * self.opts.rel_gap_tol * max(1.0, abs(lp.objective)):
                    return lp
                prev = lp.objective
            cap = self.opts.max_cuts_per_node * (10 if integral or integral_only else 1)
            cuts = [c for c in cuts if per_block[c.block] < cap]
            pooled = self._pool_violated(lp.x)
            if not cuts and not pooled:
                return lp
            self._restore(pooled)
            for c in cuts:
                per_block[c.block] += 1
            if node is not None:
                node.cuts.extend(range(len(self.cuts), len(self.cuts) + len(cuts)))
            self._add_cuts(cuts)
            if self.elapsed() > self.opts.time_limit_s:
                return lp

    def _fractionality(self, x: np.ndarray) -> float:
        if self.bin_cols.size == 0:
            return 0.0
        v = x[self.bin_cols]
        return float(np.abs(v - np.round(v)).max())

    def _accept(self, lp: LPResult) -> bool:
        x = lp.x
        if self._fractionality(x) > self.opts.integer_tol:
            return False
        if any(cone_residual(b, x) > self.opts.cone_feas_tol for b in self.inst.cones):
            return False
        obj = float(self.inst.objective @ x)
        if obj < self.inc_obj:
            self.incumbent = x.copy()
            self.incumbent[self.bin_cols] = np.round(self.incumbent[self.bin_cols])
            self.inc_obj = obj
            return True
        return False

    def _try_point(self, x: np.ndarray) -> bool:
        """Take ``x`` as it is when feasible, else fix its rounded binaries and solve the rest."""
        if x.shape == (self.inst.n_cols,) and evaluate_incumbent(x, self.inst).feasible(self.opts):
            return self._accept(LPResult("optimal", x, float(self.inst.objective @ x)))
        fixed = {int(c): (float(round(x[c])),) * 2 for c in self.bin_cols}
        lp = self.cut_loop(fixed, None, integral_only=True)
        return lp.status == "optimal" and self._accept(lp)

    def _round_in_place(self, x: np.ndarray) -> np.ndarray:
        """Alternative optimum of the node LP with as many binaries rounded as feasibility allows.

        Binaries take the heuristic's values; any binary touching a row that
        this breaks falls back to its LP value. The continuous part is never
        moved, so the point stays feasible for the node and, when the rounded
        binaries carry no cost, optimal for it. If every binary ends up
        integral the point is also offered as an incumbent.
        """
        if self.heuristic is None:
            return x
        assignment = self.heuristic(x, self.inst)
        if not assignment:
            return x
        cols = np.fromiter(assignment.keys(), dtype=np.int64)
        vals = np.fromiter(assignment.values(), dtype=float)
        keep = (vals >= self.core.cur_lb[cols] - 1e-9) & (vals <= self.core.cur_ub[cols] + 1e-9)
        keep &= self.inst.objective[cols] == 0.0
        cols, vals = cols[keep], vals[keep]
        mat = self.matrix
        for _ in range(len(cols) + 1):
            y = x.copy()
            y[cols] = vals
            ax = mat @ y
            bad = np.flatnonzero((ax < self.inst.row_lo - 1e-9) | (ax > self.inst.row_hi + 1e-9))
            if bad.size == 0:
                break
            touched = np.unique(mat[bad].indices)
            keep = ~np.isin(cols, touched)
            if keep.all():
                return x
            cols, vals = cols[keep], vals[keep]
        else:
            return x
        if self._fractionality(y) <= self.opts.integer_tol and self._cone_feasible(y):
            if self._accept(LPResult("optimal", y, float(self.inst.objective @ y))):
                self.emit(f"incumbent {self.inc_obj:.10g} (rounded point)", level=1)
        return y

    def _run_heuristic(self, x: np.ndarray, node_fixed: dict) -> None:
        if self.heuristic is None:
            return
        assignment = self.heuristic(x, self.inst)
        if not assignment:
            return
        for col, (lo, hi) in node_fixed.items():
            if col in assignment and not (lo - 1e-9 <= assignment[col] <= hi + 1e-9):
                return
        fixed = {int(c): (float(v), float(v)) for c, v in assignment.items()}
        lp = self.cut_loop(fixed, None, stop_at=self.prune_level(), integral_only=True)
        if lp.status == "optimal" and self._accept(lp):
            self.emit(f"heuristic incumbent {self.inc_obj:.10g}", level=1)

    # ---- main loop
    def run(self) -> SolveResult:
        opts = self.opts

        root = BBNode(self._new_id(), 0, self.lower_bound)
        heap: list[tuple[float, int, BBNode]] = []
        plunge: list[BBNode] = [root]
        if self.gap(self.lower_bound) <= opts.rel_gap_tol:
            plunge = []  # a known bound already certifies the incumbent
        closed_bound = math.inf  # least bound over every subtree closed so far
        status = None
        self.emit(f"{'node':>8} {'depth':>5} {'bound':>16} {'incumbent':>16} {'gap':>10} {'cuts':>8}")

        while plunge or heap:
            if self.nodes >= opts.max_nodes:
                status = "node_limit"
                break
            if self.elapsed() > opts.time_limit_s:
                status = "time_limit"
                break
            node = plunge.pop() if plunge else heapq.heappop(heap)[2]
            if node.bound >= self.prune_level():
                closed_bound = min(closed_bound, node.bound)
                continue
            self.nodes += 1
            lp = self.cut_loop(node.fixed, node, stop_at=self.prune_level())
            if lp.status == "time_limit":
                plunge.append(node)  # unfinished, its inherited bound stays open
                status = "time_limit"
                break
            if lp.status == "error":
                raise SolveError(f"LP failure at node {node.id}", "error")
            if lp.status == "infeasible":
                self._log_node(node, math.inf)
                continue
            node.bound = max(node.bound, lp.objective)
            self._log_node(node, node.bound)
            if node.bound >= self.prune_level():
                closed_bound = min(closed_bound, node.bound)
                continue
            x, var = self._branch_point(lp.x)
            if var is None and not self._cone_feasible(x):
                # integral but not yet cone-feasible: keep tightening without the stall rule
                lp = self.cut_loop(node.fixed, node, integral_only=True)
                if lp.status == "time_limit":
                    plunge.append(node)
                    status = "time_limit"
                    break
                if lp.status != "optimal":
                    continue
                node.bound = max(node.bound, lp.objective)
                x, var = self._branch_point(lp.x)
            if var is None:
                if self._accept(LPResult("optimal", x, float(self.inst.objective @ x))):
                    self.emit(f"incumbent {self.inc_obj:.10g} at node {node.id}", level=1)
                closed_bound = min(closed_bound, node.bound)
                continue
            if node.bound >= self.prune_level():
                closed_bound = min(closed_bound, node.bound)
                continue
            if self.nodes == 1 or self.incumbent is None or self.nodes % 25 == 0:
                self._run_heuristic(x, node.fixed)
                self.core.apply(node.fixed)
            val = x[var]
            down = BBNode(self._new_id(), node.depth + 1, node.bound, {**node.fixed, var: (0.0, math.floor(val))})
            up = BBNode(self._new_id(), node.depth + 1, node.bound, {**node.fixed, var: (math.ceil(val), 1.0)})
            if self.incumbent is None:
                # depth-first plunge, nearer integer explored first
                plunge.extend([down, up] if val >= 0.5 else [up, down])
            else:
                while plunge:
                    n = plunge.pop()
                    heapq.heappush(heap, (n.bound, n.id, n))
                heapq.heappush(heap, (down.bound, down.id, down))
                heapq.heappush(heap, (up.bound, up.id, up))

        open_bounds = [n.bound for n in plunge] + [entry[0] for entry in heap]
        best_bound = max(min([closed_bound, *open_bounds]), self.lower_bound)
        if self.incumbent is not None:
            best_bound = min(best_bound, self.inc_obj)
        gap = self.gap(best_bound)
        if status is None:
            status = "optimal" if self.incumbent is not None else "infeasible"
            if status == "optimal" and gap > opts.rel_gap_tol:
                status = "gap_limit"
        runtime = self.elapsed()
        self.emit(f"status={status} objective={self.inc_obj:.10g} bound={best_bound:.10g} "
                  f"gap={gap:.3e} nodes={self.nodes} cuts={len(self.cuts)} time={runtime:.2f}s", level=1)
        return SolveResult(status, self.incumbent, self.inc_obj, best_bound, gap,
                           self.nodes, len(self.cuts), runtime, self.log)

    def _branch_point(self, x: np.ndarray) -> tuple[np.ndarray, int | None]:
        var = select_branch_var(x, self.inst, self.opts.integer_tol)
        if var is None:
            return x, None
        x = self._round_in_place(x)
        return x, select_branch_var(x, self.inst, self.opts.integer_tol)

    def _cone_feasible(self, x: np.ndarray) -> bool:
        return all(cone_residual(b, x) <= self.opts.cone_feas_tol for b in self.inst.cones)

    def _new_id(self) -> int:
        self.next_id += 1
        return self.next_id - 1

    def _log_node(self, node: BBNode, bound: float) -> None:
        inc = self.inc_obj if self.incumbent is not None else math.inf
        self.emit(f"{node.id:>8d} {node.depth:>5d} {bound:>16.9g} {inc:>16.9g} "
                  f"{self.gap(bound):>10.3e} {len(node.cuts):>8d}")


def solve(instance: ModelInstance, opts: SolverOptions | None = None,
          heuristic: Heuristic | None = None, warm_start: np.ndarray | None = None,
          lower_bound: float | None = None) -> SolveResult:
    """Branch and bound with outer-approximation cuts.

    ``lower_bound`` is a bound already proven elsewhere (for instance by
    solving the independent pieces of a separable instance); the search stops
    as soon as the incumbent is within the gap tolerance of it.
    """
    opts = opts or SolverOptions()
    if instance.n_cols == 0:
        return SolveResult("optimal", np.zeros(0), 0.0, 0.0, 0.0, 0, 0, 0.0)
    if np.any(instance.lb > instance.ub):
        return SolveResult("infeasible", None, math.inf, math.inf, math.inf, 0, 0, 0.0)
    _check(instance)
    lb = -math.inf if lower_bound is None else float(lower_bound)
    return _Search(instance, opts, heuristic, warm_start, lb).run()


def _check(instance: ModelInstance) -> None:
    n = instance.n_cols
    if len(instance.row_ptr) != instance.n_rows + 1:
        raise SolveError("malformed instance: row pointer length")
    if instance.row_idx.size and (instance.row_idx.min() < 0 or instance.row_idx.max() >= n):
        raise SolveError("malformed instance: column index out of range")
    for b in instance.cones:
        for c in b.columns():
            if not 0 <= c < n:
                raise SolveError(f"malformed instance: cone {b.name} references column {c}")
        for c in (b.a, b.b):
            if c is not None and instance.lb[c] < 0:
                raise SolveError(f"malformed instance: cone {b.name} has a negative lower bound")
