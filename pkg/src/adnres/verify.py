"""Invariant battery run on every reported schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .case import HOURS, PuNetwork
from .model import Schedule
from .powerflow import PowerFlowError, compare_lfb, schedule_topology, sweep_schedule
from .radiality import check_radial, consistent_with_x

CONE_TOL = 1e-5  # p.u., |J*U - (P^2 + Q^2)| on closed lines
V_TOL = 1e-4
LOSS_TOL = 1e-3
SOC_TOL = 1e-9
DER_TOL = 1e-8


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{self.name}: {'PASS' if self.passed else 'FAIL'}" + (f" ({self.detail})" if self.detail else "")


@dataclass
class VerificationReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def violations(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def get(self, name: str) -> Check:
        return next(c for c in self.checks if c.name == name)

    def to_text(self) -> str:
        lines = [c.line() for c in self.checks]
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"

    def add(self, name: str, passed: bool, detail: str = "") -> None:
        self.checks.append(Check(name, bool(passed), detail))


def verify_schedule(sched: Schedule, net: PuNetwork, sweep: bool = True) -> VerificationReport:
    rep = VerificationReport()
    case = net.case
    for mode in sched.modes:
        ms = sched.modes[mode]
        _radiality(rep, sched, mode)

        closed = ms.line_status == 1
        res = np.abs(sched.cone_residual(mode)[:, closed]) if closed.any() else np.zeros(1)
        worst = float(res.max()) if res.size else 0.0
        rep.add(f"cone_tightness[{mode}]", worst <= CONE_TOL, f"max |JU-(P^2+Q^2)| = {worst:.3e}")

        if mode == "c1":
            shed = float(np.abs(ms.p_shed).max(initial=0.0))
            rep.add("no_shedding[c1]", shed == 0.0, f"max shed = {shed:.3e}")
        else:
            n_on = int((ms.dg_active > 0.5).sum())
            rep.add("grid_forming[c2]", n_on == 1, f"{n_on} grid-forming DG")
            inj = float(max(np.abs(ms.pg).max(initial=0.0), np.abs(ms.qg).max(initial=0.0)))
            rep.add("islanded[c2]", inj == 0.0, f"max |PG|,|QG| = {inj:.3e}")

        ratio_err = 0.0
        for k, b in enumerate(sched.bus_ids):
            i = net.bus_index(b)
            if net.p_load[i] <= 0:
                continue
            want = ms.p_shed[:, k] * net.q_load[i] / net.p_load[i]
            ratio_err = max(ratio_err, float(np.abs(ms.q_shed[:, k] - want).max()))
        rep.add(f"shed_power_factor[{mode}]", ratio_err <= DER_TOL, f"max deviation = {ratio_err:.3e}")

        _storage(rep, sched, net, mode)
        wt_err = 0.0
        if ms.p_wt.size:
            wt_err = float(max((-ms.p_wt).max(), (ms.p_wt - ms.p_wta).max(), 0.0))
        rep.add(f"wind_limits[{mode}]", wt_err <= DER_TOL, f"max excess = {wt_err:.3e}")

        wedge = disc = 0.0
        for k, g in enumerate(case.der.sync_dgs):
            pf = g.pf_normal if mode == "c1" else g.pf_emergency
            tan = math.tan(math.acos(pf))
            p, q = ms.p_dg[:, k], ms.q_dg[:, k]
            wedge = max(wedge, float((np.abs(q) - tan * p).max()))
            s = g.s_max / case.base_mva
            disc = max(disc, float((np.hypot(p, q) - s).max()))
        rep.add(f"dg_capability[{mode}]", wedge <= DER_TOL and disc <= DER_TOL,
                f"wedge excess = {max(wedge, 0.0):.3e}, disc excess = {max(disc, 0.0):.3e}")

        if sweep:
            _sweep(rep, sched, mode)
    return rep


def _radiality(rep: VerificationReport, sched: Schedule, mode: str) -> None:
    topo, _ = schedule_topology(sched, mode)
    verdict = check_radial(topo)
    status = sched.modes[mode].line_status
    x = {}
    for k, (a, b) in enumerate(sched.line_ends):
        x[(a, b)] = int(status[k])
        x[(b, a)] = int(status[k])
    ok, problems = consistent_with_x(topo, x)
    detail = f"{verdict.verdict}, {int(status.sum())} closed, sum X = {sum(x.values())}"
    if verdict.witness:
        detail += f", witness {verdict.witness}"
    if problems:
        detail += "; " + "; ".join(problems)
    rep.add(f"radiality[{mode}]", verdict.radial and ok, detail)


def _storage(rep: VerificationReport, sched: Schedule, net: PuNetwork, mode: str) -> None:
    ms = sched.modes[mode]
    if not sched.ess_buses:
        return
    units = net.case.der.ess_units
    both = (ms.ich > 0.5) & (ms.idch > 0.5)
    gated = ((ms.p_ch > DER_TOL) & (ms.ich < 0.5)) | ((ms.p_dis > DER_TOL) & (ms.idch < 0.5))
    rep.add(f"ess_exclusive[{mode}]", not both.any() and not gated.any(),
            f"{int(both.sum())} hours charging and discharging, {int(gated.sum())} ungated")
    base = sched.base_mva
    cyc = float(np.abs(ms.soc[HOURS - 1] - ms.soc0).max()) * base
    rep.add(f"ess_cyclic[{mode}]", cyc <= SOC_TOL, f"|SOC(24)-SOC(0)| = {cyc:.3e} MWh")
    cap = np.array([e.soc_max for e in units]) / base
    out = float(max((-ms.soc).max(), (ms.soc - cap).max(), 0.0)) * base
    rep.add(f"ess_soc_limits[{mode}]", out <= SOC_TOL, f"max excess = {out:.3e} MWh")


def _sweep(rep: VerificationReport, sched: Schedule, mode: str) -> None:
    dv = dl = 0.0
    failed = []
    try:
        for t in range(1, HOURS + 1):
            pf = sweep_schedule(sched, mode, t)
            cmp = compare_lfb(pf, sched, mode, t, V_TOL, LOSS_TOL)
            dv = max(dv, cmp.max_dv)
            dl = max(dl, cmp.rel_loss_diff)
            if not (cmp.passed and pf.converged):
                failed.append(t)
    except PowerFlowError as exc:
        rep.add(f"sweep[{mode}]", False, str(exc))
        return
    detail = f"max |dV| = {dv:.3e} p.u., max loss diff = {dl:.3e}"
    if failed:
        detail += f", hours {failed}"
    rep.add(f"sweep[{mode}]", not failed, detail)
