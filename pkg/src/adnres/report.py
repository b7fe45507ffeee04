"""CSV and text artifacts of a run, and the figure-data files built from schedule.csv."""
from __future__ import annotations

import csv
import math
from collections import defaultdict
from pathlib import Path

import numpy as np

from .case import HOURS, PuNetwork
from .model import ModeSchedule, Schedule

SCHEDULE_HEADER = ("mode", "hour", "element_type", "element", "quantity", "value")
TOPOLOGY_HEADER = ("mode", "line", "from_bus", "to_bus", "kind", "status")
SUMMARY_KEYS = ("case", "modes", "status", "OF1", "OF2", "OF", "RI", "OF1_opt", "OF2_opt",
                "gap", "bound", "nodes", "cuts", "runtime")
FIGURE_FILES = ("fig_wind.csv", "fig_soc.csv", "fig_substation.csv", "fig_shedding.csv", "fig_dg.csv")


class ReportError(ValueError):
    pass


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


# ----------------------------------------------------------- schedule.csv

def schedule_rows(sched: Schedule):
    """Long-format rows, all power quantities in p.u.; hour 0 holds hour-invariant values."""
    yield ("-", 0, "case", 0, "base_mva", sched.base_mva)
    for mode, ms in sched.modes.items():
        for k, lid in enumerate(sched.line_ids):
            yield (mode, 0, "line", lid, "status", int(ms.line_status[k]))
        for k, b in enumerate(sched.dg_buses):
            yield (mode, 0, "dg", b, "active", ms.dg_active[k])
        for k, b in enumerate(sched.ess_buses):
            yield (mode, 0, "ess", b, "SOC", ms.soc0[k])
        v = ms.v
        for t in range(HOURS):
            h = t + 1
            for k, b in enumerate(sched.bus_ids):
                yield (mode, h, "bus", b, "V", v[t, k])
                yield (mode, h, "bus", b, "U", ms.u[t, k])
                yield (mode, h, "bus", b, "PL", sched.p_demand[t, k])
                yield (mode, h, "bus", b, "QL", sched.q_demand[t, k])
                yield (mode, h, "bus", b, "PLsh", ms.p_shed[t, k])
                yield (mode, h, "bus", b, "QLsh", ms.q_shed[t, k])
            for k, lid in enumerate(sched.line_ids):
                yield (mode, h, "line", lid, "P", ms.p_flow[t, k])
                yield (mode, h, "line", lid, "Q", ms.q_flow[t, k])
                yield (mode, h, "line", lid, "J", ms.j[t, k])
            yield (mode, h, "substation", sched.slack_bus, "PG", ms.pg[t])
            yield (mode, h, "substation", sched.slack_bus, "QG", ms.qg[t])
            for k, b in enumerate(sched.dg_buses):
                yield (mode, h, "dg", b, "P", ms.p_dg[t, k])
                yield (mode, h, "dg", b, "Q", ms.q_dg[t, k])
            for k, b in enumerate(sched.wt_buses):
                yield (mode, h, "wind", b, "P", ms.p_wt[t, k])
                yield (mode, h, "wind", b, "PA", ms.p_wta[t, k])
            for k, b in enumerate(sched.ess_buses):
                yield (mode, h, "ess", b, "PC", ms.p_ch[t, k])
                yield (mode, h, "ess", b, "PD", ms.p_dis[t, k])
                yield (mode, h, "ess", b, "SOC", ms.soc[t, k])
                yield (mode, h, "ess", b, "ich", ms.ich[t, k])
                yield (mode, h, "ess", b, "idch", ms.idch[t, k])


def write_schedule(sched: Schedule, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCHEDULE_HEADER)
        for mode, hour, etype, elem, qty, val in schedule_rows(sched):
            w.writerow((mode, hour, etype, elem, qty, val if isinstance(val, int) else _fmt(val)))


def read_schedule_table(path: Path) -> tuple[float, dict]:
    """Parse schedule.csv into ``{(mode, element_type, element, quantity): values}``.

    Values are a length-25 array indexed by hour (slot 0 for hour-invariant data).
    """
    table: dict = defaultdict(lambda: np.full(HOURS + 1, np.nan))
    base = None
    try:
        with open(path, newline="") as fh:
            rows = csv.reader(fh)
            header = next(rows, None)
            if tuple(header or ()) != SCHEDULE_HEADER:
                raise ReportError(f"{path}: unexpected header {header}")
            for n, row in enumerate(rows, start=2):
                if len(row) != len(SCHEDULE_HEADER):
                    raise ReportError(f"{path}:{n}: expected {len(SCHEDULE_HEADER)} fields, got {len(row)}")
                mode, hour, etype, elem, qty, val = row
                hour, elem, val = int(hour), int(elem), float(val)
                if not 0 <= hour <= HOURS:
                    raise ReportError(f"{path}:{n}: hour {hour} out of range")
                if etype == "case":
                    if qty == "base_mva":
                        base = val
                    continue
                table[(mode, etype, elem, qty)][hour] = val
    except (OSError, StopIteration) as exc:
        raise ReportError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, ReportError):
            raise
        raise ReportError(f"{path}: malformed value ({exc})") from exc
    if base is None:
        raise ReportError(f"{path}: missing base_mva row")
    return base, dict(table)


def _modes_in(table: dict) -> list[str]:
    return sorted({k[0] for k in table})


def read_schedule(path: Path, net: PuNetwork) -> Schedule:
    """Rebuild a Schedule from schedule.csv, taking the network layout from the case."""
    base, table = read_schedule_table(path)
    case = net.case
    dgs, wts, ess = case.der.sync_dgs, case.der.wind_units, case.der.ess_units

    def hourly(mode, etype, elems, qty):
        out = np.zeros((HOURS, len(elems)))
        for k, e in enumerate(elems):
            vals = table.get((mode, etype, e, qty))
            if vals is not None:
                out[:, k] = np.nan_to_num(vals[1:])
        return out

    def fixed(mode, etype, elems, qty):
        out = np.zeros(len(elems))
        for k, e in enumerate(elems):
            vals = table.get((mode, etype, e, qty))
            if vals is not None and not math.isnan(vals[0]):
                out[k] = vals[0]
        return out

    bus_ids = list(net.bus_ids)
    line_ids = [ln.id for ln in case.lines]
    dg_b, wt_b, es_b = [g.bus for g in dgs], [w.bus for w in wts], [e.bus for e in ess]
    slack = net.bus_ids[net.slack]
    modes = {}
    for mode in _modes_in(table):
        if mode not in ("c1", "c2"):
            raise ReportError(f"{path}: unknown mode {mode!r}")
        status = fixed(mode, "line", line_ids, "status")
        modes[mode] = ModeSchedule(
            mode=mode,
            u=hourly(mode, "bus", bus_ids, "U"),
            j=hourly(mode, "line", line_ids, "J"),
            p_flow=hourly(mode, "line", line_ids, "P"),
            q_flow=hourly(mode, "line", line_ids, "Q"),
            line_status=np.round(status).astype(int),
            pg=hourly(mode, "substation", [slack], "PG")[:, 0],
            qg=hourly(mode, "substation", [slack], "QG")[:, 0],
            p_dg=hourly(mode, "dg", dg_b, "P"),
            q_dg=hourly(mode, "dg", dg_b, "Q"),
            p_wt=hourly(mode, "wind", wt_b, "P"),
            p_wta=hourly(mode, "wind", wt_b, "PA"),
            p_shed=hourly(mode, "bus", bus_ids, "PLsh"),
            q_shed=hourly(mode, "bus", bus_ids, "QLsh"),
            p_ch=hourly(mode, "ess", es_b, "PC"),
            p_dis=hourly(mode, "ess", es_b, "PD"),
            soc=hourly(mode, "ess", es_b, "SOC"),
            soc0=fixed(mode, "ess", es_b, "SOC"),
            ich=hourly(mode, "ess", es_b, "ich"),
            idch=hourly(mode, "ess", es_b, "idch"),
            dg_active=fixed(mode, "dg", dg_b, "active"),
        )
    if not modes:
        raise ReportError(f"{path}: no schedule rows")
    first = next(iter(modes))
    return Schedule(
        case_name=case.name, base_mva=base, bus_ids=net.bus_ids,
        line_ids=tuple(line_ids),
        line_ends=tuple((ln.from_bus, ln.to_bus) for ln in case.lines),
        r=net.r.copy(), x=net.x.copy(),
        dg_buses=tuple(dg_b), wt_buses=tuple(wt_b), ess_buses=tuple(es_b),
        modes=modes,
        p_demand=hourly(first, "bus", bus_ids, "PL"),
        q_demand=hourly(first, "bus", bus_ids, "QL"),
        slack_bus=slack,
    )


# ------------------------------------------------------- other artifacts

def write_topology(sched: Schedule, net: PuNetwork, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TOPOLOGY_HEADER)
        for mode, ms in sched.modes.items():
            for k, ln in enumerate(net.case.lines):
                w.writerow((mode, ln.id, ln.from_bus, ln.to_bus, ln.kind, int(ms.line_status[k])))


def summary_fields(result) -> dict[str, str]:
    split = result.split
    fields = {
        "case": result.net.case.name,
        "modes": ",".join(result.modes),
        "status": result.status,
        "OF1": split.of1 if split else math.nan,
        "OF2": split.of2 if split else math.nan,
        "OF": split.of if split else math.nan,
        "RI": split.ri if split else math.nan,
        "OF1_opt": split.of1_opt if split else math.nan,
        "OF2_opt": split.of2_opt if split else math.nan,
        "gap": result.gap,
        "bound": result.bound,
        "nodes": result.nodes,
        "cuts": result.cuts,
        "runtime": result.runtime,
    }
    return {k: (v if isinstance(v, (str, int)) else _fmt(v)) for k, v in fields.items()}


def write_summary(result, path: Path) -> None:
    fields = summary_fields(result)
    path.write_text("".join(f"{k}={fields[k]}\n" for k in SUMMARY_KEYS))


def read_summary(path: Path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


# ---------------------------------------------------------- figure data

def _figure_columns(base: float, table: dict) -> dict[str, list[tuple[str, np.ndarray]]]:
    modes = _modes_in(table)

    def series(mode, etype, qty, scale=base):
        keys = sorted(k for k in table if k[0] == mode and k[1] == etype and k[3] == qty)
        return [(k[2], np.nan_to_num(table[k][1:]) * scale) for k in keys]

    figs: dict[str, list[tuple[str, np.ndarray]]] = {f: [] for f in FIGURE_FILES}
    for m in modes:
        for b, v in series(m, "wind", "P"):
            figs["fig_wind.csv"].append((f"{m}_wt{b}_mw", v))
        for b, v in series(m, "wind", "PA"):
            figs["fig_wind.csv"].append((f"{m}_wt{b}_available_mw", v))
        for b, v in series(m, "ess", "SOC"):
            figs["fig_soc.csv"].append((f"{m}_ess{b}_soc_mwh", v))
        for qty, unit in (("PG", "mw"), ("QG", "mvar")):
            vals = series(m, "substation", qty)
            total = sum((v for _, v in vals), np.zeros(HOURS))
            figs["fig_substation.csv"].append((f"{m}_{qty.lower()}_{unit}", total))
        shed = sum((v for _, v in series(m, "bus", "PLsh")), np.zeros(HOURS))
        figs["fig_shedding.csv"].append((f"{m}_shed_mw", shed))
        for b, v in series(m, "dg", "P"):
            figs["fig_dg.csv"].append((f"{m}_dg{b}_p_mw", v))
        for b, v in series(m, "dg", "Q"):
            figs["fig_dg.csv"].append((f"{m}_dg{b}_q_mvar", v))
    return figs


def write_figure_data(schedule_csv: Path, out_dir: Path) -> list[Path]:
    """One columnar file per figure: hour plus one column per mode and unit, 24 rows each."""
    base, table = read_schedule_table(schedule_csv)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, cols in _figure_columns(base, table).items():
        path = out_dir / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["hour", *(c for c, _ in cols)])
            for t in range(HOURS):
                w.writerow([t + 1, *(_fmt(v[t]) for _, v in cols)])
        written.append(path)
    return written
