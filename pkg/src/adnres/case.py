"""Network case ingestion, validation and per-unit conversion.

Case files are TOML documents (``format_version = 1``). Three cases ship with
the package and resolve by name: ``ieee33``, ``toy6`` and ``2bus``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

FORMAT_VERSION = 1
HOURS = 24
BUILTIN_CASES = ("ieee33", "toy6", "2bus")


class CaseError(ValueError):
    """Raised when a case cannot be parsed or violates its invariants."""

    def __init__(self, message: str, violations: Sequence["Violation"] = ()):
        super().__init__(message)
        self.violations = list(violations)


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str  # "slack" | "load"
    p_load_peak: float  # MW
    q_load_peak: float  # MVar


@dataclass(frozen=True)
class Line:
    id: int
    from_bus: int
    to_bus: int
    r_ohm: float
    x_ohm: float
    i_max_amp: float
    kind: str = "main"  # "main" | "tie"
    switchable: bool = True


@dataclass(frozen=True)
class WindUnit:
    bus: int
    p_rated: float  # MW
    v_cut_in: float
    v_rated: float
    v_cut_out: float


@dataclass(frozen=True)
class EssUnit:
    bus: int
    soc_max: float  # MWh
    p_max: float  # MW
    soc_initial: float  # MWh
    eff_charge: float = 0.95
    eff_discharge: float = 0.95


@dataclass(frozen=True)
class SyncDG:
    bus: int
    s_max: float  # MVA
    pf_normal: float
    pf_emergency: float


@dataclass(frozen=True)
class DERSpec:
    wind_units: tuple[WindUnit, ...] = ()
    ess_units: tuple[EssUnit, ...] = ()
    sync_dgs: tuple[SyncDG, ...] = ()


@dataclass(frozen=True)
class Profiles:
    load_factor: tuple[float, ...]
    wind_speed: tuple[float, ...]


@dataclass(frozen=True)
class NetworkCase:
    name: str
    base_kv: float
    base_mva: float
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    der: DERSpec
    profiles: Profiles
    voltage_bounds: dict  # mode -> (v_min, v_max) in p.u.
    substation_limits: tuple[float, float]  # (P_max MW, Q_max MVar)

    @property
    def slack_bus(self) -> int:
        return next(b.id for b in self.buses if b.kind == "slack")

    @property
    def total_peak_load(self) -> tuple[float, float]:
        return (sum(b.p_load_peak for b in self.buses),
                sum(b.q_load_peak for b in self.buses))

    def with_profiles(self, profiles: Profiles) -> "NetworkCase":
        return replace(self, profiles=profiles)


@dataclass(frozen=True)
class Violation:
    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.location}: {self.message}"


@dataclass(frozen=True)
class PuNetwork:
    """Per-unit view of a case. Bus and line order follow the case order."""

    case: NetworkCase
    z_base: float
    i_base: float
    bus_ids: tuple[int, ...]
    slack: int  # index into bus_ids
    p_load: np.ndarray  # peak, p.u.
    q_load: np.ndarray
    line_from: np.ndarray  # bus indices
    line_to: np.ndarray
    r: np.ndarray
    x: np.ndarray
    i_max: np.ndarray
    load_factor: np.ndarray  # (24,)
    wind_avail: np.ndarray  # (n_wind, 24) p.u.

    @property
    def n_bus(self) -> int:
        return len(self.bus_ids)

    @property
    def n_line(self) -> int:
        return len(self.r)

    def bus_index(self, bus_id: int) -> int:
        return self.bus_ids.index(bus_id)

    def to_physical_power(self, value):
        return value * self.case.base_mva

    def to_physical_impedance(self, value):
        return value * self.z_base

    def to_physical_current(self, value):
        return value * self.i_base


# ---------------------------------------------------------------- parsing

def _require(table: dict, key: str, where: str, types=(int, float)):
    if key not in table:
        raise CaseError(f"{where}: missing field '{key}'")
    value = table[key]
    if isinstance(value, bool) or not isinstance(value, types):
        raise CaseError(f"{where}: field '{key}' has wrong type {type(value).__name__}")
    return value


def _num(table: dict, key: str, where: str, default=None) -> float:
    if default is not None and key not in table:
        return float(default)
    return float(_require(table, key, where))


def parse_case(data: dict) -> NetworkCase:
    """Build a NetworkCase from a decoded case document without validating it."""
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise CaseError(f"unsupported format_version {version!r} (expected {FORMAT_VERSION})")
    for section in ("base", "buses", "lines", "profiles", "bounds"):
        if section not in data:
            raise CaseError(f"missing section '{section}'")

    base = data["base"]
    base_kv = _num(base, "kv", "base")
    base_mva = _num(base, "mva", "base", default=1.0)

    buses = []
    for k, row in enumerate(data["buses"]):
        where = f"buses[{k}]"
        kind = _require(row, "kind", where, str)
        buses.append(Bus(int(_require(row, "id", where, int)), kind,
                         _num(row, "p_mw", where), _num(row, "q_mvar", where)))

    switchable = data.get("switchable", "all")
    if switchable != "all" and not isinstance(switchable, list):
        raise CaseError("switchable must be \"all\" or a list of line ids")
    lines = []
    for k, row in enumerate(data["lines"]):
        where = f"lines[{k}]"
        line_id = int(_require(row, "id", where, int))
        lines.append(Line(
            id=line_id,
            from_bus=int(_require(row, "from", where, int)),
            to_bus=int(_require(row, "to", where, int)),
            r_ohm=_num(row, "r_ohm", where),
            x_ohm=_num(row, "x_ohm", where),
            i_max_amp=_num(row, "i_max_amp", where),
            kind=row.get("kind", "main"),
            switchable=switchable == "all" or line_id in switchable,
        ))

    wind = tuple(
        WindUnit(int(_require(w, "bus", f"wind[{k}]", int)), _num(w, "p_rated_mw", f"wind[{k}]"),
                 _num(w, "v_cut_in", f"wind[{k}]"), _num(w, "v_rated", f"wind[{k}]"),
                 _num(w, "v_cut_out", f"wind[{k}]"))
        for k, w in enumerate(data.get("wind", [])))
    ess = tuple(
        EssUnit(int(_require(e, "bus", f"ess[{k}]", int)), _num(e, "soc_max_mwh", f"ess[{k}]"),
                _num(e, "p_max_mw", f"ess[{k}]"), _num(e, "soc_initial_mwh", f"ess[{k}]"),
                _num(e, "eff_charge", f"ess[{k}]", default=0.95),
                _num(e, "eff_discharge", f"ess[{k}]", default=0.95))
        for k, e in enumerate(data.get("ess", [])))
    dgs = tuple(
        SyncDG(int(_require(g, "bus", f"dg[{k}]", int)), _num(g, "s_max_mva", f"dg[{k}]"),
               _num(g, "pf_normal", f"dg[{k}]"), _num(g, "pf_emergency", f"dg[{k}]"))
        for k, g in enumerate(data.get("dg", [])))

    prof = data["profiles"]
    try:
        profiles = Profiles(tuple(float(v) for v in prof["load_factor"]),
                            tuple(float(v) for v in prof["wind_speed"]))
    except KeyError as exc:
        raise CaseError(f"profiles: missing field {exc}") from None
    except (TypeError, ValueError):
        raise CaseError("profiles: values must be numbers") from None

    bounds = data["bounds"]
    vb = {}
    for mode in ("c1", "c2"):
        pair = bounds.get(mode)
        if not isinstance(pair, list) or len(pair) != 2:
            raise CaseError(f"bounds: '{mode}' must be a [v_min, v_max] pair")
        vb[mode] = (float(pair[0]), float(pair[1]))
    limits = (_num(bounds, "substation_p_max_mw", "bounds", default=10.0),
              _num(bounds, "substation_q_max_mvar", "bounds", default=10.0))

    return NetworkCase(str(data.get("name", "case")), base_kv, base_mva, tuple(buses),
                       tuple(lines), DERSpec(wind, ess, dgs), profiles, vb, limits)


def load_case(text: str) -> NetworkCase:
    """Parse case-file text, or resolve a built-in case name, and validate it."""
    if text.strip() in BUILTIN_CASES:
        text = builtin_case_text(text.strip())
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        if "\n" not in text.strip() and "=" not in text:
            raise CaseError(f"unknown built-in case '{text.strip()}'") from None
        raise CaseError(f"malformed case file: {exc}") from None
    case = parse_case(data)
    report = validate_case(case)
    if report:
        raise CaseError("invalid case: " + "; ".join(map(str, report)), report)
    return case


def builtin_case_text(name: str) -> str:
    if name not in BUILTIN_CASES:
        raise CaseError(f"unknown built-in case '{name}'")
    return resources.files("adnres.data").joinpath(f"{name}.toml").read_text()


def resolve_case(source: str | Path) -> NetworkCase:
    """Load a case from a built-in name or a file path."""
    source = str(source)
    if source in BUILTIN_CASES:
        return load_case(source)
    path = Path(source)
    if not path.exists():
        raise CaseError(f"unknown built-in case or missing file '{source}'")
    return load_case(path.read_text())


def load_profiles(text: str) -> Profiles:
    """Parse a standalone profile override (a TOML ``[profiles]`` table)."""
    data = tomllib.loads(text)
    prof = data.get("profiles", data)
    return Profiles(tuple(float(v) for v in prof["load_factor"]),
                    tuple(float(v) for v in prof["wind_speed"]))


# ------------------------------------------------------------- validation

def validate_case(case: NetworkCase) -> list[Violation]:
    out: list[Violation] = []
    add = lambda loc, msg: out.append(Violation(loc, msg))  # noqa: E731

    if case.base_kv <= 0 or case.base_mva <= 0:
        add("base", "base_kv and base_mva must be positive")

    slack = [b.id for b in case.buses if b.kind == "slack"]
    if len(slack) != 1:
        add("buses", f"exactly one slack bus required, found {len(slack)} {slack}")
    ids = [b.id for b in case.buses]
    if len(set(ids)) != len(ids):
        add("buses", "duplicate bus ids")
    for b in case.buses:
        loc = f"bus {b.id}"
        if b.id < 1:
            add(loc, "bus id must be >= 1")
        if b.kind not in ("slack", "load"):
            add(loc, f"unknown kind '{b.kind}'")
        if b.p_load_peak < 0 or b.q_load_peak < 0:
            add(loc, "negative load")
        if b.kind == "slack" and (b.p_load_peak != 0 or b.q_load_peak != 0):
            add(loc, "slack bus must carry zero load")

    known = set(ids)
    pairs = set()
    line_ids = [ln.id for ln in case.lines]
    if len(set(line_ids)) != len(line_ids):
        add("lines", "duplicate line ids")
    for ln in case.lines:
        loc = f"line {ln.id}"
        if ln.from_bus not in known or ln.to_bus not in known:
            add(loc, "references an unknown bus")
        if ln.from_bus == ln.to_bus:
            add(loc, "from_bus equals to_bus")
        pair = frozenset((ln.from_bus, ln.to_bus))
        if pair in pairs:
            add(loc, f"duplicate line between buses {sorted(pair)}")
        pairs.add(pair)
        if ln.r_ohm < 0 or ln.x_ohm < 0:
            add(loc, "negative impedance")
        if ln.r_ohm == 0 and ln.x_ohm == 0:
            add(loc, "zero impedance")
        if not ln.i_max_amp > 0:
            add(loc, "i_max_amp must be positive")
        if ln.kind not in ("main", "tie"):
            add(loc, f"unknown kind '{ln.kind}'")

    if len(case.lines) < len(case.buses) - 1:
        add("lines", "fewer lines than buses - 1; no spanning tree exists")
    elif not _connected(ids, [(ln.from_bus, ln.to_bus) for ln in case.lines]):
        add("lines", "network graph is disconnected")

    for k, w in enumerate(case.der.wind_units):
        loc = f"wind[{k}]"
        if w.bus not in known:
            add(loc, f"bus {w.bus} not in network")
        if not (w.v_cut_in < w.v_rated < w.v_cut_out):
            add(loc, "wind-speed ordering violated: need v_cut_in < v_rated < v_cut_out")
        if w.p_rated < 0:
            add(loc, "negative rated power")
    for k, e in enumerate(case.der.ess_units):
        loc = f"ess[{k}]"
        if e.bus not in known:
            add(loc, f"bus {e.bus} not in network")
        if not (0 < e.soc_initial <= e.soc_max):
            add(loc, "need 0 < soc_initial <= soc_max")
        if e.p_max < 0 or e.p_max * 1.0 > e.soc_max:
            add(loc, "need 0 <= p_max and p_max * 1 h <= soc_max")
        for name, eff in (("eff_charge", e.eff_charge), ("eff_discharge", e.eff_discharge)):
            if not (0 < eff <= 1):
                add(loc, f"{name} must lie in (0, 1]")
    for k, g in enumerate(case.der.sync_dgs):
        loc = f"dg[{k}]"
        if g.bus not in known:
            add(loc, f"bus {g.bus} not in network")
        if g.s_max < 0:
            add(loc, "negative capacity")
        for name, pf in (("pf_normal", g.pf_normal), ("pf_emergency", g.pf_emergency)):
            if not (0 < pf <= 1):
                add(loc, f"{name} must lie in (0, 1]")

    for name, seq in (("load_factor", case.profiles.load_factor),
                      ("wind_speed", case.profiles.wind_speed)):
        loc = f"profiles.{name}"
        if len(seq) != HOURS:
            add(loc, f"expected {HOURS} entries, found {len(seq)}")
        if not all(math.isfinite(v) and v >= 0 for v in seq):
            add(loc, "entries must be finite and non-negative")
    if any(v <= 0 or v > 1 for v in case.profiles.load_factor):
        add("profiles.load_factor", "load factors must lie in (0, 1]")

    for mode in ("c1", "c2"):
        vmin, vmax = case.voltage_bounds.get(mode, (1.0, 0.0))
        if not (0 < vmin < vmax):
            add(f"bounds.{mode}", "need 0 < v_min < v_max")
        elif mode == "c1" and not (vmin <= 1.0 <= vmax):
            add("bounds.c1", "slack is held at 1 p.u.; need v_min <= 1 <= v_max")
    if any(v < 0 for v in case.substation_limits):
        add("bounds", "negative substation limits")
    return out


def _connected(nodes, edges) -> bool:
    if not nodes:
        return True
    adj = {n: [] for n in nodes}
    for a, b in edges:
        if a in adj and b in adj:
            adj[a].append(b)
            adj[b].append(a)
    seen = {nodes[0]}
    stack = [nodes[0]]
    while stack:
        for m in adj[stack.pop()]:
            if m not in seen:
                seen.add(m)
                stack.append(m)
    return len(seen) == len(adj)


# ------------------------------------------------------------- conversion

def to_per_unit(case: NetworkCase) -> PuNetwork:
    if case.base_kv <= 0 or case.base_mva <= 0:
        raise CaseError("base_kv and base_mva must be positive")
    z_base = case.base_kv ** 2 / case.base_mva
    i_base = case.base_mva * 1e3 / (math.sqrt(3) * case.base_kv)  # A
    ids = tuple(b.id for b in case.buses)
    index = {b: k for k, b in enumerate(ids)}
    wind = np.array([wind_availability(case.profiles, w) for w in case.der.wind_units],
                    dtype=float).reshape(len(case.der.wind_units), HOURS) / case.base_mva
    return PuNetwork(
        case=case,
        z_base=z_base,
        i_base=i_base,
        bus_ids=ids,
        slack=index[case.slack_bus],
        p_load=np.array([b.p_load_peak for b in case.buses]) / case.base_mva,
        q_load=np.array([b.q_load_peak for b in case.buses]) / case.base_mva,
        line_from=np.array([index[ln.from_bus] for ln in case.lines], dtype=int),
        line_to=np.array([index[ln.to_bus] for ln in case.lines], dtype=int),
        r=np.array([ln.r_ohm for ln in case.lines]) / z_base,
        x=np.array([ln.x_ohm for ln in case.lines]) / z_base,
        i_max=np.array([ln.i_max_amp for ln in case.lines]) / i_base,
        load_factor=np.array(case.profiles.load_factor, dtype=float),
        wind_avail=wind,
    )


def incidence(net: PuNetwork) -> tuple[np.ndarray, np.ndarray]:
    """Line-bus matrices A (+1 sending, -1 receiving) and B (sending end only).

    B carries the I^2 R term: with flows measured at the receiving end, the
    sending bus supplies the line loss.
    """
    A = np.zeros((net.n_line, net.n_bus))
    rows = np.arange(net.n_line)
    A[rows, net.line_from] = 1.0
    A[rows, net.line_to] = -1.0
    B = np.where(A > 0, 1.0, 0.0)
    return A, B


def wind_availability(profiles: Profiles, wt: WindUnit) -> list[float]:
    """Hourly available wind power (MW) from the piecewise power curve."""
    out = []
    for v in profiles.wind_speed:
        if v < wt.v_cut_in or v >= wt.v_cut_out:
            out.append(0.0)
        elif v < wt.v_rated:
            out.append(wt.p_rated * (v - wt.v_cut_in) / (wt.v_rated - wt.v_cut_in))
        else:
            out.append(wt.p_rated)
    return out
