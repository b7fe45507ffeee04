"""MPS export/import with QCMATRIX sections for the cone blocks.

Each cone ``sum p^2 <= a*b`` becomes a quadratic row ``sum p^2 - a*b <= 0``
(``<= a_const*b_const`` when both scale parts are constants). The fixed
layout needs names of at most eight characters, so rows and columns get
generated short names there; the JSON sidecar maps them back to model names
and equation tags.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import ConeBlock, ModelInstance, VarSpace

FORMATS = ("mps", "free-mps")
OBJ_ROW = "OBJ"
BIG = 1e30


class MPSError(ValueError):
    pass


def _num(v: float, width: int | None = None) -> str:
    """Shortest text that reads back as ``v``, squeezed into ``width`` characters if given."""
    s = repr(float(v))
    if s.endswith(".0"):
        s = s[:-2]
    s = s.replace("e-0", "e-").replace("e+0", "e+").replace("e+", "e")
    if width is None or len(s) <= width:
        return s
    for p in range(width, 0, -1):
        t = f"{v:.{p}g}".replace("e-0", "e-").replace("e+0", "e+").replace("e+", "e")
        if t.startswith(("0.", "-0.")):
            t = t.replace("0.", ".", 1)  # the leading zero costs a digit
        if len(t) <= width:
            return t
    raise MPSError(f"value {v!r} does not fit a {width}-character field")


@dataclass
class _Names:
    rows: list[str]
    cols: list[str]
    cones: list[str]


def _names(instance: ModelInstance, fixed: bool) -> _Names:
    if fixed:
        return _Names([f"R{k:07d}" for k in range(instance.n_rows)],
                      [f"C{k:07d}" for k in range(instance.n_cols)],
                      [f"Q{k:07d}" for k in range(len(instance.cones))])
    vs = instance.varspace
    return _Names([n.replace(" ", "_") for n in instance.row_name],
                  [vs.name(c).replace(" ", "_") for c in range(instance.n_cols)],
                  [(b.name or f"cone{k}").replace(" ", "_") for k, b in enumerate(instance.cones)])


class _Writer:
    def __init__(self, fixed: bool):
        self.fixed = fixed
        self.lines: list[str] = []

    def header(self, text: str) -> None:
        self.lines.append(text)

    def entry(self, f1: str = "", f2: str = "", f3: str = "", f4: str = "", f5: str = "", f6: str = ""):
        if not self.fixed:
            self.lines.append(" " + " ".join(t for t in (f1, f2, f3, f4, f5, f6) if t))
            return
        # columns 2-3, 5-12, 15-22, 25-36, 40-47, 50-61
        line = f" {f1:<2} {f2:<8}  {f3:<8}  {f4:>12}"
        if f5 or f6:
            line += f"   {f5:<8}  {f6:>12}"
        self.lines.append(line.rstrip())

    def num(self, v: float) -> str:
        return _num(v, 12 if self.fixed else None)


def write_mps(instance: ModelInstance, path: str | Path, fmt: str = "mps",
              name: str = "ADNRES") -> tuple[Path, Path]:
    """Write the instance and its sidecar; returns both paths."""
    if fmt not in FORMATS:
        raise MPSError(f"unsupported format {fmt!r}; choose from {', '.join(FORMATS)}")
    fixed = fmt == "mps"
    path = Path(path)
    nm = _names(instance, fixed)
    w = _Writer(fixed)
    w.header(f"NAME          {name[:8] if fixed else name}")
    w.header("ROWS")
    w.entry("N", OBJ_ROW)
    kinds = []
    for k in range(instance.n_rows):
        lo, hi = instance.row_lo[k], instance.row_hi[k]
        if lo == hi:
            kind = "E"
        elif math.isinf(lo) and math.isinf(hi):
            raise MPSError(f"row {instance.row_name[k]} is free")
        elif math.isinf(lo):
            kind = "L"
        else:
            kind = "G"  # a finite upper end goes to RANGES
        kinds.append(kind)
        w.entry(kind, nm.rows[k])
    for k in range(len(instance.cones)):
        w.entry("L", nm.cones[k])

    w.header("COLUMNS")
    csc = instance.matrix().tocsc()
    integral = instance.integral
    in_int = False
    marker = 0
    for c in range(instance.n_cols):
        if integral[c] and not in_int:
            w.entry("", f"M{marker:07d}", "'MARKER'", "", "'INTORG'")
            in_int = True
        elif not integral[c] and in_int:
            w.entry("", f"M{marker:07d}", "'MARKER'", "", "'INTEND'")
            in_int = False
            marker += 1
        entries = []
        if instance.objective[c] != 0.0:
            entries.append((OBJ_ROW, instance.objective[c]))
        s, e = csc.indptr[c], csc.indptr[c + 1]
        entries += [(nm.rows[r], v) for r, v in zip(csc.indices[s:e], csc.data[s:e]) if v != 0.0]
        if not entries:
            # keep the column declared so its bounds and position survive
            entries.append((OBJ_ROW, 0.0))
        for row, v in entries:
            w.entry("", nm.cols[c], row, w.num(v))
    if in_int:
        w.entry("", f"M{marker:07d}", "'MARKER'", "", "'INTEND'")

    w.header("RHS")
    for k, kind in enumerate(kinds):
        rhs = instance.row_hi[k] if kind == "L" else instance.row_lo[k]
        if rhs != 0.0:
            w.entry("", "RHS", nm.rows[k], w.num(rhs))
    for k, b in enumerate(instance.cones):
        rhs = _cone_rhs(b)
        if rhs != 0.0:
            w.entry("", "RHS", nm.cones[k], w.num(rhs))

    ranged = [k for k, kind in enumerate(kinds) if kind == "G" and not math.isinf(instance.row_hi[k])]
    if ranged:
        w.header("RANGES")
        for k in ranged:
            w.entry("", "RNG", nm.rows[k], w.num(instance.row_hi[k] - instance.row_lo[k]))

    w.header("BOUNDS")
    for c in range(instance.n_cols):
        lo, hi = instance.lb[c], instance.ub[c]
        col = nm.cols[c]
        if integral[c] and lo == 0.0 and hi == 1.0:
            w.entry("BV", "BND", col)
        elif lo == hi:
            w.entry("FX", "BND", col, w.num(lo))
        else:
            if math.isinf(lo) and math.isinf(hi):
                w.entry("FR", "BND", col)
                continue
            if math.isinf(lo):
                w.entry("MI", "BND", col)
            elif lo != 0.0 or integral[c]:
                w.entry("LO", "BND", col, w.num(lo))
            if not math.isinf(hi):
                w.entry("UP", "BND", col, w.num(hi))
            elif integral[c]:
                w.entry("PL", "BND", col)

    for k, b in enumerate(instance.cones):
        w.header(f"QCMATRIX   {nm.cones[k]}")
        for p in b.p:
            w.entry("", nm.cols[p], nm.cols[p], w.num(1.0))
        if b.a is not None and b.b is not None:
            w.entry("", nm.cols[b.a], nm.cols[b.b], w.num(-0.5))
            w.entry("", nm.cols[b.b], nm.cols[b.a], w.num(-0.5))
        elif b.a is not None or b.b is not None:
            raise MPSError(f"cone {b.name} mixes a column and a constant scale part")
    w.header("ENDATA")
    path.write_text("\n".join(w.lines) + "\n")

    sidecar = path.with_suffix(path.suffix + ".json")
    meta = {
        "format": fmt,
        "objective_row": OBJ_ROW,
        "rows": [{"mps": nm.rows[k], "name": instance.row_name[k], "equation": instance.row_tag[k]}
                 for k in range(instance.n_rows)],
        "cones": [{"mps": nm.cones[k], "name": b.name, "equation": b.tag}
                  for k, b in enumerate(instance.cones)],
        "columns": [{"mps": nm.cols[c], "name": instance.varspace.name(c)}
                    for c in range(instance.n_cols)],
        "modes": list(instance.modes),
        "normalizers": list(instance.normalizers) if instance.normalizers else None,
    }
    sidecar.write_text(json.dumps(meta, indent=1) + "\n")
    return path, sidecar


def _cone_rhs(b: ConeBlock) -> float:
    return b.a_const * b.b_const if b.a is None and b.b is None else 0.0


# ------------------------------------------------------------------ import

def read_mps(path: str | Path, sidecar: str | Path | None = None) -> ModelInstance:
    """Parse an MPS file (fixed or free layout) back into a solvable instance.

    Both layouts are read by whitespace tokenization, which is safe because
    the writer never emits names with blanks. With the sidecar, row and cone
    names and equation tags are restored.
    """
    path = Path(path)
    text = path.read_text().splitlines()
    row_kind: dict[str, str] = {}
    row_order: list[str] = []
    obj_row = None
    cols: dict[str, int] = {}
    col_names: list[str] = []
    integral: list[bool] = []
    coef: dict[str, dict[int, float]] = {}
    obj: dict[int, float] = {}
    rhs: dict[str, float] = {}
    rng: dict[str, float] = {}
    bounds: dict[int, list[float]] = {}
    bv: set[int] = set()
    quad: dict[str, list[tuple[int, int, float]]] = {}
    section = None
    in_int = False
    qrow = None

    def col_index(name: str) -> int:
        if name not in cols:
            cols[name] = len(col_names)
            col_names.append(name)
            integral.append(in_int)
        return cols[name]

    for raw in text:
        if not raw.strip() or raw.startswith("*"):
            continue
        if not raw[0].isspace():
            head = raw.split()
            section = head[0]
            if section == "QCMATRIX":
                qrow = head[1]
                quad[qrow] = []
            elif section not in ("NAME", "ROWS", "COLUMNS", "RHS", "RANGES", "BOUNDS", "ENDATA",
                                 "OBJSENSE"):
                raise MPSError(f"unknown section {section}")
            continue
        tok = raw.split()
        if section == "ROWS":
            kind, name = tok[0].upper(), tok[1]
            if kind == "N":
                if obj_row is None:
                    obj_row = name
                continue
            row_kind[name] = kind
            row_order.append(name)
            coef[name] = {}
        elif section == "COLUMNS":
            if len(tok) >= 3 and tok[1] == "'MARKER'":
                in_int = tok[2] == "'INTORG'"
                continue
            c = col_index(tok[0])
            for r, v in zip(tok[1::2], tok[2::2]):
                val = float(v)
                if r == obj_row:
                    obj[c] = obj.get(c, 0.0) + val
                elif r in coef:
                    coef[r][c] = coef[r].get(c, 0.0) + val
                else:
                    raise MPSError(f"column {tok[0]} references unknown row {r}")
        elif section in ("RHS", "RANGES"):
            target = rhs if section == "RHS" else rng
            pairs = tok[1:] if len(tok) % 2 == 1 else tok
            for r, v in zip(pairs[0::2], pairs[1::2]):
                target[r] = float(v)
        elif section == "BOUNDS":
            kind = tok[0].upper()
            c = col_index(tok[2])
            lo_hi = bounds.setdefault(c, [0.0, math.inf])
            val = float(tok[3]) if len(tok) > 3 else None
            if kind == "UP":
                lo_hi[1] = val
            elif kind == "LO":
                lo_hi[0] = val
            elif kind == "FX":
                lo_hi[0] = lo_hi[1] = val
            elif kind == "MI":
                lo_hi[0] = -math.inf
            elif kind == "PL":
                lo_hi[1] = math.inf
            elif kind == "FR":
                lo_hi[0], lo_hi[1] = -math.inf, math.inf
            elif kind == "BV":
                lo_hi[0], lo_hi[1] = 0.0, 1.0
                bv.add(c)
            else:
                raise MPSError(f"unsupported bound type {kind}")
        elif section == "QCMATRIX":
            quad[qrow].append((col_index(tok[0]), col_index(tok[1]), float(tok[2])))

    n = len(col_names)
    lb = np.zeros(n)
    ub = np.full(n, math.inf)
    integ = np.array(integral, dtype=bool)
    for c in bv:
        integ[c] = True
    for c, (lo, hi) in bounds.items():
        lb[c], ub[c] = lo, hi
    for c in range(n):
        if integ[c] and c not in bounds:
            ub[c] = 1.0  # integer columns without bounds read as binaries
    objective = np.zeros(n)
    for c, v in obj.items():
        objective[c] = v

    meta = None
    sidecar = Path(sidecar) if sidecar else path.with_suffix(path.suffix + ".json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
    row_meta = {r["mps"]: r for r in meta["rows"]} if meta else {}
    cone_meta = {r["mps"]: r for r in meta["cones"]} if meta else {}
    col_meta = {r["mps"]: r["name"] for r in meta["columns"]} if meta else {}

    ptr, idx, val, lo_l, hi_l, tags, names = [0], [], [], [], [], [], []
    cones: list[ConeBlock] = []
    for r in row_order:
        kind = row_kind[r]
        b = rhs.get(r, 0.0)
        if r in quad:
            if coef[r]:
                raise MPSError(f"quadratic row {r} carries a linear part")
            cones.append(_cone_from_quad(r, quad[r], b, cone_meta.get(r)))
            continue
        if kind == "E":
            lo, hi = b, b
            if r in rng:
                lo, hi = (b, b + abs(rng[r])) if rng[r] >= 0 else (b - abs(rng[r]), b)
        elif kind == "L":
            lo, hi = -math.inf, b
            if r in rng:
                lo = b - abs(rng[r])
        elif kind == "G":
            lo, hi = b, math.inf
            if r in rng:
                hi = b + abs(rng[r])
        else:
            raise MPSError(f"row {r} has unknown type {kind}")
        for c in sorted(coef[r]):
            if coef[r][c] != 0.0:
                idx.append(c)
                val.append(coef[r][c])
        ptr.append(len(idx))
        lo_l.append(lo)
        hi_l.append(hi)
        tags.append(row_meta[r]["equation"] if r in row_meta else "")
        names.append(row_meta[r]["name"] if r in row_meta else r)

    vs = VarSpace()
    for c, name in enumerate(col_names):
        vs.add(col_meta.get(name, name), None, None, None, lb[c], ub[c], bool(integ[c]))
    modes = tuple(meta["modes"]) if meta else ()
    normalizers = tuple(meta["normalizers"]) if meta and meta.get("normalizers") else None
    return ModelInstance(
        varspace=vs, lb=lb, ub=ub, integral=integ, objective=objective,
        row_ptr=np.array(ptr, dtype=np.int64), row_idx=np.array(idx, dtype=np.int64),
        row_val=np.array(val, dtype=float), row_lo=np.array(lo_l), row_hi=np.array(hi_l),
        row_tag=tags, row_name=names, cones=cones, modes=modes, net=None,
        normalizers=normalizers,
    )


def _cone_from_quad(row: str, terms, rhs: float, meta) -> ConeBlock:
    diag: dict[int, float] = {}
    off: dict[tuple[int, int], float] = {}
    for i, j, v in terms:
        if i == j:
            diag[i] = diag.get(i, 0.0) + v
        else:
            key = (min(i, j), max(i, j))
            off[key] = off.get(key, 0.0) + v
    if any(abs(v - 1.0) > 1e-12 for v in diag.values()):
        raise MPSError(f"quadratic row {row}: squared terms must have coefficient 1")
    name = meta["name"] if meta else row
    tag = meta["equation"] if meta else ""
    p = tuple(sorted(diag))
    if not off:
        if rhs < 0:
            raise MPSError(f"quadratic row {row}: negative radius")
        s = math.sqrt(rhs)
        return ConeBlock(p, None, None, s, s, tag=tag, name=name)
    if len(off) != 1 or rhs != 0.0:
        raise MPSError(f"quadratic row {row} is not a rotated cone")
    (a, b), v = next(iter(off.items()))
    if abs(v + 1.0) > 1e-12:
        raise MPSError(f"quadratic row {row}: bilinear term must total -1")
    return ConeBlock(p, a, b, tag=tag, name=name)
