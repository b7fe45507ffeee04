import csv
import shutil

import numpy as np
import pytest

from adnres.case import builtin_case_text
from adnres.cli import main
from adnres.report import FIGURE_FILES, read_summary

ESS = ('ess = [\n  { bus = 3, soc_max_mwh = 0.6, p_max_mw = 0.15, soc_initial_mwh = 0.24, '
       'eff_charge = 0.95, eff_discharge = 0.95 },\n]\n\ndg = [')


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _rewrite(path, edit):
    rows = _rows(path)
    out = [rows[0]] + [edit(r) for r in rows[1:]]
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(out)


@pytest.fixture(scope="module")
def case_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("case") / "toy6ess.toml"
    path.write_text(builtin_case_text("toy6").replace("dg = [", ESS, 1).replace('"toy6"', '"toy6ess"'))
    return path


@pytest.fixture(scope="module")
def solved(tmp_path_factory, case_file):
    out = tmp_path_factory.mktemp("solve")
    code = main(["solve", "--case", str(case_file), "--mode", "both", "--gap", "1e-3",
                 "--deterministic", "--out", str(out)])
    return code, out


def test_solve_writes_artifacts(solved):
    code, out = solved
    assert code == 0
    for name in ("solve.log", "summary.txt", "schedule.csv", "topology.csv", "verification.txt"):
        assert (out / name).is_file()
    summary = read_summary(out / "summary.txt")
    assert float(summary["OF"]) == pytest.approx(2.0, abs=2e-3)
    assert float(summary["gap"]) <= 1e-3
    assert (out / "verification.txt").read_text().endswith("overall: PASS\n")


def test_topology_file(solved):
    _, out = solved
    rows = _rows(out / "topology.csv")
    for mode in ("c1", "c2"):
        closed = [r for r in rows[1:] if r[0] == mode and r[5] == "1"]
        assert len(closed) == 5  # six buses


def test_validate_case_only(case_file, capsys):
    assert main(["validate", "--case", str(case_file)]) == 0
    assert "valid" in capsys.readouterr().out


def test_validate_accepts_own_solution(solved, case_file, capsys):
    _, out = solved
    assert main(["validate", "--case", str(case_file), "--solution", str(out)]) == 0
    assert "overall: PASS" in capsys.readouterr().out


def _copy(solved, tmp_path):
    _, out = solved
    dst = tmp_path / "schedule.csv"
    shutil.copy(out / "schedule.csv", dst)
    return dst


def test_validate_rejects_loop(solved, case_file, tmp_path, capsys):
    path = _copy(solved, tmp_path)
    _rewrite(path, lambda r: r[:5] + ["1"] if r[:3] == ["c1", "0", "line"] and r[4] == "status" else r)
    assert main(["validate", "--case", str(case_file), "--solution", str(path)]) == 4
    text = capsys.readouterr().out
    line = next(s for s in text.splitlines() if s.startswith("radiality[c1]"))
    assert "FAIL" in line and "has_cycle" in line and "witness" in line


def test_validate_names_storage_conflict(solved, case_file, tmp_path, capsys):
    path = _copy(solved, tmp_path)
    _rewrite(path, lambda r: r[:5] + ["1"] if r[0] == "c1" and r[1] == "7" and r[2] == "ess"
             and r[4] in ("ich", "idch") else r)
    assert main(["validate", "--case", str(case_file), "--solution", str(path)]) == 4
    text = capsys.readouterr().out
    assert "ess_exclusive[c1]: FAIL" in text


def test_validate_flags_inflated_current(solved, case_file, tmp_path, capsys):
    path = _copy(solved, tmp_path)
    status = {r[3]: r[5] for r in _rows(path)[1:] if r[:3] == ["c1", "0", "line"]}
    line = next(k for k, v in status.items() if v == "1")
    _rewrite(path, lambda r: r[:5] + [repr(float(r[5]) * 3 + 0.01)]
             if r[0] == "c1" and r[2] == "line" and r[3] == line and r[4] == "J" else r)
    assert main(["validate", "--case", str(case_file), "--solution", str(path)]) == 4
    text = capsys.readouterr().out
    assert "sweep[c1]: FAIL" in text and "cone_tightness[c1]: FAIL" in text


def test_report_files(solved, tmp_path):
    _, out = solved
    assert main(["report", "--schedule", str(out / "schedule.csv"), "--out", str(tmp_path)]) == 0
    data = {}
    for name in FIGURE_FILES:
        rows = _rows(tmp_path / name)
        assert len(rows) == 25 and [int(r[0]) for r in rows[1:]] == list(range(1, 25))
        data[name] = {h: np.array([float(r[k]) for r in rows[1:]]) for k, h in enumerate(rows[0])}
    wind = data["fig_wind.csv"]
    for mode in ("c1", "c2"):
        assert np.all(wind[f"{mode}_wt5_mw"] <= wind[f"{mode}_wt5_available_mw"] + 1e-9)
    assert np.all(data["fig_shedding.csv"]["c1_shed_mw"] == 0.0)
    assert np.all(data["fig_shedding.csv"]["c2_shed_mw"] >= 0.0)
    soc = data["fig_soc.csv"]["c1_ess3_soc_mwh"]
    assert np.all((soc >= -1e-9) & (soc <= 0.6 + 1e-9))


def test_report_missing_schedule(tmp_path):
    assert main(["report", "--schedule", str(tmp_path / "none.csv"), "--out", str(tmp_path)]) == 1


def test_export(tmp_path, capsys):
    assert main(["export", "--case", "toy6", "--format", "free-mps", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "toy6_both.mps").is_file()
    assert "integer" in capsys.readouterr().out


def test_export_unsupported_format(tmp_path, capsys):
    assert main(["export", "--case", "toy6", "--format", "lp", "--out", str(tmp_path)]) == 1
    assert "unsupported" in capsys.readouterr().err


def test_unknown_case():
    assert main(["validate", "--case", "nowhere"]) == 1


def test_usage_error():
    with pytest.raises(SystemExit) as err:
        main(["solve"])
    assert err.value.code == 1


def test_infeasible_exit(tmp_path):
    # without shedding, a tiny substation and no DG cannot carry the c1 load
    text = builtin_case_text("toy6").replace("substation_p_max_mw = 10.0", "substation_p_max_mw = 0.1")
    text = text.replace("s_max_mva = 0.5", "s_max_mva = 0.0").replace("s_max_mva = 0.4", "s_max_mva = 0.0")
    case = tmp_path / "bad.toml"
    case.write_text(text)
    assert main(["solve", "--case", str(case), "--mode", "normal", "--out", str(tmp_path / "o")]) == 2
    assert read_summary(tmp_path / "o" / "summary.txt")["status"] == "infeasible"
