import math

import numpy as np
import pytest

from adnres.case import (CaseError, WindUnit, Profiles, builtin_case_text, incidence, load_case,
                         load_profiles, resolve_case, to_per_unit, validate_case, wind_availability)


def test_ieee33_totals():
    case = load_case("ieee33")
    p, q = case.total_peak_load
    assert p == pytest.approx(3.715, abs=1e-9)
    assert q == pytest.approx(2.3, abs=1e-9)
    assert case.base_kv == 12.66
    assert len(case.buses) == 33
    assert len(case.lines) == 37
    assert sum(ln.kind == "main" for ln in case.lines) == 32
    assert sum(ln.kind == "tie" for ln in case.lines) == 5


def test_two_bus_case():
    case = load_case("2bus")
    assert len(case.lines) == 1
    assert case.slack_bus == 1


def test_per_unit_conversion():
    net = to_per_unit(load_case("ieee33"))
    assert net.z_base == pytest.approx(12.66 ** 2 / 1.0)
    assert net.z_base == pytest.approx(160.2756)
    assert net.p_load.sum() == pytest.approx(3.715)
    two = to_per_unit(load_case("2bus"))
    # the 2-bus line is 16.02756 ohm, a tenth of Z_base
    assert two.r[0] == pytest.approx(0.1)


def test_per_unit_identity():
    text = builtin_case_text("2bus").replace("r_ohm = 16.02756", "r_ohm = 160.2756")
    assert to_per_unit(load_case(text)).r[0] == pytest.approx(1.0)


def test_incidence_rows():
    net = to_per_unit(load_case("ieee33"))
    A, B = incidence(net)
    assert A.shape == (37, 33)
    assert np.all(A.sum(axis=1) == 0)
    assert np.all((A == 1).sum(axis=1) == 1)
    assert np.array_equal(B, (A == 1).astype(float))
    a2, b2 = incidence(to_per_unit(load_case("2bus")))
    assert a2.tolist() == [[1.0, -1.0]]


@pytest.mark.parametrize("speed,expected", [(12.0, 0.3), (3.0, 0.0), (7.5, 0.15), (26.0, 0.0), (25.0, 0.0)])
def test_wind_curve(speed, expected):
    wt = WindUnit(bus=5, p_rated=0.3, v_cut_in=3.0, v_rated=12.0, v_cut_out=25.0)
    prof = Profiles((1.0,) * 24, (speed,) * 24)
    assert wind_availability(prof, wt)[0] == pytest.approx(expected)


def test_builtin_cases_valid():
    for name in ("ieee33", "toy6", "2bus"):
        assert validate_case(load_case(name)) == []


def test_duplicate_slack_reported():
    text = builtin_case_text("2bus").replace('kind = "load"', 'kind = "slack"')
    with pytest.raises(CaseError) as err:
        load_case(text)
    assert any("slack" in str(v) for v in err.value.violations)


def test_wind_ordering_reported():
    text = builtin_case_text("ieee33").replace("v_cut_in = 3.0, v_rated = 12.0", "v_cut_in = 13.0, v_rated = 12.0", 1)
    with pytest.raises(CaseError) as err:
        load_case(text)
    assert any("wind-speed ordering" in str(v) for v in err.value.violations)


def test_unknown_case_name():
    with pytest.raises(CaseError):
        resolve_case("no-such-case")


def test_profile_override(tmp_path):
    f = tmp_path / "p.toml"
    f.write_text("[profiles]\nload_factor = [%s]\nwind_speed = [%s]\n"
                 % (", ".join(["0.5"] * 24), ", ".join(["12.0"] * 24)))
    prof = load_profiles(f.read_text())
    case = load_case("ieee33").with_profiles(prof)
    assert validate_case(case) == []
    net = to_per_unit(case)
    assert np.allclose(net.load_factor, 0.5)
    assert np.allclose(net.wind_avail, 0.3)


def test_short_profile_rejected():
    case = load_case("ieee33").with_profiles(Profiles((0.5,) * 23, (5.0,) * 24))
    assert any("24" in str(v) for v in validate_case(case))


def test_default_load_energy():
    case = load_case("ieee33")
    total = sum(case.profiles.load_factor) * case.total_peak_load[0]
    assert sum(case.profiles.load_factor) == pytest.approx(18.32)
    assert total == pytest.approx(68.06, abs=0.01)
    assert math.isclose(total, 38.879 / (1 - 0.42875), rel_tol=1e-3)
