import math

import numpy as np
import pytest

from adnres.case import HOURS, builtin_case_text, load_case, to_per_unit
from adnres.model import (ModelOptions, assemble_objective, build_model, compute_big_m,
                          compute_resiliency_index, extract_solution, line_caps, loss_coefficients,
                          normalized_objective, shed_coefficients)
from adnres.pipeline import presolve
from adnres.solver import SolverOptions, evaluate_incumbent, solve

from oracles import two_bus_closed_form


@pytest.fixture(scope="module")
def ieee33():
    return to_per_unit(load_case("ieee33"))


def test_binary_count_per_mode_storage(ieee33):
    inst = build_model(ieee33)
    # 37 X per mode, ich/idch for 2 units x 24 h per mode, 2 DG_a in c2
    assert inst.binary_columns.size == 37 * 2 + 2 * 24 * 2 * 2 + 2 == 268


def test_binary_count_shared_storage(ieee33):
    inst = build_model(ieee33, options=ModelOptions(shared_ess_binaries=True))
    assert inst.binary_columns.size == 172


def test_two_bus_cone_count():
    inst = build_model(to_per_unit(load_case("2bus")), ("c1",))
    assert sum(c.tag == "eq7" for c in inst.cones) == 24


def test_radial_count_row(ieee33):
    inst = build_model(ieee33)
    rows = [k for k, t in enumerate(inst.row_tag) if t == "eq20"]
    assert len(rows) == 2
    for k in rows:
        idx, val = inst.row(k)
        assert inst.row_lo[k] == inst.row_hi[k] == 64.0
        assert idx.size == 37 and np.all(val == 2.0)  # both directions of every line


def test_big_m_formula():
    assert compute_big_m(0.05, 0.05, (0.9, 1.1), 1.0, 1.0, 1.0) == pytest.approx(0.605)
    assert compute_big_m(0.0, 0.0, (0.9, 1.1), 3.0, 2.0, 9.0) == pytest.approx(1.21 - 0.81)


def test_big_m_slack_when_open(ieee33):
    rng = np.random.default_rng(7)
    vmin, vmax = ieee33.case.voltage_bounds["c1"]
    j_max, p_cap, q_cap = line_caps(ieee33, "c1")
    for k in range(ieee33.n_line):
        r, x = ieee33.r[k], ieee33.x[k]
        m = compute_big_m(r, x, (vmin, vmax), p_cap[k], q_cap[k], j_max[k])
        ui, uj = rng.uniform(vmin ** 2, vmax ** 2, (2, 200))
        p = rng.uniform(-p_cap[k], p_cap[k], 200)
        q = rng.uniform(-q_cap[k], q_cap[k], 200)
        j = rng.uniform(0, j_max[k], 200)
        drop = uj - ui + 2 * (r * p + x * q) + (r * r + x * x) * j
        assert np.all(np.abs(drop) < m)


def test_two_node_count_forces_line_closed():
    net = to_per_unit(load_case("2bus"))
    inst = build_model(net, ("c1",), ModelOptions(fix_bridges=False))
    col = inst.varspace.col("X", 1, "c1")
    assert inst.lb[col] == 0.0
    res = solve(inst.with_objective(loss_coefficients(inst)))
    assert res.x[col] == 1.0


def test_two_bus_solution_matches_closed_form():
    net = to_per_unit(load_case("2bus"))
    inst = build_model(net, ("c1",))
    inst = inst.with_objective(loss_coefficients(inst))
    res = solve(inst, SolverOptions(rel_gap_tol=1e-9))
    assert res.status == "optimal" and res.gap <= 1e-9
    sched = extract_solution(inst, res.x)
    v2, loss = two_bus_closed_form(0.1, 0.5)
    ms = sched.modes["c1"]
    assert ms.line_status.tolist() == [1]
    assert np.allclose(ms.v[:, 1], v2, atol=1e-6)
    assert sched.loss_energy("c1") == pytest.approx(HOURS * loss, rel=1e-6)
    rep = evaluate_incumbent(res.x, inst)
    assert rep.max_row_violation <= 1e-9
    assert rep.max_tightness_slack <= 1e-7


def test_gating_violation_reported():
    net = to_per_unit(load_case("2bus"))
    inst = build_model(net, ("c1",), ModelOptions(fix_bridges=False))
    inst = inst.with_objective(loss_coefficients(inst))
    x = solve(inst).x.copy()
    x[inst.varspace.col("X", 1, "c1")] = 0.0
    rep = evaluate_incumbent(x, inst)
    assert rep.max_row_violation > 0
    k = inst.row_name.index(rep.worst_row)
    assert inst.row_tag[k] in ("eq6", "eq10", "eq11", "eq16", "eq20", "eq23")
    x[inst.varspace.col("X", 1, "c1")] = 1.0
    x[inst.varspace.col("J", 1, "c1", 1)] *= 1.5
    rep = evaluate_incumbent(x, inst)
    # an oversized J keeps the cone satisfied and shows up as tightness slack
    assert rep.max_cone_residual <= 1e-9
    assert rep.max_tightness_slack > 1e-3 and rep.worst_slack_cone == "cone[c1,t01,l1]"


@pytest.fixture(scope="module")
def toy6_c1():
    net = to_per_unit(load_case("toy6"))
    return net, presolve(net, "c1", ModelOptions(), SolverOptions(rel_gap_tol=1e-6))


def test_open_lines_carry_nothing(toy6_c1):
    net, run = toy6_c1
    sched = extract_solution(run.instance, run.x)
    ms = sched.modes["c1"]
    off = ms.line_status == 0
    assert off.any()
    assert np.all(ms.p_flow[:, off] == 0) and np.all(ms.q_flow[:, off] == 0)
    assert np.all(ms.j[:, off] == 0)
    assert np.all(ms.p_shed == 0)


def test_voltage_is_sqrt_u(toy6_c1):
    net, run = toy6_c1
    ms = extract_solution(run.instance, run.x).modes["c1"]
    assert ms.v[0, 0] == pytest.approx(1.0)
    assert np.allclose(ms.v ** 2, ms.u)


def test_objective_normalization():
    assert normalized_objective(0.905, 38.86, 0.905, 38.86) == pytest.approx(2.0)
    assert normalized_objective(0.5, 3.0, 0.5, 0.0) == pytest.approx(1.0 + 3.0)
    a = normalized_objective(0.7, 30.0, 0.5, 20.0)
    assert normalized_objective(0.7, 30.0, 1.0, 40.0) == pytest.approx(a / 2)


def test_assembled_objective_weights(ieee33):
    inst = build_model(ieee33)
    c = assemble_objective(inst, 2.0, 4.0)
    assert np.allclose(c, loss_coefficients(inst) / 2.0 + shed_coefficients(inst) / 4.0)


def test_resiliency_index():
    assert compute_resiliency_index(38.879, 68.06) == pytest.approx(42.875, abs=0.01)
    assert compute_resiliency_index(0.0, 68.06) == 100.0
    assert compute_resiliency_index(68.06, 68.06) == 0.0
    with pytest.raises(ValueError):
        compute_resiliency_index(-1.0, 10.0)


def test_zero_load_loss_normalizer():
    text = builtin_case_text("2bus").replace("p_mw = 0.5", "p_mw = 0.0")
    net = to_per_unit(load_case(text))
    run = presolve(net, "c1", ModelOptions(), SolverOptions())
    assert run.value == pytest.approx(0.0, abs=1e-12)


def test_no_sources_sheds_everything():
    text = builtin_case_text("toy6").replace("s_max_mva = 0.5", "s_max_mva = 0.0")
    text = text.replace("s_max_mva = 0.4", "s_max_mva = 0.0").replace("p_rated_mw = 0.3", "p_rated_mw = 0.0")
    net = to_per_unit(load_case(text))
    run = presolve(net, "c2", ModelOptions(), SolverOptions())
    total = float(net.load_factor.sum() * net.p_load.sum() * net.case.base_mva)
    assert run.value == pytest.approx(total, rel=1e-6)
    assert math.isfinite(run.value)
