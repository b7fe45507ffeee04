import numpy as np
import pytest

from adnres.case import load_case, to_per_unit
from adnres.powerflow import PowerFlowError, sweep_power_flow
from adnres.radiality import Topology

from oracles import two_bus_closed_form, zbus_power_flow


def _ieee33_default():
    net = to_per_unit(load_case("ieee33"))
    case = net.case
    lines = [(ln.from_bus, ln.to_bus, float(net.r[k]), float(net.x[k]))
             for k, ln in enumerate(case.lines) if ln.kind == "main"]
    topo = Topology.from_lines(net.bus_ids, [(a, b) for a, b, _, _ in lines])
    return net, topo, lines


def test_two_bus_closed_form():
    topo = Topology.from_lines([1, 2], [(1, 2)])
    pf = sweep_power_flow(topo, [(1, 2, 0.1, 0.0)], [0.0, 0.5], [0.0, 0.0], root=1)
    v2, loss = two_bus_closed_form(0.1, 0.5)
    assert pf.converged
    assert pf.v[1] == pytest.approx(v2, abs=1e-9)
    assert pf.v[1] == pytest.approx(0.9472, abs=1e-4)
    assert pf.total_loss == pytest.approx(loss, abs=1e-9)
    assert pf.total_loss == pytest.approx(0.0279, abs=1e-4)


def test_zero_injection_flat():
    topo = Topology.from_lines([1, 2, 3], [(1, 2), (2, 3)])
    pf = sweep_power_flow(topo, [(1, 2, 0.1, 0.1), (2, 3, 0.1, 0.1)], [0, 0, 0], [0, 0, 0], root=1)
    assert np.allclose(pf.v, 1.0)
    assert pf.total_loss == 0.0
    assert pf.iterations == 1


def test_ieee33_peak_loss_matches_zbus():
    net, topo, lines = _ieee33_default()
    p, q = net.p_load, net.q_load
    pf = sweep_power_flow(topo, lines, p, q, root=1, tol=1e-12)
    v_ref, loss_ref = zbus_power_flow(list(net.bus_ids), lines, p, q, root=1)
    assert pf.total_loss == pytest.approx(loss_ref, abs=1e-8)
    assert np.abs(pf.v - v_ref).max() < 1e-8
    # widely published base-case figure for this feeder: about 202.7 kW
    assert pf.total_loss * net.case.base_mva * 1e3 == pytest.approx(202.7, abs=0.1)


def test_sweep_rejects_meshed():
    topo = Topology.from_lines([1, 2, 3], [(1, 2), (2, 3), (1, 3)])
    lines = [(1, 2, 0.1, 0.1), (2, 3, 0.1, 0.1), (1, 3, 0.1, 0.1)]
    with pytest.raises(PowerFlowError):
        sweep_power_flow(topo, lines, [0, 0.1, 0.1], [0, 0, 0], root=1)


def test_line_mismatch_rejected():
    topo = Topology.from_lines([1, 2, 3], [(1, 2), (2, 3)])
    with pytest.raises(PowerFlowError):
        sweep_power_flow(topo, [(1, 2, 0.1, 0.1), (1, 3, 0.1, 0.1)], [0, 0.1, 0.1], [0, 0, 0], root=1)
