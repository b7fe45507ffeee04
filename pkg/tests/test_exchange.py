import time

import numpy as np
import pytest

from adnres.case import load_case, to_per_unit
from adnres.exchange import branch_exchange, initial_tree, neighbours
from adnres.model import build_model, loss_coefficients
from adnres.radiality import Topology, check_radial
from adnres.solver import SolverOptions, evaluate_incumbent


@pytest.fixture(scope="module")
def toy6():
    net = to_per_unit(load_case("toy6"))
    inst = build_model(net, ("c1",))
    return net, inst.with_objective(loss_coefficients(inst))


def test_initial_tree_is_main_lines(toy6):
    net, inst = toy6
    status = initial_tree(net, inst, "c1")
    assert status.tolist() == [1, 1, 1, 1, 1, 0, 0, 0]


def test_neighbours_are_radial_single_swaps(toy6):
    net, inst = toy6
    status = initial_tree(net, inst, "c1")
    fixed = np.array([not ln.switchable for ln in net.case.lines])
    cands = neighbours(net, status, ~fixed, np.ones(len(status), bool))
    assert cands
    buses = [b.id for b in net.case.buses]
    for c in cands:
        assert np.abs(c - status).sum() == 2
        assert not np.any(fixed & (c == 0))
        closed = [(ln.from_bus, ln.to_bus) for k, ln in enumerate(net.case.lines) if c[k]]
        assert check_radial(Topology.from_lines(buses, closed)).radial
    # tie 2-6 closes the loop 2-3-4-5-6, whose switchable lines are 3 and 4
    tie = [c for c in cands if c[5] == 1]
    assert sorted(int(np.flatnonzero(c == 0)[0]) for c in tie if c[5] == 1 and c[6] == 0 and c[7] == 0) == [2, 3]


def test_exchange_returns_feasible_point(toy6):
    net, inst = toy6
    log = []
    x = branch_exchange(net, inst, "c1", SolverOptions(rel_gap_tol=1e-6), time.perf_counter() + 60, log)
    assert x is not None and log[0].startswith("exchange start")
    assert evaluate_incumbent(x, inst).feasible(SolverOptions())
    start = float(log[0].split()[-1])
    assert inst.objective @ x <= start * (1 + 1e-9)  # the log keeps 10 digits


def test_expired_deadline_gives_nothing(toy6):
    net, inst = toy6
    assert branch_exchange(net, inst, "c1", SolverOptions(), time.perf_counter() - 1, []) is None
