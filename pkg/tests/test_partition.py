import math
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mtmsim.benchmarks import WIRE_C, WIRE_L, two_inverter
from mtmsim.netlist import parse_netlist
from mtmsim.partition import (
    PartitionError,
    StepTooLarge,
    line_delays,
    min_wire_length,
    plan_step,
    rank_wires,
    reassemble,
    tear_by_wires,
)

CHAIN = """* three blocks joined by two lines
V1 a 0 DC 1
R1 a b 50
T1 b 0 c 0 Z0=50 TD=2n
R2 c d 10
C2 d 0 1p
T2 d 0 e 0 Z0=50 TD=1n
R3 e 0 50
.partition wire T1,T2
"""


def _components(net, torn):
    # oracle: breadth-first search over the element graph without ground
    adj = {n: set() for n in net.nodes if n != "0"}
    edges = [e.terminals for e in net.elements] + [t.nodes for t in net.tlines if t.name not in torn]
    edges += [p for t in net.tlines if t.name in torn for p in (t.port1, t.port2)]
    for nodes in edges:
        real = [n for n in nodes if n != "0"]
        for a in real:
            adj[a].update(real)
    seen, count = set(), 0
    for start in adj:
        if start in seen:
            continue
        count += 1
        stack = [start]
        while stack:
            n = stack.pop()
            if n not in seen:
                seen.add(n)
                stack.extend(adj[n] - seen)
    return count


def test_two_inverter_tears_in_two():
    p = tear_by_wires(two_inverter())
    assert len(p.subcircuits) == 2 and len(p.wires) == 1
    w = p.wires[0]
    assert (w.side_a.subcircuit, w.side_b.subcircuit) == (0, 1)
    assert p.wires_of(0) == [(w, 1)] and p.wires_of(1) == [(w, 2)]


def test_tear_nothing():
    net = two_inverter()
    p = tear_by_wires(net, [])
    assert len(p.subcircuits) == 1 and not p.wires
    assert p.subcircuits[0].tlines == net.tlines
    assert math.isinf(p.tau_min)


def test_chain_of_three():
    net = parse_netlist(CHAIN)
    p = tear_by_wires(net)
    assert len(p.subcircuits) == 3 == _components(net, {"T1", "T2"})
    assert p.tau_min == pytest.approx(1e-9)


def test_unknown_wire():
    with pytest.raises(PartitionError):
        tear_by_wires(two_inverter(), ["T9"])


def test_wire_that_separates_nothing_is_kept():
    net = parse_netlist("V1 a 0 DC 1\nR1 a b 1\nT1 a 0 b 0 Z0=50 TD=1n\nR2 b 0 1\n")
    p = tear_by_wires(net, ["T1"])
    assert len(p.subcircuits) == 1 and not p.wires
    assert p.notes and "T1" in p.notes[0]


def test_reassembly_and_no_new_sources():
    for net in (two_inverter(), parse_netlist(CHAIN)):
        p = tear_by_wires(net)
        elements, lines = reassemble(p)
        assert Counter(elements) == Counter(net.elements)
        assert sorted(t.name for t in lines) == sorted(t.name for t in net.tlines)
        kinds = Counter(e.kind for e in elements)
        assert kinds["vsource"] + kinds["isource"] == sum(
            e.kind in ("vsource", "isource") for e in net.elements)
        shared = set.intersection(*(set(s.nodes) for s in p.subcircuits)) if len(p.subcircuits) > 1 else set()
        assert not shared


def test_plan_step_examples():
    tau = 1e-9
    p = plan_step(tau, tau)
    assert (p.dt, p.K, p.window) == (tau, 1, tau)
    p = plan_step(0.4 * tau, tau)
    assert p.K == 3 and p.dt == pytest.approx(tau / 3, rel=1e-15)
    with pytest.raises(StepTooLarge) as exc:
        plan_step(2 * tau, tau)
    assert exc.value.max_step == tau


@given(st.floats(1e-3, 1.0))
def test_plan_step_properties(frac):
    tau = 6.666666666666667e-11
    p = plan_step(frac * tau, tau)
    assert p.dt <= frac * tau * (1 + 1e-12)
    assert p.window == tau
    assert abs(p.K * p.dt - tau) <= 1e-12 * tau


def test_line_delays_snap_and_warn():
    net = parse_netlist(CHAIN)
    delays, warnings = line_delays(net.tlines, 1e-9 / 3)
    assert delays == {"t1": 6, "t2": 3} and not warnings
    delays, warnings = line_delays(net.tlines, 0.3e-9)
    assert delays["t2"] == 3 and len(warnings) == 2
    with pytest.raises(StepTooLarge):
        line_delays(net.tlines, 1.5e-9)


def test_min_wire_length():
    assert min_wire_length(1e9, 100, WIRE_L, WIRE_C) == pytest.approx(1.5e-4, rel=1e-12)
    assert min_wire_length(1e9, 200, WIRE_L, WIRE_C) == pytest.approx(0.75e-4, rel=1e-12)
    # v = 1.5e8 m/s
    assert min_wire_length(50.0, 100, 1.0, 1 / 1.5e8 ** 2) == pytest.approx(3e4, rel=1e-12)


def test_rank_wires():
    assert [n for n, _ in rank_wires(parse_netlist(CHAIN))] == ["T1", "T2"]
