import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mtmsim.devices import (
    DeviceState,
    Rule,
    capacitor_companion,
    diode_current,
    eval_nonlinear,
    inductor_companion,
    mosfet_current,
    stamp_linear,
)
from mtmsim.netlist import parse_netlist


def elem(text):
    return parse_netlist(text).elements[0]


def test_capacitor_be_conductance():
    s = stamp_linear(elem("C1 a 0 1p"), 1e-12, rule=Rule.BACKWARD_EULER)
    assert (("a", "a", 1.0)) in s.conductances


def test_resistor_stamp_symmetric():
    s = stamp_linear(elem("R1 a b 1k"), 1e-9)
    assert sorted(s.conductances) == sorted([("a", "a", 1e-3), ("b", "b", 1e-3), ("a", "b", -1e-3), ("b", "a", -1e-3)])


def test_vccs_stamp_asymmetric():
    s = stamp_linear(elem("G1 o 0 c 0 2m"), 1e-9)
    entries = {(r, c): v for r, c, v in s.conductances}
    assert entries[("o", "c")] == 2e-3
    assert ("c", "o") not in entries


def test_sources_add_branches():
    s = stamp_linear(elem("V1 a 0 DC 3"), 1e-9)
    assert s.branches == ["#V1"] and ("#V1", 3.0) in s.currents
    s = stamp_linear(elem("I1 a 0 DC 2m"), 1e-9)
    assert dict(s.currents) == {"0": 2e-3, "a": -2e-3}


def test_unknown_rule():
    with pytest.raises(ValueError):
        stamp_linear(elem("C1 a 0 1p"), 1e-9, rule="gear")


def test_companion_rules_agree_as_dt_shrinks():
    # v(t) = sin(t) through a 1 F capacitor: both rules predict i = cos(t)
    t0 = 0.3
    diffs = []
    for dt in (1e-2, 5e-3, 2.5e-3):
        v0, i0, v1 = math.sin(t0), math.cos(t0), math.sin(t0 + dt)
        g_be, h_be = capacitor_companion(1.0, dt, v0, i0, Rule.BACKWARD_EULER)
        g_tr, h_tr = capacitor_companion(1.0, dt, v0, i0, Rule.TRAPEZOIDAL)
        diffs.append(abs((g_be * v1 - h_be) - (g_tr * v1 - h_tr)))
    assert diffs[0] / diffs[1] == pytest.approx(2.0, rel=0.05)
    assert diffs[1] / diffs[2] == pytest.approx(2.0, rel=0.05)


def test_inductor_companion_consistency():
    # trapezoidal: v_n + v_{n-1} = 2L/dt (i_n - i_{n-1})
    req, veq = inductor_companion(2.0, 0.1, 3.0, 0.5, Rule.TRAPEZOIDAL)
    i_n = 0.9
    v_n = veq + req * i_n
    assert v_n + 3.0 == pytest.approx(40.0 * (i_n - 0.5))


def test_diode_examples():
    lin = eval_nonlinear(elem("D1 a 0 IS=1e-14 VT=0.025"), 0.0)
    assert lin.current == 0.0 and lin.conductance == pytest.approx(4e-13)
    i, _ = diode_current(0.025, 1e-14, 0.025)
    assert i == pytest.approx(1e-14 * (math.e - 1), rel=1e-14)


def test_diode_linear_continuation_is_c1():
    vc = 40 * 0.025
    i_lo, g_lo = diode_current(vc - 1e-12, 1e-14, 0.025)
    i_hi, g_hi = diode_current(vc + 1e-12, 1e-14, 0.025)
    assert i_hi == pytest.approx(i_lo, rel=1e-9)
    assert g_hi == pytest.approx(g_lo, rel=1e-9)
    assert math.isfinite(diode_current(1e3, 1e-14, 0.025)[0])


@given(st.floats(-2.0, 1.2))
def test_diode_conductance_is_derivative(v):
    h = 1e-7 * max(1.0, abs(v))
    if abs(v - 40 * 0.025) < 2 * h:
        return  # the linear continuation starts here; only C1 there
    num = (diode_current(v + h, 1e-14, 0.025)[0] - diode_current(v - h, 1e-14, 0.025)[0]) / (2 * h)
    g = diode_current(v, 1e-14, 0.025)[1]
    assert num == pytest.approx(g, rel=1e-6, abs=1e-18)


PARAMS = {"vto": 0.5, "kp": 2e-4, "w": 10e-6, "l": 1e-6, "lambda": 0.02}


def test_mosfet_cutoff():
    i, gm, gds = mosfet_current(0.3, 1.0, PARAMS, "nmos")
    assert (i, gm) == (0.0, 0.0)


def test_mosfet_saturation_value():
    i, _, _ = mosfet_current(1.5, 2.0, PARAMS, "nmos")
    k = 2e-4 * 10
    assert i == pytest.approx(0.5 * k * 1.0 ** 2 * (1 + 0.02 * 2.0), rel=1e-12)


@given(st.floats(-2.0, 2.0), st.floats(-2.0, 2.0), st.sampled_from(["nmos", "pmos"]))
def test_mosfet_derivatives(vgs, vds, model):
    p = dict(PARAMS, vto=0.5 if model == "nmos" else -0.5)
    i, gm, gds = mosfet_current(vgs, vds, p, model)
    h = 1e-7 * max(1.0, abs(vgs), abs(vds))
    dg = (mosfet_current(vgs + h, vds, p, model)[0] - mosfet_current(vgs - h, vds, p, model)[0]) / (2 * h)
    dd = (mosfet_current(vgs, vds + h, p, model)[0] - mosfet_current(vgs, vds - h, p, model)[0]) / (2 * h)
    # central differences straddling a region boundary are not derivatives
    kinks = [vgs - p["vto"], vds, vds - (vgs - p["vto"]), vgs - vds - p["vto"]]
    if min(abs(x) for x in kinks) < 1e-5:
        return
    assert dg == pytest.approx(gm, rel=1e-6, abs=1e-12)
    assert dd == pytest.approx(gds, rel=1e-6, abs=1e-12)


def test_pmos_mirrors_nmos():
    pn = PARAMS
    pp = dict(PARAMS, vto=-0.5)
    i_n = mosfet_current(1.2, 0.8, pn, "nmos")[0]
    i_p = mosfet_current(-1.2, -0.8, pp, "pmos")[0]
    assert i_p == pytest.approx(-i_n, rel=1e-15)


def test_state_defaults_to_rest():
    assert DeviceState() == DeviceState(0.0, 0.0)
