import math

import mpmath
import numpy as np
import pytest

from mtmsim.benchmarks import WIRE_C, WIRE_L, wire_params
from mtmsim.mtm import MtmConfig, run_mtm_lossy, stitch
from mtmsim.netlist import parse_netlist
from mtmsim.partition import plan_step, tear_by_wires
from mtmsim.solver import run_transient
from mtmsim.tline import (
    DelayNotOnGrid,
    KernelTable,
    LineParams,
    PortHistory,
    char_impedance,
    conv_history_sum,
    delay_steps,
    discretize_convolution,
    lossless_port_rhs,
    lossy_kernels,
    lossy_port_coefficients,
    lumped_rlgc_expand,
    prop_delay,
)


def test_char_impedance_examples():
    assert char_impedance(WIRE_L, WIRE_C) == pytest.approx(6 * math.pi, rel=1e-14)
    assert char_impedance(3.0, 3.0) == 1.0
    assert char_impedance(2.5e-7, 1e-10) == pytest.approx(50.0, rel=1e-15)
    with pytest.raises(ValueError):
        char_impedance(0.0, 1.0)


def test_prop_delay_examples():
    tau = prop_delay(1e-3, WIRE_L, WIRE_C)
    assert tau == pytest.approx(2e-10 / 3, rel=1e-14)
    assert prop_delay(2e-3, WIRE_L, WIRE_C) == pytest.approx(2 * tau, rel=1e-15)
    assert wire_params().velocity == pytest.approx(1.5e7, rel=1e-14)


def test_line_params_derived():
    p = LineParams(R=2.0, L=0.5, G=0.3, C=0.2, length=2.0)
    assert p.alpha == pytest.approx(0.5 * (4.0 - 1.5))
    assert p.beta == pytest.approx(0.5 * (4.0 + 1.5))
    assert not p.lossless
    assert LineParams(0, 1, 0, 1, 1).lossless
    with pytest.raises(ValueError):
        LineParams(-1, 1, 0, 1, 1)


def test_delay_steps():
    assert delay_steps(1e-9, 1e-11) == 100
    with pytest.raises(DelayNotOnGrid):
        delay_steps(1e-9, 3e-11)
    with pytest.raises(DelayNotOnGrid):
        delay_steps(1e-12, 1e-11)


def test_kernels_vanish_without_loss():
    p = wire_params()
    h, g, f = lossy_kernels(p, np.linspace(0, 1e-9, 11))
    assert not h.any() and not g.any() and not f.any()
    assert lossy_kernels(p, 0.0) == (0.0, 0.0, 0.0)


@pytest.mark.parametrize("R,G", [(0.5, 0.1), (0.1, 0.5), (1.0, 0.0)])
def test_kernel_limits_at_zero(R, G):
    p = LineParams(R, 1.0, G, 1.0, 1.0)
    a, tau = p.alpha, p.tau
    h, g, f = lossy_kernels(p, 0.0)
    assert h == pytest.approx(-a, rel=1e-15)
    assert g == pytest.approx(a * a * tau / 2 - a, rel=1e-15)
    assert f == pytest.approx(a * a * tau / 2, rel=1e-15)
    # continuity from the right
    h2, g2, f2 = lossy_kernels(p, 1e-9)
    assert (h2, g2, f2) == pytest.approx((h, g, f), rel=1e-6)


@pytest.mark.parametrize("R,G", [(0.5, 0.1), (0.1, 0.5)])
def test_kernels_against_laplace_closed_forms(R, G):
    # Transforms of the kernels on a normalized line (tau = Z = 1):
    # p = s + beta, rho = sqrt((p - a)/(p + a)), e = exp(-tau (sqrt(p^2 - a^2) - p))
    # H = rho - 1, G = e*rho - 1, F = e - 1
    mpmath.mp.dps = 30
    p = LineParams(R, 1.0, G, 1.0, 1.0)
    a, b, tau = p.alpha, p.beta, p.tau
    for s in (0.4, 1.3):
        q = s + b
        rho = math.sqrt((q - a) / (q + a))
        e = math.exp(-tau * (math.sqrt(q * q - a * a) - q))
        expected = (rho - 1, e * rho - 1, e - 1)
        for idx, want in enumerate(expected):
            got = mpmath.quad(lambda t: lossy_kernels(p, float(t))[idx] * mpmath.exp(-s * t), [0, 5, 40, mpmath.inf])
            assert float(got) == pytest.approx(want, rel=1e-8, abs=1e-12)


def test_kernels_finite_for_long_times():
    p = LineParams(1e3, WIRE_L, 0.0, WIRE_C, 1e-3)
    h, g, f = lossy_kernels(p, np.linspace(0, 1e-6, 1001))
    assert np.all(np.isfinite(h)) and np.all(np.isfinite(g)) and np.all(np.isfinite(f))
    with pytest.raises(ValueError):
        lossy_kernels(p, -1.0)


def test_discretize_convolution_examples():
    dt = 0.01
    assert discretize_convolution(np.ones(50), lambda t: 0.0, dt) == (0.0, 0.0)
    c1, c2 = discretize_convolution(np.ones(50), lambda t: 1.0, dt)
    assert c1 == dt
    assert c1 + c2 == pytest.approx(0.5, abs=dt)
    h = KernelTable(wire_params(), 1e-12, 10).h
    assert discretize_convolution(np.ones(5), h, 1e-12)[0] == 0.0


def test_discretize_convolution_converges():
    # x = sin, y = exp(-t): exact convolution at t
    def exact(t):
        return (math.sin(t) - math.cos(t) + math.exp(-t)) / 2

    t = 2.0
    errs = []
    for k in (50, 100, 200, 400):
        dt = t / k
        past = np.sin(np.arange(k) * dt)
        c1, c2 = discretize_convolution(past, lambda s: math.exp(-s), dt)
        errs.append(abs(c1 * math.sin(t) + c2 - exact(t)))
    ratios = [errs[i] / errs[i + 1] for i in range(3)]
    # at least first order in dt
    assert all(r >= 1.9 for r in ratios)
    assert errs[-1] < 1e-4


def test_conv_history_sum_matches_loop():
    rng = np.random.default_rng(3)
    x, y = rng.normal(size=30), rng.normal(size=31)
    k, dt = 25, 0.1
    ref = sum(0.5 * dt * (x[i] * y[k - i] + x[i + 1] * y[k - i - 1]) for i in range(k - 1))
    assert conv_history_sum(x, y, k, dt) == pytest.approx(ref, rel=1e-13)
    assert conv_history_sum(x, y, 1, dt) == 0.0


def test_port_history_semantics():
    h = PortHistory(1e-12, 10)
    assert h.sample(1, -3) == (0.0, 0.0)
    assert h.sample(2, 0) == (0.0, 0.0)
    with pytest.raises(RuntimeError):
        h.sample(1, 4)
    h.record(1, 4, 1.0, 2.0)
    assert h.sample(1, 4) == (1.0, 2.0)
    h.clear_after(1, 3)
    with pytest.raises(RuntimeError):
        h.sample(1, 4)


def test_lossless_port_rhs():
    p = LineParams(0, 1e-6, 0, 1e-12, 1.0)  # tau = 1e-9, Z = 1000
    dt = 1e-10
    h = PortHistory(dt, 40)
    for k in range(1, 41):
        h.record(1, k, 0.0, 0.0)
        h.record(2, k, 1.0, 0.0)  # 1 V step on port 2 at t = 0+
    assert lossless_port_rhs(h, p, 5) == (0.0, 0.0)
    assert lossless_port_rhs(h, p, 10) == (0.0, 0.0)  # sample 0 is the rest state
    assert lossless_port_rhs(h, p, 11) == (1.0, 0.0)
    h.record(2, 3, 0.5, 1e-3)
    assert lossless_port_rhs(h, p, 13)[0] == pytest.approx(0.5 - 1000 * 1e-3)


def test_lossy_coefficients_degenerate_to_lossless():
    p = LineParams(0, 1e-6, 0, 1e-12, 1.0)
    h = PortHistory(1e-10, 30)
    rng = np.random.default_rng(0)
    for k in range(1, 25):
        h.record(1, k, *rng.normal(size=2))
        h.record(2, k, *rng.normal(size=2))
    c = lossy_port_coefficients(h, p, 25)
    assert (c.A1, c.B1, c.D1, c.E2, c.G2, c.H2) == (1.0, p.z, 0.0, 1.0, -p.z, 0.0)
    assert (c.A2, c.B2, c.D2, c.E1, c.G1, c.H1) == (1.0, p.z, 0.0, 1.0, -p.z, 0.0)


def test_lossy_coefficients_zero_history():
    p = LineParams(100.0, 1e-6, 1e-4, 1e-12, 1.0)
    h = PortHistory(1e-10, 30)
    for k in range(1, 6):
        for port in (1, 2):
            h.record(port, k, 0.0, 0.0)
    c = lossy_port_coefficients(h, p, 5)
    assert c.D1 == c.H2 == c.D2 == c.H1 == 0.0
    assert c.E2 == pytest.approx(math.exp(-p.beta * p.tau) * (1 + lossy_kernels(p, 0.0)[1] * 1e-10))


def test_lossy_dc_series_resistance():
    # long after the step an R-only line is a series resistor R*l
    base = wire_params()
    z = base.z
    r_line = 0.1 * z
    rs, rl = z, z
    text = f"""* dc check
V1 src 0 DC 1
Rs src near {rs!r}
T1 near 0 far 0 L={base.L!r} C={base.C!r} R={r_line / base.length!r} LEN={base.length!r}
Rl far 0 {rl!r}
.partition wire T1
"""
    net = parse_netlist(text)
    part = tear_by_wires(net)
    cfg = MtmConfig(plan_step(part.tau_min / 10, part.tau_min), 60 * part.tau_min)
    res = stitch(run_mtm_lossy(net, part, cfg)[0])
    expected = rl / (rs + r_line + rl)
    assert res.voltages["far"][-1] == pytest.approx(expected, rel=0.02)


def test_lumped_expand_structure():
    p = LineParams(0.0, 1e-6, 0.0, 1e-12, 1.0)
    one = lumped_rlgc_expand("x", p, 1)
    assert [e.kind for e in one] == ["inductor", "capacitor"]
    assert one[0].params["value"] == pytest.approx(1e-6)
    lossy = LineParams(7.0, 1e-6, 1e-3, 1e-12, 2.0)
    els = lumped_rlgc_expand("x", lossy, 37, ("a", "0"), ("b", "0"))
    rtot = sum(e.params["value"] for e in els if e.kind == "resistor" and "_g" not in e.name)
    assert rtot == pytest.approx(14.0, rel=1e-12)
    gtot = sum(1 / e.params["value"] for e in els if e.kind == "resistor" and "_g" in e.name)
    assert gtot == pytest.approx(2e-3, rel=1e-12)
    assert els[-1].terminals == ("b", "0")
    with pytest.raises(ValueError):
        lumped_rlgc_expand("x", p, 0)


@pytest.mark.slow
def test_lumped_delay_converges():
    p = wire_params()
    z, tau = p.z, p.tau
    tr = tau / 10
    net = parse_netlist(f"V1 s 0 PULSE(0 1 0 {tr!r} {tr!r} 1 2)\nRs s a {z!r}\nRl b 0 {z!r}\n")
    els = list(net.elements) + lumped_rlgc_expand("w", p, 1000, ("a", "0"), ("b", "0"))
    res = run_transient(els, 2 * tau, tau / 100)
    vb = res.voltages["b"]
    k = int(np.argmax(vb >= 0.25))
    t50 = res.time[k - 1] + (0.25 - vb[k - 1]) / (vb[k] - vb[k - 1]) * (res.time[k] - res.time[k - 1])
    assert abs((t50 - tr / 2) - tau) <= 0.05 * tau
