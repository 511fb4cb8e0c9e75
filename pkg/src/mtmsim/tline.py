"""Transmission-line mathematics.

Port conventions: port 1 is the near end, port 2 the far end; ``i_p`` is the
current the line delivers into the port's positive node.  With that choice the
lossless line obeys

    u1(t) + Z*i1(t) = u2(t - tau) - Z*i2(t - tau)
    u2(t) + Z*i2(t) = u1(t - tau) - Z*i1(t - tau)

i.e. each port is a Thevenin source (right-hand side) behind a series Z.  The
lossy line adds convolution terms with kernels h, g, f built from modified
Bessel functions; see :func:`lossy_kernels`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .bessel import bessel_i0e, bessel_i1_over_x_e, bessel_i1e


class DelayNotOnGrid(ValueError):
    """The line delay is not an integer number of time steps."""


@dataclass(frozen=True)
class LineParams:
    """Per-unit-length line constants (SI, per metre) and physical length."""

    R: float
    L: float
    G: float
    C: float
    length: float

    def __post_init__(self):
        if not (self.L > 0 and self.C > 0 and self.length > 0):
            raise ValueError("line needs L > 0, C > 0 and length > 0")
        if self.R < 0 or self.G < 0:
            raise ValueError("line needs R >= 0 and G >= 0")

    @property
    def tau(self) -> float:
        return prop_delay(self.length, self.L, self.C)

    @property
    def z(self) -> float:
        return char_impedance(self.L, self.C)

    @property
    def velocity(self) -> float:
        return 1.0 / math.sqrt(self.L * self.C)

    @property
    def alpha(self) -> float:
        return 0.5 * (self.R / self.L - self.G / self.C)

    @property
    def beta(self) -> float:
        return 0.5 * (self.R / self.L + self.G / self.C)

    @property
    def lossless(self) -> bool:
        return self.R == 0 and self.G == 0


def char_impedance(L: float, C: float) -> float:
    """Characteristic impedance sqrt(L/C) in ohms."""
    if L <= 0 or C <= 0:
        raise ValueError("L and C must be positive")
    return math.sqrt(L / C)


def prop_delay(length: float, L: float, C: float) -> float:
    """One-way propagation delay length*sqrt(L*C) in seconds."""
    if length <= 0 or L <= 0 or C <= 0:
        raise ValueError("length, L and C must be positive")
    return length * math.sqrt(L * C)


def delay_steps(tau: float, dt: float, rtol: float = 1e-9) -> int:
    """Return tau/dt as an integer, raising if it is not on the grid."""
    ratio = tau / dt
    n = round(ratio)
    if n < 1 or abs(ratio - n) > rtol * max(1.0, ratio):
        raise DelayNotOnGrid(f"delay {tau:g} s is not a positive multiple of step {dt:g} s")
    return n


def lossy_kernels(params: LineParams, t):
    """Kernel values (h, g, f) at time(s) ``t >= 0``.

    h(t) = e^{-bt} a [I1(at) - I0(at)]
    g(t) = e^{-bt} a [(t+tau)/s I1(as) - I0(as)],   s = sqrt(t^2 + 2 tau t)
    f(t) = e^{-bt} a tau/s I1(as)

    with a = alpha, b = beta.  I1(as)/s is evaluated as a*I1(y)/y, which is
    analytic at s = 0, so t = 0 yields the exact limits h = -a,
    g = a^2 tau/2 - a, f = a^2 tau/2.  Scaled Bessel forms keep the products
    finite for large t since |a| <= b.
    """
    a, b, tau = params.alpha, params.beta, params.tau
    tt = np.asarray(t, dtype=float)
    if np.any(tt < 0):
        raise ValueError("kernels are defined for t >= 0")
    if a == 0.0:
        z = np.zeros_like(tt)
        if np.ndim(t) == 0:
            return 0.0, 0.0, 0.0
        return z, z.copy(), z.copy()
    sgn = 1.0 if a > 0 else -1.0
    aa = abs(a)

    x = aa * tt
    h = a * np.exp(x - b * tt) * (sgn * bessel_i1e(x) - bessel_i0e(x))

    s = np.sqrt(tt * tt + 2.0 * tau * tt)
    y = aa * s
    decay = np.exp(y - b * tt)
    i1x = bessel_i1_over_x_e(y)  # e^{-y} I1(y)/y; I1(a s)/s = a * I1(y)/y
    g = a * decay * ((tt + tau) * a * i1x - bessel_i0e(y))
    f = decay * (a * a * tau) * i1x
    if np.ndim(t) == 0:
        return float(h), float(g), float(f)
    return h, g, f


def conv_history_sum(x, y, k: int, dt: float) -> float:
    """Known part of the discretized convolution (x*y)(k*dt).

    Sums the trapezoidal integrals over [i dt, (i+1) dt] for i = 0..k-2, using
    samples x[0..k-1] and kernel samples y[1..k].  The last interval is the
    C1*x(t) term and is left to the caller.
    """
    if k < 2:
        return 0.0
    a = np.dot(x[0:k - 1], y[k:1:-1])
    c = np.dot(x[1:k], y[k - 1:0:-1])
    return 0.5 * dt * float(a + c)


def discretize_convolution(past, kernel: Callable[[float], float] | np.ndarray, dt: float):
    """Split (x*y)(t) into C1*x(t) + C2 at t = len(past)*dt.

    ``past`` holds x at 0, dt, ..., t - dt.  ``kernel`` is either a callable
    y(t) or an array of samples y(m*dt) with at least len(past)+1 entries.
    Returns ``(C1, C2)`` where C1 = y(0)*dt.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.asarray(past, dtype=float)
    k = len(x)
    if callable(kernel):
        y = np.array([kernel(m * dt) for m in range(k + 1)], dtype=float)
    else:
        y = np.asarray(kernel, dtype=float)
    return float(y[0]) * dt, conv_history_sum(x, y, k, dt)


class PortHistory:
    """Sampled u/i history of both ports of one line on a uniform grid.

    Index k is time k*dt.  Indices below zero read as zero (line at rest
    before t = 0); samples not yet known are NaN so that an acausal read is
    loud rather than silently wrong.
    """

    def __init__(self, dt: float, nsteps: int):
        if dt <= 0 or nsteps < 0:
            raise ValueError("need dt > 0 and nsteps >= 0")
        self.dt = dt
        self.nsteps = nsteps
        self.u = {p: np.full(nsteps + 1, np.nan) for p in (1, 2)}
        self.i = {p: np.full(nsteps + 1, np.nan) for p in (1, 2)}
        for p in (1, 2):
            self.u[p][0] = 0.0
            self.i[p][0] = 0.0

    def record(self, port: int, k: int, u: float, i: float) -> None:
        self.u[port][k] = u
        self.i[port][k] = i

    def sample(self, port: int, k: int) -> tuple[float, float]:
        if k < 0:
            return 0.0, 0.0
        u = self.u[port][k]
        i = self.i[port][k]
        if math.isnan(u) or math.isnan(i):
            raise RuntimeError(f"port {port} sample {k} read before it was known")
        return float(u), float(i)

    def clear_after(self, port: int, k: int) -> None:
        """Forget samples with index > k (used when a window is re-solved)."""
        self.u[port][k + 1:] = np.nan
        self.i[port][k + 1:] = np.nan


def lossless_port_rhs(history: PortHistory, params: LineParams, k: int) -> tuple[float, float]:
    """Thevenin voltages (e1, e2) of both ports at step k."""
    d = delay_steps(params.tau, history.dt)
    z = params.z
    u2, i2 = history.sample(2, k - d)
    u1, i1 = history.sample(1, k - d)
    return u2 - z * i2, u1 - z * i1


class KernelTable:
    """Kernel samples h, g, f at m*dt for m = 0..nsteps, plus the constants
    of the discrete port relation that do not depend on history."""

    def __init__(self, params: LineParams, dt: float, nsteps: int):
        self.params = params
        self.dt = dt
        t = np.arange(nsteps + 1) * dt
        self.h, self.g, self.f = lossy_kernels(params, t)
        self.atten = math.exp(-params.beta * params.tau)
        z = params.z
        self.a = 1.0 + self.h[0] * dt
        self.b = z
        self.e = self.atten * (1.0 + self.g[0] * dt)
        self.gc = -z * self.atten * (1.0 + self.f[0] * dt)


class PortCoefficients(NamedTuple):
    A1: float
    B1: float
    D1: float
    E2: float
    G2: float
    H2: float
    A2: float
    B2: float
    D2: float
    E1: float
    G1: float
    H1: float


def lossy_port_terms(history: PortHistory, table: KernelTable, port: int, k: int, d: int):
    """Terms of one port's discrete relation at step k.

    Returns ``(A, B, D, E, G, H, v, j)`` such that
    A*u_p(k) + B*i_p(k) + D = E*v + G*j + H, where v, j are the peer's
    samples at k - d.  D uses this port's samples before k; H uses the peer's
    samples before k - d.
    """
    peer = 2 if port == 1 else 1
    dt = table.dt
    z = table.params.z
    D = conv_history_sum(history.u[port], table.h, k, dt)
    kd = k - d
    if kd < 0:
        v = j = 0.0
        H = 0.0
    else:
        v, j = history.sample(peer, kd)
        if kd >= 2 and np.isnan(history.u[peer][kd - 1]):
            raise RuntimeError(f"port {peer} history incomplete before sample {kd}")
        H = table.atten * (conv_history_sum(history.u[peer], table.g, kd, dt)
                           - z * conv_history_sum(history.i[peer], table.f, kd, dt))
    return table.a, table.b, D, table.e, table.gc, H, v, j


def lossy_port_coefficients(history: PortHistory, params: LineParams, k: int,
                            table: KernelTable | None = None) -> PortCoefficients:
    """All coefficients of the discrete lossy port relations at step k."""
    if table is None:
        table = KernelTable(params, history.dt, max(k, 1))
    d = delay_steps(params.tau, history.dt)
    A1, B1, D1, E2, G2, H2, _, _ = lossy_port_terms(history, table, 1, k, d)
    A2, B2, D2, E1, G1, H1, _, _ = lossy_port_terms(history, table, 2, k, d)
    return PortCoefficients(A1, B1, D1, E2, G2, H2, A2, B2, D2, E1, G1, H1)


def lumped_rlgc_expand(name: str, params: LineParams, nseg: int,
                       port1: tuple[str, str] = ("p1", "0"),
                       port2: tuple[str, str] = ("p2", "0")):
    """Replace a line by ``nseg`` L-sections (series R, L; shunt G, C).

    Returns a list of :class:`mtmsim.netlist.Element`.  Both ports must share
    the same reference node.  Zero R or G sections are omitted rather than
    stamped as zero-valued elements.
    """
    from .netlist import Element

    if nseg < 1:
        raise ValueError("nseg must be >= 1")
    ref = port1[1]
    if port2[1] != ref:
        raise ValueError("lumped expansion needs a common reference node")
    n = float(nseg)
    r = params.R * params.length / n
    ind = params.L * params.length / n
    g = params.G * params.length / n
    c = params.C * params.length / n
    out = []
    prev = port1[0]
    for s in range(1, nseg + 1):
        node = port2[0] if s == nseg else f"{name}_n{s}"
        if r > 0:
            mid = f"{name}_m{s}"
            out.append(Element("resistor", f"R{name}_{s}", (prev, mid), {"value": r}))
            out.append(Element("inductor", f"L{name}_{s}", (mid, node), {"value": ind}))
        else:
            out.append(Element("inductor", f"L{name}_{s}", (prev, node), {"value": ind}))
        if g > 0:
            out.append(Element("resistor", f"R{name}_g{s}", (node, ref), {"value": 1.0 / g}))
        out.append(Element("capacitor", f"C{name}_{s}", (node, ref), {"value": c}))
        prev = node
    return out
