"""Companion models and nonlinear device linearizations for MNA.

Sign conventions follow SPICE: a two-terminal element's current flows from
its first terminal to its second through the element; KCL rows sum currents
leaving a node.  Independent and controlled sources push their current from
the first output terminal to the second through the source.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

from .netlist import Element


class Rule(str, Enum):
    """Integration rule for reactive elements."""

    BACKWARD_EULER = "be"
    TRAPEZOIDAL = "trap"
    DC = "dc"  # capacitors open, inductors shorted


@dataclass
class DeviceState:
    """History one reactive element carries between time points.

    ``v_prev`` is the terminal voltage, ``i_prev`` the element current at the
    last accepted point.  Zero at t = 0: the circuit is at rest before the
    supplies switch on.
    """

    v_prev: float = 0.0
    i_prev: float = 0.0


@dataclass
class Stamp:
    """Matrix and right-hand-side contributions of one element.

    Row/column keys are node names or ``"#<name>"`` for an extra branch
    unknown.  Entries touching ground are kept here and dropped at assembly.
    """

    conductances: list[tuple[str, str, float]] = field(default_factory=list)
    currents: list[tuple[str, float]] = field(default_factory=list)
    branches: list[str] = field(default_factory=list)

    def add_conductance(self, a: str, b: str, g: float) -> None:
        self.conductances += [(a, a, g), (b, b, g), (a, b, -g), (b, a, -g)]

    def add_current(self, a: str, b: str, i: float) -> None:
        # current i injected into a, drawn from b
        self.currents += [(a, i), (b, -i)]


def capacitor_companion(c, dt, v_prev, i_prev, rule: Rule):
    """Return (geq, ieq): element current i = geq*v - ieq.  Works on arrays."""
    if rule is Rule.BACKWARD_EULER:
        geq = c / dt
        return geq, geq * v_prev
    if rule is Rule.TRAPEZOIDAL:
        geq = 2.0 * c / dt
        return geq, geq * v_prev + i_prev
    if rule is Rule.DC:
        return 0.0 * c, 0.0 * v_prev
    raise ValueError(f"unknown integration rule {rule!r}")


def inductor_companion(ind, dt, v_prev, i_prev, rule: Rule):
    """Return (req, veq) for the branch row v - req*i = veq.  Works on arrays."""
    if rule is Rule.BACKWARD_EULER:
        req = ind / dt
        return req, -req * i_prev
    if rule is Rule.TRAPEZOIDAL:
        req = 2.0 * ind / dt
        return req, -req * i_prev - v_prev
    if rule is Rule.DC:
        return 0.0 * ind, 0.0 * i_prev
    raise ValueError(f"unknown integration rule {rule!r}")


def stamp_linear(element: Element, dt: float, state: DeviceState | None = None,
                 rule: Rule | str = Rule.TRAPEZOIDAL, t: float = 0.0) -> Stamp:
    """Linear (or companion) stamp of one element at time ``t``."""
    rule = Rule(rule)
    if dt <= 0:
        raise ValueError("dt must be positive")
    state = state or DeviceState()
    s = Stamp()
    kind = element.kind
    if kind == "resistor":
        a, b = element.terminals
        s.add_conductance(a, b, 1.0 / element.params["value"])
    elif kind == "capacitor":
        a, b = element.terminals
        geq, ieq = capacitor_companion(element.params["value"], dt, state.v_prev, state.i_prev, rule)
        s.add_conductance(a, b, geq)
        s.add_current(a, b, ieq)
    elif kind == "inductor":
        a, b = element.terminals
        br = "#" + element.name
        req, veq = inductor_companion(element.params["value"], dt, state.v_prev, state.i_prev, rule)
        s.branches.append(br)
        s.conductances += [(a, br, 1.0), (b, br, -1.0), (br, a, 1.0), (br, b, -1.0), (br, br, -req)]
        s.currents.append((br, veq))
    elif kind == "vsource":
        a, b = element.terminals
        br = "#" + element.name
        s.branches.append(br)
        s.conductances += [(a, br, 1.0), (b, br, -1.0), (br, a, 1.0), (br, b, -1.0)]
        s.currents.append((br, element.source.value(t)))
    elif kind == "isource":
        a, b = element.terminals
        s.add_current(b, a, element.source.value(t))
    elif kind == "vccs":
        op, on, cp, cn = element.terminals
        gm = element.params["gm"]
        s.conductances += [(op, cp, gm), (op, cn, -gm), (on, cp, -gm), (on, cn, gm)]
    else:
        raise ValueError(f"{element.name}: {kind} has no linear stamp")
    return s


class Linearization(NamedTuple):
    """Device current and its linearization at the evaluation point.

    For a diode: current, conductance dI/dV and ``equivalent_source`` with
    I ~= g*v + Ieq.  For a MOSFET: drain current, output conductance gds,
    ``transconductance`` gm, and Ieq with Id ~= gm*vgs + gds*vds + Ieq.
    """

    current: float
    conductance: float
    equivalent_source: float
    transconductance: float = 0.0


# Beyond this multiple of Vt the diode curve continues linearly.
DIODE_CLAMP_VT = 40.0


def diode_current(v: float, i_sat: float, vt: float) -> tuple[float, float]:
    """Shockley current and conductance, linearly continued past 40*Vt."""
    vcrit = DIODE_CLAMP_VT * vt
    if v > vcrit:
        e = math.exp(DIODE_CLAMP_VT)
        g = i_sat / vt * e
        return i_sat * (e - 1.0) + g * (v - vcrit), g
    e = math.exp(v / vt)
    return i_sat * (e - 1.0), i_sat / vt * e


def _nmos_forward(vgs, vds, k, vth, lam):
    # level-1 equations for vds >= 0; returns (id, d/dvgs, d/dvds)
    vov = vgs - vth
    if vov <= 0:
        return 0.0, 0.0, 0.0
    clm = 1.0 + lam * vds
    if vds < vov:
        core = vov * vds - 0.5 * vds * vds
        return k * core * clm, k * vds * clm, k * (vov - vds) * clm + k * core * lam
    core = 0.5 * vov * vov
    return k * core * clm, k * vov * clm, k * core * lam


def mosfet_current(vgs: float, vds: float, params: dict, model: str) -> tuple[float, float, float]:
    """Level-1 drain current (into the drain) with gm = dId/dVgs, gds = dId/dVds."""
    k = params["kp"] * params["w"] / params["l"]
    lam = params["lambda"]
    sign = 1.0 if model == "nmos" else -1.0
    vth = sign * params["vto"]
    vg, vd = sign * vgs, sign * vds
    if vd >= 0:
        i, a, b = _nmos_forward(vg, vd, k, vth, lam)
        gm, gds = a, b
    else:
        # source and drain swap roles: channel current flows s -> d
        i, a, b = _nmos_forward(vg - vd, -vd, k, vth, lam)
        i = -i
        gm, gds = -a, a + b
    # mirrored device: Id = sign * f(sign*v) so derivatives keep their sign
    return sign * i, gm, gds


def eval_nonlinear(element: Element, *v: float) -> Linearization:
    """Evaluate a diode at v_anode_cathode, or a MOSFET at (vgs, vds)."""
    if element.kind == "diode":
        (vd,) = v
        i, g = diode_current(vd, element.params["is"], element.params["vt"])
        return Linearization(i, g, i - g * vd)
    if element.kind == "mosfet":
        vgs, vds = v
        i, gm, gds = mosfet_current(vgs, vds, element.params, element.model)
        return Linearization(i, gds, i - gm * vgs - gds * vds, gm)
    raise ValueError(f"{element.name}: {element.kind} is not a nonlinear device")
