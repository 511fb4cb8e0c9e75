"""Netlists used by the tests, the acceptance suite and the sample circuits."""

from __future__ import annotations

import math

from .netlist import Netlist, parse_netlist
from .tline import LineParams

# on-chip wire of the two-subcircuit example, per metre
WIRE_L = 4e-7 * math.pi
WIRE_C = 1e-7 / (9 * math.pi)
WIRE_LEN = 1e-3
VDD = 1.8


def wire_params(length: float = WIRE_LEN, R: float = 0.0, G: float = 0.0) -> LineParams:
    return LineParams(R, WIRE_L, G, WIRE_C, length)


def two_inverter_text(stop: str = "4n", step: str = "20p", R: float = 0.0) -> str:
    """Two subcircuits joined by a 1 mm wire, driven by a 1 GHz clock.

    Left: clocked CMOS inverter, series resistor and load capacitors.
    Right: a diode clamp at the far end of the wire, then an inverter and an
    RC load.  Each side has its own supply.
    """
    loss = f" R={R!r}" if R else ""
    return f"""* two subcircuits joined by an on-chip wire
Vdd1 vdd1 0 DC {VDD}
Vin in 0 PULSE(0 {VDD} 0.1n 50p 50p 450p 1n)
Mp1 n5 in vdd1 vdd1 PMOS VTO=-0.5 KP=1e-4 W=400u L=1u
Mn1 n5 in 0 0 NMOS VTO=0.5 KP=2e-4 W=200u L=1u
C5 n5 0 20f
R3 n5 n3 10
C3 n3 0 10f
R1 n3 u1 5
T1 u1 0 u2 0 L=4pie-7 C={WIRE_C!r}{loss} LEN=1m
Vdd2 vdd2 0 DC {VDD}
Dclamp u2 vdd2 IS=1e-14 VT=0.025
C2 u2 0 30f
Mp2 u4 u2 vdd2 vdd2 PMOS VTO=-0.5 KP=1e-4 W=20u L=1u
Mn2 u4 u2 0 0 NMOS VTO=0.5 KP=2e-4 W=10u L=1u
R4 u4 0 10k
C4 u4 0 40f
.tran {step} {stop}
.partition wire T1
.print v(in) v(n5) v(n3) v(u1) v(u2) v(u4) i(T1.1) i(T1.2)
.end
"""


def two_inverter(stop: str = "4n", step: str = "20p", R: float = 0.0) -> Netlist:
    return parse_netlist(two_inverter_text(stop, step, R))


def rc_text(r: str = "1k", c: str = "1n", stop: str = "10u", step: str = "10n") -> str:
    return f"""* RC step response
V1 in 0 DC 1
R1 in out {r}
C1 out 0 {c}
.tran {step} {stop}
.print v(out)
.end
"""


def terminated_line_text(load: str, z0: float = 50.0, td: float = 1e-9, stop: float = 6e-9,
                         step: float = 1e-11, ramp: float = 0.0) -> str:
    """Matched source driving a Z0/TD line into ``load`` ("open", "short" or ohms)."""
    src = "DC 1" if ramp == 0 else f"PULSE(0 1 0 {ramp!r} {ramp!r} 1 2)"
    if load == "open":
        tail = ""
    elif load == "short":
        tail = "Vshort far 0 DC 0\n"
    else:
        tail = f"Rload far 0 {load}\n"
    return f"""* line driven through a matched source resistor
V1 src 0 {src}
Rs src near {z0!r}
T1 near 0 far 0 Z0={z0!r} TD={td!r}
{tail}.tran {step!r} {stop!r}
.print v(near) v(far)
.end
"""
