"""SPICE-like netlist parsing, validation and unparsing.

Grammar (one statement per line, ``*`` starts a comment line, ``;`` starts a
trailing comment, a leading ``+`` continues the previous line; names and
keywords are case-insensitive, node names are folded to lower case)::

    Rname n1 n2 value
    Cname n1 n2 value
    Lname n1 n2 value
    Vname n+ n- [DC] value | PULSE(v1 v2 td tr tf pw per) | SIN(vo va f [td]) | PWL(t1 v1 ...)
    Iname n+ n- (same source forms; current flows n+ -> n- through the source)
    Gname out+ out- ctrl+ ctrl- gm
    Dname anode cathode [IS=1e-14] [VT=0.025]
    Mname d g s [b] NMOS|PMOS [VTO=] [KP=] [W=] [L=] [LAMBDA=]
    Tname p1+ p1- p2+ p2- L=.. C=.. LEN=.. [R=..] [G=..]      (per-metre values)
    Tname p1+ p1- p2+ p2- Z0=.. TD=..                          (lossless shorthand)
    .tran step stop
    .partition wire T1[,T2 ...]
    .print v(node) i(Vname) i(Lname) i(Tname.1) ...
    .end

Numbers take engineering suffixes f p n u m k meg g (trailing unit letters are
ignored, ``1pF`` = 1e-12) and an optional ``pi`` factor before the exponent,
so ``4PIE-7`` is 4*pi*1e-7.  Node ``0`` is ground.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Sequence

from .tline import LineParams

GROUND = "0"

KINDS = {
    "R": "resistor",
    "C": "capacitor",
    "L": "inductor",
    "V": "vsource",
    "I": "isource",
    "G": "vccs",
    "D": "diode",
    "M": "mosfet",
}

_SUFFIX_EXP = {"f": -15, "p": -12, "n": -9, "u": -6, "m": -3, "k": 3, "meg": 6, "g": 9}

_VALUE_RE = re.compile(
    r"^(?P<mant>[+-]?(?:\d+\.?\d*|\.\d+))"
    r"(?P<pi>pi)?"
    r"(?:e(?P<exp>[+-]?\d+))?"
    r"(?P<suffix>meg|[fpnumkg])?"
    r"[a-z]*$",
    re.IGNORECASE,
)


class NetlistError(ValueError):
    """Parse or structural error, with the 1-based source line when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def parse_value(text: str) -> float:
    """Parse a number with optional engineering suffix.

    >>> parse_value("1k"), parse_value("1meg"), parse_value("1p")
    (1000.0, 1000000.0, 1e-12)
    """
    m = _VALUE_RE.match(text.strip())
    if not m:
        raise ValueError(f"not a number: {text!r}")
    exp = int(m.group("exp") or 0)
    suffix = (m.group("suffix") or "").lower()
    exp += _SUFFIX_EXP.get(suffix, 0)
    # build the decimal literal so the result is correctly rounded
    value = float(f"{m.group('mant')}e{exp}")
    if m.group("pi"):
        value *= math.pi
    return value


@dataclass(frozen=True)
class SourceWaveform:
    """Independent source value as a function of time."""

    kind: str  # dc | pulse | sin | pwl
    args: tuple[float, ...]

    def value(self, t: float) -> float:
        a = self.args
        if self.kind == "dc":
            return a[0]
        if self.kind == "pulse":
            v1, v2, td, tr, tf, pw, per = (list(a) + [0.0] * 7)[:7]
            if t < td:
                return v1
            tt = t - td
            if per > 0:
                tt = math.fmod(tt, per)
            if tt < tr:
                return v1 + (v2 - v1) * tt / tr
            if tt <= tr + pw:
                return v2
            if tt < tr + pw + tf:
                return v2 + (v1 - v2) * (tt - tr - pw) / tf
            return v1
        if self.kind == "sin":
            vo, va, freq, td = (list(a) + [0.0] * 4)[:4]
            if t < td:
                return vo
            return vo + va * math.sin(2.0 * math.pi * freq * (t - td))
        if self.kind == "pwl":
            ts, vs = a[0::2], a[1::2]
            if t <= ts[0]:
                return vs[0]
            for k in range(1, len(ts)):
                if t <= ts[k]:
                    frac = (t - ts[k - 1]) / (ts[k] - ts[k - 1])
                    return vs[k - 1] + frac * (vs[k] - vs[k - 1])
            return vs[-1]
        raise ValueError(f"unknown source kind {self.kind}")

    def render(self) -> str:
        body = " ".join(repr(x) for x in self.args)
        if self.kind == "dc":
            return f"DC {body}"
        return f"{self.kind.upper()}({body})"


@dataclass(frozen=True)
class Element:
    kind: str
    name: str
    terminals: tuple[str, ...]
    params: dict = field(default_factory=dict)
    source: SourceWaveform | None = None
    model: str | None = None
    line: int | None = field(default=None, compare=False)

    def __hash__(self):
        return hash((self.kind, self.name.lower(), self.terminals))


@dataclass(frozen=True)
class TLine:
    name: str
    port1: tuple[str, str]
    port2: tuple[str, str]
    params: LineParams
    line: int | None = field(default=None, compare=False)

    @property
    def nodes(self) -> tuple[str, ...]:
        return self.port1 + self.port2


@dataclass(frozen=True)
class Directives:
    step: float | None = None
    stop: float | None = None
    partition: tuple[str, ...] = ()
    prints: tuple[str, ...] = ()


@dataclass(frozen=True)
class Netlist:
    nodes: tuple[str, ...]
    elements: tuple[Element, ...]
    tlines: tuple[TLine, ...] = ()
    directives: Directives = Directives()

    def element(self, name: str) -> Element:
        key = name.lower()
        for e in self.elements:
            if e.name.lower() == key:
                return e
        raise KeyError(name)

    def tline(self, name: str) -> TLine:
        key = name.lower()
        for t in self.tlines:
            if t.name.lower() == key:
                return t
        raise KeyError(name)

    def with_directives(self, **changes) -> "Netlist":
        d = self.directives
        fields = {"step": d.step, "stop": d.stop, "partition": d.partition, "prints": d.prints}
        fields.update(changes)
        return Netlist(self.nodes, self.elements, self.tlines, Directives(**fields))


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    message: str
    line: int | None = None

    def __str__(self):
        where = f"line {self.line}: " if self.line is not None else ""
        return f"{self.severity}: {where}{self.message}"


def _logical_lines(text: str):
    out: list[tuple[int, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(";", 1)[0].strip()
        if not line or line.startswith("*"):
            continue
        if line.startswith("+"):
            if not out:
                raise NetlistError("continuation without a statement", lineno)
            first, prev = out[-1]
            out[-1] = (first, prev + " " + line[1:].strip())
            continue
        out.append((lineno, line))
    return out


def _split_params(tokens: Sequence[str], lineno: int) -> tuple[list[str], dict[str, float]]:
    positional, named = [], {}
    for tok in tokens:
        if "=" in tok:
            key, _, val = tok.partition("=")
            try:
                named[key.lower()] = parse_value(val)
            except ValueError as exc:
                raise NetlistError(str(exc), lineno) from None
        else:
            positional.append(tok)
    return positional, named


def _number(tok: str, lineno: int, what: str) -> float:
    try:
        return parse_value(tok)
    except ValueError:
        raise NetlistError(f"bad {what} {tok!r}", lineno) from None


def _parse_source(tokens: list[str], lineno: int) -> SourceWaveform:
    if not tokens:
        raise NetlistError("source needs a value", lineno)
    head = tokens[0].lower()
    if head in ("pulse", "sin", "pwl"):
        args = tuple(_number(t, lineno, f"{head} argument") for t in tokens[1:])
        need = {"pulse": 2, "sin": 3, "pwl": 2}[head]
        if len(args) < need or (head == "pwl" and len(args) % 2):
            raise NetlistError(f"too few {head.upper()} arguments", lineno)
        if head == "pwl" and any(b <= a for a, b in zip(args[0::2], args[2::2])):
            raise NetlistError("PWL times must increase", lineno)
        return SourceWaveform(head, args)
    if head == "dc":
        tokens = tokens[1:]
    if len(tokens) != 1:
        raise NetlistError("expected a single DC value", lineno)
    return SourceWaveform("dc", (_number(tokens[0], lineno, "source value"),))


def _parse_element(lineno: int, line: str) -> Element | TLine:
    # isolate parentheses and commas, glue key = value
    norm = re.sub(r"\s*=\s*", "=", line)
    norm = norm.replace("(", " ").replace(")", " ").replace(",", " ")
    tokens = norm.split()
    name = tokens[0]
    letter = name[0].upper()
    rest = tokens[1:]

    if letter == "T":
        pos, named = _split_params(rest, lineno)
        if len(pos) != 4:
            raise NetlistError(f"{name}: line needs 4 nodes", lineno)
        nodes = [n.lower() for n in pos]
        if "z0" in named or "td" in named:
            if "z0" not in named or "td" not in named:
                raise NetlistError(f"{name}: Z0= and TD= go together", lineno)
            z0, td = named["z0"], named["td"]
            length = named.get("len", 1.0)
            if z0 <= 0 or td <= 0 or length <= 0:
                raise NetlistError(f"{name}: Z0, TD and LEN must be positive", lineno)
            lp = dict(R=0.0, L=z0 * td / length, G=0.0, C=td / (z0 * length), length=length)
        else:
            missing = [k for k in ("l", "c", "len") if k not in named]
            if missing:
                raise NetlistError(f"{name}: missing {', '.join(k.upper() for k in missing)}", lineno)
            lp = dict(R=named.get("r", 0.0), L=named["l"], G=named.get("g", 0.0),
                      C=named["c"], length=named["len"])
        try:
            params = LineParams(**lp)
        except ValueError as exc:
            raise NetlistError(f"{name}: {exc}", lineno) from None
        return TLine(name, (nodes[0], nodes[1]), (nodes[2], nodes[3]), params, lineno)

    kind = KINDS.get(letter)
    if kind is None:
        raise NetlistError(f"unknown element type {name!r}", lineno)

    if kind in ("resistor", "capacitor", "inductor"):
        if len(rest) != 3:
            raise NetlistError(f"{name}: expected 2 nodes and a value", lineno)
        value = _number(rest[2], lineno, "value")
        if not value > 0:
            raise NetlistError(f"{name}: {kind} value must be positive, got {rest[2]}", lineno)
        return Element(kind, name, (rest[0].lower(), rest[1].lower()), {"value": value}, line=lineno)

    if kind in ("vsource", "isource"):
        if len(rest) < 3:
            raise NetlistError(f"{name}: expected 2 nodes and a value", lineno)
        src = _parse_source(rest[2:], lineno)
        return Element(kind, name, (rest[0].lower(), rest[1].lower()), {}, source=src, line=lineno)

    if kind == "vccs":
        if len(rest) != 5:
            raise NetlistError(f"{name}: expected 4 nodes and a transconductance", lineno)
        gm = _number(rest[4], lineno, "transconductance")
        return Element(kind, name, tuple(n.lower() for n in rest[:4]), {"gm": gm}, line=lineno)

    if kind == "diode":
        pos, named = _split_params(rest, lineno)
        if len(pos) != 2:
            raise NetlistError(f"{name}: expected anode and cathode", lineno)
        unknown = set(named) - {"is", "vt"}
        if unknown:
            raise NetlistError(f"{name}: unknown diode parameter(s) {sorted(unknown)}", lineno)
        params = {"is": named.get("is", 1e-14), "vt": named.get("vt", 0.025)}
        if not (params["is"] > 0 and params["vt"] > 0):
            raise NetlistError(f"{name}: IS and VT must be positive", lineno)
        return Element(kind, name, (pos[0].lower(), pos[1].lower()), params, line=lineno)

    # mosfet
    pos, named = _split_params(rest, lineno)
    if len(pos) not in (4, 5) or pos[-1].lower() not in ("nmos", "pmos"):
        raise NetlistError(f"{name}: expected d g s [b] NMOS|PMOS", lineno)
    model = pos[-1].lower()
    nodes = tuple(n.lower() for n in pos[:-1])
    if len(nodes) == 3:
        nodes = nodes + (nodes[2],)
    unknown = set(named) - {"vto", "kp", "w", "l", "lambda"}
    if unknown:
        raise NetlistError(f"{name}: unknown MOSFET parameter(s) {sorted(unknown)}", lineno)
    params = {
        "vto": named.get("vto", 0.5 if model == "nmos" else -0.5),
        "kp": named.get("kp", 2e-5),
        "w": named.get("w", 1e-6),
        "l": named.get("l", 1e-6),
        "lambda": named.get("lambda", 0.0),
    }
    if not (params["kp"] > 0 and params["w"] > 0 and params["l"] > 0 and params["lambda"] >= 0):
        raise NetlistError(f"{name}: KP, W, L must be positive and LAMBDA >= 0", lineno)
    return Element(kind, name, nodes, params, model=model, line=lineno)


_PRINT_RE = re.compile(r"^(v|i)\s*\(\s*([^()\s]+)\s*\)$", re.IGNORECASE)


def parse_netlist(text: str) -> Netlist:
    """Parse netlist text into a :class:`Netlist`."""
    elements: list[Element] = []
    tlines: list[TLine] = []
    names: dict[str, int] = {}
    step = stop = None
    partition: list[str] = []
    prints: list[tuple[int, str, str]] = []

    for lineno, line in _logical_lines(text):
        if line.startswith("."):
            word = line.split()[0].lower()
            args = line[len(word):].strip()
            if word == ".end":
                break
            if word == ".tran":
                parts = args.split()
                if len(parts) != 2:
                    raise NetlistError(".tran needs <step> <stop>", lineno)
                step = _number(parts[0], lineno, "step")
                stop = _number(parts[1], lineno, "stop")
                if not step > 0:
                    raise NetlistError(".tran step must be positive", lineno)
                if not stop > step:
                    raise NetlistError(".tran stop must exceed step", lineno)
            elif word == ".partition":
                parts = args.split(None, 1)
                if len(parts) != 2 or parts[0].lower() != "wire":
                    raise NetlistError(".partition expects 'wire <name>[,<name>...]'", lineno)
                partition.extend(w for w in re.split(r"[\s,]+", parts[1]) if w)
            elif word == ".print":
                for item in re.findall(r"[vViI]\s*\([^)]*\)", args):
                    m = _PRINT_RE.match(item.replace(" ", ""))
                    if not m:
                        raise NetlistError(f"bad .print item {item!r}", lineno)
                    prints.append((lineno, m.group(1).lower(), m.group(2).lower()))
                leftover = re.sub(r"[vViI]\s*\([^)]*\)", "", args).strip()
                if leftover:
                    raise NetlistError(f"bad .print item {leftover!r}", lineno)
            else:
                raise NetlistError(f"unknown directive {word}", lineno)
            continue

        item = _parse_element(lineno, line)
        key = item.name.lower()
        if key in names:
            raise NetlistError(f"duplicate name {item.name!r} (first on line {names[key]})", lineno)
        names[key] = lineno
        if isinstance(item, TLine):
            tlines.append(item)
        else:
            elements.append(item)

    nodes: dict[str, None] = {GROUND: None}
    for e in elements:
        for n in e.terminals:
            nodes.setdefault(n, None)
    for t in tlines:
        for n in t.nodes:
            nodes.setdefault(n, None)

    branch_names = {e.name.lower() for e in elements if e.kind in ("vsource", "inductor")}
    line_names = {t.name.lower() for t in tlines}
    norm_prints = []
    for lineno, kind, what in prints:
        if kind == "v":
            if what not in nodes:
                raise NetlistError(f".print references undeclared node {what!r}", lineno)
            norm_prints.append(f"v({what})")
        else:
            base, _, port = what.partition(".")
            if port:
                if base not in line_names or port not in ("1", "2"):
                    raise NetlistError(f".print references unknown line port {what!r}", lineno)
            elif what not in branch_names:
                raise NetlistError(f".print i() needs a V, L or T<name>.<port>, got {what!r}", lineno)
            norm_prints.append(f"i({what})")

    return Netlist(
        nodes=tuple(nodes),
        elements=tuple(elements),
        tlines=tuple(tlines),
        directives=Directives(step, stop, tuple(partition), tuple(norm_prints)),
    )


def unparse(netlist: Netlist) -> str:
    """Render a netlist back to text that reparses to an equal Netlist."""
    out = []
    for e in netlist.elements:
        nodes = " ".join(e.terminals)
        if e.kind in ("resistor", "capacitor", "inductor"):
            out.append(f"{e.name} {nodes} {e.params['value']!r}")
        elif e.kind in ("vsource", "isource"):
            out.append(f"{e.name} {nodes} {e.source.render()}")
        elif e.kind == "vccs":
            out.append(f"{e.name} {nodes} {e.params['gm']!r}")
        elif e.kind == "diode":
            out.append(f"{e.name} {nodes} IS={e.params['is']!r} VT={e.params['vt']!r}")
        elif e.kind == "mosfet":
            p = e.params
            out.append(
                f"{e.name} {nodes} {e.model.upper()} VTO={p['vto']!r} KP={p['kp']!r} "
                f"W={p['w']!r} L={p['l']!r} LAMBDA={p['lambda']!r}"
            )
    for t in netlist.tlines:
        p = t.params
        out.append(
            f"{t.name} {' '.join(t.nodes)} R={p.R!r} L={p.L!r} G={p.G!r} C={p.C!r} LEN={p.length!r}"
        )
    d = netlist.directives
    if d.step is not None:
        out.append(f".tran {d.step!r} {d.stop!r}")
    if d.partition:
        out.append(f".partition wire {','.join(d.partition)}")
    if d.prints:
        out.append(".print " + " ".join(d.prints))
    out.append(".end")
    return "\n".join(out) + "\n"


def validate(netlist: Netlist) -> list[Diagnostic]:
    """Structural checks that do not stop parsing.

    Errors: partition names that are not transmission lines.  Warnings: a
    non-ground node with fewer than two attachments and no source on it.
    """
    diags: list[Diagnostic] = []
    count: dict[str, int] = {n: 0 for n in netlist.nodes}
    sourced: set[str] = set()
    first_line: dict[str, int | None] = {}
    for e in netlist.elements:
        for n in set(e.terminals):
            count[n] += 1
            first_line.setdefault(n, e.line)
        if e.kind in ("vsource", "isource"):
            sourced.update(e.terminals)
    for t in netlist.tlines:
        for n in set(t.nodes):
            count[n] += 1
            first_line.setdefault(n, t.line)
    for n in netlist.nodes:
        if n == GROUND or n in sourced:
            continue
        if count[n] < 2:
            diags.append(Diagnostic("warning", f"node {n!r} has {count[n]} attachment(s) and no source",
                                    first_line.get(n)))
    line_names = {t.name.lower() for t in netlist.tlines}
    for w in netlist.directives.partition:
        if w.lower() not in line_names:
            diags.append(Diagnostic("error", f".partition names {w!r}, which is not a transmission line"))
    return diags
