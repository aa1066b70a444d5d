"""SPICE-flavoured netlist parsing and circuit graph construction.

Grammar, one element per line (``*`` starts a comment)::

    Rname n+ n- value
    Cname n+ n- value
    Lname n+ n- value
    Dname n+ n- is k          # i = is*(exp(k*v) + 1)
    Vname n+ n- waveform
    Iname n+ n- waveform
    Kname Lname Lname value   # mutual inductance entry
    waveform := dc A | sin A omega | cos A omega | square A omega

Numbers accept scientific notation and the literal ``pi``. Node ``0`` is ground.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

GROUND = "0"
BRANCH_KINDS = ("R", "C", "L", "D", "V", "I")
WAVEFORM_KINDS = ("dc", "sin", "cos", "square")

# square-wave sign is taken as 0 when |sin(omega t)| is below this
_SQUARE_ZERO = 1e-12


class NetlistError(ValueError):
    """Malformed netlist text or an invalid circuit graph."""

    def __init__(self, message: str, line: int | None = None, token: str | None = None):
        self.line = line
        self.token = token
        where = ""
        if line is not None:
            where = f"line {line}: "
        if token is not None:
            message = f"{message} (token {token!r})"
        super().__init__(where + message)


@dataclass(frozen=True)
class Waveform:
    """Time-dependent source value ``amplitude * shape(omega * t)``."""

    kind: str
    amplitude: float
    omega: float = 0.0

    def __call__(self, t: float) -> float:
        if self.kind == "dc":
            return self.amplitude
        if self.kind == "sin":
            return self.amplitude * math.sin(self.omega * t)
        if self.kind == "cos":
            return self.amplitude * math.cos(self.omega * t)
        s = math.sin(self.omega * t)
        if abs(s) <= _SQUARE_ZERO:
            return 0.0
        return self.amplitude * math.copysign(1.0, s)

    def derivative(self, t: float) -> float:
        """Time derivative; zero for ``dc`` and (away from jumps) ``square``."""
        if self.kind == "sin":
            return self.amplitude * self.omega * math.cos(self.omega * t)
        if self.kind == "cos":
            return -self.amplitude * self.omega * math.sin(self.omega * t)
        return 0.0

    def is_discontinuous(self) -> bool:
        return self.kind == "square" and self.omega != 0.0 and self.amplitude != 0.0

    def to_text(self) -> str:
        if self.kind == "dc":
            return f"dc {self.amplitude!r}"
        return f"{self.kind} {self.amplitude!r} {self.omega!r}"


@dataclass(frozen=True)
class Element:
    """One netlist line.

    For ``K`` elements ``nodes`` holds the two coupled inductor names.
    ``params`` is a tuple of floats, or a one-tuple holding a :class:`Waveform`
    for sources.
    """

    kind: str
    name: str
    nodes: Tuple[str, str]
    params: tuple

    @property
    def node_plus(self) -> str:
        return self.nodes[0]

    @property
    def node_minus(self) -> str:
        return self.nodes[1]

    @property
    def waveform(self) -> Waveform:
        return self.params[0]

    @property
    def value(self) -> float:
        return self.params[0]

    def to_text(self) -> str:
        if self.kind in ("V", "I"):
            rest = self.waveform.to_text()
        else:
            rest = " ".join(repr(float(p)) for p in self.params)
        return f"{self.name} {self.nodes[0]} {self.nodes[1]} {rest}"


@dataclass(frozen=True)
class Netlist:
    elements: Tuple[Element, ...]

    def by_name(self, name: str) -> Element:
        for el in self.elements:
            if el.name == name:
                return el
        raise KeyError(name)

    def to_text(self) -> str:
        return "\n".join(el.to_text() for el in self.elements) + "\n"


def parse_number(token: str, line: int | None = None) -> float:
    sign = 1.0
    body = token
    if body[:1] in "+-":
        sign = -1.0 if body[0] == "-" else 1.0
        body = body[1:]
    if body.lower() == "pi":
        return sign * math.pi
    try:
        value = float(body)
    except ValueError:
        raise NetlistError("expected a number", line, token) from None
    if not math.isfinite(value):
        raise NetlistError("number must be finite", line, token)
    return sign * value


def _parse_waveform(tokens: List[str], line: int) -> Waveform:
    if not tokens:
        raise NetlistError("missing waveform", line)
    kind = tokens[0].lower()
    if kind not in WAVEFORM_KINDS:
        raise NetlistError("unknown waveform", line, tokens[0])
    arity = 1 if kind == "dc" else 2
    if len(tokens) - 1 != arity:
        raise NetlistError(f"waveform {kind} takes {arity} value(s), got {len(tokens) - 1}", line)
    values = [parse_number(tok, line) for tok in tokens[1:]]
    return Waveform(kind, *values)


def parse_netlist(text: str) -> Netlist:
    """Parse netlist text into an ordered element list.

    Raises :class:`NetlistError` carrying the 1-based line number on syntax
    errors, duplicate names, unknown inductor references and arity violations.
    """
    elements: List[Element] = []
    seen: Dict[str, Element] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("*"):
            continue
        tokens = stripped.split()
        name = tokens[0]
        kind = name[0].upper()
        if kind not in BRANCH_KINDS and kind != "K":
            raise NetlistError("unknown element kind", lineno, name)
        if name in seen:
            raise NetlistError("duplicate element name", lineno, name)
        if len(tokens) < 3:
            raise NetlistError(f"{kind} element needs two nodes and parameters", lineno, name)
        a, b, rest = tokens[1], tokens[2], tokens[3:]

        if kind == "K":
            if len(rest) != 1:
                raise NetlistError("K element takes 2 inductor names and 1 value", lineno, name)
            for ref in (a, b):
                ref_el = seen.get(ref)
                if ref_el is None or ref_el.kind != "L":
                    raise NetlistError("K references unknown inductor", lineno, ref)
            if a == b:
                raise NetlistError("K must couple two distinct inductors", lineno, b)
            el = Element("K", name, (a, b), (parse_number(rest[0], lineno),))
        elif kind in ("V", "I"):
            el = Element(kind, name, (a, b), (_parse_waveform(rest, lineno),))
        else:
            arity = 2 if kind == "D" else 1
            if len(rest) != arity:
                raise NetlistError(f"{kind} element takes {arity} value(s), got {len(rest)}", lineno, name)
            el = Element(kind, name, (a, b), tuple(parse_number(tok, lineno) for tok in rest))
        seen[name] = el
        elements.append(el)
    return Netlist(tuple(elements))


@dataclass(frozen=True)
class CircuitGraph:
    """Validated circuit graph.

    ``nodes`` lists the non-ground nodes in order of first appearance; row ``k``
    of every incidence matrix belongs to ``nodes[k]``. ``branches`` maps each
    branch class (``C``, ``L``, ``R``, ``V``, ``I``) to its elements in netlist
    order; diodes are resistive branches.
    """

    nodes: Tuple[str, ...]
    branches: Dict[str, Tuple[Element, ...]]
    couplings: Tuple[Element, ...] = ()
    netlist: Netlist | None = field(default=None, compare=False, repr=False)

    @property
    def node_index(self) -> Dict[str, int]:
        return {n: k for k, n in enumerate(self.nodes)}

    def count(self, cls: str) -> int:
        return len(self.branches[cls])


BRANCH_CLASSES = ("C", "L", "R", "V", "I")


def branch_class(kind: str) -> str:
    return "R" if kind == "D" else kind


def build_graph(netlist: Netlist) -> CircuitGraph:
    """Classify branches, order nodes, and validate ground and connectivity."""
    nodes: List[str] = []
    branches: Dict[str, List[Element]] = {cls: [] for cls in BRANCH_CLASSES}
    couplings: List[Element] = []
    has_ground = False
    adjacency: Dict[str, List[str]] = {}
    for el in netlist.elements:
        if el.kind == "K":
            couplings.append(el)
            continue
        if el.node_plus == el.node_minus:
            raise NetlistError(f"self-loop branch {el.name} at node {el.node_plus}")
        for n in el.nodes:
            if n == GROUND:
                has_ground = True
            elif n not in nodes:
                nodes.append(n)
        adjacency.setdefault(el.node_plus, []).append(el.node_minus)
        adjacency.setdefault(el.node_minus, []).append(el.node_plus)
        branches[branch_class(el.kind)].append(el)

    if not has_ground:
        raise NetlistError('missing ground node "0"')
    reached = {GROUND}
    queue = deque([GROUND])
    while queue:
        for nb in adjacency.get(queue.popleft(), ()):
            if nb not in reached:
                reached.add(nb)
                queue.append(nb)
    missing = [n for n in nodes if n not in reached]
    if missing:
        raise NetlistError(f"disconnected graph: nodes {missing} not reachable from ground")

    return CircuitGraph(
        nodes=tuple(nodes),
        branches={cls: tuple(els) for cls, els in branches.items()},
        couplings=tuple(couplings),
        netlist=netlist,
    )


def load_graph(text: str) -> CircuitGraph:
    return build_graph(parse_netlist(text))

