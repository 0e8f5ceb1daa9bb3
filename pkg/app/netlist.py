"""
Circuit data model for AC netlists.

Elements, nodes and netlists are immutable values. This module also holds
the parser and emitter for the line-oriented SPICE subset the simulator
reads and writes (R, C, L, T, V, I cards plus .title/.probe/.end), the
LTspice export, and the structural checks the solver relies on.
"""
import hashlib
import logging
import math
import re
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import TYPE_CHECKING, Dict, List, NamedTuple, Optional, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .exceptions import NetlistError, NetlistSyntaxError

if TYPE_CHECKING:
    from .schemas import SweepPlan

logger = logging.getLogger(__name__)

GROUND = "0"
GROUND_ALIASES = {"0", "gnd"}

# SPICE convention: "m" is milli, "meg" is mega.
SI_SUFFIXES = {
    "t": 12,
    "g": 9,
    "meg": 6,
    "k": 3,
    "m": -3,
    "u": -6,
    "n": -9,
    "p": -12,
    "f": -15,
}

_VALUE_RE = re.compile(
    r"^([+-]?(?:\d+(?:\.\d*)?|\.\d+))(?:e([+-]?\d+))?(meg|[tgkmunpf])?([a-z]*)$"
)

# Directives LTspice exports carry that mean nothing to the AC solver.
SKIPPED_DIRECTIVES = {".ac", ".backanno", ".options", ".option"}


class ElementKind(str, Enum):
    """Element kinds, keyed by their SPICE card letter."""

    RESISTOR = "R"
    CAPACITOR = "C"
    INDUCTOR = "L"
    LOSSLESS_LINE = "T"
    AC_VOLTAGE = "V"
    AC_CURRENT = "I"


LUMPED_KINDS = (ElementKind.RESISTOR, ElementKind.CAPACITOR, ElementKind.INDUCTOR)
SOURCE_KINDS = (ElementKind.AC_VOLTAGE, ElementKind.AC_CURRENT)


class NodeId(NamedTuple):
    name: str
    index: int


class Diagnostic(NamedTuple):
    code: str
    message: str
    subject: str = ""


def normalize_node(name: str) -> str:
    """Map ground aliases onto "0" and reject empty or whitespace names."""
    stripped = str(name).strip()
    if not stripped or any(ch.isspace() for ch in stripped):
        raise NetlistError(f"invalid node name '{name}'")
    if stripped.lower() in GROUND_ALIASES:
        return GROUND
    return stripped


def parse_value(token: str, line: Optional[int] = None) -> float:
    """
    Parse a SPICE number: decimal, scientific, or SI-suffixed ("30f", "1meg").

    The suffix is folded into the decimal exponent before conversion so the
    result is the correctly rounded double of the written value.
    """
    match = _VALUE_RE.match(token.strip().lower())
    if match is None:
        raise NetlistSyntaxError(f"invalid value '{token}'", line)
    mantissa, exponent, suffix, _unit = match.groups()
    power = int(exponent or 0) + SI_SUFFIXES.get(suffix, 0)
    return float(f"{mantissa}e{power}")


def format_value(value: float) -> str:
    """Shortest text that parses back to exactly `value`."""
    text = repr(float(value))
    if text.endswith(".0"):
        text = text[:-2]
    return text


def _require_positive(label: str, name: str, value: Optional[float]) -> None:
    if value is None or not math.isfinite(value) or value <= 0:
        raise NetlistError(f"{label}: {name} must be a positive finite number, got {value!r}")


@dataclass(frozen=True)
class Element:
    """
    One circuit element.

    `value` is ohms, farads or henries for lumped elements and the AC
    amplitude (volts or amperes) for sources. Lossless lines use `z0` and
    `delay` instead and have four terminals (p1+, p1-, p2+, p2-).
    """

    label: str
    kind: ElementKind
    nodes: Tuple[str, ...]
    value: float = 0.0
    phase_deg: float = 0.0
    z0: Optional[float] = None
    delay: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ElementKind(self.kind))
        object.__setattr__(self, "nodes", tuple(normalize_node(n) for n in self.nodes))
        if not self.label or self.label[0].upper() != self.kind.value:
            raise NetlistError(f"label '{self.label}' must start with '{self.kind.value}'")
        expected = 4 if self.kind is ElementKind.LOSSLESS_LINE else 2
        if len(self.nodes) != expected:
            raise NetlistError(f"{self.label}: expected {expected} terminals, got {len(self.nodes)}")
        if self.kind is ElementKind.LOSSLESS_LINE:
            _require_positive(self.label, "Z0", self.z0)
            _require_positive(self.label, "Td", self.delay)
        else:
            _require_positive(self.label, "value", self.value)
        if not math.isfinite(self.phase_deg):
            raise NetlistError(f"{self.label}: phase must be finite")

    @property
    def phase(self) -> float:
        """Source phase in radians."""
        return math.radians(self.phase_deg)

    @property
    def phasor(self) -> complex:
        return self.value * complex(math.cos(self.phase), math.sin(self.phase))

    @property
    def is_source(self) -> bool:
        return self.kind in SOURCE_KINDS


def resistor(label: str, n_plus: str, n_minus: str, ohms: float) -> Element:
    return Element(label, ElementKind.RESISTOR, (n_plus, n_minus), ohms)


def capacitor(label: str, n_plus: str, n_minus: str, farads: float) -> Element:
    return Element(label, ElementKind.CAPACITOR, (n_plus, n_minus), farads)


def inductor(label: str, n_plus: str, n_minus: str, henries: float) -> Element:
    return Element(label, ElementKind.INDUCTOR, (n_plus, n_minus), henries)


def lossless_line(label: str, ports: Tuple[str, str, str, str], z0: float, delay: float) -> Element:
    return Element(label, ElementKind.LOSSLESS_LINE, tuple(ports), z0=z0, delay=delay)


def voltage_source(label: str, n_plus: str, n_minus: str, amplitude: float, phase_deg: float = 0.0) -> Element:
    return Element(label, ElementKind.AC_VOLTAGE, (n_plus, n_minus), amplitude, phase_deg)


def current_source(label: str, n_plus: str, n_minus: str, amplitude: float, phase_deg: float = 0.0) -> Element:
    return Element(label, ElementKind.AC_CURRENT, (n_plus, n_minus), amplitude, phase_deg)


@dataclass(frozen=True)
class Netlist:
    """Ordered elements, probe nodes and a title. Ground is always node 0."""

    elements: Tuple[Element, ...]
    probes: Tuple[str, ...] = ()
    title: str = ""

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        object.__setattr__(self, "probes", tuple(normalize_node(p) for p in self.probes))
        seen = set()
        for element in self.elements:
            key = element.label.lower()
            if key in seen:
                raise NetlistError(f"duplicate label '{element.label}'")
            seen.add(key)

    @cached_property
    def node_names(self) -> Tuple[str, ...]:
        names = {GROUND: 0}
        for element in self.elements:
            for node in element.nodes:
                names.setdefault(node, len(names))
        return tuple(names)

    @cached_property
    def node_index(self) -> Dict[str, int]:
        return {name: index for index, name in enumerate(self.node_names)}

    @property
    def n_nodes(self) -> int:
        return len(self.node_names)

    @cached_property
    def digest(self) -> str:
        return netlist_digest(self)

    def nodes(self) -> List[NodeId]:
        return [NodeId(name, index) for index, name in enumerate(self.node_names)]

    def node(self, name: str) -> NodeId:
        key = normalize_node(name)
        if key not in self.node_index:
            raise NetlistError(f"unknown node '{name}'")
        return NodeId(key, self.node_index[key])

    def element(self, label: str) -> Optional[Element]:
        for element in self.elements:
            if element.label.lower() == label.lower():
                return element
        return None

    def elements_of(self, *kinds: ElementKind) -> List[Element]:
        return [element for element in self.elements if element.kind in kinds]

    @property
    def sources(self) -> List[Element]:
        return self.elements_of(*SOURCE_KINDS)


# ============================================================================
# Parsing
# ============================================================================

def _parse_assignments(tokens: List[str], line: int) -> Dict[str, float]:
    params = {}
    for token in tokens:
        key, sep, raw = token.partition("=")
        if not sep or not raw:
            raise NetlistSyntaxError(f"expected KEY=VALUE, got '{token}'", line)
        params[key.lower()] = parse_value(raw, line)
    return params


def _parse_element(tokens: List[str], line: int) -> Element:
    label = tokens[0]
    try:
        kind = ElementKind(label[0].upper())
    except ValueError:
        raise NetlistSyntaxError(f"unknown element kind '{label[0]}' in '{label}'", line) from None

    if kind in LUMPED_KINDS:
        if len(tokens) != 4:
            raise NetlistSyntaxError(f"{label}: expected '{label} n+ n- <value>'", line)
        return Element(label, kind, (tokens[1], tokens[2]), parse_value(tokens[3], line))

    if kind is ElementKind.LOSSLESS_LINE:
        if len(tokens) != 7:
            raise NetlistSyntaxError(f"{label}: expected '{label} p1+ p1- p2+ p2- Z0=<value> Td=<value>'", line)
        params = _parse_assignments(tokens[5:], line)
        if set(params) != {"z0", "td"}:
            raise NetlistSyntaxError(f"{label}: lossless line needs exactly Z0= and Td=", line)
        return Element(label, kind, tuple(tokens[1:5]), z0=params["z0"], delay=params["td"])

    if len(tokens) not in (5, 6) or tokens[3].upper() != "AC":
        raise NetlistSyntaxError(f"{label}: expected '{label} n+ n- AC <amplitude> [<phase_deg>]'", line)
    amplitude = parse_value(tokens[4], line)
    phase_deg = parse_value(tokens[5], line) if len(tokens) == 6 else 0.0
    return Element(label, kind, (tokens[1], tokens[2]), amplitude, phase_deg)


def _saved_nodes(tokens: List[str], line: int) -> List[str]:
    nodes = []
    for token in tokens:
        match = re.fullmatch(r"[vV]\(([^,()]+)\)", token)
        if match is None:
            raise NetlistSyntaxError(f"unsupported .save target '{token}'", line)
        nodes.append(match.group(1))
    return nodes


def parse_netlist(text: str) -> Netlist:
    """Parse native netlist text. Lines after `.end` are ignored."""
    elements: List[Element] = []
    probes: List[str] = []
    title = ""
    labels = set()

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("*"):
            continue
        tokens = line.split()
        head = tokens[0]

        if head.startswith("."):
            directive = head.lower()
            if directive == ".end":
                break
            if directive == ".title":
                title = line[len(head):].strip()
            elif directive == ".probe":
                if len(tokens) < 2:
                    raise NetlistSyntaxError(".probe needs at least one node", line_no)
                probes.extend(tokens[1:])
            elif directive == ".save":
                probes.extend(_saved_nodes(tokens[1:], line_no))
            elif directive in SKIPPED_DIRECTIVES:
                logger.debug("Skipping directive %s on line %d", directive, line_no)
            else:
                raise NetlistSyntaxError(f"unknown directive '{head}'", line_no)
            continue

        try:
            element = _parse_element(tokens, line_no)
        except NetlistSyntaxError:
            raise
        except NetlistError as exc:
            raise NetlistError(str(exc), line_no) from exc
        key = element.label.lower()
        if key in labels:
            raise NetlistError(f"duplicate label '{element.label}'", line_no)
        labels.add(key)
        elements.append(element)

    netlist = Netlist(tuple(elements), tuple(probes), title)
    for probe in netlist.probes:
        if probe not in netlist.node_index:
            raise NetlistError(f"undefined probe node '{probe}'")
    return netlist


# ============================================================================
# Emitting
# ============================================================================

def _format_element(element: Element) -> str:
    nodes = " ".join(element.nodes)
    if element.kind is ElementKind.LOSSLESS_LINE:
        return f"{element.label} {nodes} Z0={format_value(element.z0)} Td={format_value(element.delay)}"
    if element.is_source:
        card = f"{element.label} {nodes} AC {format_value(element.value)}"
        if element.phase_deg != 0.0:
            card += f" {format_value(element.phase_deg)}"
        return card
    return f"{element.label} {nodes} {format_value(element.value)}"


def _ac_directive(plan: "SweepPlan") -> str:
    if plan.spacing == "log":
        decades = math.log10(plan.f_max / plan.f_min)
        per_decade = max(1, math.ceil(plan.n_coarse / decades))
        return f".ac dec {per_decade} {format_value(plan.f_min)} {format_value(plan.f_max)}"
    return f".ac lin {plan.n_coarse} {format_value(plan.f_min)} {format_value(plan.f_max)}"


def emit_netlist(netlist: Netlist, dialect: str = "native", plan: Optional["SweepPlan"] = None) -> str:
    """
    Render a netlist as text.

    `native` re-parses to an identical Netlist. `ltspice` writes a deck
    LTspice accepts: title comment, the same cards, an `.ac` card from
    `plan` (default sweep plan when omitted) and `.save` for the probes.
    """
    if dialect == "native":
        lines = []
        if netlist.title:
            lines.append(f".title {netlist.title}")
        lines.extend(_format_element(element) for element in netlist.elements)
        if netlist.probes:
            lines.append(".probe " + " ".join(netlist.probes))
        lines.append(".end")
        return "\n".join(lines) + "\n"

    if dialect == "ltspice":
        if plan is None:
            from .schemas import SweepPlan
            plan = SweepPlan()
        lines = [f"* {netlist.title or 'qubit readout circuit'}"]
        lines.extend(_format_element(element) for element in netlist.elements)
        lines.append(_ac_directive(plan))
        if netlist.probes:
            lines.append(".save " + " ".join(f"V({probe})" for probe in netlist.probes))
        lines.append(".backanno")
        lines.append(".end")
        return "\n".join(lines) + "\n"

    raise ValueError(f"unknown dialect '{dialect}' (expected 'native' or 'ltspice')")


def netlist_digest(netlist: Netlist) -> str:
    """sha256 of the canonical native emission."""
    return hashlib.sha256(emit_netlist(netlist).encode("utf-8")).hexdigest()


# ============================================================================
# Structural checks
# ============================================================================

class SeriesSource(NamedTuple):
    """A voltage source whose private node feeds exactly one resistor."""

    source: Element
    resistor: Element
    internal: str
    reference: str
    far: str
    sign: float


def _incidence(netlist: Netlist) -> Dict[str, List[Element]]:
    incident: Dict[str, List[Element]] = {}
    for element in netlist.elements:
        for node in element.nodes:
            incident.setdefault(node, []).append(element)
    return incident


def series_sources(netlist: Netlist) -> Tuple[Dict[str, SeriesSource], List[str]]:
    """
    Pair every AC voltage source with its series resistor.

    Returns the convertible sources keyed by label and the labels of voltage
    sources that have no private node feeding a single resistor.
    """
    incident = _incidence(netlist)
    pairs: Dict[str, SeriesSource] = {}
    unpaired: List[str] = []
    for source in netlist.elements_of(ElementKind.AC_VOLTAGE):
        n_plus, n_minus = source.nodes
        found = None
        for internal, reference, sign in ((n_plus, n_minus, 1.0), (n_minus, n_plus, -1.0)):
            if internal == GROUND or internal == reference:
                continue
            attached = [e for e in incident[internal] if e is not source]
            if len(attached) != 1 or attached[0].kind is not ElementKind.RESISTOR:
                continue
            series = attached[0]
            a, b = series.nodes
            if a == b:
                continue
            far = b if a == internal else a
            found = SeriesSource(source, series, internal, reference, far, sign)
            break
        if found is None:
            unpaired.append(source.label)
        else:
            pairs[source.label] = found
    return pairs, unpaired


def _connectivity_edges(netlist: Netlist) -> Tuple[np.ndarray, np.ndarray]:
    index = netlist.node_index
    rows: List[int] = []
    cols: List[int] = []
    for element in netlist.elements:
        if element.kind is ElementKind.AC_CURRENT:
            continue
        if element.kind is ElementKind.LOSSLESS_LINE:
            p1, m1, p2, m2 = (index[n] for n in element.nodes)
            pairs = [(p1, m1), (p2, m2)]
            if m1 == m2:
                pairs.append((p1, p2))
        else:
            pairs = [(index[element.nodes[0]], index[element.nodes[1]])]
        for a, b in pairs:
            rows.append(a)
            cols.append(b)
    return np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64)


def validate(netlist: Netlist) -> List[Diagnostic]:
    """Return one diagnostic per violated netlist invariant; empty when valid."""
    diagnostics: List[Diagnostic] = []

    if not netlist.sources:
        diagnostics.append(Diagnostic("no source", "netlist has no AC source"))

    for probe in netlist.probes:
        if probe not in netlist.node_index:
            diagnostics.append(Diagnostic("bad probe", f"probe node '{probe}' does not exist", probe))

    _pairs, unpaired = series_sources(netlist)
    for label in unpaired:
        diagnostics.append(
            Diagnostic("bad source", f"voltage source '{label}' has no series resistor", label)
        )

    n = netlist.n_nodes
    rows, cols = _connectivity_edges(netlist)
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    _count, labels = connected_components(graph, directed=False)
    for index in np.flatnonzero(labels != labels[0]):
        name = netlist.node_names[index]
        diagnostics.append(
            Diagnostic("floating node", f"node '{name}' has no finite-admittance path to ground", name)
        )

    if diagnostics:
        logger.debug("Netlist '%s' has %d diagnostics", netlist.title, len(diagnostics))
    return diagnostics
