"""
Readout circuit builders.

Turns physical qubit parameters into element values and wires them into the
single-unit, linear-feedline and square arrangements. Also holds the
physics-side sanity numbers: coupling strength, dispersive check, drive
current and photon number.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterator, List, NamedTuple, Optional, Tuple

from .exceptions import UnphysicalInputError
from .netlist import (
    Element,
    Netlist,
    capacitor,
    current_source,
    inductor,
    lossless_line,
    resistor,
    voltage_source,
)
from .schemas import ArrayConfig, DriveSpec, QubitUnitParams

logger = logging.getLogger(__name__)

HBAR = 1.054571817e-34  # J*s
DISPERSIVE_RATIO = 0.1
UNIT_VOLT_AMPLITUDE = 1.0


class DerivedElements(NamedTuple):
    r_q: float
    l_q: float
    r_r: float
    l_r: float


class DispersiveCheck(NamedTuple):
    delta: float
    ratio: float
    ok: bool


class DriveLevel(NamedTuple):
    i: float
    p: float
    n_photons: float


def derive_elements(p: QubitUnitParams) -> DerivedElements:
    """Qubit loss from T1 = C_q R_q, inductances from L = 1/(C w^2), tank loss from Q_r."""
    w_q = 2 * math.pi * p.f_q
    w_r = 2 * math.pi * p.f_r
    return DerivedElements(
        r_q=p.t1_q / p.c_q,
        l_q=1.0 / (p.c_q * w_q ** 2),
        r_r=p.q_r / (w_r * p.c_r),
        l_r=1.0 / (p.c_r * w_r ** 2),
    )


def coupling_strength(c_g: float, c_q: float, c_r: float, f_q: float, f_r: float) -> float:
    """g/2pi in Hz for a qubit coupled to its tank through c_g."""
    return 0.5 * c_g / math.sqrt(c_q * c_r) * math.sqrt(f_q * f_r)


def check_dispersive(g_over_2pi: float, f_q: float, f_r: float,
                     threshold: float = DISPERSIVE_RATIO) -> DispersiveCheck:
    if f_r == f_q:
        raise UnphysicalInputError("dispersive check needs f_r != f_q")
    delta = abs(f_r - f_q)
    ratio = g_over_2pi / delta
    return DispersiveCheck(delta=delta, ratio=ratio, ok=ratio < threshold)


def drive_current(d: DriveSpec) -> DriveLevel:
    """
    Readout drive current I = sqrt(hbar w_cv kappa / R0), its power and the
    photon number n = P / (kappa hbar w_r).

    With `plain_hz` the frequencies enter as given (this is what yields the
    commonly quoted 0.08 nA); `angular` multiplies each by 2*pi.
    """
    scale = 2 * math.pi if d.frequency_convention == "angular" else 1.0
    f_cv = scale * d.f_cv
    kappa = scale * d.kappa
    f_readout = scale * d.f_readout
    i = math.sqrt(HBAR * f_cv * kappa / d.r0)
    p = d.r0 * i ** 2
    return DriveLevel(i=i, p=p, n_photons=p / (kappa * HBAR * f_readout))


def loaded_resonator_frequency(p: QubitUnitParams) -> float:
    """Tank frequency pulled down by the feedline and qubit coupling capacitors."""
    return p.f_r * math.sqrt(p.c_r / (p.c_r + p.c_c + p.c_g))


# ============================================================================
# Parameter tables
# ============================================================================

@dataclass(frozen=True)
class ParameterTable:
    """Per-unit parameters (unit 1 first) and the qubit-qubit coupling edges."""

    units: Tuple[QubitUnitParams, ...]
    couplings: Tuple[Tuple[int, int, float], ...] = ()

    def to_dict(self) -> Dict:
        return {
            "units": [unit.model_dump() for unit in self.units],
            "couplings": [{"a": a, "b": b, "c_qq": c} for a, b, c in self.couplings],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "ParameterTable":
        return cls(
            units=tuple(QubitUnitParams(**unit) for unit in data["units"]),
            couplings=tuple((int(c["a"]), int(c["b"]), float(c["c_qq"])) for c in data.get("couplings", [])),
        )


# Unit positions inside a square tile, as (row, column).
TILE_POSITIONS = {1: (0, 0), 2: (0, 1), 3: (1, 1), 4: (1, 0)}
TILE_RING = ((1, 2), (2, 3), (3, 4), (1, 4))


def tile_grid_side(n_tiles: int) -> int:
    """Side of the smallest square grid holding `n_tiles` tiles."""
    return math.isqrt(n_tiles - 1) + 1 if n_tiles > 1 else 1


def _coupling_edges(cfg: ArrayConfig) -> Iterator[Tuple[int, int]]:
    if cfg.arrangement == "linear":
        for u in range(1, cfg.n_qubits):
            yield u, u + 1
        return

    n_tiles = cfg.n_qubits // 4
    side = tile_grid_side(n_tiles)
    for tile in range(n_tiles):
        base = 4 * tile
        for a, b in TILE_RING:
            yield base + a, base + b
        row, col = divmod(tile, side)
        right = tile + 1
        if col + 1 < side and right < n_tiles:
            yield base + 2, 4 * right + 1
            yield base + 3, 4 * right + 4
        below = tile + side
        if below < n_tiles:
            yield base + 4, 4 * below + 1
            yield base + 3, 4 * below + 2


def nominal_table(cfg: ArrayConfig, p: QubitUnitParams) -> ParameterTable:
    """Unperturbed parameters of every unit in the arrangement."""
    f_q_base = cfg.f_q_base if cfg.f_q_base is not None else p.f_q
    f_r_base = cfg.f_r_base if cfg.f_r_base is not None else p.f_r

    if cfg.arrangement == "linear":
        pattern = []
        for k in range(min(cfg.stagger_period, cfg.n_qubits)):
            update = {"f_q": f_q_base + k * cfg.f_q_step, "f_r": f_r_base + k * cfg.f_r_step}
            pattern.append(QubitUnitParams(**{**p.model_dump(), **update}))
        units = tuple(pattern[i % cfg.stagger_period] for i in range(cfg.n_qubits))
    else:
        unit = QubitUnitParams(**{**p.model_dump(), "f_q": f_q_base, "f_r": f_r_base})
        units = (unit,) * cfg.n_qubits

    couplings = tuple((a, b, cfg.c_qq) for a, b in _coupling_edges(cfg))
    return ParameterTable(units=units, couplings=couplings)


def band_boundary(cfg: ArrayConfig, p: QubitUnitParams) -> float:
    """Midpoint between the highest qubit frequency and the lowest loaded tank frequency."""
    table = nominal_table(cfg, p)
    return table_band_boundary(table)


def table_band_boundary(table: ParameterTable) -> float:
    f_q_top = max(unit.f_q for unit in table.units)
    f_r_bottom = min(loaded_resonator_frequency(unit) for unit in table.units)
    return 0.5 * (f_q_top + f_r_bottom)


# ============================================================================
# Builders
# ============================================================================

def _drive_elements(d: DriveSpec, feed: str) -> List[Element]:
    if d.amplitude_mode == "norton_current":
        # Norton form: current injected into the feed, r0 in parallel.
        return [
            current_source("I1", "0", feed, drive_current(d).i),
            resistor("Rs1", feed, "0", d.r0),
        ]
    return [
        voltage_source("V1", "in", "0", UNIT_VOLT_AMPLITUDE),
        resistor("Rs1", "in", feed, d.r0),
    ]


def _unit_elements(u: int, p: QubitUnitParams, feed: str) -> List[Element]:
    values = derive_elements(p)
    tank, qubit = f"t{u}", f"q{u}"
    elements = [
        capacitor(f"Cc{u}", feed, tank, p.c_c),
        resistor(f"Rr{u}", tank, "0", values.r_r),
        inductor(f"Lr{u}", tank, "0", values.l_r),
        capacitor(f"Cr{u}", tank, "0", p.c_r),
    ]
    if p.c_g > 0:
        elements.append(capacitor(f"Cg{u}", tank, qubit, p.c_g))
    elements.extend([
        resistor(f"Rq{u}", qubit, "0", values.r_q),
        inductor(f"Lq{u}", qubit, "0", values.l_q),
        capacitor(f"Cq{u}", qubit, "0", p.c_q),
    ])
    return elements


def _coupling_elements(table: ParameterTable) -> List[Element]:
    return [
        capacitor(f"Cqq{a}_{b}", f"q{a}", f"q{b}", value)
        for a, b, value in table.couplings
        if value > 0
    ]


def _build_linear(cfg: ArrayConfig, table: ParameterTable, d: DriveSpec) -> Netlist:
    elements: List[Element] = []
    if cfg.io_lines is None:
        feed = "out1"
        elements.extend(_drive_elements(d, feed))
    else:
        feed = "feed"
        elements.extend(_drive_elements(d, "feed_in"))
        elements.append(lossless_line("Tin", ("feed_in", "0", feed, "0"), cfg.io_lines.z0, cfg.io_lines.delay))
        elements.append(lossless_line("Tout", (feed, "0", "out1", "0"), cfg.io_lines.z0, cfg.io_lines.delay))
    elements.append(resistor("Rt1", "out1", "0", cfg.termination))

    for u, unit in enumerate(table.units, start=1):
        elements.extend(_unit_elements(u, unit, feed))
    elements.extend(_coupling_elements(table))

    title = "single readout unit" if cfg.n_qubits == 1 else f"linear array, {cfg.n_qubits} qubits"
    return Netlist(tuple(elements), ("out1",), title)


def _square_feed(u: int) -> str:
    return f"out{u}" if u <= 4 else f"feed{u}"


def _build_square(cfg: ArrayConfig, table: ParameterTable, d: DriveSpec) -> Netlist:
    elements: List[Element] = _drive_elements(d, "out1")
    for u, unit in enumerate(table.units, start=1):
        feed = _square_feed(u)
        if u != 1:
            elements.append(resistor(f"Rin{u}", feed, "0", d.r0))
        elements.append(resistor(f"Rt{u}", feed, "0", cfg.termination))
        elements.extend(_unit_elements(u, unit, feed))
    elements.extend(_coupling_elements(table))

    if cfg.arrangement == "square_unit":
        title = "square unit, 4 qubits"
    else:
        title = f"square tiled array, {cfg.n_qubits} qubits"
    return Netlist(tuple(elements), ("out1", "out2", "out3", "out4"), title)


def build_from_table(cfg: ArrayConfig, table: ParameterTable, d: DriveSpec) -> Netlist:
    """Wire an arrangement from explicit per-unit parameters."""
    if len(table.units) != cfg.n_qubits:
        raise ValueError(f"parameter table has {len(table.units)} units, arrangement needs {cfg.n_qubits}")
    if cfg.arrangement == "linear":
        netlist = _build_linear(cfg, table, d)
    else:
        netlist = _build_square(cfg, table, d)
    logger.info("Built '%s': %d elements, %d nodes", netlist.title, len(netlist.elements), netlist.n_nodes)
    return netlist


def build_unit(p: QubitUnitParams, d: DriveSpec) -> Netlist:
    """One qubit and its tank on a feedline terminated by r0, probed at out1."""
    cfg = ArrayConfig(arrangement="linear", n_qubits=1, termination=d.r0)
    return build_from_table(cfg, nominal_table(cfg, p), d)


def build_linear_array(cfg: ArrayConfig, p: QubitUnitParams, d: DriveSpec) -> Netlist:
    if cfg.arrangement != "linear":
        raise ValueError(f"build_linear_array needs arrangement 'linear', got '{cfg.arrangement}'")
    return build_from_table(cfg, nominal_table(cfg, p), d)


def build_square_array(cfg: ArrayConfig, p: QubitUnitParams, d: DriveSpec) -> Netlist:
    if cfg.arrangement not in ("square_unit", "square_tiled"):
        raise ValueError(f"build_square_array needs a square arrangement, got '{cfg.arrangement}'")
    return build_from_table(cfg, nominal_table(cfg, p), d)


def build_array(cfg: ArrayConfig, p: QubitUnitParams, d: DriveSpec) -> Netlist:
    if cfg.arrangement == "linear":
        return build_linear_array(cfg, p, d)
    return build_square_array(cfg, p, d)


def nominal_resonator_frequencies(table: ParameterTable) -> List[float]:
    """Loaded tank frequencies of the distinct units, ascending."""
    return sorted({loaded_resonator_frequency(unit) for unit in table.units})


def table_derived_elements(table: ParameterTable, limit: Optional[int] = None) -> List[Tuple[int, DerivedElements]]:
    units = table.units if limit is None else table.units[:limit]
    return [(u, derive_elements(unit)) for u, unit in enumerate(units, start=1)]
