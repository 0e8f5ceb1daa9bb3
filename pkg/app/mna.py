"""
Nodal AC analysis.

A netlist is compiled once into an `AcTemplate`: a fixed sparse pattern, a
fill-reducing ordering and scatter maps for every element class. Each
frequency then only recombines data arrays and runs a numeric factorization.
Voltage sources are folded into their series resistor as Norton sources, so
the system stays purely nodal and symmetric.
"""
import hashlib
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, NamedTuple, Sequence, Tuple

import numpy as np
from scipy.sparse import csc_matrix
from scipy.sparse.linalg import norm as sparse_norm
from scipy.sparse.linalg import splu

from .exceptions import NetlistError, SolverError
from .netlist import GROUND, ElementKind, Netlist, series_sources

logger = logging.getLogger(__name__)

LINE_EPSILON = 1e-9
SINGULAR_FLOOR = 1e-12
RESIDUAL_TOLERANCE = 1e-10
PIVOT_THRESHOLD = 0.1

_CONDUCTANCE, _CAPACITANCE, _INVERSE_INDUCTANCE = 0, 1, 2

# Fill-reducing orderings keyed by pattern digest, per process, least recently used dropped first.
ORDERING_CACHE_SIZE = 64
_ORDERINGS: "OrderedDict[str, np.ndarray]" = OrderedDict()


def line_admittance(z0, delay, omega: float, epsilon: float = LINE_EPSILON):
    """
    Two-port admittances (y11 = y22, y12 = y21) of a lossless line.

    The propagation constant gets a tiny real part `epsilon` so the line stays
    finite at omega*delay = k*pi. With `epsilon = 0` those frequencies raise.
    """
    z0 = np.asarray(z0, dtype=float)
    delay = np.asarray(delay, dtype=float)
    if epsilon == 0 and np.any(np.abs(np.sin(omega * delay)) < SINGULAR_FLOOR):
        raise SolverError("lossless line is singular (omega*delay is a multiple of pi)", omega)
    theta = epsilon + 1j * omega * delay
    y11 = 1.0 / (z0 * np.tanh(theta))
    y12 = -1.0 / (z0 * np.sinh(theta))
    return y11, y12


def open_stub_impedance(z0: float, delay: float, omega: float, epsilon: float = LINE_EPSILON) -> complex:
    """Input impedance of a line whose far port is open."""
    return complex(z0 / np.tanh(epsilon + 1j * omega * delay))


def _fill_reducing_order(n: int, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """New position of every unknown, from a COLAMD pass on the bare pattern."""
    off = rows != cols
    degree = np.bincount(rows, minlength=n).astype(float)
    diagonal = np.arange(n)
    pattern = csc_matrix(
        (
            np.concatenate([-np.ones(int(off.sum())), degree + 1.0]),
            (np.concatenate([rows[off], diagonal]), np.concatenate([cols[off], diagonal])),
        ),
        shape=(n, n),
    )
    return splu(pattern, permc_spec="COLAMD").perm_c.copy()


def _cached_order(digest: str, n: int, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    order = _ORDERINGS.get(digest)
    if order is not None:
        _ORDERINGS.move_to_end(digest)
        return order
    order = _fill_reducing_order(n, rows, cols) if n else np.zeros(0, dtype=np.int64)
    _ORDERINGS[digest] = order
    while len(_ORDERINGS) > ORDERING_CACHE_SIZE:
        _ORDERINGS.popitem(last=False)
    logger.debug("Computed ordering for %d unknowns (pattern %s)", n, digest[:12])
    return order


class AcTemplate:
    """A netlist compiled for repeated AC solves."""

    def __init__(self, netlist: Netlist):
        self.netlist = netlist
        pairs, unpaired = series_sources(netlist)
        if unpaired:
            raise NetlistError(f"voltage source '{unpaired[0]}' has no series resistor")
        self.series = tuple(pairs.values())
        substituted = {pair.resistor.label: pair for pair in self.series}
        eliminated = {netlist.node_index[pair.internal] for pair in self.series}

        node_index = netlist.node_index
        unknown_nodes = np.array(
            [i for i in range(1, netlist.n_nodes) if i not in eliminated], dtype=np.int64
        )
        n = len(unknown_nodes)
        position = np.full(netlist.n_nodes, -1, dtype=np.int64)
        position[unknown_nodes] = np.arange(n)

        rows: List[int] = []
        cols: List[int] = []
        vals: List[float] = []
        cats: List[int] = []

        def two_terminal(a: str, b: str, value: float, category: int) -> None:
            pa, pb = position[node_index[a]], position[node_index[b]]
            for r, c, sign in ((pa, pa, 1.0), (pb, pb, 1.0), (pa, pb, -1.0), (pb, pa, -1.0)):
                if r >= 0 and c >= 0:
                    rows.append(r)
                    cols.append(c)
                    vals.append(sign * value)
                    cats.append(category)

        line_rows: List[int] = []
        line_cols: List[int] = []
        line_coef: List[float] = []
        line_id: List[int] = []
        line_mutual: List[bool] = []
        z0s: List[float] = []
        delays: List[float] = []

        i_src = np.zeros(n, dtype=complex)

        def inject(node: str, current: complex) -> None:
            p = position[node_index[node]]
            if p >= 0:
                i_src[p] += current

        for element in netlist.elements:
            kind = element.kind
            if kind is ElementKind.RESISTOR:
                pair = substituted.get(element.label)
                a, b = (pair.reference, pair.far) if pair else element.nodes
                two_terminal(a, b, 1.0 / element.value, _CONDUCTANCE)
            elif kind is ElementKind.CAPACITOR:
                two_terminal(*element.nodes, element.value, _CAPACITANCE)
            elif kind is ElementKind.INDUCTOR:
                two_terminal(*element.nodes, 1.0 / element.value, _INVERSE_INDUCTANCE)
            elif kind is ElementKind.AC_CURRENT:
                n_plus, n_minus = element.nodes
                inject(n_minus, element.phasor)
                inject(n_plus, -element.phasor)
            elif kind is ElementKind.LOSSLESS_LINE:
                k = len(z0s)
                z0s.append(element.z0)
                delays.append(element.delay)
                p1, m1, p2, m2 = (position[node_index[node]] for node in element.nodes)
                port1 = ((p1, 1.0), (m1, -1.0))
                port2 = ((p2, 1.0), (m2, -1.0))
                for left, right, mutual in ((port1, port1, False), (port2, port2, False),
                                            (port1, port2, True), (port2, port1, True)):
                    for r, s in left:
                        for c, t in right:
                            if r >= 0 and c >= 0:
                                line_rows.append(r)
                                line_cols.append(c)
                                line_coef.append(s * t)
                                line_id.append(k)
                                line_mutual.append(mutual)

        for pair in self.series:
            current = pair.sign * pair.source.phasor / pair.resistor.value
            inject(pair.far, current)
            inject(pair.reference, -current)

        rows_a = np.asarray(rows, dtype=np.int64)
        cols_a = np.asarray(cols, dtype=np.int64)
        line_rows_a = np.asarray(line_rows, dtype=np.int64)
        line_cols_a = np.asarray(line_cols, dtype=np.int64)
        diagonal = np.arange(n, dtype=np.int64)
        all_rows = np.concatenate([rows_a, line_rows_a, diagonal])
        all_cols = np.concatenate([cols_a, line_cols_a, diagonal])

        self.n = n
        self.pattern_digest = hashlib.sha256(
            np.int64(n).tobytes() + np.unique(all_cols * max(n, 1) + all_rows).tobytes()
        ).hexdigest()
        order = self.order = _cached_order(self.pattern_digest, n, all_rows, all_cols)

        keys = order[all_cols] * max(n, 1) + order[all_rows]
        unique_keys, inverse = np.unique(keys, return_inverse=True)
        self.nnz = len(unique_keys)
        self.indices = (unique_keys % max(n, 1)).astype(np.int32)
        self.indptr = np.concatenate(
            [[0], np.cumsum(np.bincount(unique_keys // max(n, 1), minlength=n))]
        ).astype(np.int32)

        n_lumped = len(rows_a)
        lumped_pos = inverse[:n_lumped]
        cats_a = np.asarray(cats, dtype=np.int8)
        vals_a = np.asarray(vals, dtype=float)
        self.g, self.c, self.gamma = (
            np.bincount(lumped_pos[cats_a == category], vals_a[cats_a == category], minlength=self.nnz)
            for category in (_CONDUCTANCE, _CAPACITANCE, _INVERSE_INDUCTANCE)
        )
        self.line_pos = inverse[n_lumped:n_lumped + len(line_rows_a)]
        self.line_coef = np.asarray(line_coef, dtype=float)
        self.line_id = np.asarray(line_id, dtype=np.int64)
        self.line_mutual = np.asarray(line_mutual, dtype=bool)
        self.line_z0 = np.asarray(z0s, dtype=float)
        self.line_delay = np.asarray(delays, dtype=float)

        self.i_src = np.zeros(n, dtype=complex)
        self.i_src[order] = i_src
        self.row_nodes = np.zeros(n, dtype=np.int64)
        self.row_nodes[order] = unknown_nodes

    @property
    def row_names(self) -> Tuple[str, ...]:
        names = self.netlist.node_names
        return tuple(names[i] for i in self.row_nodes)

    def matrix(self, omega: float, epsilon: float = LINE_EPSILON) -> csc_matrix:
        """Y(omega) in the template's row order."""
        data = self.g + 1j * omega * self.c - 1j * (self.gamma / omega)
        if len(self.line_pos):
            y11, y12 = line_admittance(self.line_z0, self.line_delay, omega, epsilon)
            weights = self.line_coef * np.where(self.line_mutual, y12[self.line_id], y11[self.line_id])
            data = (data
                    + np.bincount(self.line_pos, weights.real, minlength=self.nnz)
                    + 1j * np.bincount(self.line_pos, weights.imag, minlength=self.nnz))
        return csc_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def system(self, omega: float, epsilon: float = LINE_EPSILON) -> "AcSystem":
        return AcSystem(self.matrix(omega, epsilon), self.i_src, omega, self.row_names, self)

    def expand(self, v: np.ndarray) -> np.ndarray:
        """Full node-voltage vector (netlist node order, ground 0) from row voltages."""
        full = np.zeros(self.netlist.n_nodes, dtype=complex)
        full[self.row_nodes] = v
        index = self.netlist.node_index
        for pair in self.series:
            full[index[pair.internal]] = full[index[pair.reference]] + pair.sign * pair.source.phasor
        return full

    def solve(self, omega: float, epsilon: float = LINE_EPSILON) -> "Solution":
        return solve(self.system(omega, epsilon))

    def response(self, omegas: Sequence[float], probes: Sequence[str],
                 epsilon: float = LINE_EPSILON) -> np.ndarray:
        """Probe voltages, shape (len(probes), len(omegas))."""
        index = [self.netlist.node_index[p] for p in probes]
        out = np.empty((len(index), len(omegas)), dtype=complex)
        for k, omega in enumerate(omegas):
            out[:, k] = self.solve(float(omega), epsilon).v[index]
        return out


@dataclass(frozen=True)
class AcSystem:
    """Y v = i at one angular frequency, rows ordered by the template."""

    y: csc_matrix
    i_src: np.ndarray
    omega: float
    nodes: Tuple[str, ...]
    template: AcTemplate = field(repr=False, compare=False)

    def index(self, name: str) -> int:
        return self.nodes.index(name)


@dataclass(frozen=True)
class Solution:
    v: np.ndarray
    omega: float
    node_names: Tuple[str, ...]
    backward_error: float = 0.0

    @cached_property
    def node_index(self) -> Dict[str, int]:
        return {name: i for i, name in enumerate(self.node_names)}

    def voltage(self, name: str) -> complex:
        if name == GROUND:
            return 0j
        if name not in self.node_index:
            raise NetlistError(f"unknown node '{name}'")
        return complex(self.v[self.node_index[name]])


def stamp(netlist: Netlist, omega: float) -> AcSystem:
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    return AcTemplate(netlist).system(omega)


def _backward_error(y: csc_matrix, v: np.ndarray, rhs: np.ndarray) -> Tuple[float, float]:
    residual = float(np.max(np.abs(rhs - y @ v), initial=0.0))
    scale = sparse_norm(y, np.inf) * float(np.max(np.abs(v), initial=0.0)) + float(np.max(np.abs(rhs), initial=0.0))
    return residual, scale


def solve(sys: AcSystem) -> Solution:
    """
    Factor and solve one system.

    The matrix is already in the template's fill-reducing order, so SuperLU
    runs with natural column order and a relaxed diagonal pivot threshold.
    One refinement step is taken when the normwise backward error is above
    RESIDUAL_TOLERANCE.
    """
    template = sys.template
    if template.n == 0:
        return Solution(template.expand(np.zeros(0, dtype=complex)), sys.omega, template.netlist.node_names)

    try:
        lu = splu(sys.y, permc_spec="NATURAL", diag_pivot_thresh=PIVOT_THRESHOLD,
                  options=dict(SymmetricMode=True))
    except RuntimeError as exc:
        raise SolverError(f"matrix is numerically singular: {exc}", sys.omega) from exc

    v = lu.solve(sys.i_src)
    if not np.all(np.isfinite(v)):
        raise SolverError("solution is not finite", sys.omega)
    residual, scale = _backward_error(sys.y, v, sys.i_src)
    if residual > RESIDUAL_TOLERANCE * scale:
        v = v + lu.solve(sys.i_src - sys.y @ v)
        residual, scale = _backward_error(sys.y, v, sys.i_src)
        if residual > RESIDUAL_TOLERANCE * scale:
            raise SolverError(f"residual {residual:.3e} above tolerance after refinement", sys.omega)
    error = residual / scale if scale else 0.0
    return Solution(template.expand(v), sys.omega, template.netlist.node_names, error)


class PowerBalance(NamedTuple):
    delivered: float
    dissipated: float
    relative_error: float


def power_balance(netlist: Netlist, solution: Solution, epsilon: float = LINE_EPSILON) -> PowerBalance:
    """Time-average power from the sources vs power absorbed by resistors and lines."""
    v = solution.voltage
    pairs, _unpaired = series_sources(netlist)
    delivered = 0.0
    for pair in pairs.values():
        current = (v(pair.internal) - v(pair.far)) / pair.resistor.value
        delivered += 0.5 * ((v(pair.internal) - v(pair.reference)) * np.conj(current)).real
    dissipated = 0.0
    for element in netlist.elements:
        if element.kind is ElementKind.AC_CURRENT:
            n_plus, n_minus = element.nodes
            delivered += 0.5 * ((v(n_minus) - v(n_plus)) * np.conj(element.phasor)).real
        elif element.kind is ElementKind.RESISTOR:
            a, b = element.nodes
            dissipated += 0.5 * abs(v(a) - v(b)) ** 2 / element.value
        elif element.kind is ElementKind.LOSSLESS_LINE:
            p1, m1, p2, m2 = element.nodes
            v1, v2 = v(p1) - v(m1), v(p2) - v(m2)
            y11, y12 = line_admittance(element.z0, element.delay, solution.omega, epsilon)
            i1, i2 = y11 * v1 + y12 * v2, y12 * v1 + y11 * v2
            dissipated += 0.5 * float((v1 * np.conj(i1) + v2 * np.conj(i2)).real)
    reference = max(abs(delivered), abs(dissipated), np.finfo(float).tiny)
    return PowerBalance(delivered, dissipated, abs(delivered - dissipated) / reference)
