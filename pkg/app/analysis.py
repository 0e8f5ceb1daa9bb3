"""
Spectrum analysis: peaks, widths, relaxation rates and circuit infidelity,
plus the density-matrix utilities for rates measured after an RB sequence.
"""
import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .exceptions import UnphysicalInputError
from .schemas import (
    AnalysisReport,
    AnalysisSettings,
    EnsembleSummary,
    FidelityInput,
    FidelityResult,
    Histogram,
    InfidelityReport,
    PeakReport,
)
from .sweep import (
    DEFAULT_PROMINENCE,
    LOCAL_CONTRAST,
    Spectrum,
    band_select,
    detect_maxima,
    detect_narrow,
    feature_signal,
    local_deviation,
)

if TYPE_CHECKING:
    from .montecarlo import Ensemble

logger = logging.getLogger(__name__)

WIDTH_LEVELS = {"power": 1 / math.sqrt(2), "voltage": 0.5}
TRACE_TOLERANCE = 1e-9


# ============================================================================
# Peaks
# ============================================================================

def t1m_from_width(delta_omega_p: float) -> float:
    """Measured lifetime T1 = 1/dw_p for a full width dw_p in rad/s."""
    if not delta_omega_p > 0:
        raise UnphysicalInputError(f"peak width must be positive, got {delta_omega_p}")
    return 1.0 / delta_omega_p


@dataclass(frozen=True)
class Peak:
    """One resonance on one probe; width in Hz, rates in 1/s."""

    probe: str
    f_peak: float
    height: float
    fwhm_hz: float
    band: str = "resonator"
    resolved: bool = True
    merged: bool = False
    signal: str = "magnitude"
    n_points: int = 0

    def __post_init__(self):
        if not self.fwhm_hz > 0:
            raise ValueError(f"fwhm must be positive, got {self.fwhm_hz}")

    @property
    def delta_omega_p(self) -> float:
        return 2 * math.pi * self.fwhm_hz

    @property
    def q_p(self) -> float:
        return self.f_peak / self.fwhm_hz

    @property
    def t1_m(self) -> float:
        return t1m_from_width(self.delta_omega_p)

    @property
    def gamma1(self) -> float:
        return 1.0 / self.t1_m

    def to_report(self) -> PeakReport:
        return PeakReport(
            probe=self.probe,
            f_peak_hz=self.f_peak,
            fwhm_hz=self.fwhm_hz,
            q=self.q_p,
            t1m_s=self.t1_m,
            gamma1_per_s=self.gamma1,
            height=self.height,
            band=self.band,
            resolved=self.resolved,
            merged=self.merged,
        )


def _crossing(freqs: np.ndarray, signal: np.ndarray, inner: int, outer: int, level: float) -> float:
    """Linear interpolation of the level crossing between two adjacent samples."""
    s_in, s_out = signal[inner], signal[outer]
    return freqs[outer] + (level - s_out) * (freqs[inner] - freqs[outer]) / (s_in - s_out)


def _measure(freqs: np.ndarray, signal: np.ndarray, index: int, fraction: float) -> dict:
    """Height, level crossings and width of the maximum at `index`."""
    last = len(freqs) - 1
    height = float(signal[index])
    level = height * fraction
    left = index
    while left > 0 and signal[left] > level:
        left -= 1
    right = index
    while right < last and signal[right] > level:
        right += 1
    left_found = signal[left] <= level
    right_found = signal[right] <= level
    f_left = _crossing(freqs, signal, left + 1, left, level) if left_found else None
    f_right = _crossing(freqs, signal, right - 1, right, level) if right_found else None
    f0 = float(freqs[index])
    if f_left is not None and f_right is not None:
        width = f_right - f_left
    elif f_left is not None:
        width = 2 * (f0 - f_left)
    elif f_right is not None:
        width = 2 * (f_right - f0)
    else:
        width = float(freqs[-1] - freqs[0])
    return dict(index=index, left=left, right=right, height=height, width=width,
                resolved=left_found and right_found, merged=False, n_points=right - left - 1)


def _probe_peaks(spec: Spectrum, probe: str, band_boundary: Optional[float], prominence: float,
                 width_mode: str, signal_mode: str, contrast: float = LOCAL_CONTRAST) -> List[Peak]:
    freqs = spec.freqs
    response = spec.response[probe]
    signal, used = feature_signal(response, signal_mode, spec.coarse_mask)
    fraction = WIDTH_LEVELS[width_mode]
    unresolved = spec.unresolved.get(probe, ())

    accepted: List[dict] = []
    for index in sorted(detect_maxima(signal, spec.coarse_mask, prominence), key=lambda k: -signal[k]):
        owner = next((p for p in accepted if p["left"] <= index <= p["right"]), None)
        if owner is not None:
            owner["merged"] = True
            continue
        accepted.append({**_measure(freqs, signal, index, fraction), "signal": used})

    # Narrow features too small for the whole-band median, measured on their local deviation.
    narrow = local_deviation(freqs, response, used, spec.coarse_mask)
    spans = [(freqs[p["left"]], freqs[p["right"]]) for p in accepted]
    small = detect_narrow(freqs, narrow, response, spec.coarse_mask, spans, contrast)
    local: List[dict] = []
    for index in sorted(small, key=lambda k: -narrow[k]):
        owner = next((p for p in local if p["left"] <= index <= p["right"]), None)
        if owner is not None:
            owner["merged"] = True
            continue
        local.append({**_measure(freqs, narrow, index, fraction), "signal": "local"})
    accepted.extend(local)

    peaks = []
    for p in sorted(accepted, key=lambda item: item["index"]):
        if p["width"] <= 0:
            continue
        resolved = p["resolved"]
        if spec.points_target and p["n_points"] < spec.points_target:
            resolved = False
        if any(freqs[p["left"]] <= f <= freqs[p["right"]] for f in unresolved):
            resolved = False
        f_peak = float(freqs[p["index"]])
        band = "resonator"
        if band_boundary is not None and f_peak < band_boundary:
            band = "qubit"
        peaks.append(Peak(probe, f_peak, p["height"], p["width"], band, resolved,
                          p["merged"], p["signal"], p["n_points"]))
    return peaks


def find_peaks(spec: Spectrum, probe: Optional[str] = None, band: Optional[Tuple[float, float]] = None,
               band_boundary: Optional[float] = None, prominence: float = DEFAULT_PROMINENCE,
               width_mode: str = "power", signal: str = "auto",
               contrast: float = LOCAL_CONTRAST) -> List[Peak]:
    """
    Resonances of one probe (all probes when None), ascending in frequency.

    Strong peaks must rise `prominence` times above the band median of the
    feature signal. Narrow features must stand `contrast` times the median
    |V| above a running baseline; they carry `signal="local"`. The width is
    read where the signal falls to h/sqrt(2) (`power`, the half-power points)
    or h/2 (`voltage`), by linear interpolation between samples. Peaks below
    `band_boundary` are classed as qubit peaks.
    """
    if width_mode not in WIDTH_LEVELS:
        raise ValueError(f"unknown width mode '{width_mode}'")
    if band is not None:
        spec = band_select(spec, band)
    probes = [probe] if probe is not None else spec.probes
    peaks: List[Peak] = []
    for name in probes:
        if name not in spec.response:
            raise ValueError(f"spectrum has no probe '{name}'")
        peaks.extend(_probe_peaks(spec, name, band_boundary, prominence, width_mode, signal, contrast))
    return peaks


def peaks_with_settings(spec: Spectrum, settings: AnalysisSettings, band_boundary: Optional[float] = None,
                        probe: Optional[str] = None) -> List[Peak]:
    boundary = settings.band_boundary_hz if settings.band_boundary_hz is not None else band_boundary
    return find_peaks(spec, probe, settings.band_hz, boundary, settings.prominence,
                      settings.width_mode, settings.signal, settings.contrast)


class Assignment(NamedTuple):
    mapping: Dict[int, List[Peak]]
    ambiguous: bool


def assign_peaks(peaks: Sequence[Peak], nominal: Sequence[float]) -> Assignment:
    """
    Map resonator peaks onto the nearest nominal resonator frequency.

    Ambiguous when a nominal frequency receives two peaks or none.
    """
    mapping: Dict[int, List[Peak]] = {k: [] for k in range(len(nominal))}
    targets = np.asarray(nominal, dtype=float)
    for peak in peaks:
        if peak.band != "resonator":
            continue
        mapping[int(np.argmin(np.abs(targets - peak.f_peak)))].append(peak)
    ambiguous = any(len(assigned) != 1 for assigned in mapping.values())
    return Assignment(mapping, ambiguous)


def measured_detuning(peaks: Sequence[Peak]) -> List[Tuple[Peak, Optional[float]]]:
    """Distance from every resonator peak to the nearest qubit peak (None without qubit peaks)."""
    qubit_freqs = [p.f_peak for p in peaks if p.band == "qubit"]
    result = []
    for peak in peaks:
        if peak.band != "resonator":
            continue
        delta = min((abs(peak.f_peak - f) for f in qubit_freqs), default=None)
        result.append((peak, delta))
    return result


# ============================================================================
# Fidelity
# ============================================================================

def prefactor(n_qubits: int) -> float:
    """N 2^N / (2 (2^N + 1)) without forming 2^N."""
    if n_qubits < 1:
        raise ValueError("n_qubits must be at least 1")
    return n_qubits / (2.0 * (1.0 + math.ldexp(1.0, -n_qubits)))


def fidelity(inp: FidelityInput) -> FidelityResult:
    """
    Decoherence-limited fidelity F = 1 - prefactor(N) * tau_op * rates.

    Without gamma2 the rate is gamma1 alone (tau_op already absorbs the
    Gamma2 ~ 2 Gamma1 assumption); with gamma2 the sum is used.
    """
    pf = prefactor(inp.n_qubits)
    rates = inp.gamma1 + (inp.gamma2 or 0.0)
    infidelity = pf * inp.tau_op * rates
    f = 1.0 - infidelity
    saturated = not 0.0 <= f <= 1.0
    if saturated:
        f = min(max(f, 0.0), 1.0)
    return FidelityResult(f=f, infidelity=infidelity, prefactor=pf, saturated=saturated)


class RunInfidelity(NamedTuple):
    sample_id: int
    value: Optional[float]
    per_peak: Tuple[float, ...] = ()
    gamma1: Optional[float] = None
    saturated: bool = False
    reason: Optional[str] = None


def run_infidelity(sample_id: int, peaks: Sequence[Peak], n_qubits: int, tau_op: float,
                   aggregation: str = "mean") -> RunInfidelity:
    """Infidelity of one run from its resolved resonator peaks."""
    rates = [p.gamma1 for p in peaks if p.band == "resonator" and p.resolved]
    if not rates:
        return RunInfidelity(sample_id, None, reason="no resolved resonator peaks")

    def evaluate(gamma1: float) -> FidelityResult:
        return fidelity(FidelityInput(n_qubits=n_qubits, tau_op=tau_op, gamma1=gamma1))

    if aggregation == "per_peak":
        results = [evaluate(rate) for rate in rates]
        values = tuple(r.infidelity for r in results)
        return RunInfidelity(sample_id, max(values), values, max(rates),
                             any(r.saturated for r in results))
    if aggregation == "max":
        gamma1 = max(rates)
    elif aggregation == "mean":
        gamma1 = float(np.mean(rates))
    else:
        raise ValueError(f"unknown aggregation '{aggregation}'")
    result = evaluate(gamma1)
    return RunInfidelity(sample_id, result.infidelity, (), gamma1, result.saturated)


@dataclass(frozen=True)
class EnsembleInfidelity:
    runs: Tuple[RunInfidelity, ...]
    aggregation: str
    n_qubits: int
    tau_op: float
    bin_edges: np.ndarray
    counts: np.ndarray

    @property
    def values(self) -> List[Optional[float]]:
        """One value per run, or one per peak for `per_peak` (failed runs give None)."""
        if self.aggregation == "per_peak":
            out: List[Optional[float]] = []
            for run in self.runs:
                out.extend(run.per_peak if run.value is not None else [None])
            return out
        return [run.value for run in self.runs]

    @property
    def spread(self) -> Optional[float]:
        finite = [v for v in self.values if v is not None]
        return max(finite) - min(finite) if finite else None


def histogram(values: Sequence[Optional[float]], bins: int = 10) -> Tuple[np.ndarray, np.ndarray]:
    finite = np.asarray([v for v in values if v is not None], dtype=float)
    if len(finite) == 0:
        return np.zeros(0), np.zeros(0, dtype=int)
    counts, edges = np.histogram(finite, bins=bins)
    return edges, counts


def ensemble_infidelity(ens: "Ensemble", n_qubits: int, tau_op: float, aggregation: str = "mean",
                        settings: Optional[AnalysisSettings] = None) -> EnsembleInfidelity:
    """
    Infidelity of every run, ordered by sample id, with a histogram.

    Peaks are read on the first probe of each run. Runs that failed or have no
    resolved resonator peak get a None value and a reason.
    """
    settings = settings or AnalysisSettings()
    runs = [outcome for outcome, _peaks in _analyse_runs(ens, n_qubits, tau_op, aggregation, settings)]
    return _collect(runs, aggregation, n_qubits, tau_op, settings.histogram_bins)


def _analyse_runs(ens: "Ensemble", n_qubits: int, tau_op: float, aggregation: str,
                  settings: AnalysisSettings) -> List[Tuple[RunInfidelity, List[Peak]]]:
    out = []
    for run in ens.runs:
        if run.spectrum is None:
            out.append((RunInfidelity(run.sample_id, None, reason=run.error or "no spectrum"), []))
            continue
        peaks = peaks_with_settings(run.spectrum, settings, ens.band_boundary, run.spectrum.probes[0])
        out.append((run_infidelity(run.sample_id, peaks, n_qubits, tau_op, aggregation), peaks))
    return out


def _collect(runs: Sequence[RunInfidelity], aggregation: str, n_qubits: int, tau_op: float,
             bins: int) -> EnsembleInfidelity:
    result = EnsembleInfidelity(tuple(runs), aggregation, n_qubits, tau_op, np.zeros(0), np.zeros(0, dtype=int))
    edges, counts = histogram(result.values, bins)
    failed = sum(1 for run in runs if run.value is None)
    if failed:
        logger.info("%d of %d runs have no infidelity", failed, len(runs))
    return EnsembleInfidelity(tuple(runs), aggregation, n_qubits, tau_op, edges, counts)


def summarize(result: EnsembleInfidelity, n_failed: int) -> EnsembleSummary:
    finite = [v for v in result.values if v is not None]
    return EnsembleSummary(
        n_runs=len(result.runs),
        n_failed=n_failed,
        infidelities=result.values,
        minimum=min(finite) if finite else None,
        maximum=max(finite) if finite else None,
        spread=result.spread,
        histogram=Histogram(bin_edges=result.bin_edges.tolist(), counts=result.counts.tolist()),
    )


class EnsembleAnalysis(NamedTuple):
    result: EnsembleInfidelity
    reports: List[AnalysisReport]
    summary: EnsembleSummary


def analyse_ensemble(ens: "Ensemble", settings: AnalysisSettings, n_qubits: int) -> EnsembleAnalysis:
    """Per-run reports and the ensemble summary, finding each run's peaks once."""
    analysed = _analyse_runs(ens, n_qubits, settings.tau_op_s, settings.aggregation, settings)
    reports = []
    for run, (outcome, peaks) in zip(ens.runs, analysed):
        flags = [f"run failed: {run.error}"] if run.error else []
        reports.append(_report(run.sample_id, peaks, outcome, n_qubits, settings.tau_op_s,
                               settings.aggregation, flags))
    result = _collect([outcome for outcome, _peaks in analysed], settings.aggregation, n_qubits,
                      settings.tau_op_s, settings.histogram_bins)
    n_failed = sum(1 for run in ens.runs if run.error)
    return EnsembleAnalysis(result, reports, summarize(result, n_failed))


def build_report(run_id: int, peaks: Sequence[Peak], n_qubits: int, tau_op: float,
                 aggregation: str = "mean", flags: Sequence[str] = ()) -> AnalysisReport:
    """AnalysisReport document for one spectrum."""
    outcome = run_infidelity(run_id, peaks, n_qubits, tau_op, aggregation)
    return _report(run_id, peaks, outcome, n_qubits, tau_op, aggregation, flags)


def _report(run_id: int, peaks: Sequence[Peak], outcome: RunInfidelity, n_qubits: int, tau_op: float,
            aggregation: str, flags: Sequence[str]) -> AnalysisReport:
    report_flags = list(flags)
    unresolved = sum(1 for p in peaks if not p.resolved)
    if unresolved:
        report_flags.append(f"{unresolved} unresolved peaks")
    if any(p.merged for p in peaks):
        report_flags.append("merged peaks")
    if outcome.saturated:
        report_flags.append("infidelity saturated")
    return AnalysisReport(
        run_id=run_id,
        peaks=[p.to_report() for p in peaks],
        infidelity=InfidelityReport(
            n_qubits=n_qubits,
            tau_op_s=tau_op,
            aggregation=aggregation,
            value=outcome.value,
            per_peak=list(outcome.per_peak) if aggregation == "per_peak" and outcome.value is not None else None,
            gamma1_per_s=outcome.gamma1,
            saturated=outcome.saturated,
            reason=outcome.reason,
        ),
        flags=report_flags,
    )


# ============================================================================
# Density matrices after an RB sequence
# ============================================================================

@dataclass(frozen=True)
class RbDensityMatrix:
    """[[a, b], [b*, c]] at time t_f for initial state alpha0|0> + beta0|1>."""

    a: float
    c: float
    b: complex
    t_f: float
    alpha0: complex = 1 / math.sqrt(2)
    beta0: complex = 1 / math.sqrt(2)

    def __post_init__(self):
        if self.t_f < 0:
            raise UnphysicalInputError(f"t_f must not be negative, got {self.t_f}")
        if abs(self.a + self.c - 1.0) > TRACE_TOLERANCE:
            raise UnphysicalInputError(f"trace a + c = {self.a + self.c!r} differs from 1")

    @property
    def positive(self) -> bool:
        return abs(self.b) ** 2 <= self.a * self.c


class RbExtraction(NamedTuple):
    gamma1: float
    gamma2: float
    delta_omega: float
    flags: Tuple[str, ...] = ()


def rb_extract(rho: RbDensityMatrix) -> RbExtraction:
    """
    Invert the Bloch-Redfield evolution for (Gamma1, Gamma2, dw).

    Gamma1 = -ln(c / |beta0|^2) / t_f, Gamma2 = -ln(|b| / |alpha0 beta0|) / t_f
    and dw from the phase of b relative to alpha0 beta0*. A state with more
    excited population than it started with is flagged, not rejected; |b| = 0
    gives an infinite Gamma2.
    """
    if not rho.t_f > 0:
        raise UnphysicalInputError(f"t_f must be positive, got {rho.t_f}")
    if not rho.c > 0:
        raise UnphysicalInputError(f"c must be positive, got {rho.c}")
    flags = []
    excited = abs(rho.beta0) ** 2
    if rho.c > excited:
        flags.append("c exceeds |beta0|^2: negative gamma1")
    if not rho.positive:
        flags.append("density matrix is not positive semidefinite")
    gamma1 = -math.log(rho.c / excited) / rho.t_f

    coherence = rho.alpha0 * np.conj(rho.beta0)
    if abs(rho.b) == 0:
        flags.append("b is zero: gamma2 unbounded")
        return RbExtraction(gamma1, math.inf, 0.0, tuple(flags))
    gamma2 = -math.log(abs(rho.b) / abs(coherence)) / rho.t_f
    delta_omega = float(np.angle(rho.b / coherence)) / rho.t_f
    return RbExtraction(gamma1, gamma2, delta_omega, tuple(flags))


def synthesize_rb_state(alpha0: complex, beta0: complex, gamma1: float, gamma2: float,
                        delta_omega: float, t: float) -> RbDensityMatrix:
    if abs(abs(alpha0) ** 2 + abs(beta0) ** 2 - 1.0) > TRACE_TOLERANCE:
        raise UnphysicalInputError("initial state is not normalised")
    decay = math.exp(-gamma1 * t)
    a = 1.0 + (abs(alpha0) ** 2 - 1.0) * decay
    c = abs(beta0) ** 2 * decay
    b = complex(alpha0 * np.conj(beta0) * np.exp(1j * delta_omega * t) * math.exp(-gamma2 * t))
    return RbDensityMatrix(a=a, c=c, b=b, t_f=t, alpha0=complex(alpha0), beta0=complex(beta0))


def t1_from_rb(rho: RbDensityMatrix) -> float:
    """Qubit T1 = 1/Gamma1 from a measured state."""
    gamma1 = rb_extract(rho).gamma1
    if not gamma1 > 0:
        raise UnphysicalInputError("extracted gamma1 is not positive")
    return 1.0 / gamma1
