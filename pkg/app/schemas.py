"""
Pydantic models (schemas) for the qubit readout simulator.
These define every config section and every JSON document the CLI and the
API accept or return.
"""
import math
from datetime import datetime
from typing import Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, Field, field_validator, model_validator


class ConfigModel(BaseModel):
    """Base for config sections: unknown keys are rejected, values are frozen."""

    class Config:
        extra = "forbid"
        frozen = True


# ============================================================================
# Circuit Parameters
# ============================================================================

UNIT_PARAMETERS = ("f_q", "f_r", "t1_q", "c_q", "c_g", "c_c", "c_r")
VARIATION_TARGETS = UNIT_PARAMETERS + ("c_qq",)


class QubitUnitParams(ConfigModel):
    """Physical parameters of one qubit + tank readout unit."""
    f_q: float = Field(6.0e9, gt=0, description="Qubit frequency (Hz)")
    f_r: float = Field(8.0e9, gt=0, description="Tank (readout resonator) frequency (Hz)")
    t1_q: float = Field(1.0e-6, gt=0, description="Qubit relaxation time T1 (s)")
    c_q: float = Field(30e-15, gt=0, description="Qubit capacitance (F)")
    c_r: float = Field(20e-15, gt=0, description="Tank capacitance (F)")
    c_g: float = Field(0.1e-15, ge=0, description="Qubit-tank coupling capacitance (F), 0 decouples the qubit")
    c_c: float = Field(5e-15, gt=0, description="Tank-feedline coupling capacitance (F)")
    q_r: float = Field(8000.0, gt=0, description="Tank loaded quality factor")

    @model_validator(mode="after")
    def check_regime(self):
        if self.f_r <= self.f_q:
            raise ValueError(f"f_r ({self.f_r:g} Hz) must exceed f_q ({self.f_q:g} Hz)")
        return self


class DriveSpec(ConfigModel):
    """Readout drive: reference impedance and the photon-estimate inputs."""
    f_cv: float = Field(3.0e9, gt=0, description="Transmission-line resonant frequency (Hz)")
    kappa: float = Field(1.0e6, gt=0, description="Photon decay rate (Hz)")
    r0: float = Field(50.0, gt=0, description="Reference impedance (ohm)")
    f_readout: float = Field(8.0e9, gt=0, description="Readout resonator frequency used for the photon number (Hz)")
    amplitude_mode: Literal["unit_volt", "norton_current"] = "unit_volt"
    frequency_convention: Literal["plain_hz", "angular"] = "plain_hz"


class IoLines(ConfigModel):
    """Lossless lines inserted at the input and output of the feedline."""
    z0: float = Field(50.0, gt=0, description="Characteristic impedance (ohm)")
    delay: float = Field(10e-9, gt=0, description="One-way delay (s)")


class ArrayConfig(ConfigModel):
    """Arrangement of readout units and the staggering of their frequencies."""
    arrangement: Literal["linear", "square_unit", "square_tiled"] = "linear"
    n_qubits: int = Field(4, ge=1)
    f_q_base: Optional[float] = Field(None, gt=0, description="First qubit frequency (Hz), defaults to the unit's f_q")
    f_q_step: float = Field(0.2e9, description="Qubit frequency step (Hz)")
    f_r_base: Optional[float] = Field(None, gt=0, description="First tank frequency (Hz), defaults to the unit's f_r")
    f_r_step: float = Field(0.2e9, description="Tank frequency step (Hz)")
    stagger_period: int = Field(4, ge=1, description="Units after which the frequency pattern repeats")
    c_qq: float = Field(0.1e-15, ge=0, description="Nearest-neighbour qubit coupling (F), 0 disables")
    io_lines: Optional[IoLines] = None
    termination: float = Field(50.0, gt=0, description="Feedline termination (ohm)")

    @model_validator(mode="after")
    def check_arrangement(self):
        if self.arrangement == "square_unit" and self.n_qubits != 4:
            raise ValueError("square_unit requires n_qubits = 4")
        if self.arrangement == "square_tiled" and self.n_qubits % 4:
            raise ValueError("square_tiled requires n_qubits divisible by 4")
        if self.io_lines is not None and self.arrangement != "linear":
            raise ValueError("io_lines are only wired into linear arrangements")
        return self


# ============================================================================
# Sweep, Variation and Analysis Settings
# ============================================================================

class RefinePlan(ConfigModel):
    enabled: bool = True
    min_points_per_fwhm: int = Field(20, ge=1)
    max_depth: int = Field(8, ge=0)


class SweepPlan(ConfigModel):
    """Frequency grid of an AC sweep."""
    f_min: float = Field(5.5e9, gt=0, description="Lowest frequency (Hz)")
    f_max: float = Field(9.5e9, gt=0, description="Highest frequency (Hz)")
    n_coarse: int = Field(4001, ge=2, description="Coarse grid points")
    spacing: Literal["linear", "log"] = "linear"
    refine: RefinePlan = Field(default_factory=RefinePlan)
    signal: Literal["auto", "magnitude", "deviation"] = Field(
        "auto", description="Feature signal used to locate resonances for refinement"
    )

    @model_validator(mode="after")
    def check_range(self):
        if self.f_min >= self.f_max:
            raise ValueError("f_min must be below f_max")
        return self


class VariationConfig(ConfigModel):
    """Gaussian device-parameter variation for Monte Carlo ensembles."""
    delta: float = Field(0.01, ge=0, description="Relative standard deviation")
    targets: Tuple[str, ...] = Field(UNIT_PARAMETERS, description="Parameters that are perturbed")
    n_runs: int = Field(10, ge=1)
    seed: int = Field(0, ge=0, le=2**64 - 1)
    truncation: float = Field(4.0, gt=0, description="Clamp |z| to this many standard deviations")

    @field_validator("targets")
    @classmethod
    def check_targets(cls, value):
        unknown = sorted(set(value) - set(VARIATION_TARGETS))
        if unknown:
            raise ValueError(f"unknown variation targets: {', '.join(unknown)}")
        return tuple(dict.fromkeys(value))


class AnalysisSettings(ConfigModel):
    """Peak extraction and fidelity settings."""
    tau_op_s: float = Field(1e-11, gt=0, description="Operating time (s)")
    n_qubits_for_fidelity: Optional[int] = Field(None, ge=1, description="Defaults to the array size")
    aggregation: Literal["mean", "max", "per_peak"] = "mean"
    band_hz: Optional[Tuple[float, float]] = Field(None, description="Restrict peak search to [lo, hi] (Hz)")
    band_boundary_hz: Optional[float] = Field(
        None, gt=0, description="Qubit/resonator band boundary (Hz), computed from the circuit when unset"
    )
    prominence: float = Field(3.0, gt=0, description="Peak height over the band median required to qualify")
    contrast: float = Field(
        1e-4, gt=0, description="Narrow-feature prominence over a running baseline, relative to the median |V|"
    )
    width_mode: Literal["power", "voltage"] = "power"
    signal: Literal["auto", "magnitude", "deviation"] = "auto"
    histogram_bins: int = Field(10, ge=1)

    @field_validator("band_hz")
    @classmethod
    def check_band(cls, value):
        if value is not None and not 0 < value[0] < value[1]:
            raise ValueError("band_hz must satisfy 0 < lo < hi")
        return value


class ExperimentConfig(ConfigModel):
    """One experiment: circuit, sweep, variation and analysis sections."""
    name: str = Field("experiment", min_length=1, max_length=200)
    qubit: QubitUnitParams = Field(default_factory=QubitUnitParams)
    drive: DriveSpec = Field(default_factory=DriveSpec)
    array: ArrayConfig = Field(default_factory=ArrayConfig)
    sweep: SweepPlan = Field(default_factory=SweepPlan)
    variation: VariationConfig = Field(default_factory=VariationConfig)
    analysis: AnalysisSettings = Field(default_factory=AnalysisSettings)


# ============================================================================
# Physics Reports
# ============================================================================

class DerivedElementsOut(BaseModel):
    unit: int
    r_q: float
    l_q: float
    r_r: float
    l_r: float


class CouplingReport(BaseModel):
    g_over_2pi_hz: float
    delta_hz: float
    ratio: float
    ok: bool


class DriveReport(BaseModel):
    i_amperes: float
    p_watts: float
    n_photons: float


class DiagnosticOut(BaseModel):
    code: str
    message: str
    subject: str = ""


# ============================================================================
# Netlist & Sweep Documents
# ============================================================================

class NetlistText(ConfigModel):
    text: str = Field(..., min_length=1, description="Native netlist text")


class ValidateResponse(BaseModel):
    valid: bool
    diagnostics: List[DiagnosticOut]


class ExportRequest(ConfigModel):
    text: str = Field(..., min_length=1)
    dialect: Literal["native", "ltspice"] = "ltspice"
    sweep: Optional[SweepPlan] = None


class ExportResponse(BaseModel):
    dialect: str
    text: str
    digest: str


class NetlistSummary(BaseModel):
    title: str
    digest: str
    n_nodes: int
    n_elements: int
    probes: List[str]
    diagnostics: List[DiagnosticOut]


class BuildResponse(BaseModel):
    title: str
    netlist: str
    digest: str
    n_nodes: int
    n_elements: int
    derived: List[DerivedElementsOut]
    coupling: CouplingReport
    drive: DriveReport
    band_boundary_hz: float
    diagnostics: List[DiagnosticOut]


class ProbeResponse(BaseModel):
    re: List[float]
    im: List[float]


class SpectrumDocument(BaseModel):
    """A spectrum in JSON form: per-probe real/imaginary parts on a grid."""
    freqs: List[float]
    probes: Dict[str, ProbeResponse]
    netlist_digest: str = ""
    coarse_mask: Optional[List[bool]] = None
    unresolved: Dict[str, List[float]] = Field(default_factory=dict)

    @model_validator(mode="after")
    def check_lengths(self):
        n = len(self.freqs)
        for name, probe in self.probes.items():
            if len(probe.re) != n or len(probe.im) != n:
                raise ValueError(f"probe '{name}' is not aligned with freqs")
        if self.coarse_mask is not None and len(self.coarse_mask) != n:
            raise ValueError("coarse_mask is not aligned with freqs")
        return self


class SweepRequest(ConfigModel):
    netlist: str = Field(..., min_length=1)
    plan: SweepPlan = Field(default_factory=SweepPlan)


# ============================================================================
# Analysis Documents
# ============================================================================

class PeakReport(BaseModel):
    probe: str
    f_peak_hz: float
    fwhm_hz: float
    q: float
    t1m_s: float
    gamma1_per_s: float
    height: float
    band: Literal["qubit", "resonator"]
    resolved: bool
    merged: bool = False


class InfidelityReport(BaseModel):
    n_qubits: int
    tau_op_s: float
    aggregation: str
    value: Optional[float] = None
    per_peak: Optional[List[float]] = None
    gamma1_per_s: Optional[float] = None
    saturated: bool = False
    reason: Optional[str] = None


class AnalysisReport(BaseModel):
    run_id: int
    peaks: List[PeakReport]
    infidelity: InfidelityReport
    flags: List[str] = Field(default_factory=list)


class PeaksRequest(ConfigModel):
    spectrum: SpectrumDocument
    probe: Optional[str] = None
    settings: AnalysisSettings = Field(default_factory=AnalysisSettings)


class FidelityInput(ConfigModel):
    n_qubits: int = Field(..., ge=1)
    tau_op: float = Field(..., gt=0, description="Operating time (s)")
    gamma1: float = Field(..., gt=0, description="Longitudinal relaxation rate (1/s)")
    gamma2: Optional[float] = Field(None, gt=0, description="Transverse relaxation rate (1/s)")


class FidelityResult(BaseModel):
    f: float
    infidelity: float
    prefactor: float
    saturated: bool


ComplexValue = Union[float, Tuple[float, float]]


def as_complex(value: ComplexValue) -> complex:
    """Read a JSON complex: a plain number or a [re, im] pair."""
    if isinstance(value, (tuple, list)):
        return complex(value[0], value[1])
    return complex(value)


class RbMatrixFile(ConfigModel):
    """Density-matrix entries measured after an RB-style sequence."""
    a: float
    c: float
    re_b: float
    im_b: float
    alpha0: ComplexValue = 1 / math.sqrt(2)
    beta0: ComplexValue = 1 / math.sqrt(2)
    t_f: Optional[float] = Field(None, gt=0, description="Final time (s), may be given on the command line instead")


class RbExtractResult(BaseModel):
    gamma1: float
    gamma2: Optional[float] = Field(None, description="None when |b| = 0 (unbounded rate)")
    delta_omega: float
    t1_s: Optional[float] = None
    flags: List[str] = Field(default_factory=list)


class Histogram(BaseModel):
    bin_edges: List[float]
    counts: List[int]


class EnsembleSummary(BaseModel):
    n_runs: int
    n_failed: int
    infidelities: List[Optional[float]]
    minimum: Optional[float] = None
    maximum: Optional[float] = None
    spread: Optional[float] = None
    histogram: Optional[Histogram] = None


class ManifestRun(BaseModel):
    sample_id: int
    parameters: Dict
    resampled: int = 0
    spectrum_path: Optional[str] = None
    report_path: Optional[str] = None
    error: Optional[str] = None


class EnsembleManifest(BaseModel):
    seed: int
    delta: float
    n_runs: int
    topology_digest: str
    config: Dict
    input_digests: Dict[str, str] = Field(default_factory=dict)
    runs: List[ManifestRun]


# ============================================================================
# Experiment Registry Schemas
# ============================================================================

class ExperimentRun(BaseModel):
    id: int
    sample_id: int
    infidelity: Optional[float] = None
    gamma1: Optional[float] = None
    n_peaks: int = 0
    error: Optional[str] = None
    report: Optional[Dict] = None

    class Config:
        from_attributes = True


class Experiment(BaseModel):
    id: int
    name: str
    seed: int
    delta: float
    n_runs: int
    arrangement: str
    n_qubits: int
    base_digest: str
    config: Dict
    summary: Optional[Dict] = None
    created_at: Optional[datetime] = None

    class Config:
        from_attributes = True
