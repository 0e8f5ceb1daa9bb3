"""
AC frequency sweeps with adaptive refinement around resonances.
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import repeat
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import median_filter
from scipy.signal import find_peaks as scipy_find_peaks

from .exceptions import NetlistError
from .mna import AcTemplate
from .netlist import Netlist, validate
from .schemas import ProbeResponse, SpectrumDocument, SweepPlan

logger = logging.getLogger(__name__)

DEFAULT_PROMINENCE = 3.0
POWER_LEVEL = 1 / math.sqrt(2)
# Running-baseline window as a fraction of the coarse grid, and the narrow-feature
# prominence relative to the median |V|.
LOCAL_WINDOW = 0.1
LOCAL_CONTRAST = 1e-4


@dataclass(frozen=True)
class Spectrum:
    """
    Per-probe complex response on an ascending frequency grid.

    `coarse_mask` marks the samples of the original grid; baselines and
    medians are taken over those only so refinement density cannot bias them.
    """

    freqs: np.ndarray
    response: Dict[str, np.ndarray]
    netlist_digest: str = ""
    coarse_mask: Optional[np.ndarray] = None
    points_target: int = 0
    unresolved: Dict[str, Tuple[float, ...]] = field(default_factory=dict)

    def __post_init__(self):
        freqs = np.asarray(self.freqs, dtype=float)
        object.__setattr__(self, "freqs", freqs)
        if freqs.ndim != 1:
            raise ValueError("freqs must be one-dimensional")
        if np.any(np.diff(freqs) <= 0):
            raise ValueError("freqs must be strictly ascending")
        if not np.all(np.isfinite(freqs)):
            raise ValueError("freqs must be finite")
        response = {}
        for probe, values in self.response.items():
            values = np.asarray(values, dtype=complex)
            if values.shape != freqs.shape:
                raise ValueError(f"response of '{probe}' is not aligned with freqs")
            if not np.all(np.isfinite(values)):
                raise ValueError(f"response of '{probe}' has non-finite values")
            response[probe] = values
        object.__setattr__(self, "response", response)
        mask = self.coarse_mask
        mask = np.ones(len(freqs), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        if mask.shape != freqs.shape:
            raise ValueError("coarse_mask is not aligned with freqs")
        object.__setattr__(self, "coarse_mask", mask)

    @property
    def probes(self) -> List[str]:
        return list(self.response)

    def magnitude(self, probe: str) -> np.ndarray:
        return np.abs(self.response[probe])

    def scaled(self, k: float) -> "Spectrum":
        """Same spectrum with every response multiplied by `k`."""
        return Spectrum(
            self.freqs,
            {probe: values * k for probe, values in self.response.items()},
            self.netlist_digest,
            self.coarse_mask,
            self.points_target,
            dict(self.unresolved),
        )

    def to_document(self) -> SpectrumDocument:
        return SpectrumDocument(
            freqs=self.freqs.tolist(),
            probes={
                probe: ProbeResponse(re=values.real.tolist(), im=values.imag.tolist())
                for probe, values in self.response.items()
            },
            netlist_digest=self.netlist_digest,
            coarse_mask=self.coarse_mask.tolist(),
            unresolved={probe: list(freqs) for probe, freqs in self.unresolved.items()},
        )

    @classmethod
    def from_document(cls, doc: SpectrumDocument) -> "Spectrum":
        return cls(
            np.asarray(doc.freqs, dtype=float),
            {
                probe: np.asarray(values.re, dtype=float) + 1j * np.asarray(values.im, dtype=float)
                for probe, values in doc.probes.items()
            },
            doc.netlist_digest,
            None if doc.coarse_mask is None else np.asarray(doc.coarse_mask, dtype=bool),
            unresolved={probe: tuple(freqs) for probe, freqs in doc.unresolved.items()},
        )


def feature_signal(response: np.ndarray, mode: str = "auto",
                   coarse_mask: Optional[np.ndarray] = None) -> Tuple[np.ndarray, str]:
    """
    Real signal whose maxima mark resonances, and the mode actually used.

    `magnitude` is |V|. `deviation` is the distance from the baseline (the
    median of the coarse samples), which turns the notches a side-coupled
    resonator cuts into a feedline into peaks. When the baseline phase is not
    stable (a delay line rotates it) the distance is taken on magnitudes.
    `auto` picks `deviation` when the response dips further below its median
    than it rises above it.
    """
    response = np.asarray(response, dtype=complex)
    magnitude = np.abs(response)
    if mode == "magnitude" or len(response) == 0:
        return magnitude, "magnitude"
    if mode not in ("deviation", "auto"):
        raise ValueError(f"unknown signal mode '{mode}'")

    reference = response if coarse_mask is None or not np.any(coarse_mask) else response[coarse_mask]
    reference_mag = np.abs(reference)
    median_mag = float(np.median(reference_mag))
    if mode == "auto":
        dip = median_mag - float(reference_mag.min())
        rise = float(reference_mag.max()) - median_mag
        if dip <= rise:
            return magnitude, "magnitude"

    baseline = complex(np.median(reference.real), np.median(reference.imag))
    if abs(baseline) >= 0.5 * median_mag:
        return np.abs(response - baseline), "deviation"
    return np.abs(magnitude - median_mag), "deviation"


def coarse_grid(plan: SweepPlan) -> np.ndarray:
    if plan.spacing == "log":
        return np.geomspace(plan.f_min, plan.f_max, plan.n_coarse)
    return np.linspace(plan.f_min, plan.f_max, plan.n_coarse)


def _solve_chunk(template: AcTemplate, freqs: np.ndarray, probes: Sequence[str]) -> np.ndarray:
    return template.response(2 * np.pi * freqs, probes)


def solve_grid(template: AcTemplate, freqs: np.ndarray, probes: Sequence[str], workers: int = 1) -> np.ndarray:
    """Probe responses on `freqs`, shape (len(probes), len(freqs)), in frequency order."""
    if workers <= 1 or len(freqs) < 2 * workers:
        return _solve_chunk(template, freqs, probes)
    chunks = np.array_split(freqs, workers)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_solve_chunk, repeat(template), chunks, repeat(tuple(probes))))
    return np.concatenate(parts, axis=1)


def detect_maxima(signal: np.ndarray, coarse_mask: np.ndarray,
                  prominence: float = DEFAULT_PROMINENCE) -> np.ndarray:
    """Indices of local maxima higher than `prominence` times the coarse median."""
    if len(signal) < 3 or not np.any(signal > 0):
        return np.zeros(0, dtype=int)
    baseline = signal[coarse_mask] if np.any(coarse_mask) else signal
    threshold = prominence * float(np.median(baseline))
    indices, _props = scipy_find_peaks(signal)
    return indices[signal[indices] > threshold]


def local_deviation(freqs: np.ndarray, response: np.ndarray, mode: str,
                    coarse_mask: Optional[np.ndarray] = None, window: float = LOCAL_WINDOW) -> np.ndarray:
    """
    Distance from a running baseline: the median of the coarse samples over
    `window` times their count, interpolated onto every sample.

    Features much narrower than the window stand out of it whatever the slowly
    varying background does around them. Taken on magnitudes for `magnitude`
    signals and when the running complex baseline is rotated away.
    """
    freqs = np.asarray(freqs, dtype=float)
    response = np.asarray(response, dtype=complex)
    if len(response) < 3:
        return np.zeros(len(response))
    mask = coarse_mask if coarse_mask is not None and np.any(coarse_mask) else np.ones(len(response), dtype=bool)
    ref_freqs, ref = freqs[mask], response[mask]
    size = max(3, int(window * len(ref)) // 2 * 2 + 1)
    magnitude = np.abs(response)
    ref_mag = np.abs(ref)
    if mode != "magnitude":
        re = median_filter(ref.real, size=size, mode="nearest")
        im = median_filter(ref.imag, size=size, mode="nearest")
        if np.median(np.hypot(re, im)) >= 0.5 * np.median(ref_mag):
            baseline = np.interp(freqs, ref_freqs, re) + 1j * np.interp(freqs, ref_freqs, im)
            return np.abs(response - baseline)
    baseline = np.interp(freqs, ref_freqs, median_filter(ref_mag, size=size, mode="nearest"))
    return np.abs(magnitude - baseline)


def detect_narrow(freqs: np.ndarray, narrow: np.ndarray, response: np.ndarray, coarse_mask: np.ndarray,
                  exclude: Sequence[Tuple[float, float]] = (), contrast: float = LOCAL_CONTRAST,
                  window: float = LOCAL_WINDOW) -> np.ndarray:
    """
    Indices of narrow features in a local deviation signal.

    A feature qualifies when its prominence reaches `contrast` times the
    median |V| of the coarse samples and it is at most a quarter window wide.
    Anything within half a window of an interval in `exclude` is dropped: the
    running median is distorted there by the stronger peak.
    """
    if len(narrow) < 3:
        return np.zeros(0, dtype=int)
    reference = np.abs(response[coarse_mask] if np.any(coarse_mask) else response)
    scale = float(np.median(reference))
    if not scale > 0:
        return np.zeros(0, dtype=int)
    indices, props = scipy_find_peaks(narrow, prominence=contrast * scale, width=0)
    if len(indices) == 0:
        return indices
    coarse_freqs = freqs[coarse_mask] if np.any(coarse_mask) else freqs
    reach = window * float(coarse_freqs[-1] - coarse_freqs[0])
    positions = np.arange(len(freqs))
    widths = np.interp(props["right_ips"], positions, freqs) - np.interp(props["left_ips"], positions, freqs)
    keep = widths <= 0.25 * reach
    for lo, hi in exclude:
        keep &= (freqs[indices] < lo - 0.5 * reach) | (freqs[indices] > hi + 0.5 * reach)
    return indices[keep]


def level_interval(signal: np.ndarray, peak: int, level: float) -> Tuple[int, int]:
    """First samples at or below `level` on each side of `peak` (or the grid edge)."""
    left = peak
    while left > 0 and signal[left] > level:
        left -= 1
    right = peak
    last = len(signal) - 1
    while right < last and signal[right] > level:
        right += 1
    return left, right


def _refinement_points(freqs: np.ndarray, signal: np.ndarray, peaks: np.ndarray,
                       target: int) -> Tuple[np.ndarray, List[float]]:
    new_points: List[np.ndarray] = []
    short: List[float] = []
    for peak in peaks:
        left, right = level_interval(signal, peak, signal[peak] * POWER_LEVEL)
        inside = right - left - 1
        if inside >= target:
            continue
        short.append(float(freqs[peak]))
        segment = freqs[left:right + 1]
        new_points.append(0.5 * (segment[:-1] + segment[1:]))
    if not new_points:
        return np.zeros(0), short
    return np.unique(np.concatenate(new_points)), short


def run_sweep(netlist: Netlist, plan: SweepPlan, workers: int = 1) -> Spectrum:
    """
    Solve the coarse grid, then bisect around every detected resonance until
    its half-power interval holds `min_points_per_fwhm` samples or
    `max_depth` rounds have run. Narrow features too small for the
    whole-sweep median (qubit lines next to a feedline) are refined on their
    local deviation.
    """
    diagnostics = validate(netlist)
    if diagnostics:
        raise NetlistError("; ".join(d.message for d in diagnostics))
    if not netlist.probes:
        raise NetlistError("no probes")

    probes = list(netlist.probes)
    template = AcTemplate(netlist)
    freqs = coarse_grid(plan)
    values = solve_grid(template, freqs, probes, workers)
    coarse = np.ones(len(freqs), dtype=bool)

    unresolved: Dict[str, Tuple[float, ...]] = {}
    rounds = 0
    if plan.refine.enabled:
        target = plan.refine.min_points_per_fwhm
        for depth in range(plan.refine.max_depth + 1):
            additions = []
            short_by_probe = {}
            for k, probe in enumerate(probes):
                signal, used = feature_signal(values[k], plan.signal, coarse)
                peaks = detect_maxima(signal, coarse)
                points, short = _refinement_points(freqs, signal, peaks, target)
                spans = [level_interval(signal, p, signal[p] * POWER_LEVEL) for p in peaks]
                narrow = local_deviation(freqs, values[k], used, coarse)
                small = detect_narrow(freqs, narrow, values[k], coarse,
                                      [(freqs[lo], freqs[hi]) for lo, hi in spans])
                small_points, small_short = _refinement_points(freqs, narrow, small, target)
                short.extend(small_short)
                if short:
                    short_by_probe[probe] = tuple(sorted(short))
                for found in (points, small_points):
                    if len(found):
                        additions.append(found)
            if not additions or depth == plan.refine.max_depth:
                unresolved = short_by_probe
                break
            new_freqs = np.setdiff1d(np.unique(np.concatenate(additions)), freqs)
            new_values = solve_grid(template, new_freqs, probes, workers)
            freqs = np.concatenate([freqs, new_freqs])
            values = np.concatenate([values, new_values], axis=1)
            coarse = np.concatenate([coarse, np.zeros(len(new_freqs), dtype=bool)])
            order = np.argsort(freqs, kind="stable")
            freqs, values, coarse = freqs[order], values[:, order], coarse[order]
            rounds += 1

    logger.info(
        "Sweep of '%s': %d coarse points, %d refinement rounds, %d points",
        netlist.title, plan.n_coarse, rounds, len(freqs),
    )
    for probe, peaks in unresolved.items():
        logger.debug("Probe %s: %d peaks below the point target", probe, len(peaks))

    return Spectrum(
        freqs,
        {probe: values[k] for k, probe in enumerate(probes)},
        netlist.digest,
        coarse,
        plan.refine.min_points_per_fwhm if plan.refine.enabled else 0,
        unresolved,
    )


def band_select(spec: Spectrum, band: Tuple[float, float]) -> Spectrum:
    """Restriction of a spectrum to lo <= f <= hi."""
    lo, hi = band
    mask = (spec.freqs >= lo) & (spec.freqs <= hi)
    if not np.any(mask):
        raise ValueError(f"empty band [{lo:g}, {hi:g}] Hz")
    return Spectrum(
        spec.freqs[mask],
        {probe: values[mask] for probe, values in spec.response.items()},
        spec.netlist_digest,
        spec.coarse_mask[mask],
        spec.points_target,
        {
            probe: tuple(f for f in freqs if lo <= f <= hi)
            for probe, freqs in spec.unresolved.items()
            if any(lo <= f <= hi for f in freqs)
        },
    )
