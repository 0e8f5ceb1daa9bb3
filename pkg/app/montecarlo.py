"""
Monte Carlo device-parameter variation.

Every perturbed parameter draws from its own normal stream, seeded from
(seed, sample id, parameter path), so an ensemble is a pure function of its
inputs no matter how runs are scheduled across workers.
"""
import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .exceptions import QsimError, UnphysicalInputError
from .schemas import (
    UNIT_PARAMETERS,
    ArrayConfig,
    DriveSpec,
    EnsembleManifest,
    ManifestRun,
    QubitUnitParams,
    SweepPlan,
    VariationConfig,
)
from .sweep import Spectrum, run_sweep
from .topology import (
    ParameterTable,
    build_from_table,
    nominal_resonator_frequencies,
    nominal_table,
    table_band_boundary,
)

logger = logging.getLogger(__name__)

MAX_RESAMPLES = 1000


def _path_key(path: str) -> int:
    return int.from_bytes(hashlib.sha256(path.encode("utf-8")).digest()[:8], "big")


def normal_stream(seed: int, sample_id: int, path: str) -> np.random.Generator:
    """Independent generator for one parameter of one sample."""
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=(sample_id, _path_key(path)))
    return np.random.default_rng(sequence)


def sample_normal(seed: int, sample_id: int, path: str, truncation: float = 4.0) -> float:
    """First standard-normal draw of a stream, clamped to |z| <= truncation."""
    rng = normal_stream(seed, sample_id, path)
    return float(np.clip(rng.standard_normal(), -truncation, truncation))


def perturb_value(x0: float, delta: float, rng: np.random.Generator, truncation: float) -> Tuple[float, int]:
    """X0 (1 + z delta), redrawing while the result is not positive; returns (value, redraws)."""
    if x0 == 0 or delta == 0:
        return x0, 0
    redraws = 0
    while True:
        z = float(np.clip(rng.standard_normal(), -truncation, truncation))
        value = x0 * (1.0 + z * delta)
        if value > 0:
            return value, redraws
        redraws += 1
        if redraws > MAX_RESAMPLES:
            raise UnphysicalInputError(f"could not draw a positive value from X0={x0!r}, delta={delta!r}")


def unit_path(u: int, name: str) -> str:
    return f"units[{u}].{name}"


def coupling_path(a: int, b: int) -> str:
    return f"couplings[{a},{b}].c_qq"


class Perturbation(NamedTuple):
    table: ParameterTable
    resampled: int


def perturb(table: ParameterTable, cfg: VariationConfig, sample_id: int) -> Perturbation:
    """
    Perturb the targeted parameters of every unit and coupling.

    Element values (R, L) are not perturbed themselves; builders derive them
    from the perturbed physical parameters.
    """
    if cfg.delta == 0:
        return Perturbation(table, 0)
    targets = set(cfg.targets)
    resampled = 0

    units: List[QubitUnitParams] = []
    for u, unit in enumerate(table.units, start=1):
        update: Dict[str, float] = {}
        for name in UNIT_PARAMETERS:
            if name not in targets:
                continue
            rng = normal_stream(cfg.seed, sample_id, unit_path(u, name))
            update[name], redraws = perturb_value(getattr(unit, name), cfg.delta, rng, cfg.truncation)
            resampled += redraws
        try:
            units.append(QubitUnitParams(**{**unit.model_dump(), **update}))
        except ValueError as exc:
            raise UnphysicalInputError(f"unit {u} of sample {sample_id}: {exc}") from exc

    couplings = []
    for a, b, value in table.couplings:
        if "c_qq" in targets:
            rng = normal_stream(cfg.seed, sample_id, coupling_path(a, b))
            value, redraws = perturb_value(value, cfg.delta, rng, cfg.truncation)
            resampled += redraws
        couplings.append((a, b, value))

    return Perturbation(ParameterTable(tuple(units), tuple(couplings)), resampled)


@dataclass(frozen=True)
class EnsembleRun:
    sample_id: int
    table: ParameterTable
    resampled: int = 0
    spectrum: Optional[Spectrum] = None
    error: Optional[str] = None
    netlist_digest: str = ""


@dataclass(frozen=True)
class Ensemble:
    runs: Tuple[EnsembleRun, ...]
    config: VariationConfig
    base_digest: str
    band_boundary: float
    nominal_resonators: Tuple[float, ...]

    def manifest(self, config: Dict, spectrum_paths: Optional[Sequence[Optional[str]]] = None,
                 report_paths: Optional[Sequence[Optional[str]]] = None,
                 input_digests: Optional[Dict[str, str]] = None) -> EnsembleManifest:
        spectrum_paths = spectrum_paths or [None] * len(self.runs)
        report_paths = report_paths or [None] * len(self.runs)
        return EnsembleManifest(
            seed=self.config.seed,
            delta=self.config.delta,
            n_runs=self.config.n_runs,
            topology_digest=self.base_digest,
            config=config,
            input_digests=input_digests or {},
            runs=[
                ManifestRun(
                    sample_id=run.sample_id,
                    parameters=run.table.to_dict(),
                    resampled=run.resampled,
                    spectrum_path=spectrum_path,
                    report_path=report_path,
                    error=run.error,
                )
                for run, spectrum_path, report_path in zip(self.runs, spectrum_paths, report_paths)
            ],
        )


def _run_sample(sample_id: int, cfg_array: ArrayConfig, base: ParameterTable, d: DriveSpec,
                v: VariationConfig, plan: SweepPlan) -> EnsembleRun:
    try:
        table, resampled = perturb(base, v, sample_id)
    except QsimError as exc:
        logger.warning("Sample %d: perturbation failed: %s", sample_id, exc)
        return EnsembleRun(sample_id, base, error=str(exc))
    if resampled:
        logger.info("Sample %d: %d nonpositive draws resampled", sample_id, resampled)
    netlist = build_from_table(cfg_array, table, d)
    try:
        spectrum = run_sweep(netlist, plan)
    except QsimError as exc:
        logger.warning("Sample %d: sweep failed: %s", sample_id, exc)
        return EnsembleRun(sample_id, table, resampled, None, str(exc), netlist.digest)
    return EnsembleRun(sample_id, table, resampled, spectrum, None, netlist.digest)


def run_ensemble(cfg_array: ArrayConfig, p: QubitUnitParams, d: DriveSpec, v: VariationConfig,
                 plan: SweepPlan, workers: int = 1) -> Ensemble:
    """Perturb, rebuild and sweep `n_runs` samples; runs come back in sample-id order."""
    base = nominal_table(cfg_array, p)
    base_netlist = build_from_table(cfg_array, base, d)
    sample_ids = list(range(v.n_runs))
    n = len(sample_ids)

    if workers > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=min(workers, n)) as pool:
            runs = list(pool.map(_run_sample, sample_ids, [cfg_array] * n, [base] * n,
                                 [d] * n, [v] * n, [plan] * n))
    else:
        runs = [_run_sample(i, cfg_array, base, d, v, plan) for i in sample_ids]

    failed = sum(1 for run in runs if run.error)
    logger.info("Ensemble of %d runs (delta=%g, seed=%d): %d failed", n, v.delta, v.seed, failed)
    return Ensemble(
        runs=tuple(runs),
        config=v,
        base_digest=base_netlist.digest,
        band_boundary=table_band_boundary(base),
        nominal_resonators=tuple(nominal_resonator_frequencies(base)),
    )
