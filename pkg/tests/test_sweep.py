"""
Tests for spectra, feature signals and adaptive sweeps.
"""
import time

import numpy as np
import pytest

from app.exceptions import NetlistError
from app.netlist import parse_netlist
from app.schemas import ArrayConfig, RefinePlan, SweepPlan
from app.sweep import (
    Spectrum,
    band_select,
    coarse_grid,
    detect_maxima,
    detect_narrow,
    feature_signal,
    local_deviation,
    run_sweep,
)
from app.topology import build_square_array, build_unit


def notch(freqs, f0, width, depth=0.9):
    return 1 - depth / (1 + 2j * (freqs - f0) / width)


class TestSpectrum:
    """Test spectrum invariants."""

    def test_ascending_frequencies(self):
        """Test that frequencies must be strictly ascending."""
        with pytest.raises(ValueError):
            Spectrum(np.array([1.0, 3.0, 2.0]), {"out": np.ones(3)})
        with pytest.raises(ValueError):
            Spectrum(np.array([1.0, 1.0, 2.0]), {"out": np.ones(3)})

    def test_aligned_response(self):
        """Test that every probe has one value per frequency."""
        with pytest.raises(ValueError):
            Spectrum(np.array([1.0, 2.0, 3.0]), {"out": np.ones(2)})

    def test_finite_response(self):
        """Test that NaN responses are rejected."""
        with pytest.raises(ValueError):
            Spectrum(np.array([1.0, 2.0, 3.0]), {"out": np.array([1.0, np.nan, 1.0])})

    def test_default_coarse_mask(self):
        """Test that a spectrum without a mask treats every sample as coarse."""
        spec = Spectrum(np.array([1.0, 2.0, 3.0]), {"out": np.ones(3)})
        assert spec.coarse_mask.tolist() == [True, True, True]

    def test_band_select(self):
        """Test restriction to a band and the full-range identity."""
        freqs = np.linspace(1e9, 2e9, 11)
        spec = Spectrum(freqs, {"out": np.arange(11.0)})
        same = band_select(spec, (1e9, 2e9))
        np.testing.assert_array_equal(same.freqs, spec.freqs)
        part = band_select(spec, (1.25e9, 1.55e9))
        np.testing.assert_allclose(part.freqs, [1.3e9, 1.4e9, 1.5e9])
        np.testing.assert_allclose(part.response["out"].real, [3.0, 4.0, 5.0])

    def test_empty_band(self):
        """Test that a band without samples raises."""
        spec = Spectrum(np.linspace(1e9, 2e9, 11), {"out": np.ones(11)})
        with pytest.raises(ValueError):
            band_select(spec, (3e9, 4e9))


class TestFeatureSignal:
    """Test the signal used to locate resonances."""

    def test_notch_uses_deviation(self):
        """Test that a dip in a feedline becomes a peak."""
        freqs = np.linspace(6.9e9, 7.1e9, 401)
        signal, mode = feature_signal(notch(freqs, 7e9, 5e6))
        assert mode == "deviation"
        assert freqs[np.argmax(signal)] == pytest.approx(7e9)

    def test_peak_uses_magnitude(self):
        """Test that a rising resonance keeps the magnitude."""
        freqs = np.linspace(6.9e9, 7.1e9, 401)
        response = 1 / (1 + 2j * (freqs - 7e9) / 5e6)
        signal, mode = feature_signal(response)
        assert mode == "magnitude"
        np.testing.assert_allclose(signal, np.abs(response))

    def test_unknown_mode(self):
        """Test that unknown signal modes raise."""
        with pytest.raises(ValueError):
            feature_signal(np.ones(5), "phase")


class TestCoarseGrid:
    """Test coarse grids."""

    def test_linear(self):
        """Test a linear grid with both ends included."""
        grid = coarse_grid(SweepPlan(f_min=7e9, f_max=9e9, n_coarse=2001))
        assert len(grid) == 2001
        assert grid[0] == 7e9
        assert grid[-1] == 9e9
        assert np.diff(grid) == pytest.approx(np.full(2000, 1e6))

    def test_log(self):
        """Test a logarithmic grid."""
        grid = coarse_grid(SweepPlan(f_min=1e9, f_max=1e10, n_coarse=11, spacing="log"))
        assert grid[0] == pytest.approx(1e9)
        assert grid[-1] == pytest.approx(1e10)
        assert grid[1] / grid[0] == pytest.approx(grid[-1] / grid[-2])


class TestRunSweep:
    """Test sweeps with adaptive refinement."""

    def test_refines_resonance(self, unit_params, drive, resonator_plan):
        """Test that refinement resolves the tank notch."""
        spec = run_sweep(build_unit(unit_params, drive), resonator_plan)
        assert len(spec.freqs) > resonator_plan.n_coarse
        assert spec.coarse_mask.sum() == resonator_plan.n_coarse
        assert spec.points_target == 20
        assert spec.unresolved == {}
        assert np.all(np.diff(spec.freqs) > 0)

    def test_refinement_keeps_coarse_values(self, unit_params, drive, resonator_plan):
        """Test that refinement only adds samples."""
        netlist = build_unit(unit_params, drive)
        refined = run_sweep(netlist, resonator_plan)
        plain = run_sweep(netlist, resonator_plan.model_copy(update={"refine": RefinePlan(enabled=False)}))
        assert len(plain.freqs) == resonator_plan.n_coarse
        np.testing.assert_array_equal(refined.freqs[refined.coarse_mask], plain.freqs)
        np.testing.assert_array_equal(refined.response["out1"][refined.coarse_mask], plain.response["out1"])

    def test_unrefined_target(self, unit_params, drive, resonator_plan):
        """Test that an unrefined sweep sets no point target."""
        plan = resonator_plan.model_copy(update={"refine": RefinePlan(enabled=False)})
        assert run_sweep(build_unit(unit_params, drive), plan).points_target == 0

    def test_digest_recorded(self, unit_params, drive, resonator_plan):
        """Test that the spectrum records the netlist it came from."""
        netlist = build_unit(unit_params, drive)
        assert run_sweep(netlist, resonator_plan).netlist_digest == netlist.digest

    def test_uncoupled_outputs_stay_silent(self, unit_params, drive):
        """Test that undriven square-unit outputs see nothing without qubit coupling."""
        cfg = ArrayConfig(arrangement="square_unit", n_qubits=4, c_qq=0.0)
        plan = SweepPlan(f_min=7.0e9, f_max=7.3e9, n_coarse=301)
        spec = run_sweep(build_square_array(cfg, unit_params, drive), plan)
        for probe in ("out2", "out3", "out4"):
            assert np.max(np.abs(spec.response[probe])) == 0.0
        assert np.max(np.abs(spec.response["out1"])) > 0.4

    def test_parallel_matches_serial(self, unit_params, drive):
        """Test that worker processes give the same spectrum."""
        netlist = build_unit(unit_params, drive)
        plan = SweepPlan(f_min=7.0e9, f_max=7.3e9, n_coarse=301)
        serial = run_sweep(netlist, plan)
        parallel = run_sweep(netlist, plan, workers=2)
        np.testing.assert_array_equal(serial.freqs, parallel.freqs)
        np.testing.assert_array_equal(serial.response["out1"], parallel.response["out1"])

    def test_invalid_netlist(self, resonator_plan):
        """Test that a netlist without sources is refused."""
        with pytest.raises(NetlistError):
            run_sweep(parse_netlist("R1 a 0 50\n.probe a"), resonator_plan)

    def test_no_probes(self, resonator_plan):
        """Test that a netlist without probes is refused."""
        with pytest.raises(NetlistError, match="no probes"):
            run_sweep(parse_netlist("I1 0 a AC 1\nR1 a 0 50"), resonator_plan)

    def test_refines_qubit_line(self, unit_params, drive):
        """Test that the narrow qubit line beside the feedline is refined along with the tank."""
        spec = run_sweep(build_unit(unit_params, drive), SweepPlan())
        near = (spec.freqs > 5.9895e9) & (spec.freqs < 5.9905e9)
        assert near.sum() >= 20
        assert spec.unresolved == {}


class TestLocalDeviation:
    """Test the running-baseline signal for narrow features."""

    def test_flat_background(self):
        """Test that a monotone background leaves no signal at all."""
        freqs = np.linspace(5.5e9, 6.5e9, 1001)
        response = 0.5 - 1j * (2.8e-3 + 2e-12 * (freqs - 5.5e9))
        narrow = local_deviation(freqs, response, "deviation")
        assert np.max(narrow) == 0.0

    def test_small_line_on_slope(self):
        """Test that a line a thousandth of the level stands out where the whole-band median hides it."""
        freqs = np.linspace(5.5e9, 6.5e9, 1001)
        background = 0.5 - 1j * (2.8e-3 + 2e-12 * (freqs - 5.5e9))
        response = background + 1e-3j / (1 + 2j * (freqs - 5.99e9) / 1e6)
        coarse = np.ones(len(freqs), dtype=bool)
        signal, _mode = feature_signal(response, "deviation", coarse)
        assert len(detect_maxima(signal, coarse)) == 0
        narrow = local_deviation(freqs, response, "deviation", coarse)
        found = detect_narrow(freqs, narrow, response, coarse)
        assert freqs[found].tolist() == pytest.approx([5.99e9])

    def test_excluded_near_strong_peak(self):
        """Test that nothing is reported within half a window of a stronger peak's interval."""
        freqs = np.linspace(6.9e9, 7.4e9, 501)
        response = notch(freqs, 7.14e9, 8.7e6)
        coarse = np.ones(len(freqs), dtype=bool)
        narrow = local_deviation(freqs, response, "deviation", coarse)
        assert len(detect_narrow(freqs, narrow, response, coarse, [(7.13e9, 7.15e9)])) == 0


class TestScale:
    """Test sweeps of large tiled arrays."""

    def test_thousand_qubit_sweep(self, unit_params, drive):
        """Test an unrefined sweep of 250 tiles, extrapolated to the default grid, within five minutes."""
        cfg = ArrayConfig(arrangement="square_tiled", n_qubits=1000)
        plan = SweepPlan(n_coarse=41, refine=RefinePlan(enabled=False))
        netlist = build_square_array(cfg, unit_params, drive)
        start = time.perf_counter()
        spec = run_sweep(netlist, plan)
        elapsed = time.perf_counter() - start
        assert len(spec.freqs) == 41
        assert spec.probes == ["out1", "out2", "out3", "out4"]
        assert all(np.all(np.isfinite(values)) for values in spec.response.values())
        assert elapsed * SweepPlan().n_coarse / plan.n_coarse < 300.0
