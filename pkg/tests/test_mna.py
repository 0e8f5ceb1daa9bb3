"""
Tests for nodal AC analysis.
"""
import math
from collections import OrderedDict

import numpy as np
import pytest

from app import mna
from app.exceptions import SolverError
from app.mna import AcTemplate, line_admittance, open_stub_impedance, power_balance, stamp
from app.netlist import emit_netlist, parse_netlist
from app.schemas import ArrayConfig, IoLines, SweepPlan
from app.sweep import coarse_grid
from app.topology import build_linear_array, build_unit, derive_elements


def unit_closed_form(p, d, termination, omega):
    """V(out1) of one unit on a unit-volt feed, by series/parallel reduction."""
    e = derive_elements(p)
    jw = 1j * omega
    y_qubit = 1 / e.r_q + jw * p.c_q + 1 / (jw * e.l_q)
    z_qubit_branch = 1 / (jw * p.c_g) + 1 / y_qubit
    y_tank = 1 / e.r_r + jw * p.c_r + 1 / (jw * e.l_r) + 1 / z_qubit_branch
    z_tank_branch = 1 / (jw * p.c_c) + 1 / y_tank
    z_feed = 1 / (1 / termination + 1 / z_tank_branch)
    return z_feed / (d.r0 + z_feed)


class TestStamp:
    """Test the admittance matrix."""

    def test_single_resistor(self):
        """Test the 1x1 system of a current source into a resistor."""
        netlist = parse_netlist("I1 0 n1 AC 0.02\nR1 n1 0 50")
        sys = stamp(netlist, 2 * math.pi * 1e9)
        assert sys.y.toarray() == pytest.approx(np.array([[0.02]]))
        assert sys.i_src == pytest.approx(np.array([0.02]))

    def test_capacitor_entry(self):
        """Test the off-diagonal -jwC of a capacitor."""
        netlist = parse_netlist("I1 0 n1 AC 1\nC1 n1 n2 30f\nR1 n1 0 50\nR2 n2 0 50")
        omega = 2 * math.pi * 6e9
        sys = stamp(netlist, omega)
        y = sys.y.toarray()
        a, b = sys.index("n1"), sys.index("n2")
        assert y[a, b] == pytest.approx(-1j * omega * 30e-15)
        assert abs(y[a, b]) == pytest.approx(1.131e-3, rel=1e-3)
        assert y[a, a] == pytest.approx(0.02 + 1j * omega * 30e-15)

    def test_symmetry(self, unit_params, drive):
        """Test that lumped and line stamps give an exactly symmetric matrix."""
        cfg = ArrayConfig(n_qubits=4, io_lines=IoLines())
        sys = stamp(build_linear_array(cfg, unit_params, drive), 2 * math.pi * 7.2e9)
        assert abs(sys.y - sys.y.T).max() == 0
        assert np.all(sys.y.diagonal().real >= 0)

    def test_nonpositive_omega(self, unit_params, drive):
        """Test that DC is not an AC frequency."""
        with pytest.raises(ValueError):
            stamp(build_unit(unit_params, drive), 0.0)


class TestSolve:
    """Test solutions against hand calculations."""

    def test_voltage_divider(self):
        """Test a unit-volt source over two equal resistors."""
        netlist = parse_netlist("V1 in 0 AC 1\nRs1 in out 50\nRL out 0 50")
        solution = AcTemplate(netlist).solve(2 * math.pi * 1e9)
        assert solution.voltage("out") == pytest.approx(0.5)
        assert solution.voltage("in") == pytest.approx(1.0)
        assert solution.voltage("0") == 0

    def test_unit_matches_closed_form(self, unit_params, drive):
        """Test the single unit against its series/parallel reduction on the default grid."""
        netlist = build_unit(unit_params, drive)
        freqs = np.concatenate([
            coarse_grid(SweepPlan()),
            np.linspace(7.13e9, 7.15e9, 41),
            np.linspace(5.985e9, 5.995e9, 41),
        ])
        omegas = 2 * np.pi * freqs
        response = AcTemplate(netlist).response(omegas, ["out1"])[0]
        expected = unit_closed_form(unit_params, drive, drive.r0, omegas)
        np.testing.assert_allclose(response, expected, rtol=1e-9)

    def test_linearity(self, unit_params, drive):
        """Test that doubling the source doubles the response."""
        netlist = build_unit(unit_params, drive)
        doubled = parse_netlist(emit_netlist(netlist).replace("V1 in 0 AC 1\n", "V1 in 0 AC 2\n"))
        assert doubled.element("V1").value == 2.0
        omegas = 2 * np.pi * np.linspace(7.0e9, 7.3e9, 31)
        single = AcTemplate(netlist).response(omegas, ["out1"])
        double = AcTemplate(doubled).response(omegas, ["out1"])
        np.testing.assert_allclose(double, 2 * single, rtol=1e-12)

    @pytest.mark.parametrize("f", [6.0e9, 7.1411e9, 8.0e9])
    def test_power_balance(self, unit_params, drive, f):
        """Test that delivered power equals resistive loss."""
        netlist = build_unit(unit_params, drive)
        solution = AcTemplate(netlist).solve(2 * math.pi * f)
        balance = power_balance(netlist, solution)
        assert balance.delivered > 0
        assert balance.relative_error < 1e-9

    def test_power_balance_with_lines(self, unit_params, drive):
        """Test power balance through the input and output lines."""
        cfg = ArrayConfig(n_qubits=2, io_lines=IoLines())
        netlist = build_linear_array(cfg, unit_params, drive)
        solution = AcTemplate(netlist).solve(2 * math.pi * 7.2e9)
        assert power_balance(netlist, solution).relative_error < 1e-9

    def test_backward_error_reported(self, linear_config, unit_params, drive):
        """Test that solutions carry a small normwise backward error."""
        netlist = build_linear_array(linear_config, unit_params, drive)
        solution = AcTemplate(netlist).solve(2 * math.pi * 7.32e9)
        assert 0 <= solution.backward_error < 1e-10


class TestLosslessLine:
    """Test the regularised lossless line."""

    def test_quarter_wave_admittance(self):
        """Test y11 ~ 0 and y12 = j/Z0 at a quarter wavelength."""
        y11, y12 = line_admittance(50.0, 10e-9, 2 * math.pi * 25e6, epsilon=0)
        assert abs(y11) < 1e-12
        assert y12 == pytest.approx(1j / 50)

    def test_quarter_wave_open_stub(self):
        """Test that an open quarter-wave stub looks like a short."""
        z = open_stub_impedance(50.0, 10e-9, 2 * math.pi * 25e6)
        assert abs(z) < 1e-3 * 50

    def test_half_wave_open_stub(self):
        """Test that an open half-wave stub stays finite but large."""
        z = open_stub_impedance(50.0, 10e-9, 2 * math.pi * 50e6)
        assert math.isfinite(abs(z))
        assert abs(z) > 1e3 * 50

    def test_quarter_wave_through_solver(self):
        """Test the input impedance of an open stub via the solver."""
        netlist = parse_netlist("I1 0 a AC 1\nT1 a 0 b 0 Z0=50 Td=10n")
        solution = AcTemplate(netlist).solve(2 * math.pi * 25e6)
        assert abs(solution.voltage("a")) < 1e-3 * 50

    def test_unregularised_half_wave_raises(self):
        """Test that epsilon = 0 at a half wavelength is singular."""
        netlist = parse_netlist("I1 0 a AC 1\nR1 a 0 50\nT1 a 0 b 0 Z0=50 Td=10n\nR2 b 0 50")
        with pytest.raises(SolverError):
            AcTemplate(netlist).solve(2 * math.pi * 50e6, epsilon=0)


class TestOrderingCache:
    """Test the per-process cache of fill-reducing orderings."""

    def test_cache_is_bounded(self, unit_params, drive, monkeypatch):
        """Test that many distinct circuits keep at most the configured number of orderings."""
        monkeypatch.setattr(mna, "_ORDERINGS", OrderedDict())
        monkeypatch.setattr(mna, "ORDERING_CACHE_SIZE", 3)
        templates = [
            AcTemplate(build_linear_array(ArrayConfig(n_qubits=n), unit_params, drive))
            for n in range(1, 7)
        ]
        assert len(mna._ORDERINGS) == 3
        assert list(mna._ORDERINGS) == [t.pattern_digest for t in templates[-3:]]

    def test_reused_pattern_refreshes_entry(self, unit_params, drive, monkeypatch):
        """Test that a pattern seen again is kept over older ones."""
        monkeypatch.setattr(mna, "_ORDERINGS", OrderedDict())
        monkeypatch.setattr(mna, "ORDERING_CACHE_SIZE", 2)
        first = AcTemplate(build_linear_array(ArrayConfig(n_qubits=1), unit_params, drive))
        AcTemplate(build_linear_array(ArrayConfig(n_qubits=2), unit_params, drive))
        again = AcTemplate(build_linear_array(ArrayConfig(n_qubits=1), unit_params, drive))
        AcTemplate(build_linear_array(ArrayConfig(n_qubits=3), unit_params, drive))
        assert first.pattern_digest in mna._ORDERINGS
        np.testing.assert_array_equal(again.order, first.order)
        assert len(mna._ORDERINGS) == 2
