"""
Tests for element derivation, coupling physics and the circuit builders.
"""
import math

import pytest
from pydantic import ValidationError

from app.exceptions import UnphysicalInputError
from app.netlist import ElementKind
from app.schemas import ArrayConfig, DriveSpec, QubitUnitParams
from app.topology import (
    HBAR,
    band_boundary,
    build_array,
    build_from_table,
    build_linear_array,
    build_square_array,
    build_unit,
    check_dispersive,
    coupling_strength,
    derive_elements,
    drive_current,
    loaded_resonator_frequency,
    nominal_resonator_frequencies,
    nominal_table,
    tile_grid_side,
)


class TestDeriveElements:
    """Test element values derived from physical parameters."""

    def test_default_unit(self, unit_params):
        """Test R = T1/C, L = 1/(C w^2) and the tank loss from Q."""
        values = derive_elements(unit_params)
        assert values.r_q == pytest.approx(3.3333e7, rel=1e-4)
        assert values.l_q == pytest.approx(2.3453e-8, rel=1e-4)
        assert values.r_r == pytest.approx(7.9577e6, rel=1e-4)
        assert values.l_r == pytest.approx(1.9789e-8, rel=1e-4)

    def test_resonance_closure(self, unit_params):
        """Test that the derived inductances resonate at the given frequencies."""
        values = derive_elements(unit_params)
        f_q = 1 / (2 * math.pi * math.sqrt(values.l_q * unit_params.c_q))
        f_r = 1 / (2 * math.pi * math.sqrt(values.l_r * unit_params.c_r))
        assert f_q == pytest.approx(unit_params.f_q, rel=1e-12)
        assert f_r == pytest.approx(unit_params.f_r, rel=1e-12)

    def test_homogeneity(self, unit_params):
        """Test how element values scale with their inputs."""
        base = derive_elements(unit_params)
        longer = derive_elements(unit_params.model_copy(update={"t1_q": 2e-6}))
        bigger = derive_elements(unit_params.model_copy(update={"c_q": 60e-15}))
        faster = derive_elements(unit_params.model_copy(update={"f_r": 16e9}))
        assert longer.r_q == pytest.approx(2 * base.r_q)
        assert bigger.l_q == pytest.approx(0.5 * base.l_q)
        assert faster.l_r == pytest.approx(0.25 * base.l_r)
        assert faster.r_r == pytest.approx(0.5 * base.r_r)

    def test_qubit_above_tank_rejected(self):
        """Test that the tank must sit above the qubit."""
        with pytest.raises(ValidationError):
            QubitUnitParams(f_q=6e9, f_r=5e9)


class TestCoupling:
    """Test coupling strength and the dispersive check."""

    def test_coupling_strength(self):
        """Test g/2pi for the default unit (about 0.0141 GHz)."""
        g = coupling_strength(0.1e-15, 30e-15, 20e-15, 6e9, 8e9)
        assert g == pytest.approx(1.41421e7, rel=1e-5)

    def test_zero_coupling(self):
        """Test that c_g = 0 decouples the qubit."""
        assert coupling_strength(0.0, 30e-15, 20e-15, 6e9, 8e9) == 0.0

    def test_dispersive_default(self):
        """Test the default unit is deep in the dispersive regime."""
        check = check_dispersive(1.41421e7, 6e9, 8e9)
        assert check.delta == pytest.approx(2e9)
        assert check.ratio == pytest.approx(7.07e-3, rel=1e-3)
        assert check.ok

    def test_dispersive_violated(self):
        """Test that strong coupling fails the check."""
        assert not check_dispersive(5e8, 6e9, 8e9).ok

    def test_dispersive_degenerate(self):
        """Test that equal frequencies raise."""
        with pytest.raises(UnphysicalInputError):
            check_dispersive(1e7, 7e9, 7e9)


class TestDriveCurrent:
    """Test the readout drive estimate."""

    def test_plain_hz(self):
        """Test the 0.08 nA drive and its photon number."""
        level = drive_current(DriveSpec(f_cv=3e9, kappa=1e6, r0=50.0, f_readout=8e9))
        assert level.i == pytest.approx(7.9545e-11, rel=1e-4)
        assert level.i == pytest.approx(0.08e-9, rel=0.01)
        assert level.p == pytest.approx(50.0 * level.i ** 2)
        assert level.p == pytest.approx(3.1637e-19, rel=1e-4)
        assert level.n_photons == pytest.approx(0.375)

    def test_angular(self):
        """Test that the angular convention scales the current by 2pi."""
        plain = drive_current(DriveSpec(frequency_convention="plain_hz"))
        angular = drive_current(DriveSpec(frequency_convention="angular"))
        assert angular.i == pytest.approx(2 * math.pi * plain.i)
        assert angular.i == pytest.approx(4.998e-10, rel=1e-3)
        assert angular.n_photons == pytest.approx(plain.n_photons)

    def test_tiny_kappa(self):
        """Test that a very small decay rate gives a sub-attoampere drive."""
        level = drive_current(DriveSpec(kappa=1e-10))
        assert level.i < 1e-18
        assert level.i == pytest.approx(math.sqrt(HBAR * 3e9 * 1e-10 / 50.0))


class TestNominalTable:
    """Test frequency staggering and coupling edges."""

    def test_linear_stagger(self, linear_config, unit_params):
        """Test the 0.2 GHz qubit and tank steps."""
        table = nominal_table(linear_config, unit_params)
        assert [u.f_q for u in table.units] == pytest.approx([6.0e9, 6.2e9, 6.4e9, 6.6e9])
        assert [u.f_r for u in table.units] == pytest.approx([8.0e9, 8.2e9, 8.4e9, 8.6e9])
        assert [(a, b) for a, b, _c in table.couplings] == [(1, 2), (2, 3), (3, 4)]

    def test_stagger_repeats(self, unit_params):
        """Test that the pattern repeats every stagger period."""
        table = nominal_table(ArrayConfig(n_qubits=6, stagger_period=4), unit_params)
        assert table.units[4] == table.units[0]
        assert table.units[5] == table.units[1]

    def test_square_unit_ring(self, unit_params):
        """Test that the square unit couples its four qubits in a ring."""
        table = nominal_table(ArrayConfig(arrangement="square_unit", n_qubits=4), unit_params)
        assert len(table.couplings) == 4
        assert len({u.f_q for u in table.units}) == 1

    def test_square_tiled_edges(self, unit_params):
        """Test ring edges plus two edges per adjacent tile pair."""
        table = nominal_table(ArrayConfig(arrangement="square_tiled", n_qubits=16), unit_params)
        assert len(table.couplings) == 16 + 4 + 4

    @pytest.mark.parametrize("n_tiles,side", [(1, 1), (2, 2), (4, 2), (5, 3), (9, 3)])
    def test_tile_grid_side(self, n_tiles, side):
        """Test the smallest square grid that holds the tiles."""
        assert tile_grid_side(n_tiles) == side

    def test_table_dict_round_trip(self, linear_config, unit_params):
        """Test the JSON form of a parameter table."""
        from app.topology import ParameterTable
        table = nominal_table(linear_config, unit_params)
        assert ParameterTable.from_dict(table.to_dict()) == table

    def test_invalid_square_size(self):
        """Test that square arrangements need multiples of four."""
        with pytest.raises(ValidationError):
            ArrayConfig(arrangement="square_unit", n_qubits=3)
        with pytest.raises(ValidationError):
            ArrayConfig(arrangement="square_tiled", n_qubits=6)

    def test_io_lines_need_linear(self):
        """Test that input and output lines are refused on square arrangements."""
        from app.schemas import IoLines
        with pytest.raises(ValidationError):
            ArrayConfig(arrangement="square_tiled", n_qubits=100, io_lines=IoLines())


class TestBandBoundary:
    """Test the qubit/resonator band split."""

    def test_loaded_frequency(self, unit_params):
        """Test the tank pulled down by the coupling capacitors."""
        expected = 8e9 * math.sqrt(20 / 25.1)
        assert loaded_resonator_frequency(unit_params) == pytest.approx(expected)
        assert loaded_resonator_frequency(unit_params) == pytest.approx(7.1411e9, rel=1e-4)

    def test_linear_boundary(self, linear_config, unit_params):
        """Test the midpoint between the top qubit and the lowest loaded tank."""
        boundary = band_boundary(linear_config, unit_params)
        assert boundary == pytest.approx(0.5 * (6.6e9 + 8e9 * math.sqrt(20 / 25.1)))
        assert 6.6e9 < boundary < 7.14e9

    def test_nominal_resonators(self, linear_config, unit_params):
        """Test four distinct ascending loaded tank frequencies."""
        freqs = nominal_resonator_frequencies(nominal_table(linear_config, unit_params))
        assert len(freqs) == 4
        assert freqs == sorted(freqs)
        assert freqs[1] - freqs[0] == pytest.approx(0.2e9 * math.sqrt(20 / 25.1))


class TestBuilders:
    """Test the wiring of the builders."""

    def test_unit_wiring(self, unit_params, drive):
        """Test the unit-volt drive and the tank coupling onto the feed."""
        netlist = build_unit(unit_params, drive)
        assert netlist.element("V1").nodes == ("in", "0")
        assert netlist.element("Rs1").nodes == ("in", "out1")
        assert netlist.element("Cc1").nodes == ("out1", "t1")
        assert netlist.element("Cg1").nodes == ("t1", "q1")
        assert netlist.element("Rq1").value == pytest.approx(3.3333e7, rel=1e-4)

    def test_norton_current_drive(self, unit_params):
        """Test the Norton source carrying the computed drive current."""
        d = DriveSpec(amplitude_mode="norton_current")
        netlist = build_unit(unit_params, d)
        source = netlist.element("I1")
        assert source.kind is ElementKind.AC_CURRENT
        assert source.value == pytest.approx(drive_current(d).i)
        assert netlist.element("V1") is None

    def test_decoupled_qubit(self, drive):
        """Test that c_g = 0 drops the coupling capacitor."""
        netlist = build_unit(QubitUnitParams(c_g=0.0), drive)
        assert netlist.element("Cg1") is None
        assert netlist.element("Cq1") is not None

    def test_io_lines(self, unit_params, drive):
        """Test the input and output lines around the feed."""
        from app.schemas import IoLines
        cfg = ArrayConfig(n_qubits=2, io_lines=IoLines(z0=50.0, delay=10e-9))
        netlist = build_linear_array(cfg, unit_params, drive)
        assert netlist.element("Tin").nodes == ("feed_in", "0", "feed", "0")
        assert netlist.element("Tout").nodes == ("feed", "0", "out1", "0")
        assert netlist.element("Cc2").nodes == ("feed", "t2")

    def test_square_probes(self, unit_params, drive):
        """Test the four output probes of the square unit."""
        netlist = build_square_array(ArrayConfig(arrangement="square_unit", n_qubits=4), unit_params, drive)
        assert netlist.probes == ("out1", "out2", "out3", "out4")
        assert netlist.element("Rin1") is None
        assert netlist.element("Rin2") is not None

    def test_zero_qubit_coupling(self, unit_params, drive):
        """Test that c_qq = 0 leaves the qubits uncoupled."""
        cfg = ArrayConfig(arrangement="square_unit", n_qubits=4, c_qq=0.0)
        netlist = build_array(cfg, unit_params, drive)
        assert not any(e.label.startswith("Cqq") for e in netlist.elements)

    def test_wrong_arrangement(self, unit_params, drive):
        """Test that builders refuse the other arrangement."""
        with pytest.raises(ValueError):
            build_linear_array(ArrayConfig(arrangement="square_unit", n_qubits=4), unit_params, drive)
        with pytest.raises(ValueError):
            build_square_array(ArrayConfig(), unit_params, drive)

    def test_table_size_mismatch(self, linear_config, unit_params, drive):
        """Test that a table must match the arrangement size."""
        table = nominal_table(ArrayConfig(n_qubits=2), unit_params)
        with pytest.raises(ValueError):
            build_from_table(linear_config, table, drive)
