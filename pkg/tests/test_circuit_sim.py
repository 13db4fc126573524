"""
Tests for the rectenna simulators, the clipping baseline and dataset generation
"""

import math
import os
import sys

import numpy as np
import pytest

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from core.circuit_sim import (
    DATASET_HEADER,
    DEFAULT_R_E_CEILING,
    ClippingRectifier,
    Dataset,
    DiodeParams,
    EnvelopeSimulator,
    MatchingNetworkSpec,
    RectifierKernel,
    SimulationBackend,
    Topology,
    TransientSimulator,
    calibrate_v_max,
    envelope_simulator,
    generate_dataset,
    reference_circuit,
    simulate_symbol,
    source_peak_voltage,
)
from core.error_handler import DomainError


class TestComponents:
    """Test diode law, matching network and source conversion"""

    def test_diode_forward_current(self):
        """Test the Shockley branch in forward bias"""
        diode = DiodeParams()
        i, g = diode.current(np.array([0.3]))
        expected = 5e-6 * (math.exp(0.3 / (1.05 * 25.85e-3)) - 1.0)
        assert i[0] == pytest.approx(expected, rel=1e-6)
        assert g[0] > 0

    def test_diode_is_monotone(self):
        """Test that the current rises with voltage across breakdown and forward bias"""
        v = np.linspace(-3.0, 0.6, 2001)
        i, g = DiodeParams().current(v)
        assert np.all(np.diff(i) >= 0)
        assert np.all(g > 0)
        assert i[-1] > 0 > i[0]

    def test_diode_leakage_is_small(self):
        """Test that reverse leakage below the knee is scaled down"""
        i, _ = DiodeParams().current(np.array([-1.0]))
        assert -1e-8 < i[0] < 0.0

    def test_invalid_diode(self):
        """Test parameter validation"""
        with pytest.raises(DomainError):
            DiodeParams(ideality=3.0)
        with pytest.raises(DomainError):
            DiodeParams(saturation_current=0.0)

    def test_matching_ratio(self):
        """Test the L-section transformation ratio"""
        matching = MatchingNetworkSpec(26.7e-9, 0.73e-12)
        q = 2 * math.pi * 2.45e9 * 26.7e-9 / 50.0
        assert matching.quality_factor(2.45e9, 50.0) == pytest.approx(q)
        assert matching.transformation_ratio(2.45e9, 50.0) == pytest.approx(math.sqrt(1 + q * q))

    def test_reference_circuits(self):
        """Test that every reference design builds and unknown designs are rejected"""
        for topology in Topology:
            for design in (-13, 0):
                spec = reference_circuit(topology, design)
                assert spec.voltage_gain > 1.0
        assert reference_circuit(Topology.FULL_WAVE_BRIDGE).diode_count == 4
        with pytest.raises(DomainError):
            reference_circuit(Topology.HALF_WAVE, 5)

    def test_source_peak_voltage(self):
        """Test that the available power of the Thevenin source is r_E^2"""
        assert source_peak_voltage(1.0, 50.0) == pytest.approx(20.0)
        v = source_peak_voltage(np.array([0.1, 0.2]), 50.0)
        assert np.allclose(v ** 2 / (8 * 50.0), [0.01, 0.04])
        with pytest.raises(DomainError):
            source_peak_voltage(-1.0, 50.0)


class TestRectifierKernel:
    """Test the quasi-static rectifier current"""

    def setup_method(self):
        """Setup the half-wave reference circuit"""
        self.spec = reference_circuit(Topology.HALF_WAVE, -13)
        self.kernel = RectifierKernel(self.spec)

    def test_no_drive_no_current(self):
        """Test that a zero source into a discharged load gives no current"""
        i = self.kernel.load_current(np.array([0.0]), np.array([0.0]))
        assert abs(i[0]) < 1e-12

    def test_loop_equation(self):
        """Test KVL around the half-wave loop"""
        v_src = np.array([1.0, 0.2, -0.5])
        v_load = np.array([0.3, 0.1, 0.4])
        i = self.kernel.load_current(v_src, v_load)
        # The junction voltage is what remains after the Thevenin resistance drop.
        v_d = v_src - v_load - self.kernel.resistance * i
        i_check, _ = self.spec.diode.current(v_d)
        assert np.allclose(i, i_check, rtol=1e-8, atol=1e-15)

    def test_forward_current_positive(self):
        """Test conduction when the source exceeds the load voltage"""
        i = self.kernel.load_current(np.array([2.0]), np.array([0.5]))
        assert i[0] > 0
        assert i[0] < 1.5 / self.kernel.resistance

    def test_bridge_symmetry(self):
        """Test that the bridge current is even in the source voltage"""
        kernel = RectifierKernel(reference_circuit(Topology.FULL_WAVE_BRIDGE, -13))
        v_load = np.array([0.2, 0.2])
        i = kernel.load_current(np.array([0.8, -0.8]), v_load)
        assert i[0] == pytest.approx(i[1], rel=1e-6)
        assert i[0] > 0

    def test_source_current(self):
        """Test the current drawn from the source next to the load current"""
        i_src, i_load = self.kernel.currents(np.array([1.0]), np.array([0.3]))
        assert i_src[0] == i_load[0]
        bridge = RectifierKernel(reference_circuit(Topology.FULL_WAVE_BRIDGE, -13), 40.0)
        assert bridge.resistance == 40.0
        i_src, i_load = bridge.currents(np.array([0.8, -0.8]), np.array([0.2, 0.2]))
        assert i_src[0] > 0 > i_src[1]
        assert i_src[0] == pytest.approx(-i_src[1], rel=1e-6)
        assert i_load[0] == pytest.approx(i_load[1], rel=1e-6)


class TestEnvelopeSimulator:
    """Test the envelope backend"""

    def setup_method(self):
        """Setup an envelope simulator for r_E up to 0.01 sqrt-W (-10 dBm)"""
        self.spec = reference_circuit(Topology.HALF_WAVE, -13)
        self.sim = EnvelopeSimulator(self.spec, r_e_max=0.01)

    def test_pure_discharge(self):
        """Test the RC discharge with no input"""
        final, power = self.sim.simulate_batch(np.array([1.0]), np.array([0.0]))
        ratio = self.spec.symbol_duration / self.spec.time_constant
        assert final[0] == pytest.approx(math.exp(-ratio), rel=1e-3)
        expected_power = (self.spec.time_constant / 2) * (1 - math.exp(-2 * ratio)) / (
            self.spec.load_resistance * self.spec.symbol_duration)
        assert power[0] == pytest.approx(expected_power, rel=1e-3)

    def test_discharged_without_input_stays_zero(self):
        """Test the trivial fixed point"""
        final, power = self.sim.simulate_batch(np.array([0.0]), np.array([0.0]))
        assert final[0] == pytest.approx(0.0, abs=1e-6)
        assert power[0] == pytest.approx(0.0, abs=1e-12)

    def test_charging_is_monotone_in_amplitude(self):
        """Test that a stronger input charges the load further"""
        r_e = np.array([0.002, 0.005, 0.01])
        final, power = self.sim.simulate_batch(np.zeros(3), r_e)
        assert np.all(np.diff(final) > 0)
        assert np.all(np.diff(power) > 0)

    def test_steady_state(self):
        """Test the steady-state voltage grows with amplitude and vanishes at zero"""
        assert self.sim.steady_state_voltage(0.0) == 0.0
        low = self.sim.steady_state_voltage(0.003)
        high = self.sim.steady_state_voltage(0.01)
        assert 0.0 < low < high

    def test_final_voltage_within_range(self):
        """Test that outputs stay inside [0, v_max]"""
        v_max = calibrate_v_max(self.spec, 0.01)
        rng = np.random.default_rng(1)
        v0 = rng.uniform(0.0, v_max, 50)
        r_e = rng.uniform(0.0, 0.01, 50)
        final, power = self.sim.simulate_batch(v0, r_e)
        assert np.all(final >= 0)
        assert np.all(final <= v_max)
        assert np.all(power >= 0)

    def test_calibrated_ceiling(self):
        """Test the quantizer ceiling margin over the steady state"""
        v_max = calibrate_v_max(self.spec, 0.01)
        assert v_max >= 1.02 * self.sim.steady_state_voltage(0.01) * (1 - 1e-9)

    def test_simulate_symbol(self):
        """Test the single-symbol front end and its validation"""
        response = simulate_symbol(self.spec, 0.0, 0.005, SimulationBackend.ENVELOPE, 0.01)
        assert response.final_voltage > 0
        assert response.average_power > 0
        with pytest.raises(DomainError):
            simulate_symbol(self.spec, -0.1, 0.005)

    def test_simulate_symbol_shares_map(self):
        """Test that single-symbol calls without a ceiling reuse one envelope map"""
        simulate_symbol(self.spec, 0.0, 0.004)
        before = envelope_simulator.cache_info()
        zero = simulate_symbol(self.spec, 0.1, 0.0)
        simulate_symbol(self.spec, 0.2, 0.007)
        after = envelope_simulator.cache_info()
        assert after.misses == before.misses
        assert after.hits == before.hits + 2
        assert zero.final_voltage < 0.1
        assert envelope_simulator(self.spec, DEFAULT_R_E_CEILING).diagnostics.clamped == 0

    def test_length_mismatch(self):
        """Test batch validation"""
        with pytest.raises(DomainError):
            self.sim.simulate_batch(np.zeros(2), np.zeros(3))


class TestTransientSimulator:
    """Test the carrier-resolved backend"""

    def test_requires_fine_steps(self):
        """Test the minimum step count per carrier cycle"""
        with pytest.raises(DomainError):
            TransientSimulator(reference_circuit(), steps_per_cycle=50)

    def test_scaled_matching_network(self):
        """Test that scaling keeps the carrier reactances and the L-section match"""
        spec = reference_circuit(Topology.HALF_WAVE, -13)
        sim = TransientSimulator(spec, cycles_per_symbol=10)
        scale = spec.carrier_frequency / sim.carrier
        assert sim.carrier == pytest.approx(1e6)
        assert sim.inductance == pytest.approx(spec.matching.inductance_l1 * scale)
        q = spec.matching.quality_factor(spec.carrier_frequency, spec.antenna_resistance)
        assert sim.inductance / sim.shunt_capacitance == pytest.approx(
            spec.antenna_resistance ** 2 * (1.0 + q * q))
        assert sim.kernel.resistance == pytest.approx(spec.diode.series_resistance)

    def test_discharge_without_input(self):
        """Test the RC discharge through the reactive network with no drive"""
        spec = reference_circuit(Topology.HALF_WAVE, -13)
        final, power = TransientSimulator(spec, cycles_per_symbol=5).simulate_batch(
            np.array([1.0]), np.array([0.0]))
        ratio = spec.symbol_duration / spec.time_constant
        assert final[0] == pytest.approx(math.exp(-ratio), rel=1e-3)
        expected_power = (spec.time_constant / 2) * (1 - math.exp(-2 * ratio)) / (
            spec.load_resistance * spec.symbol_duration)
        assert power[0] == pytest.approx(expected_power, rel=1e-3)

    @pytest.mark.slow
    def test_agrees_with_envelope(self):
        """Test the envelope map against the L/C-resolved transient circuit"""
        spec = reference_circuit(Topology.HALF_WAVE, -13)
        envelope = EnvelopeSimulator(spec, r_e_max=0.01)
        v0, r_e = np.array([0.0, 0.5]), np.array([0.005, 0.005])
        env_final, env_power = envelope.simulate_batch(v0, r_e)
        tr_final, tr_power = TransientSimulator(spec).simulate_batch(v0, r_e)
        assert np.allclose(env_final, tr_final, rtol=0.1)
        assert np.allclose(env_power, tr_power, rtol=0.2)


class TestClippingRectifier:
    """Test the closed-form baseline"""

    def setup_method(self):
        """Setup the baseline for the half-wave reference circuit"""
        self.spec = reference_circuit(Topology.HALF_WAVE, -13)
        self.clip = ClippingRectifier.from_spec(self.spec)

    def test_saturation(self):
        """Test that the steady state saturates at half the breakdown voltage"""
        assert self.clip.saturation_voltage == pytest.approx(1.0)
        assert self.clip.steady_state(np.array([10.0]))[0] == pytest.approx(1.0)

    def test_steady_state_is_a_fixed_point(self):
        """Test that starting at the steady state stays there"""
        r_e = np.array([0.003])
        a = self.clip.steady_state(r_e)
        final, power = self.clip.respond(a, r_e)
        assert final[0] == pytest.approx(a[0])
        assert power[0] == pytest.approx(a[0] ** 2 / self.spec.load_resistance)

    def test_relaxation(self):
        """Test exponential relaxation toward the steady state"""
        final, _ = self.clip.respond(np.array([0.0]), np.array([0.003]))
        a = self.clip.steady_state(np.array([0.003]))[0]
        decay = math.exp(-self.spec.symbol_duration / self.spec.time_constant)
        assert final[0] == pytest.approx(a * (1 - decay))


class TestDataset:
    """Test dataset generation and splitting"""

    def setup_method(self):
        """Setup a fast responder"""
        self.clip = ClippingRectifier.from_spec(reference_circuit())

    def test_reproducible_across_workers(self):
        """Test that the worker count does not change the samples"""
        serial = generate_dataset(self.clip, 2500, 0.01, 1.2, seed=4, workers=1)
        parallel = generate_dataset(self.clip, 2500, 0.01, 1.2, seed=4, workers=3)
        assert len(serial) == 2500
        assert np.array_equal(serial.v_init, parallel.v_init)
        assert np.array_equal(serial.power, parallel.power)

    def test_sample_ranges(self):
        """Test that inputs are drawn inside the requested box"""
        data = generate_dataset(self.clip, 500, 0.01, 1.2, seed=0)
        assert np.all((data.v_init >= 0) & (data.v_init <= 1.2))
        assert np.all((data.r_e >= 0) & (data.r_e <= 0.01))

    def test_csv_columns(self):
        """Test the CSV column order"""
        data = generate_dataset(self.clip, 3, 0.01, 1.2, seed=0)
        assert DATASET_HEADER == ("v_init", "r_E", "v_final", "p_avg")
        row = data.csv_rows()[0]
        assert row == (data.v_init[0], data.r_e[0], data.final_voltage[0], data.power[0])
        again = Dataset.from_csv_rows(data.csv_rows())
        assert np.array_equal(again.power, data.power)

    def test_split(self):
        """Test consecutive splits and oversize requests"""
        data = generate_dataset(self.clip, 10, 0.01, 1.2, seed=0)
        train, val = data.split([7, 3])
        assert len(train) == 7 and len(val) == 3
        assert train.v_init[0] == data.v_init[0]
        with pytest.raises(DomainError):
            data.split([8, 3])

    def test_invalid_ranges(self):
        """Test argument validation"""
        with pytest.raises(DomainError):
            generate_dataset(self.clip, 10, 0.0, 1.0, seed=0)
        assert len(generate_dataset(self.clip, 0, 0.01, 1.0, seed=0)) == 0
