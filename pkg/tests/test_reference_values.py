"""
Tests against the reference constants in tests/fixtures/reference_values.json
"""

import json
import os
import sys
from pathlib import Path

import pytest

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from core.circuit_sim import ClippingRectifier, Topology, reference_circuit
from core.info_channel import Constellation, LinkSpec, dbm_to_watts, pathloss_gain

FIXTURES = Path(__file__).parent / "fixtures" / "reference_values.json"


@pytest.fixture(scope="module")
def reference():
    with open(FIXTURES, encoding="utf-8") as f:
        return json.load(f)


class TestReferenceValues:
    """Check the library against the documented reference constants"""

    def test_units(self, reference):
        """Test the link-budget conversions"""
        units = reference["units"]
        assert dbm_to_watts(units["ap_budget_dbm"]) == pytest.approx(units["ap_budget_watts"])
        assert dbm_to_watts(units["noise_dbm"]) == pytest.approx(units["noise_watts"])
        r_max = Constellation.from_peak_power_dbm(64, units["peak_power_dbm"]).r_max
        assert r_max == pytest.approx(units["r_max_sqrt_watts"])

    def test_matching_ratio(self, reference):
        """Test the transformation ratio of the -13 dBm half-wave design"""
        ref = reference["matching"]["halfwave_m13dbm"]
        spec = reference_circuit(Topology.HALF_WAVE, -13)
        ratio = spec.matching.transformation_ratio(ref["carrier_hz"], ref["antenna_ohm"])
        assert ratio == pytest.approx(ref["transformation_ratio"], abs=ref["ratio_tolerance"])

    def test_load_time_constant(self, reference):
        """Test that the load RC equals the symbol duration"""
        load = reference["load"]
        spec = reference_circuit()
        assert spec.load_resistance == load["resistance_ohm"]
        assert spec.time_constant == pytest.approx(load["time_constant_s"])
        assert spec.symbol_duration == pytest.approx(load["symbol_duration_s"])

    def test_clipping_saturation(self, reference):
        """Test the breakdown-limited steady state of both topologies"""
        clip = reference["clipping"]
        half = ClippingRectifier.from_spec(reference_circuit(Topology.HALF_WAVE))
        full = ClippingRectifier.from_spec(reference_circuit(Topology.FULL_WAVE_BRIDGE))
        assert half.saturation_voltage == pytest.approx(clip["halfwave_saturation_v"])
        assert full.saturation_voltage == pytest.approx(clip["fullwave_saturation_v"])

    def test_pathloss_ratio(self, reference):
        """Test the distance scaling of the pathloss"""
        ref = reference["pathloss"]
        near = pathloss_gain(LinkSpec(exponent=ref["exponent"], distance_m=ref["near_m"]))
        far = pathloss_gain(LinkSpec(exponent=ref["exponent"], distance_m=ref["far_m"]))
        assert near / far == pytest.approx(ref["gain_ratio"])
