"""
Tests for ScenarioManager
"""

import json
import math
import os
import shutil
import sys
import tempfile
from pathlib import Path
from unittest.mock import patch

import pytest

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from core.circuit_sim import Topology
from core.config_manager import ScenarioManager, load_scenario, preset_document
from core.error_handler import ConfigValidationError


class TestScenarioManager:
    """Test cases for ScenarioManager"""

    def setup_method(self):
        """Setup for each test method"""
        self.temp_dir = tempfile.mkdtemp()

    def teardown_method(self):
        """Cleanup after each test method"""
        if hasattr(self, 'temp_dir') and Path(self.temp_dir).exists():
            shutil.rmtree(self.temp_dir, ignore_errors=True)

    def write_scenario(self, document, name="scenario.json") -> Path:
        path = Path(self.temp_dir) / name
        path.write_text(json.dumps(document), encoding="utf-8")
        return path

    def test_defaults(self):
        """Test the reference scenario without a source"""
        manager = ScenarioManager()
        assert manager.get("name") == "mp"
        assert manager.get("constellation.size") == 64
        assert manager.get("solver.ap_budget_dbm") == 42.0
        assert manager.backend == "circuit"
        assert manager.seed == 0

    def test_get_missing_key(self):
        """Test dot-notation lookups of absent keys"""
        manager = ScenarioManager()
        assert manager.get("circuit.missing") is None
        assert manager.get("circuit.diode.missing", 7) == 7

    def test_bundled_scenario(self):
        """Test loading a bundled scenario by name"""
        manager = ScenarioManager("hp")
        assert manager.get("channel.eh.distance_m") == 2.0
        assert manager.get("quantizer.state_count") == 50

    def test_preset(self):
        """Test a regime, topology and design preset"""
        manager = ScenarioManager("lp:fullwave:0dbm")
        assert manager.get("channel.eh.distance_m") == 20.0
        spec = manager.circuit_spec()
        assert spec.topology == Topology.FULL_WAVE_BRIDGE
        assert spec.matching.capacitance_c2 is not None

    def test_unknown_preset(self):
        """Test rejection of unknown preset names"""
        with pytest.raises(ConfigValidationError) as info:
            ScenarioManager("xp")
        assert info.value.field_path == "scenario"
        with pytest.raises(ConfigValidationError):
            preset_document("mp:halfwave:5dbm")

    def test_scenario_file(self):
        """Test merging a file over the defaults"""
        path = self.write_scenario({"name": "custom", "constellation": {"size": 16}})
        manager = ScenarioManager(path)
        assert manager.get("constellation.size") == 16
        assert manager.get("constellation.peak_power_dbm") == 50.0

    def test_missing_and_malformed_files(self):
        """Test file errors"""
        with pytest.raises(ConfigValidationError):
            ScenarioManager(Path(self.temp_dir) / "absent.json")
        bad = Path(self.temp_dir) / "bad.json"
        bad.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigValidationError) as info:
            ScenarioManager(bad)
        assert "line 1" in info.value.message

    def test_unknown_section(self):
        """Test that extra top-level sections are rejected"""
        path = self.write_scenario({"plotting": {"dpi": 300}})
        with pytest.raises(ConfigValidationError) as info:
            ScenarioManager(path)
        assert info.value.field_path == "plotting"

    def test_unknown_nested_field(self):
        """Test that a misspelled key inside a section names its dotted path"""
        cases = [
            ({"solver": {"n_maxx": 3}}, "solver.n_maxx"),
            ({"circuit": {"diode": {"idealty": 1.1}}}, "circuit.diode.idealty"),
            ({"channel": {"eh": {"distance": 5.0}}}, "channel.eh.distance"),
            ({"channel": {"ir": 3.0}}, "channel.ir"),
        ]
        for document, field in cases:
            with pytest.raises(ConfigValidationError) as info:
                ScenarioManager(self.write_scenario(document))
            assert info.value.field_path == field

    def test_search_settings_reach_solver(self):
        """Test that the multiplier search settings flow into SolverConfig"""
        manager = ScenarioManager(None, ["solver.fw_search_iters=7",
                                         "solver.lambda_doublings=30"])
        config = manager.solver_config()
        assert config.fw_search_iters == 7
        assert config.lambda_doublings == 30
        with pytest.raises(ConfigValidationError) as info:
            ScenarioManager(None, ["solver.fw_search_iters=0"])
        assert info.value.field_path == "solver.fw_search_iters"

    def test_overrides(self):
        """Test dotted overrides with JSON-parsed values"""
        manager = ScenarioManager(None, ["solver.i_req_bits=0.5", "backend=clipping",
                                         "constellation.size=16"])
        assert manager.get("solver.i_req_bits") == 0.5
        assert manager.backend == "clipping"
        assert manager.get("constellation.size") == 16

    def test_override_errors(self):
        """Test malformed and unknown overrides"""
        with pytest.raises(ConfigValidationError):
            ScenarioManager(None, ["solver.i_req_bits"])
        with pytest.raises(ConfigValidationError) as info:
            ScenarioManager(None, ["solver.unknown=1"])
        assert info.value.field_path == "solver.unknown"

    def test_distance_below_reference(self):
        """Test that a receiver closer than d0 names the offending field"""
        with pytest.raises(ConfigValidationError) as info:
            ScenarioManager(None, ["channel.eh.distance_m=0.5"])
        assert info.value.field_path == "channel.eh.distance_m"

    def test_invalid_values(self):
        """Test type and range checks"""
        cases = {
            "constellation.size=0": "constellation.size",
            "quantizer.state_count=2.5": "quantizer.state_count",
            "circuit.diode.ideality=2.5": "circuit.diode.ideality",
            "channel.ir.fading=\"lognormal\"": "channel.ir.fading",
            "backend=\"spice\"": "backend",
            "solver.eps_shrink=1.5": "solver.eps_shrink",
        }
        for override, field in cases.items():
            with pytest.raises(ConfigValidationError) as info:
                ScenarioManager(None, [override])
            assert info.value.field_path == field

    def test_surrogate_backend_needs_models(self):
        """Test that the surrogate backend checks its model files"""
        with pytest.raises(ConfigValidationError) as info:
            load_scenario(None, ["backend=surrogate"])
        assert info.value.field_path == "surrogate.voltage_model"

    def test_typed_views(self):
        """Test the channel, constellation and solver views"""
        manager = ScenarioManager("mp")
        channel = manager.channel_spec()
        wavelength = 299_792_458.0 / 2.45e9
        assert channel.eh_gain == pytest.approx(wavelength / (4 * math.pi) / 10.0)
        assert channel.noise_variance == pytest.approx(1e-10)
        assert manager.constellation().r_max == pytest.approx(10.0)
        config = manager.solver_config(workers=2)
        assert config.ap_budget == pytest.approx(15.8489, rel=1e-4)
        assert config.workers == 2

    def test_hash_is_stable(self):
        """Test that equivalent scenarios hash alike"""
        a = ScenarioManager(None, ["solver.ap_budget_dbm=42"])
        b = ScenarioManager(None, ["solver.ap_budget_dbm=42.0", "output_dir=\"elsewhere\""])
        assert a.scenario_hash() == b.scenario_hash()
        c = ScenarioManager(None, ["solver.ap_budget_dbm=40"])
        assert a.scenario_hash() != c.scenario_hash()

    def test_model_hash_ignores_solver(self):
        """Test that solver settings do not invalidate a stored transition model"""
        a = ScenarioManager()
        b = ScenarioManager(None, ["solver.i_req_bits=1.5"])
        assert a.model_hash() == b.model_hash()
        assert a.scenario_hash() != b.scenario_hash()
        c = ScenarioManager(None, ["quantizer.state_count=20"])
        assert a.model_hash() != c.model_hash()

    def test_canonical_units(self):
        """Test that dBm fields are stored in watts in the canonical form"""
        canonical = ScenarioManager().canonical()
        assert "ap_budget_dbm" not in canonical["solver"]
        assert canonical["solver"]["ap_budget_w"] == pytest.approx(15.8489, rel=1e-4)
        assert canonical["circuit"]["design_dbm"] == -13.0

    def test_output_dir(self):
        """Test the output directory resolution order"""
        with patch.dict(os.environ, {"SWIPTMDP_OUTPUT_DIR": self.temp_dir}):
            manager = ScenarioManager("lp:fullwave:0dbm")
            assert manager.output_dir() == Path(self.temp_dir) / "lp_fullwave_0dbm"
            assert manager.output_dir("explicit") == Path("explicit")
