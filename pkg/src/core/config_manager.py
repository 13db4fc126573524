"""
SwiptMDP - Scenario Manager
Loads scenario documents (file or preset), merges them over the reference
defaults, applies dotted overrides, validates every field and materializes the
typed objects the numerical modules consume.
"""

import copy
import hashlib
import json
import math
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

from debug import log_debug, log_info
from core.circuit_sim import (
    MATCHING_DESIGNS,
    CircuitSpec,
    DiodeParams,
    MatchingNetworkSpec,
    Topology,
)
from core.error_handler import ConfigValidationError, SwiptError
from core.info_channel import (
    ChannelSpec,
    Constellation,
    FadingModel,
    LinkSpec,
    dbm_to_watts,
)
from core.optimizer import SolverConfig
from core.path_config import path_config

BACKENDS = ("circuit", "surrogate", "table", "clipping")
REGIMES = {"lp": 20.0, "mp": 10.0, "hp": 2.0}
DESIGNS = {"m13dbm": -13, "0dbm": 0}

DEFAULT_SCENARIO: Dict[str, Any] = {
    "name": "mp",
    "circuit": {
        "topology": "halfwave",
        "design_dbm": -13,
        "antenna_resistance_ohm": 50.0,
        "load_capacitance_f": 1e-9,
        "load_resistance_ohm": 10e3,
        "carrier_frequency_hz": 2.45e9,
        "symbol_duration_s": 10e-6,
        "diode": {
            "saturation_current_a": 5e-6,
            "ideality": 1.05,
            "thermal_voltage_v": 25.85e-3,
            "series_resistance_ohm": 20.0,
            "breakdown_voltage_v": 2.0,
            "reverse_leakage_ratio": 1e-3,
        },
        "matching": {"l1_h": None, "c1_f": None, "c2_f": None},
    },
    "channel": {
        "noise_variance_dbm": -70.0,
        "reference_distance_m": 1.0,
        "fading_seed": 0,
        "ir": {"exponent": 3.0, "distance_m": 40.0, "fading": "none", "k_factor": 1.0},
        "eh": {"exponent": 2.0, "distance_m": 10.0, "fading": "none", "k_factor": 1.0},
    },
    "constellation": {"size": 64, "peak_power_dbm": 50.0, "r_max": None},
    "quantizer": {"state_count": 50, "subsamples": 32, "v_max_v": None},
    "solver": {
        "i_req_bits": 0.0,
        "ap_budget_dbm": 42.0,
        "eps_tol_initial": 0.5,
        "eps_shrink": 0.5,
        "m_max": 15,
        "n_max": 10,
        "inner_term_eps": 1e-7,
        "outer_term_eps": 1e-7,
        "fw_max_iters": 500,
        "fw_gap_tol": 1e-7,
        "lambda_bisect_tol": 1e-6,
        "lambda_doublings": 60,
        "fw_search_iters": 25,
    },
    "surrogate": {
        "hidden_layers": 5,
        "hidden_width": 15,
        "epochs": 300,
        "batch_size": 64,
        "learning_rate": 2e-3,
        "train_samples": 2000,
        "validation_samples": 500,
        "test_samples": 500,
        "voltage_model": None,
        "power_model": None,
    },
    "table": {"v_points": 33, "r_points": 33},
    "backend": "circuit",
    "seed": 0,
    "output_dir": None,
}


MODEL_SECTIONS = ("circuit", "channel", "constellation", "quantizer", "surrogate", "table",
                  "backend")


def _digest(document: Dict[str, Any]) -> str:
    text = json.dumps(document, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _deep_merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def preset_document(name: str) -> Dict[str, Any]:
    """Scenario for a preset name '<regime>[:<topology>[:<design>]]'."""
    parts = name.split(":")
    regime = parts[0]
    topology = parts[1] if len(parts) > 1 else "halfwave"
    design = parts[2] if len(parts) > 2 else "m13dbm"
    if regime not in REGIMES or len(parts) > 3:
        raise ConfigValidationError(f"unknown preset '{name}'", "scenario")
    if topology not in (t.value for t in Topology):
        raise ConfigValidationError(f"unknown topology '{topology}'", "circuit.topology")
    if design not in DESIGNS:
        raise ConfigValidationError(f"unknown matching design '{design}'", "circuit.design_dbm")
    return {
        "name": name,
        "circuit": {"topology": topology, "design_dbm": DESIGNS[design]},
        "channel": {"eh": {"distance_m": REGIMES[regime]}},
    }


def _unknown_key(node: Dict[str, Any], reference: Dict[str, Any],
                 prefix: str = "") -> Optional[str]:
    """Dotted path of the first key in node that reference does not define."""
    for key in sorted(node):
        path = f"{prefix}{key}"
        if key not in reference:
            return path
        if isinstance(reference[key], dict):
            if not isinstance(node[key], dict):
                return path
            nested = _unknown_key(node[key], reference[key], f"{path}.")
            if nested:
                return nested
    return None


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


class ScenarioManager:
    """Scenario document with dotted-path access, validation and typed views."""

    def __init__(self, source: Optional[Union[str, Path]] = None,
                 overrides: Sequence[str] = (), validate: bool = True):
        self.source = str(source) if source is not None else "default"
        self.data: Dict[str, Any] = copy.deepcopy(DEFAULT_SCENARIO)
        if source is not None:
            self.data = _deep_merge(self.data, self._load_source(source))
        for override in overrides:
            self.apply_override(override)
        self._channel: Optional[ChannelSpec] = None
        if validate:
            self.validate()
        log_debug(f"Scenario '{self.get('name')}' loaded from {self.source}", "CONFIG")

    def _load_source(self, source: Union[str, Path]) -> Dict[str, Any]:
        path = Path(source)
        if path.suffix == ".json" or path.exists():
            if not path.exists():
                raise ConfigValidationError(f"scenario file not found: {path}", "scenario")
            try:
                with open(path, "r", encoding="utf-8") as f:
                    document = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigValidationError(f"invalid JSON at line {e.lineno}: {e.msg}",
                                            "scenario")
            if not isinstance(document, dict):
                raise ConfigValidationError("scenario must be a JSON object", "scenario")
            return document
        bundled = path_config.scenarios_dir / f"{source}.json"
        if bundled.exists():
            return self._load_source(bundled)
        return preset_document(str(source))

    def get(self, key_path: str, default: Any = None) -> Any:
        """Get a value using dot notation (e.g., 'solver.i_req_bits')."""
        value: Any = self.data
        for key in key_path.split("."):
            if isinstance(value, dict) and key in value:
                value = value[key]
            else:
                return default
        return value

    def set(self, key_path: str, value: Any) -> None:
        """Set a value using dot notation; intermediate sections must exist."""
        keys = key_path.split(".")
        current = self.data
        for depth, key in enumerate(keys[:-1]):
            if not isinstance(current.get(key), dict):
                raise ConfigValidationError("no such section", ".".join(keys[:depth + 1]))
            current = current[key]
        if keys[-1] not in current:
            raise ConfigValidationError("unknown field", key_path)
        current[keys[-1]] = value
        self._channel = None

    def apply_override(self, override: str) -> None:
        """Apply a 'dotted.path=value' override; values parse as JSON when possible."""
        if "=" not in override:
            raise ConfigValidationError(f"override '{override}' is not key=value", "--set")
        key, raw = override.split("=", 1)
        self.set(key.strip(), _parse_value(raw.strip()))
        log_info(f"Override {key.strip()} = {raw.strip()}", "CONFIG")

    # Validation

    def _number(self, key_path: str, minimum: Optional[float] = None, strict: bool = False,
                integer: bool = False, maximum: Optional[float] = None) -> float:
        value = self.get(key_path)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigValidationError(f"expected a number, got {value!r}", key_path)
        if not math.isfinite(value):
            raise ConfigValidationError("must be finite", key_path)
        if integer and int(value) != value:
            raise ConfigValidationError(f"expected an integer, got {value!r}", key_path)
        if minimum is not None and (value <= minimum if strict else value < minimum):
            bound = ">" if strict else ">="
            raise ConfigValidationError(f"must be {bound} {minimum}, got {value}", key_path)
        if maximum is not None and value > maximum:
            raise ConfigValidationError(f"must be <= {maximum}, got {value}", key_path)
        return float(value)

    def _choice(self, key_path: str, options: Sequence[str]) -> str:
        value = self.get(key_path)
        if value not in options:
            raise ConfigValidationError(f"must be one of {list(options)}, got {value!r}",
                                        key_path)
        return str(value)

    def validate(self) -> None:
        """Check every field; the first failure raises with its dotted path."""
        unknown = _unknown_key(self.data, DEFAULT_SCENARIO)
        if unknown:
            kind = "unknown section" if "." not in unknown else "unknown field"
            raise ConfigValidationError(kind, unknown)

        self._choice("circuit.topology", [t.value for t in Topology])
        for key in ("antenna_resistance_ohm", "load_capacitance_f", "load_resistance_ohm",
                    "carrier_frequency_hz", "symbol_duration_s"):
            self._number(f"circuit.{key}", 0.0, strict=True)
        for key in ("saturation_current_a", "thermal_voltage_v", "series_resistance_ohm",
                    "breakdown_voltage_v"):
            self._number(f"circuit.diode.{key}", 0.0, strict=True)
        self._number("circuit.diode.ideality", 1.0, maximum=2.0)
        self._number("circuit.diode.reverse_leakage_ratio", 0.0, maximum=1.0)
        if self.get("circuit.matching.l1_h") is None:
            design = self._number("circuit.design_dbm", integer=True)
            if (Topology(self.get("circuit.topology")), int(design)) not in MATCHING_DESIGNS:
                raise ConfigValidationError("no reference matching design; use -13 or 0",
                                            "circuit.design_dbm")
        else:
            self._number("circuit.matching.l1_h", 0.0, strict=True)
            self._number("circuit.matching.c1_f", 0.0, strict=True)

        self._number("channel.noise_variance_dbm")
        d0 = self._number("channel.reference_distance_m", 0.0, strict=True)
        self._number("channel.fading_seed", 0.0, integer=True)
        for link in ("ir", "eh"):
            self._number(f"channel.{link}.exponent", 0.0, strict=True)
            distance = self._number(f"channel.{link}.distance_m", 0.0, strict=True)
            if distance < d0:
                raise ConfigValidationError(
                    f"distance {distance} m is below the reference distance {d0} m",
                    f"channel.{link}.distance_m")
            self._choice(f"channel.{link}.fading", [f.value for f in FadingModel])
            self._number(f"channel.{link}.k_factor", 0.0)

        self._number("constellation.size", 1.0, integer=True)
        peak = self._number("constellation.peak_power_dbm")
        r_max = self.get("constellation.r_max")
        if r_max is not None:
            expected = 10.0 ** ((peak - 30.0) / 20.0)
            if abs(float(r_max) - expected) > 1e-9 * expected:
                raise ConfigValidationError(
                    f"r_max {r_max} does not match the peak power ({expected:.6g})",
                    "constellation.r_max")

        self._number("quantizer.state_count", 1.0, integer=True)
        self._number("quantizer.subsamples", 1.0, integer=True)
        if self.get("quantizer.v_max_v") is not None:
            self._number("quantizer.v_max_v", 0.0, strict=True)

        for key in ("i_req_bits", "eps_tol_initial", "eps_shrink", "inner_term_eps",
                    "outer_term_eps", "fw_gap_tol", "lambda_bisect_tol", "ap_budget_dbm",
                    "m_max", "n_max", "fw_max_iters", "lambda_doublings", "fw_search_iters"):
            self._number(f"solver.{key}")
        self.solver_config()

        for key in ("hidden_layers", "hidden_width", "epochs", "batch_size", "train_samples",
                    "validation_samples", "test_samples"):
            self._number(f"surrogate.{key}", 1.0, integer=True)
        self._number("surrogate.learning_rate", 0.0, strict=True)
        self._number("table.v_points", 2.0, integer=True)
        self._number("table.r_points", 2.0, integer=True)

        backend = self._choice("backend", BACKENDS)
        if backend == "surrogate":
            for key in ("voltage_model", "power_model"):
                model_path = self.get(f"surrogate.{key}")
                if not model_path or not Path(model_path).exists():
                    raise ConfigValidationError(f"surrogate model file not found: {model_path}",
                                                f"surrogate.{key}")
        self._number("seed", 0.0, integer=True)

    # Typed views

    def circuit_spec(self) -> CircuitSpec:
        c = self.data["circuit"]
        topology = Topology(c["topology"])
        d = c["diode"]
        diode = DiodeParams(
            saturation_current=float(d["saturation_current_a"]),
            ideality=float(d["ideality"]),
            thermal_voltage=float(d["thermal_voltage_v"]),
            series_resistance=float(d["series_resistance_ohm"]),
            breakdown_voltage=float(d["breakdown_voltage_v"]),
            reverse_leakage_ratio=float(d["reverse_leakage_ratio"]),
        )
        m = c["matching"]
        if m.get("l1_h") is not None:
            matching = MatchingNetworkSpec(float(m["l1_h"]), float(m["c1_f"]),
                                           None if m.get("c2_f") is None else float(m["c2_f"]),
                                           dbm_to_watts(float(c["design_dbm"])))
        else:
            matching = MATCHING_DESIGNS[(topology, int(c["design_dbm"]))]
        return CircuitSpec(
            topology=topology, diode=diode, matching=matching,
            antenna_resistance=float(c["antenna_resistance_ohm"]),
            load_capacitance=float(c["load_capacitance_f"]),
            load_resistance=float(c["load_resistance_ohm"]),
            carrier_frequency=float(c["carrier_frequency_hz"]),
            symbol_duration=float(c["symbol_duration_s"]),
        )

    def link_specs(self) -> Tuple[LinkSpec, LinkSpec]:
        ch = self.data["channel"]
        carrier = float(self.data["circuit"]["carrier_frequency_hz"])

        def link(section: Dict[str, Any]) -> LinkSpec:
            return LinkSpec(exponent=float(section["exponent"]),
                            distance_m=float(section["distance_m"]),
                            reference_distance_m=float(ch["reference_distance_m"]),
                            carrier_frequency_hz=carrier,
                            fading=FadingModel(section["fading"]),
                            k_factor=float(section["k_factor"]))
        return link(ch["ir"]), link(ch["eh"])

    def channel_spec(self) -> ChannelSpec:
        if self._channel is None:
            ir, eh = self.link_specs()
            self._channel = ChannelSpec.from_links(
                ir, eh, dbm_to_watts(float(self.get("channel.noise_variance_dbm"))),
                seed=int(self.get("channel.fading_seed")))
        return self._channel

    def constellation(self) -> Constellation:
        return Constellation.from_peak_power_dbm(int(self.get("constellation.size")),
                                                 float(self.get("constellation.peak_power_dbm")))

    def solver_config(self, workers: Optional[int] = None) -> SolverConfig:
        s = self.data["solver"]
        try:
            return SolverConfig(
                i_req_bits=float(s["i_req_bits"]),
                ap_budget=dbm_to_watts(float(s["ap_budget_dbm"])),
                eps_tol_initial=float(s["eps_tol_initial"]),
                eps_shrink=float(s["eps_shrink"]),
                m_max=int(s["m_max"]),
                n_max=int(s["n_max"]),
                inner_term_eps=float(s["inner_term_eps"]),
                outer_term_eps=float(s["outer_term_eps"]),
                fw_max_iters=int(s["fw_max_iters"]),
                fw_gap_tol=float(s["fw_gap_tol"]),
                lambda_bisect_tol=float(s["lambda_bisect_tol"]),
                lambda_doublings=int(s["lambda_doublings"]),
                fw_search_iters=int(s["fw_search_iters"]),
                workers=workers or path_config.worker_count,
            )
        except ConfigValidationError as e:
            if e.field_path == "solver.ap_budget":
                raise ConfigValidationError("must give a positive budget", "solver.ap_budget_dbm")
            raise

    @property
    def backend(self) -> str:
        return str(self.data["backend"])

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    def output_dir(self, override: Optional[Union[str, Path]] = None) -> Path:
        if override:
            return Path(override)
        if self.data.get("output_dir"):
            return Path(self.data["output_dir"])
        return path_config.output_root / str(self.data.get("name", "scenario")).replace(":", "_")

    # Provenance

    def canonical(self) -> Dict[str, Any]:
        """SI-normalized copy: every '<name>_dbm' field becomes '<name>_w' in watts."""
        def normalize(node: Any) -> Any:
            if isinstance(node, dict):
                out = {}
                for key, value in node.items():
                    if key.endswith("_dbm") and isinstance(value, (int, float)) \
                            and key != "design_dbm":
                        out[key[:-4] + "_w"] = dbm_to_watts(float(value))
                    else:
                        out[key] = normalize(value)
                return out
            if isinstance(node, int) and not isinstance(node, bool):
                return float(node)
            return node
        doc = normalize(self.data)
        doc.pop("output_dir", None)
        return doc

    def scenario_hash(self) -> str:
        return _digest(self.canonical())

    def model_hash(self) -> str:
        """Hash of the sections a transition model depends on; solver settings excluded."""
        canonical = self.canonical()
        return _digest({key: canonical.get(key) for key in MODEL_SECTIONS})


def load_scenario(source: Optional[Union[str, Path]],
                  overrides: Sequence[str] = ()) -> ScenarioManager:
    """ScenarioManager with any library-level domain errors reported as validation errors."""
    try:
        return ScenarioManager(source, overrides)
    except ConfigValidationError:
        raise
    except SwiptError as e:
        raise ConfigValidationError(e.message, "scenario")
