"""
SwiptMDP - Circuit Simulation
One-symbol simulation of the rectenna (matching network, rectifier, RC load),
the responder interface the MDP builder consumes, and surrogate training data.
"""

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Callable, List, Optional, Protocol, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import solve_ivp
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import brentq

from debug import log_debug, log_info, log_warning
from core.error_handler import DomainError, NumericalError
from utils.performance import performance_monitor

Array = NDArray[np.float64]

DATASET_HEADER = ("v_init", "r_E", "v_final", "p_avg")

_EXP_LIMIT = 40.0
_V_MAX_MARGIN = 1.02


class Topology(str, Enum):
    HALF_WAVE = "halfwave"
    FULL_WAVE_BRIDGE = "fullwave"


class SimulationBackend(str, Enum):
    ENVELOPE = "envelope"
    TRANSIENT = "transient"


@dataclass(frozen=True)
class DiodeParams:
    """Shockley diode with a steep reverse-breakdown branch.

    Below the knee the reverse leakage is reverse_leakage_ratio * Is, so an
    unexcited rectifier discharges through R_L alone.
    """
    saturation_current: float = 5e-6
    ideality: float = 1.05
    thermal_voltage: float = 25.85e-3
    series_resistance: float = 20.0
    breakdown_voltage: float = 2.0
    reverse_leakage_ratio: float = 1e-3
    provenance: str = "SMS7630 datasheet-level Shockley values"

    def __post_init__(self) -> None:
        for name in ("saturation_current", "thermal_voltage", "series_resistance",
                     "breakdown_voltage"):
            if getattr(self, name) <= 0:
                raise DomainError(f"diode {name} must be positive")
        if not 1.0 <= self.ideality <= 2.0:
            raise DomainError(f"diode ideality must lie in [1, 2], got {self.ideality}")
        if not 0.0 <= self.reverse_leakage_ratio <= 1.0:
            raise DomainError("reverse_leakage_ratio must lie in [0, 1]")

    def current(self, v: Array) -> Tuple[Array, Array]:
        """Junction current and conductance at junction voltage v."""
        n_vt = self.ideality * self.thermal_voltage
        x = v / n_vt
        e, de = _limited_exp(x)
        scale = np.where(x >= 0.0, 1.0, self.reverse_leakage_ratio)
        i = self.saturation_current * scale * (e - 1.0)
        g = self.saturation_current * scale * de / n_vt

        xb = -(v + self.breakdown_voltage) / self.thermal_voltage
        eb, deb = _limited_exp(xb)
        i = i - self.saturation_current * eb
        g = g + self.saturation_current * deb / self.thermal_voltage
        return i, g


@dataclass(frozen=True)
class MatchingNetworkSpec:
    """L-section matching network; C2 only in the 0 dBm designs."""
    inductance_l1: float
    capacitance_c1: float
    capacitance_c2: Optional[float] = None
    design_power: float = 50.1e-6

    def __post_init__(self) -> None:
        if self.inductance_l1 <= 0 or self.capacitance_c1 <= 0:
            raise DomainError("matching network L1 and C1 must be positive")
        if self.capacitance_c2 is not None and self.capacitance_c2 <= 0:
            raise DomainError("matching network C2 must be positive when present")
        if self.design_power <= 0:
            raise DomainError("matching network design power must be positive")

    def quality_factor(self, carrier_frequency: float, source_resistance: float) -> float:
        return 2.0 * math.pi * carrier_frequency * self.inductance_l1 / source_resistance

    def transformation_ratio(self, carrier_frequency: float,
                             source_resistance: float) -> float:
        """Voltage ratio of the equivalent lossless transformer, sqrt(1 + Q^2)."""
        q = self.quality_factor(carrier_frequency, source_resistance)
        return math.sqrt(1.0 + q * q)

    def bandwidth(self, carrier_frequency: float, source_resistance: float) -> float:
        """Matched L-section bandwidth f_c / (Q / 2)."""
        return 2.0 * carrier_frequency / self.quality_factor(carrier_frequency,
                                                             source_resistance)


@dataclass(frozen=True)
class CircuitSpec:
    topology: Topology
    diode: DiodeParams
    matching: MatchingNetworkSpec
    antenna_resistance: float = 50.0
    load_capacitance: float = 1e-9
    load_resistance: float = 10e3
    carrier_frequency: float = 2.45e9
    symbol_duration: float = 10e-6

    def __post_init__(self) -> None:
        for name in ("antenna_resistance", "load_capacitance", "load_resistance",
                     "carrier_frequency", "symbol_duration"):
            if getattr(self, name) <= 0:
                raise DomainError(f"circuit {name} must be positive")

    @property
    def diode_count(self) -> int:
        return 1 if self.topology == Topology.HALF_WAVE else 4

    @property
    def time_constant(self) -> float:
        return self.load_resistance * self.load_capacitance

    @property
    def voltage_gain(self) -> float:
        return self.matching.transformation_ratio(self.carrier_frequency,
                                                  self.antenna_resistance)

    @property
    def thevenin_resistance(self) -> float:
        """Source resistance seen by the rectifier, plus the conducting diodes' series resistance."""
        conducting = 1 if self.topology == Topology.HALF_WAVE else 2
        return (self.voltage_gain ** 2 * self.antenna_resistance
                + conducting * self.diode.series_resistance)


@dataclass(frozen=True)
class SymbolResponse:
    final_voltage: float
    average_power: float


@dataclass
class ClampDiagnostics:
    """Counts of queries that fell outside a backend's tabulated domain; thread-safe."""
    clamped: int = 0
    total: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def record(self, clamped: int, total: int) -> None:
        with self._lock:
            self.clamped += int(clamped)
            self.total += int(total)


class CircuitResponder(Protocol):
    """(f_v(v, r_E), P'(v, r_E)) for arrays of initial voltages and received amplitudes."""

    def respond(self, v: Array, r_e: Array) -> Tuple[Array, Array]: ...


class ResponderMixin:
    """Single-output accessors on top of respond()."""

    def respond(self, v: Array, r_e: Array) -> Tuple[Array, Array]:
        raise NotImplementedError

    def final_voltage(self, v: Array, r_e: Array) -> Array:
        return self.respond(v, r_e)[0]

    def average_power(self, v: Array, r_e: Array) -> Array:
        return self.respond(v, r_e)[1]


# Reference matching designs, keyed by (topology, design power in dBm).
MATCHING_DESIGNS = {
    (Topology.HALF_WAVE, -13): MatchingNetworkSpec(26.7e-9, 0.73e-12, None, 50.1e-6),
    (Topology.HALF_WAVE, 0): MatchingNetworkSpec(9.62e-9, 1.41e-12, 0.375e-12, 1e-3),
    (Topology.FULL_WAVE_BRIDGE, -13): MatchingNetworkSpec(23.2e-9, 0.3e-12, None, 50.1e-6),
    (Topology.FULL_WAVE_BRIDGE, 0): MatchingNetworkSpec(11.1e-9, 2.72e-12, 0.3e-12, 1e-3),
}


def reference_circuit(topology: Topology = Topology.HALF_WAVE, design_dbm: int = -13,
                      symbol_duration: float = 10e-6) -> CircuitSpec:
    """Reference rectenna with the given topology and matching design."""
    try:
        matching = MATCHING_DESIGNS[(topology, design_dbm)]
    except KeyError:
        raise DomainError(f"no matching design for {topology.value} at {design_dbm} dBm")
    return CircuitSpec(topology=topology, diode=DiodeParams(), matching=matching,
                       symbol_duration=symbol_duration)


def source_peak_voltage(r_e, antenna_resistance: float):
    """Thevenin peak voltage whose available power is r_E^2: sqrt(8 Rs r_E^2)."""
    r = np.asarray(r_e, dtype=np.float64)
    if np.any(r < 0) or not np.all(np.isfinite(r)):
        raise DomainError("received amplitude must be finite and non-negative")
    if antenna_resistance <= 0:
        raise DomainError("antenna resistance must be positive")
    v = np.sqrt(8.0 * antenna_resistance) * r
    return float(v) if v.ndim == 0 else v


def _limited_exp(x: Array) -> Tuple[Array, Array]:
    """exp(x) with a linear continuation above _EXP_LIMIT, and its derivative."""
    clipped = np.minimum(x, _EXP_LIMIT)
    e = np.exp(clipped)
    value = e * (1.0 + np.maximum(x - _EXP_LIMIT, 0.0))
    return value, e


def _solve_increasing(fun: Callable[[Array], Tuple[Array, Array]], lo: Array, hi: Array,
                      x0: Array, xtol: float = 1e-12, max_iter: int = 200,
                      what: str = "diode") -> Array:
    """Safeguarded Newton for elementwise increasing g(x) = 0 bracketed by [lo, hi]."""
    lo = np.array(lo, dtype=np.float64, copy=True)
    hi = np.array(hi, dtype=np.float64, copy=True)
    x = np.clip(np.broadcast_to(x0, lo.shape).astype(np.float64), lo, hi)
    for _ in range(max_iter):
        g, dg = fun(x)
        lo = np.where(g < 0.0, x, lo)
        hi = np.where(g > 0.0, x, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_new = x - g / dg
        bad = ~np.isfinite(x_new) | (x_new <= lo) | (x_new >= hi)
        x_new = np.where(bad, 0.5 * (lo + hi), x_new)
        done = (np.abs(x_new - x) <= xtol) | (g == 0.0) | (hi - lo <= xtol)
        x = np.where(g == 0.0, x, x_new)
        if np.all(done):
            return x
    worst = float(np.max(np.abs(fun(x)[0])))
    raise NumericalError(f"{what} Newton iteration did not converge",
                         {"max_residual": worst, "iterations": max_iter})


class RectifierKernel:
    """Quasi-static rectifier: load current for an instantaneous source voltage and load voltage."""

    def __init__(self, spec: CircuitSpec, resistance: Optional[float] = None):
        self.spec = spec
        self.diode = spec.diode
        self.resistance = spec.thevenin_resistance if resistance is None else resistance
        self.voltage_gain = spec.voltage_gain

    def thevenin_amplitude(self, r_e):
        return self.voltage_gain * source_peak_voltage(r_e, self.spec.antenna_resistance)

    def load_current(self, v_src: Array, v_load: Array) -> Array:
        return self.currents(v_src, v_load)[1]

    def currents(self, v_src: Array, v_load: Array) -> Tuple[Array, Array]:
        """(current drawn from the source, current delivered to the load)."""
        v_src, v_load = np.broadcast_arrays(np.asarray(v_src, dtype=np.float64),
                                            np.asarray(v_load, dtype=np.float64))
        if self.spec.topology == Topology.HALF_WAVE:
            i = self._half_wave(v_src, v_load)
            return i, i
        return self._bridge(v_src, v_load)

    def _half_wave(self, v_src: Array, v_load: Array) -> Array:
        drive = v_src - v_load
        r = self.resistance

        def residual(v_d: Array) -> Tuple[Array, Array]:
            i, g = self.diode.current(v_d)
            return v_d + r * i - drive, 1.0 + r * g

        bv = self.diode.breakdown_voltage
        lo = np.minimum(drive, 0.0) - bv - 1.5
        hi = np.maximum(drive, 0.0) + 1.5
        v_d = _solve_increasing(residual, lo, hi, np.minimum(drive, 0.25))
        return self.diode.current(v_d)[0]

    def _bridge(self, v_src: Array, v_load: Array) -> Tuple[Array, Array]:
        """Four-diode bridge: D1 a->p, D2 b->p, D3 0->a, D4 0->b, load between p and 0."""
        r = self.resistance
        diode = self.diode
        bv = diode.breakdown_voltage
        node_lo = np.full(v_src.shape, -1.5)
        node_hi = v_load + 1.5
        state = {"a": 0.5 * v_src + 0.5 * v_load, "b": -0.5 * v_src + 0.5 * v_load}

        def node_voltage(key: str, injected: Array) -> Tuple[Array, Array]:
            def kcl(v: Array) -> Tuple[Array, Array]:
                i_up, g_up = diode.current(v - v_load)
                i_dn, g_dn = diode.current(-v)
                return i_up - i_dn - injected, g_up + g_dn
            v = _solve_increasing(kcl, node_lo, node_hi, state[key])
            state[key] = v
            return v, kcl(v)[1]

        def source_loop(i_s: Array) -> Tuple[Array, Array]:
            v_a, g_a = node_voltage("a", i_s)
            v_b, g_b = node_voltage("b", -i_s)
            return r * i_s + (v_a - v_b) - v_src, r + 1.0 / g_a + 1.0 / g_b

        span = (np.abs(v_src) + v_load + 2.0 * bv + 6.0) / r
        i_s = _solve_increasing(source_loop, -span, span, v_src / r, xtol=1e-10 / r,
                                what="bridge source-loop")
        return i_s, (diode.current(state["a"] - v_load)[0]
                     + diode.current(state["b"] - v_load)[0])


class EnvelopeSimulator(ResponderMixin):
    """Cycle-averaged current map on a 64x64 (V_env, v_L) grid and the slow load ODE."""

    def __init__(self, spec: CircuitSpec, r_e_max: float, grid_size: int = 64,
                 phase_samples: int = 128, atol: float = 1e-6):
        if r_e_max <= 0:
            raise DomainError("r_e_max must be positive")
        self.spec = spec
        self.kernel = RectifierKernel(spec)
        self.r_e_max = r_e_max
        self.atol = atol
        self.diagnostics = ClampDiagnostics()

        self.env_max = float(self.kernel.thevenin_amplitude(r_e_max))
        self.v_top = max(1.05 * self.env_max, 1e-3)
        self.env_grid = np.linspace(0.0, self.env_max, grid_size)
        self.v_grid = np.linspace(0.0, self.v_top, grid_size)

        with performance_monitor.time_operation("envelope_current_map"):
            current = self._cycle_average(phase_samples)
        self.current_map = current
        self._interp = RegularGridInterpolator((self.env_grid, self.v_grid), current,
                                               method="linear")
        log_debug(f"Envelope map built: V_env <= {self.env_max:.4f} V, "
                  f"v_L <= {self.v_top:.4f} V", "CIRCUIT")

    def _cycle_average(self, phase_samples: int) -> Array:
        env, v_l = np.meshgrid(self.env_grid, self.v_grid, indexing="ij")
        if self.spec.topology == Topology.HALF_WAVE:
            theta = (np.arange(phase_samples) + 0.5) * 2.0 * math.pi / phase_samples
        else:
            # The bridge current is even in the source voltage; half a period suffices.
            half = phase_samples // 2
            theta = (np.arange(half) + 0.5) * math.pi / half
        v_src = env[..., None] * np.cos(theta)[None, None, :]
        i = self.kernel.load_current(v_src, np.broadcast_to(v_l[..., None], v_src.shape))
        return np.asarray(i.mean(axis=-1))

    def average_current(self, env: Array, v: Array) -> Array:
        env_c = np.clip(env, 0.0, self.env_max)
        v_c = np.clip(v, 0.0, self.v_top)
        return np.asarray(self._interp(np.column_stack([env_c, v_c])))

    def steady_state_voltage(self, r_e: float) -> float:
        """Fixed point of the slow ODE at a constant amplitude."""
        env = float(self.kernel.thevenin_amplitude(r_e))
        r_l = self.spec.load_resistance

        def balance(v: float) -> float:
            return float(self.average_current(np.array([env]), np.array([v]))[0]) - v / r_l

        if balance(0.0) <= 0.0:
            return 0.0
        if balance(self.v_top) >= 0.0:
            return self.v_top
        return float(brentq(balance, 0.0, self.v_top, xtol=1e-9))

    def simulate_batch(self, v0: Array, r_e: Array) -> Tuple[Array, Array]:
        """Final voltages and symbol-averaged powers for arrays of (v0, r_E)."""
        v0 = np.asarray(v0, dtype=np.float64).ravel()
        r_e = np.asarray(r_e, dtype=np.float64).ravel()
        if v0.size != r_e.size:
            raise DomainError("v0 and r_e must have the same length")
        if v0.size == 0:
            return np.zeros(0), np.zeros(0)
        if np.any(v0 < 0) or np.any(r_e < 0):
            raise DomainError("initial voltage and amplitude must be non-negative")

        outside = int(np.sum(r_e > self.r_e_max * (1 + 1e-9)) + np.sum(v0 > self.v_top))
        if outside:
            self.diagnostics.record(outside, v0.size)
            log_warning(f"{outside} envelope queries outside the tabulated map were clamped",
                        "CIRCUIT")

        spec = self.spec
        env = np.asarray(self.kernel.thevenin_amplitude(r_e))
        n = v0.size
        cap = spec.load_capacitance
        r_l = spec.load_resistance
        period = spec.symbol_duration

        def rhs(_t: float, y: Array) -> Array:
            v = y[:n]
            dv = (self.average_current(env, v) - v / r_l) / cap
            return np.concatenate([dv, v * v / period])

        y0 = np.concatenate([v0, np.zeros(n)])
        with performance_monitor.time_operation("envelope_ode", {"batch": n}):
            sol = solve_ivp(rhs, (0.0, period), y0, method="RK45", rtol=1e-6,
                            atol=self.atol, t_eval=[period])
        if not sol.success:
            raise NumericalError(f"envelope ODE failed: {sol.message}",
                                 {"batch": n, "symbol_duration": period})
        final = np.clip(sol.y[:n, -1], 0.0, None)
        power = np.clip(sol.y[n:, -1], 0.0, None) / r_l
        return final, power

    def respond(self, v: Array, r_e: Array) -> Tuple[Array, Array]:
        return self.simulate_batch(v, r_e)


class TransientSimulator:
    """Carrier-resolved trapezoidal integration of the matching network and the rectifier.

    States are the L1 current, the voltage on the shunt capacitor at the rectifier
    input and the load voltage. The carrier is scaled down to cycles_per_symbol periods
    per symbol and L1 and C1 scale up by the same factor, so reactances at the carrier
    are unchanged. C1 is the capacitance that resonates L1 into R_s (1 + Q^2); junction
    and package capacitances are not modeled.
    """

    def __init__(self, spec: CircuitSpec, cycles_per_symbol: int = 100,
                 steps_per_cycle: int = 200, derivative_step: float = 1e-7):
        if steps_per_cycle < 200:
            raise DomainError("transient backend needs at least 200 steps per carrier cycle")
        self.spec = spec
        self.cycles = cycles_per_symbol
        self.steps_per_cycle = steps_per_cycle
        self.derivative_step = derivative_step
        self.carrier = min(spec.carrier_frequency, cycles_per_symbol / spec.symbol_duration)

        scale = spec.carrier_frequency / self.carrier
        r_s = spec.antenna_resistance
        q = spec.matching.quality_factor(spec.carrier_frequency, r_s)
        omega_c = 2.0 * math.pi * spec.carrier_frequency
        self.inductance = spec.matching.inductance_l1 * scale
        self.shunt_capacitance = q / (omega_c * r_s * (1.0 + q * q)) * scale
        conducting = 1 if spec.topology == Topology.HALF_WAVE else 2
        self.kernel = RectifierKernel(spec, conducting * spec.diode.series_resistance)

    def _slopes(self, src: Array, y: Array) -> Tuple[Array, Array, Array]:
        """d/dt of (i_L1, v_C1, v_L) plus the rectifier currents' partials."""
        spec = self.spec
        i_l, v_x, v_l = y
        delta = self.derivative_step
        i_src, i_load = self.kernel.currents(v_x, v_l)
        i_src_x, i_load_x = self.kernel.currents(v_x + delta, v_l)
        i_src_l, i_load_l = self.kernel.currents(v_x, v_l + delta)
        f = np.stack([(src - spec.antenna_resistance * i_l - v_x) / self.inductance,
                      (i_l - i_src) / self.shunt_capacitance,
                      (i_load - v_l / spec.load_resistance) / spec.load_capacitance])
        partials = np.stack([(i_src_x - i_src) / delta, (i_src_l - i_src) / delta,
                             (i_load_x - i_load) / delta, (i_load_l - i_load) / delta])
        return f, partials, i_load

    def _jacobian(self, partials: Array, h: float) -> Array:
        """I - h/2 df/dy for each batch element, shape (n, 3, 3)."""
        spec = self.spec
        n = partials.shape[1]
        l1, c1, c_l = self.inductance, self.shunt_capacitance, spec.load_capacitance
        dfdy = np.zeros((n, 3, 3))
        dfdy[:, 0, 0] = -spec.antenna_resistance / l1
        dfdy[:, 0, 1] = -1.0 / l1
        dfdy[:, 1, 0] = 1.0 / c1
        dfdy[:, 1, 1] = -partials[0] / c1
        dfdy[:, 1, 2] = -partials[1] / c1
        dfdy[:, 2, 1] = partials[2] / c_l
        dfdy[:, 2, 2] = (partials[3] - 1.0 / spec.load_resistance) / c_l
        return np.eye(3)[None, :, :] - 0.5 * h * dfdy

    def simulate_batch(self, v0: Array, r_e: Array) -> Tuple[Array, Array]:
        spec = self.spec
        v = np.asarray(v0, dtype=np.float64).ravel()
        r_e = np.asarray(r_e, dtype=np.float64).ravel()
        if v.size != r_e.size:
            raise DomainError("v0 and r_e must have the same length")
        if np.any(v < 0) or np.any(r_e < 0):
            raise DomainError("initial voltage and amplitude must be non-negative")
        amplitude = np.asarray(source_peak_voltage(r_e, spec.antenna_resistance))
        r_l = spec.load_resistance
        n_steps = int(round(spec.symbol_duration * self.carrier)) * self.steps_per_cycle
        n_steps = max(n_steps, self.steps_per_cycle)
        h = spec.symbol_duration / n_steps
        omega = 2.0 * math.pi * self.carrier

        y = np.stack([np.zeros_like(v), np.zeros_like(v), v.copy()])
        f_prev, _, _ = self._slopes(amplitude, y)
        energy = np.zeros_like(v)
        with performance_monitor.time_operation("transient_symbol", {"steps": n_steps}):
            for step in range(n_steps):
                src = amplitude * math.cos(omega * (step + 1) * h)
                y_next = y + h * f_prev
                for _ in range(30):
                    f_next, partials, _ = self._slopes(src, y_next)
                    resid = y_next - y - 0.5 * h * (f_prev + f_next)
                    update = np.linalg.solve(self._jacobian(partials, h), resid.T[..., None])
                    update = update[..., 0].T
                    y_next = y_next - update
                    if (np.max(np.abs(update[1:])) < 1e-10 and
                            np.max(np.abs(update[0])) * spec.antenna_resistance < 1e-10):
                        break
                else:
                    raise NumericalError("transient Newton iteration did not converge",
                                         {"step": step, "residual": float(np.max(np.abs(resid)))})
                f_next, _, _ = self._slopes(src, y_next)
                energy += 0.5 * h * (y[2] * y[2] + y_next[2] * y_next[2]) / r_l
                y, f_prev = y_next, f_next
        return np.clip(y[2], 0.0, None), energy / spec.symbol_duration


# Amplitude ceiling for single-symbol calls without one; covers every bundled scenario.
DEFAULT_R_E_CEILING = 0.1


@lru_cache(maxsize=8)
def envelope_simulator(spec: CircuitSpec, r_e_max: float) -> EnvelopeSimulator:
    """Shared envelope simulator per (circuit, amplitude ceiling)."""
    return EnvelopeSimulator(spec, r_e_max)


def simulate_symbol(spec: CircuitSpec, v0: float, r_e: float,
                    backend: SimulationBackend = SimulationBackend.ENVELOPE,
                    r_e_max: Optional[float] = None) -> SymbolResponse:
    """Final load voltage f_v(v0, r_E) and symbol-averaged harvested power."""
    if v0 < 0 or r_e < 0:
        raise DomainError("initial voltage and received amplitude must be non-negative")
    if backend == SimulationBackend.TRANSIENT:
        final, power = TransientSimulator(spec).simulate_batch(np.array([v0]), np.array([r_e]))
    else:
        ceiling = r_e_max if r_e_max is not None else max(r_e, DEFAULT_R_E_CEILING)
        final, power = envelope_simulator(spec, float(ceiling)).simulate_batch(
            np.array([v0]), np.array([r_e]))
    return SymbolResponse(final_voltage=float(final[0]), average_power=float(power[0]))


def calibrate_v_max(spec: CircuitSpec, r_e_max: float, amplitude_points: int = 24) -> float:
    """Quantizer ceiling: 1.02 x the largest steady-state voltage up to the peak amplitude."""
    sim = envelope_simulator(spec, float(r_e_max))
    amplitudes = np.linspace(0.0, r_e_max, amplitude_points)
    steady = max(sim.steady_state_voltage(float(r)) for r in amplitudes)
    v_max = _V_MAX_MARGIN * max(steady, 1e-6)
    log_info(f"V_L^max calibrated to {v_max:.6f} V (r_E max {r_e_max:.4e})", "CIRCUIT")
    return v_max


@dataclass
class SimulatorResponder(ResponderMixin):
    """Envelope simulator exposed through the responder interface."""
    spec: CircuitSpec
    r_e_max: float
    chunk: int = 4096

    def respond(self, v: Array, r_e: Array) -> Tuple[Array, Array]:
        sim = envelope_simulator(self.spec, float(self.r_e_max))
        v = np.asarray(v, dtype=np.float64).ravel()
        r_e = np.asarray(r_e, dtype=np.float64).ravel()
        finals, powers = [], []
        for start in range(0, v.size, self.chunk):
            f, p = sim.simulate_batch(v[start:start + self.chunk], r_e[start:start + self.chunk])
            finals.append(f)
            powers.append(p)
        if not finals:
            return np.zeros(0), np.zeros(0)
        return np.concatenate(finals), np.concatenate(powers)


@dataclass
class ClippingRectifier(ResponderMixin):
    """Closed-form baseline: linear-then-clipped steady state with RC relaxation."""
    spec: CircuitSpec
    saturation_voltage: float
    conversion_gain: float

    @classmethod
    def from_spec(cls, spec: CircuitSpec) -> "ClippingRectifier":
        bv = spec.diode.breakdown_voltage
        saturation = 0.5 * bv if spec.topology == Topology.HALF_WAVE else bv
        gain = spec.voltage_gain * spec.load_resistance / (
            spec.load_resistance + spec.thevenin_resistance)
        return cls(spec, saturation, gain)

    def steady_state(self, r_e: Array) -> Array:
        peak = np.asarray(source_peak_voltage(r_e, self.spec.antenna_resistance))
        return np.minimum(self.conversion_gain * peak, self.saturation_voltage)

    def respond(self, v: Array, r_e: Array) -> Tuple[Array, Array]:
        v = np.asarray(v, dtype=np.float64)
        a = self.steady_state(np.asarray(r_e, dtype=np.float64))
        b = v - a
        tau = self.spec.time_constant
        period = self.spec.symbol_duration
        decay = math.exp(-period / tau)
        final = a + b * decay
        integral = (a * a * period + 2.0 * a * b * tau * (1.0 - decay)
                    + 0.5 * b * b * tau * (1.0 - decay * decay))
        return final, integral / (self.spec.load_resistance * period)


@dataclass
class Dataset:
    """Simulated 4-tuples (P', f_v, v_init, r_E) as parallel arrays."""
    power: Array = field(default_factory=lambda: np.zeros(0))
    final_voltage: Array = field(default_factory=lambda: np.zeros(0))
    v_init: Array = field(default_factory=lambda: np.zeros(0))
    r_e: Array = field(default_factory=lambda: np.zeros(0))

    def __len__(self) -> int:
        return int(self.v_init.size)

    def tuples(self) -> List[Tuple[float, float, float, float]]:
        return [(float(p), float(f), float(v), float(r)) for p, f, v, r in
                zip(self.power, self.final_voltage, self.v_init, self.r_e)]

    def subset(self, index: Sequence[int]) -> "Dataset":
        idx = np.asarray(index, dtype=int)
        return Dataset(self.power[idx], self.final_voltage[idx], self.v_init[idx],
                       self.r_e[idx])

    def split(self, sizes: Sequence[int]) -> List["Dataset"]:
        """Consecutive splits, e.g. (train, validation, test)."""
        if sum(sizes) > len(self):
            raise DomainError(f"split sizes {list(sizes)} exceed dataset size {len(self)}")
        parts, start = [], 0
        for size in sizes:
            parts.append(self.subset(range(start, start + size)))
            start += size
        return parts

    def csv_rows(self) -> List[Tuple[float, float, float, float]]:
        return [(float(v), float(r), float(f), float(p)) for p, f, v, r in
                zip(self.power, self.final_voltage, self.v_init, self.r_e)]

    @classmethod
    def from_csv_rows(cls, rows: Sequence[Sequence[float]]) -> "Dataset":
        arr = np.asarray(rows, dtype=np.float64).reshape(-1, 4)
        return cls(power=arr[:, 3], final_voltage=arr[:, 2], v_init=arr[:, 0], r_e=arr[:, 1])

    @staticmethod
    def concatenate(parts: Sequence["Dataset"]) -> "Dataset":
        if not parts:
            return Dataset()
        return Dataset(*(np.concatenate([getattr(p, name) for p in parts])
                         for name in ("power", "final_voltage", "v_init", "r_e")))


def generate_dataset(responder: CircuitResponder, n_samples: int, r_e_max: float,
                     v_max: float, seed: int, workers: int = 1,
                     chunk_size: int = 1000) -> Dataset:
    """Uniform (v_init, r_E) samples pushed through a responder.

    Samples are drawn per fixed-size chunk from spawned seed streams, so the
    result does not depend on the worker count.
    """
    if n_samples < 0:
        raise DomainError("n_samples must be non-negative")
    if r_e_max <= 0 or v_max <= 0:
        raise DomainError("amplitude and voltage ranges must be positive")
    if n_samples == 0:
        return Dataset()

    chunks = [min(chunk_size, n_samples - s) for s in range(0, n_samples, chunk_size)]
    streams = np.random.SeedSequence(seed).spawn(len(chunks))

    def run(job: Tuple[int, np.random.SeedSequence]) -> Dataset:
        size, stream = job
        rng = np.random.default_rng(stream)
        r_e = rng.uniform(0.0, r_e_max, size)
        v0 = rng.uniform(0.0, v_max, size)
        final, power = responder.respond(v0, r_e)
        return Dataset(np.asarray(power), np.asarray(final), v0, r_e)

    with performance_monitor.time_operation("generate_dataset", {"samples": n_samples}):
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(run, zip(chunks, streams)))
        else:
            parts = [run(job) for job in zip(chunks, streams)]
    log_info(f"Generated {n_samples} circuit samples", "CIRCUIT")
    return Dataset.concatenate(parts)
