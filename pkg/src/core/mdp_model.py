"""
SwiptMDP - Harvester Markov Model
Voltage quantization, transition probabilities and rewards built from a circuit
responder, steady-state balance solutions and a Monte-Carlo rollout check.
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import NDArray

from debug import log_debug, log_info, log_warning
from core.circuit_sim import CircuitResponder
from core.error_handler import (
    ConfigValidationError,
    DomainError,
    ErgodicityError,
    NumericalError,
)
from core.info_channel import Constellation, check_pdf
from utils.file_utils import FileUtils
from utils.performance import performance_monitor

Array = NDArray[np.float64]
Policy = Union[Sequence[float], Array]

FORMAT_VERSION = 1
STOCHASTIC_TOL = 1e-9


@dataclass(frozen=True)
class VoltageQuantizer:
    """S_Xi equal-width load-voltage states on [0, v_max]."""
    state_count: int
    v_max: float

    def __post_init__(self) -> None:
        if self.state_count < 1:
            raise DomainError("state count must be at least 1")
        if not self.v_max > 0:
            raise DomainError("v_max must be positive")

    @property
    def boundaries(self) -> Array:
        return self.v_max * np.arange(self.state_count + 1) / self.state_count

    @property
    def midpoints(self) -> Array:
        b = self.boundaries
        return 0.5 * (b[:-1] + b[1:])

    def subsamples(self, count: int) -> Array:
        """count midpoint subsamples of every state interval, shape (S_Xi, count)."""
        if count < 1:
            raise DomainError("subsample count must be at least 1")
        b = self.boundaries
        frac = (np.arange(count) + 0.5) / count
        return b[:-1, None] + (b[1:] - b[:-1])[:, None] * frac[None, :]

    def index_of(self, v: Array) -> Tuple[NDArray[np.int64], int]:
        """State index of each voltage (half-open bins, top boundary closed) and the out-of-range count."""
        v = np.asarray(v, dtype=np.float64)
        outside = int(np.sum((v < 0.0) | (v > self.v_max)))
        idx = np.searchsorted(self.boundaries, v, side="right") - 1
        return np.clip(idx, 0, self.state_count - 1), outside


@dataclass
class JointDistribution:
    """pi[i, k]: probability of state i together with amplitude r_k."""
    pi: Array

    def __post_init__(self) -> None:
        self.pi = np.asarray(self.pi, dtype=np.float64)
        if self.pi.ndim != 2:
            raise DomainError("joint distribution must be a (states, amplitudes) matrix")
        if np.any(self.pi < -1e-12) or abs(self.pi.sum() - 1.0) > 1e-6:
            raise DomainError("joint distribution must be nonnegative with total mass 1")

    @property
    def gamma(self) -> Array:
        return self.pi.sum(axis=1)

    @property
    def amplitude_marginal(self) -> Array:
        return self.pi.sum(axis=0)

    def policy(self) -> Array:
        """Per-state conditional amplitude pdfs; uniform where a state has no mass."""
        gamma = self.gamma
        out = np.full_like(self.pi, 1.0 / self.pi.shape[1])
        live = gamma > 0
        out[live] = self.pi[live] / gamma[live, None]
        return out


@dataclass
class StateDistribution:
    gamma: Array

    def __post_init__(self) -> None:
        self.gamma = np.asarray(self.gamma, dtype=np.float64)
        if np.any(self.gamma < -1e-12) or abs(self.gamma.sum() - 1.0) > 1e-6:
            raise DomainError("state distribution must be nonnegative and sum to 1")


@dataclass
class TransitionModel:
    """rho[i, j, k] = P(next state j | state i, amplitude r_k); reward[i, k] in watts."""
    rho: Array
    reward: Array
    quantizer: VoltageQuantizer
    amplitudes: Array
    eh_gain: float
    subsamples: int = 32
    clamped_outputs: int = 0

    def __post_init__(self) -> None:
        s_xi, s = self.quantizer.state_count, len(self.amplitudes)
        if self.rho.shape != (s_xi, s_xi, s):
            raise DomainError(f"rho has shape {self.rho.shape}, expected {(s_xi, s_xi, s)}")
        if self.reward.shape != (s_xi, s):
            raise DomainError(f"reward has shape {self.reward.shape}, expected {(s_xi, s)}")
        if np.any(self.rho < 0) or np.max(np.abs(self.rho.sum(axis=1) - 1.0)) > STOCHASTIC_TOL:
            raise DomainError("every rho[i, :, k] must be a probability vector")
        if np.any(self.reward < 0):
            raise DomainError("rewards must be nonnegative")

    @property
    def state_count(self) -> int:
        return self.quantizer.state_count

    @property
    def amplitude_count(self) -> int:
        return int(self.amplitudes.size)

    def policy_matrix(self, policy: Policy) -> Array:
        """Broadcast a shared pdf or validate a per-state pdf set to shape (S_Xi, S)."""
        arr = np.asarray(policy, dtype=np.float64)
        if arr.ndim == 1:
            check_pdf(arr, self.amplitude_count)
            return np.tile(arr, (self.state_count, 1))
        if arr.shape != (self.state_count, self.amplitude_count):
            raise DomainError(f"policy shape {arr.shape} does not match the model")
        for row in arr:
            check_pdf(row, self.amplitude_count)
        return arr

    def state_transition(self, policy: Policy) -> Array:
        """P[i, j] = sum_k policy[i, k] rho[i, j, k]."""
        delta = self.policy_matrix(policy)
        return np.einsum("ijk,ik->ij", self.rho, delta)

    def shared_transition(self, p: Array) -> Array:
        return np.einsum("ijk,k->ij", self.rho, np.asarray(p, dtype=np.float64))

    def to_dict(self) -> Dict[str, Any]:
        s_xi, s = self.state_count, self.amplitude_count
        return {
            "format_version": FORMAT_VERSION,
            "dimensions": {"states": s_xi, "destinations": s_xi, "amplitudes": s},
            "rho": self.rho.ravel().tolist(),
            "reward": self.reward.ravel().tolist(),
            "quantizer": {"state_count": s_xi, "v_max": self.quantizer.v_max},
            "amplitudes": self.amplitudes.tolist(),
            "eh_gain": self.eh_gain,
            "subsamples": self.subsamples,
            "clamped_outputs": self.clamped_outputs,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TransitionModel":
        if data.get("format_version") != FORMAT_VERSION:
            raise ConfigValidationError(
                f"unsupported transition model version {data.get('format_version')!r}",
                "format_version")
        try:
            dims = data["dimensions"]
            s_xi, s = int(dims["states"]), int(dims["amplitudes"])
            quantizer = VoltageQuantizer(int(data["quantizer"]["state_count"]),
                                         float(data["quantizer"]["v_max"]))
            return cls(
                rho=np.asarray(data["rho"], dtype=np.float64).reshape(s_xi, s_xi, s),
                reward=np.asarray(data["reward"], dtype=np.float64).reshape(s_xi, s),
                quantizer=quantizer,
                amplitudes=np.asarray(data["amplitudes"], dtype=np.float64),
                eh_gain=float(data["eh_gain"]),
                subsamples=int(data.get("subsamples", 32)),
                clamped_outputs=int(data.get("clamped_outputs", 0)),
            )
        except (KeyError, ValueError, TypeError) as e:
            raise ConfigValidationError(f"malformed transition model: {e}", "rho")

    def save(self, path: Path, extra: Optional[Dict[str, Any]] = None) -> bool:
        payload = self.to_dict()
        if extra:
            payload.update(extra)
        return FileUtils.write_json(path, payload)

    @classmethod
    def load(cls, path: Path) -> "TransitionModel":
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigValidationError(f"cannot read transition model {path}: {e}", "model")
        return cls.from_dict(data)


def build_transition_model(responder: CircuitResponder, quantizer: VoltageQuantizer,
                           constellation: Union[Constellation, Array], eh_gain: float,
                           subsamples: int = 32, workers: int = 1) -> TransitionModel:
    """Riemann approximation of the transition integral with midpoint subsamples.

    One responder call per amplitude; the calls are independent, so the result
    does not depend on the worker count.
    """
    if eh_gain < 0:
        raise DomainError("EH channel gain must be nonnegative")
    amplitudes = (constellation.amplitudes if isinstance(constellation, Constellation)
                  else np.asarray(constellation, dtype=np.float64))
    s_xi, s = quantizer.state_count, amplitudes.size
    v_sub = quantizer.subsamples(subsamples)
    v_query = np.concatenate([v_sub.ravel(), quantizer.midpoints])
    n_sub = v_sub.size

    def column(k: int) -> Tuple[Array, Array, int]:
        r_e = np.full(v_query.size, eh_gain * amplitudes[k])
        final, power = responder.respond(v_query, r_e)
        final = np.asarray(final, dtype=np.float64)
        dest, outside = quantizer.index_of(final[:n_sub])
        dest = dest.reshape(s_xi, subsamples)
        counts = np.zeros((s_xi, s_xi))
        np.add.at(counts, (np.repeat(np.arange(s_xi), subsamples), dest.ravel()), 1.0)
        reward = np.clip(np.asarray(power, dtype=np.float64)[n_sub:], 0.0, None)
        return counts / subsamples, reward, outside

    with performance_monitor.time_operation("build_transition_model",
                                            {"states": s_xi, "amplitudes": s}):
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                columns = list(pool.map(column, range(s)))
        else:
            columns = [column(k) for k in range(s)]

    rho = np.stack([c[0] for c in columns], axis=2)
    reward = np.stack([c[1] for c in columns], axis=1)
    clamped = sum(c[2] for c in columns)
    if clamped:
        log_warning(f"{clamped} responder outputs fell outside [0, v_max] and were "
                    "assigned to the boundary state", "MDP")
    log_info(f"Transition model built: {s_xi} states, {s} amplitudes, M={subsamples}", "MDP")
    return TransitionModel(rho, reward, quantizer, amplitudes, eh_gain, subsamples, clamped)


def _stationary(transition: Array, residual_tol: float, what: str) -> Array:
    """Least-squares solution of [(I - P^T); 1^T] gamma = e."""
    n = transition.shape[0]
    balance = np.eye(n) - transition.T
    if n > 1 and np.linalg.matrix_rank(balance) < n - 1:
        raise ErgodicityError(f"{what}: balance equations have more than one redundancy",
                              {"rank": int(np.linalg.matrix_rank(balance)), "states": n})
    system = np.vstack([balance, np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    gamma, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    residual = float(np.max(np.abs(system @ gamma - rhs)))
    if residual > residual_tol:
        raise ErgodicityError(f"{what}: balance residual {residual:.3e} exceeds {residual_tol:.0e}",
                              {"residual": residual})
    if np.min(gamma) < -1e-8:
        raise NumericalError(f"{what}: stationary vector has negative entries",
                             {"min_entry": float(np.min(gamma))})
    gamma = np.clip(gamma, 0.0, None)
    return gamma / gamma.sum()


def steady_state_joint(model: TransitionModel, policy: Policy) -> JointDistribution:
    """Steady-state joint pdf pi_i(r_k) = gamma_i delta_i(r_k) under a policy."""
    delta = model.policy_matrix(policy)
    gamma = _stationary(model.state_transition(delta), 1e-9, "steady_state_joint")
    return JointDistribution(gamma[:, None] * delta)


def fit_states_pseudoinverse(model: TransitionModel, p: Array) -> StateDistribution:
    """State marginal consistent with a shared amplitude pdf, by pseudoinverse."""
    p = check_pdf(np.asarray(p, dtype=np.float64), model.amplitude_count)
    gamma = _stationary(model.shared_transition(p), 1e-6, "fit_states_pseudoinverse")
    return StateDistribution(gamma)


def average_power(model: TransitionModel, pi: Union[JointDistribution, Array]) -> float:
    joint = pi.pi if isinstance(pi, JointDistribution) else np.asarray(pi, dtype=np.float64)
    return float(np.sum(joint * model.reward))


def balance_residual(model: TransitionModel, pi: Union[JointDistribution, Array]) -> float:
    """L-inf violation of gamma_j = sum_{i,k} pi_i(r_k) rho_ijk."""
    joint = pi.pi if isinstance(pi, JointDistribution) else np.asarray(pi, dtype=np.float64)
    inflow = np.einsum("ik,ijk->j", joint, model.rho)
    return float(np.max(np.abs(inflow - joint.sum(axis=1))))


@dataclass
class RolloutResult:
    power: float
    histogram: Array
    standard_error: float
    steps: int
    state_trace: Array = field(default_factory=lambda: np.zeros(0, dtype=int), repr=False)


def monte_carlo_rollout(model: TransitionModel, policy: Policy, steps: int, seed: int,
                        burn_in: int = 500, initial_state: int = 0,
                        batches: int = 20) -> RolloutResult:
    """Time-average harvested power of a simulated chain after a burn-in."""
    if steps < 1:
        raise DomainError("rollout needs at least one step")
    if not 0 <= initial_state < model.state_count:
        raise DomainError(f"initial state {initial_state} outside the model")
    delta = model.policy_matrix(policy)
    policy_cdf = np.cumsum(delta, axis=1)
    rho_cdf = np.cumsum(model.rho, axis=1)
    rng = np.random.default_rng(seed)
    total = burn_in + steps
    u_amp = rng.random(total)
    u_next = rng.random(total)

    rewards = np.empty(steps)
    states = np.empty(steps, dtype=int)
    state = initial_state
    last_k, last_j = model.amplitude_count - 1, model.state_count - 1
    for t in range(total):
        k = min(int(np.searchsorted(policy_cdf[state], u_amp[t], side="right")), last_k)
        if t >= burn_in:
            rewards[t - burn_in] = model.reward[state, k]
            states[t - burn_in] = state
        state = min(int(np.searchsorted(rho_cdf[state, :, k], u_next[t], side="right")), last_j)

    histogram = np.bincount(states, minlength=model.state_count) / steps
    n_batches = min(batches, steps)
    if n_batches >= 2:
        means = np.array([chunk.mean() for chunk in np.array_split(rewards, n_batches)])
        stderr = float(means.std(ddof=1) / np.sqrt(n_batches))
    else:
        stderr = 0.0
    log_debug(f"Rollout of {steps} steps: power {rewards.mean():.4e} W ± {stderr:.1e}", "MDP")
    return RolloutResult(float(rewards.mean()), histogram, stderr, steps, states)
