"""
SwiptMDP - Input Distribution Optimizer
Conditional-gradient solver over polytopes, the MI-multiplier bisection, the three
input-design schemes and the rate-power sweep.

Scheme I optimizes the joint state/amplitude pdf (EH state known at the
transmitter), Scheme II a shared amplitude pdf by alternating optimization with
relaxed balance constraints, Scheme III a memoryless amplitude pdf.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import minimize_scalar

from debug import log_debug, log_info, log_warning
from core.error_handler import (
    ConfigValidationError,
    DomainError,
    ErgodicityError,
    InfeasibleError,
)
from core.info_channel import AmplitudeChannel, dbm_to_watts
from core.lp_oracle import LinearProgram, LPStatus, lp_oracle
from core.mdp_model import (
    TransitionModel,
    balance_residual,
    fit_states_pseudoinverse,
    steady_state_joint,
)
from utils.performance import performance_monitor

Array = NDArray[np.float64]

SWEEP_HEADER = ("i_req_bits", "achieved_mi_bits", "power_watts", "bitrate_bps", "scheme",
                "status")

MI_SLACK = 1e-6


class Status(str, Enum):
    OPTIMAL = "Optimal"
    LIMIT_POINT = "LimitPoint"
    INFEASIBLE = "Infeasible"


class Scheme(str, Enum):
    KNOWN_STATE = "i"
    UNKNOWN_STATE = "ii"
    MEMORYLESS = "iii"


@dataclass
class SolverConfig:
    """Requirements and tolerances shared by the three schemes."""
    i_req_bits: float = 0.0
    ap_budget: float = field(default_factory=lambda: dbm_to_watts(42.0))
    eps_tol_initial: float = 0.5
    eps_shrink: float = 0.5
    m_max: int = 15
    n_max: int = 10
    inner_term_eps: float = 1e-7
    outer_term_eps: float = 1e-7
    fw_max_iters: int = 500
    fw_gap_tol: float = 1e-7
    lambda_bisect_tol: float = 1e-6
    lambda_doublings: int = 60
    fw_search_iters: int = 25
    slackness_tol: float = 1e-4
    workers: int = 1

    def __post_init__(self) -> None:
        checks = [
            ("i_req_bits", self.i_req_bits >= 0),
            ("ap_budget", self.ap_budget > 0),
            ("eps_tol_initial", self.eps_tol_initial > 0),
            ("eps_shrink", 0.0 < self.eps_shrink < 1.0),
            ("m_max", self.m_max >= 1),
            ("n_max", self.n_max >= 1),
            ("inner_term_eps", self.inner_term_eps > 0),
            ("outer_term_eps", self.outer_term_eps > 0),
            ("fw_max_iters", self.fw_max_iters >= 1),
            ("fw_gap_tol", self.fw_gap_tol > 0),
            ("lambda_bisect_tol", self.lambda_bisect_tol > 0),
            ("lambda_doublings", self.lambda_doublings >= 1),
            ("fw_search_iters", self.fw_search_iters >= 1),
            ("slackness_tol", self.slackness_tol > 0),
            ("workers", self.workers >= 1),
        ]
        for name, ok in checks:
            if not ok:
                raise ConfigValidationError(f"invalid value {getattr(self, name)!r}",
                                            f"solver.{name}")


@dataclass
class ConcaveSolution:
    x: Array
    value: float
    gap: float
    iterations: int
    status: Status
    active: List[Array] = field(default_factory=list)
    weights: List[float] = field(default_factory=list)


@dataclass
class SolveResult:
    scheme: Scheme
    status: Status
    i_req: float
    achieved_power: float = 0.0
    achieved_mi: float = 0.0
    joint: Optional[Array] = None
    gamma: Optional[Array] = None
    pdf: Optional[Array] = None
    lambda_star: float = 0.0
    residuals: Dict[str, float] = field(default_factory=dict)
    trace: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        def listed(arr: Optional[Array]) -> Optional[List[Any]]:
            return None if arr is None else np.asarray(arr).tolist()
        return {
            "scheme": self.scheme.value,
            "status": self.status.value,
            "i_req_bits": self.i_req,
            "achieved_power_watts": self.achieved_power,
            "achieved_mi_bits": self.achieved_mi,
            "lambda_star": self.lambda_star,
            "joint": listed(self.joint),
            "gamma": listed(self.gamma),
            "pdf": listed(self.pdf),
            "residuals": dict(sorted(self.residuals.items())),
            "trace": self.trace,
        }


@dataclass
class RatePowerPoint:
    i_req: float
    achieved_mi: float
    power: float
    bitrate: float
    scheme: Scheme
    status: Status

    def csv_row(self) -> Tuple[float, float, float, float, str, str]:
        return (float(self.i_req), float(self.achieved_mi), float(self.power),
                float(self.bitrate), self.scheme.value, self.status.value)


def _line_search(objective: Callable[[Array], float], x: Array, d: Array, t_max: float,
                 f0: float) -> Tuple[float, float]:
    """Best step in [0, t_max] along d for a concave objective; endpoints included."""
    res = minimize_scalar(lambda t: -objective(x + t * d), bounds=(0.0, t_max),
                          method="bounded", options={"xatol": 1e-8 * t_max})
    candidates = [(f0, 0.0), (-float(res.fun), float(res.x)),
                  (objective(x + t_max * d), t_max)]
    best_value, best_t = candidates[0]
    for value, t in candidates[1:]:
        if value >= best_value:
            best_value, best_t = value, t
    return best_t, best_value


def solve_concave_over_polytope(objective: Callable[[Array], float],
                                gradient: Callable[[Array], Array],
                                polytope: LinearProgram, x0: Optional[Array] = None,
                                max_iters: int = 500, gap_tol: float = 1e-7,
                                active0: Optional[Tuple[List[Array], List[float]]] = None
                                ) -> ConcaveSolution:
    """Away-step conditional gradient with exact line search; returns the best iterate.

    active0 resumes from a previous solve's vertex set over the same polytope and
    takes precedence over x0.
    """
    if active0 is not None and active0[0]:
        active = [np.array(a, dtype=np.float64) for a in active0[0]]
        weights = [float(w) for w in active0[1]]
        x = np.sum([w * a for w, a in zip(weights, active)], axis=0)
    else:
        if x0 is None:
            start = polytope.maximize(np.zeros(polytope.n_vars))
            if start.status != LPStatus.OPTIMAL or start.x is None:
                raise InfeasibleError("polytope is empty")
            x0 = start.x
        x = np.array(x0, dtype=np.float64)
        active = [x.copy()]
        weights = [1.0]
    f = objective(x)
    best_x, best_f = x.copy(), f
    gap = math.inf
    iterations = max_iters

    for it in range(max_iters):
        g = gradient(x)
        vertex = polytope.maximize(g).x
        assert vertex is not None
        gap = float(g @ (vertex - x))
        if gap <= gap_tol * max(abs(f), 1e-300) or gap <= 0.0:
            return ConcaveSolution(best_x, best_f, max(gap, 0.0), it, Status.OPTIMAL,
                                   active, weights)

        scores = [float(g @ a) for a in active]
        away_idx = int(np.argmin(scores))
        away_gap = float(g @ x) - scores[away_idx]
        if gap >= away_gap or len(active) == 1:
            d = vertex - x
            t_max = 1.0
            t, f_new = _line_search(objective, x, d, t_max, f)
            if t >= t_max:
                active, weights = [vertex.copy()], [1.0]
            elif t > 0.0:
                weights = [w * (1.0 - t) for w in weights]
                for idx, a in enumerate(active):
                    if np.array_equal(a, vertex):
                        weights[idx] += t
                        break
                else:
                    active.append(vertex.copy())
                    weights.append(t)
        else:
            w_a = weights[away_idx]
            d = x - active[away_idx]
            t_max = w_a / (1.0 - w_a)
            t, f_new = _line_search(objective, x, d, t_max, f)
            weights = [w * (1.0 + t) for w in weights]
            if t >= t_max:
                del active[away_idx]
                del weights[away_idx]
            else:
                weights[away_idx] -= t

        if t <= 0.0:
            log_debug(f"Conditional gradient stalled at iteration {it} (gap {gap:.3e})",
                      "OPTIMIZER")
            iterations = it
            break
        x = x + t * d
        f = f_new
        if f >= best_f:
            best_x, best_f = x.copy(), f
    return ConcaveSolution(best_x, best_f, gap, iterations, Status.LIMIT_POINT, active, weights)


@dataclass
class _Scalarized:
    x: Array
    lam: float
    mi: float
    status: Status
    trace: List[Dict[str, Any]]


def _maximize_with_mi(power: Array, mi_fn: Callable[[Array], float],
                      mi_grad: Callable[[Array], Array], polytope: LinearProgram,
                      i_req: float, config: SolverConfig, x0: Optional[Array] = None,
                      lam0: Optional[float] = None) -> _Scalarized:
    """max power.x s.t. mi(x) >= i_req over a polytope, by a search on the MI multiplier.

    Multiplier trials run at most fw_search_iters conditional-gradient steps and resume
    from the previous trial's vertex set. Only the accepted multiplier is solved to
    fw_max_iters. lam0 seeds the bracket, x0 the first positive-multiplier trial.
    """
    trace: List[Dict[str, Any]] = []
    resume: Optional[Tuple[List[Array], List[float]]] = None

    def solve(lam: float, iters: int,
              start: Optional[Array] = None) -> Tuple[Array, float, ConcaveSolution]:
        nonlocal resume
        sol = solve_concave_over_polytope(
            lambda x: float(power @ x) + lam * mi_fn(x),
            lambda x: power + lam * mi_grad(x),
            polytope, start, iters, config.fw_gap_tol, active0=resume)
        resume = (sol.active, sol.weights)
        mi = mi_fn(sol.x)
        trace.append({"lambda": lam, "mi_bits": mi, "power_watts": float(power @ sol.x),
                      "fw_iterations": sol.iterations, "gap": sol.gap,
                      "refined": iters == config.fw_max_iters})
        return sol.x, mi, sol

    x_lo, mi_lo, sol = solve(0.0, config.fw_search_iters)
    if mi_lo >= i_req - MI_SLACK:
        return _Scalarized(x_lo, 0.0, mi_lo, sol.status, trace)

    lam_lo = 0.0
    lam_hi = lam0 if lam0 is not None and lam0 > 0.0 else \
        max(float(np.max(np.abs(power))), 1e-30)
    if x0 is not None:
        resume = None
    x_hi, mi_hi, sol = solve(lam_hi, config.fw_search_iters, x0)
    hi_active = (sol.active, sol.weights)
    if lam0 is not None and mi_hi >= i_req:
        # Warm start already feasible: halve down to a tight lower end.
        for _ in range(config.lambda_doublings):
            x, mi, sol = solve(0.5 * lam_hi, config.fw_search_iters)
            if mi < i_req:
                lam_lo, x_lo, mi_lo = 0.5 * lam_hi, x, mi
                break
            lam_hi, x_hi, mi_hi = 0.5 * lam_hi, x, mi
            hi_active = (sol.active, sol.weights)
    for _ in range(config.lambda_doublings):
        if mi_hi >= i_req:
            break
        lam_lo, x_lo, mi_lo = lam_hi, x_hi, mi_hi
        lam_hi *= 2.0
        x_hi, mi_hi, sol = solve(lam_hi, config.fw_search_iters)
        hi_active = (sol.active, sol.weights)
    else:
        raise InfeasibleError(f"MI requirement {i_req:.6g} bits not reached by the multiplier "
                              "bracket", {"best_mi_bits": mi_lo})

    # Regula falsi on mi(lambda) - i_req; two moves on one side force a bisection.
    last_side, repeats = 0, 0
    for _ in range(config.lambda_doublings):
        width = lam_hi - lam_lo
        if width <= config.lambda_bisect_tol * lam_hi or mi_hi - i_req <= config.slackness_tol:
            break
        if repeats >= 2 or mi_hi <= mi_lo:
            lam = lam_lo + 0.5 * width
        else:
            lam = lam_lo + width * (i_req - mi_lo) / (mi_hi - mi_lo)
            lam = min(max(lam, lam_lo + 0.05 * width), lam_hi - 0.05 * width)
        x, mi, sol = solve(lam, config.fw_search_iters)
        side = 1 if mi >= i_req else -1
        if side > 0:
            lam_hi, x_hi, mi_hi = lam, x, mi
            hi_active = (sol.active, sol.weights)
        else:
            lam_lo, x_lo, mi_lo = lam, x, mi
        repeats = repeats + 1 if side == last_side else 1
        last_side = side

    resume = hi_active
    for _ in range(config.lambda_doublings):
        x_fin, mi_fin, sol = solve(lam_hi, config.fw_max_iters)
        if mi_fin >= i_req - MI_SLACK:
            break
        lam_lo, x_lo, mi_lo = lam_hi, x_fin, mi_fin
        lam_hi *= 2.0
    else:
        raise InfeasibleError(f"MI requirement {i_req:.6g} bits lost when refining the "
                              "multiplier", {"best_mi_bits": mi_lo})
    x_hi, mi_hi = x_fin, mi_fin

    # Blend toward the lower-multiplier solution until the MI constraint is tight.
    x_best, mi_best = x_hi, mi_hi
    if mi_hi > i_req and float(power @ x_lo) > float(power @ x_hi):
        lo_t, hi_t = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo_t + hi_t)
            candidate = (1.0 - mid) * x_hi + mid * x_lo
            mi_c = mi_fn(candidate)
            if mi_c >= i_req:
                lo_t, x_best, mi_best = mid, candidate, mi_c
            else:
                hi_t = mid
    return _Scalarized(x_best, lam_hi, mi_best, sol.status, trace)


def _simplex_polytope(amplitudes: Array, ap_budget: float,
                      extra_ub: Optional[Tuple[Array, Array]] = None) -> LinearProgram:
    """Amplitude pdfs with average power at most ap_budget, plus optional rows."""
    s = amplitudes.size
    a_ub = [amplitudes[None, :] ** 2]
    b_ub = [np.array([ap_budget])]
    if extra_ub is not None:
        a_ub.append(extra_ub[0])
        b_ub.append(extra_ub[1])
    return LinearProgram(s, np.ones((1, s)), np.ones(1), np.vstack(a_ub), np.concatenate(b_ub))


def _clean_pdf(p: Array) -> Array:
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def maximize_mutual_information(engine: AmplitudeChannel,
                                config: SolverConfig) -> Tuple[Array, float]:
    """The MI-maximizing amplitude pdf under the average-power budget."""
    amplitudes = engine.constellation.amplitudes
    polytope = _simplex_polytope(amplitudes, config.ap_budget)
    if not polytope.feasible:
        raise InfeasibleError("average-power budget excludes every amplitude pdf")
    with performance_monitor.time_operation("maximize_mi"):
        sol = solve_concave_over_polytope(
            lambda p: engine.mutual_information(_clean_pdf(p)),
            lambda p: engine.mi_gradient(_clean_pdf(p)),
            polytope, None, config.fw_max_iters, config.fw_gap_tol)
    p = _clean_pdf(sol.x)
    return p, engine.mutual_information(p)


def _ap_residual(amplitudes: Array, marginal: Array, budget: float) -> float:
    return max(0.0, float(marginal @ amplitudes ** 2) - budget)


def solve_scheme3(power_profile: Array, engine: AmplitudeChannel,
                  config: SolverConfig) -> SolveResult:
    """Memoryless design: max sum_k p_k P'(|h_E| r_k) s.t. I(p) >= I_req and the AP budget."""
    profile = np.asarray(power_profile, dtype=np.float64)
    amplitudes = engine.constellation.amplitudes
    if profile.shape != amplitudes.shape:
        raise DomainError(f"power profile has {profile.size} entries, expected {amplitudes.size}")
    if np.any(profile < 0):
        raise DomainError("power profile must be nonnegative")
    i_req = config.i_req_bits
    _, mi_max = maximize_mutual_information(engine, config)
    if i_req > mi_max + MI_SLACK:
        log_warning(f"I_req {i_req:.4f} exceeds the channel maximum {mi_max:.4f}", "OPTIMIZER")
        return SolveResult(Scheme.MEMORYLESS, Status.INFEASIBLE, i_req,
                           residuals={"mi_max_bits": mi_max})

    polytope = _simplex_polytope(amplitudes, config.ap_budget)
    with performance_monitor.time_operation("solve_scheme3"):
        sol = _maximize_with_mi(profile, lambda p: engine.mutual_information(_clean_pdf(p)),
                                lambda p: engine.mi_gradient(_clean_pdf(p)),
                                polytope, i_req, config)
    p = _clean_pdf(sol.x)
    return SolveResult(
        scheme=Scheme.MEMORYLESS, status=sol.status, i_req=i_req,
        achieved_power=float(profile @ p), achieved_mi=engine.mutual_information(p),
        pdf=p, lambda_star=sol.lam,
        residuals={"ap": _ap_residual(amplitudes, p, config.ap_budget),
                   "normalization": abs(float(sol.x.sum()) - 1.0),
                   "mi_max_bits": mi_max},
        trace=sol.trace)


def memoryless_power_profile(model: TransitionModel) -> Array:
    """Steady-state power of each constant-amplitude policy on the MDP."""
    profile = np.empty(model.amplitude_count)
    for k in range(model.amplitude_count):
        delta = np.zeros(model.amplitude_count)
        delta[k] = 1.0
        try:
            joint = steady_state_joint(model, delta)
            profile[k] = float(np.sum(joint.pi * model.reward))
        except ErgodicityError:
            profile[k] = float(model.reward[:, k].mean())
            log_debug(f"Amplitude {k}: constant policy not unichain; using the state mean",
                      "OPTIMIZER")
    return profile


def evaluate_pdf_on_model(model: TransitionModel, engine: AmplitudeChannel,
                          p: Array) -> Tuple[Array, float, float]:
    """(gamma, average power, MI) of a shared amplitude pdf on the full MDP."""
    p = _clean_pdf(np.asarray(p, dtype=np.float64))
    gamma = fit_states_pseudoinverse(model, p).gamma
    return gamma, float(gamma @ model.reward @ p), engine.mutual_information(p)


def _check_sizes(model: TransitionModel, engine: AmplitudeChannel) -> None:
    if model.amplitude_count != engine.size:
        raise DomainError(f"model has {model.amplitude_count} amplitudes, channel "
                          f"{engine.size}")


def solve_scheme1(model: TransitionModel, engine: AmplitudeChannel,
                  config: SolverConfig) -> SolveResult:
    """Known EH state: max average power over the balance polytope s.t. expected MI >= I_req."""
    _check_sizes(model, engine)
    s_xi, s = model.state_count, model.amplitude_count
    i_req = config.i_req_bits
    _, mi_max = maximize_mutual_information(engine, config)
    if i_req > mi_max + MI_SLACK:
        return SolveResult(Scheme.KNOWN_STATE, Status.INFEASIBLE, i_req,
                           residuals={"mi_max_bits": mi_max})

    # Balance rows: sum_k pi_jk - sum_{i,k} pi_ik rho_ijk = 0 for every j.
    inflow = np.transpose(model.rho, (1, 0, 2)).reshape(s_xi, s_xi * s)
    outflow = np.kron(np.eye(s_xi), np.ones((1, s)))
    a_eq = np.vstack([outflow - inflow, np.ones((1, s_xi * s))])
    b_eq = np.zeros(s_xi + 1)
    b_eq[-1] = 1.0
    a_ub = np.tile(model.amplitudes ** 2, s_xi)[None, :]
    polytope = LinearProgram(s_xi * s, a_eq, b_eq, a_ub, np.array([config.ap_budget]))
    if not polytope.feasible:
        raise ErgodicityError("balance polytope is empty under the average-power budget")

    reward = model.reward.ravel()

    def mi_fn(x: Array) -> float:
        return engine.expected_mutual_information(np.clip(x, 0.0, None).reshape(s_xi, s))

    def mi_grad(x: Array) -> Array:
        return engine.per_state_information_density(
            np.clip(x, 0.0, None).reshape(s_xi, s)).ravel()

    with performance_monitor.time_operation("solve_scheme1", {"states": s_xi}):
        sol = _maximize_with_mi(reward, mi_fn, mi_grad, polytope, i_req, config)
    pi = np.clip(sol.x, 0.0, None).reshape(s_xi, s)
    pi /= pi.sum()
    return SolveResult(
        scheme=Scheme.KNOWN_STATE, status=sol.status, i_req=i_req,
        achieved_power=float(np.sum(pi * model.reward)), achieved_mi=mi_fn(pi.ravel()),
        joint=pi, gamma=pi.sum(axis=1), lambda_star=sol.lam,
        residuals={"balance": balance_residual(model, pi),
                   "ap": _ap_residual(model.amplitudes, pi.sum(axis=0), config.ap_budget),
                   "normalization": abs(float(sol.x.sum()) - 1.0),
                   "mi_max_bits": mi_max},
        trace=sol.trace)


def _relaxed_balance_rows(model: TransitionModel, gamma: Array) -> Array:
    """B[j, k] = gamma_j - sum_i gamma_i rho_ijk, so the balance violation is B p."""
    return gamma[:, None] - np.einsum("i,ijk->jk", gamma, model.rho)


def _step_states(model: TransitionModel, p: Array, eps: float) -> Optional[Array]:
    """Best state marginal for a fixed pdf under the relaxed balance constraints."""
    s_xi = model.state_count
    transition = model.shared_transition(p)
    balance = np.eye(s_xi) - transition.T
    result = lp_oracle(model.reward @ p, np.ones((1, s_xi)), np.ones(1),
                       np.vstack([balance, -balance]), np.full(2 * s_xi, eps))
    if result.status != LPStatus.OPTIMAL or result.x is None:
        return None
    return _clean_pdf(result.x)


def _step_pdf(model: TransitionModel, engine: AmplitudeChannel, gamma: Array, eps: float,
              config: SolverConfig, start: Array,
              lam0: Optional[float] = None) -> Optional[_Scalarized]:
    """Best shared pdf for a fixed state marginal under relaxed balance and I(p) >= I_req."""
    rows = _relaxed_balance_rows(model, gamma)
    polytope = _simplex_polytope(model.amplitudes, config.ap_budget,
                                 (np.vstack([rows, -rows]), np.full(2 * rows.shape[0], eps)))
    if not polytope.feasible:
        return None
    try:
        return _maximize_with_mi(gamma @ model.reward,
                                 lambda p: engine.mutual_information(_clean_pdf(p)),
                                 lambda p: engine.mi_gradient(_clean_pdf(p)),
                                 polytope, config.i_req_bits, config, x0=start, lam0=lam0)
    except InfeasibleError:
        return None


def _relative_change(new: float, old: float) -> float:
    return abs(new - old) / max(abs(old), 1e-300)


def solve_scheme2(model: TransitionModel, engine: AmplitudeChannel,
                  config: SolverConfig) -> SolveResult:
    """Unknown EH state: alternating optimization of (gamma, p) with a shrinking balance relaxation.

    The inner loop stops when the pdf stops moving in L1 or the relaxed objective stops
    improving relative to its value; the outer loop likewise on the pdf or the refitted power.
    A step that lowers the relaxed objective is rejected and recorded as reverted.
    """
    _check_sizes(model, engine)
    i_req = config.i_req_bits
    init = solve_scheme3(memoryless_power_profile(model), engine, config)
    if init.status == Status.INFEASIBLE or init.pdf is None:
        return SolveResult(Scheme.UNKNOWN_STATE, Status.INFEASIBLE, i_req,
                           residuals=dict(init.residuals))

    trace: List[Dict[str, Any]] = []
    p = init.pdf
    gamma_best, power_best, mi_best = evaluate_pdf_on_model(model, engine, p)
    p_best = p
    trace.append({"phase": "init", "power_watts": power_best, "mi_bits": mi_best})
    eps = config.eps_tol_initial
    relaxed_residual = 0.0
    lam = init.lambda_star
    previous_power = power_best
    terminated_by = "m_max"
    outer = 0

    with performance_monitor.time_operation("solve_scheme2", {"states": model.state_count}):
        for outer in range(1, config.m_max + 1):
            p_outer_start = p
            gamma = fit_states_pseudoinverse(model, p).gamma
            objective = float(gamma @ model.reward @ p)
            backed_off = False
            for inner in range(1, config.n_max + 1):
                step = _step_pdf(model, engine, gamma, eps, config, p, lam)
                if step is None:
                    backed_off = True
                    break
                p_new = _clean_pdf(step.x)
                gamma_new = _step_states(model, p_new, eps)
                if gamma_new is None:
                    backed_off = True
                    break
                new_objective = float(gamma_new @ model.reward @ p_new)
                entry: Dict[str, Any] = {"phase": "inner", "outer": outer, "inner": inner,
                                         "eps": eps, "previous_objective_watts": objective,
                                         "candidate_objective_watts": new_objective,
                                         "reverted": new_objective < objective}
                if new_objective < objective:
                    log_debug(f"Step {outer}.{inner} lowered the relaxed objective "
                              f"({new_objective:.6e} < {objective:.6e} W); keeping the "
                              "previous iterate", "OPTIMIZER")
                    p_new, gamma_new, new_objective = p, gamma, objective
                else:
                    lam = step.lam
                change = float(np.abs(p_new - p).sum())
                gain = _relative_change(new_objective, objective)
                p, gamma, objective = p_new, gamma_new, new_objective
                relaxed_residual = float(np.max(np.abs(_relaxed_balance_rows(model, gamma) @ p)))
                entry.update({"objective_watts": objective, "relaxed_residual": relaxed_residual,
                              "change": change, "relative_gain": gain})
                trace.append(entry)
                if change <= config.inner_term_eps or gain <= config.inner_term_eps:
                    break

            if backed_off:
                log_warning(f"Inner subproblem infeasible at eps={eps:.3e}; backing off to "
                            "the previous outer iterate", "OPTIMIZER")
                trace.append({"phase": "backoff", "outer": outer, "eps": eps})
                p = p_outer_start
                terminated_by = "backoff"
                break

            _, true_power, true_mi = evaluate_pdf_on_model(model, engine, p)
            trace.append({"phase": "outer", "outer": outer, "eps": eps,
                          "power_watts": true_power, "mi_bits": true_mi})
            if true_power > power_best and true_mi >= i_req - MI_SLACK:
                p_best, power_best, mi_best = p, true_power, true_mi
            outer_change = float(np.abs(p - p_outer_start).sum())
            power_change = _relative_change(true_power, previous_power)
            previous_power = true_power
            eps *= config.eps_shrink
            if outer_change <= config.outer_term_eps or power_change <= config.outer_term_eps:
                terminated_by = "converged"
                break

    gamma_best, power_best, mi_best = evaluate_pdf_on_model(model, engine, p_best)
    log_info(f"Scheme II finished after {outer} outer iterations ({terminated_by}): power "
             f"{power_best:.6e} W at {mi_best:.4f} bits", "OPTIMIZER")
    trace.append({"phase": "done", "outer_iterations": outer, "terminated_by": terminated_by})
    return SolveResult(
        scheme=Scheme.UNKNOWN_STATE, status=Status.LIMIT_POINT, i_req=i_req,
        achieved_power=power_best, achieved_mi=mi_best,
        joint=gamma_best[:, None] * p_best[None, :], gamma=gamma_best, pdf=p_best,
        lambda_star=lam,
        residuals={"relaxed_balance": relaxed_residual, "final_eps": eps,
                   "refit_balance": balance_residual(model, gamma_best[:, None] * p_best),
                   "ap": _ap_residual(model.amplitudes, p_best, config.ap_budget)},
        trace=trace)


def solve_scheme(scheme: Scheme, model: Optional[TransitionModel], engine: AmplitudeChannel,
                 config: SolverConfig, power_profile: Optional[Array] = None) -> SolveResult:
    if scheme == Scheme.MEMORYLESS:
        if power_profile is None:
            if model is None:
                raise DomainError("Scheme III needs a power profile or a transition model")
            power_profile = memoryless_power_profile(model)
        return solve_scheme3(power_profile, engine, config)
    if model is None:
        raise DomainError(f"Scheme {scheme.value} needs a transition model")
    if scheme == Scheme.KNOWN_STATE:
        return solve_scheme1(model, engine, config)
    return solve_scheme2(model, engine, config)


def _max_mi_point(scheme: Scheme, model: Optional[TransitionModel], engine: AmplitudeChannel,
                  p_mi: Array, mi_max: float, profile: Optional[Array],
                  symbol_duration: float) -> RatePowerPoint:
    if scheme == Scheme.MEMORYLESS and profile is not None:
        power = float(profile @ p_mi)
    elif model is not None:
        power = evaluate_pdf_on_model(model, engine, p_mi)[1]
    else:
        power = 0.0
    return RatePowerPoint(mi_max, mi_max, power, engine.maximum_bitrate(mi_max, symbol_duration),
                          scheme, Status.OPTIMAL)


def sweep_rate_power(scheme: Scheme, model: Optional[TransitionModel], engine: AmplitudeChannel,
                     config: SolverConfig, points: int, symbol_duration: float,
                     power_profile: Optional[Array] = None) -> List[RatePowerPoint]:
    """Boundary of the rate-power region from I_req = 0 to the maximum MI."""
    if points < 2:
        raise DomainError("a sweep needs at least two points")
    if scheme == Scheme.MEMORYLESS and power_profile is None:
        if model is None:
            raise DomainError("Scheme III sweep needs a power profile or a transition model")
        power_profile = memoryless_power_profile(model)
    p_mi, mi_max = maximize_mutual_information(engine, config)
    targets = np.linspace(0.0, mi_max, points)

    def run(i_req: float) -> Optional[RatePowerPoint]:
        try:
            result = solve_scheme(scheme, model, engine, replace(config, i_req_bits=float(i_req)),
                                  power_profile)
        except InfeasibleError as e:
            log_warning(f"Sweep point I_req={i_req:.4f} omitted: {e.message}", "OPTIMIZER")
            return None
        if result.status == Status.INFEASIBLE:
            log_warning(f"Sweep point I_req={i_req:.4f} omitted: infeasible", "OPTIMIZER")
            return None
        bitrate = engine.maximum_bitrate(result.achieved_mi, symbol_duration)
        return RatePowerPoint(float(i_req), result.achieved_mi, result.achieved_power, bitrate,
                              scheme, result.status)

    with performance_monitor.time_operation("sweep_rate_power", {"points": points}):
        if config.workers > 1:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                solved = list(pool.map(run, targets[:-1]))
        else:
            solved = [run(t) for t in targets[:-1]]
    sweep = [pt for pt in solved if pt is not None]
    sweep.append(_max_mi_point(scheme, model, engine, p_mi, mi_max, power_profile,
                               symbol_duration))
    sweep.sort(key=lambda pt: (pt.achieved_mi, pt.i_req))
    log_info(f"Sweep of Scheme {scheme.value}: {len(sweep)}/{points} points", "OPTIMIZER")
    return sweep


def power_is_nonincreasing(sweep: List[RatePowerPoint], rel_tol: float = 1e-6) -> bool:
    """Region-boundary check: power never rises as the achieved MI grows."""
    ordered = sorted(sweep, key=lambda pt: pt.i_req)
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.power > prev.power * (1.0 + rel_tol) + 1e-300:
            return False
    return True
