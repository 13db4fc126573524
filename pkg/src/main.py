#!/usr/bin/env python3
"""
SwiptMDP - Command Line Interface
Batch front-end: circuit simulation, datasets, surrogate training, MDP
construction, scheme solves, rate-power sweeps and the invariant suite.
"""

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

sys.path.insert(0, str(Path(__file__).parent))

import numpy as np  # noqa: E402

from debug import get_debug_logger, log_error, log_info  # noqa: E402
from core import __version__  # noqa: E402
from core.circuit_sim import (  # noqa: E402
    DATASET_HEADER,
    CircuitResponder,
    ClippingRectifier,
    Dataset,
    SimulationBackend,
    SimulatorResponder,
    TransientSimulator,
    calibrate_v_max,
    generate_dataset,
    simulate_symbol,
)
from core.config_manager import ScenarioManager, load_scenario  # noqa: E402
from core.error_handler import (  # noqa: E402
    ConfigValidationError,
    DomainError,
    InfeasibleError,
    SwiptError,
    exit_code_for,
)
from core.info_channel import (  # noqa: E402
    AmplitudeChannel,
    PhaseLaw,
    monte_carlo_mutual_information,
    output_amplitude_pdf,
)
from core.mdp_model import (  # noqa: E402
    TransitionModel,
    VoltageQuantizer,
    average_power,
    build_transition_model,
    fit_states_pseudoinverse,
    monte_carlo_rollout,
    steady_state_joint,
)
from core.optimizer import (  # noqa: E402
    SWEEP_HEADER,
    Scheme,
    SolveResult,
    Status,
    evaluate_pdf_on_model,
    maximize_mutual_information,
    memoryless_power_profile,
    power_is_nonincreasing,
    solve_scheme,
    sweep_rate_power,
)
from core.path_config import path_config  # noqa: E402
from core.surrogate import (  # noqa: E402
    MlpModel,
    SurrogateResponder,
    SurrogateTarget,
    TrainConfig,
    build_table_dataset,
    mape,
    predict,
    table_backend,
    train,
)
from utils.file_utils import FileUtils  # noqa: E402
from utils.performance import performance_monitor  # noqa: E402


class ValidationFailed(Exception):
    """One or more invariant checks failed; carries the printed summary."""

    def __init__(self, summary: Dict[str, Any]):
        super().__init__(f"invariant checks failed: {', '.join(summary['failed'])}")
        self.summary = summary


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swiptmdp",
        description="Rate-power regions of SWIPT links with a nonlinear, memory-bearing harvester.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--scenario", default="mp",
                       help="scenario JSON path or preset <regime>[:<topology>[:<design>]]")
        p.add_argument("--backend", choices=["circuit", "surrogate", "table", "clipping"],
                       help="circuit responder used to build the MDP")
        p.add_argument("--seed", type=int, help="override the scenario seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="dotted scenario override, repeatable")

    p = sub.add_parser("simulate", help="simulate one symbol of the rectenna")
    common(p)
    p.add_argument("--v0", type=float, default=0.0, help="initial load voltage (V)")
    p.add_argument("--r-x", type=float, help="transmit amplitude (sqrt-W); default r_max")
    p.add_argument("--r-e", type=float, help="received amplitude at the harvester (sqrt-W)")
    p.add_argument("--transient", action="store_true",
                   help="carrier-resolved transient backend instead of the envelope one")

    p = sub.add_parser("dataset", help="generate (v_init, r_E, v_final, p_avg) tuples")
    common(p)
    p.add_argument("--samples", type=int, help="number of tuples; default train+validation+test")

    p = sub.add_parser("train", help="train the voltage and power surrogates")
    common(p)
    p.add_argument("--dataset", help="dataset CSV; generated when missing")

    p = sub.add_parser("build-mdp", help="build the transition model")
    common(p)

    for name, text in (("solve", "solve one input-design problem"),
                       ("sweep", "sweep the rate-power boundary")):
        p = sub.add_parser(name, help=text)
        common(p)
        p.add_argument("--scheme", choices=[s.value for s in Scheme], default="i")
        p.add_argument("--model", help="transition model JSON; built when missing")
        if name == "solve":
            p.add_argument("--i-req", type=float, help="required MI (bits/symbol)")
        else:
            p.add_argument("--points", type=int, default=12, help="number of sweep points")

    p = sub.add_parser("validate", help="run the invariant suite at reduced sizes")
    common(p)
    p.add_argument("--states", type=int, default=8, help="quantizer states for the suite")
    p.add_argument("--amplitudes", type=int, default=16, help="constellation size for the suite")
    return parser


class RunContext:
    """Scenario, output directory and provenance shared by one command."""

    def __init__(self, args: argparse.Namespace):
        overrides = list(args.overrides)
        if args.backend:
            overrides.append(f'backend="{args.backend}"')
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        self.args = args
        self.scenario: ScenarioManager = load_scenario(args.scenario, overrides)
        self.out_dir = self.scenario.output_dir(args.out)
        self.command = args.command

    def start_logging(self) -> None:
        path_config.ensure_directories(self.out_dir)
        get_debug_logger().enable_file_logging(path_config.logs_dir(self.out_dir))

    def provenance(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "scenario": self.scenario.get("name"),
            "scenario_hash": self.scenario.scenario_hash(),
            "model_hash": self.scenario.model_hash(),
            "tool_version": __version__,
            "channel": dict(self.scenario.channel_spec().metadata,
                            fading_normalization="unit mean-square"),
        }

    def write_json(self, name: str, payload: Dict[str, Any]) -> Path:
        path = self.out_dir / name
        document = dict(payload)
        document["provenance"] = self.provenance()
        if not FileUtils.write_json(path, document):
            raise SwiptError(f"could not write {path}", "file_operation")
        return path

    def write_csv(self, name: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
        path = self.out_dir / name
        if not FileUtils.write_csv(path, header, rows):
            raise SwiptError(f"could not write {path}", "file_operation")
        return path

    @property
    def eh_amplitude_max(self) -> float:
        return self.scenario.channel_spec().eh_gain * self.scenario.constellation().r_max


def v_max_rule(ctx: RunContext) -> str:
    if ctx.scenario.get("quantizer.v_max_v") is not None:
        return "configured"
    return "1.02 x max steady-state voltage up to the peak EH amplitude"


def resolve_v_max(ctx: RunContext) -> float:
    configured = ctx.scenario.get("quantizer.v_max_v")
    if configured is not None:
        return float(configured)
    spec = ctx.scenario.circuit_spec()
    r_e_max = ctx.eh_amplitude_max
    if ctx.scenario.backend == "clipping":
        clip = ClippingRectifier.from_spec(spec)
        return 1.02 * float(np.max(clip.steady_state(np.linspace(0.0, r_e_max, 64))))
    return calibrate_v_max(spec, r_e_max)


def make_responder(ctx: RunContext, v_max: float) -> CircuitResponder:
    spec = ctx.scenario.circuit_spec()
    r_e_max = ctx.eh_amplitude_max
    backend = ctx.scenario.backend
    if backend == "clipping":
        return ClippingRectifier.from_spec(spec)
    if backend == "surrogate":
        return SurrogateResponder(MlpModel.load(Path(ctx.scenario.get("surrogate.voltage_model"))),
                                  MlpModel.load(Path(ctx.scenario.get("surrogate.power_model"))))
    simulator = SimulatorResponder(spec, r_e_max)
    if backend == "table":
        grid = build_table_dataset(simulator, v_max, r_e_max,
                                   int(ctx.scenario.get("table.v_points")),
                                   int(ctx.scenario.get("table.r_points")))
        return table_backend(grid)
    return simulator


def build_model(ctx: RunContext) -> TransitionModel:
    v_max = resolve_v_max(ctx)
    quantizer = VoltageQuantizer(int(ctx.scenario.get("quantizer.state_count")), v_max)
    return build_transition_model(make_responder(ctx, v_max), quantizer,
                                  ctx.scenario.constellation(),
                                  ctx.scenario.channel_spec().eh_gain,
                                  int(ctx.scenario.get("quantizer.subsamples")),
                                  workers=path_config.worker_count)


def load_or_build_model(ctx: RunContext, model_arg: Optional[str]) -> TransitionModel:
    path = Path(model_arg) if model_arg else ctx.out_dir / "mdp.json"
    if path.exists():
        with open(path, "r", encoding="utf-8") as f:
            stored = json.load(f).get("provenance", {}).get("model_hash")
        if model_arg or stored == ctx.scenario.model_hash():
            log_info(f"Reusing transition model {path}", "CLI")
            return TransitionModel.load(path)
    elif model_arg:
        raise ConfigValidationError(f"model file not found: {path}", "--model")
    return build_model(ctx)


def channel_engine(ctx: RunContext) -> AmplitudeChannel:
    return AmplitudeChannel(ctx.scenario.channel_spec(), ctx.scenario.constellation())


# Commands

def cmd_simulate(ctx: RunContext) -> Dict[str, Any]:
    args = ctx.args
    spec = ctx.scenario.circuit_spec()
    channel = ctx.scenario.channel_spec()
    r_max = ctx.scenario.constellation().r_max
    if args.r_e is not None:
        r_e = args.r_e
    else:
        r_e = channel.eh_gain * (args.r_x if args.r_x is not None else r_max)
    if args.v0 < 0 or r_e < 0:
        raise DomainError("initial voltage and amplitude must be non-negative")

    if ctx.scenario.backend == "clipping":
        final, power = ClippingRectifier.from_spec(spec).respond(np.array([args.v0]),
                                                                 np.array([r_e]))
        final_v, power_w, backend = float(final[0]), float(power[0]), "clipping"
    elif args.transient:
        final, power = TransientSimulator(spec).simulate_batch(np.array([args.v0]),
                                                              np.array([r_e]))
        final_v, power_w, backend = float(final[0]), float(power[0]), "transient"
    else:
        response = simulate_symbol(spec, args.v0, r_e, SimulationBackend.ENVELOPE,
                                   r_e_max=max(r_e, ctx.eh_amplitude_max))
        final_v, power_w, backend = response.final_voltage, response.average_power, "envelope"

    result = {"v_init": args.v0, "r_E": r_e, "v_final": final_v, "p_avg": power_w,
              "backend": backend}
    ctx.write_json("simulate.json", result)
    return result


def _dataset_sizes(ctx: RunContext) -> Tuple[int, int, int]:
    s = ctx.scenario
    return (int(s.get("surrogate.train_samples")), int(s.get("surrogate.validation_samples")),
            int(s.get("surrogate.test_samples")))


def _generate(ctx: RunContext, n_samples: int) -> Dataset:
    v_max = resolve_v_max(ctx)
    responder = make_responder(ctx, v_max)
    return generate_dataset(responder, n_samples, ctx.eh_amplitude_max, v_max,
                            ctx.scenario.seed, workers=path_config.worker_count)


def cmd_dataset(ctx: RunContext) -> Dict[str, Any]:
    n = ctx.args.samples if ctx.args.samples is not None else sum(_dataset_sizes(ctx))
    if n < 1:
        raise DomainError("--samples must be at least 1")
    dataset = _generate(ctx, n)
    path = ctx.write_csv("dataset.csv", DATASET_HEADER, dataset.csv_rows())
    return {"samples": len(dataset), "path": str(path)}


def read_dataset(path: Path) -> Dataset:
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            reader = csv.reader(f)
            header = next(reader)
            if tuple(header) != DATASET_HEADER:
                raise ConfigValidationError(f"unexpected dataset header {header}", "--dataset")
            rows = [[float(v) for v in row] for row in reader if row]
    except (OSError, StopIteration, ValueError) as e:
        raise ConfigValidationError(f"cannot read dataset {path}: {e}", "--dataset")
    return Dataset.from_csv_rows(rows)


def cmd_train(ctx: RunContext) -> Dict[str, Any]:
    sizes = _dataset_sizes(ctx)
    if ctx.args.dataset:
        dataset = read_dataset(Path(ctx.args.dataset))
    else:
        dataset = _generate(ctx, sum(sizes))
        ctx.write_csv("dataset.csv", DATASET_HEADER, dataset.csv_rows())
    train_set, val_set, test_set = dataset.split(sizes)

    s = ctx.scenario
    config = TrainConfig(epochs=int(s.get("surrogate.epochs")),
                         batch_size=int(s.get("surrogate.batch_size")),
                         learning_rate=float(s.get("surrogate.learning_rate")),
                         hidden_layers=int(s.get("surrogate.hidden_layers")),
                         hidden_width=int(s.get("surrogate.hidden_width")),
                         seed=s.seed)
    report: Dict[str, Any] = {}
    for target, file_name in ((SurrogateTarget.FINAL_VOLTAGE, "surrogate_voltage.json"),
                              (SurrogateTarget.AVERAGE_POWER, "surrogate_power.json")):
        model, training = train(train_set, target, config, val_set)
        truth = test_set.final_voltage if target == SurrogateTarget.FINAL_VOLTAGE \
            else test_set.power
        test_mape = mape(predict(model, test_set.v_init, test_set.r_e), truth)
        ctx.write_json(file_name, model.to_dict())
        report[target.value] = dict(training.to_dict(), test_mape=test_mape, model=file_name)
    ctx.write_json("train_report.json", report)
    return {target: {"best_validation_mape": r["best_validation_mape"],
                     "test_mape": r["test_mape"]} for target, r in report.items()}


def cmd_build_mdp(ctx: RunContext) -> Dict[str, Any]:
    model = build_model(ctx)
    path = ctx.out_dir / "mdp.json"
    if not model.save(path, {"provenance": ctx.provenance(), "v_max_rule": v_max_rule(ctx)}):
        raise SwiptError(f"could not write {path}", "file_operation")
    return {"states": model.state_count, "amplitudes": model.amplitude_count,
            "v_max": model.quantizer.v_max, "clamped_outputs": model.clamped_outputs,
            "path": str(path)}


def cmd_solve(ctx: RunContext) -> Dict[str, Any]:
    scheme = Scheme(ctx.args.scheme)
    if ctx.args.i_req is not None:
        ctx.scenario.set("solver.i_req_bits", ctx.args.i_req)
    config = ctx.scenario.solver_config()
    model = load_or_build_model(ctx, ctx.args.model)
    engine = channel_engine(ctx)
    result: SolveResult = solve_scheme(scheme, model, engine, config)
    if result.status == Status.INFEASIBLE:
        raise InfeasibleError(f"I_req {config.i_req_bits} bits exceeds the channel maximum",
                              dict(result.residuals))
    payload = result.to_dict()
    payload["bitrate_bps"] = engine.maximum_bitrate(result.achieved_mi,
                                                    ctx.scenario.circuit_spec().symbol_duration)
    if scheme == Scheme.MEMORYLESS and result.pdf is not None:
        payload["evaluated_power_watts"] = evaluate_pdf_on_model(model, engine, result.pdf)[1]
    ctx.write_json(f"solve_{scheme.value}.json", payload)
    return {"scheme": scheme.value, "status": result.status.value,
            "achieved_power_watts": result.achieved_power,
            "achieved_mi_bits": result.achieved_mi}


def cmd_sweep(ctx: RunContext) -> Dict[str, Any]:
    scheme = Scheme(ctx.args.scheme)
    config = ctx.scenario.solver_config()
    model = load_or_build_model(ctx, ctx.args.model)
    symbol = ctx.scenario.circuit_spec().symbol_duration
    points = sweep_rate_power(scheme, model, channel_engine(ctx), config, ctx.args.points, symbol)
    ctx.write_csv(f"sweep_{scheme.value}.csv", SWEEP_HEADER, [pt.csv_row() for pt in points])
    ctx.write_json(f"sweep_{scheme.value}.json",
                   {"points": [dict(zip(SWEEP_HEADER, pt.csv_row())) for pt in points]})
    return {"scheme": scheme.value, "points": len(points),
            "power_nonincreasing": power_is_nonincreasing(points)}


def _check(results: Dict[str, Dict[str, Any]], name: str,
           fn: Callable[[], Tuple[bool, float]]) -> None:
    try:
        ok, value = fn()
        results[name] = {"passed": bool(ok), "value": float(value)}
    except SwiptError as e:
        results[name] = {"passed": False, "value": float("nan"), "error": e.message}
    mark = "PASS" if results[name]["passed"] else "FAIL"
    print(f"{mark} {name}", file=sys.stderr)


def cmd_validate(ctx: RunContext) -> Dict[str, Any]:
    ctx.scenario.set("quantizer.state_count", ctx.args.states)
    ctx.scenario.set("constellation.size", ctx.args.amplitudes)
    config = ctx.scenario.solver_config()
    model = build_model(ctx)
    engine = channel_engine(ctx)
    s = model.amplitude_count
    uniform = np.full(s, 1.0 / s)
    results: Dict[str, Dict[str, Any]] = {}

    def row_stochastic() -> Tuple[bool, float]:
        err = float(np.max(np.abs(model.rho.sum(axis=1) - 1.0)))
        return err <= 1e-9, err

    def fixed_point() -> Tuple[bool, float]:
        joint = steady_state_joint(model, uniform)
        err = float(np.max(np.abs(joint.gamma @ model.state_transition(uniform) - joint.gamma)))
        return err <= 1e-8, err

    def pseudoinverse() -> Tuple[bool, float]:
        gamma = fit_states_pseudoinverse(model, uniform).gamma
        err = float(np.max(np.abs(gamma - steady_state_joint(model, uniform).gamma)))
        return err <= 1e-8, err

    def mi_normalization() -> Tuple[bool, float]:
        density = output_amplitude_pdf(uniform, ctx.scenario.channel_spec(),
                                       ctx.scenario.constellation(), engine.grid)
        mass = float(engine.weights @ density)
        mi = engine.mutual_information(uniform)
        return abs(mass - 1.0) <= 1e-6 and mi >= 0.0, abs(mass - 1.0)

    def mi_monte_carlo() -> Tuple[bool, float]:
        estimate, stderr = monte_carlo_mutual_information(
            uniform, ctx.scenario.channel_spec(), ctx.scenario.constellation(), 4000,
            ctx.scenario.seed)
        err = abs(estimate - engine.mutual_information(uniform))
        return err <= max(0.05, 3.0 * stderr), err

    def uniform_phase_bound() -> Tuple[bool, float]:
        half, stderr = monte_carlo_mutual_information(
            uniform, ctx.scenario.channel_spec(), ctx.scenario.constellation(), 1000,
            ctx.scenario.seed, phase_law=PhaseLaw.HALF_CIRCLE, chunk=250)
        gap = engine.mutual_information(uniform) - half
        return gap >= -3.0 * stderr - 0.01, gap

    def rollout() -> Tuple[bool, float]:
        expected = average_power(model, steady_state_joint(model, uniform))
        sample = monte_carlo_rollout(model, uniform, 5000, ctx.scenario.seed)
        err = abs(sample.power - expected)
        return err <= max(0.02 * expected, 3.0 * sample.standard_error), err

    p_mi, mi_max = maximize_mutual_information(engine, config)
    target = replace(config, i_req_bits=0.5 * mi_max)

    def ordering() -> Tuple[bool, float]:
        p1 = solve_scheme(Scheme.KNOWN_STATE, model, engine, target).achieved_power
        p2 = solve_scheme(Scheme.UNKNOWN_STATE, model, engine, target).achieved_power
        r3 = solve_scheme(Scheme.MEMORYLESS, model, engine, target,
                          memoryless_power_profile(model))
        p3 = evaluate_pdf_on_model(model, engine, r3.pdf)[1] if r3.pdf is not None else 0.0
        # Scheme I is only solved to the multiplier bisection accuracy.
        slack = 1e-3 * max(p1, 1e-300)
        return p1 >= p2 - slack and p2 >= p3 * (1.0 - 1e-9), p1 - p3

    def monotone() -> Tuple[bool, float]:
        sweep = sweep_rate_power(Scheme.MEMORYLESS, model, engine, config, 4,
                                 ctx.scenario.circuit_spec().symbol_duration)
        return power_is_nonincreasing(sweep), float(len(sweep))

    for name, fn in (("row_stochastic", row_stochastic), ("steady_state_fixed_point", fixed_point),
                     ("pseudoinverse_consistency", pseudoinverse),
                     ("mi_normalization", mi_normalization), ("mi_monte_carlo", mi_monte_carlo),
                     ("uniform_phase_bound", uniform_phase_bound),
                     ("rollout_agreement", rollout),
                     ("scheme_ordering", ordering), ("sweep_monotone", monotone)):
        _check(results, name, fn)

    failures = sorted(name for name, r in results.items() if not r["passed"])
    ctx.write_json("validate.json", {"checks": results, "failures": failures,
                                     "states": model.state_count, "amplitudes": s})
    summary = {"passed": len(results) - len(failures), "failed": failures}
    if failures:
        raise ValidationFailed(summary)
    return summary


HANDLERS: Dict[str, Callable[[RunContext], Dict[str, Any]]] = {
    "simulate": cmd_simulate,
    "dataset": cmd_dataset,
    "train": cmd_train,
    "build-mdp": cmd_build_mdp,
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "validate": cmd_validate,
}


def run(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run one command and return the exit status."""
    args = build_parser().parse_args(argv)
    logger = get_debug_logger()
    ctx: Optional[RunContext] = None
    try:
        ctx = RunContext(args)
        ctx.start_logging()
        log_info(f"{args.command} on scenario {ctx.scenario.get('name')} "
                 f"({ctx.scenario.scenario_hash()[:12]})", "CLI")
        with performance_monitor.time_operation(args.command):
            summary = HANDLERS[args.command](ctx)
        print(json.dumps({"command": args.command, "status": "ok", **summary},
                         sort_keys=True, default=str))
        return 0
    except ValidationFailed as e:
        log_error(str(e), "CLI")
        print(json.dumps({"command": args.command, "status": "failed", **e.summary},
                         sort_keys=True))
        return 1
    except SwiptError as e:
        code = exit_code_for(e)
        log_error(f"{args.command} failed: {e.message}", "CLI", e)
        print(json.dumps({"command": args.command, "status": "error", "category": e.category,
                          "message": e.message, "exit_code": code}, sort_keys=True))
        return code
    except Exception as e:
        log_error(f"{args.command} failed unexpectedly: {e}", "CLI", e)
        if ctx is not None and ctx.out_dir.exists():
            report = logger.export_logs(path_config.logs_dir(ctx.out_dir) / "crash_report.json")
            log_info(f"Crash report written to {report}", "CLI")
        print(json.dumps({"command": args.command, "status": "error", "category": "internal",
                          "message": str(e), "exit_code": 1}, sort_keys=True))
        return 1
    finally:
        log_info(f"Performance: {performance_monitor.get_performance_summary()}", "PERF")
        logger.disable_file_logging()


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
