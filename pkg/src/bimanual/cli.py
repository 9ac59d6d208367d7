"""Command-line entry point.

Subcommands:

- ``run``: replay a scenario file, write the per-cycle CSV log, optionally
  render report figures and evaluate the scenario's embedded assertions.
- ``serve``: start the live teleoperation bridge on a WebSocket endpoint.
- ``bench``: time the per-cycle control pipeline (admittance + retargeting +
  controller) and report p50/p95/p99.
- ``validate-model``: parse and validate a model file.

Exit codes: 0 success, 1 assertion failure, 2 input error, 3 internal error.
"""

from __future__ import annotations

import argparse
import gc
import sys
import time
from pathlib import Path

import numpy as np

from . import bridge as br
from . import retarget as rt
from . import robot as rb
from . import sim as sm

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_INPUT = 2
EXIT_INTERNAL = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bimanual",
        description="Dual-arm teleoperation retargeting stack: scenario "
                    "replay, live teleop bridge, benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="replay a scenario file")
    p_run.add_argument("scenario", help="scenario YAML path")
    p_run.add_argument("--output", "-o", help="per-cycle CSV log path "
                       "(default: <scenario stem>.csv in the cwd)")
    p_run.add_argument("--report", metavar="DIR",
                       help="render report figures into DIR")
    p_run.add_argument("--check", action="store_true",
                       help="evaluate the scenario's embedded assertions; "
                       "exit 1 if any fails")
    p_run.add_argument("--fidelity", choices=["quasi-static",
                                              "penalty-dynamics"],
                       help="override the scenario's plant fidelity")
    p_run.add_argument("--adaptation", choices=["on", "off"],
                       help="override the scenario's adaptation toggle")
    p_run.add_argument("--seed", type=int, help="override the sensor-noise seed")
    p_run.add_argument("--quiet", "-q", action="store_true",
                       help="suppress the per-run summary line")

    p_serve = sub.add_parser("serve", help="start the teleoperation bridge")
    p_serve.add_argument("scenario",
                         help="scenario YAML providing model and start state")
    p_serve.add_argument("--endpoint", default=None,
                         help="host:port to bind (default: "
                         f"${br.ENDPOINT_ENV} or {br.DEFAULT_ENDPOINT})")
    p_serve.add_argument("--decimation", type=int,
                         default=br.DEFAULT_DECIMATION,
                         help="emit telemetry every Nth cycle (default %(default)s)")

    p_bench = sub.add_parser(
        "bench", help="time the per-cycle control pipeline")
    p_bench.add_argument("scenario", nargs="?",
                         help="scenario YAML (default: bundled translation ramp)")
    p_bench.add_argument("--cycles", type=int, default=10000,
                         help="timed cycles (default %(default)s)")
    p_bench.add_argument("--warmup", type=int, default=200,
                         help="untimed warmup cycles (default %(default)s)")

    p_val = sub.add_parser("validate-model", help="validate a model file")
    p_val.add_argument("model", help="model YAML path")
    return parser


def _bench_scenario() -> sm.Scenario:
    """Default benchmark workload: the bundled model under a slow object
    translation that keeps the optimizer active without saturating."""
    from importlib import resources
    model = str(resources.files("bimanual.data") / "franka_like.yaml")
    q_start = [1.1175935, 0.97185011, -0.40582767, -0.90109207, -0.98417705,
               0.80857751, 0.34552111, 1.78815707, 1.1241858, 0.96379029,
               -0.94589677, 0.60616616, 0.96833525, -0.2010819]
    commands = []
    for k in range(60):
        sign = 1.0 if k % 2 == 0 else -1.0
        commands.append(sm.CommandSegment(
            t=float(k), command_mode="twist",
            left=[0.0, 0.0, 0.0, sign * 0.02, 0.0, 0.0]))
    return sm.Scenario(
        name="bench", model_path=model, duration=60.0, dt=1e-3,
        q_start=np.asarray(q_start), commands=commands)


def cmd_run(args) -> int:
    scenario = sm.load_scenario(args.scenario)
    if args.fidelity is not None:
        scenario.fidelity = args.fidelity
    if args.adaptation is not None:
        scenario.adaptation_enabled = args.adaptation == "on"
    if args.seed is not None:
        scenario.seed = args.seed

    records = sm.run_scenario(scenario)
    out = Path(args.output) if args.output else Path(f"{scenario.name}.csv")
    sm.write_log_csv(records, out)
    if args.report:
        from . import report
        for path in report.render_report(records, args.report,
                                         prefix=scenario.name):
            if not args.quiet:
                print(f"wrote {path}")
    if not args.quiet:
        flags = sum(r.torque_violation or r.slippage or r.crash
                    for r in records)
        print(f"{scenario.name}: {len(records)} cycles -> {out} "
              f"({flags} flagged)")

    if not args.check:
        return EXIT_OK
    results = sm.evaluate_assertions(scenario, records)
    failed = False
    for name, passed, message in results:
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: {message}")
        failed = failed or not passed
    if not results:
        print("warning: scenario embeds no assertions; nothing checked")
    return EXIT_ASSERTION if failed else EXIT_OK


def cmd_serve(args) -> int:
    scenario = sm.load_scenario(args.scenario)
    host, port = br.parse_endpoint(args.endpoint)
    print(f"serving {scenario.name} on ws://{host}:{port} "
          f"(telemetry decimation {args.decimation})")
    br.serve(scenario, endpoint=f"{host}:{port}",
             decimation=args.decimation)
    return EXIT_OK


def cmd_bench(args) -> int:
    scenario = sm.load_scenario(args.scenario) if args.scenario \
        else _bench_scenario()
    dual, obj = sm.load_scenario_models(scenario)
    pipeline = sm.Pipeline(dual, obj, scenario)
    plant = sm.QuasiStaticPlant(dual, obj, scenario.q_start,
                                seed=scenario.seed)
    state = sm.SimState(q=plant.q.copy(), dq=np.zeros(14), X_O=plant.X_O,
                        lambda_L=pipeline.state.lambda_L.copy(),
                        lambda_R=pipeline.state.lambda_R.copy())
    plant.settle(pipeline.torques(state))
    state = plant.step(pipeline.torques(state), scenario.dt)
    rest = rt.object_pose(dual, obj, scenario.q_start, via="left")
    stream = sm.OperatorStream(scenario.commands, rest)

    total = args.warmup + args.cycles
    samples = np.empty(args.cycles)
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        for k in range(total):
            commanded = stream.object_target(k * scenario.dt, scenario.dt)
            t0 = time.perf_counter()
            pipeline.cycle(commanded, state, frames=plant.frames)
            tau = pipeline.torques(state, frames=plant.frames)
            elapsed = time.perf_counter() - t0
            if k >= args.warmup:
                samples[k - args.warmup] = elapsed
            state = plant.step(tau, scenario.dt)
    finally:
        if gc_was_enabled:
            gc.enable()

    ms = samples * 1e3
    p50, p95, p99 = np.percentile(ms, [50, 95, 99])
    print(f"pipeline cycle time over {args.cycles} cycles "
          f"(after {args.warmup} warmup):")
    print(f"  p50 {p50:.3f} ms  p95 {p95:.3f} ms  p99 {p99:.3f} ms  "
          f"mean {ms.mean():.3f} ms  max {ms.max():.3f} ms")
    return EXIT_OK


def cmd_validate_model(args) -> int:
    dual, obj = rb.load_model(args.model)
    q_min, q_max, dq_max, tau_max = dual.limits()
    print(f"{args.model}: OK")
    print(f"  arms: 2 x {dual.left.n_joints} joints, "
          f"tau_max {np.min(tau_max):g}..{np.max(tau_max):g} N*m")
    print(f"  object: mass {obj.mass:g} kg, mu {obj.friction_mu:g}, "
          f"normal force {obj.f_normal_min:g}..{obj.f_normal_max:g} N")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": cmd_run,
        "serve": cmd_serve,
        "bench": cmd_bench,
        "validate-model": cmd_validate_model,
    }
    try:
        return handlers[args.command](args)
    except (sm.ScenarioError, rb.ModelError, FileNotFoundError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (rt.RetargetError, sm.PlantDivergence) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except KeyboardInterrupt:
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
