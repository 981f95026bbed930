"""Command-line entry points: headless runs, characterization sweeps, serve.

Exit codes: 0 success (run: all scenario assertions hold), 1 assertion
failure, 2 configuration error (bad flags, unreadable scenario, port in
use). Diagnostics go to standard error; result summaries to standard out.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import characterize, sim, world
from .geom import Segment3, Vec3
from .radar import DEFAULT_PA, default_rig

log = logging.getLogger(__name__)

_SIM_FIELDS = {f.name for f in dataclasses.fields(sim.SimConfig)}


class CliError(Exception):
    """Configuration problem that maps to exit code 2."""


def load_scenario_ref(ref: str) -> world.Scenario:
    if ref.startswith("builtin:"):
        return world.builtin_scenario(ref[len("builtin:") :])
    return world.load_scenario_file(ref)


def _coerce(value: str):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            continue
    return value


def apply_params(
    scenario: world.Scenario, entries: list[str], seed: int
) -> tuple[world.Scenario, sim.SimConfig]:
    """Apply `--param key=value` overrides and build the run config.

    Accepted keys: `sim.<field>` for any simulation-config field,
    `avoidance.<field>` for controller parameters, and `duration_s`.
    """
    sim_kwargs: dict = {"seed": seed}
    avoid_overrides: dict[str, float] = {}
    for entry in entries:
        key, sep, value = entry.partition("=")
        if not sep or not key or not value:
            raise CliError(f"--param needs key=value, got {entry!r}")
        if key.startswith("sim."):
            name = key[len("sim.") :]
            if name not in _SIM_FIELDS:
                raise CliError(f"unknown sim parameter {name!r}")
            sim_kwargs[name] = _coerce(value)
        elif key.startswith("avoidance."):
            name = key[len("avoidance.") :]
            try:
                avoid_overrides[name] = float(value)
            except ValueError as exc:
                raise CliError(f"avoidance parameter {name!r} needs a number") from exc
        elif key == "duration_s":
            try:
                scenario = dataclasses.replace(scenario, duration_s=float(value))
            except ValueError as exc:
                raise CliError(f"bad duration_s: {value!r}") from exc
        else:
            raise CliError(
                f"unknown --param key {key!r} (use sim.*, avoidance.*, duration_s)"
            )
    if avoid_overrides:
        merged = dict(scenario.avoidance)
        merged.update(avoid_overrides)
        try:
            scenario = dataclasses.replace(scenario, avoidance=tuple(merged.items()))
        except ValueError as exc:
            raise CliError(str(exc)) from exc
    try:
        cfg = sim.SimConfig(**sim_kwargs)
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad sim config: {exc}") from exc
    return scenario, cfg


def cmd_run(args: argparse.Namespace) -> int:
    scenario = load_scenario_ref(args.scenario)
    scenario, cfg = apply_params(scenario, args.param, args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    run_log = sim.run(scenario, cfg=cfg)
    sim.write_runlog_jsonl(run_log, out_dir / "run.jsonl")
    sim.write_metrics_csv(run_log, out_dir / "metrics.csv")

    violations = sim.check_assertions(run_log, scenario)
    clearance = run_log.metrics.min_clearance
    verdict = {
        "scenario": scenario.name,
        "seed": cfg.seed,
        "passed": not violations,
        "violations": violations,
        # None when no conductors exist (clearance is unbounded)
        "min_clearance_m": round(clearance, 6) if math.isfinite(clearance) else None,
        "collided": run_log.metrics.collided,
    }
    (out_dir / "assertions.json").write_text(
        json.dumps(verdict, sort_keys=True, separators=(",", ":")) + "\n"
    )
    for v in violations:
        print(f"assertion failed: {v}", file=sys.stderr)
    print(
        f"{'PASS' if not violations else 'FAIL'} {scenario.name} seed={cfg.seed} "
        f"min_clearance={clearance:.3f} m collided={run_log.metrics.collided}"
    )
    return 0 if not violations else 1


def cmd_characterize(args: argparse.Namespace) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rig = default_rig(use_measured_fov=(args.fov == "measured"))
    rng = np.random.default_rng(args.seed)
    if args.experiment == "turntable":
        planes = [args.plane] if args.plane else list(characterize.PLANES)
        results = []
        for plane in planes:
            res = characterize.turntable_experiment(
                rig, plane, target_range=args.range, steps=args.samples, rng=rng
            )
            results.append(res)
            path = out_dir / f"turntable_{plane}_samples.csv"
            characterize.write_text(path, characterize.turntable_samples_csv(res))
            detecting = sorted(s.value for s, st in res.stats.items() if st.n > 0)
            print(f"{plane}: {len(detecting)} sensors detect ({', '.join(detecting)})")
        summary = out_dir / "turntable_summary.csv"
        characterize.write_text(summary, characterize.turntable_summary_csv(results))
        print(f"wrote {summary}")
    else:  # yawsweep
        if args.plane:
            raise CliError("--plane only applies to the turntable experiment")
        wire = Segment3(Vec3(3.0, -40.0, 0.0), Vec3(3.0, 40.0, 0.0))
        pairs = characterize.yaw_sweep_experiment(
            rig, DEFAULT_PA, wire, rng, steps=args.samples
        )
        path = out_dir / "yawsweep.csv"
        characterize.write_text(path, characterize.yawsweep_csv(pairs))
        print(f"wrote {path} ({len(pairs)} samples)")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    from . import service  # keep websockets out of batch-only invocations

    scenario = load_scenario_ref(args.scenario)
    scenario, cfg = apply_params(scenario, args.param, args.seed)
    try:
        service.serve_forever(
            scenario, cfg=cfg, host=args.host, port=args.port, rate_hz=args.rate
        )
    except service.ServiceError as exc:
        raise CliError(str(exc)) from exc
    except KeyboardInterrupt:
        pass
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="srd",
        description="Radar-based power line perception and avoidance sandbox.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="headless scenario run with logs and metrics")
    run_p.add_argument("--scenario", required=True, help="TOML path or builtin:<name>")
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--out", default=".", help="output directory")
    run_p.add_argument(
        "--param",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override sim.<field>, avoidance.<field>, or duration_s",
    )
    run_p.set_defaults(func=cmd_run)

    chr_p = sub.add_parser("characterize", help="bench-style sensor experiments")
    chr_p.add_argument("experiment", choices=("turntable", "yawsweep"))
    chr_p.add_argument("--plane", choices=characterize.PLANES, default=None)
    chr_p.add_argument("--samples", type=int, default=None, help="sweep steps")
    chr_p.add_argument("--range", type=float, default=1.0, help="target range, m")
    chr_p.add_argument("--fov", choices=("measured", "datasheet"), default="measured")
    chr_p.add_argument("--seed", type=int, default=0)
    chr_p.add_argument("--out", default=".")
    chr_p.set_defaults(func=cmd_characterize)

    srv_p = sub.add_parser("serve", help="live WebSocket telemetry and pilot input")
    srv_p.add_argument("--scenario", required=True, help="TOML path or builtin:<name>")
    srv_p.add_argument("--port", type=int, default=8765)
    srv_p.add_argument("--host", default="127.0.0.1")
    srv_p.add_argument("--rate", type=float, default=20.0, help="broadcast Hz")
    srv_p.add_argument("--seed", type=int, default=0)
    srv_p.add_argument(
        "--param", action="append", default=[], metavar="KEY=VALUE",
        help="override sim.<field>, avoidance.<field>, or duration_s",
    )
    srv_p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("SRD_LOG_LEVEL", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "characterize" and args.samples is None:
        args.samples = 3600 if args.experiment == "turntable" else 720
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (world.ScenarioError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
