"""Command-line interface.

Subcommands cover the full workflow against simulated devices:

* ``simulate-sweep``: run a full-load kernel across the supported clocks
  and write the frequency/power[/voltage] sweep CSV.
* ``fit``: fit the load power model to a sweep CSV and report parameters,
  ridge, the recommended clock and its +-pct band.
* ``tune``: run a strategy or one of the five pipelines over a space.
* ``steer``: replace the clock parameter with the model's recommended band,
  then tune the reduced space.
* ``analyze``: compute a Pareto front or a tuning-difficulty curve from a
  result cache.

Exit codes: 0 on success, 1 on runtime failures (fit divergence, empty
tuning runs, incomplete caches), 2 on configuration errors (bad flags,
missing or malformed files). Reports embed the manifest hash, seed, and
package version and carry no timestamps, so identical invocations produce
byte-identical outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__, analysis, powermodel, tuner
from .device import CLOCK_PARAM, ConstantSurface, load_device
from .errors import ConfigurationError, JouleTuneError
from .observers import (
    AveragedPowerObserver,
    AveragedSensorConfig,
    InstantPowerObserver,
    averaged_reading,
    instant_energy,
)
from .searchspace import KernelConfig, SearchSpace


@dataclass(frozen=True)
class RunManifest:
    """Everything that determines a run's outputs."""

    command: str
    space: str | None = None
    device: str | None = None
    samples: str | None = None
    model: str | None = None
    pipeline: str | None = None
    strategy: str | None = None
    objective: str | None = None
    seed: int = 0
    budget: int | None = None
    out: str | None = None
    cache: str | None = None
    pct: float = 0.10
    observer: str = "averaged"
    duration: float = 1.0
    total_flops: float | None = None
    mode: str | None = None
    performance: str | None = None
    efficiency: str | None = None
    weights: str | None = None
    p_max: float | None = None
    p_steps: int | None = None

    def validate(self) -> None:
        for field_name in ("space", "device", "samples", "model", "cache"):
            value = getattr(self, field_name)
            if value is not None and not Path(value).exists():
                if field_name == "cache" and self.command in ("tune", "steer"):
                    continue  # tuning creates its cache file
                raise ConfigurationError(f"--{field_name}: no such file: {value}")
        if not 0 <= self.pct < 1:
            raise ConfigurationError(f"--pct must be in [0, 1), got {self.pct}")
        if self.duration <= 0:
            raise ConfigurationError(f"--duration must be positive, got {self.duration}")
        if self.observer not in ("averaged", "instant"):
            raise ConfigurationError(
                f"--observer must be averaged or instant, got {self.observer!r}"
            )

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    def hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _report_header(manifest: RunManifest) -> dict:
    return {
        "version": __version__,
        "seed": manifest.seed,
        "manifest": manifest.to_dict(),
        "manifest_hash": manifest.hash(),
    }


def _write_json(data: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as handle:
        json.dump(data, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _observers(manifest: RunManifest):
    averaged_cfg = AveragedSensorConfig(continuous_duration=manifest.duration)
    if manifest.observer == "instant":
        return [InstantPowerObserver()], averaged_cfg
    return [AveragedPowerObserver(averaged_cfg)], averaged_cfg


def _metrics(manifest: RunManifest):
    if manifest.total_flops is None:
        return (), {}
    return (
        tuner.default_metrics(manifest.total_flops),
        {"total_flops": manifest.total_flops},
    )


# -- subcommands -------------------------------------------------------------

def cmd_simulate_sweep(args) -> int:
    manifest = RunManifest(
        command="simulate-sweep",
        device=args.device,
        out=args.out,
        seed=args.seed,
        observer=args.observer,
        duration=args.duration,
    )
    manifest.validate()
    device = load_device(args.device, seed=args.seed)
    # The sweep kernel fully loads the device and scales with the clock.
    device.surface = ConstantSurface(
        reference_clock=device.spec.peak_clock, base_time=1e-3, kappa=1.0, load=1.0
    )
    clocks = list(device.spec.supported_core_clocks)
    if args.points is not None:
        if args.points < 2 or args.points > len(clocks):
            raise ConfigurationError(
                f"--points must be in [2, {len(clocks)}], got {args.points}"
            )
        idx = np.linspace(0, len(clocks) - 1, args.points).round().astype(int)
        clocks = [clocks[i] for i in sorted(set(idx.tolist()))]
    cfg = AveragedSensorConfig(continuous_duration=args.duration)
    samples = []
    empty = KernelConfig(())
    for clock in clocks:
        device.set_core_clock(clock)
        execution = device.execute(empty, duration_hint=args.duration)
        if args.observer == "averaged":
            power = averaged_reading(execution.samples, execution.total_duration, cfg)
        else:
            power = (
                instant_energy(execution.samples, 0.0, execution.total_duration)
                / execution.total_duration
            )
        voltage = (
            device.read_voltage(clock) if device.spec.voltage_readable else None
        )
        samples.append(
            powermodel.FrequencySample(frequency=clock, power=power, voltage=voltage)
        )
    powermodel.write_samples_csv(samples, args.out)
    print(f"wrote {len(samples)} sweep samples to {args.out}")
    return 0


def cmd_fit(args) -> int:
    manifest = RunManifest(
        command="fit",
        samples=args.samples,
        device=args.device,
        out=args.out,
        pct=args.pct,
        seed=args.seed,
    )
    manifest.validate()
    device = load_device(args.device, seed=args.seed)
    samples = powermodel.read_samples_csv(args.samples)
    model = powermodel.fit(samples, tdp=device.spec.tdp)
    grid = device.spec.supported_core_clocks
    f_opt = powermodel.optimal_frequency(model, grid)
    band = powermodel.frequency_band(f_opt, grid, pct=args.pct)
    ridge = None
    if all(s.voltage is not None for s in samples) and len(samples) >= 4:
        point = powermodel.detect_ridge(samples)
        if point is not None:
            ridge = {"frequency": point.frequency, "voltage": point.voltage}
    report = {
        **_report_header(manifest),
        "model": model.to_dict(),
        "ridge": ridge,
        "optimal_frequency": f_opt,
        "band": list(band.clocks),
        "band_reduction": band.reduction,
        "supported_clocks": len(grid),
    }
    _write_json(report, Path(args.out))
    print(
        f"fit: p_idle={model.p_idle:.3f} W alpha={model.alpha:.6g} "
        f"tau_ft={model.tau_ft:.1f} MHz beta={model.beta:.6g} "
        f"rms={model.residual_rms:.4g} W"
    )
    print(
        f"optimal frequency {f_opt:.0f} MHz, band of {len(band.clocks)} clocks "
        f"({band.reduction:.1%} reduction) -> {args.out}"
    )
    return 0


def _load_space(path: str) -> SearchSpace:
    return SearchSpace.from_json(path)


def _run_tuning(manifest: RunManifest, space: SearchSpace, extra: dict) -> int:
    device = load_device(manifest.device, seed=manifest.seed)
    observers, averaged_cfg = _observers(manifest)
    user_metrics, constants = _metrics(manifest)
    Path(manifest.out or ".").mkdir(parents=True, exist_ok=True)
    Path(manifest.cache).parent.mkdir(parents=True, exist_ok=True)
    cache = tuner.ResultCache(manifest.cache)
    executions_before = device.execution_count

    if manifest.pipeline is not None:
        report_body = tuner.run_pipeline(
            manifest.pipeline,
            space,
            device,
            observers,
            strategy=manifest.strategy or "exhaustive",
            budget=manifest.budget,
            seed=manifest.seed,
            user_metrics=user_metrics,
            constants=constants,
            cache=cache,
            averaged_cfg=averaged_cfg,
        ).to_dict()
        history = None
    else:
        objective = tuner.Objective.parse(manifest.objective or "energy")
        run = tuner.TuningRun(
            space=space,
            strategy=manifest.strategy or "exhaustive",
            objective=objective,
            budget=manifest.budget,
            seed=manifest.seed,
        )
        outcome = tuner.run_strategy(
            run,
            device,
            observers,
            user_metrics=user_metrics,
            constants=constants,
            cache=cache,
            averaged_cfg=averaged_cfg,
        )
        report_body = {
            "strategy": run.strategy,
            "objective": f"{objective.metric}:{objective.direction}",
            "best": outcome.best.to_dict(),
            "evaluations": outcome.evaluations,
        }
        history = [r.to_dict() for r in outcome.history]

    report = {
        **_report_header(manifest),
        "space_size": space.size(),
        "device_executions": device.execution_count - executions_before,
        "cache_entries": len(cache),
        **extra,
        "result": report_body,
    }
    if history is not None:
        report["history"] = history
    out_dir = Path(manifest.out or ".")
    _write_json(report, out_dir / "report.json")
    best = report_body["best"]
    print(
        f"best config {best['config']} time={best['time']:.6g}s "
        f"energy={best['energy']:.6g}J ({report['device_executions']} device executions)"
        f" -> {out_dir / 'report.json'}"
    )
    return 0


def cmd_tune(args) -> int:
    if args.pipeline is not None and args.strategy == "local_search" and args.budget is None:
        raise ConfigurationError("local_search pipelines need an explicit --budget")
    manifest = RunManifest(
        command="tune",
        space=args.space,
        device=args.device,
        pipeline=args.pipeline,
        strategy=args.strategy,
        objective=args.objective,
        seed=args.seed,
        budget=args.budget,
        out=args.out,
        cache=args.cache or str(Path(args.out or ".") / "cache.jsonl"),
        observer=args.observer,
        duration=args.duration,
        total_flops=args.total_flops,
    )
    manifest.validate()
    space = _load_space(manifest.space)
    return _run_tuning(manifest, space, {})


def cmd_steer(args) -> int:
    manifest = RunManifest(
        command="steer",
        space=args.space,
        device=args.device,
        model=args.model,
        pipeline=args.pipeline,
        strategy=args.strategy,
        objective=args.objective,
        seed=args.seed,
        budget=args.budget,
        out=args.out,
        cache=args.cache or str(Path(args.out or ".") / "cache.jsonl"),
        pct=args.pct,
        observer=args.observer,
        duration=args.duration,
        total_flops=args.total_flops,
    )
    manifest.validate()
    space = _load_space(manifest.space)
    if CLOCK_PARAM not in space.names:
        raise ConfigurationError(
            f"steering needs a {CLOCK_PARAM!r} parameter in the space"
        )
    device = load_device(manifest.device, seed=manifest.seed)
    model = powermodel.model_from_json(manifest.model)
    grid = device.spec.supported_core_clocks
    f_opt = powermodel.optimal_frequency(model, grid)
    band = powermodel.frequency_band(f_opt, grid, pct=manifest.pct)
    pre_size = space.size()
    steered = space.with_values(CLOCK_PARAM, band.clocks)
    extra = {
        "steering": {
            "optimal_frequency": f_opt,
            "band": list(band.clocks),
            "band_reduction": band.reduction,
            "pre_space_size": pre_size,
            "post_space_size": steered.size(),
        }
    }
    print(
        f"steering clocks to {len(band.clocks)} of {len(grid)} supported "
        f"({band.reduction:.1%} reduction); space {pre_size} -> {steered.size()}"
    )
    return _run_tuning(manifest, steered, extra)


def cmd_analyze(args) -> int:
    manifest = RunManifest(
        command="analyze",
        cache=args.cache,
        space=args.space,
        objective=args.objective,
        out=args.out,
        seed=args.seed,
        mode=args.mode,
        performance=args.performance if args.mode == "pareto" else None,
        efficiency=args.efficiency if args.mode == "pareto" else None,
        weights=args.weights if args.mode == "difficulty" else None,
        p_max=args.p_max if args.mode == "difficulty" else None,
        p_steps=args.p_steps if args.mode == "difficulty" else None,
    )
    manifest.validate()
    cache = tuner.ResultCache(args.cache)
    results = [r for r in cache.results() if not r.failed]
    if not results:
        raise JouleTuneError(f"cache {args.cache} holds no successful results")
    out_dir = Path(args.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.mode == "pareto":
        points = [
            analysis.ParetoPoint(
                config=r.config,
                performance=r.lookup(args.performance),
                efficiency=r.lookup(args.efficiency),
            )
            for r in results
        ]
        front = analysis.pareto_front(points)
        analysis.write_pareto_csv(points, front, out_dir / "pareto.csv")
        report = {
            **_report_header(manifest),
            "points": len(points),
            "front_size": len(front),
            "front": [
                {
                    "config": p.config.as_dict(),
                    "performance": p.performance,
                    "efficiency": p.efficiency,
                }
                for p in front
            ],
        }
        _write_json(report, out_dir / "analyze.json")
        print(f"pareto front: {len(front)} of {len(points)} points -> {out_dir}")
        return 0

    # difficulty
    if args.space is None:
        raise ConfigurationError("--space is required for difficulty analysis")
    space = _load_space(args.space)
    objective = tuner.Objective.parse(args.objective or "energy")
    fitness = {r.config: objective.fitness(r) for r in results}
    graph = analysis.build_ffg(space, fitness)
    weights = analysis.minima_arrival_distribution(graph, mode=args.weights)
    p_values = np.linspace(1.0, args.p_max, args.p_steps).tolist()
    curve = analysis.proportion_of_centrality(graph, weights, p_values)
    analysis.write_centrality_csv(curve, out_dir / "difficulty.csv")
    report = {
        **_report_header(manifest),
        "objective": f"{objective.metric}:{objective.direction}",
        "nodes": len(graph.nodes),
        "edges": graph.edge_count(),
        "minima": len(graph.minima),
        "f_optimal": curve.f_optimal,
        "weights_mode": args.weights,
    }
    _write_json(report, out_dir / "analyze.json")
    print(
        f"difficulty: {len(graph.minima)} local optima over {len(graph.nodes)} configs "
        f"-> {out_dir}"
    )
    return 0


# -- parser ------------------------------------------------------------------

def _add_tuning_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--space", required=True, help="search space JSON")
    parser.add_argument("--device", required=True, help="device spec JSON")
    parser.add_argument("--pipeline", choices=tuner.PIPELINES, default=None)
    parser.add_argument("--strategy", choices=tuner.STRATEGIES, default=None)
    parser.add_argument("--objective", default=None, help="NAME[:min|:max], default energy")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--budget", type=int, default=None, help="max device executions")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--cache", default=None, help="JSON-lines result cache")
    parser.add_argument("--observer", choices=["averaged", "instant"], default="averaged")
    parser.add_argument(
        "--duration", type=float, default=1.0, help="continuous benchmark duration (s)"
    )
    parser.add_argument(
        "--total-flops", type=float, default=None,
        help="operation count; enables gflops and gflops_per_w metrics",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jouletune",
        description="Energy-aware kernel auto-tuning on simulated GPU devices",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sweep = sub.add_parser("simulate-sweep", help="measure a full-load clock sweep")
    sweep.add_argument("--device", required=True)
    sweep.add_argument("--out", required=True, help="sweep CSV path")
    sweep.add_argument("--points", type=int, default=None, help="subsample the clock grid")
    sweep.add_argument("--seed", type=int, default=0)
    sweep.add_argument("--observer", choices=["averaged", "instant"], default="averaged")
    sweep.add_argument("--duration", type=float, default=1.0)
    sweep.set_defaults(func=cmd_simulate_sweep)

    fit_parser = sub.add_parser("fit", help="fit the power model to a sweep CSV")
    fit_parser.add_argument("--samples", required=True, help="sweep CSV")
    fit_parser.add_argument("--device", required=True)
    fit_parser.add_argument("--out", required=True, help="model JSON path")
    fit_parser.add_argument("--pct", type=float, default=0.10)
    fit_parser.add_argument("--seed", type=int, default=0)
    fit_parser.set_defaults(func=cmd_fit)

    tune_parser = sub.add_parser("tune", help="tune a space on a device")
    _add_tuning_flags(tune_parser)
    tune_parser.set_defaults(func=cmd_tune)

    steer_parser = sub.add_parser(
        "steer", help="tune with the clock parameter reduced to the model band"
    )
    _add_tuning_flags(steer_parser)
    steer_parser.add_argument("--model", required=True, help="fitted model JSON")
    steer_parser.add_argument("--pct", type=float, default=0.10)
    steer_parser.set_defaults(func=cmd_steer)

    analyze_parser = sub.add_parser("analyze", help="analyze a result cache")
    analyze_parser.add_argument("--cache", required=True)
    analyze_parser.add_argument("--mode", choices=["pareto", "difficulty"], required=True)
    analyze_parser.add_argument("--space", default=None, help="needed for difficulty")
    analyze_parser.add_argument("--objective", default=None)
    analyze_parser.add_argument("--performance", default="gflops")
    analyze_parser.add_argument("--efficiency", default="gflops_per_w")
    analyze_parser.add_argument(
        "--weights", choices=["absorbing", "pagerank"], default="absorbing"
    )
    analyze_parser.add_argument("--p-max", type=float, default=1.5)
    analyze_parser.add_argument("--p-steps", type=int, default=26)
    analyze_parser.add_argument("--out", default=None)
    analyze_parser.add_argument("--seed", type=int, default=0)
    analyze_parser.set_defaults(func=cmd_analyze)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except JouleTuneError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
