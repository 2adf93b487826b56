"""Tuning engine: benchmarking, search strategies, and pipelines.

A benchmark applies a config's execution parameters (core clock, power
limit) to the device, runs the kernel through the observer lifecycle, and
produces a result with wall time, energy, observer readings, and derived
user metrics. Energy follows the attached sensor: the instant sensor's
median-power rule when one is attached, otherwise the averaged sensor's
continuous-benchmark value scaled to a single execution.

Three strategies search a space under an objective:

* ``exhaustive`` evaluates every valid config,
* ``random`` samples uniformly without replacement up to the budget,
* ``local_search`` runs randomized first-improvement walks: neighbors are
  tried in a fresh random order each step, the walk moves to the first
  strict improvement, and it restarts from a random config when it lands on
  a local optimum.

The budget counts device executions; cache hits are free. Five pipelines
compose strategies into the classic time/energy tuning recipes, including
the global search over the full augmented (config x clock) space.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .device import CLOCK_PARAM, POWER_LIMIT_PARAM, SimulatedDevice
from .errors import (
    ConfigurationError,
    JouleTuneError,
    MeasurementError,
    TuningError,
)
from .expressions import Expression
from .observers import (
    AveragedPowerObserver,
    AveragedSensorConfig,
    BenchmarkObserver,
    InstantPowerObserver,
    TracePlayback,
    averaged_reading,
    instant_energy,
)
from .searchspace import KernelConfig, SearchSpace

_CORE_RESULT_FIELDS = ("time", "energy")

STRATEGIES = ("exhaustive", "random", "local_search")
PIPELINES = (
    "race_to_idle",
    "energy_to_solution_maxclock",
    "race_to_idle_plus_clocks",
    "energy_to_solution_plus_clocks",
    "global",
)


@dataclass(frozen=True)
class BenchmarkResult:
    config: KernelConfig
    time: float
    energy: float
    observer_results: dict[str, float] = field(default_factory=dict)
    metrics: dict[str, float] = field(default_factory=dict)
    failed: bool = False
    failure_reason: str | None = None

    def lookup(self, name: str) -> float:
        """Resolve a metric name against core fields, observers, metrics."""
        if name == "time":
            return self.time
        if name == "energy":
            return self.energy
        if name in self.observer_results:
            return self.observer_results[name]
        if name in self.metrics:
            return self.metrics[name]
        raise ConfigurationError(
            f"result has no metric {name!r}; available: "
            f"{['time', 'energy'] + sorted(self.observer_results) + sorted(self.metrics)}"
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "config": self.config.as_dict(),
            "time": self.time,
            "energy": self.energy,
            "observer_results": dict(self.observer_results),
            "metrics": dict(self.metrics),
            "failed": self.failed,
            "failure_reason": self.failure_reason,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "BenchmarkResult":
        return cls(
            config=KernelConfig.from_dict(data["config"]),
            time=data["time"],
            energy=data["energy"],
            observer_results=dict(data.get("observer_results", {})),
            metrics=dict(data.get("metrics", {})),
            failed=data.get("failed", False),
            failure_reason=data.get("failure_reason"),
        )


@dataclass(frozen=True)
class Objective:
    """What to optimize: a metric name and a direction."""

    metric: str = "time"
    direction: str = "minimize"

    def __post_init__(self):
        if self.direction not in ("minimize", "maximize"):
            raise ConfigurationError(
                f"direction must be minimize or maximize, got {self.direction!r}"
            )

    @classmethod
    def parse(cls, text: str) -> "Objective":
        """Parse 'energy', 'time:min', or 'gflops_per_w:max'."""
        name, _, suffix = text.partition(":")
        direction = {"": "minimize", "min": "minimize", "max": "maximize"}.get(suffix)
        if direction is None or not name:
            raise ConfigurationError(
                f"bad objective {text!r}; expected NAME[:min|:max]"
            )
        return cls(name, direction)

    def fitness(self, result: BenchmarkResult) -> float:
        """Scalar to minimize; failed results are pushed to +inf."""
        if result.failed:
            return math.inf
        value = result.lookup(self.metric)
        return value if self.direction == "minimize" else -value

    def better(self, a: BenchmarkResult, b: BenchmarkResult) -> bool:
        return self.fitness(a) < self.fitness(b)


@dataclass(frozen=True)
class UserMetric:
    """A derived quantity computed on every result, e.g. gflops/W."""

    name: str
    expression: str

    def __post_init__(self):
        if not self.name.isidentifier():
            raise ConfigurationError(f"metric name {self.name!r} is not an identifier")

    def evaluate(self, env: Mapping[str, float]) -> float:
        value = Expression(self.expression)(env)
        if not isinstance(value, (int, float)) or not math.isfinite(value):
            raise MeasurementError(
                f"metric {self.name!r} = {self.expression!r} is not finite: {value!r}"
            )
        return float(value)


def default_metrics(total_flops: float) -> tuple[UserMetric, ...]:
    """Compute throughput and efficiency from a known operation count."""
    if total_flops <= 0:
        raise ConfigurationError("total_flops must be positive")
    return (
        UserMetric("gflops", "total_flops / time / 1e9"),
        UserMetric("gflops_per_w", "total_flops / energy / 1e9"),
    )


class ResultCache:
    """Append-only store of benchmark results keyed by canonical config hash.

    Optionally backed by a JSON-lines file: one result per line, append on
    every store, full reload on open. Two runs sharing a cache file never
    re-execute a config the other already measured.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._entries: dict[str, BenchmarkResult] = {}
        if self.path is not None and self.path.exists():
            with open(self.path) as handle:
                for line in handle:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        result = BenchmarkResult.from_dict(json.loads(line))
                    except (json.JSONDecodeError, KeyError) as exc:
                        raise ConfigurationError(
                            f"corrupt cache line in {self.path}: {exc}"
                        ) from exc
                    self._entries[result.config.key()] = result

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, config: KernelConfig) -> bool:
        return config.key() in self._entries

    def get(self, config: KernelConfig) -> BenchmarkResult | None:
        return self._entries.get(config.key())

    def put(self, result: BenchmarkResult) -> None:
        key = result.config.key()
        if key in self._entries:
            return
        self._entries[key] = result
        if self.path is not None:
            with open(self.path, "a") as handle:
                handle.write(json.dumps(result.to_dict(), sort_keys=True))
                handle.write("\n")

    def results(self) -> list[BenchmarkResult]:
        return list(self._entries.values())


@dataclass(frozen=True)
class MeasurementSetup:
    """How to measure: which observers are attached and their sensor configs."""

    observers: tuple[BenchmarkObserver, ...] = ()
    averaged: AveragedSensorConfig = field(default_factory=AveragedSensorConfig)

    def mode(self) -> str:
        if any(isinstance(o, InstantPowerObserver) for o in self.observers):
            return "instant"
        if any(isinstance(o, AveragedPowerObserver) for o in self.observers):
            return "averaged"
        return "instant"


def benchmark(
    device: SimulatedDevice,
    config: KernelConfig,
    observers: Sequence[BenchmarkObserver] = (),
    *,
    user_metrics: Sequence[UserMetric] = (),
    constants: Mapping[str, float] | None = None,
    averaged_cfg: AveragedSensorConfig | None = None,
) -> BenchmarkResult:
    """Measure one config end to end.

    Execution parameters in the config are applied to device state first.
    Device failures do not raise: the result comes back with ``failed`` set
    and the reason recorded, so searches can skip it but keep the record.
    """
    setup = MeasurementSetup(tuple(observers), averaged_cfg or AveragedSensorConfig())
    try:
        return _benchmark_inner(device, config, setup, user_metrics, constants or {})
    except ConfigurationError:
        # A broken measurement setup is a caller mistake, not a property of
        # this config; swallowing it would silently fail the whole search.
        raise
    except JouleTuneError as exc:
        return BenchmarkResult(
            config=config,
            time=math.inf,
            energy=math.inf,
            failed=True,
            failure_reason=f"{type(exc).__name__}: {exc}",
        )


def _benchmark_inner(
    device: SimulatedDevice,
    config: KernelConfig,
    setup: MeasurementSetup,
    user_metrics: Sequence[UserMetric],
    constants: Mapping[str, float],
) -> BenchmarkResult:
    if CLOCK_PARAM in config:
        device.set_core_clock(config[CLOCK_PARAM])
    if POWER_LIMIT_PARAM in config:
        device.set_power_limit(config[POWER_LIMIT_PARAM])
    # A memory clock parameter is accepted but has no effect on this device
    # model; only the core clock enters the power and runtime curves.

    mode = setup.mode()
    duration_hint = setup.averaged.continuous_duration if mode == "averaged" else 0.0

    for observer in setup.observers:
        observer.before_start()
    execution = device.execute(config, duration_hint=duration_hint)
    playback = TracePlayback(execution)
    for observer in setup.observers:
        observer.after_start(playback)
    instants = [o for o in setup.observers if isinstance(o, InstantPowerObserver)]
    period = 1.0 / (instants[0].cfg.sample_rate if instants else device.sample_rate_hz)
    while playback.advance(period):
        for observer in setup.observers:
            observer.during(playback)
    for observer in setup.observers:
        observer.after_finish(playback)

    observer_results: dict[str, float] = {}
    for observer in setup.observers:
        for key, value in observer.get_results().items():
            if key in _CORE_RESULT_FIELDS or key in observer_results:
                raise ConfigurationError(f"observer result key collision: {key!r}")
            observer_results[key] = value

    time = execution.runtime
    if mode == "averaged":
        mean_power = averaged_reading(
            execution.samples, execution.total_duration, setup.averaged
        )
    else:
        mean_power = instant_energy(execution.samples, 0.0, execution.runtime) / execution.runtime
    # Energy to solution for a single execution; the raw sensor totals stay
    # available under the observer prefixes.
    energy = mean_power * time

    env: dict[str, float] = {"time": time, "energy": energy}
    env.update(observer_results)
    env.update(constants)
    metrics: dict[str, float] = {}
    for metric in user_metrics:
        value = metric.evaluate(env)
        metrics[metric.name] = value
        env[metric.name] = value

    return BenchmarkResult(
        config=config,
        time=time,
        energy=energy,
        observer_results=observer_results,
        metrics=metrics,
    )


@dataclass(frozen=True)
class TuningRun:
    """One search: a space, a strategy, an objective, a budget, a seed."""

    space: SearchSpace
    strategy: str = "exhaustive"
    objective: Objective = field(default_factory=Objective)
    budget: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigurationError(
                f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}"
            )
        if self.budget is not None and self.budget < 1:
            raise ConfigurationError("budget must be >= 1")


@dataclass
class StrategyOutcome:
    best: BenchmarkResult
    history: list[BenchmarkResult]
    minima_reached: list[KernelConfig]
    device_executions: int
    evaluations: int


class _Evaluator:
    """Cache-aware benchmark wrapper that counts device executions."""

    def __init__(self, device, setup: MeasurementSetup, user_metrics, constants, cache):
        self.device = device
        self.setup = setup
        self.user_metrics = tuple(user_metrics)
        self.constants = dict(constants or {})
        self.cache = cache if cache is not None else ResultCache()
        self.device_executions = 0
        self.evaluations = 0

    def evaluate(self, config: KernelConfig) -> tuple[BenchmarkResult, bool]:
        """Returns (result, executed); executed is False on a cache hit."""
        self.evaluations += 1
        cached = self.cache.get(config)
        if cached is not None:
            return cached, False
        result = benchmark(
            self.device,
            config,
            self.setup.observers,
            user_metrics=self.user_metrics,
            constants=self.constants,
            averaged_cfg=self.setup.averaged,
        )
        self.cache.put(result)
        self.device_executions += 1
        return result, True


def run_strategy(
    run: TuningRun,
    device: SimulatedDevice,
    observers: Sequence[BenchmarkObserver] = (),
    *,
    user_metrics: Sequence[UserMetric] = (),
    constants: Mapping[str, float] | None = None,
    cache: ResultCache | None = None,
    averaged_cfg: AveragedSensorConfig | None = None,
) -> StrategyOutcome:
    """Execute one tuning run and return the best result plus history.

    The history lists every evaluation in order (including cache hits);
    the budget only counts actual device executions.
    """
    setup = MeasurementSetup(tuple(observers), averaged_cfg or AveragedSensorConfig())
    evaluator = _Evaluator(device, setup, user_metrics, constants, cache)
    configs = run.space.enumerate()
    if not configs:
        raise TuningError("the search space has no valid configurations")
    rng = np.random.default_rng(run.seed)
    history: list[BenchmarkResult] = []
    minima: list[KernelConfig] = []

    if run.strategy == "exhaustive":
        for config in configs:
            result, _ = evaluator.evaluate(config)
            history.append(result)
    elif run.strategy == "random":
        budget = run.budget if run.budget is not None else len(configs)
        order = rng.permutation(len(configs))
        remaining = budget
        for index in order:
            if remaining <= 0:
                break
            result, executed = evaluator.evaluate(configs[index])
            history.append(result)
            if executed:
                remaining -= 1
    else:
        _local_search(run, configs, evaluator, rng, history, minima)

    successes = [r for r in history if not r.failed]
    if not successes:
        raise TuningError(
            f"no successful evaluations in {len(history)} attempts"
        )
    best = min(successes, key=run.objective.fitness)
    return StrategyOutcome(
        best=best,
        history=history,
        minima_reached=minima,
        device_executions=evaluator.device_executions,
        evaluations=evaluator.evaluations,
    )


def _local_search(
    run: TuningRun,
    configs: Sequence[KernelConfig],
    evaluator: _Evaluator,
    rng: np.random.Generator,
    history: list[BenchmarkResult],
    minima: list[KernelConfig],
) -> None:
    """Randomized first-improvement local search with random restarts.

    Stops when the execution budget is spent, or, once the whole space sits
    in the cache (a fully warm cache never spends budget), after one final
    walk: further restarts could only revisit known results forever.
    """
    objective = run.objective
    budget = run.budget if run.budget is not None else len(configs)
    remaining = budget

    def spend(config: KernelConfig) -> BenchmarkResult | None:
        nonlocal remaining
        if remaining <= 0:
            return None
        result, executed = evaluator.evaluate(config)
        if executed:
            remaining -= 1
        history.append(result)
        return result

    space_size = len(configs)
    while remaining > 0:
        start = configs[int(rng.integers(space_size))]
        current = spend(start)
        if current is None:
            break
        walking = True
        while walking:
            neighbors = run.space.neighbors(current.config)
            order = rng.permutation(len(neighbors))
            for index in order:
                candidate = spend(neighbors[int(index)])
                if candidate is None:
                    return
                if objective.fitness(candidate) < objective.fitness(current):
                    current = candidate
                    break
            else:
                minima.append(current.config)
                walking = False
        if len(evaluator.cache) >= space_size:
            break


@dataclass(frozen=True)
class StageReport:
    label: str
    space_size: int
    best: BenchmarkResult


@dataclass(frozen=True)
class PipelineReport:
    name: str
    stages: tuple[StageReport, ...]
    best: BenchmarkResult

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "stages": [
                {
                    "label": s.label,
                    "space_size": s.space_size,
                    "best": s.best.to_dict(),
                }
                for s in self.stages
            ],
            "best": self.best.to_dict(),
        }


def _nearest_value(values: Iterable[float], target: float) -> float:
    return min(values, key=lambda v: (abs(v - target), -v))


def run_pipeline(
    name: str,
    space: SearchSpace,
    device: SimulatedDevice,
    observers: Sequence[BenchmarkObserver] = (),
    *,
    clock_param: str = CLOCK_PARAM,
    strategy: str = "exhaustive",
    budget: int | None = None,
    seed: int = 0,
    user_metrics: Sequence[UserMetric] = (),
    constants: Mapping[str, float] | None = None,
    cache: ResultCache | None = None,
    averaged_cfg: AveragedSensorConfig | None = None,
) -> PipelineReport:
    """Run one of the five tuning recipes over an augmented space.

    The space must contain the clock parameter; stages restrict it (to the
    maximum clock, the base clock, or the full sweep) and tune the remaining
    parameters for time or energy as the recipe dictates.
    """
    if name not in PIPELINES:
        raise ConfigurationError(f"unknown pipeline {name!r}; choose from {PIPELINES}")
    if clock_param not in space.names:
        raise ConfigurationError(
            f"pipeline {name!r} needs a {clock_param!r} parameter in the space"
        )
    cache = cache if cache is not None else ResultCache()
    clock_values = space.parameter(clock_param).values
    max_clock = max(clock_values)
    base_clock = _nearest_value(clock_values, device.spec.base_clock)
    kwargs = dict(
        user_metrics=user_metrics,
        constants=constants,
        cache=cache,
        averaged_cfg=averaged_cfg,
    )

    def stage(label, stage_space, objective, stage_seed) -> StageReport:
        run = TuningRun(
            space=stage_space,
            strategy=strategy,
            objective=objective,
            budget=budget,
            seed=stage_seed,
        )
        outcome = run_strategy(run, device, observers, **kwargs)
        return StageReport(label, stage_space.size(), outcome.best)

    minimize_time = Objective("time", "minimize")
    minimize_energy = Objective("energy", "minimize")

    if name == "race_to_idle":
        report = stage(
            "time at max clock",
            space.with_values(clock_param, [max_clock]),
            minimize_time,
            seed,
        )
        stages = (report,)
    elif name == "energy_to_solution_maxclock":
        report = stage(
            "energy at max clock",
            space.with_values(clock_param, [max_clock]),
            minimize_energy,
            seed,
        )
        stages = (report,)
    elif name == "race_to_idle_plus_clocks":
        first = stage(
            "time at max clock",
            space.with_values(clock_param, [max_clock]),
            minimize_time,
            seed,
        )
        pinned = _pin_kernel_params(space, first.best.config, clock_param)
        second = stage("clock sweep for energy", pinned, minimize_energy, seed + 1)
        stages = (first, second)
    elif name == "energy_to_solution_plus_clocks":
        first = stage(
            "energy at base clock",
            space.with_values(clock_param, [base_clock]),
            minimize_energy,
            seed,
        )
        pinned = _pin_kernel_params(space, first.best.config, clock_param)
        second = stage("clock sweep for energy", pinned, minimize_energy, seed + 1)
        stages = (first, second)
    else:  # global
        report = stage("energy over full space", space, minimize_energy, seed)
        stages = (report,)

    return PipelineReport(name=name, stages=stages, best=stages[-1].best)


def _pin_kernel_params(
    space: SearchSpace, config: KernelConfig, clock_param: str
) -> SearchSpace:
    """Freeze every non-clock parameter at the config's value."""
    pinned = space
    for parameter in space.parameters:
        if parameter.name == clock_param:
            continue
        pinned = pinned.with_values(parameter.name, [config[parameter.name]])
    return pinned
