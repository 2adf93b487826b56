"""Simulated GPU devices.

The simulator produces power traces from a quasi-static load model

    P(f) = min(p_max, p_idle + u * alpha * f * v(f)^2)

where ``u`` is the per-kernel utilization fraction and the core voltage
follows a continuous piecewise-linear curve that is flat below a threshold
frequency ``tau_ft`` and rises linearly above it:

    v(f) = v0                             for f <  tau_ft
    v(f) = v0 * (1 + beta * (f - tau_ft)) for f >= tau_ft

Requested clocks are granted only at supported steps; when the configured
power limit would be exceeded the device falls back to the highest supported
clock whose modeled power stays within the limit (and clamps to the lowest
clock if none qualifies, mirroring how real devices keep running).
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import CapabilityError, ConfigurationError, DomainError
from .searchspace import KernelConfig

# Parameter names that configure the execution environment rather than the
# kernel itself. The simulator applies them to device state and hides them
# from the performance surface.
CLOCK_PARAM = "nvml_gr_clock"
MEM_CLOCK_PARAM = "nvml_mem_clock"
POWER_LIMIT_PARAM = "nvml_pwr_limit"
EXECUTION_PARAMS = (CLOCK_PARAM, MEM_CLOCK_PARAM, POWER_LIMIT_PARAM)


@dataclass(frozen=True)
class DeviceSpec:
    """Static capabilities of a device."""

    name: str
    supported_core_clocks: tuple[float, ...]
    base_clock: float
    peak_clock: float
    power_limit_range: tuple[float, float]
    tdp: float
    voltage_readable: bool = False

    def __post_init__(self):
        object.__setattr__(
            self, "supported_core_clocks", tuple(float(c) for c in self.supported_core_clocks)
        )
        object.__setattr__(self, "power_limit_range", tuple(self.power_limit_range))
        clocks = self.supported_core_clocks
        if len(clocks) < 2 or list(clocks) != sorted(set(clocks)):
            raise ConfigurationError(
                f"{self.name}: supported clocks must be a sorted set of >= 2 values"
            )
        if self.base_clock not in clocks or self.peak_clock not in clocks:
            raise ConfigurationError(
                f"{self.name}: base and peak clock must be supported clocks"
            )
        if self.base_clock > self.peak_clock:
            raise ConfigurationError(f"{self.name}: base clock above peak clock")
        low, high = self.power_limit_range
        if not 0 < low < high:
            raise ConfigurationError(f"{self.name}: bad power limit range {low}..{high}")
        if high > self.tdp:
            raise ConfigurationError(
                f"{self.name}: power limit range exceeds TDP {self.tdp}"
            )


@dataclass(frozen=True)
class GroundTruth:
    """Hidden model parameters that drive a simulated device.

    ``noise_stddev`` is the relative standard deviation of the multiplicative
    Gaussian noise applied to every power sample; zero gives a noise-free
    device for exact oracles.
    """

    p_idle: float
    p_max: float
    alpha: float
    tau_ft: float
    beta: float
    noise_stddev: float = 0.01
    v0: float = 1.0

    def __post_init__(self):
        for name in ("p_idle", "p_max", "alpha", "tau_ft", "beta", "v0"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"ground truth {name} must be positive")
        if self.p_idle >= self.p_max:
            raise ConfigurationError("ground truth needs p_idle < p_max")
        if self.noise_stddev < 0:
            raise ConfigurationError("noise_stddev must be >= 0")

    def voltage(self, frequency: float) -> float:
        if frequency < self.tau_ft:
            return self.v0
        return self.v0 * (1.0 + self.beta * (frequency - self.tau_ft))

    def power(self, frequency: float, utilization: float = 1.0) -> float:
        """Noise-free steady-state power at a given core clock."""
        v = self.voltage(frequency)
        return min(self.p_max, self.p_idle + utilization * self.alpha * frequency * v * v)


@dataclass(frozen=True)
class DeviceState:
    core_clock: float
    power_limit: float


@dataclass(frozen=True)
class PowerSample:
    timestamp: float
    power: float


@dataclass(frozen=True)
class Execution:
    """Result of one (possibly internally repeated) kernel execution."""

    runtime: float
    samples: tuple[PowerSample, ...]
    effective_clock: float
    repetitions: int
    total_duration: float


def _unit_draw(seed: int, *parts: object) -> float:
    """Deterministic uniform draw in [0, 1) from a stable hash."""
    payload = json.dumps([seed, *parts], separators=(",", ":"), default=str)
    digest = hashlib.sha256(payload.encode()).digest()
    return int.from_bytes(digest[:8], "big") / 2.0**64


class PerformanceSurface:
    """Kernel cost model: single-execution runtime plus load characteristics.

    ``runtime`` follows the usual scaling law for a kernel that is a mix of
    clock-bound and clock-insensitive work: with compute fraction ``kappa``
    and reference clock ``f_ref``,

        t(f) = t_ref * (kappa * f_ref / f + (1 - kappa))
    """

    reference_clock: float

    def base_runtime(self, config: KernelConfig) -> float:
        raise NotImplementedError

    def compute_fraction(self, config: KernelConfig) -> float:
        raise NotImplementedError

    def utilization(self, config: KernelConfig) -> float:
        raise NotImplementedError

    def runtime(self, config: KernelConfig, clock: float) -> float:
        kappa = self.compute_fraction(config)
        scale = kappa * self.reference_clock / clock + (1.0 - kappa)
        return self.base_runtime(config) * scale


@dataclass(frozen=True)
class ConstantSurface(PerformanceSurface):
    """Uniform surface: every config costs the same. Default for synthetic
    full-load kernels such as the clock sweep benchmark."""

    reference_clock: float
    base_time: float = 1e-3
    kappa: float = 1.0
    load: float = 1.0

    def base_runtime(self, config: KernelConfig) -> float:
        return self.base_time

    def compute_fraction(self, config: KernelConfig) -> float:
        return self.kappa

    def utilization(self, config: KernelConfig) -> float:
        return self.load


@dataclass(frozen=True)
class SyntheticSurface(PerformanceSurface):
    """Deterministic pseudo-random surface over kernel configs.

    Per-config draws come from a stable hash of (seed, parameter values), so
    the surface is reproducible across processes and platforms. The runtime
    landscape combines independent per-parameter weights with pairwise
    interaction terms, which produces multiple local optima instead of a
    separable bowl. Utilization can be correlated with the compute fraction
    through ``utilization_kappa_weight``: clock-sensitive configs then draw
    more power, the tension that separates time-optimal from energy-optimal
    configurations.
    """

    reference_clock: float
    seed: int = 0
    base_time: float = 1e-3
    weight_single: float = 0.35
    weight_pair: float = 0.25
    kappa_range: tuple[float, float] = (0.55, 1.0)
    utilization_range: tuple[float, float] = (0.45, 1.0)
    utilization_kappa_weight: float = 0.6

    def _items(self, config: KernelConfig):
        return [(k, v) for k, v in config.items if k not in EXECUTION_PARAMS]

    def base_runtime(self, config: KernelConfig) -> float:
        items = self._items(config)
        log_cost = 0.0
        for name, value in items:
            z = 2.0 * _unit_draw(self.seed, "single", name, value) - 1.0
            log_cost += self.weight_single * z
        for (n1, v1), (n2, v2) in zip(items, items[1:]):
            z = 2.0 * _unit_draw(self.seed, "pair", n1, v1, n2, v2) - 1.0
            log_cost += self.weight_pair * z
        return self.base_time * math.exp(log_cost)

    def compute_fraction(self, config: KernelConfig) -> float:
        low, high = self.kappa_range
        return low + (high - low) * _unit_draw(self.seed, "kappa", self._items(config))

    def utilization(self, config: KernelConfig) -> float:
        low, high = self.utilization_range
        draw = _unit_draw(self.seed, "load", self._items(config))
        k_low, k_high = self.kappa_range
        kappa_unit = (self.compute_fraction(config) - k_low) / max(k_high - k_low, 1e-12)
        w = self.utilization_kappa_weight
        mixed = (1.0 - w) * draw + w * kappa_unit
        return min(high, max(low, low + (high - low) * mixed))


class SimulatedDevice:
    """A device whose sensors are synthesized from a hidden ground truth."""

    def __init__(
        self,
        spec: DeviceSpec,
        ground_truth: GroundTruth,
        surface: PerformanceSurface | None = None,
        *,
        seed: int = 0,
        sample_rate_hz: float = 2870.0,
        warmup_tau: float = 0.0,
    ):
        clocks = spec.supported_core_clocks
        if not clocks[0] <= ground_truth.tau_ft <= clocks[-1]:
            raise ConfigurationError(
                f"{spec.name}: tau_ft {ground_truth.tau_ft} outside clock range"
            )
        if sample_rate_hz <= 0:
            raise ConfigurationError("sample_rate_hz must be positive")
        self.spec = spec
        self.ground_truth = ground_truth
        self.surface = surface or ConstantSurface(reference_clock=spec.peak_clock)
        self.sample_rate_hz = float(sample_rate_hz)
        self.warmup_tau = float(warmup_tau)
        self.state = DeviceState(spec.base_clock, spec.power_limit_range[1])
        self.execution_count = 0
        self._rng = np.random.default_rng(seed)

    # -- state -----------------------------------------------------------

    def set_core_clock(self, clock: float) -> DeviceState:
        if clock not in self.spec.supported_core_clocks:
            raise DomainError(
                f"{clock} MHz is not supported on {self.spec.name}; "
                f"supported: {list(self.spec.supported_core_clocks)}"
            )
        self.state = replace(self.state, core_clock=float(clock))
        return self.state

    def set_power_limit(self, watts: float) -> DeviceState:
        low, high = self.spec.power_limit_range
        if not low <= watts <= high:
            raise DomainError(
                f"power limit {watts} W outside [{low}, {high}] W on {self.spec.name}"
            )
        self.state = replace(self.state, power_limit=float(watts))
        return self.state

    # -- model -----------------------------------------------------------

    def voltage(self, clock: float) -> float:
        """Noise-free modeled core voltage at a clock."""
        return self.ground_truth.voltage(clock)

    def modeled_power(self, clock: float | None = None, *, utilization: float = 1.0) -> float:
        """Noise-free steady-state power at a clock (defaults to current)."""
        if clock is None:
            clock = self.state.core_clock
        return self.ground_truth.power(clock, utilization)

    def effective_clock(self, requested: float | None = None, *, utilization: float = 1.0) -> float:
        """The clock the device actually runs at under the power limit.

        Highest supported clock <= requested whose modeled power stays within
        the limit; clamps to the lowest supported clock when even that one
        would exceed it.
        """
        if requested is None:
            requested = self.state.core_clock
        limit = self.state.power_limit
        candidates = [c for c in self.spec.supported_core_clocks if c <= requested]
        if not candidates:
            candidates = [self.spec.supported_core_clocks[0]]
        for clock in reversed(candidates):
            if self.modeled_power(clock, utilization=utilization) <= limit:
                return clock
        return self.spec.supported_core_clocks[0]

    def read_voltage(self, clock: float) -> float:
        """Sensor read of the core voltage at a supported clock.

        Only available when the device spec advertises voltage readings.
        """
        if not self.spec.voltage_readable:
            raise CapabilityError(
                f"{self.spec.name} does not support voltage readings"
            )
        if clock not in self.spec.supported_core_clocks:
            raise DomainError(
                f"{clock} MHz is not supported on {self.spec.name}; "
                f"supported: {list(self.spec.supported_core_clocks)}"
            )
        truth = self.ground_truth.voltage(clock)
        noise = self._rng.normal(0.0, self.ground_truth.noise_stddev * self.ground_truth.v0 * 0.1)
        return max(0.0, truth + noise)

    # -- execution ---------------------------------------------------------

    def kernel_view(self, config: KernelConfig) -> KernelConfig:
        """The config as the kernel sees it: execution parameters stripped."""
        return config.drop(*EXECUTION_PARAMS)

    def execute(self, config: KernelConfig, duration_hint: float = 0.0) -> Execution:
        """Run a kernel config, repeating back-to-back for at least
        ``duration_hint`` seconds, and return runtime plus power trace.

        The trace covers [0, total_duration] at the device sample rate with
        multiplicative Gaussian noise applied to each sample.
        """
        kernel = self.kernel_view(config)
        utilization = self.surface.utilization(kernel)
        f_eff = self.effective_clock(utilization=utilization)
        runtime = self.surface.runtime(kernel, f_eff)
        if not runtime > 0 or not math.isfinite(runtime):
            raise DomainError(f"surface produced a non-positive runtime for {config}")
        repetitions = max(1, math.ceil(duration_hint / runtime)) if duration_hint > 0 else 1
        total = repetitions * runtime
        steady = self.modeled_power(f_eff, utilization=utilization)

        dt = 1.0 / self.sample_rate_hz
        count = int(math.floor(total / dt))
        times = np.arange(count + 1) * dt
        if times[-1] < total:
            times = np.append(times, total)
        if self.warmup_tau > 0:
            idle = self.ground_truth.p_idle
            powers = idle + (steady - idle) * (1.0 - np.exp(-times / self.warmup_tau))
        else:
            powers = np.full(times.shape, steady)
        if self.ground_truth.noise_stddev > 0:
            powers = powers * (1.0 + self._rng.normal(0.0, self.ground_truth.noise_stddev, times.shape))
        powers = np.maximum(powers, 0.0)

        self.execution_count += 1
        samples = tuple(PowerSample(float(t), float(p)) for t, p in zip(times, powers))
        return Execution(runtime, samples, f_eff, repetitions, total)


# -- serialization ---------------------------------------------------------

def spec_from_dict(data: Mapping[str, Any]) -> DeviceSpec:
    try:
        return DeviceSpec(
            name=data["name"],
            supported_core_clocks=tuple(data["supported_core_clocks"]),
            base_clock=data["base_clock"],
            peak_clock=data["peak_clock"],
            power_limit_range=tuple(data["power_limit_range"]),
            tdp=data["tdp"],
            voltage_readable=data.get("voltage_readable", False),
        )
    except KeyError as exc:
        raise ConfigurationError(f"device spec lacks field {exc}") from exc


def surface_from_dict(data: Mapping[str, Any] | None, reference_clock: float) -> PerformanceSurface:
    if data is None:
        return ConstantSurface(reference_clock=reference_clock)
    kind = data.get("kind", "synthetic")
    fields = {k: v for k, v in data.items() if k != "kind"}
    for key in ("kappa_range", "utilization_range"):
        if key in fields:
            fields[key] = tuple(fields[key])
    fields.setdefault("reference_clock", reference_clock)
    try:
        if kind == "synthetic":
            return SyntheticSurface(**fields)
        if kind == "constant":
            return ConstantSurface(**fields)
    except TypeError as exc:
        raise ConfigurationError(f"bad surface section: {exc}") from exc
    raise ConfigurationError(f"unknown surface kind {kind!r}")


def load_device(path: str | Path, *, seed: int = 0) -> SimulatedDevice:
    """Build a simulated device from a JSON file.

    The file must carry a ``ground_truth`` section; files without one
    describe real hardware, which this package has no adapter for.
    """
    try:
        with open(path) as handle:
            data = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot load device from {path}: {exc}") from exc
    spec = spec_from_dict(data)
    if "ground_truth" not in data:
        raise CapabilityError(
            f"{path} has no ground_truth section; only simulated devices are supported"
        )
    try:
        truth = GroundTruth(**data["ground_truth"])
    except TypeError as exc:
        raise ConfigurationError(f"bad ground_truth section in {path}: {exc}") from exc
    surface = surface_from_dict(data.get("surface"), spec.peak_clock)
    extras = {
        k: data[k] for k in ("sample_rate_hz", "warmup_tau") if k in data
    }
    return SimulatedDevice(spec, truth, surface, seed=seed, **extras)


def write_trace_csv(samples: Sequence[PowerSample], path: str | Path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["timestamp_s", "power_w"])
        for sample in samples:
            writer.writerow([f"{sample.timestamp:.9f}", f"{sample.power:.6f}"])


def read_trace_csv(path: str | Path) -> list[PowerSample]:
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        return [
            PowerSample(float(row["timestamp_s"]), float(row["power_w"]))
            for row in reader
        ]
