"""Power measurement semantics on top of device traces.

Two sensor families are modeled:

* an averaged sensor in the style of on-board management libraries: it
  reports the mean power of the last completed refresh window (10 Hz by
  default), so readings are piecewise constant and lag the signal. Short
  kernels are therefore benchmarked continuously: the kernel repeats
  back-to-back for a fixed duration (1 s by default) and the energy is the
  final window reading times the sampled duration.
* an instant sensor in the style of an external power meter sampling at
  2.87 kHz with ~1% error. Energy between two instants is the median sample
  power times the elapsed time, which is robust against outlier samples.

Observers hook into benchmark execution through a small lifecycle:
``before_start`` -> ``after_start`` -> ``during`` (repeated) ->
``after_finish`` -> ``get_results``. Because the simulator produces whole
traces synchronously, the lifecycle is driven over a :class:`TracePlayback`
that steps simulated time through the recorded trace.
"""

from __future__ import annotations

import math
import statistics
import warnings
from dataclasses import dataclass
from typing import Sequence

from .device import Execution, PowerSample, SimulatedDevice
from .errors import ConfigurationError, MeasurementError, SensorNotReadyError
from .searchspace import KernelConfig


@dataclass(frozen=True)
class AveragedSensorConfig:
    refresh_rate: float = 10.0  # Hz
    continuous_duration: float = 1.0  # seconds

    def __post_init__(self):
        if self.refresh_rate <= 0 or self.continuous_duration <= 0:
            raise ConfigurationError("sensor rates and durations must be positive")


@dataclass(frozen=True)
class InstantSensorConfig:
    sample_rate: float = 2870.0  # Hz

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ConfigurationError("sensor rates and durations must be positive")


def _trapezoid(xs, ys) -> float:
    total = 0.0
    for i in range(1, len(xs)):
        total += 0.5 * (ys[i] + ys[i - 1]) * (xs[i] - xs[i - 1])
    return total


def _interp(samples: Sequence[PowerSample], t: float) -> float:
    """Linear interpolation of the trace at time t (clamped at the ends)."""
    if t <= samples[0].timestamp:
        return samples[0].power
    if t >= samples[-1].timestamp:
        return samples[-1].power
    lo, hi = 0, len(samples) - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if samples[mid].timestamp <= t:
            lo = mid
        else:
            hi = mid
    a, b = samples[lo], samples[hi]
    if b.timestamp == a.timestamp:
        return b.power
    frac = (t - a.timestamp) / (b.timestamp - a.timestamp)
    return a.power + frac * (b.power - a.power)


def averaged_reading(
    samples: Sequence[PowerSample], t: float, cfg: AveragedSensorConfig | None = None
) -> float:
    """The averaged sensor's reported power at time ``t``.

    Returns the time-weighted mean of the trace over the most recent refresh
    window that completed at or before ``t``. Readings change only at window
    boundaries, which is what makes the sensor piecewise constant.
    """
    cfg = cfg or AveragedSensorConfig()
    if not samples:
        raise MeasurementError("empty trace")
    width = 1.0 / cfg.refresh_rate
    completed = math.floor(t * cfg.refresh_rate + 1e-9)
    if completed < 1:
        raise SensorNotReadyError(
            f"no completed {width:.3g}s window at t={t:.6g}s"
        )
    end = completed * width
    start = end - width
    if samples[0].timestamp > start + 1e-12 or samples[-1].timestamp < end - 1e-12:
        raise MeasurementError(
            f"trace [{samples[0].timestamp:.6g}, {samples[-1].timestamp:.6g}] "
            f"does not cover window [{start:.6g}, {end:.6g}]"
        )
    xs = [start]
    ys = [_interp(samples, start)]
    for sample in samples:
        if start < sample.timestamp < end:
            xs.append(sample.timestamp)
            ys.append(sample.power)
    xs.append(end)
    ys.append(_interp(samples, end))
    return _trapezoid(xs, ys) / width


def instant_energy(samples: Sequence[PowerSample], t0: float, t1: float) -> float:
    """Energy between two instants: median sample power times elapsed time."""
    if t0 >= t1:
        raise MeasurementError(f"inverted window: t0={t0} >= t1={t1}")
    window = [s.power for s in samples if t0 <= s.timestamp <= t1]
    if not window:
        raise MeasurementError(f"no samples in [{t0}, {t1}]")
    return statistics.median(window) * (t1 - t0)


@dataclass(frozen=True)
class ContinuousResult:
    energy: float
    mean_power: float
    repetitions: int
    duration: float
    long_kernel: bool = False


def continuous_benchmark(
    device: SimulatedDevice,
    config: KernelConfig,
    cfg: AveragedSensorConfig | None = None,
) -> ContinuousResult:
    """Benchmark a kernel continuously against the averaged sensor.

    The kernel repeats back-to-back until at least ``continuous_duration``
    has elapsed; the energy is the final completed window reading times the
    sampled duration. Kernels whose single run already exceeds ten times the
    duration are flagged: repetition adds nothing there, a warning is issued
    and the single execution is measured instead.
    """
    cfg = cfg or AveragedSensorConfig()
    probe = device.surface.runtime(
        device.kernel_view(config), device.effective_clock(
            utilization=device.surface.utilization(device.kernel_view(config)))
    )
    long_kernel = probe > 10.0 * cfg.continuous_duration
    if long_kernel:
        warnings.warn(
            f"kernel runtime {probe:.3g}s dwarfs the {cfg.continuous_duration:.3g}s "
            "benchmark duration; measuring a single execution",
            stacklevel=2,
        )
        execution = device.execute(config, duration_hint=0.0)
    else:
        execution = device.execute(config, duration_hint=cfg.continuous_duration)
    reading = averaged_reading(execution.samples, execution.total_duration, cfg)
    energy = reading * execution.total_duration
    return ContinuousResult(
        energy=energy,
        mean_power=reading,
        repetitions=execution.repetitions,
        duration=execution.total_duration,
        long_kernel=long_kernel,
    )


class TracePlayback:
    """Simulated clock stepping over a recorded execution trace."""

    def __init__(self, execution: Execution):
        self.execution = execution
        self.now = 0.0

    @property
    def runtime(self) -> float:
        return self.execution.runtime

    @property
    def total_duration(self) -> float:
        return self.execution.total_duration

    def advance(self, dt: float) -> bool:
        """Step simulated time; False once the trace is exhausted."""
        if self.now >= self.total_duration:
            return False
        self.now = min(self.now + dt, self.total_duration)
        return True

    def instant_power(self) -> float:
        return _interp(self.execution.samples, self.now)

    def averaged_power(self, cfg: AveragedSensorConfig) -> float:
        return averaged_reading(self.execution.samples, self.now, cfg)

    def final_averaged_power(self, cfg: AveragedSensorConfig) -> float:
        return averaged_reading(self.execution.samples, self.total_duration, cfg)


class BenchmarkObserver:
    """Base observer; subclasses override the hooks they care about.

    ``get_results`` must return a flat mapping whose keys carry the
    observer's prefix so results from several observers merge without
    collisions.
    """

    def before_start(self) -> None:
        pass

    def after_start(self, playback: TracePlayback) -> None:
        pass

    def during(self, playback: TracePlayback) -> None:
        pass

    def after_finish(self, playback: TracePlayback) -> None:
        pass

    def get_results(self) -> dict[str, float]:
        return {}


class InstantPowerObserver(BenchmarkObserver):
    """External fast power meter. Results use the ``ps_`` prefix."""

    prefix = "ps_"

    def __init__(self, cfg: InstantSensorConfig | None = None):
        self.cfg = cfg or InstantSensorConfig()
        self._readings: list[tuple[float, float]] = []
        self._runtime = 0.0

    def before_start(self) -> None:
        self._readings = []

    def after_start(self, playback: TracePlayback) -> None:
        self._readings.append((playback.now, playback.instant_power()))

    def during(self, playback: TracePlayback) -> None:
        self._readings.append((playback.now, playback.instant_power()))

    def after_finish(self, playback: TracePlayback) -> None:
        self._runtime = playback.runtime

    def get_results(self) -> dict[str, float]:
        powers = [p for t, p in self._readings if t <= self._runtime + 1e-12]
        if not powers:
            return {}
        median = statistics.median(powers)
        return {"ps_power": median, "ps_energy": median * self._runtime}


class AveragedPowerObserver(BenchmarkObserver):
    """On-board averaged sensor. Results use the ``nvml_`` prefix."""

    prefix = "nvml_"

    def __init__(self, cfg: AveragedSensorConfig | None = None):
        self.cfg = cfg or AveragedSensorConfig()
        self._final_reading: float | None = None
        self._duration = 0.0

    def before_start(self) -> None:
        self._final_reading = None

    def after_finish(self, playback: TracePlayback) -> None:
        self._duration = playback.total_duration
        try:
            self._final_reading = playback.final_averaged_power(self.cfg)
        except SensorNotReadyError:
            self._final_reading = None

    def get_results(self) -> dict[str, float]:
        if self._final_reading is None:
            return {}
        return {
            "nvml_power": self._final_reading,
            "nvml_energy": self._final_reading * self._duration,
        }
