"""Packaged fixtures: search spaces and simulated device files.

``gemm_space`` is a reduced dense matrix-multiply tuning space.
``device(name)`` loads one of five simulated GPUs whose clock grids, power
envelopes, and voltage curves mimic commonly benchmarked parts. The
``a100_mimic`` pair bundles a small augmented space with a noise-free
device whose per-config utilization spans a wide range independently of
runtime, the regime where time-optimal and energy-optimal configurations
diverge.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .device import SimulatedDevice, load_device
from .searchspace import SearchSpace

DEVICE_NAMES = (
    "a100_like",
    "a4000_like",
    "a6000_like",
    "v100_like",
    "titan_rtx_like",
    "a100_mimic",
)

# Operation count of the 4096^3 matrix multiply the GEMM fixture stands for,
# used to derive throughput (gflops) and efficiency (gflops_per_w) metrics.
GEMM_TOTAL_FLOPS = 2.0 * 4096.0**3


def fixture_path(name: str) -> Path:
    return Path(str(resources.files(__package__) / "fixtures" / name))


def spec_path(name: str) -> Path:
    return Path(str(resources.files(__package__) / "specs" / f"{name}.json"))


def gemm_space() -> SearchSpace:
    return SearchSpace.from_json(fixture_path("gemm_space.json"))


def a100_mimic_space() -> SearchSpace:
    return SearchSpace.from_json(fixture_path("a100_mimic_space.json"))


def device(name: str, *, seed: int = 0) -> SimulatedDevice:
    if name not in DEVICE_NAMES:
        raise ValueError(f"unknown device fixture {name!r}; choose from {DEVICE_NAMES}")
    return load_device(spec_path(name), seed=seed)


def a100_mimic(*, seed: int = 0) -> tuple[SearchSpace, SimulatedDevice]:
    """The augmented space and noise-free device used by the pipeline,
    Pareto, and difficulty studies."""
    return a100_mimic_space(), device("a100_mimic", seed=seed)
