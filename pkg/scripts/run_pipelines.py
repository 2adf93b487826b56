"""Compare the five tuning pipelines on one simulated device.

Runs every pipeline over the same augmented space with a shared result
cache, then prints a table of best configs, runtimes, energies, and the
energy gap each pipeline leaves on the table relative to the global
exhaustive search.

Usage:
    python scripts/run_pipelines.py
    python scripts/run_pipelines.py --space my_space.json --device my_gpu.json \
        --observer averaged --out pipelines.json
"""

import argparse
import json
from pathlib import Path

from jouletune import presets
from jouletune.device import load_device
from jouletune.observers import AveragedPowerObserver, AveragedSensorConfig, InstantPowerObserver
from jouletune.searchspace import SearchSpace
from jouletune.tuner import PIPELINES, ResultCache, run_pipeline


def parse_args():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--space", default=None, help="search space JSON (default: bundled mimic space)")
    parser.add_argument("--device", default=None, help="device JSON (default: bundled a100_mimic)")
    parser.add_argument("--observer", choices=["instant", "averaged"], default="instant")
    parser.add_argument("--duration", type=float, default=1.0, help="averaged-mode benchmark duration (s)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default=None, help="write the full comparison as JSON")
    return parser.parse_args()


def main():
    args = parse_args()
    space = (
        SearchSpace.from_json(args.space)
        if args.space
        else presets.a100_mimic_space()
    )
    device = (
        load_device(args.device, seed=args.seed)
        if args.device
        else presets.device("a100_mimic", seed=args.seed)
    )
    averaged_cfg = AveragedSensorConfig(continuous_duration=args.duration)
    observers = (
        [InstantPowerObserver()]
        if args.observer == "instant"
        else [AveragedPowerObserver(averaged_cfg)]
    )
    cache = ResultCache()

    print(f"device {device.spec.name}: {len(device.spec.supported_core_clocks)} clocks, "
          f"space of {space.size()} configs\n")
    reports = {}
    for name in PIPELINES:
        before = device.execution_count
        reports[name] = run_pipeline(
            name, space, device, observers,
            seed=args.seed, cache=cache, averaged_cfg=averaged_cfg,
        )
        print(f"  {name:32s} ran {device.execution_count - before:4d} fresh executions")

    global_best = reports["global"].best
    print(f"\n{'pipeline':32s} {'time (s)':>10s} {'energy (J)':>11s} {'vs global':>10s}  best config")
    for name in PIPELINES:
        best = reports[name].best
        gap = (best.energy - global_best.energy) / global_best.energy
        print(f"{name:32s} {best.time:10.6f} {best.energy:11.6f} {gap:+9.1%}  {best.config.as_dict()}")

    if args.out:
        payload = {name: report.to_dict() for name, report in reports.items()}
        Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        print(f"\nwrote {args.out}")


if __name__ == "__main__":
    main()
