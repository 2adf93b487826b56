"""Fit the load power model to clock sweeps of the bundled devices.

For each device the script measures a full-load clock/power[/voltage]
sweep, fits the model, and prints fitted parameters next to the hidden
ground truth, plus the recommended clock and the share of the grid a
+-10% band around it throws away.

Usage:
    python scripts/fit_power_model.py
    python scripts/fit_power_model.py --device a100_like --points 25 --csv sweep.csv
"""

import argparse

from jouletune import presets
from jouletune.device import ConstantSurface
from jouletune.observers import AveragedSensorConfig, averaged_reading
from jouletune.powermodel import (
    FrequencySample,
    fit,
    frequency_band,
    optimal_frequency,
    write_samples_csv,
)
from jouletune.searchspace import KernelConfig


def parse_args():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument(
        "--device", choices=presets.DEVICE_NAMES, default=None,
        help="fit a single device (default: all five sweep presets)",
    )
    parser.add_argument("--points", type=int, default=None, help="subsample the clock grid")
    parser.add_argument("--duration", type=float, default=1.0, help="seconds per clock point")
    parser.add_argument("--pct", type=float, default=0.10, help="half-width of the clock band")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--csv", default=None, help="also write the last sweep as CSV")
    return parser.parse_args()


def measure_sweep(device, points, duration):
    device.surface = ConstantSurface(
        reference_clock=device.spec.peak_clock, base_time=1e-3, kappa=1.0, load=1.0
    )
    clocks = list(device.spec.supported_core_clocks)
    if points is not None and points < len(clocks):
        stride = (len(clocks) - 1) / (points - 1)
        clocks = [clocks[round(i * stride)] for i in range(points)]
    cfg = AveragedSensorConfig(continuous_duration=duration)
    samples = []
    for clock in clocks:
        device.set_core_clock(clock)
        execution = device.execute(KernelConfig(()), duration_hint=duration)
        power = averaged_reading(execution.samples, execution.total_duration, cfg)
        voltage = device.read_voltage(clock) if device.spec.voltage_readable else None
        samples.append(FrequencySample(frequency=clock, power=power, voltage=voltage))
    return samples


def main():
    args = parse_args()
    names = [args.device] if args.device else [
        n for n in presets.DEVICE_NAMES if n != "a100_mimic"
    ]
    samples = []
    for name in names:
        device = presets.device(name, seed=args.seed)
        truth = device.ground_truth
        samples = measure_sweep(device, args.points, args.duration)
        model = fit(samples, tdp=device.spec.tdp)
        grid = device.spec.supported_core_clocks
        f_opt = optimal_frequency(model, grid)
        band = frequency_band(f_opt, grid, pct=args.pct)

        print(f"{name} ({len(samples)} sweep points, noise {truth.noise_stddev:.0%})")
        rows = [
            ("p_idle (W)", truth.p_idle, model.p_idle),
            ("alpha", truth.alpha, model.alpha),
            ("tau_ft (MHz)", truth.tau_ft, model.tau_ft),
            ("beta (1/MHz)", truth.beta, model.beta),
            ("v0 (V)", truth.v0, model.v0),
        ]
        print(f"  {'parameter':14s} {'true':>12s} {'fitted':>12s} {'rel err':>9s}")
        for label, true, fitted in rows:
            rel = abs(fitted - true) / abs(true) if true else float("nan")
            print(f"  {label:14s} {true:12.6g} {fitted:12.6g} {rel:9.2%}")
        print(f"  residual rms {model.residual_rms:.4g} W")
        print(f"  recommended clock {f_opt:.0f} MHz; band of {len(band.clocks)} / {len(grid)} "
              f"clocks ({band.reduction:.1%} of the grid pruned)\n")

    if args.csv and samples:
        write_samples_csv(samples, args.csv)
        print(f"wrote {args.csv}")


if __name__ == "__main__":
    main()
