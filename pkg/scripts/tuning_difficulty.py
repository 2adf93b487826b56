"""Measure how hard a tuning landscape is to search locally.

Benchmarks every config of a space, builds the improvement graph for a
chosen objective, and reports the local optima with the probability that
a randomized first-improvement descent ends in each. The closing table is
the proportion-of-centrality curve: the chance of landing within a factor
p of the best fitness.

Usage:
    python scripts/tuning_difficulty.py
    python scripts/tuning_difficulty.py --objective time --weights pagerank \
        --clocks 615 1005 1410 --csv difficulty.csv
"""

import argparse

import numpy as np

from jouletune import presets
from jouletune.analysis import (
    build_ffg,
    minima_arrival_distribution,
    proportion_of_centrality,
    write_centrality_csv,
)
from jouletune.device import load_device
from jouletune.observers import InstantPowerObserver
from jouletune.searchspace import SearchSpace
from jouletune.tuner import Objective, ResultCache, TuningRun, run_strategy


def parse_args():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--space", default=None, help="search space JSON (default: bundled mimic space)")
    parser.add_argument("--device", default=None, help="device JSON (default: bundled a100_mimic)")
    parser.add_argument("--objective", default="energy", help="NAME[:min|:max]")
    parser.add_argument("--weights", choices=["absorbing", "pagerank"], default="absorbing")
    parser.add_argument(
        "--clocks", type=float, nargs="*", default=None,
        help="restrict the clock parameter to these values first",
    )
    parser.add_argument("--p-max", type=float, default=1.5)
    parser.add_argument("--p-steps", type=int, default=11)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--csv", default=None, help="write the centrality curve as CSV")
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
    if args.clocks:
        space = space.with_values("nvml_gr_clock", args.clocks)
    objective = Objective.parse(args.objective)

    cache = ResultCache()
    run = TuningRun(space=space, strategy="exhaustive", objective=objective, seed=args.seed)
    outcome = run_strategy(run, device, [InstantPowerObserver()], cache=cache)
    fitness = {r.config: objective.fitness(r) for r in outcome.history if not r.failed}

    graph = build_ffg(space, fitness)
    weights = minima_arrival_distribution(graph, mode=args.weights)
    print(f"{space.size()} configs, {graph.edge_count()} improvement edges, "
          f"{len(graph.minima)} local optima for {objective.metric}:{objective.direction}\n")

    best = min(fitness[m] for m in graph.minima)
    print(f"{'arrival':>9s} {'fitness':>12s} {'vs best':>9s}  config")
    for minimum in sorted(graph.minima, key=lambda m: -weights[m]):
        ratio = fitness[minimum] / best
        print(f"{weights[minimum]:9.4f} {fitness[minimum]:12.6f} {ratio:8.3f}x  {minimum.as_dict()}")

    p_values = np.linspace(1.0, args.p_max, args.p_steps).tolist()
    curve = proportion_of_centrality(graph, weights, p_values)
    print(f"\nbest fitness {curve.f_optimal:.6f}; share of descents within p of it:")
    for p, proportion in zip(curve.p_values, curve.proportions):
        bar = "#" * round(40 * proportion)
        print(f"  p={p:5.2f}  {proportion:6.1%}  {bar}")

    if args.csv:
        write_centrality_csv(curve, args.csv)
        print(f"\nwrote {args.csv}")


if __name__ == "__main__":
    main()
