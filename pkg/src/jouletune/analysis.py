"""Tuning landscape analysis: Pareto fronts and fitness flow graphs.

A Pareto front answers how much performance a kernel must trade for energy
efficiency. A fitness flow graph (FFG) answers how hard a landscape is to
search: nodes are valid configs, and a directed edge points from a config to
each strictly better neighbor. Sinks of this graph are exactly the local
optima. The stationary mass that random first-improvement descents deposit
on each optimum, restricted to optima within ``p`` times the best fitness,
gives the proportion-of-centrality curve: the probability that a cheap local
search lands within a factor ``p`` of the optimum.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import AnalysisError, ConfigurationError
from .searchspace import KernelConfig, SearchSpace

_PAGERANK_DAMPING = 0.85
_PAGERANK_TOLERANCE = 1e-10


@dataclass(frozen=True)
class ParetoPoint:
    """A measured config placed on performance/efficiency axes.

    Both axes are maximized, e.g. gflops and gflops per watt.
    """

    config: KernelConfig
    performance: float
    efficiency: float


def dominates(a: ParetoPoint, b: ParetoPoint) -> bool:
    """True when ``a`` is at least as good on both axes and better on one."""
    return (
        a.performance >= b.performance
        and a.efficiency >= b.efficiency
        and (a.performance > b.performance or a.efficiency > b.efficiency)
    )


def pareto_front(points: Sequence[ParetoPoint]) -> list[ParetoPoint]:
    """Non-dominated subset, ordered by performance descending.

    Points with identical coordinates collapse to the first occurrence, so
    a front never repeats a coordinate pair. Runs in O(n log n): after
    sorting by (performance desc, efficiency desc), a point is on the front
    exactly when its efficiency beats everything seen before it.
    """
    if not points:
        return []
    order = sorted(
        range(len(points)),
        key=lambda i: (-points[i].performance, -points[i].efficiency, i),
    )
    front: list[ParetoPoint] = []
    best_efficiency = -np.inf
    for i in order:
        point = points[i]
        if point.efficiency > best_efficiency:
            front.append(point)
            best_efficiency = point.efficiency
    return front


@dataclass(frozen=True)
class FitnessFlowGraph:
    """Directed graph of strict fitness improvements between neighbors."""

    nodes: tuple[KernelConfig, ...]
    fitness: Mapping[KernelConfig, float]
    successors: Mapping[KernelConfig, tuple[KernelConfig, ...]]

    @property
    def minima(self) -> tuple[KernelConfig, ...]:
        """Sinks: configs with no strictly better neighbor."""
        return tuple(n for n in self.nodes if not self.successors[n])

    def edge_count(self) -> int:
        return sum(len(s) for s in self.successors.values())


def build_ffg(space: SearchSpace, fitness: Mapping[KernelConfig, float]) -> FitnessFlowGraph:
    """Build the fitness flow graph of a space under a minimized fitness.

    Every valid config needs a fitness value; an edge a -> b exists exactly
    when b is a Hamming-1 neighbor of a with strictly lower fitness. Equal
    fitness yields no edge in either direction, so plateaus split into
    separate sinks and the graph stays acyclic.
    """
    nodes = tuple(space.enumerate())
    missing = [n for n in nodes if n not in fitness]
    if missing:
        preview = ", ".join(repr(m.as_dict()) for m in missing[:3])
        raise AnalysisError(
            f"fitness missing for {len(missing)} of {len(nodes)} configs "
            f"(e.g. {preview})"
        )
    successors: dict[KernelConfig, tuple[KernelConfig, ...]] = {}
    for node in nodes:
        value = fitness[node]
        successors[node] = tuple(
            neighbor
            for neighbor in space.neighbors(node)
            if fitness[neighbor] < value
        )
    return FitnessFlowGraph(nodes=nodes, fitness=fitness, successors=successors)


def minima_arrival_distribution(
    graph: FitnessFlowGraph, mode: str = "absorbing"
) -> dict[KernelConfig, float]:
    """Weight of each local optimum under random improvement walks.

    ``absorbing`` mode solves the exact linear system of a random walk that
    starts uniformly on any node, moves to a uniformly chosen strictly
    better neighbor, and stops on a local optimum: the weight of an optimum
    is the probability of being absorbed there. ``pagerank`` mode scores all
    nodes with standard PageRank (damping 0.85, uniform teleport, dangling
    mass spread uniformly), then restricts to the optima and renormalizes.
    Both modes return weights summing to one.
    """
    if mode not in ("absorbing", "pagerank"):
        raise ConfigurationError(f"unknown mode {mode!r}; use absorbing or pagerank")
    nodes = graph.nodes
    if not nodes:
        raise AnalysisError("graph has no nodes")
    index = {node: i for i, node in enumerate(nodes)}
    minima = graph.minima
    if mode == "absorbing":
        weights = _absorbing_weights(graph, nodes, index, minima)
    else:
        weights = _pagerank_weights(graph, nodes, index, minima)
    return weights


def _absorbing_weights(graph, nodes, index, minima) -> dict[KernelConfig, float]:
    n = len(nodes)
    sink_index = {node: j for j, node in enumerate(minima)}
    transient = [node for node in nodes if node not in sink_index]
    t_index = {node: i for i, node in enumerate(transient)}
    n_t, n_s = len(transient), len(minima)
    if n_t == 0:
        return {node: 1.0 / n_s for node in minima}
    q = np.zeros((n_t, n_t))
    r = np.zeros((n_t, n_s))
    for node in transient:
        i = t_index[node]
        successors = graph.successors[node]
        p = 1.0 / len(successors)
        for succ in successors:
            if succ in sink_index:
                r[i, sink_index[succ]] += p
            else:
                q[i, t_index[succ]] += p
    # Absorption probabilities B = (I - Q)^-1 R, one linear solve.
    b = np.linalg.solve(np.eye(n_t) - q, r)
    mass = b.sum(axis=0)  # walks starting on each transient node
    weights = {}
    for node in minima:
        j = sink_index[node]
        weights[node] = (mass[j] + 1.0) / n  # +1: walks that start on the sink
    total = sum(weights.values())
    return {node: w / total for node, w in weights.items()}


def _pagerank_weights(graph, nodes, index, minima) -> dict[KernelConfig, float]:
    n = len(nodes)
    damping = _PAGERANK_DAMPING
    successors = [
        np.fromiter((index[s] for s in graph.successors[node]), dtype=int)
        for node in nodes
    ]
    rank = np.full(n, 1.0 / n)
    for _ in range(10_000):
        incoming = np.zeros(n)
        dangling_mass = 0.0
        for i, succ in enumerate(successors):
            if succ.size:
                np.add.at(incoming, succ, rank[i] / succ.size)
            else:
                dangling_mass += rank[i]
        new_rank = (1.0 - damping) / n + damping * (incoming + dangling_mass / n)
        if np.abs(new_rank - rank).sum() < _PAGERANK_TOLERANCE:
            rank = new_rank
            break
        rank = new_rank
    minima_rank = np.array([rank[index[node]] for node in minima])
    minima_rank /= minima_rank.sum()
    return {node: float(w) for node, w in zip(minima, minima_rank)}


@dataclass(frozen=True)
class CentralityCurve:
    p_values: tuple[float, ...]
    proportions: tuple[float, ...]
    f_optimal: float


def proportion_of_centrality(
    graph: FitnessFlowGraph,
    weights: Mapping[KernelConfig, float],
    p_values: Sequence[float],
) -> CentralityCurve:
    """Share of arrival mass on optima within a factor ``p`` of the best.

    ``f_optimal`` is the best fitness in the whole space. For each ``p >= 1``
    the curve sums the weights of local optima whose fitness is at most
    ``p * f_optimal``, normalized by the total weight; it is non-decreasing
    in ``p`` and reaches one once every optimum qualifies.
    """
    if any(p < 1.0 for p in p_values):
        raise ConfigurationError("p values must be >= 1")
    if not graph.nodes:
        raise AnalysisError("graph has no nodes")
    f_optimal = min(graph.fitness[node] for node in graph.nodes)
    if f_optimal <= 0:
        raise AnalysisError(
            f"proportion of centrality needs positive fitness, best is {f_optimal}"
        )
    total = sum(weights.values())
    if total <= 0:
        raise AnalysisError("arrival weights sum to zero")
    proportions = []
    for p in p_values:
        mass = sum(
            weight
            for node, weight in weights.items()
            if graph.fitness[node] <= p * f_optimal
        )
        proportions.append(mass / total)
    return CentralityCurve(tuple(p_values), tuple(proportions), f_optimal)


# -- CSV output --------------------------------------------------------------

def write_pareto_csv(
    points: Sequence[ParetoPoint], front: Sequence[ParetoPoint], path: str | Path
) -> None:
    on_front = {id(p) for p in front}
    front_coords = {(p.performance, p.efficiency) for p in front}
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["performance", "efficiency", "is_front"])
        for point in points:
            is_front = (
                id(point) in on_front
                or (point.performance, point.efficiency) in front_coords
            )
            writer.writerow(
                [f"{point.performance:.9g}", f"{point.efficiency:.9g}", int(is_front)]
            )


def write_centrality_csv(curve: CentralityCurve, path: str | Path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["p", "proportion"])
        for p, proportion in zip(curve.p_values, curve.proportions):
            writer.writerow([f"{p:.9g}", f"{proportion:.9g}"])
