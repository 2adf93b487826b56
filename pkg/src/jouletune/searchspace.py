"""Constrained kernel configuration spaces.

A search space is a set of tunable parameters, each with a finite ordered
value list, plus restriction expressions that rule out invalid value
combinations. Spaces are immutable; enumeration order is the deterministic
lexicographic order induced by the parameter order and each parameter's
value order, so two runs over the same space always see configurations in
the same sequence.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Any, Iterable, Mapping

from .errors import ConfigurationError, InvalidConfigError, UnknownNameError
from .expressions import Expression

Value = int | float | bool


@dataclass(frozen=True)
class KernelConfig:
    """One full assignment of values to the parameters of a search space.

    Stored as a name-sorted tuple of (name, value) pairs so that two configs
    with the same assignment are equal and hash alike no matter which order
    their parameters arrived in (enumeration order, JSON round trips, and
    user-built mappings all differ). Configs key caches and graph nodes
    directly.
    """

    items: tuple[tuple[str, Value], ...]

    def __post_init__(self):
        canonical = tuple(sorted((str(n), v) for n, v in self.items))
        if len({name for name, _ in canonical}) != len(canonical):
            raise ConfigurationError(
                f"duplicate parameter names in config: {canonical}"
            )
        object.__setattr__(self, "items", canonical)

    @classmethod
    def from_dict(cls, assignment: Mapping[str, Value]) -> "KernelConfig":
        return cls(tuple(assignment.items()))

    def as_dict(self) -> dict[str, Value]:
        return dict(self.items)

    def __getitem__(self, name: str) -> Value:
        for key, value in self.items:
            if key == name:
                return value
        raise KeyError(name)

    def get(self, name: str, default=None):
        for key, value in self.items:
            if key == name:
                return value
        return default

    def __contains__(self, name: str) -> bool:
        return any(key == name for key, _ in self.items)

    def __iter__(self):
        return (key for key, _ in self.items)

    def __len__(self):
        return len(self.items)

    def replace(self, **changes: Value) -> "KernelConfig":
        """Return a copy with the given parameter values swapped in."""
        unknown = set(changes) - {key for key, _ in self.items}
        if unknown:
            raise KeyError(f"not parameters of this config: {sorted(unknown)}")
        return KernelConfig(
            tuple((k, changes.get(k, v)) for k, v in self.items)
        )

    def drop(self, *names: str) -> "KernelConfig":
        """Return a copy without the named parameters."""
        return KernelConfig(tuple((k, v) for k, v in self.items if k not in names))

    def key(self) -> str:
        """Canonical hash of the assignment (items are already name-sorted)."""
        payload = json.dumps(self.items, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:32]

    def __repr__(self):
        inner = ", ".join(f"{k}={v}" for k, v in self.items)
        return f"KernelConfig({inner})"


@dataclass(frozen=True)
class TunableParameter:
    """A named parameter with its finite, ordered value list."""

    name: str
    values: tuple[Value, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if not self.name or not self.name.isidentifier():
            raise ConfigurationError(
                f"parameter name must be an identifier, got {self.name!r}"
            )
        if not self.values:
            raise ConfigurationError(f"parameter {self.name!r} has no values")
        if len(set(self.values)) != len(self.values):
            raise ConfigurationError(f"parameter {self.name!r} has duplicate values")


@dataclass(frozen=True)
class Restriction:
    """A boolean expression over parameter names that valid configs satisfy."""

    expression: str

    @cached_property
    def _compiled(self) -> Expression:
        return Expression(self.expression)

    @property
    def names(self) -> frozenset[str]:
        return self._compiled.names

    def evaluate(self, assignment: Mapping[str, Value]) -> bool:
        return bool(self._compiled(assignment))


@dataclass(frozen=True)
class SearchSpace:
    """An immutable set of parameters plus restrictions.

    >>> space = SearchSpace(
    ...     parameters=(TunableParameter("a", (1, 2)), TunableParameter("b", (2, 4))),
    ...     restrictions=(Restriction("b % a == 0"),),
    ... )
    >>> len(space.enumerate())
    4
    """

    parameters: tuple[TunableParameter, ...]
    restrictions: tuple[Restriction, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "parameters", tuple(self.parameters))
        object.__setattr__(self, "restrictions", tuple(self.restrictions))
        names = [p.name for p in self.parameters]
        if len(set(names)) != len(names):
            raise ConfigurationError(f"duplicate parameter names in {names}")
        known = set(names)
        for restriction in self.restrictions:
            for name in sorted(restriction.names - known):
                raise UnknownNameError(
                    name, f"restriction {restriction.expression!r}"
                )

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.parameters)

    def parameter(self, name: str) -> TunableParameter:
        for p in self.parameters:
            if p.name == name:
                return p
        raise ConfigurationError(f"no parameter named {name!r}")

    def satisfies_restrictions(self, assignment: Mapping[str, Value]) -> bool:
        return all(r.evaluate(assignment) for r in self.restrictions)

    def is_valid(self, config: KernelConfig) -> bool:
        """Full membership check: names, value membership, restrictions."""
        if set(config) != set(self.names):
            return False
        for p in self.parameters:
            if config[p.name] not in p.values:
                return False
        return self.satisfies_restrictions(config.as_dict())

    def enumerate(self) -> list[KernelConfig]:
        """All valid configs in lexicographic parameter/value order."""
        return list(_enumerate_cached(self))

    def size(self) -> int:
        """Number of valid configs (cardinality after restrictions)."""
        return len(_enumerate_cached(self))

    def config(self, assignment: Mapping[str, Value]) -> KernelConfig:
        """Build a config from a mapping, ordered by this space's parameters."""
        missing = set(self.names) - set(assignment)
        if missing:
            raise InvalidConfigError(f"missing parameters: {sorted(missing)}")
        return KernelConfig(tuple((n, assignment[n]) for n in self.names))

    def augment(self, parameter: TunableParameter) -> "SearchSpace":
        """Return a new space with ``parameter`` appended.

        Every existing restriction is preserved, so the valid count of the
        result is exactly ``len(parameter.values)`` times the original count.
        """
        if parameter.name in self.names:
            raise ConfigurationError(
                f"space already has a parameter named {parameter.name!r}"
            )
        return SearchSpace(self.parameters + (parameter,), self.restrictions)

    def with_values(self, name: str, values: Iterable[Value]) -> "SearchSpace":
        """Return a copy with the value list of ``name`` replaced.

        Used to restrict a parameter, e.g. pinning a clock to one value for
        a pipeline stage or replacing a clock sweep by a recommended band.
        """
        self.parameter(name)  # raises ConfigurationError if absent
        replaced = tuple(
            TunableParameter(p.name, tuple(values)) if p.name == name else p
            for p in self.parameters
        )
        return SearchSpace(replaced, self.restrictions)

    def neighbors(self, config: KernelConfig) -> list[KernelConfig]:
        """Valid configs at Hamming distance one from ``config``.

        Deterministic order: parameters in space order, alternative values
        in their listed order.
        """
        if not self.is_valid(config):
            raise InvalidConfigError(f"not a valid member of this space: {config}")
        result = []
        assignment = config.as_dict()
        for p in self.parameters:
            current = assignment[p.name]
            for value in p.values:
                if value == current:
                    continue
                candidate = dict(assignment)
                candidate[p.name] = value
                if self.satisfies_restrictions(candidate):
                    result.append(config.replace(**{p.name: value}))
        return result

    def to_dict(self) -> dict[str, Any]:
        return {
            "parameters": {p.name: list(p.values) for p in self.parameters},
            "restrictions": [r.expression for r in self.restrictions],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SearchSpace":
        if "parameters" not in data:
            raise ConfigurationError("space document lacks a 'parameters' section")
        parameters = tuple(
            TunableParameter(name, tuple(values))
            for name, values in data["parameters"].items()
        )
        restrictions = tuple(
            Restriction(expr) for expr in data.get("restrictions", ())
        )
        return cls(parameters, restrictions)

    @classmethod
    def from_json(cls, path: str | Path) -> "SearchSpace":
        try:
            with open(path) as handle:
                data = json.load(handle)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot load space from {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_json(self, path: str | Path) -> None:
        with open(path, "w") as handle:
            json.dump(self.to_dict(), handle, indent=2)
            handle.write("\n")


@lru_cache(maxsize=128)
def _enumerate_cached(space: SearchSpace) -> tuple[KernelConfig, ...]:
    names = space.names
    value_lists = [p.values for p in space.parameters]
    configs = []
    if space.restrictions:
        # Restrictions that only mention a prefix of the parameters could be
        # checked early, but desk-scale spaces do not need the pruning.
        for combo in itertools.product(*value_lists):
            assignment = dict(zip(names, combo))
            if space.satisfies_restrictions(assignment):
                configs.append(KernelConfig(tuple(zip(names, combo))))
    else:
        for combo in itertools.product(*value_lists):
            configs.append(KernelConfig(tuple(zip(names, combo))))
    return tuple(configs)
