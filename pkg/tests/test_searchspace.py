"""Search space enumeration, restrictions, and neighborhoods.

The enumeration oracle is an independent brute force: walk the raw value
product with itertools and filter with plain Python eval, so the counts do
not depend on the package's own expression or enumeration code.
"""

import itertools
import json

import pytest
from hypothesis import given, settings, strategies as st

from jouletune.errors import (
    ConfigurationError,
    InvalidConfigError,
    UnknownNameError,
)
from jouletune.presets import gemm_space
from jouletune.searchspace import (
    KernelConfig,
    Restriction,
    SearchSpace,
    TunableParameter,
)


def brute_force_count(parameters, restrictions):
    names = [p.name for p in parameters]
    count = 0
    for combo in itertools.product(*(p.values for p in parameters)):
        env = dict(zip(names, combo))
        if all(eval(expr, {"__builtins__": {}}, env) for expr in restrictions):
            count += 1
    return count


def small_space():
    return SearchSpace(
        parameters=(
            TunableParameter("x", (1, 2, 3)),
            TunableParameter("y", (2, 4)),
            TunableParameter("flag", (0, 1)),
        ),
        restrictions=(Restriction("y % x == 0"),),
    )


# -- KernelConfig ------------------------------------------------------------

def test_config_items_are_canonically_ordered():
    a = KernelConfig((("b", 2), ("a", 1)))
    b = KernelConfig((("a", 1), ("b", 2)))
    assert a == b
    assert hash(a) == hash(b)
    assert a.key() == b.key()
    assert a.items == (("a", 1), ("b", 2))


def test_config_round_trips_through_dict():
    config = KernelConfig.from_dict({"Mwg": 32, "SA": 1})
    assert config.as_dict() == {"Mwg": 32, "SA": 1}
    assert KernelConfig.from_dict(config.as_dict()) == config


def test_config_mapping_protocol():
    config = KernelConfig((("a", 1), ("b", 2)))
    assert config["a"] == 1
    assert config.get("c") is None
    assert "b" in config and "c" not in config
    assert sorted(config) == ["a", "b"]
    assert len(config) == 2
    with pytest.raises(KeyError):
        config["missing"]


def test_config_replace_and_drop():
    config = KernelConfig((("a", 1), ("b", 2)))
    assert config.replace(a=9).as_dict() == {"a": 9, "b": 2}
    assert config.drop("a").as_dict() == {"b": 2}
    with pytest.raises(KeyError):
        config.replace(zzz=1)


def test_config_rejects_duplicate_names():
    with pytest.raises(ConfigurationError):
        KernelConfig((("a", 1), ("a", 2)))


def test_key_differs_between_assignments():
    assert KernelConfig((("a", 1),)).key() != KernelConfig((("a", 2),)).key()


# -- parameters and construction ----------------------------------------------

def test_parameter_rejects_empty_and_duplicate_values():
    with pytest.raises(ConfigurationError):
        TunableParameter("p", ())
    with pytest.raises(ConfigurationError):
        TunableParameter("p", (1, 1))
    with pytest.raises(ConfigurationError):
        TunableParameter("not an identifier", (1,))


def test_space_rejects_duplicate_parameter_names():
    p = TunableParameter("x", (1,))
    with pytest.raises(ConfigurationError):
        SearchSpace((p, p))


def test_space_rejects_restrictions_over_unknown_names():
    with pytest.raises(UnknownNameError) as info:
        SearchSpace(
            parameters=(TunableParameter("x", (1, 2)),),
            restrictions=(Restriction("x + ghost > 0"),),
        )
    assert info.value.name == "ghost"


# -- enumeration ---------------------------------------------------------------

def test_small_space_enumeration_matches_brute_force():
    space = small_space()
    expected = brute_force_count(space.parameters, ["y % x == 0"])
    assert space.size() == expected == len(space.enumerate())


def test_gemm_space_size_matches_brute_force():
    space = gemm_space()
    expected = brute_force_count(
        space.parameters, [r.expression for r in space.restrictions]
    )
    assert expected == 1328
    assert space.size() == expected


def test_enumeration_is_deterministic_and_valid():
    space = small_space()
    first = space.enumerate()
    second = space.enumerate()
    assert first == second
    assert all(space.is_valid(c) for c in first)
    assert len(set(first)) == len(first)


def test_unrestricted_size_is_the_product():
    space = SearchSpace(
        parameters=(
            TunableParameter("a", tuple(range(5))),
            TunableParameter("b", tuple(range(7))),
        )
    )
    assert space.size() == 35


@given(
    sizes=st.lists(st.integers(min_value=1, max_value=4), min_size=1, max_size=4),
    data=st.data(),
)
@settings(max_examples=40, deadline=None)
def test_size_is_invariant_under_parameter_reorder(sizes, data):
    parameters = tuple(
        TunableParameter(f"p{i}", tuple(range(n))) for i, n in enumerate(sizes)
    )
    if len(parameters) >= 2:
        restrictions = (Restriction("p0 <= p1 + 1"),)
    else:
        restrictions = ()
    space = SearchSpace(parameters, restrictions)
    order = data.draw(st.permutations(range(len(parameters))))
    shuffled = SearchSpace(tuple(parameters[i] for i in order), restrictions)
    assert space.size() == shuffled.size()
    assert set(space.enumerate()) == set(shuffled.enumerate())


# -- augmentation and value replacement -----------------------------------------

def test_augment_multiplies_the_count():
    space = small_space()
    clock = TunableParameter("clock", (100, 200, 300))
    augmented = space.augment(clock)
    assert augmented.size() == space.size() * 3
    assert space.size() == len(space.enumerate())  # original untouched


def test_augment_rejects_existing_name():
    space = small_space()
    with pytest.raises(ConfigurationError):
        space.augment(TunableParameter("x", (9,)))


def test_with_values_replaces_one_parameter():
    space = small_space()
    pinned = space.with_values("flag", [1])
    assert pinned.size() == sum(1 for c in space.enumerate() if c["flag"] == 1)
    with pytest.raises(ConfigurationError):
        space.with_values("ghost", [1])


# -- config building and membership ----------------------------------------------

def test_config_from_mapping_and_validity():
    space = small_space()
    config = space.config({"x": 2, "y": 4, "flag": 0})
    assert space.is_valid(config)
    invalid_value = KernelConfig((("x", 99), ("y", 4), ("flag", 0)))
    assert not space.is_valid(invalid_value)
    breaks_restriction = KernelConfig((("x", 3), ("y", 4), ("flag", 0)))
    assert not space.is_valid(breaks_restriction)


def test_config_requires_every_parameter():
    space = small_space()
    with pytest.raises(InvalidConfigError):
        space.config({"x": 1, "y": 2})


# -- neighbors ---------------------------------------------------------------------

def test_neighbors_match_brute_force():
    space = small_space()
    for config in space.enumerate():
        expected = [
            other
            for other in space.enumerate()
            if sum(a != b for a, b in zip(config.items, other.items)) == 1
        ]
        assert sorted(space.neighbors(config), key=lambda c: c.items) == sorted(
            expected, key=lambda c: c.items
        )


def test_neighbors_rejects_nonmember():
    space = small_space()
    with pytest.raises(InvalidConfigError):
        space.neighbors(KernelConfig((("x", 99), ("y", 4), ("flag", 0))))


@given(st.data())
@settings(max_examples=40, deadline=None)
def test_neighbor_relation_is_symmetric(data):
    space = small_space()
    configs = space.enumerate()
    config = data.draw(st.sampled_from(configs))
    for neighbor in space.neighbors(config):
        assert config in space.neighbors(neighbor)


# -- JSON round trip ------------------------------------------------------------------

def test_space_round_trips_through_json(tmp_path):
    space = gemm_space()
    path = tmp_path / "space.json"
    space.to_json(path)
    loaded = SearchSpace.from_json(path)
    assert loaded == space
    assert loaded.size() == space.size()


def test_from_dict_rejects_missing_parameters_section():
    with pytest.raises(ConfigurationError):
        SearchSpace.from_dict({"restrictions": []})


def test_from_json_rejects_malformed_file(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigurationError):
        SearchSpace.from_json(path)


def test_restriction_evaluate_and_names():
    r = Restriction("Mwg % Mdim == 0")
    assert r.names == {"Mwg", "Mdim"}
    assert r.evaluate({"Mwg": 32, "Mdim": 8})
    assert not r.evaluate({"Mwg": 32, "Mdim": 12})
