from __future__ import annotations

import itertools
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mtra.core import (
    Allocation,
    DomainError,
    EnumerationError,
    Instance,
    ValidationError,
    count_allocations,
    enumerate_allocations,
    merge_partial,
    restrict_allocation,
)


def test_default_names():
    inst = Instance(2, 2)
    assert inst.agent_names == ("1", "2")
    assert inst.item_names == (("1_1", "2_1"), ("1_2", "2_2"))
    assert inst.bundle_str((0, 1)) == "(1_1,2_2)"
    assert inst.bundle_str((None, 1)) == "(2_2)"


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(num_agents=0, num_types=1),
        dict(num_agents=2, num_types=0),
        dict(num_agents=2, num_types=1, agent_names=("a", "a")),
        dict(num_agents=2, num_types=1, item_names=(("x",),)),
        dict(num_agents=2, num_types=1, item_names=(("x", "x"),)),
        dict(num_agents=2, num_types=2, type_names=("T",)),
    ],
)
def test_instance_rejects_bad_shapes(kwargs):
    with pytest.raises(ValidationError):
        Instance(**kwargs)


def test_allocation_requires_bijections():
    with pytest.raises(ValidationError):
        Allocation(((0, 0), None))
    with pytest.raises(ValidationError):
        Allocation(((0, 1), (0, 1, 2)))


def test_bundles_and_from_bundles_agree():
    a = Allocation(((1, 0, 2), None, (2, 1, 0)))
    assert a.bundle(0) == (1, None, 2)
    assert Allocation.from_bundles(a.bundles()) == a
    assert a.type_set == frozenset({0, 2})
    assert not a.is_full


def test_restrict_and_merge_round_trip():
    a = Allocation(((1, 0), (0, 1), (1, 0)))
    left, right = restrict_allocation(a, [0, 2]), restrict_allocation(a, [1])
    assert merge_partial(left, right) == a
    with pytest.raises(DomainError):
        merge_partial(left, left)
    with pytest.raises(DomainError):
        restrict_allocation(a, [3])


@pytest.mark.parametrize("n,p", [(1, 1), (2, 2), (3, 1), (2, 3), (3, 2)])
def test_enumeration_is_complete_and_distinct(n, p):
    inst = Instance(n, p)
    allocs = list(enumerate_allocations(inst))
    assert len(allocs) == len(set(allocs)) == count_allocations(n, p) == math.factorial(n) ** p
    assert allocs == sorted(allocs)


def test_enumeration_subset_of_types():
    inst = Instance(2, 3)
    allocs = list(enumerate_allocations(inst, [2]))
    assert [a.type_set for a in allocs] == [frozenset({2})] * 2


def test_enumeration_budget():
    with pytest.raises(EnumerationError):
        list(enumerate_allocations(Instance(3, 2), budget=35))
    assert len(list(enumerate_allocations(Instance(3, 2), budget=36))) == 36


columns = st.integers(2, 4).flatmap(
    lambda n: st.lists(st.permutations(range(n)).map(tuple), min_size=1, max_size=3)
)


@given(columns, st.data())
def test_restrict_merge_property(cols, data):
    a = Allocation(tuple(cols))
    types = data.draw(st.sets(st.integers(0, len(cols) - 1)))
    rest = set(range(len(cols))) - types
    assert merge_partial(a.restrict(types), a.restrict(rest)) == a
    assert hash(a.restrict(types)) == hash(restrict_allocation(a, types))


@given(columns)
def test_bundles_are_a_matching_per_type(cols):
    a = Allocation(tuple(cols))
    for t in range(len(cols)):
        assert sorted(b[t] for b in a.bundles()) == list(range(len(cols[0])))
    assert {a, Allocation(tuple(cols))} == {a}


def test_canonical_order_is_lexicographic_on_columns():
    perms = list(itertools.permutations(range(2)))
    allocs = [Allocation((x, y)) for x in perms for y in perms]
    assert sorted(reversed(allocs)) == allocs
