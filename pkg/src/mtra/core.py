"""Instances, bundles and allocations for multi-type resource allocation.

Agents, types and items are 0-based integers internally. A bundle is a tuple
with one item index per type; a partial bundle uses ``None`` for the types it
does not cover. Allocations are stored column-wise: one permutation
(agent -> item) per type.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence

Bundle = tuple  # tuple[int, ...], one item per type
PartialBundle = tuple  # tuple[Optional[int], ...]
Column = tuple  # tuple[int, ...], agent -> item for one type


class MTRAError(Exception):
    """Base class for all library errors."""


class DomainError(MTRAError, ValueError):
    """An argument lies outside the domain of an operation."""


class EnumerationError(MTRAError):
    """An enumeration would exceed its budget."""

    def __init__(self, what: str, count: int, budget: int):
        super().__init__(f"{what}: {count} candidates exceeds budget {budget}")
        self.count = count
        self.budget = budget


class ValidationError(MTRAError, ValueError):
    """A structure violates its invariants."""


class ConfigurationError(MTRAError):
    """A mechanism is missing data needed to evaluate a profile."""


def check_budget(what: str, count: int, budget: Optional[int]) -> None:
    if budget is not None and count > budget:
        raise EnumerationError(what, count, budget)


@dataclass(frozen=True)
class Instance:
    num_agents: int
    num_types: int
    agent_names: Optional[tuple] = None
    type_names: Optional[tuple] = None
    item_names: Optional[tuple] = None  # per type, a tuple of n names

    def __post_init__(self):
        n, p = self.num_agents, self.num_types
        if n < 1 or p < 1:
            raise ValidationError("an instance needs at least one agent and one type")
        if self.agent_names is None:
            object.__setattr__(self, "agent_names", tuple(str(j + 1) for j in range(n)))
        if self.type_names is None:
            object.__setattr__(self, "type_names", tuple(str(t + 1) for t in range(p)))
        if len(self.agent_names) != n or len(set(self.agent_names)) != n:
            raise ValidationError("agent names must be n distinct identifiers")
        if len(self.type_names) != p or len(set(self.type_names)) != p:
            raise ValidationError("type names must be p distinct identifiers")
        if self.item_names is None:
            object.__setattr__(
                self,
                "item_names",
                tuple(tuple(f"{k + 1}_{self.type_names[t]}" for k in range(n)) for t in range(p)),
            )
        if len(self.item_names) != p:
            raise ValidationError("item names must be given for every type")
        for t, names in enumerate(self.item_names):
            if len(names) != n:
                raise ValidationError(
                    f"type {self.type_names[t]} has {len(names)} items, expected {n}"
                )
            if len(set(names)) != n:
                raise ValidationError(f"item names of type {self.type_names[t]} are not unique")

    @property
    def n(self) -> int:
        return self.num_agents

    @property
    def p(self) -> int:
        return self.num_types

    def item_name(self, t: int, k: int) -> str:
        return self.item_names[t][k]

    def bundle_str(self, bundle: Sequence[Optional[int]]) -> str:
        parts = [self.item_names[t][k] for t, k in enumerate(bundle) if k is not None]
        return "(" + ",".join(parts) + ")"

    def all_bundles(self) -> Iterator[Bundle]:
        return itertools.product(range(self.n), repeat=self.p)


def _check_types(types: Iterable[int], p: int) -> frozenset:
    s = frozenset(types)
    bad = [t for t in s if not (0 <= t < p)]
    if bad:
        raise DomainError(f"unknown type index {sorted(bad)[0]} (instance has {p} types)")
    return s


@dataclass(frozen=True)
class Allocation:
    """A (partial) allocation, stored as one agent->item column per type.

    ``columns[t]`` is ``None`` when type ``t`` is not covered. An allocation
    covering every type is a full allocation.
    """

    columns: tuple

    def __post_init__(self):
        n = None
        for t, col in enumerate(self.columns):
            if col is None:
                continue
            if n is None:
                n = len(col)
            if len(col) != n or sorted(col) != list(range(n)):
                raise ValidationError(f"column for type {t} is not a bijection: {col}")
        object.__setattr__(self, "_n", n)

    @classmethod
    def empty(cls, p: int) -> "Allocation":
        return cls((None,) * p)

    @classmethod
    def from_bundles(cls, bundles: Sequence[Sequence[Optional[int]]]) -> "Allocation":
        p = len(bundles[0])
        cols = []
        for t in range(p):
            col = tuple(b[t] for b in bundles)
            cols.append(None if all(x is None for x in col) else col)
        return cls(tuple(cols))

    @property
    def num_types(self) -> int:
        return len(self.columns)

    @property
    def num_agents(self) -> Optional[int]:
        return self._n

    @property
    def type_set(self) -> frozenset:
        return frozenset(t for t, c in enumerate(self.columns) if c is not None)

    @property
    def is_full(self) -> bool:
        return all(c is not None for c in self.columns)

    def bundle(self, agent: int) -> PartialBundle:
        return tuple(None if c is None else c[agent] for c in self.columns)

    def bundles(self) -> list:
        return [self.bundle(j) for j in range(self._n or 0)]

    def restrict(self, types: Iterable[int]) -> "Allocation":
        return restrict_allocation(self, types)

    def merge(self, other: "Allocation") -> "Allocation":
        return merge_partial(self, other)

    def sort_key(self) -> tuple:
        return tuple(() if c is None else c for c in self.columns)

    def __lt__(self, other: "Allocation") -> bool:
        return self.sort_key() < other.sort_key()


PartialAllocation = Allocation


def restrict_allocation(a: Allocation, types: Iterable[int]) -> Allocation:
    s = _check_types(types, a.num_types)
    return Allocation(tuple(c if t in s else None for t, c in enumerate(a.columns)))


def merge_partial(a: Allocation, b: Allocation) -> Allocation:
    if a.num_types != b.num_types:
        raise DomainError("allocations are over instances with different type counts")
    overlap = a.type_set & b.type_set
    if overlap:
        raise DomainError(f"type sets overlap on {sorted(overlap)}")
    if a.num_agents is not None and b.num_agents is not None and a.num_agents != b.num_agents:
        raise DomainError("allocations have different agent sets")
    return Allocation(tuple(x if x is not None else y for x, y in zip(a.columns, b.columns)))


def count_allocations(n: int, num_types: int) -> int:
    return math.factorial(n) ** num_types


def enumerate_allocations(
    inst: Instance, types: Optional[Iterable[int]] = None, budget: Optional[int] = None
) -> Iterator[Allocation]:
    """Yield every partial allocation over ``types`` in canonical order."""
    s = sorted(_check_types(range(inst.p) if types is None else types, inst.p))
    check_budget("allocations", count_allocations(inst.n, len(s)), budget)
    perms = list(itertools.permutations(range(inst.n)))
    for combo in itertools.product(perms, repeat=len(s)):
        cols = [None] * inst.p
        for t, col in zip(s, combo):
            cols[t] = col
        yield Allocation(tuple(cols))
