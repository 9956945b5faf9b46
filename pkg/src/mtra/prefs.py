"""CP-net based lexicographic preferences over bundles.

A :class:`LexPref` pairs an importance order over types with a CP-net whose
conditional preference tables (CPTs) give one strict order over the items of a
type for every assignment to that type's parents. When every dependency edge
points from a more important to a less important type, the preference
induces a strict total order over bundles: compare at the most important type
where two bundles differ, using the CPT row selected by their shared prefix.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Optional, Sequence

from .core import (
    Allocation,
    Bundle,
    DomainError,
    Instance,
    PartialBundle,
    ValidationError,
    check_budget,
)

LocalOrder = tuple  # strict order over the items of one type, best first
LocalProfile = tuple  # one LocalOrder per agent

CONDITIONAL = "conditional"
OPTIMISTIC = "optimistic"
PESSIMISTIC = "pessimistic"
PROJECTION_MODES = (CONDITIONAL, OPTIMISTIC, PESSIMISTIC)

X_BETTER, EQUAL, Y_BETTER = 1, 0, -1


def _row_index(parents: tuple, bundle: Sequence[Optional[int]], n: int) -> int:
    idx = 0
    for pa in parents:
        idx = idx * n + bundle[pa]
    return idx


def _find_cycle(parents: Sequence[tuple], covered: Iterable[int]) -> Optional[list]:
    state: dict = {}

    def visit(t, path):
        state[t] = 1
        for pa in parents[t]:
            if state.get(pa) == 1:
                return path + [t, pa]
            if pa not in state:
                found = visit(pa, path + [t])
                if found:
                    return found
        state[t] = 2
        return None

    for t in covered:
        if t not in state:
            found = visit(t, [])
            if found:
                return found
    return None


@dataclass(frozen=True)
class LexPref:
    """Importance order plus CP-net.

    ``importance`` lists the covered types, most important first. ``parents``
    and ``rows`` are indexed by type; uncovered types have no parents and a
    ``None`` row table. ``rows[t][k]`` is the order used when the parents of
    ``t`` take the ``k``-th assignment in ``itertools.product`` order.
    """

    importance: tuple
    parents: tuple
    rows: tuple

    def __post_init__(self):
        p = len(self.parents)
        if len(self.rows) != p:
            raise ValidationError("parents and rows must both be indexed by type")
        if len(set(self.importance)) != len(self.importance) or not self.importance:
            raise ValidationError(f"importance order {self.importance} must list distinct types")
        covered = set(self.importance)
        if not covered <= set(range(p)):
            raise ValidationError(f"importance order {self.importance} names unknown types")
        n = None
        for t in range(p):
            table = self.rows[t]
            if t not in covered:
                if table is not None or self.parents[t]:
                    raise ValidationError(f"type {t} is not in the importance order but has a CPT")
                continue
            pas = self.parents[t]
            if t in pas or len(set(pas)) != len(pas) or not set(pas) <= covered:
                raise ValidationError(f"type {t} has invalid parents {pas}")
            if table is None or not table or not table[0]:
                raise ValidationError(f"type {t} has no CPT")
            if n is None:
                n = len(table[0])
            if len(table) != n ** len(pas):
                raise ValidationError(
                    f"CPT of type {t} has {len(table)} rows, expected {n ** len(pas)}"
                )
            for row in table:
                if len(row) != n or sorted(row) != list(range(n)):
                    raise ValidationError(f"CPT row {row} of type {t} is not a strict total order")
        cycle = _find_cycle(self.parents, self.importance)
        if cycle:
            raise ValidationError(f"dependency graph has a cycle through types {cycle}")
        position = {t: i for i, t in enumerate(self.importance)}
        legal = all(position[pa] < position[t] for t in self.importance for pa in self.parents[t])
        self._set_derived(n, legal)

    def _set_derived(self, n, legal) -> None:
        pos = tuple(
            None if table is None else tuple(_positions(row) for row in table)
            for table in self.rows
        )
        object.__setattr__(self, "_n", n)
        object.__setattr__(self, "_legal", legal)
        object.__setattr__(self, "_pos", pos)
        object.__setattr__(self, "_hash", hash((self.importance, self.parents, self.rows)))

    def _with_rows(self, rows: tuple) -> "LexPref":
        """Same structure, new CPT rows; callers guarantee the rows are permutations."""
        out = object.__new__(LexPref)
        object.__setattr__(out, "importance", self.importance)
        object.__setattr__(out, "parents", self.parents)
        object.__setattr__(out, "rows", rows)
        out._set_derived(self._n, self._legal)
        return out

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        if not isinstance(other, LexPref):
            return NotImplemented
        return self._hash == other._hash and (
            self.importance == other.importance
            and self.parents == other.parents
            and self.rows == other.rows
        )

    def __getstate__(self):
        return {"importance": self.importance, "parents": self.parents, "rows": self.rows}

    def __setstate__(self, state):
        for k, v in state.items():
            object.__setattr__(self, k, v)
        self.__post_init__()

    # construction -----------------------------------------------------------------

    @classmethod
    def from_cpt(
        cls,
        importance: Sequence[int],
        cpt: Mapping[int, Mapping[tuple, Sequence[int]]],
        parents: Optional[Mapping[int, Sequence[int]]] = None,
        num_types: Optional[int] = None,
        num_items: Optional[int] = None,
    ) -> "LexPref":
        """Build from ``cpt[t][parent_items] = order``.

        ``parent_items`` lists the items of ``parents[t]`` in the same order.
        Missing rows are reported by type and parent assignment.
        """
        parents = {t: tuple(v) for t, v in (parents or {}).items()}
        p = num_types if num_types is not None else max(importance) + 1
        if num_items is None:
            first = next(iter(next(iter(cpt.values())).values()))
            num_items = len(first)
        n = num_items
        pas_all, rows_all = [()] * p, [None] * p
        for t in importance:
            if t not in cpt:
                raise ValidationError(f"missing CPT for type {t}")
            pas = parents.get(t, ())
            table = []
            for assignment in itertools.product(range(n), repeat=len(pas)):
                if assignment not in cpt[t]:
                    raise ValidationError(
                        f"CPT of type {t} has no row for parent assignment "
                        f"{dict(zip(pas, assignment))}"
                    )
                table.append(tuple(cpt[t][assignment]))
            extra = set(cpt[t]) - set(itertools.product(range(n), repeat=len(pas)))
            if extra:
                raise ValidationError(f"CPT of type {t} has rows for unknown assignments {sorted(extra)}")
            pas_all[t], rows_all[t] = pas, tuple(table)
        return cls(tuple(importance), tuple(pas_all), tuple(rows_all))

    @classmethod
    def separable(cls, importance: Sequence[int], orders: Mapping[int, Sequence[int]], num_types=None):
        p = num_types if num_types is not None else max(importance) + 1
        rows = [None] * p
        for t in importance:
            rows[t] = (tuple(orders[t]),)
        return cls(tuple(importance), ((),) * p, tuple(rows))

    # basic queries ----------------------------------------------------------------

    @property
    def num_items(self) -> int:
        return self._n

    @property
    def num_types(self) -> int:
        return len(self.parents)

    @property
    def is_legal(self) -> bool:
        """True when every edge respects this preference's own importance order."""
        return self._legal

    @property
    def edges(self) -> frozenset:
        return frozenset((pa, t) for t in self.importance for pa in self.parents[t])

    @property
    def is_separable(self) -> bool:
        return not self.edges

    def row(self, t: int, context: Sequence[Optional[int]]) -> LocalOrder:
        """CPT row of ``t`` selected by the parent items found in ``context``."""
        pas = self.parents[t]
        for pa in pas:
            if context[pa] is None:
                raise DomainError(f"context does not assign parent type {pa} of type {t}")
        return self.rows[t][_row_index(pas, context, self._n)]

    def key(self, bundle: Sequence[int]) -> tuple:
        """Sort key: smaller means more preferred."""
        if not self._legal:
            raise DomainError("bundle comparison needs a CP-net legal for its importance order")
        n, pos, parents = self._n, self._pos, self.parents
        out = []
        for t in self.importance:
            pas = parents[t]
            idx = 0
            for pa in pas:
                idx = idx * n + bundle[pa]
            out.append(pos[t][idx][bundle[t]])
        return tuple(out)

    def condition(self, fixed: Mapping[int, int]) -> "LexPref":
        """Restriction of this preference to bundles agreeing with ``fixed``.

        The result covers the remaining types; rows depending on fixed types
        are resolved with the fixed items.
        """
        p, n = self.num_types, self._n
        for t in fixed:
            if t not in self.importance:
                raise DomainError(f"type {t} is not covered by this preference")
        remaining = tuple(t for t in self.importance if t not in fixed)
        if not remaining:
            raise DomainError("conditioning on every covered type leaves nothing")
        pas_all, rows_all = [()] * p, [None] * p
        for t in remaining:
            pas = tuple(pa for pa in self.parents[t] if pa not in fixed)
            table = []
            ctx = [None] * p
            for k, v in fixed.items():
                ctx[k] = v
            for assignment in itertools.product(range(n), repeat=len(pas)):
                for pa, v in zip(pas, assignment):
                    ctx[pa] = v
                table.append(self.row(t, ctx))
            pas_all[t], rows_all[t] = pas, tuple(table)
        return LexPref(remaining, tuple(pas_all), tuple(rows_all))

    def rename(self, perms: Sequence[Sequence[int]]) -> "LexPref":
        """Apply per-type item renamings ``perms[t][old] = new``."""
        n = self._n
        inverse = [None] * len(perms)
        for t, perm in enumerate(perms):
            inv = [0] * n
            for old, new in enumerate(perm):
                inv[new] = old
            inverse[t] = inv
        rows_all = list(self.rows)
        ctx = [None] * self.num_types
        for t in self.importance:
            pas = self.parents[t]
            table = []
            for assignment in itertools.product(range(n), repeat=len(pas)):
                for pa, v in zip(pas, assignment):
                    ctx[pa] = inverse[pa][v]
                table.append(tuple(perms[t][x] for x in self.row(t, ctx)))
            rows_all[t] = tuple(table)
        return self._with_rows(tuple(rows_all))

    def root_row(self, t: int) -> LocalOrder:
        if self.parents[t]:
            raise DomainError(f"type {t} has parents; its order is conditional")
        return self.rows[t][0]


@functools.lru_cache(maxsize=1 << 17)
def _renamed(pref: LexPref, perms: tuple) -> LexPref:
    return pref.rename(perms)


def _positions(row: Sequence[int]) -> tuple:
    pos = [0] * len(row)
    for i, x in enumerate(row):
        pos[x] = i
    return tuple(pos)


def validate_o_legal(pref: LexPref) -> tuple:
    """Return ``(ok, diagnostic)`` for legality w.r.t. the preference's importance order."""
    position = {t: i for i, t in enumerate(pref.importance)}
    for t in pref.importance:
        for pa in pref.parents[t]:
            if position[pa] > position[t]:
                return False, f"edge {pa}->{t} points from a less important to a more important type"
    return True, "ok"


def is_legal_for(pref: LexPref, order: Sequence[int]) -> bool:
    """Whether ``pref`` is an O-legal lexicographic preference for ``order``."""
    return tuple(pref.importance) == tuple(order) and pref.is_legal


def lex_compare(pref: LexPref, x: Bundle, y: Bundle) -> int:
    """``X_BETTER`` if x is preferred, ``Y_BETTER`` if y is, ``EQUAL`` if x == y."""
    kx, ky = pref.key(x), pref.key(y)
    if kx < ky:
        return X_BETTER
    if ky < kx:
        return Y_BETTER
    return EQUAL


def prefers(pref: LexPref, x: Bundle, y: Bundle) -> bool:
    return pref.key(x) < pref.key(y)


def all_bundles_for(pref: LexPref) -> Iterator[tuple]:
    n, p = pref.num_items, pref.num_types
    covered = sorted(pref.importance)
    for combo in itertools.product(range(n), repeat=len(covered)):
        b = [None] * p
        for t, v in zip(covered, combo):
            b[t] = v
        yield tuple(b)


def rank_bundles(pref: LexPref, budget: Optional[int] = None) -> list:
    """All bundles, most preferred first."""
    check_budget("bundles", pref.num_items ** len(pref.importance), budget)
    return sorted(all_bundles_for(pref), key=pref.key)


@functools.lru_cache(maxsize=None)
def bundle_ranks(pref: LexPref) -> dict:
    return {b: i for i, b in enumerate(rank_bundles(pref))}


def project_conditional(pref: LexPref, t: int, prefix: PartialBundle) -> LocalOrder:
    position = pref.importance.index(t)
    missing = [h for h in pref.importance[:position] if prefix[h] is None]
    if missing:
        raise DomainError(f"prefix does not assign more important type(s) {missing}")
    return pref.row(t, prefix)


def _extreme_completion(pref: LexPref, fixed: list, best: bool) -> tuple:
    b = list(fixed)
    for ty in pref.importance:
        if b[ty] is None:
            row = pref.row(ty, b)
            b[ty] = row[0] if best else row[-1]
    return tuple(b)


def extreme_completion(pref: LexPref, fixed: PartialBundle, best: bool = True) -> tuple:
    """Most (``best``) or least preferred bundle agreeing with ``fixed``.

    Scanning types by importance and taking the top (bottom) item of the row
    selected by the items chosen so far yields the lexicographic maximum
    (minimum), because parents are always more important.
    """
    if not pref.is_legal:
        raise DomainError("completion needs a CP-net legal for its importance order")
    return _extreme_completion(pref, list(fixed), best)


@functools.lru_cache(maxsize=1 << 18)
def _project_extreme(pref: LexPref, assigned: tuple, t: int, best: bool) -> LocalOrder:
    if assigned[t] is not None:
        raise DomainError(f"type {t} is already assigned")
    if not pref.is_legal:
        raise DomainError("projection needs a CP-net legal for its importance order")
    fixed = list(assigned)
    keyed = []
    for a in range(pref.num_items):
        fixed[t] = a
        keyed.append((pref.key(_extreme_completion(pref, fixed, best)), a))
    keyed.sort()
    return tuple(a for _, a in keyed)


def project_optimistic(pref: LexPref, assigned: PartialBundle, t: int) -> LocalOrder:
    """Order items of ``t`` by the best completion of ``assigned`` containing each."""
    return _project_extreme(pref, tuple(assigned), t, True)


def project_pessimistic(pref: LexPref, assigned: PartialBundle, t: int) -> LocalOrder:
    """Order items of ``t`` by the worst completion of ``assigned`` containing each."""
    return _project_extreme(pref, tuple(assigned), t, False)


def project(pref: LexPref, assigned: PartialBundle, t: int, mode: str) -> LocalOrder:
    if mode == CONDITIONAL:
        return project_conditional(pref, t, assigned)
    if mode == OPTIMISTIC:
        return _project_extreme(pref, tuple(assigned), t, True)
    if mode == PESSIMISTIC:
        return _project_extreme(pref, tuple(assigned), t, False)
    raise DomainError(f"unknown projection mode {mode!r}")


def complete_dag(order: Sequence[int]) -> frozenset:
    """Every O-legal edge for ``order``: each type depends on all more important ones."""
    return frozenset((order[a], order[b]) for a in range(len(order)) for b in range(a + 1, len(order)))


def _parents_from_edges(order: Sequence[int], edges: Iterable[tuple], p: int) -> list:
    position = {t: i for i, t in enumerate(order)}
    parents = [[] for _ in range(p)]
    for a, b in edges:
        if a not in position or b not in position:
            raise DomainError(f"edge {a}->{b} mentions a type outside the order")
        if position[a] >= position[b]:
            raise DomainError(f"edge {a}->{b} is not legal for order {tuple(order)}")
        parents[b].append(a)
    return [tuple(sorted(ps, key=position.__getitem__)) for ps in parents]


def count_prefs(n: int, order: Sequence[int], edges: Iterable[tuple], p: Optional[int] = None) -> int:
    p = p if p is not None else max(order) + 1
    parents = _parents_from_edges(order, edges, p)
    return math.prod(math.factorial(n) ** (n ** len(parents[t])) for t in order)


def enumerate_prefs(
    inst: Instance,
    order: Sequence[int],
    edges: Iterable[tuple] = (),
    budget: Optional[int] = None,
) -> Iterator[LexPref]:
    """Every O-legal preference with exactly the given dependency graph."""
    edges = frozenset(edges)
    n, p = inst.n, inst.p
    parents = _parents_from_edges(order, edges, p)
    check_budget("preferences", count_prefs(n, order, edges, p), budget)
    perms = list(itertools.permutations(range(n)))
    slots = [(t, n ** len(parents[t])) for t in order]
    total_rows = sum(k for _, k in slots)
    par = tuple(tuple(ps) for ps in parents)
    for choice in itertools.product(perms, repeat=total_rows):
        rows = [None] * p
        i = 0
        for t, k in slots:
            rows[t] = tuple(choice[i : i + k])
            i += k
        yield LexPref(tuple(order), par, tuple(rows))


def perturb_raise(pref: LexPref, target: Bundle) -> LexPref:
    """Move ``target``'s item to the top of every CPT row ``target`` uses.

    The result ranks ``target`` first overall, so every bundle ``target``
    beat before is still beaten.
    """
    rows = list(pref.rows)
    for t in pref.importance:
        idx = _row_index(pref.parents[t], target, pref.num_items)
        table = list(rows[t])
        old = table[idx]
        table[idx] = (target[t],) + tuple(x for x in old if x != target[t])
        rows[t] = tuple(table)
    return LexPref(pref.importance, pref.parents, tuple(rows))


def agrees_on(a: LexPref, b: LexPref, t: int) -> bool:
    """Whether ``a`` and ``b`` select the same order over type ``t`` in every context."""
    if a.parents[t] == b.parents[t]:
        return a.rows[t] == b.rows[t]
    pas = sorted(set(a.parents[t]) | set(b.parents[t]))
    ctx = [None] * a.num_types
    for assignment in itertools.product(range(a.num_items), repeat=len(pas)):
        for pa, v in zip(pas, assignment):
            ctx[pa] = v
        if a.row(t, ctx) != b.row(t, ctx):
            return False
    return True


@dataclass(frozen=True)
class Profile:
    """One preference per agent."""

    prefs: tuple

    def __post_init__(self):
        if not self.prefs:
            raise ValidationError("a profile needs at least one agent")
        object.__setattr__(self, "prefs", tuple(self.prefs))

    @property
    def n(self) -> int:
        return len(self.prefs)

    def __len__(self):
        return len(self.prefs)

    def __getitem__(self, j):
        return self.prefs[j]

    def __iter__(self):
        return iter(self.prefs)

    @property
    def shared_order(self) -> Optional[tuple]:
        """The common importance order when every agent shares one."""
        first = self.prefs[0].importance
        if all(pr.importance == first and pr.is_legal for pr in self.prefs):
            return first
        return None

    def is_legal_for(self, order: Sequence[int]) -> bool:
        return all(is_legal_for(pr, order) for pr in self.prefs)

    def replace(self, j: int, pref: LexPref) -> "Profile":
        prefs = list(self.prefs)
        prefs[j] = pref
        return Profile(tuple(prefs))

    def permute_agents(self, pi: Sequence[int]) -> "Profile":
        """Agent ``pi[j]`` reports what agent ``j`` reported."""
        prefs = [None] * self.n
        for j, pr in enumerate(self.prefs):
            prefs[pi[j]] = pr
        return Profile(tuple(prefs))

    def rename_items(self, perms: Sequence[Sequence[int]]) -> "Profile":
        perms = tuple(tuple(pm) for pm in perms)
        return Profile(tuple(_renamed(pr, perms) for pr in self.prefs))

    def local_profile(self, t: int, allocation: Optional[Allocation] = None, mode: str = CONDITIONAL) -> LocalProfile:
        p = self.prefs[0].num_types
        alloc = allocation if allocation is not None else Allocation.empty(p)
        return tuple(project(pr, alloc.bundle(j), t, mode) for j, pr in enumerate(self.prefs))


def profile_from_local(order: Sequence[int], locals_by_type: Mapping[int, LocalProfile], p=None) -> Profile:
    """Separable O-legal profile assembled from one local profile per type."""
    n = len(next(iter(locals_by_type.values())))
    return Profile(
        tuple(
            LexPref.separable(order, {t: lp[j] for t, lp in locals_by_type.items()}, p)
            for j in range(n)
        )
    )


def enumerate_local_profiles(n: int) -> Iterator[LocalProfile]:
    perms = list(itertools.permutations(range(n)))
    return itertools.product(perms, repeat=n)
