"""Local mechanisms, sequential and CR-net composition, and decomposition.

Every mechanism is an immutable callable ``mech(profile) -> Allocation``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping, Optional, Sequence

from .core import Allocation, ConfigurationError, DomainError, MTRAError, ValidationError
from .prefs import (
    CONDITIONAL,
    PROJECTION_MODES,
    LocalProfile,
    Profile,
    enumerate_local_profiles,
    project,
)


class LocalMechanism:
    """Allocates all n items of one type from a local profile."""

    def allocate(self, lp: LocalProfile) -> tuple:
        raise NotImplementedError

    def __call__(self, lp: LocalProfile) -> tuple:
        return self.allocate(lp)


def run_serial_dictatorship(priority: Sequence[int], lp: LocalProfile) -> tuple:
    """Agents pick their favourite remaining item in priority order."""
    n = len(lp)
    taken = [False] * n
    col = [0] * n
    for agent in priority:
        for item in lp[agent]:
            if not taken[item]:
                taken[item] = True
                col[agent] = item
                break
    return tuple(col)


@dataclass(frozen=True)
class SerialDictatorship(LocalMechanism):
    priority: tuple

    def __post_init__(self):
        object.__setattr__(self, "priority", tuple(self.priority))
        if sorted(self.priority) != list(range(len(self.priority))):
            raise ValidationError(f"SD priority {self.priority} is not a permutation of the agents")

    def allocate(self, lp: LocalProfile) -> tuple:
        if len(lp) != len(self.priority):
            raise DomainError(f"local profile has {len(lp)} agents, SD expects {len(self.priority)}")
        return run_serial_dictatorship(self.priority, lp)


class TableMechanism(LocalMechanism):
    """Explicit lookup table from local profiles to item columns."""

    def __init__(self, table: Mapping[LocalProfile, Sequence[int]]):
        if not table:
            raise ValidationError("a table mechanism needs at least one entry")
        entries = {}
        for lp, col in table.items():
            lp = tuple(tuple(o) for o in lp)
            col = tuple(col)
            if sorted(col) != list(range(len(lp))):
                raise ValidationError(f"table output {col} is not a bijection")
            entries[lp] = col
        self._table = entries
        self._key = tuple(sorted(entries.items()))

    @classmethod
    def from_function(cls, fn: Callable[[LocalProfile], Sequence[int]], n: int) -> "TableMechanism":
        return cls({lp: fn(lp) for lp in enumerate_local_profiles(n)})

    @property
    def table(self) -> dict:
        return dict(self._table)

    def allocate(self, lp: LocalProfile) -> tuple:
        try:
            return self._table[lp]
        except KeyError:
            raise DomainError(f"local profile {lp} is outside the table's domain") from None

    def __eq__(self, other):
        return isinstance(other, TableMechanism) and self._key == other._key

    def __hash__(self):
        return hash(self._key)

    def __repr__(self):
        return f"TableMechanism(<{len(self._table)} entries>)"


def simplify_local(local: LocalMechanism) -> LocalMechanism:
    """Replace a table by the serial dictatorship it coincides with, if any."""
    if not isinstance(local, TableMechanism):
        return local
    table = local._table
    n = len(next(iter(table)))
    for priority in itertools.permutations(range(n)):
        if all(run_serial_dictatorship(priority, lp) == col for lp, col in table.items()):
            return SerialDictatorship(priority)
    return local


def _num_types(profile: Profile) -> int:
    return profile.prefs[0].num_types


@dataclass(frozen=True)
class SequentialMechanism:
    """Local mechanisms applied one type at a time in ``order``."""

    order: tuple
    locals: tuple  # indexed by type
    mode: str = CONDITIONAL

    def __post_init__(self):
        object.__setattr__(self, "order", tuple(self.order))
        object.__setattr__(self, "locals", tuple(self.locals))
        if sorted(self.order) != list(range(len(self.locals))):
            raise ValidationError("order must list every type exactly once, one local per type")
        if self.mode not in PROJECTION_MODES:
            raise ValidationError(f"unknown projection mode {self.mode!r}")

    def rounds(self, profile: Profile, mode: Optional[str] = None) -> Iterator[Allocation]:
        mode = mode or self.mode
        if mode == CONDITIONAL and not profile.is_legal_for(self.order):
            raise DomainError(
                f"conditional projection needs a profile legal for order {self.order}; "
                "use optimistic or pessimistic mode"
            )
        p = len(self.locals)
        cols = [None] * p
        for t in self.order:
            lp = tuple(
                project(pr, tuple(None if c is None else c[j] for c in cols), t, mode)
                for j, pr in enumerate(profile.prefs)
            )
            cols[t] = self.locals[t].allocate(lp)
            yield Allocation(tuple(cols))

    def __call__(self, profile: Profile) -> Allocation:
        return run_sequential(self, profile)

    def with_mode(self, mode: str) -> "SequentialMechanism":
        return SequentialMechanism(self.order, self.locals, mode)


def run_sequential(m: SequentialMechanism, prof: Profile, projection_mode: Optional[str] = None) -> Allocation:
    """Final allocation of :meth:`SequentialMechanism.rounds`, without the intermediate objects."""
    mode = projection_mode or m.mode
    prefs = prof.prefs
    if mode == CONDITIONAL and not prof.is_legal_for(m.order):
        return next(iter(m.rounds(prof, mode)))  # raises the domain error
    p = len(m.locals)
    cols = [None] * p
    bundles = [[None] * p for _ in prefs]
    for t in m.order:
        if mode == CONDITIONAL:
            # legality guarantees every parent of t is already allocated
            lp = tuple(pr.row(t, b) for pr, b in zip(prefs, bundles))
        else:
            lp = tuple(project(pr, tuple(b), t, mode) for pr, b in zip(prefs, bundles))
        col = m.locals[t].allocate(lp)
        cols[t] = col
        for j, x in enumerate(col):
            bundles[j][t] = x
    return Allocation(tuple(cols))


class CRNetMechanism:
    """Conditional rule net: the local mechanism of a type is chosen by the
    realised allocation of that type's parent types.

    ``crt[t]`` maps a tuple of parent columns (in ``parents[t]`` order) to a
    local mechanism.
    """

    def __init__(
        self,
        order: Sequence[int],
        parents: Sequence[Sequence[int]],
        crt: Sequence[Mapping[tuple, LocalMechanism]],
        mode: str = CONDITIONAL,
        reachable: Optional[Sequence[Iterable[tuple]]] = None,
    ):
        self.order = tuple(order)
        p = len(self.order)
        if sorted(self.order) != list(range(p)):
            raise ValidationError("order must list every type exactly once")
        position = {t: i for i, t in enumerate(self.order)}
        self.parents = tuple(tuple(ps) for ps in parents)
        for t, ps in enumerate(self.parents):
            for pa in ps:
                if position[pa] >= position[t]:
                    raise ValidationError(
                        f"CR-net edge {pa}->{t} is not legal for order {self.order}"
                    )
        if len(crt) != p:
            raise ValidationError("one rule table per type is required")
        self.crt = tuple(dict(rows) for rows in crt)
        self.mode = mode
        self.reachable = None if reachable is None else tuple(frozenset(r) for r in reachable)

    @classmethod
    def build(
        cls,
        order: Sequence[int],
        parents: Sequence[Sequence[int]],
        rows: Sequence[Mapping[tuple, LocalMechanism]],
        n: int,
        default: Optional[Sequence[Optional[LocalMechanism]]] = None,
        mode: str = CONDITIONAL,
    ) -> "CRNetMechanism":
        """Fill every unlisted parent allocation with a default local.

        The default for a type is ``default[t]`` when given, otherwise the
        first listed row.
        """
        perms = list(itertools.permutations(range(n)))
        full, reachable = [], []
        for t, ps in enumerate(parents):
            given = dict(rows[t])
            fallback = default[t] if default is not None and default[t] is not None else None
            if fallback is None:
                if not given:
                    raise ConfigurationError(f"no local mechanism for type {t}")
                fallback = next(iter(given.values()))
            table = {}
            for key in itertools.product(perms, repeat=len(ps)):
                table[key] = given.get(key, fallback)
            unknown = set(given) - set(table)
            if unknown:
                raise ValidationError(f"type {t} rule table has invalid parent allocations {sorted(unknown)}")
            full.append(table)
            reachable.append(given.keys())
        return cls(order, parents, full, mode, reachable)

    @classmethod
    def from_sequential(cls, m: SequentialMechanism) -> "CRNetMechanism":
        p = len(m.order)
        return cls(m.order, [()] * p, [{(): m.locals[t]} for t in range(p)], m.mode)

    def local_for(self, t: int, cols: Sequence[Optional[tuple]]) -> LocalMechanism:
        key = tuple(cols[pa] for pa in self.parents[t])
        try:
            return self.crt[t][key]
        except KeyError:
            raise ConfigurationError(
                f"no rule for type {t} given parent allocation {dict(zip(self.parents[t], key))}"
            ) from None

    def rounds(self, profile: Profile, mode: Optional[str] = None) -> Iterator[Allocation]:
        mode = mode or self.mode
        if mode == CONDITIONAL and not profile.is_legal_for(self.order):
            raise DomainError(f"profile is not legal for order {self.order}")
        cols = [None] * len(self.order)
        for t in self.order:
            local = self.local_for(t, cols)
            lp = tuple(
                project(pr, tuple(None if c is None else c[j] for c in cols), t, mode)
                for j, pr in enumerate(profile.prefs)
            )
            cols[t] = local.allocate(lp)
            yield Allocation(tuple(cols))

    def __call__(self, profile: Profile) -> Allocation:
        return run_crnet(self, profile)

    def __repr__(self):
        return f"CRNetMechanism(order={self.order}, parents={self.parents})"


def run_crnet(m: CRNetMechanism, prof: Profile, mode: Optional[str] = None) -> Allocation:
    last = None
    for last in m.rounds(prof, mode):
        pass
    return last


class MechanismTable:
    """A mechanism given extensionally on a finite profile domain."""

    def __init__(self, entries: Mapping[Profile, Allocation], order: Optional[Sequence[int]] = None):
        self.entries = dict(entries)
        self.order = None if order is None else tuple(order)

    def __call__(self, profile: Profile) -> Allocation:
        try:
            return self.entries[profile]
        except KeyError:
            raise DomainError("profile is outside the table's domain") from None

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def items(self):
        return self.entries.items()


def tabulate(mech: Callable[[Profile], Allocation], profiles: Iterable[Profile], order=None) -> MechanismTable:
    return MechanismTable({P: mech(P) for P in profiles}, order)


def mechanisms_agree(a: Callable, b: Callable, profiles: Iterable[Profile]) -> bool:
    return all(a(P) == b(P) for P in profiles)


# -- decomposition -------------------------------------------------------------------


@dataclass
class DecompositionWitness:
    """Two profiles showing a table cannot be split at ``type`` in the given order.

    ``step`` is ``"pref1"`` when the allocation of ``type`` differs although
    every agent's local order over ``type`` is the same; ``"dep1"`` when the
    allocation of the remaining types differs although the allocation so far
    and every agent's conditioned preference over the remaining types agree;
    ``"domain"`` when a profile is not legal for the order.
    """

    step: str
    order: tuple
    type: int
    history: Allocation
    profile_a: Profile
    profile_b: Optional[Profile]
    allocation_a: Optional[Allocation] = None
    allocation_b: Optional[Allocation] = None
    message: str = ""

    def revalidate(self, table: Callable[[Profile], Allocation]) -> bool:
        """Recompute the violation from scratch against ``table``."""
        if self.step == "domain":
            return not self.profile_a.is_legal_for(self.order)
        A, B = table(self.profile_a), table(self.profile_b)
        if A != self.allocation_a or B != self.allocation_b:
            return False
        k = self.order.index(self.type)
        before = self.order[:k]
        if A.restrict(before) != self.history or B.restrict(before) != self.history:
            return False
        cond_a = _conditioned(self.profile_a, self.history, before)
        cond_b = _conditioned(self.profile_b, self.history, before)
        if self.step == "pref1":
            same_local = all(x.root_row(self.type) == y.root_row(self.type) for x, y in zip(cond_a, cond_b))
            return same_local and A.columns[self.type] != B.columns[self.type]
        if self.step == "dep1":
            upto = self.order[: k + 1]
            rest = self.order[k + 1 :]
            if A.restrict(upto) != B.restrict(upto):
                return False
            col = A.columns[self.type]
            ca = tuple(pr.condition({self.type: col[j]}) for j, pr in enumerate(cond_a))
            cb = tuple(pr.condition({self.type: col[j]}) for j, pr in enumerate(cond_b))
            return ca == cb and A.restrict(rest) != B.restrict(rest)
        return False


class DecompositionError(MTRAError):
    def __init__(self, witness: DecompositionWitness):
        super().__init__(witness.message or f"decomposition failed at step {witness.step}")
        self.witness = witness


def _conditioned(profile: Profile, history: Allocation, types: Sequence[int]) -> tuple:
    if not types:
        return profile.prefs
    return tuple(
        pr.condition({t: history.columns[t][j] for t in types}) for j, pr in enumerate(profile.prefs)
    )


def decompose(table: MechanismTable, order: Sequence[int], simplify: bool = True) -> CRNetMechanism:
    """Split a tabulated mechanism into a CR-net legal for ``order``.

    Round ``k`` recovers the local mechanism of ``order[k]`` for each
    realised allocation of the earlier types: first the allocation of the
    type must be a function of the agents' local orders over it, then the
    allocation of the later types must be a function of the agents'
    preferences conditioned on what they already hold. Raises
    :class:`DecompositionError` with a witness pair when either fails.
    """
    order = tuple(order)
    if not len(table):
        raise DomainError("cannot decompose an empty table")
    some = next(iter(table))
    p = _num_types(some)
    n = some.n
    if sorted(order) != list(range(p)):
        raise DomainError(f"order {order} is not a permutation of the {p} types")
    for P in table:
        if not P.is_legal_for(order):
            raise DecompositionError(
                DecompositionWitness(
                    "domain", order, order[0], Allocation.empty(p), P, None,
                    message=f"profile domain is not legal for order {order}",
                )
            )
    found: list = [dict() for _ in range(p)]
    entries = [(P, P.prefs, A) for P, A in table.items()]
    _decompose_level(entries, order, 0, Allocation.empty(p), found)

    parents, rows = [], []
    for k, t in enumerate(order):
        pas, reduced = _prune_parents(order[:k], found[t]) if simplify else (order[:k], found[t])
        parents.append((t, pas))
        rows.append((t, reduced))
    par = [None] * p
    row_tables = [None] * p
    for (t, pas), (_, r) in zip(parents, rows):
        par[t], row_tables[t] = pas, r
    return CRNetMechanism.build(order, par, row_tables, n)


def _decompose_level(entries, order, k, history, found):
    t = order[k]
    before = order[:k]
    by_local: dict = {}
    for P, cond, A in entries:
        lp = tuple(pr.root_row(t) for pr in cond)
        col = A.columns[t]
        prev = by_local.get(lp)
        if prev is None:
            by_local[lp] = (col, P, A)
        elif prev[0] != col:
            raise DecompositionError(
                DecompositionWitness(
                    "pref1", order, t, history, prev[1], P, prev[2], A,
                    message=(
                        f"allocation of type {t} differs between two profiles with the same "
                        f"local orders over type {t}"
                    ),
                )
            )
    local = TableMechanism({lp: v[0] for lp, v in by_local.items()})
    key = tuple(history.columns[h] for h in before)
    found[t][key] = local
    if k == len(order) - 1:
        return
    rest = order[k + 1 :]
    groups: dict = {}
    for P, cond, A in entries:
        groups.setdefault(A.columns[t], []).append((P, cond, A))
    for col, group in sorted(groups.items()):
        residual: dict = {}
        nxt = []
        for P, cond, A in group:
            ccond = tuple(pr.condition({t: col[j]}) for j, pr in enumerate(cond))
            out = A.restrict(rest)
            prev = residual.get(ccond)
            if prev is None:
                residual[ccond] = (out, P, A)
            elif prev[0] != out:
                raise DecompositionError(
                    DecompositionWitness(
                        "dep1", order, t, history, prev[1], P, prev[2], A,
                        message=(
                            f"allocation of types after {t} differs although the allocation so far "
                            "and the conditioned preferences agree"
                        ),
                    )
                )
            nxt.append((P, ccond, A))
        cols = list(history.columns)
        cols[t] = col
        _decompose_level(nxt, order, k + 1, Allocation(tuple(cols)), found)


def _prune_parents(candidates: tuple, rows: Mapping[tuple, LocalMechanism]):
    """Drop parents the recovered rule table does not depend on.

    Tables are first replaced by equivalent serial dictatorships so equal
    rules compare equal.
    """
    rows = {key: simplify_local(loc) for key, loc in rows.items()}
    keep = list(range(len(candidates)))
    changed = True
    while changed:
        changed = False
        for drop in list(keep):
            trial = [i for i in keep if i != drop]
            reduced: dict = {}
            ok = True
            for key, loc in rows.items():
                rk = tuple(key[i] for i in trial)
                if reduced.setdefault(rk, loc) != loc:
                    ok = False
                    break
            if ok:
                keep = trial
                changed = True
                break
    reduced = {tuple(key[i] for i in keep): loc for key, loc in rows.items()}
    return tuple(candidates[i] for i in keep), reduced


def decompose_all_orders(table: MechanismTable) -> dict:
    """Try every importance order; map each to a CR-net or the failure."""
    p = _num_types(next(iter(table)))
    out = {}
    for order in itertools.permutations(range(p)):
        try:
            out[order] = decompose(table, order)
        except DecompositionError as exc:
            out[order] = exc
    return out


# -- families used by the theorem suites --------------------------------------------


def all_serial_dictatorships(n: int) -> list:
    return [SerialDictatorship(pr) for pr in itertools.permutations(range(n))]


def sequential_sd_compositions(n: int, order: Sequence[int], mode: str = CONDITIONAL) -> Iterator[SequentialMechanism]:
    p = len(order)
    sds = all_serial_dictatorships(n)
    for combo in itertools.product(sds, repeat=p):
        yield SequentialMechanism(tuple(order), combo, mode)


def crnets_of_sd(n: int, order: Sequence[int]) -> Iterator[CRNetMechanism]:
    """Every CR-net whose types depend on all more important types, with SD rules."""
    order = tuple(order)
    p = len(order)
    perms = list(itertools.permutations(range(n)))
    sds = all_serial_dictatorships(n)
    slots = []  # (type, parent key)
    for k, t in enumerate(order):
        for key in itertools.product(perms, repeat=k):
            slots.append((t, key))
    parents = [None] * p
    for k, t in enumerate(order):
        parents[t] = order[:k]
    for choice in itertools.product(sds, repeat=len(slots)):
        crt = [dict() for _ in range(p)]
        for (t, key), sd in zip(slots, choice):
            crt[t][key] = sd
        yield CRNetMechanism(order, parents, crt)


def count_crnets_of_sd(n: int, p: int) -> int:
    f = math.factorial(n)
    return f ** sum(f ** k for k in range(p))
