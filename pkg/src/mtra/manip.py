"""Beneficial-manipulation search and the 3-SAT reduction.

A query fixes a mechanism, a (possibly non-legal) profile, one agent and a
class of misreports. Misreports are always legal for the mechanism's order.
Separable classes are searched round by round: the misreporter's projected
order for a type is simply her reported order, so branches that yield the
same column for a type lead to identical subtrees and are skipped.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence, Union

from .core import Allocation, DomainError, Instance, MTRAError, ValidationError
from .mechanisms import CRNetMechanism, SequentialMechanism, SerialDictatorship
from .prefs import (
    CONDITIONAL,
    OPTIMISTIC,
    PESSIMISTIC,
    LexPref,
    Profile,
    complete_dag,
    count_prefs,
    enumerate_prefs,
    project,
)

EXHAUSTIVE_SEPARABLE = "exhaustive-separable"
TOP_ITEM = "top-item-per-type"
FULL_O_LEGAL = "full-o-legal-exhaustive"
SEARCH_CLASSES = (EXHAUSTIVE_SEPARABLE, TOP_ITEM, FULL_O_LEGAL)

FOUND, NONE, INCONCLUSIVE = "found", "none", "inconclusive"

Mechanism = Union[SequentialMechanism, CRNetMechanism]


class OracleDisagreement(MTRAError):
    """Two independent procedures disagree; signals an implementation bug."""


# -- manipulation search --------------------------------------------------------------


def _local(mech: Mechanism, t: int, cols: Sequence):
    if isinstance(mech, CRNetMechanism):
        return mech.local_for(t, cols)
    return mech.locals[t]


def type_choices(truth: LexPref, t: int, search_class: str) -> list:
    """Candidate reported orders over type ``t``; the true (first-row) order leads."""
    ref = truth.rows[t][0]
    if search_class == TOP_ITEM:
        return [ref] + [(x,) + tuple(y for y in ref if y != x) for x in ref[1:]]
    if search_class == EXHAUSTIVE_SEPARABLE:
        n = len(ref)
        return [ref] + [pm for pm in itertools.permutations(range(n)) if pm != ref]
    raise DomainError(f"search class {search_class!r} is not separable")


@dataclass(frozen=True)
class ManipulationQuery:
    mechanism: Mechanism
    profile: Profile
    agent: int
    search_class: str = EXHAUSTIVE_SEPARABLE
    mode: Optional[str] = None
    budget: Optional[int] = None

    def __post_init__(self):
        if self.search_class not in SEARCH_CLASSES:
            raise DomainError(f"unknown search class {self.search_class!r}")
        if not 0 <= self.agent < self.profile.n:
            raise DomainError(f"agent {self.agent} is not in the profile")

    @property
    def order(self) -> tuple:
        return self.mechanism.order

    @property
    def projection_mode(self) -> str:
        return self.mode or self.mechanism.mode

    def class_size(self) -> int:
        truth = self.profile.prefs[self.agent]
        n, p = truth.num_items, truth.num_types
        if self.search_class == FULL_O_LEGAL:
            return count_prefs(n, self.order, complete_dag(self.order), p)
        return math.prod(len(type_choices(truth, t, self.search_class)) for t in self.order)

    def misreports(self) -> Iterator[LexPref]:
        """Every candidate in canonical order (the truthful report may occur)."""
        truth = self.profile.prefs[self.agent]
        if self.search_class == FULL_O_LEGAL:
            inst = Instance(self.profile.n, truth.num_types)
            yield from enumerate_prefs(inst, self.order, complete_dag(self.order))
            return
        per_type = [type_choices(truth, t, self.search_class) for t in self.order]
        for combo in itertools.product(*per_type):
            yield LexPref.separable(self.order, dict(zip(self.order, combo)), truth.num_types)


@dataclass
class Manipulation:
    agent: int
    misreport: LexPref
    old_bundle: tuple
    new_bundle: tuple
    before: Allocation
    after: Allocation


@dataclass
class ManipulationResult:
    status: str
    manipulation: Optional[Manipulation]
    explored: int
    class_size: int

    @property
    def found(self) -> bool:
        return self.status == FOUND


def _evaluate(mech: Mechanism, profile: Profile, mode: str) -> Allocation:
    last = None
    for last in mech.rounds(profile, mode):
        pass
    return last


def find_manipulation(q: ManipulationQuery, strategy: str = "auto") -> ManipulationResult:
    """First misreport in the class that ``q.agent`` strictly prefers under her true preference.

    ``strategy`` is ``"dfs"`` (separable classes only), ``"enumerate"``,
    or ``"auto"``. Both strategies return the same witness.
    """
    size = q.class_size()
    if q.budget is not None and size > q.budget:
        return ManipulationResult(INCONCLUSIVE, None, 0, size)
    mode = q.projection_mode
    before = _evaluate(q.mechanism, q.profile, mode)
    if strategy == "auto":
        strategy = "enumerate" if q.search_class == FULL_O_LEGAL else "dfs"
    if strategy == "dfs":
        return _search_dfs(q, mode, before, size)
    if strategy != "enumerate":
        raise DomainError(f"unknown strategy {strategy!r}")
    j = q.agent
    truth = q.profile.prefs[j]
    old = before.bundle(j)
    best = truth.key(old)
    explored = 0
    for m in q.misreports():
        explored += 1
        after = _evaluate(q.mechanism, q.profile.replace(j, m), mode)
        new = after.bundle(j)
        if truth.key(new) < best:
            return ManipulationResult(FOUND, Manipulation(j, m, old, new, before, after), explored, size)
    return ManipulationResult(NONE, None, explored, size)


def _search_dfs(q: ManipulationQuery, mode: str, before: Allocation, size: int) -> ManipulationResult:
    mech, P, j = q.mechanism, q.profile, q.agent
    truth = P.prefs[j]
    order = q.order
    p = truth.num_types
    if mode == CONDITIONAL:
        others = [pr for k, pr in enumerate(P.prefs) if k != j]
        if not Profile(tuple(others) or (truth,)).is_legal_for(order) and others:
            raise DomainError("conditional projection needs the other agents' preferences legal for the order")
    per_type = [type_choices(truth, t, q.search_class) for t in order]
    old = before.bundle(j)
    best = truth.key(old)
    explored = 0
    cols = [None] * p
    chosen = [None] * len(order)

    def descend(k: int):
        nonlocal explored
        if k == len(order):
            explored += 1
            bundle = tuple(c[j] for c in cols)
            if truth.key(bundle) < best:
                return bundle
            return None
        t = order[k]
        local = _local(mech, t, cols)
        others_lp = [
            None if a == j else project(pr, tuple(None if c is None else c[a] for c in cols), t, mode)
            for a, pr in enumerate(P.prefs)
        ]
        seen = set()
        for choice in per_type[k]:
            others_lp[j] = choice
            col = local.allocate(tuple(others_lp))
            if col in seen:
                continue
            seen.add(col)
            cols[t] = col
            chosen[k] = choice
            hit = descend(k + 1)
            if hit is not None:
                return hit
        cols[t] = None
        return None

    new = descend(0)
    if new is None:
        return ManipulationResult(NONE, None, explored, size)
    misreport = LexPref.separable(order, dict(zip(order, chosen)), p)
    after = _evaluate(mech, P.replace(j, misreport), mode)
    if after.bundle(j) != new:
        raise OracleDisagreement("round-wise search and direct evaluation disagree")
    return ManipulationResult(FOUND, Manipulation(j, misreport, old, new, before, after), explored, size)


def find_beneficial_manipulation(
    mech: Mechanism, profile: Profile, search_class: str = EXHAUSTIVE_SEPARABLE, mode=None, budget=None
) -> ManipulationResult:
    """Search every agent in index order; the first found witness wins."""
    explored = total = 0
    for j in range(profile.n):
        res = find_manipulation(ManipulationQuery(mech, profile, j, search_class, mode, budget))
        explored += res.explored
        total += res.class_size
        if res.status != NONE:
            return ManipulationResult(res.status, res.manipulation, explored, total)
    return ManipulationResult(NONE, None, explored, total)


# -- CNF formulas and satisfiability oracles ----------------------------------------------


class DimacsError(MTRAError, ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line


@dataclass(frozen=True)
class CnfFormula:
    """3-CNF over variables ``1..num_vars``; literals are signed integers."""

    num_vars: int
    clauses: tuple

    def __post_init__(self):
        object.__setattr__(self, "clauses", tuple(tuple(c) for c in self.clauses))
        if self.num_vars < 1:
            raise ValidationError("a formula needs at least one variable")
        for c in self.clauses:
            if len(c) != 3:
                raise ValidationError(f"clause {c} does not have exactly 3 literals")
            for lit in c:
                if lit == 0 or abs(lit) > self.num_vars:
                    raise ValidationError(f"literal {lit} is outside variables 1..{self.num_vars}")

    @classmethod
    def padded(cls, num_vars: int, clauses) -> "CnfFormula":
        """Repeat the last literal of short clauses until they have three."""
        out = []
        for c in clauses:
            c = tuple(c)
            if not 1 <= len(c) <= 3:
                raise ValidationError(f"clause {c} must have 1 to 3 literals")
            out.append(c + (c[-1],) * (3 - len(c)))
        return cls(num_vars, tuple(out))

    @property
    def num_clauses(self) -> int:
        return len(self.clauses)

    def satisfied_by(self, phi: Sequence[int]) -> bool:
        """``phi[i-1]`` is the value of variable ``i``."""
        return all(any((lit > 0) == bool(phi[abs(lit) - 1]) for lit in c) for c in self.clauses)

    def labeled(self, j: int) -> tuple:
        """Distinct literals of clause ``j`` by ascending variable, negative first."""
        return tuple(sorted(set(self.clauses[j]), key=lambda lit: (abs(lit), lit > 0)))


def parse_dimacs(text: str, pad: bool = False) -> CnfFormula:
    header = None
    clauses: list = []
    current: list = []
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("c") or line.startswith("%"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if header is not None:
                raise DimacsError("duplicate header", no)
            if len(parts) != 4 or parts[1] != "cnf":
                raise DimacsError("header must read 'p cnf <vars> <clauses>'", no)
            try:
                header = (int(parts[2]), int(parts[3]))
            except ValueError:
                raise DimacsError("header counts must be integers", no) from None
            continue
        if header is None:
            raise DimacsError("clause before header", no)
        for tok in line.split():
            try:
                lit = int(tok)
            except ValueError:
                raise DimacsError(f"bad literal {tok!r}", no) from None
            if lit == 0:
                if not current:
                    raise DimacsError("empty clause", no)
                if len(current) > 3 or (len(current) < 3 and not pad):
                    raise DimacsError(f"clause has {len(current)} literals, expected 3", no)
                clauses.append((tuple(current), no))
                current = []
            else:
                if abs(lit) > header[0]:
                    raise DimacsError(f"literal {lit} exceeds declared variable count {header[0]}", no)
                current.append(lit)
    if header is None:
        raise DimacsError("missing 'p cnf' header")
    if current:
        raise DimacsError("last clause is not terminated by 0")
    if len(clauses) != header[1]:
        raise DimacsError(f"header declares {header[1]} clauses, found {len(clauses)}")
    return CnfFormula.padded(header[0], [c for c, _ in clauses])


def to_dimacs(f: CnfFormula) -> str:
    lines = [f"p cnf {f.num_vars} {f.num_clauses}"]
    lines += [" ".join(str(lit) for lit in c) + " 0" for c in f.clauses]
    return "\n".join(lines) + "\n"


def brute_force_sat(f: CnfFormula) -> Optional[tuple]:
    """First satisfying assignment in binary counting order, or ``None``."""
    for phi in itertools.product((0, 1), repeat=f.num_vars):
        if f.satisfied_by(phi):
            return phi
    return None


def dpll(f: CnfFormula) -> Optional[tuple]:
    """Unit propagation plus branching; independent of :func:`brute_force_sat`."""

    def solve(clauses: list, assignment: dict):
        clauses = [set(c) for c in clauses]
        while True:
            if any(not c for c in clauses):
                return None
            if not clauses:
                return assignment
            unit = next((c for c in clauses if len(c) == 1), None)
            if unit is None:
                break
            lit = next(iter(unit))
            assignment = {**assignment, abs(lit): lit > 0}
            clauses = [c - {-lit} for c in clauses if lit not in c]
        lit = next(iter(clauses[0]))
        for choice in (lit, -lit):
            reduced = [c - {-choice} for c in clauses if choice not in c]
            out = solve(reduced, {**assignment, abs(choice): choice > 0})
            if out is not None:
                return out
        return None

    found = solve([set(c) for c in f.clauses], {})
    if found is None:
        return None
    return tuple(int(found.get(i, False)) for i in range(1, f.num_vars + 1))


def enumerate_small_formulas(num_vars: int, num_clauses: int) -> Iterator[CnfFormula]:
    """Every formula whose clauses are non-empty literal sets of size at most 3.

    Clauses are unordered (multisets); short clauses are padded by repetition.
    """
    lits = [v * s for v in range(1, num_vars + 1) for s in (-1, 1)]
    clause_sets = [
        tuple(sorted(c, key=lambda lit: (abs(lit), lit > 0)))
        for k in range(1, 4)
        for c in itertools.combinations(lits, k)
    ]
    for combo in itertools.combinations_with_replacement(range(len(clause_sets)), num_clauses):
        yield CnfFormula.padded(num_vars, [clause_sets[i] for i in combo])


# -- the reduction ----------------------------------------------------------------------


@dataclass
class ReductionInstance:
    """Allocation instance built from a formula.

    Types ``0..s-1`` stand for the variables and type ``s`` is the final
    type. Agent ``a`` owns item ``a`` of every type. ``literal_agent[(l, i, j)]``
    is agent ``l_i^j`` (``l`` in {0, 1}, 1-based ``i`` and ``j``).
    """

    formula: CnfFormula
    instance: Instance
    profile: Profile
    mechanism: SequentialMechanism
    special: int
    clause_agent: tuple
    literal_agent: dict
    dummy_agent: dict
    names: tuple = field(default=())

    @property
    def final_type(self) -> int:
        return self.formula.num_vars

    def next_item(self, l: int, i: int, j: int) -> int:
        t = self.formula.num_clauses
        return self.literal_agent[(l, i, j % t + 1)]

    def literal_item(self, lit: int, j: int) -> int:
        """Final-type item standing for literal ``lit`` of clause ``j``."""
        return self.literal_agent[(int(lit > 0), abs(lit), j)]


def _order_with_tail(head: Sequence[int], own: int, n: int) -> tuple:
    seen = list(dict.fromkeys(head))
    if own not in seen:
        seen.append(own)
    return tuple(seen) + tuple(x for x in range(n) if x not in seen)


def reduce_sat(f: CnfFormula, mode: str = OPTIMISTIC) -> ReductionInstance:
    """Build the manipulation instance for ``f``.

    Unspecified tails of preferences list the agent's own item next and then
    the remaining items by ascending index; unspecified parts of priorities
    follow ascending agent index.
    """
    s, t = f.num_vars, f.num_clauses
    if t < 1:
        raise ValidationError("the formula needs at least one clause")
    names = ["0"] + [f"c_{j}" for j in range(1, t + 1)]
    literal_agent, dummy_agent = {}, {}
    for i in range(1, s + 1):
        for j in range(1, t + 1):
            for l in (0, 1):
                literal_agent[(l, i, j)] = len(names)
                names.append(f"{l}_{i}^{j}")
            dummy_agent[(i, j)] = len(names)
            names.append(f"d_{i}^{j}")
    n = len(names)
    assert n == 3 * s * t + t + 1
    special = 0
    clause_agent = tuple(range(1, t + 1))
    p = s + 1
    final = s
    type_names = tuple(str(k + 1) for k in range(p))
    item_names = tuple(tuple(f"[{a}]_{k + 1}" for a in names) for k in range(p))
    inst = Instance(n, p, tuple(names), type_names, item_names)

    def separable(importance, heads, own):
        return LexPref.separable(importance, {k: _order_with_tail(heads.get(k, ()), own, n) for k in range(p)}, p)

    rest_after = lambda first: (first,) + tuple(k for k in range(p) if k != first)
    prefs = [None] * n
    prefs[special] = separable(rest_after(final), {final: (special, clause_agent[0])}, special)
    for j in range(1, t + 1):
        c = clause_agent[j - 1]
        lits = [f_lit for f_lit in f.labeled(j - 1)]
        head = [literal_agent[(int(lit > 0), abs(lit), j)] for lit in lits] + [special]
        prefs[c] = separable(rest_after(final), {final: tuple(head)}, c)
    for i in range(1, s + 1):
        ty = i - 1
        for j in range(1, t + 1):
            d = dummy_agent[(i, j)]
            prefs[d] = separable(rest_after(ty), {}, d)
            for l in (0, 1):
                a = literal_agent[(l, i, j)]
                nxt = literal_agent[(l, i, j % t + 1)]
                importance = rest_after(ty)
                parents = [()] * p
                rows = [None] * p
                for k in range(p):
                    rows[k] = (_order_with_tail((), a, n),)
                rows[ty] = (_order_with_tail((nxt, a, special), a, n),)
                parents[final] = (ty,)
                rows[final] = tuple(
                    _order_with_tail((a,), a, n) if item == nxt else _order_with_tail((d, a), a, n)
                    for item in range(n)
                )
                prefs[a] = LexPref(importance, tuple(parents), tuple(rows))
    profile = Profile(tuple(prefs))

    locals_ = [None] * p
    for i in range(1, s + 1):
        tail = [special]
        tail += [literal_agent[(0, i, j)] for j in range(t, 0, -1)]
        tail += [literal_agent[(1, i, j)] for j in range(t, 0, -1)]
        head = [a for a in range(n) if a not in tail]
        locals_[i - 1] = SerialDictatorship(tuple(head + tail))
    head = [literal_agent[(0, i, j)] for i in range(1, s + 1) for j in range(1, t + 1)]
    head += [literal_agent[(1, i, j)] for i in range(1, s + 1) for j in range(1, t + 1)]
    head += list(clause_agent) + [special]
    locals_[final] = SerialDictatorship(tuple(head + [a for a in range(n) if a not in head]))
    mech = SequentialMechanism(tuple(range(p)), tuple(locals_), mode)
    return ReductionInstance(f, inst, profile, mech, special, clause_agent, literal_agent, dummy_agent, tuple(names))


def truthful_mismatches(red: ReductionInstance, allocation: Allocation) -> list:
    """Differences between ``allocation`` and the expected truthful outcome."""
    s, t = red.formula.num_vars, red.formula.num_clauses
    final = red.final_type
    cols = allocation.columns
    out = []
    for i in range(1, s + 1):
        ty = i - 1
        if cols[ty][red.special] != red.special:
            out.append(f"agent 0 does not get [0]_{i}")
        for j in range(1, t + 1):
            for l in (0, 1):
                a = red.literal_agent[(l, i, j)]
                if cols[ty][a] != red.next_item(l, i, j):
                    out.append(f"agent {red.names[a]} does not get its NEXT item of type {i}")
                if cols[final][a] != a:
                    out.append(f"agent {red.names[a]} does not get its own item of type {s + 1}")
    if cols[final][red.clause_agent[0]] != red.special:
        out.append(f"agent c_1 does not get [0]_{s + 1}")
    if cols[final][red.special] != red.clause_agent[0]:
        out.append(f"agent 0 does not get [c_1]_{s + 1}")
    return out


def extract_assignment(red: ReductionInstance, allocation: Allocation) -> tuple:
    """Variable ``i`` is 0 when some clause agent holds the final-type item of ``0_i^j``."""
    final = red.final_type
    phi = []
    for i in range(1, red.formula.num_vars + 1):
        zero = any(
            allocation.columns[final][c] == red.literal_agent[(0, i, j)]
            for j, c in enumerate(red.clause_agent, 1)
        )
        phi.append(0 if zero else 1)
    return tuple(phi)


@dataclass
class Certificate:
    status: str  # "satisfiable", "no-manipulation-in-class" or "inconclusive"
    assignment: Optional[tuple]
    manipulation: Optional[Manipulation]
    sat_oracle: Optional[tuple]
    truthful_ok: bool
    modes: tuple
    explored: int = 0

    @property
    def satisfiable(self) -> bool:
        return self.status == "satisfiable"


def certify_reduction(
    f: CnfFormula,
    search_class: str = TOP_ITEM,
    budget: Optional[int] = None,
    modes: Sequence[str] = (OPTIMISTIC, PESSIMISTIC),
) -> Certificate:
    """Search agent 0's misreports in every mode and compare with SAT oracles.

    Raises :class:`OracleDisagreement` when the modes disagree, the two SAT
    oracles disagree, the search disagrees with them, the truthful outcome
    is unexpected, or an extracted assignment fails to satisfy ``f``.
    """
    brute, other = brute_force_sat(f), dpll(f)
    if (brute is None) != (other is None):
        raise OracleDisagreement("brute-force and DPLL satisfiability disagree")
    if other is not None and not f.satisfied_by(other):
        raise OracleDisagreement("DPLL returned a non-satisfying assignment")
    results = []
    truthful_ok = True
    for mode in modes:
        red = reduce_sat(f, mode)
        before = red.mechanism(red.profile)
        if truthful_mismatches(red, before):
            truthful_ok = False
        q = ManipulationQuery(red.mechanism, red.profile, red.special, search_class, mode, budget)
        results.append((red, find_manipulation(q)))
    statuses = {r.status for _, r in results}
    if len(statuses) != 1:
        raise OracleDisagreement(f"projection modes disagree: {sorted(statuses)}")
    status = statuses.pop()
    explored = sum(r.explored for _, r in results)
    if status == INCONCLUSIVE:
        return Certificate("inconclusive", None, None, brute, truthful_ok, tuple(modes), explored)
    if not truthful_ok:
        raise OracleDisagreement("truthful outcome differs from the expected allocation")
    if status == NONE:
        if brute is not None:
            raise OracleDisagreement("formula is satisfiable but no manipulation was found in the class")
        return Certificate("no-manipulation-in-class", None, None, None, True, tuple(modes), explored)
    red, first = results[0]
    phis = {extract_assignment(r, res.manipulation.after) for r, res in results}
    if len(phis) != 1:
        raise OracleDisagreement("projection modes extract different assignments")
    phi = phis.pop()
    m = first.manipulation
    if m.new_bundle[red.final_type] != red.special or m.old_bundle[red.final_type] != red.clause_agent[0]:
        raise OracleDisagreement("manipulation does not move agent 0 from [c_1] to [0] on the final type")
    if brute is None or not f.satisfied_by(phi):
        raise OracleDisagreement("extracted assignment does not satisfy the formula")
    return Certificate("satisfiable", phi, m, brute, True, tuple(modes), explored)
