"""Brute-force and sampled checkers for axiomatic properties of mechanisms.

Each checker walks a :class:`ProfileDomain` in canonical order and returns a
:class:`PropertyReport`. A violation carries a :class:`Witness` that can be
re-checked against the mechanism on its own.
"""
from __future__ import annotations

import enum
import functools
import itertools
import logging
import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Optional, Sequence

from .core import Allocation, DomainError, Instance, check_budget, enumerate_allocations
from .mechanisms import LocalMechanism, SequentialMechanism
from .prefs import (
    LexPref,
    Profile,
    agrees_on,
    bundle_ranks,
    complete_dag,
    count_prefs,
    enumerate_prefs,
    is_legal_for,
)

log = logging.getLogger(__name__)

Mechanism = Callable[[Profile], Allocation]


class Property(str, enum.Enum):
    ANONYMITY = "anonymity"
    TYPEWISE_NEUTRALITY = "typewise-neutrality"
    NON_BOSSINESS = "non-bossiness"
    NON_BOSSINESS_IMPORTANT = "non-bossiness-important"
    MONOTONICITY = "monotonicity"
    PARETO = "pareto"
    STRATEGYPROOFNESS = "strategyproofness"


class Verdict(str, enum.Enum):
    HOLDS_EXHAUSTIVE = "holds-exhaustive"
    HOLDS_SAMPLED = "holds-sampled"
    VIOLATED = "violated"


# -- domains and misreport policies -------------------------------------------------


@dataclass(frozen=True)
class MisreportPolicy:
    """Which alternative reports an agent is allowed to try.

    ``domain``: every other preference in the profile domain.
    ``separable``: every separable preference legal for the domain order,
    with each type's true order tried first.
    ``top-item``: separable preferences that only move one item per type to
    the top of the true order.
    ``sampled``: ``k`` random preferences legal for the domain order; each
    keeps the true orders of a random number of leading types.
    """

    kind: str = "domain"
    k: int = 0
    seed: Optional[int] = None

    KINDS = ("domain", "separable", "top-item", "sampled")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise DomainError(f"unknown misreport policy {self.kind!r}")
        if self.kind == "sampled" and (self.k < 1 or self.seed is None):
            raise DomainError("sampled misreports need k >= 1 and a seed")

    @property
    def exhaustive(self) -> bool:
        return self.kind != "sampled"


@dataclass
class ProfileDomain:
    """Profiles over ``instance`` built from per-agent preference classes.

    ``classes`` lists ``(importance order, dependency edges)`` pairs; every
    agent may report any preference from any class. ``order`` is the
    reference importance order used for misreports and the properties that
    mention types by importance.
    """

    instance: Instance
    order: tuple
    classes: tuple
    samples: Optional[int] = None
    seed: Optional[int] = None
    budget: Optional[int] = None
    explicit: Optional[tuple] = None
    _cands: Optional[list] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.order = tuple(self.order)
        if self.samples is not None and self.seed is None:
            raise DomainError("a seed is required whenever sampling is requested")

    @classmethod
    def o_legal(cls, inst: Instance, order: Optional[Sequence[int]] = None, **kw) -> "ProfileDomain":
        order = tuple(range(inst.p)) if order is None else tuple(order)
        return cls(inst, order, ((order, complete_dag(order)),), **kw)

    @classmethod
    def separable(cls, inst: Instance, order: Optional[Sequence[int]] = None, any_order: bool = False, **kw):
        order = tuple(range(inst.p)) if order is None else tuple(order)
        orders = list(itertools.permutations(range(inst.p))) if any_order else [order]
        return cls(inst, order, tuple((o, frozenset()) for o in orders), **kw)

    @classmethod
    def lexicographic(cls, inst: Instance, order: Optional[Sequence[int]] = None, **kw):
        """Every agent may hold any importance order with any legal CP-net."""
        order = tuple(range(inst.p)) if order is None else tuple(order)
        orders = list(itertools.permutations(range(inst.p)))
        return cls(inst, order, tuple((o, complete_dag(o)) for o in orders), **kw)

    @classmethod
    def of_profiles(cls, profiles: Iterable[Profile], order: Sequence[int], inst: Optional[Instance] = None):
        profiles = tuple(profiles)
        pr = profiles[0].prefs[0]
        inst = inst or Instance(profiles[0].n, pr.num_types)
        return cls(inst, tuple(order), (), explicit=profiles)

    @property
    def sampled(self) -> bool:
        return self.samples is not None

    def candidate_prefs(self) -> list:
        if self._cands is None:
            if self.explicit is not None:
                seen = dict.fromkeys(pr for P in self.explicit for pr in P.prefs)
                self._cands = list(seen)
            else:
                total = sum(count_prefs(self.instance.n, o, e, self.instance.p) for o, e in self.classes)
                check_budget("preferences per agent", total, self.budget)
                cands = []
                for o, e in self.classes:
                    cands.extend(enumerate_prefs(self.instance, o, e))
                self._cands = list(dict.fromkeys(cands))
        return self._cands

    def count(self) -> int:
        if self.explicit is not None:
            return len(self.explicit)
        if self.sampled:
            return self.samples
        return len(self.candidate_prefs()) ** self.instance.n

    def profiles(self) -> Iterator[Profile]:
        if self.explicit is not None:
            yield from self.explicit
            return
        cands = self.candidate_prefs()
        n = self.instance.n
        if self.sampled:
            rng = random.Random(self.seed)
            for _ in range(self.samples):
                yield Profile(tuple(rng.choice(cands) for _ in range(n)))
            return
        check_budget("profiles", len(cands) ** n, self.budget)
        for combo in itertools.product(cands, repeat=n):
            yield Profile(combo)


def _reference_row(pref: LexPref, t: int) -> tuple:
    return pref.rows[t][0]


def separable_misreports(true_pref: LexPref, order: Sequence[int], n: int, p: int) -> Iterator[LexPref]:
    """Separable preferences for ``order``; per type the true order comes first."""
    perms = list(itertools.permutations(range(n)))
    per_type = []
    for t in order:
        ref = _reference_row(true_pref, t)
        per_type.append([ref] + [x for x in perms if x != ref])
    for combo in itertools.product(*per_type):
        yield LexPref.separable(order, dict(zip(order, combo)), p)


def top_item_choices(true_pref: LexPref, t: int) -> list:
    """Local orders with one item promoted to the top of the true order."""
    ref = _reference_row(true_pref, t)
    out = [ref]
    for item in range(len(ref)):
        if item != ref[0]:
            out.append((item,) + tuple(x for x in ref if x != item))
    return out


def top_item_misreports(true_pref: LexPref, order: Sequence[int], p: int) -> Iterator[LexPref]:
    per_type = [top_item_choices(true_pref, t) for t in order]
    for combo in itertools.product(*per_type):
        yield LexPref.separable(order, dict(zip(order, combo)), p)


def sampled_misreport(true_pref: LexPref, order: Sequence[int], n: int, rng: random.Random) -> LexPref:
    p = true_pref.num_types
    keep = rng.randrange(len(order)) if is_legal_for(true_pref, order) else 0
    parents = [()] * p
    rows = [None] * p
    ctx = [None] * p
    for pos, t in enumerate(order):
        pas = tuple(order[:pos])
        parents[t] = pas
        table = []
        for assignment in itertools.product(range(n), repeat=len(pas)):
            if pos < keep:
                for pa, v in zip(pas, assignment):
                    ctx[pa] = v
                table.append(true_pref.row(t, ctx))
            else:
                row = list(range(n))
                rng.shuffle(row)
                table.append(tuple(row))
        rows[t] = tuple(table)
    return LexPref(tuple(order), tuple(parents), tuple(rows))


@functools.lru_cache(maxsize=1 << 16)
def _sampled_misreports(true_pref: LexPref, order: tuple, n: int, k: int, seed: str) -> tuple:
    rng = random.Random(seed)
    return tuple(sampled_misreport(true_pref, order, n, rng) for _ in range(k))


def misreports_for(dom: ProfileDomain, policy: MisreportPolicy, true_pref: LexPref, tag: str) -> Iterator[LexPref]:
    inst = dom.instance
    if policy.kind == "domain":
        cands = dom.candidate_prefs()
    elif policy.kind == "separable":
        cands = separable_misreports(true_pref, dom.order, inst.n, inst.p)
    elif policy.kind == "top-item":
        cands = top_item_misreports(true_pref, dom.order, inst.p)
    else:
        cands = _sampled_misreports(true_pref, dom.order, inst.n, policy.k, f"{policy.seed}:{tag}")
    for m in cands:
        if m != true_pref:
            yield m


# -- reports and witnesses -------------------------------------------------------------


@dataclass
class Witness:
    """A concrete scenario violating ``property``."""

    property: Property
    profile: Profile
    before: Allocation
    agent: Optional[int] = None
    misreport: Optional[LexPref] = None
    after: Optional[Allocation] = None
    permutation: Optional[tuple] = None
    dominating: Optional[Allocation] = None
    type_position: Optional[int] = None
    order: Optional[tuple] = None
    reading: str = "raise"

    def revalidate(self, mech: Mechanism) -> bool:
        """Re-run the scenario and confirm it still violates the property."""
        P = self.profile
        A = mech(P)
        if A != self.before:
            return False
        prop = self.property
        if prop == Property.ANONYMITY:
            B = mech(P.permute_agents(self.permutation))
            return (self.after is None or B == self.after) and B != _permute_agents(A, self.permutation)
        if prop == Property.TYPEWISE_NEUTRALITY:
            B = mech(P.rename_items(self.permutation))
            return (self.after is None or B == self.after) and B != _rename_items(A, self.permutation)
        if prop == Property.PARETO:
            return _pareto_dominates(P, self.dominating, A)
        j = self.agent
        B = mech(P.replace(j, self.misreport))
        if B != self.after:
            return False
        truth = P.prefs[j]
        if prop == Property.STRATEGYPROOFNESS:
            return truth.key(B.bundle(j)) < truth.key(A.bundle(j))
        if prop == Property.NON_BOSSINESS:
            return A.bundle(j) == B.bundle(j) and A != B
        if prop == Property.NON_BOSSINESS_IMPORTANT:
            i = self.type_position
            if not all(agrees_on(truth, self.misreport, t) for t in self.order[:i]):
                return False
            S = self.order[: i + 1]
            Ar, Br = A.restrict(S), B.restrict(S)
            return Ar.bundle(j) == Br.bundle(j) and Ar != Br
        if prop == Property.MONOTONICITY:
            return _monotonicity_violated(truth, self.misreport, A.bundle(j), B.bundle(j), self.reading)
        return False


@dataclass
class PropertyReport:
    property: Property
    verdict: Verdict
    checked: int
    profiles: int
    witness: Optional[Witness] = None
    samples: Optional[int] = None
    seed: Optional[int] = None

    @property
    def holds(self) -> bool:
        return self.verdict != Verdict.VIOLATED


def _permute_agents(A: Allocation, pi: Sequence[int]) -> Allocation:
    cols = []
    for col in A.columns:
        if col is None:
            cols.append(None)
            continue
        new = [0] * len(col)
        for j, item in enumerate(col):
            new[pi[j]] = item
        cols.append(tuple(new))
    return Allocation(tuple(cols))


def _rename_items(A: Allocation, perms: Sequence[Sequence[int]]) -> Allocation:
    return Allocation(
        tuple(None if col is None else tuple(perms[t][x] for x in col) for t, col in enumerate(A.columns))
    )


def _pareto_dominates(P: Profile, C: Allocation, A: Allocation) -> bool:
    strict = False
    for j, pr in enumerate(P.prefs):
        kc, ka = pr.key(C.bundle(j)), pr.key(A.bundle(j))
        if ka < kc:
            return False
        if kc < ka:
            strict = True
    return strict


MONOTONICITY_READINGS = ("raise", "literal")


def _keeps_order(r_old: dict, r_new: dict, bundles: list) -> bool:
    bundles = sorted(bundles, key=r_old.__getitem__)
    news = [r_new[b] for b in bundles]
    return all(a < b for a, b in zip(news, news[1:]))


def raised_set(truth: LexPref, report: LexPref, reading: str = "raise") -> Optional[frozenset]:
    """Bundles whose rank index strictly drops from ``truth`` to ``report``.

    Returns ``None`` when ``report`` is not obtained by raising that set:
    the raised bundles must keep their relative order and, under the
    ``raise`` reading, so must all the other bundles.
    """
    r_old, r_new = bundle_ranks(truth), bundle_ranks(report)
    raised = [b for b in r_old if r_new[b] < r_old[b]]
    if not _keeps_order(r_old, r_new, raised):
        return None
    if reading == "raise":
        rest = [b for b in r_old if r_new[b] >= r_old[b]]
        if not _keeps_order(r_old, r_new, rest):
            return None
    elif reading != "literal":
        raise DomainError(f"unknown monotonicity reading {reading!r}")
    return frozenset(raised)


def _monotonicity_violated(truth, report, old, new, reading="raise") -> bool:
    Y = raised_set(truth, report, reading)
    if Y is None:
        return False
    return new != old and new not in Y


# -- per-profile checks ---------------------------------------------------------------
# Each returns (scenarios checked, witness or None) for one profile.


def _misreport_tag(idx: int, j: int) -> str:
    return f"{idx}:{j}"


def _check_anonymity(mech, dom, policy, P, idx, ctx):
    A = mech(P)
    count = 0
    for pi in ctx["agent_perms"]:
        count += 1
        B = mech(P.permute_agents(pi))
        if B != _permute_agents(A, pi):
            return count, Witness(Property.ANONYMITY, P, A, after=B, permutation=pi)
    return count, None


def _check_neutrality(mech, dom, policy, P, idx, ctx):
    A = mech(P)
    count = 0
    for perms in ctx["item_perms"]:
        count += 1
        B = mech(P.rename_items(perms))
        if B != _rename_items(A, perms):
            return count, Witness(Property.TYPEWISE_NEUTRALITY, P, A, after=B, permutation=perms)
    return count, None


def _check_pareto(mech, dom, policy, P, idx, ctx):
    A = mech(P)
    ranks = [bundle_ranks(pr) for pr in P.prefs]
    current = [ranks[j][A.bundle(j)] for j in range(P.n)]
    count = 0
    for C, bundles in ctx["allocations"]:
        count += 1
        strict = False
        for j, b in enumerate(bundles):
            r = ranks[j][b]
            if r > current[j]:
                break
            if r < current[j]:
                strict = True
        else:
            if strict:
                return count, Witness(Property.PARETO, P, A, dominating=C)
    return count, None


def _check_misreports(prop):
    def check(mech, dom, policy, P, idx, ctx):
        A = mech(P)
        count = 0
        order = dom.order
        for j, truth in enumerate(P.prefs):
            old = A.bundle(j)
            for m in misreports_for(dom, policy, truth, _misreport_tag(idx, j)):
                B = mech(P.replace(j, m))
                new = B.bundle(j)
                count += 1
                if prop == Property.STRATEGYPROOFNESS:
                    bad = truth.key(new) < truth.key(old)
                    if bad:
                        return count, Witness(prop, P, A, j, m, B)
                elif prop == Property.NON_BOSSINESS:
                    if new == old and A != B:
                        return count, Witness(prop, P, A, j, m, B)
                elif prop == Property.MONOTONICITY:
                    if _monotonicity_violated(truth, m, old, new, ctx["reading"]):
                        return count, Witness(prop, P, A, j, m, B, reading=ctx["reading"])
                elif prop == Property.NON_BOSSINESS_IMPORTANT:
                    # scan prefixes of the order; stop after the first type the report changes
                    same_own, differs = True, False
                    for i, t in enumerate(order):
                        a, b = A.columns[t], B.columns[t]
                        same_own = same_own and a[j] == b[j]
                        differs = differs or a != b
                        if not same_own:
                            break
                        if differs:
                            return count, Witness(prop, P, A, j, m, B, type_position=i, order=order)
                        if not agrees_on(truth, m, t):
                            break
        return count, None

    return check


_CHECKS = {
    Property.ANONYMITY: _check_anonymity,
    Property.TYPEWISE_NEUTRALITY: _check_neutrality,
    Property.PARETO: _check_pareto,
    Property.STRATEGYPROOFNESS: _check_misreports(Property.STRATEGYPROOFNESS),
    Property.NON_BOSSINESS: _check_misreports(Property.NON_BOSSINESS),
    Property.NON_BOSSINESS_IMPORTANT: _check_misreports(Property.NON_BOSSINESS_IMPORTANT),
    Property.MONOTONICITY: _check_misreports(Property.MONOTONICITY),
}


def _context(prop: Property, dom: ProfileDomain, reading: str = "raise") -> dict:
    n, p = dom.instance.n, dom.instance.p
    ctx = {"reading": reading}
    if prop == Property.ANONYMITY:
        ctx["agent_perms"] = [pi for pi in itertools.permutations(range(n)) if list(pi) != list(range(n))]
    elif prop == Property.TYPEWISE_NEUTRALITY:
        ident = tuple(range(n))
        ctx["item_perms"] = [
            perms
            for perms in itertools.product(itertools.permutations(range(n)), repeat=p)
            if any(pm != ident for pm in perms)
        ]
    elif prop == Property.PARETO:
        ctx["allocations"] = [(C, C.bundles()) for C in enumerate_allocations(dom.instance)]
    return ctx


def _run_chunk(args):
    prop, mech, dom, policy, reading, chunk = args
    ctx = _context(prop, dom, reading)
    check = _CHECKS[prop]
    total = 0
    for idx, P in chunk:
        c, w = check(mech, dom, policy, P, idx, ctx)
        total += c
        if w is not None:
            return total, len(chunk), idx, w
    return total, len(chunk), None, None


def check_property(
    prop: Property,
    mech: Mechanism,
    dom: ProfileDomain,
    misreports: Optional[MisreportPolicy] = None,
    jobs: int = 1,
    reading: str = "raise",
) -> PropertyReport:
    """Check one property over ``dom``; the first witness in canonical profile order wins.

    ``reading`` selects the monotonicity hypothesis (see :func:`raised_set`).
    """
    prop = Property(prop)
    policy = misreports or MisreportPolicy()
    checked = profiles = 0
    witness = None
    if jobs <= 1:
        ctx = _context(prop, dom, reading)
        check = _CHECKS[prop]
        for idx, P in enumerate(dom.profiles()):
            profiles += 1
            c, witness = check(mech, dom, policy, P, idx, ctx)
            checked += c
            if witness is not None:
                break
    else:
        indexed = list(enumerate(dom.profiles()))
        size = max(1, math.ceil(len(indexed) / (jobs * 4)))
        chunks = [indexed[i : i + size] for i in range(0, len(indexed), size)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_chunk, [(prop, mech, dom, policy, reading, ch) for ch in chunks]))
        # chunks are in canonical order, so counting up to the first witness matches a serial run
        for (total, seen, idx, w), ch in zip(results, chunks):
            checked += total
            if w is not None:
                profiles += idx - ch[0][0] + 1
                witness = w
                break
            profiles += seen
    if witness is not None:
        verdict = Verdict.VIOLATED
    else:
        if not dom.sampled and dom.explicit is None:
            expected = dom.count()
            assert profiles == expected, f"enumerated {profiles} profiles, domain declares {expected}"
        verdict = Verdict.HOLDS_SAMPLED if (dom.sampled or not policy.exhaustive) else Verdict.HOLDS_EXHAUSTIVE
    log.info("%s: %s after %d scenarios over %d profiles", prop.value, verdict.value, checked, profiles)
    samples = dom.samples if dom.sampled else (policy.k if not policy.exhaustive else None)
    seed = dom.seed if dom.sampled else policy.seed
    return PropertyReport(prop, verdict, checked, profiles, witness, samples, seed)


def check_anonymity(mech, dom, jobs=1):
    return check_property(Property.ANONYMITY, mech, dom, jobs=jobs)


def check_typewise_neutrality(mech, dom, jobs=1):
    return check_property(Property.TYPEWISE_NEUTRALITY, mech, dom, jobs=jobs)


def check_nonbossiness(mech, dom, misreports=None, jobs=1):
    return check_property(Property.NON_BOSSINESS, mech, dom, misreports, jobs)


def check_nonbossiness_important(mech, dom, misreports=None, jobs=1):
    return check_property(Property.NON_BOSSINESS_IMPORTANT, mech, dom, misreports, jobs)


def check_monotonicity(mech, dom, misreports=None, jobs=1, reading="raise"):
    return check_property(Property.MONOTONICITY, mech, dom, misreports, jobs, reading)


def check_pareto(mech, dom, jobs=1):
    return check_property(Property.PARETO, mech, dom, jobs=jobs)


def check_strategyproofness(mech, dom, misreport_class=None, jobs=1):
    return check_property(Property.STRATEGYPROOFNESS, mech, dom, misreport_class, jobs)


def check_all(mech, dom, properties=None, misreports=None, jobs=1) -> list:
    props = list(Property) if properties is None else [Property(p) for p in properties]
    return [check_property(p, mech, dom, misreports, jobs) for p in props]


# -- local <-> sequential transfer --------------------------------------------------

TRANSFER_PROPERTIES = (
    Property.ANONYMITY,
    Property.TYPEWISE_NEUTRALITY,
    Property.NON_BOSSINESS,
    Property.MONOTONICITY,
    Property.PARETO,
)


def local_as_mechanism(local: LocalMechanism) -> SequentialMechanism:
    """View a local mechanism as a one-type mechanism."""
    return SequentialMechanism((0,), (local,))


@dataclass
class TransferRow:
    locals: tuple
    property: Property
    local_reports: list
    sequential: PropertyReport
    separable: Optional[PropertyReport] = None

    @property
    def locals_hold(self) -> bool:
        return all(r.holds for r in self.local_reports)

    @property
    def consistent(self) -> bool:
        """Sequential holds exactly when every local holds; a failing local
        must already show up on separable profiles."""
        if self.locals_hold != self.sequential.holds:
            return False
        if not self.locals_hold and self.separable is not None and self.separable.holds:
            return False
        return True


def check_transfer_theorems(
    compositions: Iterable[Sequence[LocalMechanism]],
    dom: ProfileDomain,
    properties: Sequence[Property] = TRANSFER_PROPERTIES,
) -> list:
    """For each composition and property, compare local and sequential verdicts.

    ``compositions`` lists locals indexed by type; they are applied in
    ``dom.order``. Locals are checked on the one-type domain with the same
    number of agents. When some local fails, the sequential mechanism is
    also checked on separable profiles alone.
    """
    n = dom.instance.n
    local_dom = ProfileDomain.o_legal(Instance(n, 1))
    sep_dom = ProfileDomain.separable(dom.instance, dom.order)
    cache: dict = {}
    rows = []
    for locals_ in compositions:
        locals_ = tuple(locals_)
        seq = SequentialMechanism(dom.order, locals_)
        for prop in properties:
            local_reports = []
            for loc in locals_:
                key = (loc, prop)
                if key not in cache:
                    cache[key] = check_property(prop, local_as_mechanism(loc), local_dom)
                local_reports.append(cache[key])
            seq_report = check_property(prop, seq, dom)
            sep_report = None
            if not all(r.holds for r in local_reports):
                sep_report = check_property(prop, seq, sep_dom)
            rows.append(TransferRow(locals_, prop, local_reports, seq_report, sep_report))
    return rows
