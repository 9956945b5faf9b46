from __future__ import annotations

import itertools
import random

import pytest

from mtra import fixtures
from mtra.core import DomainError, Instance
from mtra.manip import (
    EXHAUSTIVE_SEPARABLE,
    FOUND,
    FULL_O_LEGAL,
    INCONCLUSIVE,
    NONE,
    TOP_ITEM,
    CnfFormula,
    DimacsError,
    ManipulationQuery,
    brute_force_sat,
    certify_reduction,
    dpll,
    enumerate_small_formulas,
    extract_assignment,
    find_beneficial_manipulation,
    find_manipulation,
    parse_dimacs,
    reduce_sat,
    to_dimacs,
    truthful_mismatches,
)
from mtra.mechanisms import SequentialMechanism, crnets_of_sd, sequential_sd_compositions
from mtra.prefs import OPTIMISTIC, PESSIMISTIC, LexPref, Profile, enumerate_prefs, prefers


def random_heterogeneous_profile(rng, n=2, p=2):
    prefs = []
    for _ in range(n):
        order = tuple(rng.sample(range(p), p))
        rows = {t: tuple(rng.sample(range(n), n)) for t in range(p)}
        prefs.append(LexPref.separable(order, rows, p))
    return Profile(tuple(prefs))


def brute_force_manipulation(q: ManipulationQuery):
    truth = q.profile.prefs[q.agent]
    mech = q.mechanism.with_mode(q.projection_mode) if isinstance(q.mechanism, SequentialMechanism) else q.mechanism
    old = mech(q.profile).bundle(q.agent)
    for m in q.misreports():
        new = mech(q.profile.replace(q.agent, m)).bundle(q.agent)
        if prefers(truth, new, old):
            return m
    return None


# -- manipulation search -------------------------------------------------------------------


@pytest.mark.parametrize("mode", [OPTIMISTIC, PESSIMISTIC])
@pytest.mark.parametrize("strategy", ["dfs", "enumerate"])
def test_counterexample_manipulation(mode, strategy):
    q = ManipulationQuery(fixtures.counterexample_mechanism(mode), fixtures.counterexample_profile(), 1)
    res = find_manipulation(q, strategy)
    assert res.status == FOUND
    m = res.manipulation
    assert m.misreport == fixtures.counterexample_misreport()
    assert (m.old_bundle, m.new_bundle) == ((0, 0), (1, 1))
    assert m.after.bundles() == [(0, 0), (1, 1)]


def test_agent_one_cannot_manipulate_the_counterexample():
    q = ManipulationQuery(fixtures.counterexample_mechanism(), fixtures.counterexample_profile(), 0)
    assert find_manipulation(q).status == NONE


def test_dfs_and_enumeration_agree_with_brute_force():
    rng = random.Random(3)
    mechs = list(sequential_sd_compositions(2, (0, 1), OPTIMISTIC)) + list(sequential_sd_compositions(2, (1, 0), PESSIMISTIC))
    for _ in range(150):
        P = random_heterogeneous_profile(rng)
        mech = rng.choice(mechs)
        for agent in range(2):
            for cls in (EXHAUSTIVE_SEPARABLE, TOP_ITEM):
                q = ManipulationQuery(mech, P, agent, cls)
                dfs, enum = find_manipulation(q, "dfs"), find_manipulation(q, "enumerate")
                expected = brute_force_manipulation(q)
                assert dfs.status == enum.status == (FOUND if expected else NONE)
                if expected:
                    assert dfs.manipulation.misreport == enum.manipulation.misreport == expected


def test_three_agent_search_agrees_with_brute_force():
    rng = random.Random(11)
    mechs = list(sequential_sd_compositions(3, (0, 1), OPTIMISTIC))
    for _ in range(40):
        P = random_heterogeneous_profile(rng, n=3)
        q = ManipulationQuery(rng.choice(mechs), P, rng.randrange(3))
        expected = brute_force_manipulation(q)
        assert find_manipulation(q, "dfs").found == (expected is not None)


def test_full_o_legal_class_on_crnets():
    P = fixtures.example2_profile()
    for net in crnets_of_sd(2, (0, 1)):
        for agent in range(2):
            q = ManipulationQuery(net, P, agent, FULL_O_LEGAL)
            assert q.class_size() == len(list(enumerate_prefs(Instance(2, 2), (0, 1), {(0, 1)}))) == 8
            assert find_manipulation(q).status == NONE


def test_budget_makes_the_search_inconclusive():
    q = ManipulationQuery(fixtures.counterexample_mechanism(), fixtures.counterexample_profile(), 1, budget=3)
    res = find_manipulation(q)
    assert res.status == INCONCLUSIVE and res.class_size == 4


def test_query_validation():
    with pytest.raises(DomainError):
        ManipulationQuery(fixtures.seq_sd(), fixtures.example2_profile(), 2)
    with pytest.raises(DomainError):
        ManipulationQuery(fixtures.seq_sd(), fixtures.example2_profile(), 0, "anything")


def test_find_beneficial_manipulation_scans_agents():
    res = find_beneficial_manipulation(fixtures.counterexample_mechanism(), fixtures.counterexample_profile())
    assert res.found and res.manipulation.agent == 1


# -- DIMACS and SAT oracles -----------------------------------------------------------------


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("1 2 3 0\n", "before header"),
        ("p cnf 2 1\n1 2 0\n", "expected 3"),
        ("p cnf 2 1\n1 2 3 0\n", "exceeds"),
        ("p cnf 2 2\n1 2 -1 0\n", "declares 2 clauses"),
        ("p cnf 2 1\n1 2 x 0\n", "bad literal"),
        ("p cnf 2 1\n1 2 -1\n", "not terminated"),
        ("p dnf 2 1\n1 2 -1 0\n", "header"),
        ("", "missing"),
        ("p cnf 2 1\n0\n", "empty clause"),
    ],
)
def test_dimacs_errors(text, fragment):
    with pytest.raises(DimacsError, match=fragment):
        parse_dimacs(text)


def test_dimacs_round_trip_and_padding():
    f = parse_dimacs("c comment\np cnf 3 2\n1 -2 3 0\n-1 2\n -3 0\n")
    assert f.clauses == ((1, -2, 3), (-1, 2, -3))
    assert parse_dimacs(to_dimacs(f)) == f
    assert parse_dimacs("p cnf 2 1\n1 -2 0\n", pad=True).clauses == ((1, -2, -2),)
    with pytest.raises(DimacsError):
        parse_dimacs(fixtures.read("bad_count.cnf"))


def test_formula_enumeration_and_oracles():
    formulas = [f for s in (1, 2) for t in (1, 2) for f in enumerate_small_formulas(s, t)]
    assert len(formulas) == len(set(formulas)) == 128
    unsat = [f for f in formulas if brute_force_sat(f) is None]
    assert len(unsat) == 3
    for f in formulas:
        phi = dpll(f)
        assert (phi is None) == (brute_force_sat(f) is None)
        if phi is not None:
            assert f.satisfied_by(phi)


def test_dpll_on_random_three_cnf():
    rng = random.Random(0)
    for _ in range(300):
        s = rng.randint(1, 5)
        clauses = [tuple(rng.choice((-1, 1)) * rng.randint(1, s) for _ in range(3)) for _ in range(rng.randint(1, 12))]
        f = CnfFormula(s, clauses)
        phi = dpll(f)
        assert (phi is None) == (brute_force_sat(f) is None)
        assert phi is None or f.satisfied_by(phi)


# -- the reduction ----------------------------------------------------------------------------


def test_reduction_shape_and_truthful_outcome():
    f = parse_dimacs(fixtures.read("sat2.cnf"))
    s, t = f.num_vars, f.num_clauses
    red = reduce_sat(f)
    assert red.instance.n == 1 + t + 3 * s * t and red.instance.p == s + 1
    assert red.names[red.special] == "0" and red.names[red.clause_agent[1]] == "c_2"
    assert red.names[red.literal_agent[(1, 2, 1)]] == "1_2^1"
    for mode in (OPTIMISTIC, PESSIMISTIC):
        A = reduce_sat(f, mode).mechanism(red.profile)
        assert truthful_mismatches(red, A) == []
    # each preference is legal for its own importance order, but the profile shares none
    assert all(pr.is_legal for pr in red.profile.prefs)
    assert not red.profile.is_legal_for(red.mechanism.order)


@pytest.mark.parametrize("name,satisfiable", [("sat2.cnf", True), ("unsat1.cnf", False)])
def test_certify_fixtures(name, satisfiable):
    f = parse_dimacs(fixtures.read(name))
    cert = certify_reduction(f)
    assert cert.satisfiable == satisfiable
    assert cert.truthful_ok
    if satisfiable:
        assert f.satisfied_by(cert.assignment)
        red = reduce_sat(f)
        assert extract_assignment(red, cert.manipulation.after) == cert.assignment
    else:
        assert cert.status == "no-manipulation-in-class" and cert.assignment is None


def test_certify_every_small_formula():
    for s, t in itertools.product((1, 2), repeat=2):
        for f in enumerate_small_formulas(s, t):
            cert = certify_reduction(f)
            assert cert.satisfiable == (brute_force_sat(f) is not None)
            assert cert.status != "inconclusive"
