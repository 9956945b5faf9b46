from __future__ import annotations

import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtra import fixtures
from mtra.core import DomainError, Instance, ValidationError
from mtra.prefs import (
    CONDITIONAL,
    OPTIMISTIC,
    PESSIMISTIC,
    LexPref,
    Profile,
    agrees_on,
    complete_dag,
    count_prefs,
    enumerate_prefs,
    extreme_completion,
    is_legal_for,
    lex_compare,
    perturb_raise,
    prefers,
    project,
    rank_bundles,
    validate_o_legal,
    X_BETTER,
    Y_BETTER,
)


def oracle_better(pref: LexPref, x, y) -> bool:
    """Direct lexicographic comparison: first differing type in importance order decides."""
    for t in pref.importance:
        if x[t] != y[t]:
            row = pref.row(t, x)
            return row.index(x[t]) < row.index(y[t])
    return False


def oracle_ranking(pref: LexPref) -> list:
    bundles = list(itertools.product(range(pref.num_items), repeat=pref.num_types))
    return sorted(bundles, key=lambda b: sum(oracle_better(pref, c, b) for c in bundles))


def oracle_projection(pref: LexPref, assigned, t, best: bool) -> tuple:
    """Rank items of ``t`` by the best (worst) completion, by enumerating completions."""
    ranking = oracle_ranking(pref)
    score = {}
    for item in range(pref.num_items):
        matches = [
            i
            for i, b in enumerate(ranking)
            if b[t] == item and all(a is None or a == b[k] for k, a in enumerate(assigned))
        ]
        score[item] = min(matches) if best else max(matches)
    return tuple(sorted(score, key=score.get))


@st.composite
def legal_prefs(draw, max_n=3, max_p=3):
    n = draw(st.integers(2, max_n))
    p = draw(st.integers(1, max_p))
    order = tuple(draw(st.permutations(range(p))))
    edges = [(order[a], order[b]) for a in range(p) for b in range(a + 1, p)]
    chosen = frozenset(e for e in edges if draw(st.booleans()))
    parents = [()] * p
    rows = [None] * p
    for pos, t in enumerate(order):
        pas = tuple(x for x in order[:pos] if (x, t) in chosen)
        parents[t] = pas
        rows[t] = tuple(
            tuple(draw(st.permutations(range(n)))) for _ in range(n ** len(pas))
        )
    return LexPref(order, tuple(parents), tuple(rows))


# -- worked example --------------------------------------------------------------------


def test_example1_relations():
    pref = fixtures.example1_pref()
    ranking = rank_bundles(pref)
    pos = {b: i for i, b in enumerate(ranking)}
    for better, worse in [((0, 0), (0, 1)), ((1, 1), (1, 0)), ((0, 1), (1, 0)), ((0, 0), (1, 1))]:
        assert pos[better] < pos[worse]
        assert prefers(pref, better, worse)
        assert lex_compare(pref, better, worse) == X_BETTER
        assert lex_compare(pref, worse, better) == Y_BETTER
    assert ranking == [(0, 0), (0, 1), (1, 1), (1, 0)]


def test_example1_projections():
    pref = fixtures.example1_pref()
    assert project(pref, (0, None), 1, CONDITIONAL) == (0, 1)
    assert project(pref, (1, None), 1, CONDITIONAL) == (1, 0)
    # type 1 unassigned: best completion of 1_2 is (1_1,1_2), of 2_2 it is (1_1,2_2)
    assert project(pref, (None, None), 1, OPTIMISTIC) == (0, 1)
    # worst completion of 1_2 is (2_1,1_2), the least preferred bundle overall
    assert project(pref, (None, None), 1, PESSIMISTIC) == (1, 0)
    with pytest.raises(DomainError):
        project(pref, (None, None), 1, CONDITIONAL)


# -- validation --------------------------------------------------------------------------


def test_from_cpt_reports_missing_row():
    with pytest.raises(ValidationError, match="no row"):
        LexPref.from_cpt((0, 1), {0: {(): (0, 1)}, 1: {(0,): (0, 1)}}, {1: (0,)})


def test_rejects_non_permutation_row():
    with pytest.raises(ValidationError):
        LexPref.separable((0,), {0: (0, 0)})


def test_rejects_cycles():
    with pytest.raises(ValidationError, match="cycle"):
        LexPref((0, 1), ((1,), (0,)), (((0, 1), (1, 0)), ((0, 1), (1, 0))))


def test_illegal_edge_is_diagnosed():
    pref = LexPref((0, 1), ((1,), ()), (((0, 1), (1, 0)), ((0, 1),)))
    ok, msg = validate_o_legal(pref)
    assert not ok and "less important" in msg
    assert not is_legal_for(pref, (0, 1))
    with pytest.raises(DomainError):
        pref.key((0, 0))


# -- enumeration ---------------------------------------------------------------------------


@pytest.mark.parametrize("n,p", [(2, 1), (2, 2), (3, 1), (2, 3), (3, 2)])
def test_o_legal_enumeration_gives_distinct_orders(n, p):
    order = tuple(range(p))
    prefs = list(enumerate_prefs(Instance(n, p), order, complete_dag(order)))
    assert len(prefs) == count_prefs(n, order, complete_dag(order))
    rankings = {tuple(rank_bundles(pr)) for pr in prefs}
    assert len(rankings) == len(prefs)


def test_separable_count():
    assert count_prefs(2, (0, 1), ()) == 4
    assert count_prefs(3, (1, 0), ()) == 36
    assert count_prefs(2, (0, 1), complete_dag((0, 1))) == 8


# -- properties against the brute-force oracle -------------------------------------------


@settings(max_examples=60, deadline=None)
@given(legal_prefs())
def test_rank_bundles_matches_oracle(pref):
    assert rank_bundles(pref) == oracle_ranking(pref)


@settings(max_examples=60, deadline=None)
@given(legal_prefs(), st.data())
def test_projections_match_enumeration(pref, data):
    p = pref.num_types
    t = data.draw(st.integers(0, p - 1))
    assigned = [
        None if k == t or data.draw(st.booleans()) else data.draw(st.integers(0, pref.num_items - 1))
        for k in range(p)
    ]
    assigned = tuple(assigned)
    assert project(pref, assigned, t, OPTIMISTIC) == oracle_projection(pref, assigned, t, True)
    assert project(pref, assigned, t, PESSIMISTIC) == oracle_projection(pref, assigned, t, False)


@settings(max_examples=60, deadline=None)
@given(legal_prefs(), st.data())
def test_conditional_projection_is_the_cpt_row(pref, data):
    pos = data.draw(st.integers(0, pref.num_types - 1))
    t = pref.importance[pos]
    assigned = [None] * pref.num_types
    for h in pref.importance[:pos]:
        assigned[h] = data.draw(st.integers(0, pref.num_items - 1))
    expected = oracle_projection(pref, tuple(assigned), t, True)
    assert project(pref, tuple(assigned), t, CONDITIONAL) == expected
    assert project(pref, tuple(assigned), t, PESSIMISTIC) == expected


@settings(max_examples=60, deadline=None)
@given(legal_prefs())
def test_extreme_completions_are_ends_of_the_ranking(pref):
    ranking = rank_bundles(pref)
    empty = (None,) * pref.num_types
    assert extreme_completion(pref, empty, True) == ranking[0]
    assert extreme_completion(pref, empty, False) == ranking[-1]


@settings(max_examples=60, deadline=None)
@given(legal_prefs(), st.data())
def test_perturb_raise_puts_target_first(pref, data):
    target = tuple(data.draw(st.integers(0, pref.num_items - 1)) for _ in range(pref.num_types))
    raised = perturb_raise(pref, target)
    assert rank_bundles(raised)[0] == target
    before = rank_bundles(pref)
    beaten = before[before.index(target) + 1 :]
    assert all(prefers(raised, target, b) for b in beaten)


@settings(max_examples=40, deadline=None)
@given(legal_prefs(max_p=2), st.data())
def test_rename_commutes_with_ranking(pref, data):
    n = pref.num_items
    perms = tuple(tuple(data.draw(st.permutations(range(n)))) for _ in range(pref.num_types))
    renamed = pref.rename(perms)
    expected = [tuple(perms[t][b[t]] for t in range(pref.num_types)) for b in rank_bundles(pref)]
    assert rank_bundles(renamed) == expected
    assert renamed == LexPref(renamed.importance, renamed.parents, renamed.rows)


def test_agrees_on_across_graphs():
    sep = LexPref.separable((0, 1), {0: (0, 1), 1: (1, 0)})
    dep = LexPref.from_cpt((0, 1), {0: {(): (0, 1)}, 1: {(0,): (1, 0), (1,): (1, 0)}}, {1: (0,)})
    assert agrees_on(sep, dep, 0) and agrees_on(sep, dep, 1)
    assert rank_bundles(sep) == rank_bundles(dep)
    assert not agrees_on(fixtures.example1_pref(), dep, 1)


def test_profile_operations():
    P = fixtures.example2_profile()
    Q = P.permute_agents((1, 0))
    assert Q.prefs == (P.prefs[1], P.prefs[0])
    assert P.shared_order == (0, 1)
    assert P.replace(0, P.prefs[1]).prefs == (P.prefs[1], P.prefs[1])
    assert P.rename_items(((0, 1), (0, 1))) == P
    with pytest.raises(ValidationError):
        Profile(())
