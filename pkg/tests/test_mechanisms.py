from __future__ import annotations

import itertools

import pytest

from mtra import fixtures
from mtra.core import Allocation, ConfigurationError, DomainError, Instance, ValidationError
from mtra.mechanisms import (
    CRNetMechanism,
    DecompositionError,
    SequentialMechanism,
    SerialDictatorship,
    TableMechanism,
    all_serial_dictatorships,
    count_crnets_of_sd,
    crnets_of_sd,
    decompose,
    decompose_all_orders,
    mechanisms_agree,
    run_crnet,
    run_sequential,
    sequential_sd_compositions,
    simplify_local,
    tabulate,
)
from mtra.prefs import OPTIMISTIC, PESSIMISTIC, LexPref, Profile, enumerate_local_profiles, rank_bundles

PROFILES = fixtures.o_legal_profiles()


def oracle_bundle_dictatorship(priority, profile: Profile) -> Allocation:
    """Each agent in turn takes its favourite bundle among those still fully available."""
    p = profile.prefs[0].num_types
    taken = [set() for _ in range(p)]
    bundles = [None] * profile.n
    for j in priority:
        for b in rank_bundles(profile.prefs[j]):
            if all(b[t] not in taken[t] for t in range(p)):
                bundles[j] = b
                for t in range(p):
                    taken[t].add(b[t])
                break
    return Allocation.from_bundles(bundles)


def test_serial_dictatorship_on_local_profiles():
    sd = SerialDictatorship((1, 0, 2))
    assert sd(((0, 1, 2), (0, 1, 2), (0, 1, 2))) == (1, 0, 2)
    assert sd(((2, 1, 0), (0, 1, 2), (0, 2, 1))) == (2, 0, 1)
    with pytest.raises(ValidationError):
        SerialDictatorship((0, 0))


def test_table_mechanism_validation_and_simplification():
    with pytest.raises(ValidationError):
        TableMechanism({((0, 1), (0, 1)): (0, 0)})
    with pytest.raises(ValidationError):
        TableMechanism({})
    for sd in all_serial_dictatorships(3):
        table = TableMechanism.from_function(sd, 3)
        assert simplify_local(table) == sd
    const = TableMechanism.from_function(lambda lp: (0, 1), 2)
    assert simplify_local(const) is const
    with pytest.raises(DomainError):
        TableMechanism({((0, 1), (0, 1)): (0, 1)})(((1, 0), (0, 1)))


def test_example2_rounds():
    net, P = fixtures.example2_crnet(), fixtures.example2_profile()
    rounds = list(net.rounds(P))
    assert rounds[0] == Allocation(((0, 1), None))
    assert rounds[1] == Allocation(((0, 1), (0, 1)))
    assert run_crnet(net, P) == rounds[-1]


def test_counterexample_allocations_in_both_modes():
    P = fixtures.counterexample_profile()
    for mode in (OPTIMISTIC, PESSIMISTIC):
        m = fixtures.counterexample_mechanism(mode)
        assert m(P).bundles() == [(1, 1), (0, 0)]
        manipulated = P.replace(1, fixtures.counterexample_misreport())
        assert m(manipulated).bundles() == [(0, 0), (1, 1)]


def test_conditional_mode_rejects_illegal_profiles():
    with pytest.raises(DomainError, match="optimistic or pessimistic"):
        fixtures.counterexample_mechanism().with_mode("conditional")(fixtures.counterexample_profile())


@pytest.mark.parametrize("priority", list(itertools.permutations(range(2))))
def test_same_priority_matches_bundle_dictatorship(priority):
    sd = SerialDictatorship(priority)
    m = SequentialMechanism((0, 1), (sd, sd))
    for P in PROFILES:
        assert m(P) == oracle_bundle_dictatorship(priority, P)


def test_same_priority_matches_bundle_dictatorship_three_agents():
    inst = Instance(3, 2)
    prefs = [LexPref.separable((0, 1), {0: a, 1: b}) for a in itertools.permutations(range(3)) for b in [(0, 1, 2), (2, 0, 1)]]
    sd = SerialDictatorship((2, 0, 1))
    m = SequentialMechanism((0, 1), (sd, sd))
    for combo in itertools.product(prefs, repeat=inst.n):
        P = Profile(combo)
        assert m(P) == oracle_bundle_dictatorship((2, 0, 1), P)


@pytest.mark.parametrize("mode", [OPTIMISTIC, PESSIMISTIC])
def test_projection_modes_agree_on_o_legal_profiles(mode):
    for m in sequential_sd_compositions(2, (0, 1)):
        assert mechanisms_agree(m, m.with_mode(mode), PROFILES)


def test_rounds_end_with_the_final_allocation():
    for m in sequential_sd_compositions(2, (1, 0), OPTIMISTIC):
        for P in PROFILES:
            rounds = list(m.rounds(P))
            assert [r.type_set for r in rounds] == [frozenset({1}), frozenset({0, 1})]
            assert run_sequential(m, P) == rounds[-1]


def test_sequential_as_crnet():
    for m in sequential_sd_compositions(2, (0, 1)):
        assert mechanisms_agree(m, CRNetMechanism.from_sequential(m), PROFILES)


def test_crnet_family_size():
    nets = list(crnets_of_sd(2, (0, 1)))
    assert len(nets) == count_crnets_of_sd(2, 2) == 8
    tables = {tuple(n(P) for P in PROFILES) for n in nets}
    assert len(tables) == 8


def test_crnet_build_validates():
    sd = SerialDictatorship((0, 1))
    with pytest.raises(ValidationError):
        CRNetMechanism((0, 1), [(1,), ()], [{(): sd}, {(): sd}])
    with pytest.raises(ConfigurationError):
        CRNetMechanism.build((0, 1), [(), (0,)], [{(): sd}, {}], 2)
    with pytest.raises(ValidationError):
        CRNetMechanism.build((0, 1), [(), (0,)], [{(): sd}, {((0, 0),): sd}], 2)
    partial = CRNetMechanism((0, 1), [(), (0,)], [{(): sd}, {((0, 1),): sd}])
    second_first = LexPref.separable((0, 1), {0: (1, 0), 1: (0, 1)})
    assert partial(Profile((fixtures.example1_pref(), second_first))).columns[0] == (0, 1)
    with pytest.raises(ConfigurationError):
        partial(Profile((second_first, fixtures.example1_pref())))


# -- decomposition --------------------------------------------------------------------------


@pytest.mark.parametrize("net", list(crnets_of_sd(2, (0, 1))), ids=lambda n: repr(n)[:40])
def test_decompose_recovers_crnets(net):
    table = tabulate(net, PROFILES, (0, 1))
    rebuilt = decompose(table, (0, 1))
    assert mechanisms_agree(rebuilt, table, PROFILES)
    for t in range(2):
        for local in rebuilt.crt[t].values():
            assert isinstance(local, SerialDictatorship)


def test_decompose_sequential_needs_no_parents():
    for m in sequential_sd_compositions(2, (0, 1)):
        net = decompose(tabulate(m, PROFILES, (0, 1)), (0, 1))
        assert net.parents == ((), ())
        assert net.crt[0][()] == m.locals[0] and net.crt[1][()] == m.locals[1]


def test_example2_decomposition_recovers_its_rules():
    net = decompose(tabulate(fixtures.example2_crnet(), PROFILES, (0, 1)), (0, 1))
    assert net.crt[0] == {(): SerialDictatorship((1, 0))}
    assert net.crt[1][((0, 1),)] == SerialDictatorship((0, 1))
    assert net.crt[1][((1, 0),)] == SerialDictatorship((1, 0))


@pytest.mark.parametrize("name,step", [("bossy", "pref1"), ("preference-peeking", "dep1"), ("order-mismatched", "dep1")])
def test_non_decomposable_tables(name, step):
    table = fixtures.non_decomposable_tables()[name]
    with pytest.raises(DecompositionError) as info:
        decompose(table, (0, 1))
    w = info.value.witness
    assert w.step == step
    assert w.revalidate(table)
    # the same witness does not apply to a decomposable mechanism
    assert not w.revalidate(fixtures.seq_sd())


def test_decompose_all_orders():
    results = decompose_all_orders(tabulate(fixtures.seq_sd(), PROFILES, (0, 1)))
    assert isinstance(results[(0, 1)], CRNetMechanism)
    failure = results[(1, 0)]
    assert isinstance(failure, DecompositionError) and failure.witness.step == "domain"


def test_local_profiles_enumeration():
    assert len(list(enumerate_local_profiles(3))) == 6 ** 3
