"""Shipped example files and builders for the same objects in Python."""
from __future__ import annotations

import itertools
from importlib import resources

from ..core import Allocation, Instance
from ..mechanisms import CRNetMechanism, MechanismTable, SequentialMechanism, SerialDictatorship, tabulate
from ..prefs import OPTIMISTIC, LexPref, Profile, complete_dag, enumerate_prefs


def path(name: str) -> str:
    return str(resources.files(__name__).joinpath(name))


def read(name: str) -> str:
    return resources.files(__name__).joinpath(name).read_text(encoding="utf-8")


def example2_instance() -> Instance:
    return Instance(2, 2, ("a", "b"), ("D1", "D2"), (("1_1", "2_1"), ("1_2", "2_2")))


def example1_pref() -> LexPref:
    """D2 depends on D1: 1_1 > 2_1; given 1_1, 1_2 > 2_2; given 2_1, 2_2 > 1_2."""
    return LexPref.from_cpt((0, 1), {0: {(): (0, 1)}, 1: {(0,): (0, 1), (1,): (1, 0)}}, {1: (0,)})


def example2_profile() -> Profile:
    b = LexPref.from_cpt((0, 1), {0: {(): (1, 0)}, 1: {(0,): (0, 1), (1,): (1, 0)}}, {1: (0,)})
    return Profile((example1_pref(), b))


def example2_crnet() -> CRNetMechanism:
    a_first, b_first = SerialDictatorship((0, 1)), SerialDictatorship((1, 0))
    rows = [{(): b_first}, {((0, 1),): a_first, ((1, 0),): b_first}]
    return CRNetMechanism.build((0, 1), [(), (0,)], rows, 2)


def counterexample_instance() -> Instance:
    return Instance(2, 2, ("1", "2"), ("H", "C"), (("1_H", "2_H"), ("1_C", "2_C")))


def counterexample_profile() -> Profile:
    h, c = 0, 1
    agent1 = LexPref.from_cpt((h, c), {h: {(): (0, 1)}, c: {(0,): (0, 1), (1,): (1, 0)}}, {c: (h,)})
    agent2 = LexPref.separable((c, h), {c: (1, 0), h: (0, 1)})
    return Profile((agent1, agent2))


def counterexample_mechanism(mode: str = OPTIMISTIC) -> SequentialMechanism:
    return SequentialMechanism((0, 1), (SerialDictatorship((1, 0)), SerialDictatorship((0, 1))), mode)


def counterexample_misreport() -> LexPref:
    """Agent 2 reports 2_H > 1_H, keeps 2_C > 1_C, and adopts the order H > C."""
    return LexPref.separable((0, 1), {0: (1, 0), 1: (1, 0)})


def seq_sd() -> SequentialMechanism:
    return SequentialMechanism((0, 1), (SerialDictatorship((0, 1)), SerialDictatorship((0, 1))))


def o_legal_profiles(n: int = 2, p: int = 2, order=None) -> list:
    order = tuple(range(p)) if order is None else tuple(order)
    prefs = list(enumerate_prefs(Instance(n, p), order, complete_dag(order)))
    return [Profile(c) for c in itertools.product(prefs, repeat=n)]


# -- tables that admit no decomposition -----------------------------------------------


def bossy_table() -> MechanismTable:
    """Agent 1's type-2 order after 1_1 decides who gets which type-1 item."""
    base = seq_sd()
    entries = {}
    for P in o_legal_profiles():
        A = base(P)
        if P.prefs[0].rows[1][0] == (1, 0):
            cols = list(A.columns)
            cols[0] = tuple(reversed(cols[0]))
            A = Allocation(tuple(cols))
        entries[P] = A
    return MechanismTable(entries, (0, 1))


def peeking_table() -> MechanismTable:
    """The type-2 dictator is agent 1 exactly when agent 2 ranks 1_1 first."""
    first = SerialDictatorship((0, 1))
    entries = {}
    for P in o_legal_profiles():
        second = SerialDictatorship((0, 1) if P.prefs[1].rows[0][0][0] == 0 else (1, 0))
        entries[P] = SequentialMechanism((0, 1), (first, second))(P)
    return MechanismTable(entries, (0, 1))


def order_mismatched_table() -> MechanismTable:
    """Sequential dictatorships run D2 first, with optimistic agents, on D1 > D2 profiles."""
    mech = SequentialMechanism((1, 0), (SerialDictatorship((0, 1)), SerialDictatorship((1, 0))), OPTIMISTIC)
    return tabulate(mech, o_legal_profiles(), (0, 1))


def non_decomposable_tables() -> dict:
    return {"bossy": bossy_table(), "preference-peeking": peeking_table(), "order-mismatched": order_mismatched_table()}
