from __future__ import annotations

import pytest
from hypothesis import given, settings

from mtra import fixtures
from mtra.core import Instance
from mtra.mechanisms import (
    SequentialMechanism,
    SerialDictatorship,
    TableMechanism,
    crnets_of_sd,
    mechanisms_agree,
)
from mtra.prefs import OPTIMISTIC, Profile
from mtra.textio import (
    ParseError,
    format_allocation,
    format_instance,
    format_local_table,
    format_mechanism,
    format_pref,
    format_profile,
    format_report,
    format_table,
    load_document,
    parse_local_table,
    parse_reports,
    parse_sections,
    read_document,
)
from mtra.verify import MisreportPolicy, ProfileDomain, Property, check_property, check_strategyproofness

from test_prefs import legal_prefs

INST = fixtures.example2_instance()
PROFILES = fixtures.o_legal_profiles()


def reload(text, inst=None):
    return load_document(text, None, inst)


# -- shipped fixtures equal the Python builders ---------------------------------------------


def test_example2_files():
    inst = read_document(fixtures.path("example2_instance.mtra")).instance
    assert inst == INST
    assert read_document(fixtures.path("example2_profile.mtra"), inst).profile == fixtures.example2_profile()
    mech = read_document(fixtures.path("example2_mechanism.mtra"), inst).mechanism
    assert mechanisms_agree(mech, fixtures.example2_crnet(), PROFILES)


def test_counterexample_file():
    doc = read_document(fixtures.path("counterexample.mtra"))
    assert doc.instance == fixtures.counterexample_instance()
    assert doc.profile == fixtures.counterexample_profile()
    assert doc.mechanism == fixtures.counterexample_mechanism(OPTIMISTIC)


def test_seq_sd_and_bossy_files():
    assert read_document(fixtures.path("seq_sd.mtra")).mechanism == fixtures.seq_sd()
    table = read_document(fixtures.path("bossy.table")).table
    assert dict(table.items()) == dict(fixtures.bossy_table().items())


def test_single_agent_defaults():
    doc = read_document(fixtures.path("single_agent.mtra"))
    assert doc.instance.n == 1 and doc.instance.item_names == (("1_D1",), ("1_D2",))
    assert doc.mechanism(doc.profile).bundles() == [(0, 0)]


# -- round trips ----------------------------------------------------------------------------


def test_instance_round_trip_and_counts():
    inst = Instance(3, 2, ("x", "y", "z"), ("A", "B"), (("a1", "a2", "a3"), ("b1", "b2", "b3")))
    assert reload(format_instance(inst)).instance == inst
    assert reload("[instance]\nagents = 2\ntypes = 3\n").instance == Instance(2, 3)


@settings(max_examples=60, deadline=None)
@given(legal_prefs())
def test_pref_round_trip(pref):
    inst = Instance(pref.num_items, pref.num_types)
    text = format_instance(inst) + "".join(format_pref(pref, inst, j) for j in range(inst.n))
    assert reload(text).profile == Profile((pref,) * inst.n)


def test_profile_and_allocation_round_trip():
    P = fixtures.example2_profile()
    A = fixtures.example2_crnet()(P)
    doc = reload(format_instance(INST) + format_profile(P, INST) + format_allocation(A, INST, "out"))
    assert doc.profile == P and doc.allocations["out"] == A


@pytest.mark.parametrize("mech", list(crnets_of_sd(2, (0, 1)))[:4] + [fixtures.seq_sd()], ids=repr)
def test_mechanism_round_trip(mech):
    back = reload(format_mechanism(mech, INST), INST).mechanism
    assert mechanisms_agree(back, mech, PROFILES)


def test_table_local_round_trip(tmp_path):
    local = TableMechanism.from_function(lambda lp: (0, 1), 2)
    (tmp_path / "const.table").write_text(format_local_table(local, INST, 0))
    assert parse_local_table(format_local_table(local, INST, 0), INST, 0) == local
    mech = SequentialMechanism((0, 1), (local, SerialDictatorship((1, 0))))
    text = format_instance(INST) + format_mechanism(mech, INST, {(0, ()): "const.table"})
    (tmp_path / "mech.mtra").write_text(text)
    assert read_document(str(tmp_path / "mech.mtra")).mechanism == mech


def test_mechanism_table_round_trip():
    table = fixtures.peeking_table()
    back = reload(format_table(table, INST)).table
    assert dict(back.items()) == dict(table.items()) and back.order == table.order


def test_report_round_trip():
    dom = ProfileDomain.o_legal(INST)
    reports = [check_property(p, fixtures.seq_sd(), dom) for p in Property]
    text = "\n".join(format_report(r, INST, dom.count()) for r in reports)
    assert parse_reports(text, INST) == reports
    inst = fixtures.counterexample_instance()
    dom = ProfileDomain.of_profiles([fixtures.counterexample_profile()], (0, 1), inst)
    r = check_strategyproofness(fixtures.counterexample_mechanism(), dom, MisreportPolicy("separable"))
    assert parse_reports(format_report(r, inst), inst) == [r]


# -- errors carry line numbers ---------------------------------------------------------------

HEAD = "[instance]\nagents = a, b\ntypes = D1, D2\nitems type=D1 = 1_1, 2_1\nitems type=D2 = 1_2, 2_2\n"


@pytest.mark.parametrize(
    "text,line,fragment",
    [
        ("agents = 2\n", 1, "before the first section"),
        ("[instance]\nagents = 2\n", 1, "needs both"),
        ("[instance]\nagents = a, a\ntypes = 1\n", 2, "duplicate agent"),
        ("[instance]\nagents = 2\ntypes = 1\nitems type=1 = x\n", 4, "lists 1 items"),
        ("[instance]\nagents = 2\ntypes = 1\ncolour = red\n", 4, "unknown instance key"),
        (HEAD + "[pref agent=c]\nimportance = D1 > D2\n", 6, "unknown agent"),
        (HEAD + "[pref agent=a]\nimportance = D1 > D2\ncpt type=D1: 1_1 > 1_1\n", 8, "exactly once"),
        (HEAD + "[pref agent=a]\nimportance = D1 > D2\ncpt type=D1: 1_1 > 2_1\n", 6, "no CPT rows"),
        (HEAD + "[pref agent=a]\nimportance = D1 > D2\ncpt type=D1 given 1_2: 1_1 > 2_1\n"
         "cpt type=D2: 1_2 > 2_2\n", 6, "no row"),
        (HEAD + "[mechanism]\norder = D1 > D2\nlocal type=D1 = sd(a)\n", 8, "every agent"),
        (HEAD + "[mechanism]\norder = D1 > D2\nlocal type=D1 = sd(a, b)\n", 6, "no local mechanism"),
        (HEAD + "[mechanism]\norder = D1 > D2\nlocal type=D1 = sd(a, b)\nlocal type=D2 = table(nope.table)\n",
         9, "cannot read table"),
        (HEAD + "[allocation]\na = 1_1, 1_2\nb = 1_1, 2_2\n", 6, "bijection"),
        (HEAD + "[shape]\n", 6, "unknown section"),
        ("", None, "empty"),
    ],
)
def test_parse_errors(text, line, fragment):
    with pytest.raises(ParseError, match=fragment) as info:
        reload(text)
    assert info.value.line == line


def test_error_message_names_the_file(tmp_path):
    f = tmp_path / "broken.mtra"
    f.write_text("[instance]\nagents = 2\ntypes = 2\nfoo = 1\n")
    with pytest.raises(ParseError, match=r"broken\.mtra:4:"):
        read_document(str(f))


def test_comments_and_blank_lines_are_ignored():
    secs = parse_sections("# head\n\n[instance]  # trailing\nagents = 2 # count\n")
    assert secs[0].name == "instance" and secs[0].body == [(4, "agents = 2")]
