"""Command-line front end.

Exit codes: 0 success (every property holds, no manipulation), 1 a property
is violated, a manipulation exists or a decomposition fails, 2 usage or
input errors.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Optional, Sequence

from . import fixtures
from .core import Instance, MTRAError
from .manip import (
    EXHAUSTIVE_SEPARABLE,
    FOUND,
    SEARCH_CLASSES,
    TOP_ITEM,
    CnfFormula,
    ManipulationQuery,
    OracleDisagreement,
    certify_reduction,
    find_manipulation,
    parse_dimacs,
    reduce_sat,
)
from .mechanisms import (
    CRNetMechanism,
    DecompositionError,
    SequentialMechanism,
    SerialDictatorship,
    TableMechanism,
    decompose,
    decompose_all_orders,
    tabulate,
)
from .prefs import PROJECTION_MODES, Profile
from .textio import (
    Document,
    ParseError,
    format_allocation,
    format_allocation_human,
    format_instance,
    format_local_table,
    format_mechanism,
    format_pref_body,
    format_profile,
    format_report,
    format_table,
    read_document,
    read_text,
)
from .verify import MisreportPolicy, ProfileDomain, Property, check_property

log = logging.getLogger("mtra")

BUILTIN_MECHANISMS = {"seq-sd-fixture": "seq_sd.mtra", "example2-fixture": "example2_mechanism.mtra"}
EXIT_OK, EXIT_NEGATIVE, EXIT_USAGE = 0, 1, 2


class UsageError(MTRAError):
    pass


def _default_budget() -> Optional[int]:
    raw = os.environ.get("MTRA_BUDGET")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"MTRA_BUDGET must be an integer, got {raw!r}") from None


def _budget(args) -> Optional[int]:
    return args.budget if args.budget is not None else _default_budget()


def _load(paths: Sequence[Optional[str]], inst: Optional[Instance] = None) -> tuple:
    """Read files in order; the first ``[instance]`` found serves the later ones."""
    docs = []
    for p in paths:
        if p is None:
            docs.append(None)
            continue
        doc = read_document(p, inst)
        if inst is not None and doc.instance != inst:
            raise UsageError(f"{p}: instance does not match the one declared earlier")
        inst = doc.instance
        docs.append(doc)
    return inst, docs


def _mechanism_path(ref: str) -> str:
    return fixtures.path(BUILTIN_MECHANISMS[ref]) if ref in BUILTIN_MECHANISMS else ref


# -- run ------------------------------------------------------------------------------------


def cmd_run(args) -> int:
    inst, (idoc, pdoc, mdoc) = _load([args.instance, args.profile, args.mechanism])
    if pdoc.profile is None:
        raise UsageError(f"{args.profile}: no preferences found")
    if mdoc.mechanism is None:
        raise UsageError(f"{args.mechanism}: no [mechanism] section")
    mech, P = mdoc.mechanism, pdoc.profile
    rounds = list(mech.rounds(P, args.mode))
    out = []
    if args.format == "record":
        if args.rounds:
            for k, A in enumerate(rounds[:-1], 1):
                out.append(format_allocation(A, inst, f"round-{k}"))
        out.append(format_allocation(rounds[-1], inst))
        sys.stdout.write("\n".join(out))
    else:
        if args.rounds:
            for k, A in enumerate(rounds, 1):
                sys.stdout.write(f"round {k}:\n")
                sys.stdout.write("".join("  " + line + "\n" for line in format_allocation_human(A, inst).splitlines()))
        else:
            sys.stdout.write(format_allocation_human(rounds[-1], inst))
    return EXIT_OK


# -- verify ---------------------------------------------------------------------------------


def _domain(args, inst: Instance, mech, pdoc: Optional[Document]) -> ProfileDomain:
    order = mech.order
    if pdoc is not None:
        return ProfileDomain.of_profiles([pdoc.profile], order, inst)
    kw = dict(budget=_budget(args))
    if args.samples is not None:
        if args.seed is None:
            raise UsageError("--samples needs --seed")
        kw.update(samples=args.samples, seed=args.seed)
    if args.domain == "o-legal":
        return ProfileDomain.o_legal(inst, order, **kw)
    if args.domain == "separable":
        return ProfileDomain.separable(inst, order, any_order=True, **kw)
    return ProfileDomain.lexicographic(inst, order, **kw)


def _policy(args, explicit: bool) -> MisreportPolicy:
    kind = args.misreports
    if kind == "auto":
        kind = "separable" if explicit else "domain"
    if kind == "sampled":
        if args.seed is None:
            raise UsageError("sampled misreports need --seed")
        return MisreportPolicy("sampled", args.k, args.seed)
    return MisreportPolicy(kind)


def _verify_mechanism(args):
    """Resolve the instance and mechanism for ``verify``; the built-in SD fixture follows --n/--p."""
    if args.mech == "seq-sd-fixture":
        n, p = args.n or 2, args.p or 2
        inst = Instance(n, p)
        if args.instance:
            inst, _ = _load([args.instance])
            if (inst.n, inst.p) != (n, p) and (args.n or args.p):
                raise UsageError("--n/--p disagree with --instance")
        sd = SerialDictatorship(tuple(range(inst.n)))
        return inst, SequentialMechanism(tuple(range(inst.p)), (sd,) * inst.p)
    inst = None
    if args.instance:
        inst, _ = _load([args.instance])
    elif args.n is not None and args.p is not None:
        inst = Instance(args.n, args.p)
    mdoc = read_document(_mechanism_path(args.mech), inst)
    if mdoc.mechanism is None:
        raise UsageError(f"{args.mech}: no [mechanism] section")
    inst = mdoc.instance
    if inst is None:
        raise UsageError(f"{args.mech} has no [instance]; give --instance or both --n and --p")
    if (args.n is not None and args.n != inst.n) or (args.p is not None and args.p != inst.p):
        raise UsageError(f"--n/--p disagree with the mechanism's instance ({inst.n} agents, {inst.p} types)")
    return inst, mdoc.mechanism


def cmd_verify(args) -> int:
    if args.all:
        props = list(Property)
    elif args.properties:
        props = [_property(p) for p in args.properties]
    else:
        raise UsageError("name at least one property or pass --all")
    inst, mech = _verify_mechanism(args)
    if args.mode:
        mech = mech.with_mode(args.mode) if isinstance(mech, SequentialMechanism) else _crnet_mode(mech, args.mode)
    pdoc = None
    if args.profile:
        pdoc = read_document(args.profile, inst)
        if pdoc.profile is None:
            raise UsageError(f"{args.profile}: no preferences found")
    dom = _domain(args, inst, mech, pdoc)
    policy = _policy(args, pdoc is not None)
    size = dom.count()
    violated = False
    out = []
    if args.format == "human":
        out.append(f"domain: {size} profiles ({'sampled' if dom.sampled else 'exhaustive'})\n")
    for prop in props:
        report = check_property(prop, mech, dom, policy, args.jobs, args.reading)
        violated |= not report.holds
        out.append(format_report(report, inst, size) if args.format == "record" else _human_report(report, inst))
    sys.stdout.write("\n".join(out) if args.format == "record" else "".join(out))
    return EXIT_NEGATIVE if violated else EXIT_OK


def _property(name: str) -> Property:
    try:
        return Property(name)
    except ValueError:
        known = ", ".join(p.value for p in Property)
        raise UsageError(f"unknown property {name!r}; known: {known}") from None


def _crnet_mode(m: CRNetMechanism, mode: str) -> CRNetMechanism:
    return CRNetMechanism(m.order, m.parents, m.crt, mode, m.reachable)


def _human_report(report, inst: Instance) -> str:
    extra = ""
    if report.samples is not None:
        extra = f", {report.samples} samples, seed {report.seed}"
    lines = [f"{report.property.value}: {report.verdict.value} ({report.checked} scenarios over {report.profiles} profiles{extra})"]
    w = report.witness
    if w is not None:
        lines.append("  witness profile:")
        for j, pr in enumerate(w.profile.prefs):
            lines.append(f"    agent {inst.agent_names[j]}:")
            lines += ["      " + x for x in format_pref_body(pr, inst)]
        if w.agent is not None and w.misreport is not None:
            lines.append(f"  agent {inst.agent_names[w.agent]} reports instead:")
            lines += ["      " + x for x in format_pref_body(w.misreport, inst)]
        if w.permutation is not None:
            lines.append(f"  permutation: {w.permutation}")
        lines.append("  before: " + "; ".join(format_allocation_human(w.before, inst).splitlines()))
        if w.after is not None:
            lines.append("  after:  " + "; ".join(format_allocation_human(w.after, inst).splitlines()))
        if w.dominating is not None:
            lines.append("  dominated by: " + "; ".join(format_allocation_human(w.dominating, inst).splitlines()))
    return "\n".join(lines) + "\n"


# -- manipulate ---------------------------------------------------------------------------


def cmd_manipulate(args) -> int:
    inst, (idoc, pdoc, mdoc) = _load([args.instance, args.profile, args.mechanism])
    if pdoc.profile is None or mdoc.mechanism is None:
        raise UsageError("need a profile and a mechanism")
    agents = range(inst.n) if args.agent is None else [inst.agent_names.index(args.agent)] if args.agent in inst.agent_names else None
    if agents is None:
        raise UsageError(f"unknown agent {args.agent!r}")
    for j in agents:
        q = ManipulationQuery(mdoc.mechanism, pdoc.profile, j, args.search_class, args.mode, _budget(args))
        res = find_manipulation(q)
        if res.status == FOUND:
            m = res.manipulation
            sys.stdout.write(f"manipulation found for agent {inst.agent_names[j]} ({res.explored} of {res.class_size} tried)\n")
            sys.stdout.write("".join("  " + x + "\n" for x in format_pref_body(m.misreport, inst)))
            sys.stdout.write(f"  old bundle {inst.bundle_str(m.old_bundle)}, new bundle {inst.bundle_str(m.new_bundle)}\n")
            return EXIT_NEGATIVE
        if res.status != "none":
            sys.stdout.write(f"agent {inst.agent_names[j]}: inconclusive, class has {res.class_size} misreports\n")
            return EXIT_USAGE
    sys.stdout.write(f"no manipulation in class {args.search_class}\n")
    return EXIT_OK


# -- reduce ---------------------------------------------------------------------------------


def cmd_reduce(args) -> int:
    formula = parse_dimacs(read_text(args.cnf), pad=args.pad)
    red = reduce_sat(formula, args.mode)
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        files = {
            "instance.mtra": format_instance(red.instance),
            "profile.mtra": format_profile(red.profile, red.instance),
            "mechanism.mtra": format_mechanism(red.mechanism, red.instance),
        }
        for name, text in files.items():
            with open(os.path.join(args.out_dir, name), "w", encoding="utf-8") as fh:
                fh.write(text)
        sys.stdout.write(f"wrote {', '.join(sorted(files))} to {args.out_dir}\n")
    sys.stdout.write(f"{red.instance.n} agents, {red.instance.p} types\n")
    if not args.certify:
        return EXIT_OK
    cert = certify_reduction(formula, budget=_budget(args))
    if cert.status == "satisfiable":
        phi = " ".join(f"x{i}={v}" for i, v in enumerate(cert.assignment, 1))
        sys.stdout.write(f"SAT: manipulation found, phi: {phi}\n")
        return EXIT_NEGATIVE
    if cert.status == "no-manipulation-in-class":
        sys.stdout.write("UNSAT: no manipulation in top-item class\n")
        return EXIT_OK
    sys.stdout.write("inconclusive: search class exceeds the budget\n")
    return EXIT_USAGE


# -- table / decompose ------------------------------------------------------------------


def cmd_table(args) -> int:
    inst, (idoc, mdoc) = _load([args.instance, _mechanism_path(args.mechanism)])
    mech = mdoc.mechanism
    if mech is None:
        raise UsageError("no [mechanism] section")
    order = mech.order
    dom = ProfileDomain.o_legal(inst, order, budget=_budget(args))
    table = tabulate(mech, dom.profiles(), order)
    text = format_table(table, inst)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        sys.stdout.write(f"wrote {len(table)} entries to {args.out}\n")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _parse_order(text: str, inst: Instance) -> tuple:
    names = [x.strip() for x in text.split(">")]
    try:
        order = tuple(inst.type_names.index(x) for x in names)
    except ValueError:
        raise UsageError(f"order {text!r} names unknown types") from None
    if sorted(order) != list(range(inst.p)):
        raise UsageError("order must list every type exactly once")
    return order


def _write_crnet(net: CRNetMechanism, inst: Instance, out: Optional[str]) -> None:
    paths = {}
    tables = []
    for t in range(inst.p):
        for key, local in sorted(net.crt[t].items()):
            if isinstance(local, TableMechanism):
                if out is None:
                    raise UsageError("the recovered rules include table mechanisms; pass --out to write them")
                name = f"{os.path.basename(out)}.{inst.type_names[t]}.{len(tables)}.table"
                paths[(t, key)] = name
                tables.append((os.path.join(os.path.dirname(out) or ".", name), format_local_table(local, inst, t)))
    text = format_instance(inst) + "\n" + format_mechanism(net, inst, paths)
    if out is None:
        sys.stdout.write(text)
        return
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(text)
    for path, body in tables:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(body)
    sys.stdout.write(f"wrote CR-net to {out}\n")


def cmd_decompose(args) -> int:
    doc = read_document(args.table)
    if doc.table is None:
        raise UsageError(f"{args.table}: no [entry] sections")
    inst, table = doc.instance, doc.table
    if args.try_all_orders:
        ok = False
        for order, res in decompose_all_orders(table).items():
            label = " > ".join(inst.type_names[t] for t in order)
            if isinstance(res, DecompositionError):
                w = res.witness
                sys.stdout.write(f"{label}: {w.step} fails on type {inst.type_names[w.type]}\n")
            else:
                ok = True
                sys.stdout.write(f"{label}: decomposes\n")
        return EXIT_OK if ok else EXIT_NEGATIVE
    if args.order is None and table.order is None:
        raise UsageError("give --order or --try-all-orders")
    order = _parse_order(args.order, inst) if args.order else table.order
    try:
        net = decompose(table, order)
    except DecompositionError as exc:
        w = exc.witness
        sys.stdout.write(f"not decomposable: {w.step} fails on type {inst.type_names[w.type]}: {_STEP_TEXT[w.step]}\n")
        sys.stdout.write(format_allocation(w.history, inst, "history") if w.history.type_set else "")
        sys.stdout.write("profile A:\n" + _indent(format_profile(w.profile_a, inst)))
        sys.stdout.write(_indent(format_allocation(w.allocation_a, inst, "a")) if w.allocation_a else "")
        if w.profile_b is not None:
            sys.stdout.write("profile B:\n" + _indent(format_profile(w.profile_b, inst)))
            sys.stdout.write(_indent(format_allocation(w.allocation_b, inst, "b")))
        return EXIT_NEGATIVE
    _write_crnet(net, inst, args.out)
    return EXIT_OK


_STEP_TEXT = {
    "pref1": "same local orders over this type, different allocation of it",
    "dep1": "same history and conditioned preferences, different allocation of the later types",
    "domain": "a profile in the table is not legal for the order",
}


def _indent(text: str) -> str:
    return "".join("  " + line + "\n" for line in text.splitlines())


# -- entry point ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mtra", description="Multi-type resource allocation toolkit")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a mechanism on a profile")
    r.add_argument("--instance")
    r.add_argument("--profile", required=True)
    r.add_argument("--mechanism", required=True)
    r.add_argument("--mode", choices=PROJECTION_MODES)
    r.add_argument("--rounds", action="store_true", help="show the allocation after every round")
    r.add_argument("--format", choices=("human", "record"), default="human")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="check axiomatic properties")
    v.add_argument("properties", nargs="*", metavar="PROPERTY", help=", ".join(p.value for p in Property))
    v.add_argument("--all", action="store_true")
    v.add_argument("--mech", required=True, help="mechanism file or " + ", ".join(BUILTIN_MECHANISMS))
    v.add_argument("--instance")
    v.add_argument("--n", type=int)
    v.add_argument("--p", type=int)
    v.add_argument("--profile", help="check this single profile instead of a generated domain")
    v.add_argument("--domain", choices=("o-legal", "separable", "lexicographic"), default="o-legal")
    v.add_argument("--misreports", choices=("auto", "domain", "separable", "top-item", "sampled"), default="auto")
    v.add_argument("--k", type=int, default=3, help="misreports per agent when sampling")
    v.add_argument("--samples", type=int)
    v.add_argument("--seed", type=int)
    v.add_argument("--budget", type=int)
    v.add_argument("--jobs", type=int, default=1)
    v.add_argument("--mode", choices=PROJECTION_MODES)
    v.add_argument("--reading", choices=("raise", "literal"), default="raise")
    v.add_argument("--format", choices=("human", "record"), default="human")
    v.set_defaults(func=cmd_verify)

    m = sub.add_parser("manipulate", help="search for a beneficial misreport")
    m.add_argument("--instance")
    m.add_argument("--profile", required=True)
    m.add_argument("--mechanism", required=True)
    m.add_argument("--agent")
    m.add_argument("--class", dest="search_class", choices=SEARCH_CLASSES, default=EXHAUSTIVE_SEPARABLE)
    m.add_argument("--mode", choices=PROJECTION_MODES)
    m.add_argument("--budget", type=int)
    m.set_defaults(func=cmd_manipulate)

    d = sub.add_parser("reduce", help="build the manipulation instance of a 3-CNF formula")
    d.add_argument("cnf")
    d.add_argument("--out-dir")
    d.add_argument("--certify", action="store_true")
    d.add_argument("--pad", action="store_true", help="accept clauses with fewer than 3 literals")
    d.add_argument("--mode", choices=("optimistic", "pessimistic"), default="optimistic")
    d.add_argument("--budget", type=int)
    d.set_defaults(func=cmd_reduce)

    t = sub.add_parser("table", help="tabulate a mechanism over all legal profiles")
    t.add_argument("--instance")
    t.add_argument("--mechanism", required=True)
    t.add_argument("--out")
    t.add_argument("--budget", type=int)
    t.set_defaults(func=cmd_table)

    c = sub.add_parser("decompose", help="split a mechanism table into a CR-net")
    c.add_argument("table")
    g = c.add_mutually_exclusive_group()
    g.add_argument("--order")
    g.add_argument("--try-all-orders", action="store_true")
    c.add_argument("--out")
    c.set_defaults(func=cmd_decompose)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except OracleDisagreement as exc:
        sys.stderr.write(f"mtra: internal check failed: {exc}\n")
        return EXIT_USAGE
    except (ParseError, UsageError, MTRAError, ValueError) as exc:
        sys.stderr.write(f"mtra: error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
