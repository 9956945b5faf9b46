"""Line-oriented text format for instances, profiles, mechanisms and reports.

A file is a sequence of sections. A section starts with a header line such as
``[pref agent=a]`` and holds ``key = value`` lines or the row lines described
in the README. ``#`` starts a comment. Everything the writers emit can be
read back into equal values.
"""
from __future__ import annotations

import itertools
import os
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .core import Allocation, Instance, MTRAError
from .mechanisms import (
    CRNetMechanism,
    LocalMechanism,
    MechanismTable,
    SequentialMechanism,
    SerialDictatorship,
    TableMechanism,
)
from .prefs import PROJECTION_MODES, LexPref, Profile

_HEADER = re.compile(r"^\[([a-z][a-z-]*)((?:\s+[a-z][a-z-]*=[^\s\]]+)*)\s*\]$")
_ATTR = re.compile(r"([a-z][a-z-]*)=([^\s\]]+)")


class ParseError(MTRAError, ValueError):
    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        loc = ""
        if path is not None:
            loc = f"{path}:"
        if line is not None:
            loc += f"{line}:"
        super().__init__(f"{loc} {message}" if loc else message)
        self.path = path
        self.line = line


@dataclass
class Section:
    name: str
    attrs: dict
    line: int
    body: list = field(default_factory=list)  # (line number, text)


def parse_sections(text: str, path: Optional[str] = None) -> list:
    sections: list = []
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]") and _HEADER.match(line):
            m = _HEADER.match(line)
            attrs = dict(_ATTR.findall(m.group(2)))
            sections.append(Section(m.group(1), attrs, no))
            continue
        if not sections:
            raise ParseError("content before the first section header", path, no)
        sections[-1].body.append((no, line))
    return sections


def _split_list(value: str) -> list:
    return [v.strip() for v in value.split(",") if v.strip()]


def _key_value(line: str, path, no) -> tuple:
    if "=" not in line:
        raise ParseError(f"expected 'key = value', got {line!r}", path, no)
    k, v = line.split("=", 1)
    return k.strip(), v.strip()


# -- instance ---------------------------------------------------------------------------


def parse_instance(sec: Section, path=None) -> Instance:
    agents = types = None
    items: dict = {}
    for no, line in sec.body:
        if line.startswith("items"):
            m = re.match(r"^items\s+type=(\S+)\s*=\s*(.*)$", line)
            if not m:
                raise ParseError("expected 'items type=<type> = a, b, ...'", path, no)
            items[m.group(1)] = (_split_list(m.group(2)), no)
            continue
        k, v = _key_value(line, path, no)
        if k == "agents":
            agents = (v, no)
        elif k == "types":
            types = (v, no)
        else:
            raise ParseError(f"unknown instance key {k!r}", path, no)
    if agents is None or types is None:
        raise ParseError("[instance] needs both 'agents' and 'types'", path, sec.line)

    def names(spec, what):
        value, no = spec
        if value.isdigit():
            count = int(value)
            if count < 1:
                raise ParseError(f"{what} count must be positive", path, no)
            return tuple(str(i + 1) for i in range(count))
        out = _split_list(value)
        if not out:
            raise ParseError(f"no {what} listed", path, no)
        if len(set(out)) != len(out):
            raise ParseError(f"duplicate {what} names", path, no)
        return tuple(out)

    agent_names = names(agents, "agent")
    type_names = names(types, "type")
    n = len(agent_names)
    item_names = []
    for t, tn in enumerate(type_names):
        if tn in items:
            lst, no = items.pop(tn)
            if len(lst) != n:
                raise ParseError(f"type {tn} lists {len(lst)} items but there are {n} agents", path, no)
            if len(set(lst)) != n:
                raise ParseError(f"item names of type {tn} are not unique", path, no)
            item_names.append(tuple(lst))
        else:
            item_names.append(tuple(f"{k + 1}_{tn}" for k in range(n)))
    if items:
        tn, (_, no) = next(iter(items.items()))
        raise ParseError(f"items given for unknown type {tn!r}", path, no)
    return Instance(n, len(type_names), agent_names, type_names, tuple(item_names))


def format_instance(inst: Instance) -> str:
    lines = ["[instance]", "agents = " + ", ".join(inst.agent_names), "types = " + ", ".join(inst.type_names)]
    for t, tn in enumerate(inst.type_names):
        lines.append(f"items type={tn} = " + ", ".join(inst.item_names[t]))
    return "\n".join(lines) + "\n"


class _Names:
    """Name lookups for one instance."""

    def __init__(self, inst: Instance, path=None):
        self.inst = inst
        self.path = path
        self.agent = {a: j for j, a in enumerate(inst.agent_names)}
        self.type = {tn: t for t, tn in enumerate(inst.type_names)}
        self.item = [{x: k for k, x in enumerate(names)} for names in inst.item_names]
        self.any_item: dict = {}
        for t, names in enumerate(inst.item_names):
            for k, x in enumerate(names):
                self.any_item.setdefault(x, []).append((t, k))

    def agent_of(self, name, no):
        if name not in self.agent:
            raise ParseError(f"unknown agent {name!r}", self.path, no)
        return self.agent[name]

    def type_of(self, name, no):
        if name not in self.type:
            raise ParseError(f"unknown type {name!r}", self.path, no)
        return self.type[name]

    def item_in(self, t, name, no):
        if name not in self.item[t]:
            raise ParseError(f"{name!r} is not an item of type {self.inst.type_names[t]}", self.path, no)
        return self.item[t][name]

    def typed_item(self, name, no):
        hits = self.any_item.get(name)
        if not hits:
            raise ParseError(f"unknown item {name!r}", self.path, no)
        if len(hits) > 1:
            raise ParseError(f"item name {name!r} is used by several types", self.path, no)
        return hits[0]

    def order(self, t, text, no):
        parts = [x.strip() for x in text.split(">")]
        items = [self.item_in(t, x, no) for x in parts]
        if sorted(items) != list(range(self.inst.n)):
            raise ParseError(
                f"order over type {self.inst.type_names[t]} must rank every item exactly once", self.path, no
            )
        return tuple(items)


# -- preferences --------------------------------------------------------------------------

_CPT = re.compile(r"^cpt\s+type=(\S+)(?:\s+given\s*([^:]*))?\s*:\s*(.+)$")


def parse_pref(sec: Section, inst: Instance, path=None) -> LexPref:
    nm = _Names(inst, path)
    importance = None
    cpt: dict = {}  # type -> {frozenset of (parent type, item): order}
    parent_sets: dict = {}
    for no, line in sec.body:
        if line.startswith("cpt"):
            m = _CPT.match(line)
            if not m:
                raise ParseError("expected 'cpt type=<type> given <items>: a > b > ...'", path, no)
            t = nm.type_of(m.group(1), no)
            typed = [nm.typed_item(x, no) for x in _split_list(m.group(2) or "")]
            pas = [pt for pt, _ in typed]
            if t in pas:
                raise ParseError("a type cannot be its own parent", path, no)
            if len(set(pas)) != len(pas):
                raise ParseError("a parent type is assigned twice", path, no)
            if parent_sets.setdefault(t, frozenset(pas)) != frozenset(pas):
                raise ParseError(
                    f"rows of type {inst.type_names[t]} condition on different parent types", path, no
                )
            key = frozenset(typed)
            if key in cpt.setdefault(t, {}):
                raise ParseError("duplicate CPT row", path, no)
            cpt[t][key] = nm.order(t, m.group(3), no)
            continue
        k, v = _key_value(line, path, no)
        if k != "importance":
            raise ParseError(f"unknown preference key {k!r}", path, no)
        importance = tuple(nm.type_of(x.strip(), no) for x in v.split(">"))
    if importance is None:
        raise ParseError("preference has no 'importance' line", path, sec.line)
    if sorted(importance) != list(range(inst.p)):
        raise ParseError("importance must list every type exactly once", path, sec.line)
    pos = {t: i for i, t in enumerate(importance)}
    parents, rows = {}, {}
    for t in importance:
        if t not in cpt:
            raise ParseError(f"no CPT rows for type {inst.type_names[t]}", path, sec.line)
        pas = tuple(sorted(parent_sets[t], key=pos.__getitem__))
        parents[t] = pas
        rows[t] = {tuple(dict(key)[pa] for pa in pas): order for key, order in cpt[t].items()}
    try:
        return LexPref.from_cpt(importance, rows, parents, inst.p, inst.n)
    except MTRAError as exc:
        raise ParseError(str(exc), path, sec.line) from None


def format_pref_body(pref: LexPref, inst: Instance) -> list:
    lines = ["importance = " + " > ".join(inst.type_names[t] for t in pref.importance)]
    for t in pref.importance:
        pas = pref.parents[t]
        for key, row in zip(itertools.product(range(inst.n), repeat=len(pas)), pref.rows[t]):
            given = ", ".join(inst.item_names[pa][k] for pa, k in zip(pas, key))
            order = " > ".join(inst.item_names[t][x] for x in row)
            cond = f" given {given}" if given else ""
            lines.append(f"cpt type={inst.type_names[t]}{cond}: {order}")
    return lines


def format_pref(pref: LexPref, inst: Instance, agent: int, header: str = "pref") -> str:
    return "\n".join([f"[{header} agent={inst.agent_names[agent]}]"] + format_pref_body(pref, inst)) + "\n"


def format_profile(profile: Profile, inst: Instance, header: str = "pref") -> str:
    return "\n".join(format_pref(pr, inst, j, header) for j, pr in enumerate(profile.prefs))


def profile_from_sections(sections: Sequence[Section], inst: Instance, path=None, header: str = "pref") -> Profile:
    nm = _Names(inst, path)
    prefs: dict = {}
    for sec in sections:
        if sec.name != header:
            continue
        if "agent" not in sec.attrs:
            raise ParseError(f"[{header}] needs agent=<name>", path, sec.line)
        j = nm.agent_of(sec.attrs["agent"], sec.line)
        if j in prefs:
            raise ParseError(f"agent {sec.attrs['agent']} has two preferences", path, sec.line)
        prefs[j] = parse_pref(sec, inst, path)
    if not prefs:
        raise ParseError("no preferences found", path)
    missing = [inst.agent_names[j] for j in range(inst.n) if j not in prefs]
    if missing:
        raise ParseError(f"no preference for agent(s) {', '.join(missing)}", path)
    return Profile(tuple(prefs[j] for j in range(inst.n)))


# -- allocations ------------------------------------------------------------------------------


def parse_allocation(sec: Section, inst: Instance, path=None) -> Allocation:
    nm = _Names(inst, path)
    bundles = [[None] * inst.p for _ in range(inst.n)]
    seen = set()
    for no, line in sec.body:
        k, v = _key_value(line, path, no)
        j = nm.agent_of(k, no)
        if j in seen:
            raise ParseError(f"agent {k} is listed twice", path, no)
        seen.add(j)
        for name in _split_list(v):
            t, item = nm.typed_item(name, no)
            if bundles[j][t] is not None:
                raise ParseError(f"agent {k} gets two items of type {inst.type_names[t]}", path, no)
            bundles[j][t] = item
    if len(seen) != inst.n:
        raise ParseError("an allocation must list every agent", path, sec.line)
    cols = []
    for t in range(inst.p):
        col = tuple(b[t] for b in bundles)
        if all(x is None for x in col):
            cols.append(None)
        elif any(x is None for x in col) or sorted(col) != list(range(inst.n)):
            raise ParseError(f"type {inst.type_names[t]} is not allocated as a bijection", path, sec.line)
        else:
            cols.append(col)
    return Allocation(tuple(cols))


def format_allocation(a: Allocation, inst: Instance, role: Optional[str] = None) -> str:
    head = "[allocation]" if role is None else f"[allocation role={role}]"
    lines = [head]
    for j in range(inst.n):
        items = [inst.item_names[t][c[j]] for t, c in enumerate(a.columns) if c is not None]
        lines.append(f"{inst.agent_names[j]} = " + ", ".join(items))
    return "\n".join(lines) + "\n"


def format_allocation_human(a: Allocation, inst: Instance) -> str:
    return "".join(f"{inst.agent_names[j]} -> {inst.bundle_str(a.bundle(j))}\n" for j in range(inst.n))


# -- mechanisms -----------------------------------------------------------------------------

_LOCAL = re.compile(r"^local\s+type=(\S+)(?:\s+given\s+(.*?))?\s*=\s*(sd|table)\((.*)\)\s*$")


def parse_local_table(text: str, inst: Instance, t: int, path=None) -> TableMechanism:
    """A ``[table]`` section of ``entry = a: x > y; b: y > x => a->x, b->y`` lines."""
    nm = _Names(inst, path)
    entries = {}
    for sec in parse_sections(text, path):
        if sec.name != "table":
            continue
        for no, line in sec.body:
            k, v = _key_value(line, path, no)
            if k != "entry" or "=>" not in v:
                raise ParseError("expected 'entry = <local profile> => <assignment>'", path, no)
            lhs, rhs = v.split("=>", 1)
            orders = [None] * inst.n
            for part in lhs.split(";"):
                if ":" not in part:
                    raise ParseError("local profile parts read '<agent>: a > b'", path, no)
                a, order = part.split(":", 1)
                orders[nm.agent_of(a.strip(), no)] = nm.order(t, order, no)
            if any(o is None for o in orders):
                raise ParseError("every agent needs a local order", path, no)
            col = [None] * inst.n
            for part in _split_list(rhs):
                if "->" not in part:
                    raise ParseError("assignments read '<agent>-><item>'", path, no)
                a, x = part.split("->", 1)
                col[nm.agent_of(a.strip(), no)] = nm.item_in(t, x.strip(), no)
            if any(x is None for x in col) or sorted(col) != list(range(inst.n)):
                raise ParseError("table output is not a bijection", path, no)
            entries[tuple(orders)] = tuple(col)
    if not entries:
        raise ParseError("table has no entries", path)
    return TableMechanism(entries)


def format_local_table(local: TableMechanism, inst: Instance, t: int) -> str:
    lines = ["[table]"]
    for lp, col in sorted(local.table.items()):
        lhs = "; ".join(
            f"{inst.agent_names[j]}: " + " > ".join(inst.item_names[t][x] for x in o) for j, o in enumerate(lp)
        )
        rhs = ", ".join(f"{inst.agent_names[j]}->{inst.item_names[t][x]}" for j, x in enumerate(col))
        lines.append(f"entry = {lhs} => {rhs}")
    return "\n".join(lines) + "\n"


def parse_mechanism(sec: Section, inst: Instance, path=None):
    nm = _Names(inst, path)
    order = None
    mode = "conditional"
    rules: dict = {}  # type -> list of (parents, key, local)
    for no, line in sec.body:
        if line.startswith("local"):
            m = _LOCAL.match(line)
            if not m:
                raise ParseError("expected 'local type=<type> [given ...] = sd(...) | table(<path>)'", path, no)
            t = nm.type_of(m.group(1), no)
            if m.group(3) == "sd":
                prio = tuple(nm.agent_of(a, no) for a in _split_list(m.group(4)))
                if sorted(prio) != list(range(inst.n)):
                    raise ParseError("sd priority must list every agent exactly once", path, no)
                local: LocalMechanism = SerialDictatorship(prio)
            else:
                ref = m.group(4).strip()
                full = ref if path is None or os.path.isabs(ref) else os.path.join(os.path.dirname(path), ref)
                try:
                    with open(full, encoding="utf-8") as fh:
                        local = parse_local_table(fh.read(), inst, t, full)
                except OSError as exc:
                    raise ParseError(f"cannot read table {ref!r}: {exc.strerror}", path, no) from None
            cols: dict = {}
            for part in _split_list(m.group(2) or ""):
                if "->" not in part:
                    raise ParseError("conditions read '<agent>-><item>'", path, no)
                a, x = part.split("->", 1)
                j = nm.agent_of(a.strip(), no)
                pt, item = nm.typed_item(x.strip(), no)
                col = cols.setdefault(pt, [None] * inst.n)
                if col[j] is not None:
                    raise ParseError("an agent is assigned two items of one parent type", path, no)
                col[j] = item
            for pt, col in cols.items():
                if any(x is None for x in col) or sorted(col) != list(range(inst.n)):
                    raise ParseError(
                        f"condition on type {inst.type_names[pt]} is not a full allocation of that type", path, no
                    )
            rules.setdefault(t, []).append((frozenset(cols), {pt: tuple(c) for pt, c in cols.items()}, local, no))
            continue
        k, v = _key_value(line, path, no)
        if k == "order":
            order = tuple(nm.type_of(x.strip(), no) for x in v.split(">"))
            if sorted(order) != list(range(inst.p)):
                raise ParseError("order must list every type exactly once", path, no)
        elif k == "mode":
            if v not in PROJECTION_MODES:
                raise ParseError(f"mode must be one of {', '.join(PROJECTION_MODES)}", path, no)
            mode = v
        else:
            raise ParseError(f"unknown mechanism key {k!r}", path, no)
    if order is None:
        raise ParseError("[mechanism] needs an 'order' line", path, sec.line)
    missing = [inst.type_names[t] for t in range(inst.p) if t not in rules]
    if missing:
        raise ParseError(f"no local mechanism for type(s) {', '.join(missing)}", path, sec.line)
    pos = {t: i for i, t in enumerate(order)}
    if all(len(r) == 1 and not r[0][0] for r in rules.values()):
        return SequentialMechanism(order, tuple(rules[t][0][2] for t in range(inst.p)), mode)
    parents, tables = [None] * inst.p, [None] * inst.p
    for t, rs in rules.items():
        pset = rs[0][0]
        for ps, _, _, no in rs:
            if ps != pset:
                raise ParseError(f"rules of type {inst.type_names[t]} condition on different types", path, no)
        pas = tuple(sorted(pset, key=pos.__getitem__))
        for pa in pas:
            if pos[pa] >= pos[t]:
                raise ParseError(
                    f"type {inst.type_names[t]} cannot depend on {inst.type_names[pa]} under this order",
                    path, rs[0][3],
                )
        table = {}
        for _, cols, local, no in rs:
            key = tuple(cols[pa] for pa in pas)
            if key in table:
                raise ParseError("duplicate rule for the same parent allocation", path, no)
            table[key] = local
        parents[t], tables[t] = pas, table
    return CRNetMechanism.build(order, parents, tables, inst.n, mode=mode)


def _format_local(local: LocalMechanism, inst: Instance, t: int, table_path: Optional[str]) -> str:
    if isinstance(local, SerialDictatorship):
        return "sd(" + ", ".join(inst.agent_names[a] for a in local.priority) + ")"
    if table_path is None:
        raise MTRAError("table locals need a file path to be written")
    return f"table({table_path})"


def format_mechanism(mech, inst: Instance, table_paths: Optional[dict] = None) -> str:
    """``table_paths`` maps ``(type, parent key)`` to the file holding a table local."""
    table_paths = table_paths or {}
    lines = ["[mechanism]", "order = " + " > ".join(inst.type_names[t] for t in mech.order), f"mode = {mech.mode}"]
    if isinstance(mech, SequentialMechanism):
        for t in mech.order:
            lines.append(
                f"local type={inst.type_names[t]} = "
                + _format_local(mech.locals[t], inst, t, table_paths.get((t, ())))
            )
    else:
        for t in mech.order:
            pas = mech.parents[t]
            keys = sorted(mech.crt[t])
            if mech.reachable is not None:
                reach = set(mech.reachable[t])
                keys = [k for k in keys if k in reach] or keys
            for key in keys:
                given = ", ".join(
                    f"{inst.agent_names[j]}->{inst.item_names[pa][x]}"
                    for pa, col in zip(pas, key)
                    for j, x in enumerate(col)
                )
                cond = f" given {given}" if given else ""
                local = _format_local(mech.crt[t][key], inst, t, table_paths.get((t, key)))
                lines.append(f"local type={inst.type_names[t]}{cond} = {local}")
    return "\n".join(lines) + "\n"


# -- documents ------------------------------------------------------------------------------


@dataclass
class Document:
    instance: Optional[Instance] = None
    profile: Optional[Profile] = None
    mechanism: object = None
    allocations: dict = field(default_factory=dict)  # role -> Allocation
    table: Optional[MechanismTable] = None


def read_text(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror}", path) from None


def load_document(text: str, path: Optional[str] = None, instance: Optional[Instance] = None) -> Document:
    """Parse every recognised section; an ``[instance]`` in the text wins over ``instance``."""
    sections = parse_sections(text, path)
    names = {s.name for s in sections}
    unknown = names - {"instance", "pref", "mechanism", "allocation", "entry", "report", "witness", "misreport", "table"}
    if unknown:
        sec = next(s for s in sections if s.name in unknown)
        raise ParseError(f"unknown section [{sec.name}]", path, sec.line)
    doc = Document()
    inst_secs = [s for s in sections if s.name == "instance"]
    if len(inst_secs) > 1:
        raise ParseError("more than one [instance] section", path, inst_secs[1].line)
    doc.instance = parse_instance(inst_secs[0], path) if inst_secs else instance
    if doc.instance is None:
        if sections:
            raise ParseError("no [instance] section and no instance file given", path, sections[0].line)
        raise ParseError("file is empty", path)
    inst = doc.instance
    if "entry" in names:
        doc.table = _parse_entries(sections, inst, path)
        return doc
    if "pref" in names:
        doc.profile = profile_from_sections(sections, inst, path)
    mechs = [s for s in sections if s.name == "mechanism"]
    if len(mechs) > 1:
        raise ParseError("more than one [mechanism] section", path, mechs[1].line)
    if mechs:
        doc.mechanism = parse_mechanism(mechs[0], inst, path)
    for s in sections:
        if s.name == "allocation":
            doc.allocations[s.attrs.get("role", "")] = parse_allocation(s, inst, path)
    return doc


def _parse_entries(sections, inst, path) -> MechanismTable:
    entries = {}
    groups: list = []
    order = None
    for s in sections:
        if s.name == "entry":
            groups.append([s])
        elif s.name == "mechanism":
            for no, line in s.body:
                k, v = _key_value(line, path, no)
                if k == "order":
                    nm = _Names(inst, path)
                    order = tuple(nm.type_of(x.strip(), no) for x in v.split(">"))
        elif s.name != "instance":
            if not groups:
                raise ParseError(f"[{s.name}] before the first [entry]", path, s.line)
            groups[-1].append(s)
    for group in groups:
        head = group[0]
        P = profile_from_sections(group, inst, path)
        allocs = [s for s in group if s.name == "allocation"]
        if len(allocs) != 1:
            raise ParseError("every [entry] needs exactly one [allocation]", path, head.line)
        A = parse_allocation(allocs[0], inst, path)
        if not A.is_full:
            raise ParseError("table allocations must cover every type", path, allocs[0].line)
        if P in entries:
            raise ParseError("profile listed twice in the table", path, head.line)
        entries[P] = A
    return MechanismTable(entries, order)


def format_table(table: MechanismTable, inst: Instance) -> str:
    parts = [format_instance(inst)]
    if table.order is not None:
        parts.append("[mechanism]\norder = " + " > ".join(inst.type_names[t] for t in table.order) + "\n")
    for P, A in table.items():
        parts.append("[entry]\n" + format_profile(P, inst) + format_allocation(A, inst))
    return "\n".join(parts)


def read_document(path: str, instance: Optional[Instance] = None) -> Document:
    return load_document(read_text(path), path, instance)


# -- property reports ------------------------------------------------------------------------


def format_report(report, inst: Instance, domain_size: Optional[int] = None) -> str:
    """Record form of a :class:`~mtra.verify.PropertyReport`, witness included."""
    lines = [f"[report property={report.property.value}]", f"verdict = {report.verdict.value}"]
    lines.append(f"checked = {report.checked}")
    lines.append(f"profiles = {report.profiles}")
    if domain_size is not None:
        lines.append(f"domain = {domain_size}")
    if report.samples is not None:
        lines.append(f"samples = {report.samples}")
    if report.seed is not None:
        lines.append(f"seed = {report.seed}")
    out = "\n".join(lines) + "\n"
    w = report.witness
    if w is None:
        return out
    wl = ["[witness]"]
    if w.agent is not None:
        wl.append(f"agent = {inst.agent_names[w.agent]}")
    if w.permutation is not None:
        if w.property.value == "anonymity":
            wl.append("agent-permutation = " + ", ".join(inst.agent_names[x] for x in w.permutation))
        else:
            for t, perm in enumerate(w.permutation):
                wl.append(
                    f"item-permutation type={inst.type_names[t]} = "
                    + ", ".join(inst.item_names[t][x] for x in perm)
                )
    if w.type_position is not None:
        wl.append(f"type-position = {w.type_position}")
        wl.append("order = " + " > ".join(inst.type_names[t] for t in w.order))
    if w.property.value == "monotonicity":
        wl.append(f"reading = {w.reading}")
    parts = [out, "\n".join(wl) + "\n", format_profile(w.profile, inst), format_allocation(w.before, inst, "before")]
    if w.misreport is not None:
        parts.append(format_pref(w.misreport, inst, w.agent, "misreport"))
    if w.after is not None:
        parts.append(format_allocation(w.after, inst, "after"))
    if w.dominating is not None:
        parts.append(format_allocation(w.dominating, inst, "dominating"))
    return "\n".join(parts)


def parse_reports(text: str, inst: Instance, path=None) -> list:
    """Read back the output of :func:`format_report` (possibly several reports)."""
    from .verify import Property, PropertyReport, Verdict, Witness

    nm = _Names(inst, path)
    groups: list = []
    for sec in parse_sections(text, path):
        if sec.name == "report":
            groups.append([sec])
        elif groups:
            groups[-1].append(sec)
        else:
            raise ParseError(f"[{sec.name}] before the first [report]", path, sec.line)
    reports = []
    for group in groups:
        head = group[0]
        prop = Property(head.attrs["property"])
        fields = dict(_key_value(line, path, no) for no, line in head.body)
        witness = None
        wsecs = [s for s in group if s.name == "witness"]
        if wsecs:
            wf: dict = {}
            perms = [None] * inst.p
            for no, line in wsecs[0].body:
                if line.startswith("item-permutation"):
                    m = re.match(r"^item-permutation\s+type=(\S+)\s*=\s*(.*)$", line)
                    if not m:
                        raise ParseError("bad item-permutation line", path, no)
                    t = nm.type_of(m.group(1), no)
                    perms[t] = tuple(nm.item_in(t, x, no) for x in _split_list(m.group(2)))
                else:
                    k, v = _key_value(line, path, no)
                    wf[k] = (v, no)
            agent = nm.agent_of(*wf["agent"]) if "agent" in wf else None
            permutation = None
            if "agent-permutation" in wf:
                v, no = wf["agent-permutation"]
                permutation = tuple(nm.agent_of(x, no) for x in _split_list(v))
            elif any(pm is not None for pm in perms):
                permutation = tuple(perms)
            allocs = {s.attrs.get("role", ""): parse_allocation(s, inst, path) for s in group if s.name == "allocation"}
            mis = [s for s in group if s.name == "misreport"]
            order = None
            if "order" in wf:
                v, no = wf["order"]
                order = tuple(nm.type_of(x.strip(), no) for x in v.split(">"))
            witness = Witness(
                prop,
                profile_from_sections(group, inst, path),
                allocs["before"],
                agent=agent,
                misreport=parse_pref(mis[0], inst, path) if mis else None,
                after=allocs.get("after"),
                permutation=permutation,
                dominating=allocs.get("dominating"),
                type_position=int(wf["type-position"][0]) if "type-position" in wf else None,
                order=order,
                reading=wf.get("reading", ("raise", 0))[0],
            )
        reports.append(
            PropertyReport(
                prop,
                Verdict(fields["verdict"]),
                int(fields["checked"]),
                int(fields["profiles"]),
                witness,
                int(fields["samples"]) if "samples" in fields else None,
                int(fields["seed"]) if "seed" in fields else None,
            )
        )
    return reports
