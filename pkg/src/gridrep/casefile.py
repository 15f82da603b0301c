"""Reader and writer for the sectioned, whitespace-delimited case format.

A case file looks like::

    base_mva 100
    [bus]
    # id zone kind base_load lat lon
    1 A slack 120.0 42.9 -78.8
    [branch]
    # id from to r x rating status kind name
    1 1 2 0.0 0.1 500.0 in physical-AC -
    [gen]
    # id bus fuel p_max p_min ramp dispatchable
    G1 1 gas 300.0 50.0 120.0 1
    [gencost]
    # gen c1 c0
    G1 25.0 140.0
    [interface]
    # name limit_pos limit_neg members
    AB 400.0 -400.0 +1,-4

``-`` marks an absent optional value; ``inf`` is an unbounded rating or limit.
"""

from __future__ import annotations

import io
import math
from collections.abc import Iterable
from typing import TextIO

from .model import (
    Branch,
    Bus,
    CostCurve,
    Generator,
    Interface,
    Network,
    validate_interfaces,
    validate_network,
)

SECTIONS = ("bus", "branch", "gen", "gencost", "interface")
COLUMNS = {
    "bus": ("id", "zone", "kind", "base_load", "lat", "lon"),
    "branch": ("id", "from", "to", "r", "x", "rating", "status", "kind", "name"),
    "gen": ("id", "bus", "fuel", "p_max", "p_min", "ramp", "dispatchable"),
    "gencost": ("gen", "c1", "c0"),
    "interface": ("name", "limit_pos", "limit_neg", "members"),
}


class CaseError(ValueError):
    """Problem reading a case file; ``line``/``column`` are 1-based when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)


class CaseSchemaError(CaseError):
    pass


class DanglingReferenceError(CaseError):
    pass


class _Row:
    __slots__ = ("lineno", "tokens", "cols")

    def __init__(self, lineno: int, raw: str):
        self.lineno = lineno
        self.tokens: list[str] = []
        self.cols: list[int] = []
        pos = 0
        for tok in raw.split():
            pos = raw.index(tok, pos)
            self.tokens.append(tok)
            self.cols.append(pos + 1)
            pos += len(tok)

    def _fail(self, k: int, msg: str) -> CaseSchemaError:
        return CaseSchemaError(msg, self.lineno, self.cols[k])

    def text(self, k: int) -> str:
        return self.tokens[k]

    def num(self, k: int, optional: bool = False) -> float | None:
        tok = self.tokens[k]
        if optional and tok == "-":
            return None
        try:
            return float(tok)
        except ValueError:
            raise self._fail(k, f"expected a number, got {tok!r}") from None

    def int_(self, k: int) -> int:
        tok = self.tokens[k]
        try:
            return int(tok)
        except ValueError:
            raise self._fail(k, f"expected an integer, got {tok!r}") from None

    def choice(self, k: int, options: dict[str, object]):
        tok = self.tokens[k]
        if tok not in options:
            raise self._fail(k, f"expected one of {sorted(options)}, got {tok!r}")
        return options[tok]


def _split_sections(stream: TextIO) -> tuple[float, dict[str, list[_Row]]]:
    base_mva = None
    current = None
    sections: dict[str, list[_Row]] = {}
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].rstrip("\n")
        if not line.strip():
            continue
        stripped = line.strip()
        if stripped.startswith("["):
            name = stripped.strip("[]").strip()
            if not stripped.endswith("]") or name not in SECTIONS:
                raise CaseSchemaError(f"unknown section header {stripped!r}", lineno, 1)
            if name in sections:
                raise CaseSchemaError(f"section [{name}] appears more than once", lineno, 1)
            sections[name] = []
            current = name
            continue
        row = _Row(lineno, line)
        if current is None:
            if row.tokens[0] != "base_mva" or len(row.tokens) != 2:
                raise CaseSchemaError("expected 'base_mva <value>' before the first section", lineno, 1)
            if base_mva is not None:
                raise CaseSchemaError("base_mva given more than once", lineno, 1)
            base_mva = row.num(1)
            continue
        want = len(COLUMNS[current])
        if len(row.tokens) != want:
            raise CaseSchemaError(
                f"[{current}] rows need {want} columns {COLUMNS[current]}, got {len(row.tokens)}",
                lineno,
                row.cols[min(len(row.tokens), want) - 1] if row.tokens else 1,
            )
        sections[current].append(row)
    if base_mva is None:
        raise CaseSchemaError("missing base_mva")
    if not base_mva > 0:
        raise CaseSchemaError("base_mva must be positive")
    for name in ("bus", "branch", "gen", "gencost", "interface"):
        if name not in sections:
            raise CaseSchemaError(f"missing section [{name}]")
    return base_mva, sections


def _parse_members(row: _Row, k: int) -> tuple[tuple[int, int], ...]:
    members = []
    for part in row.text(k).split(","):
        if len(part) < 2 or part[0] not in "+-":
            raise row._fail(k, f"interface member {part!r} must look like +12 or -7")
        try:
            members.append((int(part[1:]), 1 if part[0] == "+" else -1))
        except ValueError:
            raise row._fail(k, f"interface member {part!r} must look like +12 or -7") from None
    return tuple(members)


def parse_case(text: str | TextIO) -> tuple[Network, list[Interface]]:
    """Parse case text into a validated network and its interfaces."""
    stream = io.StringIO(text) if isinstance(text, str) else text
    base_mva, sec = _split_sections(stream)

    kinds = {"PQ": "PQ", "PV": "PV", "slack": "slack"}
    buses = []
    for r in sec["bus"]:
        buses.append(Bus(r.int_(0), r.text(1), r.choice(2, kinds), r.num(3), r.num(4, True), r.num(5, True)))

    branch_kinds = {k: k for k in ("physical-AC", "equivalent", "hvdc-proxy", "added-AC")}
    branches = []
    for r in sec["branch"]:
        branches.append(
            Branch(
                id=r.int_(0),
                from_bus=r.int_(1),
                to_bus=r.int_(2),
                resistance=r.num(3),
                reactance=r.num(4),
                rating=r.num(5),
                in_service=r.choice(6, {"in": True, "out": False}),
                kind=r.choice(7, branch_kinds),
                name="" if r.text(8) == "-" else r.text(8),
            )
        )

    fuels = {f: f for f in (
        "nuclear", "hydro", "wind", "other-renewable", "gas", "oil", "coal", "dual-fuel",
        "external-equivalent",
    )}
    gen_rows = {}
    for r in sec["gen"]:
        gid = r.text(0)
        if gid in gen_rows:
            raise CaseSchemaError(f"duplicate generator {gid!r}", r.lineno, r.cols[0])
        gen_rows[gid] = r
    costs: dict[str, CostCurve] = {}
    for r in sec["gencost"]:
        gid = r.text(0)
        if gid not in gen_rows:
            raise DanglingReferenceError(f"gencost refers to unknown generator {gid!r}", r.lineno, r.cols[0])
        if gid in costs:
            raise CaseSchemaError(f"duplicate gencost for {gid!r}", r.lineno, r.cols[0])
        costs[gid] = CostCurve(c1=r.num(1), c0=r.num(2))
    generators = []
    for gid, r in gen_rows.items():
        generators.append(
            Generator(
                id=gid,
                bus=r.int_(1),
                fuel=r.choice(2, fuels),
                p_max=r.num(3),
                p_min=r.num(4),
                ramp_hourly=r.num(5),
                dispatchable=r.choice(6, {"1": True, "0": False}),
                cost=costs.get(gid, CostCurve()),
            )
        )

    bus_ids = {b.id for b in buses}
    for br, r in zip(branches, sec["branch"]):
        for k, end in ((1, br.from_bus), (2, br.to_bus)):
            if end not in bus_ids:
                raise DanglingReferenceError(f"branch {br.id} refers to unknown bus {end}", r.lineno, r.cols[k])
    for g, r in zip(generators, gen_rows.values()):
        if g.bus not in bus_ids:
            raise DanglingReferenceError(f"generator {g.id} refers to unknown bus {g.bus}", r.lineno, r.cols[1])

    branch_ids = {br.id for br in branches}
    interfaces = []
    for r in sec["interface"]:
        members = _parse_members(r, 3)
        for bid, _ in members:
            if bid not in branch_ids:
                raise DanglingReferenceError(
                    f"interface {r.text(0)} refers to unknown branch {bid}", r.lineno, r.cols[3]
                )
        interfaces.append(Interface(r.text(0), members, limit_pos=r.num(1), limit_neg=r.num(2)))

    net = Network(base_mva=base_mva, buses=tuple(buses), branches=tuple(branches), generators=tuple(generators))
    problems = validate_network(net) + validate_interfaces(net, interfaces)
    if problems:
        raise CaseSchemaError("invalid case: " + "; ".join(problems))
    return net, interfaces


def _fmt(x: float | None) -> str:
    if x is None:
        return "-"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def serialize_case(net: Network, interfaces: Iterable[Interface] = (), header: str = "") -> str:
    """Canonical text for ``net``: rows sorted by id, floats in shortest repr."""
    out = []
    for line in header.splitlines():
        out.append(f"# {line}".rstrip())
    out.append(f"base_mva {_fmt(net.base_mva)}")
    out.append("[bus]")
    out.append("# " + " ".join(COLUMNS["bus"]))
    for b in net.buses:
        out.append(f"{b.id} {b.zone} {b.kind.value} {_fmt(b.base_load)} {_fmt(b.lat)} {_fmt(b.lon)}")
    out.append("[branch]")
    out.append("# " + " ".join(COLUMNS["branch"]))
    for br in net.branches:
        out.append(
            f"{br.id} {br.from_bus} {br.to_bus} {_fmt(br.resistance)} {_fmt(br.reactance)} "
            f"{_fmt(br.rating)} {'in' if br.in_service else 'out'} {br.kind.value} {br.name or '-'}"
        )
    out.append("[gen]")
    out.append("# " + " ".join(COLUMNS["gen"]))
    for g in net.generators:
        out.append(
            f"{g.id} {g.bus} {g.fuel.value} {_fmt(g.p_max)} {_fmt(g.p_min)} "
            f"{_fmt(g.ramp_hourly)} {int(g.dispatchable)}"
        )
    out.append("[gencost]")
    out.append("# " + " ".join(COLUMNS["gencost"]))
    for g in net.generators:
        out.append(f"{g.id} {_fmt(g.cost.c1)} {_fmt(g.cost.c0)}")
    out.append("[interface]")
    out.append("# " + " ".join(COLUMNS["interface"]))
    for iface in sorted(interfaces, key=lambda i: i.name):
        members = ",".join(f"{'+' if s > 0 else '-'}{b}" for b, s in iface.members)
        out.append(f"{iface.name} {_fmt(iface.limit_pos)} {_fmt(iface.limit_neg)} {members}")
    return "\n".join(out) + "\n"


def read_case(path) -> tuple[Network, list[Interface]]:
    with open(path, encoding="utf-8") as fh:
        return parse_case(fh)


def write_case(path, net: Network, interfaces: Iterable[Interface] = (), header: str = "") -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_case(net, interfaces, header))
