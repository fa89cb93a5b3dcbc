"""MATPOWER-subset case ingestion and a canonical JSON form.

Only the fields the DC model consumes are kept: bus ids and active loads,
branch endpoints / reactance / thermal rating / status, generator bus, active
limits, status and linear cost. Everything is converted to per-unit on the
system base at parse time. A rating of 0 in MATPOWER means "unlimited" and is
stored as None.
"""

import json
import re
from dataclasses import dataclass, asdict

import numpy as np

from .errors import CaseError


@dataclass(frozen=True)
class Bus:
    id: int
    p_d: float  # p.u.


@dataclass(frozen=True)
class Branch:
    f_bus: int
    t_bus: int
    b: float            # susceptance 1/x, p.u.
    rate: float = None  # p.u., None = unbounded


@dataclass(frozen=True)
class Generator:
    bus: int
    p_min: float  # p.u.
    p_max: float  # p.u.
    cost: float = 0.0  # linear coefficient, $/MWh


@dataclass(frozen=True)
class NetworkCase:
    name: str
    base_mva: float
    buses: tuple
    branches: tuple
    generators: tuple

    # -- index helpers -------------------------------------------------------

    @property
    def n_bus(self):
        return len(self.buses)

    @property
    def n_branch(self):
        return len(self.branches)

    @property
    def n_gen(self):
        return len(self.generators)

    def bus_position(self):
        """bus id -> dense position."""
        return {bus.id: i for i, bus in enumerate(self.buses)}

    def p_d(self):
        return np.array([bus.p_d for bus in self.buses])

    def load_positions(self):
        """Positions of perturbable (nonzero-load) buses, ascending."""
        return np.flatnonzero(self.p_d() != 0.0)

    def total_load(self):
        return float(self.p_d().sum())

    def gen_positions(self):
        pos = self.bus_position()
        return np.array([pos[g.bus] for g in self.generators], dtype=int)

    def gen_bounds(self):
        lo = np.array([g.p_min for g in self.generators])
        hi = np.array([g.p_max for g in self.generators])
        return lo, hi

    def gen_costs(self):
        return np.array([g.cost for g in self.generators])


def build_case(name, base_mva, buses, branches, generators):
    """Assemble and validate a NetworkCase from per-unit records.

    buses: (id, p_d), branches: (f, t, x, rate-or-None), generators:
    (bus, p_min, p_max[, cost]).  Used by tests and fixtures; file ingestion
    goes through parse_case_text/load_case.
    """
    bus_objs = tuple(Bus(id=int(i), p_d=float(pd)) for i, pd in buses)
    br_objs = []
    for f, t, x, rate in branches:
        if x == 0:
            raise CaseError(f"branch {f}-{t} has zero reactance")
        br_objs.append(Branch(f_bus=int(f), t_bus=int(t), b=1.0 / float(x),
                              rate=None if rate is None else float(rate)))
    gen_objs = tuple(Generator(bus=int(g[0]), p_min=float(g[1]), p_max=float(g[2]),
                               cost=float(g[3]) if len(g) > 3 else 0.0)
                     for g in generators)
    case = NetworkCase(name=name, base_mva=float(base_mva), buses=bus_objs,
                       branches=tuple(br_objs), generators=gen_objs)
    validate_case(case)
    return case


def validate_case(case):
    if case.base_mva <= 0:
        raise CaseError(f"baseMVA must be positive, got {case.base_mva}")
    if case.n_bus == 0:
        raise CaseError("case has no buses")
    if case.n_gen == 0:
        raise CaseError("case has no in-service generators")
    ids = [bus.id for bus in case.buses]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise CaseError(f"duplicate bus ids: {dup}")
    known = set(ids)
    for br in case.branches:
        if br.f_bus not in known or br.t_bus not in known:
            raise CaseError(f"branch {br.f_bus}-{br.t_bus} references unknown bus")
        if br.f_bus == br.t_bus:
            raise CaseError(f"branch {br.f_bus}-{br.t_bus} is a self-loop")
    for i, g in enumerate(case.generators):
        if g.bus not in known:
            raise CaseError(f"generator {i} references unknown bus {g.bus}")
        if g.p_min > g.p_max:
            raise CaseError(
                f"generator {i} at bus {g.bus}: p_min {g.p_min} > p_max {g.p_max}")
    _check_connected(case)
    return case


def _check_connected(case):
    pos = case.bus_position()
    adj = [[] for _ in range(case.n_bus)]
    for br in case.branches:
        a, b = pos[br.f_bus], pos[br.t_bus]
        adj[a].append(b)
        adj[b].append(a)
    seen = np.zeros(case.n_bus, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                stack.append(v)
    if not seen.all():
        missing = [case.buses[i].id for i in np.flatnonzero(~seen)[:8]]
        raise CaseError(
            f"network is disconnected: buses {missing} unreachable from bus "
            f"{case.buses[0].id} over in-service branches")


# -- MATPOWER-subset parsing ---------------------------------------------------

_SCALAR_RE = re.compile(r"^(?:mpc\.)?(\w+)\s*=\s*([0-9.eE+-]+)\s*;")
_TABLE_RE = re.compile(r"^(?:mpc\.)?(\w+)\s*=\s*\[(.*)$")


def _tokenize_tables(text):
    """Extract scalar fields and numeric tables; rows carry line numbers."""
    scalars, tables = {}, {}
    current, rows = None, None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("%", 1)[0].strip()
        if not line:
            continue
        if current is not None:
            body, closed = (line[:-2], True) if line.endswith("];") else (line, False)
            for chunk in body.split(";"):
                chunk = chunk.strip()
                if chunk:
                    rows.append((lineno, chunk))
            if closed:
                tables[current] = rows
                current, rows = None, None
            continue
        m = _SCALAR_RE.match(line)
        if m:
            scalars[m.group(1)] = float(m.group(2))
            continue
        m = _TABLE_RE.match(line)
        if m:
            current, rows = m.group(1), []
            body = m.group(2)
            if body.endswith("];"):
                body, closed = body[:-2], True
            else:
                closed = False
            for chunk in body.split(";"):
                chunk = chunk.strip()
                if chunk:
                    rows.append((lineno, chunk))
            if closed:
                tables[current] = rows
                current, rows = None, None
    if current is not None:
        raise CaseError(f"table '{current}' is never closed with '];'")
    return scalars, tables


def _numeric_rows(table, name, min_cols):
    out = []
    for lineno, chunk in table:
        parts = chunk.replace(",", " ").split()
        try:
            row = [float(p) for p in parts]
        except ValueError as exc:
            raise CaseError(f"line {lineno}: bad number in {name} row: {exc}")
        if len(row) < min_cols:
            raise CaseError(
                f"line {lineno}: {name} row has {len(row)} columns, "
                f"need at least {min_cols}")
        out.append((lineno, row))
    return out


def parse_case_text(text, name="case"):
    """Parse MATPOWER-format text into a validated NetworkCase."""
    scalars, tables = _tokenize_tables(text)
    if "baseMVA" not in scalars:
        raise CaseError("missing baseMVA")
    base = scalars["baseMVA"]
    if base <= 0:
        raise CaseError(f"baseMVA must be positive, got {base}")
    for required in ("bus", "gen", "branch"):
        if required not in tables:
            raise CaseError(f"missing mpc.{required} table")

    buses = []
    for lineno, row in _numeric_rows(tables["bus"], "bus", 3):
        buses.append(Bus(id=int(row[0]), p_d=row[2] / base))

    branches = []
    for lineno, row in _numeric_rows(tables["branch"], "branch", 6):
        status = int(row[10]) if len(row) > 10 else 1
        if status <= 0:
            continue
        x = row[3]
        if x == 0:
            raise CaseError(f"line {lineno}: in-service branch "
                            f"{int(row[0])}-{int(row[1])} has zero reactance")
        rate = row[5] / base if row[5] > 0 else None
        branches.append(Branch(f_bus=int(row[0]), t_bus=int(row[1]),
                               b=1.0 / x, rate=rate))

    raw_gens = []
    for lineno, row in _numeric_rows(tables["gen"], "gen", 10):
        status = int(row[7])
        if status <= 0:
            raw_gens.append(None)
            continue
        raw_gens.append(Generator(bus=int(row[0]), p_min=row[9] / base,
                                  p_max=row[8] / base))

    if "gencost" in tables:
        cost_rows = _numeric_rows(tables["gencost"], "gencost", 4)
        # MATPOWER permits 2*n_gen rows (reactive costs follow); take the first block
        cost_rows = cost_rows[:len(raw_gens)]
        for i, (lineno, row) in enumerate(cost_rows):
            if raw_gens[i] is None:
                continue
            model, ncost = int(row[0]), int(row[3])
            if model != 2:
                raise CaseError(
                    f"line {lineno}: unsupported gencost model {model} "
                    "(only polynomial, model 2)")
            coeffs = row[4:4 + ncost]
            if len(coeffs) != ncost:
                raise CaseError(f"line {lineno}: gencost row promises {ncost} "
                                f"coefficients, has {len(coeffs)}")
            linear = coeffs[-2] if ncost >= 2 else 0.0
            raw_gens[i] = Generator(bus=raw_gens[i].bus, p_min=raw_gens[i].p_min,
                                    p_max=raw_gens[i].p_max, cost=linear)

    gens = tuple(g for g in raw_gens if g is not None)
    case = NetworkCase(name=name, base_mva=base, buses=tuple(buses),
                       branches=tuple(branches), generators=gens)
    validate_case(case)
    return case


def parse_case(source, name="case"):
    """parse_case_text over an open text stream (or a plain string)."""
    text = source.read() if hasattr(source, "read") else source
    return parse_case_text(text, name=name)


def load_case(path):
    """Load a case from a .m (MATPOWER subset) or .json (canonical) file."""
    text = open(path).read()
    name = re.sub(r"\.(m|json)$", "", str(path).rsplit("/", 1)[-1])
    if str(path).endswith(".json") or text.lstrip().startswith("{"):
        return case_from_json(text)
    return parse_case_text(text, name=name)


# -- canonical JSON ------------------------------------------------------------

_JSON_FORMAT = "dcattack-case"
_JSON_VERSION = 1


def case_to_json(case, indent=2):
    doc = {
        "format": _JSON_FORMAT,
        "version": _JSON_VERSION,
        "name": case.name,
        "base_mva": case.base_mva,
        "buses": [asdict(b) for b in case.buses],
        "branches": [asdict(b) for b in case.branches],
        "generators": [asdict(g) for g in case.generators],
    }
    return json.dumps(doc, indent=indent)


def case_from_json(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseError(f"invalid case JSON: {exc}")
    if doc.get("format") != _JSON_FORMAT:
        raise CaseError(f"not a {_JSON_FORMAT} document")
    if doc.get("version") != _JSON_VERSION:
        raise CaseError(f"unsupported case JSON version {doc.get('version')}")
    case = NetworkCase(
        name=doc["name"],
        base_mva=float(doc["base_mva"]),
        buses=tuple(Bus(**b) for b in doc["buses"]),
        branches=tuple(Branch(**b) for b in doc["branches"]),
        generators=tuple(Generator(**g) for g in doc["generators"]),
    )
    validate_case(case)
    return case
