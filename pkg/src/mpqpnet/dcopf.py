"""DC optimal power flow front end for the mp-QP machinery.

Builds the box-constrained DC-OPF

    min  sum_g q_g Pg^2 + c_g Pg
    s.t. Mg Pg - B delta = Pd   (per-bus balance)
         delta_ref = 0
         Pg- <= Pg <= Pg+

as a ``QpProblem`` over x = [Pg; delta].  Demand perturbations enter through
theta_e on the balance rows of load buses, which the builder flags as the
varying parameters.  All quantities are per-unit on the case base.

Case fixtures live under ``mpqpnet/cases`` as JSON documents; a subset of the
MATPOWER .m format (bus/gen/branch/gencost matrices, polynomial costs) can be
imported as well.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import ParseError, ValidationError
from .qp_core import ParamPoint, QpProblem

CASE_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Bus:
    id: int
    demand: float = 0.0  # pu


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    susceptance: float  # pu, > 0


@dataclass(frozen=True)
class Gen:
    bus: int
    q: float      # quadratic cost, per-unit
    c: float      # linear cost, per-unit
    pmin: float = 0.0
    pmax: float = 0.0


@dataclass(frozen=True)
class GridCase:
    name: str
    base_mva: float
    ref_bus: int
    buses: tuple
    branches: tuple
    generators: tuple

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "generators", tuple(self.generators))
        _validate_case(self)

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_gen(self) -> int:
        return len(self.generators)

    def bus_index(self) -> dict:
        return {bus.id: i for i, bus in enumerate(self.buses)}

    def load_buses(self) -> list:
        return [bus.id for bus in self.buses if bus.demand > 0]

    def total_demand(self) -> float:
        return float(sum(bus.demand for bus in self.buses))

    def total_capacity(self) -> float:
        return float(sum(g.pmax for g in self.generators))


def _validate_case(case: GridCase):
    if case.base_mva <= 0:
        raise ValidationError("base_mva must be positive")
    ids = [bus.id for bus in case.buses]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate bus ids")
    if not ids:
        raise ValidationError("case has no buses")
    id_set = set(ids)
    if case.ref_bus not in id_set:
        raise ValidationError(f"reference bus {case.ref_bus} not in bus list")
    for bus in case.buses:
        if bus.demand < 0:
            raise ValidationError(f"bus {bus.id} has negative demand")
    for br in case.branches:
        if br.from_bus not in id_set or br.to_bus not in id_set:
            raise ValidationError(f"branch {br.from_bus}-{br.to_bus} references unknown bus")
        if br.from_bus == br.to_bus:
            raise ValidationError("self-loop branch")
        if br.susceptance <= 0 or not math.isfinite(br.susceptance):
            raise ValidationError(f"branch {br.from_bus}-{br.to_bus} needs susceptance > 0")
    if not case.generators:
        raise ValidationError("case has no generators")
    for g in case.generators:
        if g.bus not in id_set:
            raise ValidationError(f"generator at unknown bus {g.bus}")
        if g.q <= 0:
            raise ValidationError(f"generator at bus {g.bus} needs q > 0")
        if g.pmin > g.pmax:
            raise ValidationError(f"generator at bus {g.bus} has pmin > pmax")
    # Connectivity: BFS over the branch graph.
    adj = {i: set() for i in id_set}
    for br in case.branches:
        adj[br.from_bus].add(br.to_bus)
        adj[br.to_bus].add(br.from_bus)
    seen = {case.ref_bus}
    frontier = [case.ref_bus]
    while frontier:
        nxt = []
        for u in frontier:
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    nxt.append(v)
        frontier = nxt
    if seen != id_set:
        missing = sorted(id_set - seen)
        raise ValidationError(f"network is disconnected; unreachable buses {missing}")


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def case_to_dict(case: GridCase) -> dict:
    return {
        "schema_version": CASE_SCHEMA_VERSION,
        "name": case.name,
        "base_mva": case.base_mva,
        "ref_bus": case.ref_bus,
        "buses": [{"id": b.id, "demand": b.demand} for b in case.buses],
        "branches": [
            {"from": br.from_bus, "to": br.to_bus, "susceptance": br.susceptance}
            for br in case.branches
        ],
        "generators": [
            {"bus": g.bus, "q": g.q, "c": g.c, "pmin": g.pmin, "pmax": g.pmax}
            for g in case.generators
        ],
    }


def case_from_dict(doc: dict) -> GridCase:
    try:
        if doc.get("schema_version") != CASE_SCHEMA_VERSION:
            raise ParseError(f"unsupported case schema_version {doc.get('schema_version')!r}")
        return GridCase(
            name=str(doc.get("name", "unnamed")),
            base_mva=float(doc["base_mva"]),
            ref_bus=int(doc["ref_bus"]),
            buses=tuple(Bus(int(b["id"]), float(b.get("demand", 0.0))) for b in doc["buses"]),
            branches=tuple(
                Branch(int(br["from"]), int(br["to"]), float(br["susceptance"]))
                for br in doc["branches"]
            ),
            generators=tuple(
                Gen(int(g["bus"]), float(g["q"]), float(g["c"]),
                    float(g.get("pmin", 0.0)), float(g.get("pmax", 0.0)))
                for g in doc["generators"]
            ),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"malformed case document: {e}") from e


def serialize_case(case: GridCase) -> str:
    return json.dumps(case_to_dict(case), indent=2)


def _strip_matlab_comments(text: str) -> str:
    return "\n".join(line.split("%")[0] for line in text.splitlines())


def _matrix_block(text: str, name: str):
    m = re.search(rf"mpc\.{name}\s*=\s*\[(.*?)\]\s*;", text, re.S)
    if m is None:
        return None
    rows = []
    for chunk in m.group(1).replace(";", "\n").splitlines():
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            rows.append([float(tok) for tok in chunk.replace(",", " ").split()])
        except ValueError as e:
            raise ParseError(f"bad numeric row in mpc.{name}: {chunk!r}") from e
    return rows


def parse_matpower(text: str, name: str = "imported") -> GridCase:
    """Import the subset of MATPOWER .m case files this toolkit understands.

    Reads baseMVA and the bus/gen/branch/gencost matrices.  Only polynomial
    (model 2) costs up to quadratic order are supported; the constant
    coefficient only shifts the objective and is dropped.  Out-of-service
    generators (status 0) are skipped.
    """
    text = _strip_matlab_comments(text)
    mbase = re.search(r"mpc\.baseMVA\s*=\s*([0-9eE\.\+\-]+)\s*;", text)
    if mbase is None:
        raise ParseError("mpc.baseMVA not found")
    base = float(mbase.group(1))
    bus_rows = _matrix_block(text, "bus")
    gen_rows = _matrix_block(text, "gen")
    branch_rows = _matrix_block(text, "branch")
    cost_rows = _matrix_block(text, "gencost")
    if bus_rows is None or gen_rows is None or branch_rows is None:
        raise ParseError("mpc.bus, mpc.gen and mpc.branch are all required")

    buses, ref = [], None
    for row in bus_rows:
        if len(row) < 3:
            raise ParseError("bus rows need at least [id, type, Pd]")
        bus_id, bus_type, pd = int(row[0]), int(row[1]), row[2]
        buses.append(Bus(bus_id, pd / base))
        if bus_type == 3:
            ref = bus_id
    if ref is None:
        raise ParseError("no reference bus (type 3) found")

    branches = []
    for row in branch_rows:
        if len(row) < 4:
            raise ParseError("branch rows need at least [from, to, r, x]")
        x = row[3]
        if x == 0:
            raise ParseError(f"branch {int(row[0])}-{int(row[1])} has zero reactance")
        branches.append(Branch(int(row[0]), int(row[1]), 1.0 / x))

    in_service = []
    for row in gen_rows:
        if len(row) < 10:
            raise ParseError("gen rows need at least 10 columns")
        status = int(row[7])
        if status > 0:
            in_service.append(row)
    if cost_rows is not None and len(cost_rows) < len(gen_rows):
        raise ParseError("gencost has fewer rows than gen")

    gens = []
    for i, row in enumerate(in_service):
        bus_id, pmax, pmin = int(row[0]), row[8] / base, row[9] / base
        if cost_rows is None:
            raise ParseError("mpc.gencost is required")
        cost = cost_rows[gen_rows.index(row)] if row in gen_rows else cost_rows[i]
        model, ncoef = int(cost[0]), int(cost[3])
        if model != 2:
            raise ParseError("only polynomial (model 2) gencost rows are supported")
        coeffs = cost[4:4 + ncoef]
        if len(coeffs) != ncoef or ncoef > 3:
            raise ParseError("gencost supports at most quadratic polynomials")
        pad = [0.0] * (3 - ncoef) + list(coeffs)  # [c2, c1, c0]
        q = pad[0] * base * base
        c = pad[1] * base
        gens.append(Gen(bus_id, q, c, pmin, pmax))
    return GridCase(name=name, base_mva=base, ref_bus=ref,
                    buses=tuple(buses), branches=tuple(branches), generators=tuple(gens))


def parse_case(text: str, name: str = "imported") -> GridCase:
    """Parse a case from JSON (native) or MATPOWER .m text."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid case JSON: {e}") from e
        return case_from_dict(doc)
    if "mpc." in text:
        return parse_matpower(text, name=name)
    raise ParseError("unrecognized case format (expecting JSON or MATPOWER .m)")


def list_cases() -> list:
    files = resources.files(__package__).joinpath("cases")
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def load_case(name: str) -> GridCase:
    """Load a packaged case fixture by name (see ``list_cases``)."""
    path = resources.files(__package__).joinpath("cases").joinpath(f"{name}.json")
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ValidationError(
            f"unknown case {name!r}; available: {', '.join(list_cases())}"
        ) from None
    return parse_case(text, name=name)


# ---------------------------------------------------------------------------
# QP assembly
# ---------------------------------------------------------------------------


def build_qp(case: GridCase) -> QpProblem:
    """Assemble the DC-OPF QP over x = [Pg; delta].

    Equalities: per-bus balance rows (RHS Pd) followed by the reference-angle
    row.  Inequalities: all generator upper limits, then all lower limits.
    The varying mask flags theta_e on load-bus balance rows.
    """
    nb, ng = case.n_bus, case.n_gen
    idx = case.bus_index()
    n = ng + nb
    m1 = nb + 1
    m2 = 2 * ng

    B = np.zeros((nb, nb))
    for br in case.branches:
        i, j = idx[br.from_bus], idx[br.to_bus]
        B[i, i] += br.susceptance
        B[j, j] += br.susceptance
        B[i, j] -= br.susceptance
        B[j, i] -= br.susceptance

    Mg = np.zeros((nb, ng))
    for g_i, g in enumerate(case.generators):
        Mg[idx[g.bus], g_i] = 1.0

    Ae = np.zeros((m1, n))
    Ae[:nb, :ng] = Mg
    Ae[:nb, ng:] = -B
    Ae[nb, ng + idx[case.ref_bus]] = 1.0
    be = np.zeros(m1)
    be[:nb] = [bus.demand for bus in case.buses]

    Ac = np.zeros((m2, n))
    Ac[:ng, :ng] = np.eye(ng)
    Ac[ng:, :ng] = -np.eye(ng)
    bc = np.concatenate([
        [g.pmax for g in case.generators],
        [-g.pmin for g in case.generators],
    ])

    Q = np.zeros((n, n))
    Q[:ng, :ng] = np.diag([g.q for g in case.generators])
    C = np.zeros(n)
    C[:ng] = [g.c for g in case.generators]

    varying = np.zeros(n + m1 + m2, dtype=bool)
    for bus in case.buses:
        if bus.demand > 0:
            varying[n + idx[bus.id]] = True

    return QpProblem(Q=Q, C=C, C0=0.0, Ae=Ae, be=be, Ac=Ac, bc=bc,
                     varying_mask=varying, x_block_split=ng)


def axis_for_bus(case: GridCase, bus_id: int) -> int:
    """Stacked theta index of the balance-row perturbation for ``bus_id``."""
    idx = case.bus_index()
    if bus_id not in idx:
        raise ValidationError(f"bus {bus_id} not in case {case.name}")
    n = case.n_gen + case.n_bus
    return n + idx[bus_id]


def _zero_point(case: GridCase) -> ParamPoint:
    n = case.n_gen + case.n_bus
    return ParamPoint(np.zeros(n), np.zeros(case.n_bus + 1), np.zeros(2 * case.n_gen))


def sweep_start(case: GridCase, sweep_bus: int, baseline: float = 0.01) -> ParamPoint:
    """Start point for a demand sweep at ``sweep_bus``.

    Every other load bus is pinned to ``baseline`` pu of demand; the swept
    bus starts at zero demand, so a sweep offset d means "swept-bus demand
    equals d".
    """
    idx = case.bus_index()
    if sweep_bus not in idx:
        raise ValidationError(f"bus {sweep_bus} not in case {case.name}")
    theta_e = np.zeros(case.n_bus + 1)
    for bus in case.buses:
        if bus.demand > 0:
            target = 0.0 if bus.id == sweep_bus else baseline
            theta_e[idx[bus.id]] = target - bus.demand
    p = _zero_point(case)
    return ParamPoint(p.theta_c, theta_e, p.theta_C)


def make_realistic_dataset(case: GridCase, n: int, seed: int,
                           lo: float = 0.6, hi: float = 1.4) -> list:
    """Uniformly scaled demand profiles: theta_e = (s - 1) Pd, s ~ U(lo, hi).

    One scale factor per sample, applied to every load bus, so samples stay
    well inside the operating envelope (all of them feasible for the shipped
    cases).
    """
    if n < 0:
        raise ValidationError("n must be nonnegative")
    rng = np.random.default_rng(seed)
    idx = case.bus_index()
    demand = np.zeros(case.n_bus + 1)
    for bus in case.buses:
        demand[idx[bus.id]] = bus.demand
    points = []
    for s in rng.uniform(lo, hi, size=n):
        p = _zero_point(case)
        points.append(ParamPoint(p.theta_c, (s - 1.0) * demand, p.theta_C))
    return points


def make_extreme_dataset(case: GridCase, n: int, seed: int,
                         baseline: float = 0.01, max_total: float = None) -> list:
    """Stress profiles: all load buses at ``baseline`` except one.

    Cycles over the load buses; the singled-out bus draws its demand from
    U(0, max_total) where ``max_total`` defaults to total installed capacity.
    Draws near the maximum can exceed what the remaining baseline load leaves
    room for, so a tail of these samples is infeasible by construction.
    """
    if n < 0:
        raise ValidationError("n must be nonnegative")
    loads = case.load_buses()
    if not loads:
        raise ValidationError("case has no load buses")
    if max_total is None:
        max_total = case.total_capacity()
    rng = np.random.default_rng(seed)
    idx = case.bus_index()
    points = []
    per_bus = math.ceil(n / len(loads))
    for bus_id in loads:
        for d in rng.uniform(0.0, max_total, size=per_bus):
            theta_e = np.zeros(case.n_bus + 1)
            for bus in case.buses:
                if bus.demand > 0:
                    target = d if bus.id == bus_id else baseline
                    theta_e[idx[bus.id]] = target - bus.demand
            p = _zero_point(case)
            points.append(ParamPoint(p.theta_c, theta_e, p.theta_C))
    return points[:n]
