"""Case and scenario ingestion.

Reads the MATPOWER v2 case subset used for planning studies and the TOML
scenario file that carries load levels, contingencies, candidate branches,
prices and economics. Everything returned here is immutable.
"""
from __future__ import annotations

import logging
import math
import re
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

HOURS_PER_YEAR = 8760.0
DEFAULT_RAMP_FRACTION = 0.3

# MATPOWER column positions (0-based)
BUS_I, BUS_TYPE, PD = 0, 1, 2
F_BUS, T_BUS, BR_R, BR_X, BR_B, RATE_A = 0, 1, 2, 3, 4, 5
BR_STATUS = 10
GEN_BUS, GEN_STATUS, PMAX, PMIN = 0, 7, 8, 9
RAMP_30 = 18

MIN_COLUMNS = {"bus": 13, "branch": 11, "gen": 10}


class CaseError(ValueError):
    """Malformed or inconsistent case data."""


class ScenarioError(ValueError):
    """Invalid planning scenario."""


@dataclass(frozen=True)
class Bus:
    id: int
    is_reference: bool = False


@dataclass(frozen=True)
class Branch:
    id: int
    from_bus: int
    to_bus: int
    x: float
    rating: float
    in_service: bool = True


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    p_min: float
    p_max: float
    cost: float
    ramp_up: float
    ramp_down: float
    online: bool = True


@dataclass(frozen=True)
class Load:
    id: int
    bus: int
    p_d: float


@dataclass(frozen=True)
class PowerCase:
    base_mva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    loads: tuple[Load, ...]
    name: str = "case"

    @property
    def reference_bus(self) -> int:
        return next(b.id for b in self.buses if b.is_reference)

    @property
    def active_branches(self) -> tuple[Branch, ...]:
        return tuple(br for br in self.branches if br.in_service)

    @property
    def online_generators(self) -> tuple[Generator, ...]:
        return tuple(g for g in self.generators if g.online)

    @property
    def total_load(self) -> float:
        return sum(ld.p_d for ld in self.loads)

    def branch(self, branch_id: int) -> Branch:
        for br in self.branches:
            if br.id == branch_id:
                return br
        raise KeyError(branch_id)

    def bus_index(self) -> dict[int, int]:
        """Map bus id to its position in ``buses``."""
        return {b.id: i for i, b in enumerate(self.buses)}

    def scale_loads(self, factor: float) -> "PowerCase":
        if factor <= 0:
            raise ValueError("load scale factor must be positive")
        loads = tuple(replace(ld, p_d=ld.p_d * factor) for ld in self.loads)
        return replace(self, loads=loads)


# ---------------------------------------------------------------- parsing

_BLOCK_RE = re.compile(r"mpc\.(\w+)\s*=\s*\[(.*?)\]\s*;?", re.S)
_SCALAR_RE = re.compile(r"mpc\.baseMVA\s*=\s*([-+0-9.eE]+)")


def _strip_comments(text: str) -> str:
    return "\n".join(line.split("%", 1)[0] for line in text.splitlines())


def _matrix(body: str, name: str) -> list[list[float]]:
    rows = []
    for chunk in re.split(r"[;\n]", body):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            rows.append([float(tok) for tok in re.split(r"[\s,]+", chunk) if tok])
        except ValueError as exc:
            raise CaseError(f"mpc.{name}: unparseable row {chunk!r}") from exc
    return rows


def _check_width(rows: list[list[float]], name: str) -> None:
    if not rows:
        raise CaseError(f"mpc.{name} is empty")
    width = len(rows[0])
    for i, row in enumerate(rows, start=1):
        if len(row) != width:
            raise CaseError(
                f"mpc.{name} row {i}: has {len(row)} columns, expected {width}")
    need = MIN_COLUMNS.get(name, 0)
    if width < need:
        raise CaseError(f"mpc.{name}: rows have {width} columns, need at least {need}")


def _linear_cost(row: list[float], gen_id: int) -> tuple[float, bool]:
    model = int(row[0])
    if model != 2:
        raise CaseError(f"gencost row {gen_id}: only polynomial (MODEL=2) costs are supported")
    ncost = int(row[3])
    coeffs = row[4:4 + ncost]
    if len(coeffs) != ncost:
        raise CaseError(f"gencost row {gen_id}: expected {ncost} coefficients, got {len(coeffs)}")
    # coefficients run from the highest power down to the constant
    powers = {ncost - 1 - i: c for i, c in enumerate(coeffs)}
    linear = powers.get(1, 0.0)
    higher = {p: c for p, c in powers.items() if p >= 2 and c != 0.0}
    if higher and linear == 0.0:
        raise CaseError(
            f"gencost row {gen_id}: purely quadratic cost has no linear coefficient")
    return linear, bool(higher)


def parse_matpower_case(text: str, *, name: str = "case",
                        default_ramp_fraction: float = DEFAULT_RAMP_FRACTION) -> PowerCase:
    """Parse MATPOWER case text into a :class:`PowerCase`.

    Loads come from the bus PD column (zero loads are skipped), generator
    cost is the linear coefficient of the polynomial gencost, and ramp
    limits use RAMP_30 when present and positive, otherwise
    ``default_ramp_fraction * PMAX``.
    """
    text = _strip_comments(text)
    m = _SCALAR_RE.search(text)
    if m is None:
        raise CaseError("missing block mpc.baseMVA")
    base_mva = float(m.group(1))
    blocks = {mb.group(1): mb.group(2) for mb in _BLOCK_RE.finditer(text)}
    for block in ("bus", "branch", "gen", "gencost"):
        if block not in blocks:
            raise CaseError(f"missing block mpc.{block}")

    bus_rows = _matrix(blocks["bus"], "bus")
    branch_rows = _matrix(blocks["branch"], "branch")
    gen_rows = _matrix(blocks["gen"], "gen")
    cost_rows = _matrix(blocks["gencost"], "gencost")
    for rows, block in ((bus_rows, "bus"), (branch_rows, "branch"), (gen_rows, "gen")):
        _check_width(rows, block)
    if len(cost_rows) < len(gen_rows):
        raise CaseError("mpc.gencost has fewer rows than mpc.gen")

    buses, loads = [], []
    for row in bus_rows:
        bus_id = int(row[BUS_I])
        buses.append(Bus(bus_id, int(row[BUS_TYPE]) == 3))
        if row[PD] != 0.0:
            loads.append(Load(bus_id, bus_id, row[PD]))
    n_ref = sum(b.is_reference for b in buses)
    if n_ref == 0:
        raise CaseError("no reference bus (no bus of type 3)")
    if n_ref > 1:
        raise CaseError(f"{n_ref} reference buses; exactly one is required")
    bus_ids = {b.id for b in buses}
    if len(bus_ids) != len(buses):
        raise CaseError("duplicate bus numbers")

    branches = []
    for i, row in enumerate(branch_rows, start=1):
        f, t = int(row[F_BUS]), int(row[T_BUS])
        if f not in bus_ids or t not in bus_ids:
            raise CaseError(f"branch {i}: endpoint {f}-{t} references an unknown bus")
        if row[BR_X] <= 0:
            raise CaseError(f"branch {i}: nonpositive reactance {row[BR_X]}")
        rating = row[RATE_A]
        if rating <= 0:
            raise CaseError(f"branch {i}: nonpositive rating {rating}")
        branches.append(Branch(i, f, t, row[BR_X], rating, row[BR_STATUS] != 0))

    generators, nonlinear = [], []
    for i, row in enumerate(gen_rows, start=1):
        if int(row[GEN_BUS]) not in bus_ids:
            raise CaseError(f"generator {i}: unknown bus {int(row[GEN_BUS])}")
        p_max, p_min = row[PMAX], row[PMIN]
        if p_min > p_max:
            raise CaseError(f"generator {i}: PMIN {p_min} exceeds PMAX {p_max}")
        ramp = row[RAMP_30] if len(row) > RAMP_30 and row[RAMP_30] > 0 else None
        if ramp is None:
            ramp = default_ramp_fraction * max(p_max, 0.0)
        cost, dropped = _linear_cost(cost_rows[i - 1], i)
        if dropped:
            nonlinear.append(i)
        generators.append(Generator(
            id=i, bus=int(row[GEN_BUS]), p_min=p_min, p_max=p_max, cost=cost,
            ramp_up=ramp, ramp_down=ramp, online=row[GEN_STATUS] > 0))
    if nonlinear:
        log.warning("%s: ignoring cost terms of order >= 2 for %d generator(s)",
                    name, len(nonlinear))

    return PowerCase(base_mva, tuple(buses), tuple(branches), tuple(generators),
                     tuple(loads), name=name)


def read_case(path: str | Path, **kwargs) -> PowerCase:
    path = Path(path)
    kwargs.setdefault("name", path.stem)
    return parse_matpower_case(path.read_text(encoding="utf-8"), **kwargs)


def _fmt(v: float) -> str:
    return repr(float(v)) if v != int(v) else str(int(v))


def format_matpower_case(case: PowerCase) -> str:
    """Serialize to canonical MATPOWER text that parses back to ``case``.

    AC-only columns are written as neutral placeholders.
    """
    pd = {ld.bus: ld.p_d for ld in case.loads}
    out = [f"function mpc = {case.name}", "mpc.version = '2';",
           f"mpc.baseMVA = {_fmt(case.base_mva)};", "", "mpc.bus = ["]
    for b in case.buses:
        kind = 3 if b.is_reference else (2 if any(g.bus == b.id for g in case.generators) else 1)
        out.append(f"\t{b.id}\t{kind}\t{_fmt(pd.get(b.id, 0.0))}\t0\t0\t0\t1\t1\t0\t0\t1\t1.1\t0.9;")
    out += ["];", "", "mpc.gen = ["]
    for g in case.generators:
        cols = [g.bus, 0, 0, 0, 0, 1, case.base_mva, int(g.online), g.p_max, g.p_min]
        cols += [0] * 8 + [g.ramp_up, 0, 0]
        out.append("\t" + "\t".join(_fmt(c) for c in cols) + ";")
    out += ["];", "", "mpc.branch = ["]
    for br in case.branches:
        cols = [br.from_bus, br.to_bus, 0, br.x, 0, br.rating, br.rating, br.rating,
                0, 0, int(br.in_service), -360, 360]
        out.append("\t" + "\t".join(_fmt(c) for c in cols) + ";")
    out += ["];", "", "mpc.gencost = ["]
    for g in case.generators:
        out.append(f"\t2\t0\t0\t2\t{_fmt(g.cost)}\t0;")
    out += ["];", ""]
    return "\n".join(out)


# ---------------------------------------------------------------- scenario

@dataclass(frozen=True)
class LoadLevel:
    name: str
    scale: float
    base_hours: float
    contingency_hours: tuple[float, ...]


@dataclass(frozen=True)
class PlanningScenario:
    levels: tuple[LoadLevel, ...]
    contingencies: tuple[int, ...] = ()
    candidates: tuple[int, ...] = ()
    load_shedding_cost: float = 1000.0
    up_cost_factor: float = 0.1
    down_cost_factor: float = 0.1
    interest_rate: float = 0.05
    lifetime: float = 5.0
    compensation_lower: float = -0.7
    compensation_upper: float = 0.2
    theta_max: float = math.pi / 3
    short_term_rating_factor: float = 1.1
    honor_pmin: bool = False
    tcsc_ratings: Mapping[int, float] = field(default_factory=dict)
    cost_floor: float = 5.0
    # "valid": (b_max - b_min) * theta_max in the envelope rows; "bmax": b_max * theta_max
    envelope_big_m: str = "valid"

    @property
    def total_hours(self) -> float:
        return sum(lv.base_hours + sum(lv.contingency_hours) for lv in self.levels)

    def with_candidates(self, candidates: Sequence[int]) -> "PlanningScenario":
        return replace(self, candidates=tuple(int(k) for k in candidates))


@dataclass(frozen=True)
class StateIndex:
    level: int
    state: int
    outaged: int | None
    duration: float
    branch_ids: tuple[int, ...] = ()

    def status(self, branch_id: int) -> int:
        """Availability N_kct of ``branch_id`` in this state."""
        return 0 if branch_id == self.outaged else 1

    @property
    def availability(self) -> dict[int, int]:
        return {k: self.status(k) for k in self.branch_ids}

    @property
    def is_base(self) -> bool:
        return self.state == 0


def _levels_from(raw: list[dict], n_cont: int) -> tuple[LoadLevel, ...]:
    levels = []
    for i, entry in enumerate(raw):
        name = str(entry.get("name", f"level{i}"))
        hours = entry.get("contingency_hours", [0.0] * n_cont)
        if isinstance(hours, (int, float)):
            hours = [float(hours)] * n_cont
        if len(hours) != n_cont:
            raise ScenarioError(
                f"level {name!r}: {len(hours)} contingency durations for {n_cont} contingencies")
        levels.append(LoadLevel(name, float(entry.get("scale", 1.0)),
                                float(entry["base_hours"]), tuple(float(h) for h in hours)))
    return tuple(levels)


def scenario_from_dict(cfg: Mapping, case: PowerCase | None = None) -> PlanningScenario:
    contingencies = tuple(int(k) for k in cfg.get("contingencies", ()))
    if "levels" not in cfg or not cfg["levels"]:
        raise ScenarioError("scenario defines no load levels")
    econ = cfg.get("economics", {})
    costs = cfg.get("costs", {})
    comp = cfg.get("compensation", {})
    scenario = PlanningScenario(
        levels=_levels_from(list(cfg["levels"]), len(contingencies)),
        contingencies=contingencies,
        candidates=tuple(int(k) for k in cfg.get("candidates", ())),
        load_shedding_cost=float(costs.get("load_shedding", 1000.0)),
        up_cost_factor=float(costs.get("up_factor", 0.1)),
        down_cost_factor=float(costs.get("down_factor", 0.1)),
        interest_rate=float(econ.get("interest_rate", 0.05)),
        lifetime=float(econ.get("lifetime", 5)),
        compensation_lower=float(comp.get("lower", -0.7)),
        compensation_upper=float(comp.get("upper", 0.2)),
        theta_max=float(cfg.get("theta_max", math.pi / 3)),
        short_term_rating_factor=float(cfg.get("short_term_rating_factor", 1.1)),
        honor_pmin=bool(cfg.get("honor_pmin", False)),
        tcsc_ratings={int(k): float(v) for k, v in cfg.get("tcsc_ratings", {}).items()},
        cost_floor=float(costs.get("investment_floor", 5.0)),
        envelope_big_m=str(cfg.get("envelope_big_m", "valid")),
    )
    validate_scenario(scenario, case)
    return scenario


def load_scenario(config: str | Path, case: PowerCase | None = None) -> PlanningScenario:
    """Load a TOML scenario (a path or the TOML text itself) and validate it."""
    if isinstance(config, Path) or (isinstance(config, str) and "\n" not in config
                                    and Path(config).is_file()):
        config = Path(config).read_text(encoding="utf-8")
    try:
        cfg = tomllib.loads(config)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"scenario is not valid TOML: {exc}") from exc
    return scenario_from_dict(cfg, case)


def validate_scenario(sc: PlanningScenario, case: PowerCase | None = None) -> None:
    for lv in sc.levels:
        if lv.scale <= 0:
            raise ScenarioError(f"level {lv.name!r}: scale factor must be positive")
        if lv.base_hours < 0 or any(h < 0 for h in lv.contingency_hours):
            raise ScenarioError(f"level {lv.name!r}: negative duration")
    total = sc.total_hours
    if abs(total - HOURS_PER_YEAR) > 1e-6:
        raise ScenarioError(
            f"state durations sum to {total:g} h; base and contingency hours "
            f"over all levels must total {HOURS_PER_YEAR:g} h")
    if sc.envelope_big_m not in ("valid", "bmax"):
        raise ScenarioError("envelope_big_m must be 'valid' or 'bmax'")
    if sc.theta_max <= 0:
        raise ScenarioError("theta_max must be positive")
    if not sc.compensation_lower < 0 < sc.compensation_upper or sc.compensation_lower <= -1:
        raise ScenarioError("compensation range must satisfy -1 < lower < 0 < upper")
    if sc.interest_rate <= 0 or sc.lifetime < 1:
        raise ScenarioError("economics need interest_rate > 0 and lifetime >= 1")
    if len(set(sc.contingencies)) != len(sc.contingencies):
        raise ScenarioError("duplicate contingency branch")
    if len(set(sc.candidates)) != len(sc.candidates):
        raise ScenarioError("duplicate candidate branch")
    if case is None:
        return
    active = {br.id for br in case.active_branches}
    for label, ids in (("contingency", sc.contingencies), ("candidate", sc.candidates),
                       ("tcsc rating override", tuple(sc.tcsc_ratings))):
        for k in ids:
            if k not in active:
                raise ScenarioError(f"{label} references unknown or out-of-service branch {k}")
    from .network import islanding_branches
    radial = islanding_branches(case)
    for k in sc.contingencies:
        if k in radial:
            raise ScenarioError(f"contingency on branch {k} splits the network into islands")


def enumerate_states(scenario: PlanningScenario, case: PowerCase) -> list[StateIndex]:
    """Base state plus one state per contingency, for each load level."""
    ids = tuple(br.id for br in case.active_branches)
    states = []
    for t, lv in enumerate(scenario.levels):
        states.append(StateIndex(t, 0, None, lv.base_hours, ids))
        for c, (k, hours) in enumerate(zip(scenario.contingencies, lv.contingency_hours), start=1):
            states.append(StateIndex(t, c, k, hours, ids))
    return states


def format_scenario(sc: PlanningScenario) -> str:
    """Write a scenario back out as TOML."""
    def arr(xs):
        return "[" + ", ".join(_fmt(x) for x in xs) + "]"

    lines = [f"contingencies = {arr(sc.contingencies)}",
             f"candidates = {arr(sc.candidates)}",
             f"theta_max = {sc.theta_max!r}",
             f"short_term_rating_factor = {sc.short_term_rating_factor!r}",
             f"honor_pmin = {str(sc.honor_pmin).lower()}",
             f"envelope_big_m = {sc.envelope_big_m!r}", "",
             "[costs]",
             f"load_shedding = {sc.load_shedding_cost!r}",
             f"up_factor = {sc.up_cost_factor!r}",
             f"down_factor = {sc.down_cost_factor!r}",
             f"investment_floor = {sc.cost_floor!r}", "",
             "[economics]",
             f"interest_rate = {sc.interest_rate!r}",
             f"lifetime = {sc.lifetime!r}", "",
             "[compensation]",
             f"lower = {sc.compensation_lower!r}",
             f"upper = {sc.compensation_upper!r}", ""]
    if sc.tcsc_ratings:
        lines.append("[tcsc_ratings]")
        lines += [f'"{k}" = {v!r}' for k, v in sorted(sc.tcsc_ratings.items())]
        lines.append("")
    for lv in sc.levels:
        lines += ["[[levels]]", f'name = "{lv.name}"', f"scale = {lv.scale!r}",
                  f"base_hours = {lv.base_hours!r}",
                  f"contingency_hours = {arr(lv.contingency_hours)}", ""]
    return "\n".join(lines)
