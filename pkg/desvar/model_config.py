"""
@file model_config.py
@brief Model configuration tree: parsing, unit conversion and validation
@details
Model files are JSON trees. Times are minutes unless a block says otherwise;
cost rates are given per hour and converted to per minute once, here. The
result is an immutable ModelConfig that the builders in models.py check for
their model-specific shape.
"""

import bisect
import copy
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import networkx as nx

from desvar import config
from desvar.distributions import Distribution
from desvar.errors import ConfigurationError, ValidationError
from desvar.logging import logger

TIME_UNITS = {
    "minutes": 1.0,
    "hours": config.MINUTES_PER_HOUR,
    "days": config.MINUTES_PER_DAY,
}

ROUTE_START = "create"
ROUTE_END = "dispose"

# Either spelling turns on the pinned benchmark constants
STRICT_KEYS = ("strict_paper", "strict_benchmark")

MODEL_KEYS = frozenset(
    (
        "model_kind",
        "name",
        "note",
        "horizon",
        "stop_rule",
        "warm_up",
        "arrivals",
        "stations",
        "entity_types",
        "measures",
        "gate",
        "type_source",
        "transfer_time",
        "max_events",
        "settings",
    )
    + STRICT_KEYS
)


class ModelKind(Enum):
    Manufacturing = "manufacturing"
    CallCenter = "call_center"
    Crossdock = "crossdock"
    SingleQueue = "single_queue"

    def __str__(self):
        return self.value


class StopRule(Enum):
    AtHorizon = "at_horizon"
    HorizonThenDrain = "horizon_then_drain"

    def __str__(self):
        return self.value


class StepKind(Enum):
    Station = "station"
    Delay = "delay"

    def __str__(self):
        return self.value


class MeasureKind(Enum):
    TallyMean = "tally_mean"
    TimeAverage = "time_average"
    Cost = "cost"
    Count = "count"

    def __str__(self):
        return self.value


class Observable(Enum):
    EntityTime = "entity_time"
    WaitTime = "wait_time"
    Wip = "wip"
    Utilization = "utilization"
    Cost = "cost"
    Balked = "balked"

    def __str__(self):
        return self.value


# Which observables each measure kind may summarize
KIND_OBSERVABLES = {
    MeasureKind.TallyMean: (Observable.EntityTime, Observable.WaitTime),
    MeasureKind.TimeAverage: (Observable.Wip, Observable.Utilization),
    MeasureKind.Cost: (Observable.Cost,),
    MeasureKind.Count: (Observable.Balked,),
}


class MeasureRole(Enum):
    Primary = "primary_measure"
    ControlVariate = "control_variate"

    def __str__(self):
        return self.value


class UtilizationKind(Enum):
    # Time average of busy / available capacity
    Instantaneous = "instantaneous"
    # Busy unit-time over scheduled unit-time
    Scheduled = "scheduled"

    def __str__(self):
        return self.value


def to_minutes(value, unit="minutes"):
    """Convert a number, or a {"value": v, "unit": u} block, to minutes"""
    if isinstance(value, dict):
        return to_minutes(value.get("value"), value.get("unit", unit))
    if unit not in TIME_UNITS:
        raise ValidationError(f"unknown time unit {unit!r}")
    try:
        minutes = float(value) * TIME_UNITS[unit]
    except (TypeError, ValueError):
        raise ValidationError(f"expected a number of {unit}, got {value!r}")
    if not math.isfinite(minutes) or minutes < 0:
        raise ValidationError(f"durations must be finite and non-negative, got {value!r}")
    return minutes


@dataclass(frozen=True)
class CapacitySchedule:
    """Piecewise-constant capacity, optionally repeating every period minutes"""

    points: Tuple[Tuple[float, int], ...]
    period: Optional[float] = None

    def __post_init__(self):
        if not self.points or self.points[0][0] != 0:
            raise ValidationError("a capacity schedule must start at time 0")
        starts = [p[0] for p in self.points]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValidationError("capacity schedule times must be increasing")
        if any(c < 0 or int(c) != c for _, c in self.points):
            raise ValidationError("capacities must be non-negative integers")
        if self.period is not None and self.period <= starts[-1]:
            raise ValidationError("schedule period must exceed its last breakpoint")

    @staticmethod
    def constant(capacity: int) -> "CapacitySchedule":
        return CapacitySchedule(((0.0, int(capacity)),))

    @property
    def is_constant(self):
        return len(self.points) == 1

    def value_at(self, t: float) -> int:
        local = t % self.period if self.period else t
        index = bisect.bisect_right([p[0] for p in self.points], local) - 1
        return self.points[index][1]

    def next_change(self, t: float) -> Optional[float]:
        """First breakpoint strictly after t, or None"""
        if self.is_constant:
            return None
        cycle_start = 0.0
        if self.period:
            cycle_start = math.floor(t / self.period) * self.period
        for start, _ in self.points:
            if cycle_start + start > t:
                return cycle_start + start
        if self.period:
            return cycle_start + self.period
        return None


@dataclass(frozen=True)
class FailureSpec:
    uptime: Distribution
    downtime: Distribution


@dataclass(frozen=True)
class CostRates:
    """Rates per minute of unit time, plus a charge per seizure"""

    busy_per_minute: float = 0.0
    idle_per_minute: float = 0.0
    per_use: float = 0.0

    @staticmethod
    def from_hourly(busy_per_hour=0.0, idle_per_hour=0.0, per_use=0.0):
        rates = (float(busy_per_hour), float(idle_per_hour), float(per_use))
        if any(r < 0 for r in rates):
            raise ValidationError("cost rates cannot be negative")
        return CostRates(
            rates[0] / config.MINUTES_PER_HOUR, rates[1] / config.MINUTES_PER_HOUR, rates[2]
        )


@dataclass(frozen=True)
class ResourceSpec:
    name: str
    capacity: CapacitySchedule
    multiplier: float = 1.0
    failure: Optional[FailureSpec] = None
    cost: CostRates = CostRates()

    @property
    def service_source(self):
        return f"service.{self.name}"

    @property
    def failure_source(self):
        return f"failure.{self.name}"

    @property
    def repair_source(self):
        return f"repair.{self.name}"


@dataclass(frozen=True)
class StationSpec:
    """FIFO queue served by one or more resources, in preference order"""

    name: str
    resources: Tuple[ResourceSpec, ...]


@dataclass(frozen=True)
class RouteStep:
    kind: StepKind
    target: str
    process: Distribution

    @property
    def delay_source(self):
        return f"delay.{self.target}"


@dataclass(frozen=True)
class EntityType:
    name: str
    mix: float
    route: Tuple[RouteStep, ...]


@dataclass(frozen=True)
class ArrivalSpec:
    """Either a renewal process (interarrival) or a rate schedule

    schedule holds (start, end, rate per minute) intervals tiling [0, end).
    """

    interarrival: Optional[Distribution] = None
    schedule: Tuple[Tuple[float, float, float], ...] = ()
    first_arrival: Optional[float] = None
    max_arrivals: Optional[int] = None

    @property
    def schedule_end(self) -> Optional[float]:
        return self.schedule[-1][1] if self.schedule else None

    def next_arrival(self, now: float, stream) -> Optional[float]:
        """Time of the next arrival after now, one draw, or None when done"""
        if self.interarrival is not None:
            return now + self.interarrival.sample(stream)
        # Invert the integrated rate: a unit exponential is the amount of
        # cumulative rate to consume before the next call.
        remaining = Distribution.expo(1.0).sample(stream)
        for start, end, rate in self.schedule:
            if end <= now:
                continue
            lo = max(now, start)
            mass = rate * (end - lo)
            if rate > 0 and mass >= remaining:
                return lo + remaining / rate
            remaining -= mass
        return None


@dataclass(frozen=True)
class MeasureSpec:
    name: str
    kind: MeasureKind
    observe: Observable
    role: MeasureRole = MeasureRole.Primary
    resources: Tuple[str, ...] = ()
    utilization: UtilizationKind = UtilizationKind.Instantaneous


@dataclass(frozen=True)
class ModelConfig:
    kind: ModelKind
    name: str
    horizon: float
    stop_rule: StopRule
    arrivals: ArrivalSpec
    entity_types: Tuple[EntityType, ...]
    stations: Tuple[StationSpec, ...]
    measures: Tuple[MeasureSpec, ...]
    gate: Optional[ResourceSpec] = None
    type_source: str = "routing.type"
    transfer_time: float = 0.0
    warm_up: float = config.DEFAULT_WARM_UP
    strict_benchmark: bool = False
    max_events: int = config.DEFAULT_MAX_EVENTS
    note: str = ""
    settings: Dict[str, Any] = field(default_factory=dict, compare=False, hash=False)

    @property
    def resources(self) -> Tuple[ResourceSpec, ...]:
        return tuple(r for s in self.stations for r in s.resources)

    @property
    def control_variate(self) -> MeasureSpec:
        return next(m for m in self.measures if m.role is MeasureRole.ControlVariate)

    def measure(self, name) -> MeasureSpec:
        for m in self.measures:
            if m.name == name:
                return m
        raise ConfigurationError(f"unknown measure {name!r}")


def apply_overrides(tree, overrides):
    """Return a copy of a config tree with each {"path": [...], "value": v} applied"""
    tree = copy.deepcopy(tree)
    for override in overrides or ():
        path = override.get("path")
        if not path:
            raise ValidationError(f"override without a path: {override!r}")
        node = tree
        try:
            for key in path[:-1]:
                node = node[key]
            if isinstance(node, dict) or path[-1] < len(node):
                node[path[-1]] = override["value"]
            else:
                raise IndexError(path[-1])
        except (KeyError, IndexError, TypeError):
            raise ValidationError(f"override path {path} does not exist")
        logger.debug("override %s = %s", path, override["value"])
    return tree


def _require(tree, key, where):
    if key not in tree:
        raise ValidationError(f"{where}: missing required field '{key}'")
    return tree[key]


def _strict_flag(tree) -> bool:
    flags = {key: bool(tree[key]) for key in STRICT_KEYS if key in tree}
    if len(set(flags.values())) > 1:
        raise ValidationError(f"model: conflicting {' and '.join(flags)}")
    return any(flags.values())


def _enum(enum_type, value, where):
    try:
        return enum_type(value)
    except ValueError:
        choices = ", ".join(str(e) for e in enum_type)
        raise ValidationError(f"{where}: {value!r} is not one of {choices}")


def parse_capacity(raw, where) -> CapacitySchedule:
    if isinstance(raw, dict):
        points = tuple(
            (to_minutes(start), int(capacity))
            for start, capacity in _require(raw, "schedule", where)
        )
        period = raw.get("period")
        return CapacitySchedule(points, to_minutes(period) if period else None)
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise ValidationError(f"{where}: capacity must be an integer or a schedule")
    return CapacitySchedule.constant(raw)


def parse_resource(raw, where) -> ResourceSpec:
    name = _require(raw, "name", where)
    where = f"{where} resource {name}"
    failure = None
    if raw.get("failure"):
        block = raw["failure"]
        unit = block.get("unit", "minutes")
        scale = to_minutes(1, unit)
        failure = FailureSpec(
            uptime=Distribution.parse(_require(block, "uptime", where)).scaled(scale),
            downtime=Distribution.parse(_require(block, "downtime", where)).scaled(scale),
        )
    multiplier = float(raw.get("multiplier", 1.0))
    if multiplier <= 0:
        raise ValidationError(f"{where}: multiplier must be positive")
    return ResourceSpec(
        name=name,
        capacity=parse_capacity(raw.get("capacity", 1), where),
        multiplier=multiplier,
        failure=failure,
        cost=CostRates.from_hourly(**raw.get("cost", {})),
    )


def parse_arrivals(raw, horizon) -> ArrivalSpec:
    where = "arrivals"
    first = raw.get("first_arrival")
    max_arrivals = raw.get("max_arrivals")
    if max_arrivals is not None and (not isinstance(max_arrivals, int) or max_arrivals < 0):
        raise ValidationError(f"{where}: max_arrivals must be a non-negative integer")
    if "interarrival" in raw:
        return ArrivalSpec(
            interarrival=Distribution.parse(raw["interarrival"]),
            first_arrival=None if first is None else to_minutes(first),
            max_arrivals=max_arrivals,
        )
    per = {"per_minute": 1.0, "per_hour": 1.0 / config.MINUTES_PER_HOUR}
    rate_unit = raw.get("rate_unit", "per_minute")
    if rate_unit not in per:
        raise ValidationError(f"{where}: unknown rate_unit {rate_unit!r}")
    schedule = []
    expected_start = 0.0
    for start, end, rate in _require(raw, "schedule", where):
        start, end = to_minutes(start), to_minutes(end)
        if start != expected_start:
            raise ValidationError(
                f"{where}: schedule intervals must tile the horizon without gaps or overlap "
                f"(interval starting at {start} expected at {expected_start})"
            )
        if end <= start or rate < 0:
            raise ValidationError(f"{where}: bad interval ({start}, {end}, {rate})")
        schedule.append((start, end, float(rate) * per[rate_unit]))
        expected_start = end
    if not schedule:
        raise ValidationError(f"{where}: empty arrival schedule")
    if schedule[-1][1] > horizon:
        raise ValidationError(
            f"{where}: arrival schedule ends at {schedule[-1][1]}, after the horizon {horizon}"
        )
    return ArrivalSpec(
        schedule=tuple(schedule),
        first_arrival=None if first is None else to_minutes(first),
        max_arrivals=max_arrivals,
    )


def parse_step(raw, where) -> RouteStep:
    if "station" in raw:
        kind, target = StepKind.Station, raw["station"]
    elif "delay" in raw:
        kind, target = StepKind.Delay, raw["delay"]
    else:
        raise ValidationError(f"{where}: route step needs a station or a delay")
    return RouteStep(kind, target, Distribution.parse(_require(raw, "process", where)))


def parse_measure(raw) -> MeasureSpec:
    name = _require(raw, "name", "measure")
    where = f"measure {name}"
    kind = _enum(MeasureKind, _require(raw, "kind", where), where)
    observe = _enum(Observable, _require(raw, "observe", where), where)
    if observe not in KIND_OBSERVABLES[kind]:
        raise ValidationError(f"{where}: a {kind} measure cannot observe {observe}")
    return MeasureSpec(
        name=name,
        kind=kind,
        observe=observe,
        role=_enum(MeasureRole, raw.get("role", "primary_measure"), where),
        resources=tuple(raw.get("resources", ())),
        utilization=_enum(UtilizationKind, raw.get("utilization", "instantaneous"), where),
    )


def parse_model_config(tree: Dict[str, Any]) -> ModelConfig:
    """Turn a model tree into a validated ModelConfig
    :param tree: dict parsed JSON model file
    :return: ModelConfig
    """
    unknown = sorted(set(tree) - MODEL_KEYS)
    if unknown:
        raise ValidationError(f"model: unknown fields {', '.join(unknown)}")
    kind = _enum(ModelKind, _require(tree, "model_kind", "model"), "model_kind")
    horizon = to_minutes(_require(tree, "horizon", "model"))
    if horizon <= 0:
        raise ValidationError("horizon must be positive")
    stations = tuple(
        StationSpec(
            name=_require(s, "name", "station"),
            resources=tuple(
                parse_resource(r, f"station {s['name']}")
                for r in _require(s, "resources", f"station {s['name']}")
            ),
        )
        for s in _require(tree, "stations", "model")
    )
    entity_types = tuple(
        EntityType(
            name=_require(t, "name", "entity type"),
            mix=float(t.get("mix", 1.0)),
            route=tuple(
                parse_step(step, f"entity type {t['name']}")
                for step in _require(t, "route", f"entity type {t['name']}")
            ),
        )
        for t in _require(tree, "entity_types", "model")
    )
    gate = None
    if tree.get("gate"):
        gate = parse_resource(tree["gate"], "gate")
    model_config = ModelConfig(
        kind=kind,
        name=tree.get("name", str(kind)),
        horizon=horizon,
        stop_rule=_enum(StopRule, tree.get("stop_rule", "at_horizon"), "stop_rule"),
        arrivals=parse_arrivals(_require(tree, "arrivals", "model"), horizon),
        entity_types=entity_types,
        stations=stations,
        measures=tuple(parse_measure(m) for m in _require(tree, "measures", "model")),
        gate=gate,
        type_source=tree.get("type_source", "routing.type"),
        transfer_time=to_minutes(tree.get("transfer_time", 0.0)),
        warm_up=to_minutes(tree.get("warm_up", config.DEFAULT_WARM_UP)),
        strict_benchmark=_strict_flag(tree),
        max_events=int(tree.get("max_events", config.DEFAULT_MAX_EVENTS)),
        note=tree.get("note", ""),
        settings=dict(tree.get("settings", {})),
    )
    validate_model_config(model_config)
    return model_config


def validate_model_config(model_config: ModelConfig):
    """Checks shared by every model kind"""
    station_names = [s.name for s in model_config.stations]
    if len(set(station_names)) != len(station_names):
        raise ValidationError("station names must be unique")
    resource_names = [r.name for r in model_config.resources]
    if model_config.gate:
        resource_names.append(model_config.gate.name)
    if len(set(resource_names)) != len(resource_names):
        raise ValidationError("resource names must be unique")
    for station in model_config.stations:
        if not station.resources:
            raise ValidationError(f"station {station.name} has no resources")
    if model_config.gate and model_config.gate.failure:
        raise ValidationError("the gate resource cannot fail")
    if not model_config.entity_types:
        raise ValidationError("a model needs at least one entity type")
    mixes = [t.mix for t in model_config.entity_types]
    if any(m <= 0 for m in mixes) or not math.isclose(sum(mixes), 1.0, abs_tol=1e-9):
        raise ValidationError("entity type mix must be positive and sum to 1")
    if model_config.warm_up >= model_config.horizon:
        raise ValidationError("warm-up must end before the horizon")

    names = [m.name for m in model_config.measures]
    if len(set(names)) != len(names):
        raise ValidationError("measure names must be unique")
    control_variates = [
        m for m in model_config.measures if m.role is MeasureRole.ControlVariate
    ]
    if len(control_variates) != 1:
        raise ValidationError(
            f"exactly one measure must be the control variate, found {len(control_variates)}"
        )
    known = set(resource_names)
    for m in model_config.measures:
        unknown = [r for r in m.resources if r not in known]
        if unknown:
            raise ConfigurationError(
                f"measure {m.name} references unknown resources {', '.join(unknown)}"
            )

    graph = route_graph(model_config)
    unvisited = [
        s for s in station_names if not nx.has_path(graph, ROUTE_START, s)
    ]
    for name in unvisited:
        logger.warning("station %s is never visited by any route", name)


def route_graph(model_config: ModelConfig) -> nx.DiGraph:
    """Directed graph create -> stations/delays -> dispose built from the routes"""
    graph = nx.DiGraph()
    graph.add_nodes_from([ROUTE_START, ROUTE_END])
    graph.add_nodes_from(s.name for s in model_config.stations)
    stations = {s.name for s in model_config.stations}
    for entity_type in model_config.entity_types:
        previous = ROUTE_START
        for step in entity_type.route:
            if step.kind is StepKind.Station:
                if step.target not in stations:
                    raise ConfigurationError(
                        f"entity type {entity_type.name} routes to unknown station {step.target}"
                    )
                node = step.target
            else:
                if step.target in stations:
                    raise ValidationError(f"delay {step.target} clashes with a station name")
                node = f"delay:{step.target}"
            graph.add_edge(previous, node)
            previous = node
        graph.add_edge(previous, ROUTE_END)
    return graph


def routes_move_forward(model_config: ModelConfig) -> bool:
    """True when no route ever returns to a station it already passed"""
    return nx.is_directed_acyclic_graph(route_graph(model_config))


def read_tree(path) -> Dict[str, Any]:
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as ex:
        raise ValidationError(f"{path}: parse error: {ex}")
