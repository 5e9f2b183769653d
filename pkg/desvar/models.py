"""
@file models.py
@brief The benchmark models: manufacturing cells, call centre, cross-dock picking
@details
Each builder takes a parsed ModelConfig, checks the shape that model must
have and returns an immutable Model. Under the strict flag the fixed constants
of each benchmark (13 minute arrivals, 26 trunk lines, 660 minute days,
30 day runs, the 0.8 factor of the newer Cell 3 machine) are pinned; every
other number lives in the shipped .cfg files as a reconstruction default.
"""

import os
from functools import cached_property
from typing import Dict, List, Optional

from desvar import config
from desvar.distributions import DistributionKind
from desvar.errors import ConfigurationError, ValidationError
from desvar.logging import logger
from desvar.model_config import (
    ModelConfig,
    ModelKind,
    ResourceSpec,
    StepKind,
    StopRule,
    apply_overrides,
    parse_model_config,
    read_tree,
    routes_move_forward,
)

ARRIVAL_SOURCE = "arrivals"


class Model:
    """A built model: its configuration plus the derived lookups the kernel needs"""

    def __init__(self, model_config: ModelConfig):
        self.config = model_config

    @property
    def kind(self) -> ModelKind:
        return self.config.kind

    @property
    def name(self) -> str:
        return self.config.name

    @cached_property
    def sources(self) -> List[str]:
        return randomness_sources(self)

    @cached_property
    def resources(self) -> Dict[str, ResourceSpec]:
        resources = {r.name: r for r in self.config.resources}
        if self.config.gate:
            resources[self.config.gate.name] = self.config.gate
        return resources

    def measure_names(self) -> List[str]:
        return [m.name for m in self.config.measures]

    def __getstate__(self):
        # cached_property values are rebuilt on the other side of a pickle
        return {"config": self.config}

    def __setstate__(self, state):
        self.config = state["config"]

    def __repr__(self):
        return f"Model({self.kind}, {self.name!r}, sources={len(self.sources)})"


def randomness_sources(model: Model) -> List[str]:
    """Every named source of randomness, in a stable order
    :param model: Model
    :return: list(str) arrivals, type routing, services, delays, failures/repairs
    """
    cfg = model.config
    sources = [ARRIVAL_SOURCE]
    if len(cfg.entity_types) > 1:
        sources.append(cfg.type_source)
    for station in cfg.stations:
        sources.extend(r.service_source for r in station.resources)
    for entity_type in cfg.entity_types:
        for step in entity_type.route:
            if step.kind is StepKind.Delay and step.delay_source not in sources:
                sources.append(step.delay_source)
    for resource in cfg.resources:
        if resource.failure:
            sources.extend([resource.failure_source, resource.repair_source])
    return sources


def _station(cfg, name):
    for station in cfg.stations:
        if station.name == name:
            return station
    raise ConfigurationError(f"{cfg.kind} model has no station {name}")


def _check_kind(cfg, kind):
    if cfg.kind is not kind:
        raise ValidationError(f"expected a {kind} model, got {cfg.kind}")


def build_manufacturing(cfg: ModelConfig) -> Model:
    """Four cells, three part types, two unequal machines in Cell 3"""
    _check_kind(cfg, ModelKind.Manufacturing)
    if cfg.strict_benchmark:
        if len(cfg.stations) != config.MANUFACTURING_CELLS:
            raise ValidationError(
                f"manufacturing model needs {config.MANUFACTURING_CELLS} cells, "
                f"got {len(cfg.stations)}"
            )
        if len(cfg.entity_types) != config.MANUFACTURING_PART_TYPES:
            raise ValidationError(
                f"manufacturing model needs {config.MANUFACTURING_PART_TYPES} part types, "
                f"got {len(cfg.entity_types)}"
            )
        machines = [len(s.resources) for s in cfg.stations]
        if machines != [1, 1, 2, 1]:
            raise ValidationError(
                f"cells 1, 2 and 4 have one machine and cell 3 two, got {machines}"
            )
        new, old = cfg.stations[2].resources
        if new.multiplier != config.CELL3_NEW_MACHINE_MULTIPLIER or old.multiplier != 1.0:
            raise ValidationError(
                "cell 3 machine multipliers must be "
                f"({config.CELL3_NEW_MACHINE_MULTIPLIER}, 1.0), "
                f"got ({new.multiplier}, {old.multiplier})"
            )
        arrival = cfg.arrivals.interarrival
        if (
            arrival is None
            or arrival.kind is not DistributionKind.Expo
            or arrival.mean != config.MANUFACTURING_ARRIVAL_MEAN
            or cfg.arrivals.first_arrival != 0
        ):
            raise ValidationError(
                f"parts arrive EXPO({config.MANUFACTURING_ARRIVAL_MEAN:g}) "
                "starting at time 0"
            )
        if cfg.horizon != config.BENCHMARK_MONTH_MINUTES:
            raise ValidationError("manufacturing replications last 30 days")
        if not routes_move_forward(cfg):
            raise ValidationError("part routes must only move forward through the cells")
    if any(r.failure is None for r in cfg.resources):
        logger.info("some manufacturing machines have no failure model")
    return Model(cfg)


def build_call_center(cfg: ModelConfig) -> Model:
    """Trunk-line gated call centre with scheduled staff and balking"""
    _check_kind(cfg, ModelKind.CallCenter)
    if cfg.gate is None:
        raise ValidationError("the call centre needs a trunk-line gate resource")
    if not cfg.arrivals.schedule:
        raise ValidationError("call centre arrivals must come from an arrival schedule")
    if cfg.arrivals.schedule_end > cfg.horizon:
        raise ValidationError("the arrival schedule must stop before the horizon")
    if cfg.stop_rule is not StopRule.HorizonThenDrain:
        raise ValidationError("the call centre runs to its horizon and then drains")
    if cfg.strict_benchmark:
        trunks = cfg.gate.capacity
        if not trunks.is_constant or trunks.value_at(0) != config.CALL_CENTER_TRUNKS:
            raise ValidationError(
                f"the call centre has a fixed {config.CALL_CENTER_TRUNKS} trunk lines"
            )
        if cfg.horizon != config.CALL_CENTER_HORIZON:
            raise ValidationError(
                f"call centre replications last {config.CALL_CENTER_HORIZON:g} minutes"
            )
        if len(cfg.entity_types) != 3:
            raise ValidationError("calls split into technical support, sales and order status")
    return Model(cfg)


def build_crossdock(cfg: ModelConfig) -> Model:
    """Order picking with automated dispensers and manual picker groups"""
    _check_kind(cfg, ModelKind.Crossdock)
    automated = _station(cfg, cfg.settings.get("automated_station", "dispensing"))
    manual = _station(cfg, cfg.settings.get("manual_station", "manual"))
    if cfg.strict_benchmark:
        if len(automated.resources) != config.CROSSDOCK_DISPENSERS:
            raise ValidationError(
                f"cross-dock needs {config.CROSSDOCK_DISPENSERS} automated dispensers"
            )
        if len(manual.resources) != config.CROSSDOCK_PICKER_GROUPS:
            raise ValidationError(
                f"cross-dock needs {config.CROSSDOCK_PICKER_GROUPS} manual picker groups"
            )
        if cfg.horizon != config.BENCHMARK_MONTH_MINUTES:
            raise ValidationError("cross-dock replications last 30 days")
        if cfg.stop_rule is not StopRule.AtHorizon:
            raise ValidationError("cross-dock has no terminating condition beyond the horizon")
    multipliers = [r.multiplier for r in manual.resources]
    if len(set(multipliers)) != len(multipliers):
        raise ValidationError("manual picker groups must differ in proficiency")
    arrival = cfg.arrivals.interarrival
    if arrival is None or arrival.kind is not DistributionKind.Expo:
        raise ValidationError("orders arrive with exponential interarrival times")
    for entity_type in cfg.entity_types:
        for step in entity_type.route:
            if step.kind is StepKind.Station and step.process.kind is not DistributionKind.Tria:
                raise ValidationError(
                    f"picking times are triangular, {entity_type.name} uses {step.process}"
                )
    return Model(cfg)


def build_single_queue(cfg: ModelConfig) -> Model:
    """One station, one entity type: the M/M/1 validation model"""
    _check_kind(cfg, ModelKind.SingleQueue)
    if len(cfg.stations) != 1 or len(cfg.entity_types) != 1:
        raise ValidationError("a single queue model has one station and one entity type")
    return Model(cfg)


BUILDERS = {
    ModelKind.Manufacturing: build_manufacturing,
    ModelKind.CallCenter: build_call_center,
    ModelKind.Crossdock: build_crossdock,
    ModelKind.SingleQueue: build_single_queue,
}


def build_model(cfg: ModelConfig) -> Model:
    model = BUILDERS[cfg.kind](cfg)
    logger.debug("built %s", model)
    return model


def data_directory() -> str:
    """Where shipped model and experiment files are found"""
    default = os.path.join(os.path.dirname(__file__), config.PACKAGE_DATA)
    return os.path.expanduser(os.getenv("DESVAR_DATA_DIR", default))


def resolve_path(path: str, relative_to: Optional[str] = None) -> str:
    """Find a model/experiment file: as given, next to relative_to, then in the data dir"""
    candidates = [os.path.expanduser(path)]
    if relative_to:
        candidates.append(os.path.join(os.path.dirname(relative_to), path))
    candidates.append(os.path.join(data_directory(), path))
    for candidate in candidates:
        if os.path.exists(candidate):
            return candidate
    raise ValidationError(f"cannot find {path}")


def load_model(path: str, overrides=None, relative_to: Optional[str] = None) -> Model:
    """Read, override, parse and build a model file"""
    tree = apply_overrides(read_tree(resolve_path(path, relative_to)), overrides)
    return build_model(parse_model_config(tree))
