"""
@file kernel.py
@brief Terminating discrete-event simulation kernel
@details
One Simulation is one replication: an event calendar ordered by
(fire_time, sequence), entities walking their routes, resources with
capacity schedules and failures, FIFO station queues and the statistics
accumulators the measures are computed from.

Resource semantics:
  - A capacity drop below the busy count lets in-service work finish; new
    seizures wait until busy units fall below the new capacity.
  - A failure lets the pieces in service finish, then the resource is down
    for a sampled repair time. The uptime clock restarts after the repair.
  - Station resources are tried in the order they are listed, so the first
    listed idle resource wins ties.
"""

import bisect
import heapq
import itertools
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from desvar.distributions import Distribution
from desvar.errors import (
    CausalityError,
    ConfigurationError,
    RunawayModelError,
    TimeRegressionError,
    UndefinedMeasureError,
)
from desvar.logging import logger
from desvar.model_config import (
    MeasureSpec,
    Observable,
    ResourceSpec,
    RouteStep,
    StepKind,
    StopRule,
    UtilizationKind,
)
from desvar.models import ARRIVAL_SOURCE, Model
from desvar.streams import SeedManifest


class EventType(Enum):
    Arrival = "arrival"
    StepStart = "step_start"
    ServiceEnd = "service_end"
    DelayEnd = "delay_end"
    CapacityChange = "capacity_change"
    Failure = "failure"
    RepairEnd = "repair_end"
    WarmUp = "warm_up"

    def __str__(self):
        return self.value


@dataclass(order=True)
class Event:
    fire_time: float
    sequence: int
    action: EventType = field(compare=False)
    payload: Any = field(compare=False, default=None)


class Calendar:
    """Future event list. Ties on fire_time pop in insertion order."""

    def __init__(self):
        self.clock = 0.0
        self._queue: List[Event] = []
        self._sequence = itertools.count()

    def schedule(self, fire_time: float, action: EventType, payload=None) -> Event:
        if fire_time < self.clock:
            raise CausalityError(
                f"causality violation: {action} at {fire_time} is before clock {self.clock}"
            )
        event = Event(fire_time, next(self._sequence), action, payload)
        heapq.heappush(self._queue, event)
        return event

    def pop(self) -> Event:
        event = heapq.heappop(self._queue)
        self.clock = event.fire_time
        return event

    def peek(self) -> Optional[Event]:
        return self._queue[0] if self._queue else None

    def __len__(self):
        return len(self._queue)


class Tally:
    """Average over discrete observations"""

    def __init__(self):
        self.sum = 0.0
        self.count = 0

    def record(self, value: float):
        self.sum += value
        self.count += 1

    @property
    def mean(self) -> Optional[float]:
        """None when nothing was observed"""
        if self.count == 0:
            return None
        return self.sum / self.count

    def reset(self):
        self.sum = 0.0
        self.count = 0


class TimeWeighted:
    """Time average of a piecewise-constant quantity"""

    def __init__(self, value: float = 0.0, at: float = 0.0):
        self.integral = 0.0
        self.last_value = value
        self.last_time = at
        self.start = at

    def update(self, value: float, at: float):
        """Close the current piece at `at` and continue with value"""
        if at < self.last_time:
            raise TimeRegressionError(
                f"time-persistent update at {at} is before {self.last_time}"
            )
        self.integral += self.last_value * (at - self.last_time)
        self.last_value = value
        self.last_time = at

    def finalize(self, at: float):
        self.update(self.last_value, at)

    @property
    def span(self) -> float:
        return self.last_time - self.start

    def average(self) -> Optional[float]:
        if self.span <= 0:
            return None
        return self.integral / self.span

    def reset(self, at: float):
        self.update(self.last_value, at)
        self.integral = 0.0
        self.start = at


@dataclass
class Entity:
    id: int
    type_index: int
    created_at: float
    route: Tuple[RouteStep, ...]
    route_position: int = 0
    attributes: Dict[str, float] = field(default_factory=dict)
    wait_time: float = 0.0
    holds_gate: bool = False


class Resource:
    """Runtime state of a resource"""

    def __init__(self, spec: ResourceSpec, station: Optional["Station"] = None):
        self.spec = spec
        self.name = spec.name
        self.station = station
        self.capacity = spec.capacity.value_at(0.0)
        self.busy = 0
        self.up = True
        self.failing = False
        self.uses = 0
        self.busy_time = TimeWeighted(0)
        self.scheduled_time = TimeWeighted(self.capacity)
        self.utilization = TimeWeighted(0.0)

    @property
    def available_capacity(self) -> int:
        return self.capacity if self.up else 0

    @property
    def free_units(self) -> int:
        if not self.up or self.failing:
            return 0
        return max(0, self.capacity - self.busy)

    def _instantaneous(self) -> float:
        capacity = self.available_capacity
        if capacity == 0:
            return 1.0 if self.busy else 0.0
        return min(1.0, self.busy / capacity)

    def record(self, now: float):
        self.busy_time.update(self.busy, now)
        self.scheduled_time.update(self.capacity, now)
        self.utilization.update(self._instantaneous(), now)

    def seize(self, now: float):
        self.busy += 1
        self.uses += 1
        self.record(now)

    def release(self, now: float):
        self.busy -= 1
        self.record(now)

    def set_capacity(self, capacity: int, now: float):
        self.capacity = capacity
        self.record(now)

    def reset_statistics(self, now: float):
        for acc in (self.busy_time, self.scheduled_time, self.utilization):
            acc.reset(now)
        self.uses = 0

    def finalize(self, now: float):
        self.record(now)

    @property
    def busy_minutes(self) -> float:
        return self.busy_time.integral

    @property
    def idle_minutes(self) -> float:
        return max(0.0, self.scheduled_time.integral - self.busy_time.integral)

    def cost(self) -> float:
        rates = self.spec.cost
        return (
            self.busy_minutes * rates.busy_per_minute
            + self.idle_minutes * rates.idle_per_minute
            + self.uses * rates.per_use
        )


class Station:
    def __init__(self, name: str):
        self.name = name
        self.resources: List[Resource] = []
        self.queue = deque()

    def free_resource(self) -> Optional[Resource]:
        for resource in self.resources:
            if resource.free_units:
                return resource
        return None


@dataclass
class ReplicationOutput:
    measures: Dict[str, Optional[float]]
    manifest: SeedManifest
    horizon: float
    created: int = 0
    disposed: int = 0
    balked: int = 0
    in_system: int = 0
    events: int = 0
    draw_counts: Dict[str, int] = field(default_factory=dict)

    @property
    def undefined(self) -> List[str]:
        return [name for name, value in self.measures.items() if value is None]

    def value(self, name: str) -> float:
        value = self.measures[name]
        if value is None:
            where = f"replication {self.manifest.replication} of {self.manifest.scenario}"
            if self.manifest.file_name:
                where += f" ({self.manifest.file_name})"
            raise UndefinedMeasureError(f"measure {name} is undefined in {where}")
        return value


class Simulation:
    """One replication of a model under one seed manifest"""

    def __init__(
        self,
        model: Model,
        manifest: SeedManifest,
        horizon: Optional[float] = None,
        stop_rule: Optional[StopRule] = None,
        trace: bool = False,
    ):
        self.model = model
        self.config = model.config
        self.manifest = manifest
        self.horizon = self.config.horizon if horizon is None else horizon
        self.stop_rule = self.config.stop_rule if stop_rule is None else stop_rule
        self.streams = manifest.open_streams(model.sources)
        self.calendar = Calendar()

        self.stations: Dict[str, Station] = {}
        self.resources: Dict[str, Resource] = {}
        for spec in self.config.stations:
            station = Station(spec.name)
            for resource_spec in spec.resources:
                resource = Resource(resource_spec, station)
                station.resources.append(resource)
                self.resources[resource.name] = resource
            self.stations[spec.name] = station
        self.gate = None
        if self.config.gate:
            self.gate = Resource(self.config.gate)
            self.resources[self.gate.name] = self.gate

        self.created = 0
        self.disposed = 0
        self.balked = 0
        self.in_system = 0
        self.wip = TimeWeighted(0)
        self.entity_time = Tally()
        self.wait_time = Tally()
        self.events_processed = 0
        self.trace: Optional[List[Event]] = [] if trace else None
        self._ids = itertools.count(1)
        self._mix = list(itertools.accumulate(t.mix for t in self.config.entity_types))
        self._handlers = {
            EventType.Arrival: self._on_arrival,
            EventType.StepStart: self._on_step_start,
            EventType.ServiceEnd: self._on_service_end,
            EventType.DelayEnd: self._on_delay_end,
            EventType.CapacityChange: self._on_capacity_change,
            EventType.Failure: self._on_failure,
            EventType.RepairEnd: self._on_repair_end,
            EventType.WarmUp: self._on_warm_up,
        }

    @property
    def now(self) -> float:
        return self.calendar.clock

    def run(self) -> ReplicationOutput:
        self._start()
        end = self._loop()
        return self._finish(end)

    def _start(self):
        arrivals = self.config.arrivals
        if arrivals.max_arrivals != 0:
            first = arrivals.first_arrival
            if first is None:
                first = arrivals.next_arrival(0.0, self.streams[ARRIVAL_SOURCE])
            self._schedule_arrival(first)
        for resource in self.resources.values():
            self._schedule_capacity_change(resource)
            if resource.spec.failure:
                self._schedule_failure(resource)
        if self.config.warm_up > 0:
            self.calendar.schedule(self.config.warm_up, EventType.WarmUp)

    def _loop(self) -> float:
        drain = self.stop_rule is StopRule.HorizonThenDrain
        while True:
            event = self.calendar.peek()
            if event is None:
                if drain and self.in_system > 0:
                    raise RunawayModelError(
                        f"runaway model: nothing left to happen but {self.in_system} "
                        "entities never leave"
                    )
                return max(self.horizon, self.now)
            if event.fire_time > self.horizon and (not drain or self.in_system == 0):
                return max(self.horizon, self.now)
            self.calendar.pop()
            self.events_processed += 1
            if self.events_processed > self.config.max_events:
                raise RunawayModelError(
                    f"runaway model: more than {self.config.max_events} events "
                    f"at clock {self.now}"
                )
            if self.trace is not None:
                self.trace.append(event)
            self._handlers[event.action](event)

    def _finish(self, end: float) -> ReplicationOutput:
        self.wip.finalize(end)
        for resource in self.resources.values():
            resource.finalize(end)
        output = ReplicationOutput(
            measures=finalize_measures(self),
            manifest=self.manifest,
            horizon=end,
            created=self.created,
            disposed=self.disposed,
            balked=self.balked,
            in_system=self.in_system,
            events=self.events_processed,
            draw_counts=self.streams.draw_counts(),
        )
        logger.debug(
            "replication %s/%s done at %.3f after %d events",
            self.manifest.scenario,
            self.manifest.replication,
            end,
            self.events_processed,
        )
        return output

    def _schedule_arrival(self, fire_time: Optional[float]):
        # Nothing is created past the horizon
        if fire_time is None or fire_time > self.horizon:
            return
        self.calendar.schedule(fire_time, EventType.Arrival)

    def _schedule_capacity_change(self, resource: Resource):
        next_change = resource.spec.capacity.next_change(self.now)
        if next_change is not None:
            self.calendar.schedule(next_change, EventType.CapacityChange, resource)

    def _schedule_failure(self, resource: Resource):
        uptime = resource.spec.failure.uptime.sample(
            self.streams[resource.spec.failure_source]
        )
        self.calendar.schedule(self.now + uptime, EventType.Failure, resource)

    def _choose_type(self) -> int:
        if len(self._mix) == 1:
            return 0
        u = self.streams[self.config.type_source].next_uniform()
        return min(bisect.bisect_left(self._mix, u), len(self._mix) - 1)

    def _on_arrival(self, event: Event):
        type_index = self._choose_type()
        entity = Entity(
            id=next(self._ids),
            type_index=type_index,
            created_at=self.now,
            route=self.config.entity_types[type_index].route,
        )
        self.created += 1

        max_arrivals = self.config.arrivals.max_arrivals
        if max_arrivals is None or self.created < max_arrivals:
            self._schedule_arrival(
                self.config.arrivals.next_arrival(self.now, self.streams[ARRIVAL_SOURCE])
            )

        if self.gate is not None:
            if not self.gate.free_units:
                self.balked += 1
                return
            self.gate.seize(self.now)
            entity.holds_gate = True

        self.in_system += 1
        self.wip.update(self.in_system, self.now)
        self._advance(entity)

    def _advance(self, entity: Entity):
        if entity.route_position >= len(entity.route):
            self._dispose(entity)
        elif self.config.transfer_time > 0:
            self.calendar.schedule(
                self.now + self.config.transfer_time, EventType.StepStart, entity
            )
        else:
            self._start_step(entity)

    def _on_step_start(self, event: Event):
        self._start_step(event.payload)

    def _start_step(self, entity: Entity):
        step = entity.route[entity.route_position]
        if step.kind is StepKind.Delay:
            delay = step.process.sample(self.streams[step.delay_source])
            self.calendar.schedule(self.now + delay, EventType.DelayEnd, entity)
        else:
            self.transact(entity, step.target, step.process)

    def transact(self, entity: Entity, station_name: str, service: Distribution):
        """Seize a unit at a station or join its FIFO queue"""
        station = self.stations.get(station_name)
        if station is None:
            raise ConfigurationError(f"unknown resource {station_name}")
        resource = None if station.queue else station.free_resource()
        if resource is not None:
            self._begin_service(entity, resource, service)
        else:
            entity.attributes["queue_entered"] = self.now
            station.queue.append((entity, service))

    def _begin_service(self, entity: Entity, resource: Resource, service: Distribution):
        resource.seize(self.now)
        entity.attributes["service_started"] = self.now
        delay = service.sample(self.streams[resource.spec.service_source])
        self.calendar.schedule(
            self.now + delay * resource.spec.multiplier,
            EventType.ServiceEnd,
            (entity, resource),
        )

    def _dispatch(self, station: Station):
        while station.queue:
            resource = station.free_resource()
            if resource is None:
                return
            entity, service = station.queue.popleft()
            entity.wait_time += self.now - entity.attributes["queue_entered"]
            self._begin_service(entity, resource, service)

    def _on_service_end(self, event: Event):
        entity, resource = event.payload
        resource.release(self.now)
        if resource.failing and resource.busy == 0:
            self._go_down(resource)
        entity.route_position += 1
        self._dispatch(resource.station)
        self._advance(entity)

    def _on_delay_end(self, event: Event):
        entity = event.payload
        entity.route_position += 1
        self._advance(entity)

    def _dispose(self, entity: Entity):
        if entity.holds_gate:
            self.gate.release(self.now)
        self.in_system -= 1
        self.disposed += 1
        self.wip.update(self.in_system, self.now)
        self.entity_time.record(self.now - entity.created_at)
        self.wait_time.record(entity.wait_time)

    def _on_capacity_change(self, event: Event):
        resource = event.payload
        resource.set_capacity(resource.spec.capacity.value_at(self.now), self.now)
        self._schedule_capacity_change(resource)
        if resource.station is not None:
            self._dispatch(resource.station)

    def _on_failure(self, event: Event):
        resource = event.payload
        resource.failing = True
        if resource.busy == 0:
            self._go_down(resource)

    def _go_down(self, resource: Resource):
        resource.failing = False
        resource.up = False
        resource.record(self.now)
        repair = resource.spec.failure.downtime.sample(
            self.streams[resource.spec.repair_source]
        )
        self.calendar.schedule(self.now + repair, EventType.RepairEnd, resource)

    def _on_repair_end(self, event: Event):
        resource = event.payload
        resource.up = True
        resource.record(self.now)
        self._schedule_failure(resource)
        self._dispatch(resource.station)

    def _on_warm_up(self, event: Event):
        self.entity_time.reset()
        self.wait_time.reset()
        self.wip.reset(self.now)
        for resource in self.resources.values():
            resource.reset_statistics(self.now)


def _measure_resources(simulation: Simulation, measure: MeasureSpec) -> List[Resource]:
    if measure.resources:
        return [simulation.resources[name] for name in measure.resources]
    return [r for station in simulation.stations.values() for r in station.resources]


def _utilization(simulation: Simulation, measure: MeasureSpec) -> Optional[float]:
    resources = _measure_resources(simulation, measure)
    if measure.utilization is UtilizationKind.Scheduled:
        scheduled = sum(r.scheduled_time.integral for r in resources)
        if scheduled <= 0:
            return None
        return sum(r.busy_time.integral for r in resources) / scheduled
    averages = [r.utilization.average() for r in resources]
    if not averages or any(a is None for a in averages):
        return None
    return sum(averages) / len(averages)


def finalize_measures(simulation: Simulation) -> Dict[str, Optional[float]]:
    """Compute every registered measure from the finalized accumulators.
    Measures without observations come back as None, never as 0.
    """
    measures = {}
    for measure in simulation.config.measures:
        if measure.observe is Observable.EntityTime:
            value = simulation.entity_time.mean
        elif measure.observe is Observable.WaitTime:
            value = simulation.wait_time.mean
        elif measure.observe is Observable.Wip:
            value = simulation.wip.average()
        elif measure.observe is Observable.Utilization:
            value = _utilization(simulation, measure)
        elif measure.observe is Observable.Cost:
            value = sum(r.cost() for r in _measure_resources(simulation, measure))
        else:
            value = float(simulation.balked)
        measures[measure.name] = value
    return measures


def run_replication(
    model: Model,
    manifest: SeedManifest,
    horizon: Optional[float] = None,
    stop_rule: Optional[StopRule] = None,
) -> ReplicationOutput:
    """Run one replication; the output is a function of (model, horizon, manifest)"""
    return Simulation(model, manifest, horizon, stop_rule).run()
