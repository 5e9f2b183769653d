from desvar.distributions import Distribution
from desvar.errors import (
    CausalityError,
    ConfigurationError,
    RunawayModelError,
    TimeRegressionError,
    UndefinedMeasureError,
    UnsynchronizedSourceError,
)
from desvar.kernel import (
    Calendar,
    EventType,
    Resource,
    Simulation,
    Tally,
    TimeWeighted,
    run_replication,
)
from desvar.model_config import CapacitySchedule, CostRates, ResourceSpec, StopRule
from desvar.streams import SeedManifest, VrtScenario
from tests.base_test import BaseTest


def service_ends(simulation):
    return [e.fire_time for e in simulation.trace if e.action is EventType.ServiceEnd]


class TestCalendar(BaseTest):
    def test_pop_order(self):
        # Setup
        calendar = Calendar()

        # Execute
        calendar.schedule(5, EventType.Arrival, "A")
        calendar.schedule(5, EventType.Arrival, "B")
        calendar.schedule(3, EventType.Arrival, "C")
        order = [calendar.pop().payload for _ in range(3)]

        # Assert
        self.assertEqual(order, ["C", "A", "B"])
        self.assertEqual(calendar.clock, 5)
        self.assertEqual(len(calendar), 0)

    def test_causality(self):
        # Setup
        calendar = Calendar()
        calendar.schedule(5, EventType.Arrival)
        calendar.pop()

        # Execute / Assert
        with self.assertRaises(CausalityError):
            calendar.schedule(4, EventType.Arrival)


class TestAccumulators(BaseTest):
    def test_time_weighted(self):
        data = (
            ([(0, 1), (2, 0)], 4, 0.5),
            ([(0, 7)], 10, 7.0),
            ([(0, 2), (1, 4)], 3, 10 / 3),
        )
        for updates, end, expected in data:
            with self.subTest(updates=updates):
                # Setup
                acc = TimeWeighted()

                # Execute
                for at, value in updates:
                    acc.update(value, at)
                acc.finalize(end)

                # Assert
                self.assertAlmostEqual(acc.average(), expected, places=12)

    def test_time_regression(self):
        # Setup
        acc = TimeWeighted()
        acc.update(1, 5)

        # Execute / Assert
        with self.assertRaises(TimeRegressionError):
            acc.update(0, 4)

    def test_empty(self):
        self.assertIsNone(Tally().mean)
        self.assertIsNone(TimeWeighted().average())

    def test_reset(self):
        # Setup
        acc = TimeWeighted()
        acc.update(4, 0)
        acc.update(2, 5)

        # Execute
        acc.reset(10)
        acc.finalize(20)

        # Assert
        self.assertEqual(acc.average(), 2.0)


class TestResourceCost(BaseTest):
    def test_busy_idle_and_uses(self):
        """2 h busy, 2 h idle at (10, 2) per hour plus 3 uses at 1"""
        # Setup
        spec = ResourceSpec(
            "machine",
            CapacitySchedule.constant(1),
            cost=CostRates.from_hourly(10, 2, 1),
        )
        resource = Resource(spec)

        # Execute
        resource.seize(0)
        resource.release(60)
        resource.seize(60)
        resource.release(100)
        resource.seize(100)
        resource.release(120)
        resource.finalize(240)

        # Assert
        self.assertEqual(resource.uses, 3)
        self.assertAlmostEqual(resource.cost(), 27.0, places=9)
        self.assertAlmostEqual(resource.utilization.average(), 0.5, places=12)


class TestTransact(BaseTest):
    def test_fifo_single_server(self):
        """Two jobs at t=0 on one server with service 5 finish at 5 and 10"""
        # Setup
        model = self.build(self.queue_tree())

        # Execute
        simulation, output = self.simulate(model)

        # Assert
        self.assertEqual(service_ends(simulation), [5.0, 10.0])
        self.assertEqual(output.measures["Time In System"], 7.5)
        self.assertEqual(output.measures["Queue Wait Time"], 2.5)

    def test_two_servers(self):
        # Setup
        tree = self.queue_tree()
        tree["stations"][0]["resources"][0]["capacity"] = 2
        model = self.build(tree)

        # Execute
        simulation, output = self.simulate(model)

        # Assert
        self.assertEqual(service_ends(simulation), [5.0, 5.0])
        self.assertEqual(output.measures["Queue Wait Time"], 0.0)

    def test_capacity_schedule_gates_service(self):
        """Capacity 0 until t=10, then 1: a job arriving at 0 leaves at 12"""
        # Setup
        tree = self.queue_tree()
        tree["arrivals"]["max_arrivals"] = 1
        tree["stations"][0]["resources"][0]["capacity"] = {"schedule": [[0, 0], [10, 1]]}
        tree["entity_types"][0]["route"][0]["process"] = "CONST(2)"
        model = self.build(tree)

        # Execute
        simulation, output = self.simulate(model)

        # Assert
        self.assertEqual(service_ends(simulation), [12.0])
        self.assertEqual(output.measures["Time In System"], 12.0)

    def test_multiplier_scales_service(self):
        # Setup
        tree = self.queue_tree()
        tree["arrivals"]["max_arrivals"] = 1
        tree["stations"][0]["resources"][0]["multiplier"] = 0.8
        model = self.build(tree)

        # Execute
        simulation, _ = self.simulate(model)

        # Assert
        self.assertEqual(service_ends(simulation), [4.0])

    def test_unknown_station(self):
        # Setup
        model = self.build(self.queue_tree())
        simulation = Simulation(model, self.manifest(model))

        # Execute / Assert
        with self.assertRaises(ConfigurationError):
            simulation.transact(None, "nowhere", Distribution.const(1))

    def test_transfer_and_delay_steps(self):
        """A delay step and a transfer time both push the departure out"""
        # Setup
        tree = self.queue_tree(transfer_time=1)
        tree["arrivals"]["max_arrivals"] = 1
        tree["entity_types"][0]["route"].insert(0, {"delay": "greeting", "process": "CONST(3)"})
        model = self.build(tree)

        # Execute
        simulation, output = self.simulate(model)

        # Assert
        self.assertIn("delay.greeting", model.sources)
        self.assertEqual(service_ends(simulation), [10.0])
        self.assertEqual(output.measures["Time In System"], 10.0)


class TestFailures(BaseTest):
    def test_failure_waits_for_piece_then_repairs(self):
        """Failure at 3 while busy: the piece finishes at 5, repair takes 4"""
        # Setup
        tree = self.queue_tree()
        tree["stations"][0]["resources"][0]["failure"] = {
            "uptime": "CONST(3)",
            "downtime": "CONST(4)",
        }
        model = self.build(tree)

        # Execute
        simulation, output = self.simulate(model)

        # Assert
        # Job 1 done at 5, machine down until 9, job 2 done at 14
        self.assertEqual(service_ends(simulation)[:2], [5.0, 14.0])
        self.assertIn("failure.server", model.sources)
        self.assertIn("repair.server", model.sources)


class TestRunReplication(BaseTest):
    def mm1(self, horizon=50000, **changes):
        tree = self.queue_tree(horizon=horizon, **changes)
        tree["arrivals"] = {"interarrival": "EXPO(2)"}
        tree["entity_types"][0]["route"][0]["process"] = "EXPO(1)"
        return self.build(tree)

    def test_no_arrivals(self):
        # Setup
        tree = self.queue_tree()
        tree["arrivals"]["max_arrivals"] = 0
        model = self.build(tree)

        # Execute
        _, output = self.simulate(model)

        # Assert
        self.assertEqual((output.created, output.disposed, output.balked), (0, 0, 0))
        self.assertEqual(output.measures["Server Utilization"], 0.0)
        self.assertEqual(output.measures["Number In System"], 0.0)
        self.assertIsNone(output.measures["Time In System"])
        self.assertEqual(output.undefined, ["Time In System", "Queue Wait Time"])
        with self.assertRaises(UndefinedMeasureError):
            output.value("Time In System")

    def test_mm1_closed_forms(self):
        """Utilization 0.5, queue wait 1 and Little's law on a long run"""
        # Setup
        model = self.mm1()
        utilization, wait, little = [], [], []

        # Execute
        for r in range(3):
            output = run_replication(model, self.manifest(model, replication=r))
            utilization.append(output.value("Server Utilization"))
            wait.append(output.value("Queue Wait Time"))
            little.append(
                output.value("Number In System") / (0.5 * output.value("Time In System"))
            )

        # Assert
        self.assertAlmostEqual(sum(utilization) / 3, 0.5, delta=0.02)
        self.assertAlmostEqual(sum(wait) / 3, 1.0, delta=0.1)
        self.assertAlmostEqual(sum(little) / 3, 1.0, delta=0.05)

    def test_determinism(self):
        # Setup
        model = self.mm1(horizon=2000)
        manifest = self.manifest(model, VrtScenario.Base)

        # Execute
        first = run_replication(model, manifest)
        second = run_replication(model, manifest)

        # Assert
        self.assertEqual(first, second)
        self.assertGreater(first.created, 0)

    def test_conservation_and_ordering(self):
        for scenario in VrtScenario:
            with self.subTest(scenario=scenario):
                # Setup
                model = self.mm1(horizon=3000)

                # Execute
                simulation, output = self.simulate(model, scenario)

                # Assert
                self.assertEqual(
                    output.created, output.disposed + output.in_system + output.balked
                )
                keys = [(e.fire_time, e.sequence) for e in simulation.trace]
                self.assertEqual(keys, sorted(keys))
                self.assertLessEqual(output.measures["Server Utilization"], 1.0)

    def test_missing_source(self):
        # Setup
        model = self.mm1(horizon=100)
        manifest = SeedManifest({"arrivals": 1})

        # Execute / Assert
        with self.assertRaises(UnsynchronizedSourceError):
            run_replication(model, manifest)

    def test_runaway_guard(self):
        # Setup
        model = self.mm1(horizon=10000, max_events=100)

        # Execute / Assert
        with self.assertRaises(RunawayModelError):
            run_replication(model, self.manifest(model))

    def test_drain_finishes_work(self):
        """Draining runs past the horizon until the system is empty"""
        # Setup
        model = self.mm1(horizon=500)

        # Execute
        output = run_replication(
            model, self.manifest(model), stop_rule=StopRule.HorizonThenDrain
        )

        # Assert
        self.assertEqual(output.in_system, 0)
        self.assertEqual(output.created, output.disposed)
        self.assertGreaterEqual(output.horizon, 500)

    def test_warm_up_resets_statistics(self):
        # Setup
        model = self.mm1(horizon=2000, warm_up=1000)
        plain = self.mm1(horizon=2000)

        # Execute
        warm = run_replication(model, self.manifest(model))
        cold = run_replication(plain, self.manifest(plain))

        # Assert
        self.assertEqual(warm.created, cold.created)
        self.assertNotEqual(
            warm.measures["Time In System"], cold.measures["Time In System"]
        )
