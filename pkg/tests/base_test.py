import copy
import json
import os
import shutil
import tempfile
import unittest

from desvar.kernel import Simulation
from desvar.model_config import parse_model_config
from desvar.models import build_model, data_directory
from desvar.streams import VrtScenario, manifest_for_scenario

SMALL_EXPERIMENT = {
    "model": "mm1.cfg",
    "replications": 4,
    "horizon": 400,
    "alpha": 0.05,
    "groups": ["Base", "CRN", "AV", "CV"],
    "measures": ["Time In System", "Number In System", "Server Utilization"],
    "control_variate": "Queue Wait Time",
    "base_seed": 77,
    "compare": {
        "label": "faster server",
        "overrides": [
            {"path": ["entity_types", 0, "route", 0, "process"], "value": "EXPO(0.9)"}
        ],
    },
}

SINGLE_QUEUE = {
    "model_kind": "single_queue",
    "name": "test queue",
    "horizon": 100,
    "arrivals": {"interarrival": "CONST(0)", "first_arrival": 0, "max_arrivals": 2},
    "stations": [{"name": "server", "resources": [{"name": "server", "capacity": 1}]}],
    "entity_types": [
        {"name": "job", "route": [{"station": "server", "process": "CONST(5)"}]}
    ],
    "measures": [
        {"name": "Time In System", "kind": "tally_mean", "observe": "entity_time"},
        {"name": "Number In System", "kind": "time_average", "observe": "wip"},
        {"name": "Server Utilization", "kind": "time_average", "observe": "utilization"},
        {
            "name": "Queue Wait Time",
            "kind": "tally_mean",
            "observe": "wait_time",
            "role": "control_variate",
        },
    ],
}


class BaseTest(unittest.TestCase):
    def data_path(self, name):
        """Path of a shipped model or experiment file"""
        path = os.path.join(data_directory(), name)
        self.assertTrue(os.path.exists(path), path)
        return path

    def queue_tree(self, **changes):
        """Single queue model tree with top-level fields replaced"""
        tree = copy.deepcopy(SINGLE_QUEUE)
        tree.update(copy.deepcopy(changes))
        return tree

    def build(self, tree):
        return build_model(parse_model_config(tree))

    def manifest(self, model, scenario=VrtScenario.CRN, replication=0, seed=1234):
        return manifest_for_scenario(model.sources, scenario, seed, replication)

    def simulate(self, model, scenario=VrtScenario.CRN, replication=0, seed=1234, **kwargs):
        """Run one traced replication, return (simulation, output)"""
        simulation = Simulation(
            model, self.manifest(model, scenario, replication, seed), trace=True, **kwargs
        )
        output = simulation.run()
        return simulation, output

    def temp_dir(self):
        directory = tempfile.mkdtemp(prefix="desvar-test-")
        self.addCleanup(shutil.rmtree, directory, ignore_errors=True)
        return directory

    def experiment_file(self, **changes):
        """Write a short M/M/1 experiment with top-level fields replaced"""
        tree = copy.deepcopy(SMALL_EXPERIMENT)
        tree.update(copy.deepcopy(changes))
        path = os.path.join(self.temp_dir(), "small.experiment")
        with open(path, "w") as f:
            json.dump(tree, f)
        return path
