import numpy as np

from desvar.errors import (
    ManifestConflictError,
    UnsynchronizedSourceError,
    ValidationError,
)
from desvar.streams import (
    RandomStream,
    SeedManifest,
    StreamMode,
    VrtScenario,
    derive_seed,
    manifest_for_scenario,
    source_key,
)
from tests.base_test import BaseTest

SOURCES = ["arrivals", "routing.type", "service.cell1", "failure.cell1", "repair.cell1"]


class TestRandomStream(BaseTest):
    def test_same_seed_same_sequence(self):
        """Two streams with one seed produce identical draws"""
        # Setup
        a = RandomStream(42)
        b = RandomStream(42)

        # Execute
        draws_a = [a.next_uniform() for _ in range(100)]
        draws_b = [b.next_uniform() for _ in range(100)]

        # Assert
        self.assertEqual(draws_a, draws_b)
        self.assertEqual(a.draw_count, 100)
        self.assertTrue(all(0.0 < u < 1.0 for u in draws_a))

    def test_different_seeds_differ(self):
        # Setup
        a = RandomStream(1)
        b = RandomStream(2)

        # Execute / Assert
        self.assertNotEqual(
            [a.next_uniform() for _ in range(10)], [b.next_uniform() for _ in range(10)]
        )

    def test_antithetic_complements_exactly(self):
        """u + u' is exactly 1 draw by draw"""
        # Setup
        direct = RandomStream(7)
        antithetic = RandomStream(7, StreamMode.Antithetic)

        # Execute / Assert
        for _ in range(1000):
            self.assertEqual(direct.next_uniform() + antithetic.next_uniform(), 1.0)

    def test_uniform_range_and_mean(self):
        # Setup
        stream = RandomStream(42)
        n = 1_000_000

        # Execute
        draws = np.array([stream.next_uniform() for _ in range(n)])

        # Assert
        self.assertTrue(np.all((draws > 0.0) & (draws < 1.0)))
        self.assertAlmostEqual(draws.mean(), 0.5, delta=0.002)
        self.assertEqual(stream.draw_count, n)

    def test_distinct_seeds_uncorrelated(self):
        # Setup
        a = RandomStream(1)
        b = RandomStream(2)

        # Execute
        x = [a.next_uniform() for _ in range(100_000)]
        y = [b.next_uniform() for _ in range(100_000)]

        # Assert
        self.assertLess(abs(np.corrcoef(x, y)[0, 1]), 0.02)

    def test_bad_seeds(self):
        for seed in (-1, 2**64, 1.5, "12", True):
            with self.subTest(seed=seed):
                with self.assertRaises(ValidationError):
                    RandomStream(seed)


class TestSeedDerivation(BaseTest):
    def test_derive_seed_is_deterministic(self):
        # Execute
        first = derive_seed(123, 1, 2, 3)
        again = derive_seed(123, 1, 2, 3)

        # Assert
        self.assertEqual(first, again)
        self.assertNotEqual(first, derive_seed(123, 1, 2, 4))
        self.assertNotEqual(first, derive_seed(124, 1, 2, 3))
        self.assertTrue(0 <= first < 2**64)

    def test_source_key_is_stable(self):
        """Keys come from a digest, not the salted builtin hash"""
        self.assertEqual(source_key("arrivals"), source_key("arrivals"))
        self.assertNotEqual(source_key("arrivals"), source_key("service.cell1"))
        self.assertLess(source_key("arrivals"), 2**32)


class TestManifestForScenario(BaseTest):
    def test_base_shares_one_seed(self):
        # Execute
        manifest = manifest_for_scenario(SOURCES, VrtScenario.Base, 99, 0)

        # Assert
        self.assertTrue(manifest.shared)
        self.assertEqual(len(manifest.seeds()), 1)
        self.assertEqual(manifest.sources, SOURCES)

    def test_crn_dedicated_seeds(self):
        # Execute
        manifest = manifest_for_scenario(SOURCES, VrtScenario.CRN, 99, 0)

        # Assert
        self.assertFalse(manifest.shared)
        self.assertEqual(len(manifest.seeds()), len(SOURCES))
        self.assertEqual(manifest.mode, StreamMode.Direct)

    def test_crn_seeds_do_not_depend_on_other_sources(self):
        """Adding a source leaves the other sources' seeds alone"""
        # Execute
        fewer = manifest_for_scenario(SOURCES[:2], VrtScenario.CRN, 99, 3)
        more = manifest_for_scenario(SOURCES, VrtScenario.CRN, 99, 3)

        # Assert
        for name in SOURCES[:2]:
            self.assertEqual(fewer.entries[name], more.entries[name])

    def test_av_pairs(self):
        """Replications 2k and 2k+1 share seeds, the odd one is antithetic"""
        # Execute
        first = manifest_for_scenario(SOURCES, VrtScenario.AV, 99, 2)
        second = manifest_for_scenario(SOURCES, VrtScenario.AV, 99, 3)
        next_pair = manifest_for_scenario(SOURCES, VrtScenario.AV, 99, 4)

        # Assert
        self.assertEqual(first.entries, second.entries)
        self.assertEqual(first.mode, StreamMode.Direct)
        self.assertEqual(second.mode, StreamMode.Antithetic)
        self.assertTrue(first.seeds().isdisjoint(next_pair.seeds()))

    def test_groups_are_disjoint(self):
        # Setup
        seeds = {}

        # Execute
        for scenario in VrtScenario:
            seeds[scenario] = set()
            for r in range(10):
                seeds[scenario] |= manifest_for_scenario(SOURCES, scenario, 5, r).seeds()

        # Assert
        scenarios = list(VrtScenario)
        for i, a in enumerate(scenarios):
            for b in scenarios[i + 1 :]:
                with self.subTest(a=a, b=b):
                    self.assertTrue(seeds[a].isdisjoint(seeds[b]))

    def test_namespace_changes_seed_space(self):
        # Execute
        plain = manifest_for_scenario(SOURCES, VrtScenario.CRN, 5, 0)
        other = manifest_for_scenario(SOURCES, VrtScenario.CRN, 5, 0, "independent")

        # Assert
        self.assertTrue(plain.seeds().isdisjoint(other.seeds()))

    def test_errors(self):
        data = (
            (["a", "b", "a"], 0, ManifestConflictError),
            ([], 0, ValidationError),
            (["a"], -1, ValidationError),
        )
        for sources, replication, error in data:
            with self.subTest(sources=sources, replication=replication):
                with self.assertRaises(error):
                    manifest_for_scenario(sources, VrtScenario.CRN, 1, replication)


class TestSeedManifest(BaseTest):
    def test_text_round_trip(self):
        # Setup
        manifest = manifest_for_scenario(SOURCES, VrtScenario.AV, 11, 1)

        # Execute
        text = manifest.to_text()
        parsed = SeedManifest.from_text(text)

        # Assert
        self.assertEqual(parsed, manifest)
        self.assertEqual(parsed.mode, StreamMode.Antithetic)
        self.assertEqual(parsed.scenario, VrtScenario.AV)
        self.assertEqual(parsed.replication, 1)
        self.assertIn("# generator_id: ", text)

    def test_file_name(self):
        data = (
            (VrtScenario.CV, 3, "manifests/CV-003.seeds"),
            (VrtScenario.Base, 12, "manifests/Base-012.seeds"),
            (None, 3, None),
        )
        for scenario, replication, expected in data:
            with self.subTest(scenario=scenario):
                # Setup
                manifest = SeedManifest(
                    {"arrivals": 5}, scenario=scenario, replication=replication
                )

                # Execute / Assert
                self.assertEqual(manifest.file_name, expected)

    def test_missing_generator_id(self):
        with self.assertRaises(ValidationError):
            SeedManifest.from_text("arrivals=1\n")

    def test_colliding_seeds(self):
        with self.assertRaises(ManifestConflictError):
            SeedManifest({"a": 1, "b": 1})

    def test_missing_source_is_unsynchronized(self):
        # Setup
        manifest = SeedManifest({"arrivals": 1})

        # Execute / Assert
        with self.assertRaises(UnsynchronizedSourceError):
            manifest.open_streams(["arrivals", "service.server"])
        with self.assertRaises(UnsynchronizedSourceError):
            manifest.open_streams()["service.server"]

    def test_shared_streams_interleave(self):
        """A shared manifest feeds every source from one stream"""
        # Setup
        manifest = SeedManifest({"a": 5, "b": 5}, shared=True)
        streams = manifest.open_streams()
        reference = RandomStream(5)

        # Execute
        first = streams["a"].next_uniform()
        second = streams["b"].next_uniform()

        # Assert
        self.assertEqual(first, reference.next_uniform())
        self.assertEqual(second, reference.next_uniform())
        self.assertEqual(streams.draw_counts(), {"a": 1, "b": 1})
