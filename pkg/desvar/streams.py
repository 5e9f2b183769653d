"""
@file streams.py
@brief Named, reproducible uniform random-number streams
@details
Each source of randomness in a model (an arrival process, a machine's
process times, a failure clock, ...) draws from its own stream. A stream is
fully determined by its seed and its mode, so a replication can be rerun
exactly from the seed manifest written next to every report.

Antithetic streams return 1 - u for the same underlying draws as the direct
stream with the same seed. Because Generator.random() produces multiples of
2**-53, the complement is exact and u + (1 - u) == 1 holds bit for bit.
"""

import hashlib
import os
from enum import Enum
from typing import Dict, Iterable, List, Optional

import numpy as np

from desvar import config
from desvar.errors import (
    ManifestConflictError,
    UnsynchronizedSourceError,
    ValidationError,
)
from desvar.logging import logger

# Smallest non-zero value on the grid Generator.random() draws from. It never
# returns 1.0, so 0.0 is the only value that needs remapping.
UNIFORM_EPSILON = 2.0**-53

MAX_SEED = 2**64 - 1


class StreamMode(Enum):
    Direct = "direct"
    Antithetic = "antithetic"

    def __str__(self):
        return self.value


class VrtScenario(Enum):
    """Group treatments of a variance reduction experiment"""

    Base = "Base"
    CRN = "CRN"
    AV = "AV"
    CV = "CV"

    def __str__(self):
        return self.value


def check_seed(seed):
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ValidationError(f"seed must be an integer, got {seed!r}")
    if not 0 <= int(seed) <= MAX_SEED:
        raise ValidationError(f"seed {seed} is not a 64-bit unsigned integer")
    return int(seed)


class RandomStream:
    """Deterministic uniform source on the open interval (0, 1)"""

    def __init__(self, seed: int, mode: StreamMode = StreamMode.Direct):
        self.seed = check_seed(seed)
        self.mode = mode
        self.draw_count = 0
        self._generator = np.random.Generator(np.random.PCG64DXSM(self.seed))

    def next_uniform(self) -> float:
        u = self._generator.random()
        if u == 0.0:
            u = UNIFORM_EPSILON
        self.draw_count += 1
        if self.mode is StreamMode.Antithetic:
            return 1.0 - u
        return u

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, mode={self.mode}, draws={self.draw_count})"


class SourceStream:
    """View of a stream as seen by one named source

    Base manifests point every source at the same RandomStream. The view
    keeps its own draw count so consumption stays attributable per source.
    """

    def __init__(self, name: str, stream: RandomStream):
        self.name = name
        self.stream = stream
        self.draw_count = 0

    @property
    def seed(self):
        return self.stream.seed

    @property
    def mode(self):
        return self.stream.mode

    def next_uniform(self) -> float:
        self.draw_count += 1
        return self.stream.next_uniform()


def source_key(name: str) -> int:
    """Stable 32-bit key for a string. Python's hash() is salted per process."""
    digest = hashlib.blake2b(name.encode("utf-8"), digest_size=4).digest()
    return int.from_bytes(digest, "big")


def derive_seed(base_seed: int, *keys: int) -> int:
    """Mix a base seed with integer keys into a 64-bit seed
    :param base_seed: int experiment base seed
    :param keys: int spawn key, e.g. (scenario, source, replication)
    :return: int
    """
    sequence = np.random.SeedSequence(entropy=check_seed(base_seed), spawn_key=keys)
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def manifest_name(scenario, replication: int) -> str:
    """Manifest path relative to an output directory"""
    return os.path.join(
        config.MANIFEST_DIRECTORY,
        config.MANIFEST_FILE.format(group=scenario, replication=replication),
    )


class SeedManifest:
    """Complete record of the streams one replication uses"""

    HEADER_FIELDS = ("generator_id", "scenario", "replication", "mode", "shared")

    def __init__(
        self,
        entries: Dict[str, int],
        mode: StreamMode = StreamMode.Direct,
        shared: bool = False,
        scenario: Optional[VrtScenario] = None,
        replication: Optional[int] = None,
        generator_id: str = config.GENERATOR_ID,
    ):
        self.entries = {name: check_seed(seed) for name, seed in entries.items()}
        self.mode = mode
        self.shared = shared
        self.scenario = scenario
        self.replication = replication
        self.generator_id = generator_id
        self._validate()

    def _validate(self):
        for name in self.entries:
            if not name or "=" in name or "\n" in name or name.startswith("#"):
                raise ValidationError(f"invalid source name {name!r}")
        if self.shared:
            if len(set(self.entries.values())) > 1:
                raise ManifestConflictError(
                    "manifest conflict: shared manifest with more than one seed"
                )
        elif len(set(self.entries.values())) != len(self.entries):
            raise ManifestConflictError("manifest conflict: two sources share a seed")

    @property
    def sources(self) -> List[str]:
        return list(self.entries)

    def seeds(self):
        """Distinct seeds used by this manifest"""
        return set(self.entries.values())

    def to_text(self) -> str:
        lines = [
            f"# generator_id: {self.generator_id}",
            f"# scenario: {self.scenario if self.scenario else ''}",
            f"# replication: {'' if self.replication is None else self.replication}",
            f"# mode: {self.mode}",
            f"# shared: {str(self.shared).lower()}",
        ]
        lines.extend(f"{name}={seed}" for name, seed in self.entries.items())
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SeedManifest":
        header = {}
        entries = {}
        for number, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                header[key.strip()] = value.strip()
                continue
            name, sep, value = line.partition("=")
            if not sep:
                raise ValidationError(f"manifest line {number}: expected source=seed")
            name = name.strip()
            if name in entries:
                raise ManifestConflictError(f"manifest conflict: duplicate source {name}")
            try:
                entries[name] = int(value.strip())
            except ValueError:
                raise ValidationError(f"manifest line {number}: bad seed {value!r}")
        if "generator_id" not in header:
            raise ValidationError("manifest is missing its generator_id header")
        scenario = header.get("scenario") or None
        replication = header.get("replication") or None
        return cls(
            entries,
            mode=StreamMode(header.get("mode", "direct")),
            shared=header.get("shared", "false") == "true",
            scenario=VrtScenario(scenario) if scenario else None,
            replication=int(replication) if replication is not None else None,
            generator_id=header["generator_id"],
        )

    def open_streams(self, sources: Optional[Iterable[str]] = None) -> "StreamSet":
        return StreamSet(self, self.sources if sources is None else sources)

    def __eq__(self, other):
        if not isinstance(other, SeedManifest):
            return NotImplemented
        return self.to_text() == other.to_text() and list(self.entries) == list(
            other.entries
        )

    @property
    def file_name(self) -> Optional[str]:
        if self.scenario is None or self.replication is None:
            return None
        return manifest_name(self.scenario, self.replication)

    def __repr__(self):
        return (
            f"SeedManifest(scenario={self.scenario}, replication={self.replication}, "
            f"mode={self.mode}, shared={self.shared}, sources={len(self.entries)})"
        )


class StreamSet:
    """The live streams of one replication, keyed by source name"""

    def __init__(self, manifest: SeedManifest, sources: Iterable[str]):
        self.manifest = manifest
        sources = list(sources)
        missing = [s for s in sources if s not in manifest.entries]
        if missing:
            raise UnsynchronizedSourceError(
                f"unsynchronized source: {', '.join(missing)} not in manifest"
            )
        self._views = {}
        shared = None
        for name in sources:
            if manifest.shared:
                if shared is None:
                    shared = RandomStream(manifest.entries[name], manifest.mode)
                stream = shared
            else:
                stream = RandomStream(manifest.entries[name], manifest.mode)
            self._views[name] = SourceStream(name, stream)

    def __getitem__(self, source: str) -> SourceStream:
        try:
            return self._views[source]
        except KeyError:
            raise UnsynchronizedSourceError(f"unsynchronized source: {source}")

    def __contains__(self, source):
        return source in self._views

    def draw_counts(self) -> Dict[str, int]:
        return {name: view.draw_count for name, view in self._views.items()}


def manifest_for_scenario(
    sources: List[str],
    scenario: VrtScenario,
    base_seed: int,
    replication_index: int,
    namespace: Optional[str] = None,
) -> SeedManifest:
    """Assign seeds to every source for one replication of a scenario group
    :param sources: list(str) source names of the model, in model order
    :param scenario: VrtScenario group treatment
    :param base_seed: int experiment base seed
    :param replication_index: int zero based replication number
    :param namespace: str optional extra key giving an independent seed space
    :return: SeedManifest
    """
    if not sources:
        raise ValidationError("a manifest needs at least one source")
    if replication_index < 0:
        raise ValidationError(f"replication index {replication_index} is negative")
    if len(set(sources)) != len(sources):
        duplicates = sorted({s for s in sources if sources.count(s) > 1})
        raise ManifestConflictError(f"manifest conflict: {', '.join(duplicates)}")

    space = [source_key(str(scenario).lower())]
    if namespace:
        space.append(source_key(namespace))

    mode = StreamMode.Direct
    if scenario is VrtScenario.Base:
        seed = derive_seed(base_seed, *space, replication_index)
        return SeedManifest(
            {name: seed for name in sources},
            shared=True,
            scenario=scenario,
            replication=replication_index,
        )

    stream_index = replication_index
    if scenario is VrtScenario.AV:
        # Pair (2k, 2k+1): the odd member replays the even member's seeds
        stream_index = replication_index - replication_index % 2
        if replication_index % 2:
            mode = StreamMode.Antithetic

    entries = {
        name: derive_seed(base_seed, *space, source_key(name), stream_index)
        for name in sources
    }
    manifest = SeedManifest(
        entries, mode=mode, scenario=scenario, replication=replication_index
    )
    logger.debug("%s", manifest)
    return manifest
