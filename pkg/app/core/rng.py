"""Counter-based random streams keyed by (seed, stage, index).

Each backward walk, orbit or probe set owns its own generator, so results do not
depend on how work is split between threads.
"""

import zlib

import numpy as np


def stage_key(stage: str) -> int:
    return zlib.crc32(stage.encode("utf-8"))


def stream(seed: int, stage: str, index: int = 0) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(stage_key(stage), int(index)))
    return np.random.default_rng(seq)


def stream_seed(seed: int, stage: str, index: int = 0) -> int:
    """A 32-bit integer derived from the same key (for scipy samplers that take ints)."""
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(stage_key(stage), int(index)))
    return int(seq.generate_state(1)[0])
