import zlib

import numpy as np


def keyed_rng(seed: int, label: str) -> np.random.Generator:
    """Independent stream derived from a base seed and a component label."""
    key = zlib.crc32(label.encode())
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(key,)))
