"""
Named, reproducible random-number streams.

Every random quantity in a run is drawn from a stream keyed by the master
seed and a tuple of labels such as ('channel', drop) or
('noise', drop, slot). Streams are independent of the order in which they
are created, which keeps results identical for any worker count.
"""
import zlib

import numpy as np


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f"stream keys must be non-negative, got {key}")
        return int(key)
    # crc32 is stable across processes, unlike hash()
    return zlib.crc32(str(key).encode('utf-8'))


def stream(seed: int, *keys) -> np.random.Generator:
    """
    Return the generator for the stream identified by (seed, *keys).

    Args:
        seed: master seed of the run
        keys: labels (strings or non-negative ints) naming the stream

    Returns:
        numpy Generator backed by PCG64
    """
    spawn_key = tuple(_key_to_int(k) for k in keys)
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=spawn_key)
    return np.random.Generator(np.random.PCG64(sequence))


def derive_seed(seed: int, *keys) -> int:
    """Derive a plain integer seed for code that needs one (e.g. code construction)."""
    return int(stream(seed, *keys).integers(0, 2 ** 31 - 1))
