"""
Deterministic random streams. Every random draw in the package comes from a
`numpy.random.Generator` derived from the run seed and a path naming the
consumer, so results don't depend on scheduling or worker count.
"""

import zlib

import numpy as np

__all__ = [
    'split',
    'spawn_key'
    ]


def spawn_key(*path):
    """Return the integer spawn key for a path of names and indices"""
    key = []
    for part in path:
        if isinstance(part, (int, np.integer)):
            key.append(int(part))
        else:
            key.append(zlib.crc32(str(part).encode('utf8')))
    return tuple(key)


def split(seed, *path):
    """
    Return an independent generator for `path` under `seed`, e.g.
    `split(seed, 'rc', 'circuit', 17)`.
    """
    if isinstance(seed, np.random.Generator):
        raise TypeError('split needs an integer seed, not a generator')

    sequence = np.random.SeedSequence(int(seed), spawn_key=spawn_key(*path))
    return np.random.default_rng(sequence)
