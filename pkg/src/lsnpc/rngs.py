"""Named, independent random streams derived from one experiment seed.

Every stochastic stage (data generation, splitting, corruption, weight init,
batch shuffling, latent noise, ...) pulls from its own stream so that changing
the draw count in one stage never shifts the draws seen by another.  Streams
are derived deterministically from (seed, tag words), so the same seed always
reproduces the same experiment end to end.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["stream", "spawn_seed"]


def _tag_words(tags: tuple) -> tuple[int, ...]:
    words = []
    for tag in tags:
        if isinstance(tag, (int, np.integer)):
            words.append(int(tag) & 0xFFFFFFFF)
        else:
            words.append(zlib.crc32(str(tag).encode("utf-8")))
    return tuple(words)


def stream(seed: int, *tags) -> np.random.Generator:
    """Return a Generator for the stream named by ``tags`` under ``seed``.

    Tags may be strings or small integers (e.g. a sample index).  The same
    (seed, tags) always yields an identical stream; distinct tags yield
    statistically independent streams.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=_tag_words(tags))
    return np.random.Generator(np.random.PCG64(ss))


def spawn_seed(seed: int, *tags) -> int:
    """Derive a child integer seed for stages that seed themselves."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=_tag_words(tags))
    return int(ss.generate_state(1, np.uint64)[0])
