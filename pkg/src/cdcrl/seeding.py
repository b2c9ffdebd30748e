"""Named random substreams derived from one user seed.

Every consumer of randomness asks for its own stream by name so that, e.g.,
adding an evaluation rollout never shifts the minibatch indices.
"""

import numpy as np

STREAMS = {
    "init": 0,
    "batch": 1,
    "policy": 2,
    "env": 3,
    "eval": 4,
    "data": 5,
    "ope": 6,
    "verify": 7,
}


def substream(seed, name, *extra):
    """Return a Generator for stream ``name`` of ``seed``.

    ``extra`` integers further split the stream (an episode index, a step).
    """
    if name not in STREAMS:
        raise KeyError(f"unknown random stream {name!r}")
    entropy = [int(seed), STREAMS[name], *map(int, extra)]
    return np.random.default_rng(np.random.SeedSequence(entropy))
