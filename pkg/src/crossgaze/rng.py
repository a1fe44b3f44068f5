"""Named, independent RNG streams derived from a single master seed.

Every source of randomness in a run (weight init, epoch shuffling,
photometric jitter, positive-sample draws, data generation) gets its own
PCG64 generator keyed by (seed, stream id).  Enabling or disabling one
consumer therefore never perturbs the draws seen by the others, which is
what makes branch-disabled and zero-weight training runs bit-identical.
"""

from __future__ import annotations

import numpy as np

# Fixed stream ids; never reuse or reorder (they are part of the
# reproducibility contract).
_STREAMS = {
    "init": 0,
    "shuffle": 1,
    "augment": 2,
    "positive": 3,
    "identity": 4,
    "sample": 5,
    "gradcheck": 6,
    "knncheck": 7,
}


def stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Return the named generator for this seed.

    `extra` ints sub-key the stream, e.g. per-sample generators are
    stream(seed, "sample", index) so generation order is schedule-free.
    """
    try:
        sid = _STREAMS[name]
    except KeyError:
        raise ValueError(f"unknown RNG stream {name!r}") from None
    return np.random.default_rng(np.random.SeedSequence((seed, sid, *extra)))
