"""
Seeded random streams.

Every random draw in the package comes from a numpy ``PCG64`` generator whose
seed sequence is ``SeedSequence(seed, spawn_key=(stream, *index))``. A stream
is therefore identified by the master seed, a tag naming its purpose (see
``STREAM_*`` in ``masksembles.const``) and an optional index path, e.g. the
row number of a mask. Two streams with different keys are statistically
independent, and a stream never depends on how many values another stream
consumed.
"""
import numpy as np

from masksembles.errors import ValidationError

UINT64_MAX = 2 ** 64 - 1


def check_seed(seed) -> int:
    try:
        seed = int(seed)
    except (TypeError, ValueError) as e:
        raise ValidationError('seed must be an integer (got %r)' % (seed,)) from e
    if not 0 <= seed <= UINT64_MAX:
        raise ValidationError('seed must be a 64-bit unsigned integer (got %d)' % seed)
    return seed


def stream(seed, tag, *index) -> np.random.Generator:
    sequence = np.random.SeedSequence(check_seed(seed), spawn_key=(int(tag),) + tuple(int(i) for i in index))
    return np.random.Generator(np.random.PCG64(sequence))


def derive_seed(seed, tag, *index) -> int:
    """A fresh 64-bit seed for a child computation (a sweep cell, an ensemble member)."""
    sequence = np.random.SeedSequence(check_seed(seed), spawn_key=(int(tag),) + tuple(int(i) for i in index))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])
