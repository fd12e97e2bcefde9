import numpy as np


def _sequence(seed: int, indices) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=tuple(int(i) for i in indices))


def derive_rng(seed: int, *indices: int) -> np.random.Generator:
    """
    Independent generator for a (seed, index, ...) tuple.
    Identical tuples always give identical streams regardless of which worker draws them.
    """
    return np.random.default_rng(_sequence(seed, indices))


def derive_seed(seed: int, *indices: int) -> int:
    return int(_sequence(seed, indices).generate_state(1)[0])
