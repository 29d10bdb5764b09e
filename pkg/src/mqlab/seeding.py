"""Deterministic seed derivation.

Every randomized routine in the package draws from a Philox generator keyed
by (master seed, path), where path is a tuple of ints/strings naming the
consumer ("instance", trial index, ...). Philox is counter-based, so adding
trials never perturbs the streams of earlier ones.
"""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _as_key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    digest = hashlib.sha256(str(part).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def rng_from(seed: int, *path) -> np.random.Generator:
    """Child generator for `path` under master `seed`; stable and collision-safe."""
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK64,
                                spawn_key=tuple(_as_key(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def sample_sign_matrix(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Uniform matrix over {-1,+1}^(rows x cols), float64."""
    return (rng.integers(0, 2, size=(rows, cols)) * 2 - 1).astype(np.float64)


def sample_scaled_sign_vectors(rng: np.random.Generator, count: int, d: int) -> np.ndarray:
    """`count` i.i.d. uniform vectors over (1/sqrt(d)) * {-1,+1}^d."""
    return sample_sign_matrix(rng, count, d) / np.sqrt(d)
