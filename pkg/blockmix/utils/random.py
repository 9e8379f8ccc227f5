"""
Reproducible random streams and categorical sampling.

Every random draw in blockmix comes from a Philox (counter-based) bit
generator whose key is derived from the master seed plus an integer path,
e.g. ``(iteration, stage, attempt)``. A stream therefore depends only on its
path, never on how many numbers other streams consumed, and the same path
gives the same numbers on every platform numpy supports.

Categorical draws come in two forms. Inverse-CDF lookups consume the
``k``-th uniform of one stream for entity ``k``. Gumbel-max draws take one
stream per category, addressed by a caller-supplied category key, so the
noise an entity sees for a category does not depend on the category's
position. In both forms computing the entities in any order (or in parallel
chunks) yields identical samples.
"""
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

MAX_SEED = 2**64 - 1


def check_seed(seed: int) -> int:
    seed = int(seed)
    if seed < 0 or seed > MAX_SEED:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


class StreamFactory:
    """
    Hands out independent ``numpy.random.Generator`` objects keyed by integer paths.

    Args:
        seed (int): master seed, 64-bit unsigned.
    """

    def __init__(self, seed: int):
        self.seed = check_seed(seed)

    def _sequence(self, key: Sequence[int]) -> np.random.SeedSequence:
        return np.random.SeedSequence(entropy=self.seed, spawn_key=tuple(int(k) for k in key))

    def generator(self, *key: int) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(self._sequence(key)))

    def uniforms(self, size: int, *key: int) -> np.ndarray:
        return self.generator(*key).random(size)

    def gumbel_columns(self, size: int, column_keys: Sequence[int], *key: int) -> np.ndarray:
        """Standard Gumbel noise of shape (size, len(column_keys)); column k is stream ``key + (column_keys[k],)``."""
        return np.column_stack([self.generator(*key, k).gumbel(size=size) for k in column_keys])

    def derive_seed(self, *key: int) -> int:
        """A 64-bit child seed for the given path (used to seed independent fits)."""
        lo, hi = self._sequence(key).generate_state(2, dtype=np.uint32)
        return int(lo) | (int(hi) << 32)


def normalize_log_probs(log_weights: np.ndarray) -> np.ndarray:
    """
    Row-wise softmax of unnormalised log weights using max-subtraction.

    Args:
        log_weights: array of shape (m, K).

    Returns:
        np.ndarray: probabilities of shape (m, K), each row summing to 1.
    """
    log_weights = np.atleast_2d(np.asarray(log_weights, dtype=float))
    log_norm = logsumexp(log_weights, axis=1, keepdims=True)
    return np.exp(log_weights - log_norm)


def sample_categorical(probs: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """
    Inverse-CDF draw of one category per row.

    Row ``k`` returns the first index whose cumulative probability exceeds
    ``uniforms[k]``. The cumulative sums are rescaled so the last one is
    exactly 1; a category with zero probability is never returned.
    """
    probs = np.atleast_2d(probs)
    if probs.shape[1] == 1:
        return np.zeros(probs.shape[0], dtype=np.intp)
    cdf = np.cumsum(probs, axis=1)
    cdf = cdf / cdf[:, -1:]
    return (cdf <= uniforms[:, None]).sum(axis=1).astype(np.intp)


def gumbel_max(log_weights: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """
    Gumbel-max draw of one category per row from unnormalised log weights.

    Args:
        log_weights: array of shape (m, K); ``-inf`` marks an impossible category.
        noise: standard Gumbel draws of the same shape.

    Returns:
        np.ndarray: labels of shape (m,).
    """
    log_weights = np.atleast_2d(log_weights)
    return np.argmax(log_weights + noise, axis=1).astype(np.intp)
