"""
Evaluation of fitted co-clusterings: adjusted Rand index and label-aligned
parameter errors.
"""
import itertools
import math
from typing import Any, Dict, Iterable, List, Sequence, Tuple

import attrs
import numpy as np
import pandas as pd
from sklearn.metrics import adjusted_rand_score
from sklearn.metrics.cluster import contingency_matrix

from blockmix.model import BlockmixError, DimensionMismatchError, Params

DEFAULT_PERMUTATION_CAP = math.factorial(10)


class PartitionLengthError(BlockmixError, ValueError):
    pass


class AlignmentSpaceError(BlockmixError):
    pass


def contingency_table(a, b) -> np.ndarray:
    """Counts of entities per (label in a, label in b); labels need not be contiguous."""
    return np.asarray(contingency_matrix(np.asarray(a).ravel(), np.asarray(b).ravel()), dtype=np.int64)


def ari(a, b) -> float:
    """
    Adjusted Rand index; two partitions that are trivial in the same way (all
    together or all apart) score 1.

    Raises:
        PartitionLengthError: if the partitions differ in length or have fewer than two entries.
    """
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.size != b.size:
        raise PartitionLengthError(f"partitions have different lengths ({a.size} vs {b.size})")
    if a.size < 2:
        raise PartitionLengthError("the adjusted Rand index needs at least two entities")

    return float(adjusted_rand_score(a, b))


@attrs.frozen
class LabelAlignment:
    """``rows[k]`` is the fitted row label matched to true row cluster ``k``; likewise for columns."""

    rows: Tuple[int, ...]
    columns_mu: Tuple[int, ...]
    columns_sigma: Tuple[int, ...]

    def apply(self, theta: Params) -> Params:
        return theta.permuted(self.rows, self.columns_mu, self.columns_sigma)


@attrs.frozen
class ParamError:
    delta_mu: float
    delta_sigma: float
    delta_pi: float
    delta_rho_mu: float
    delta_rho_sigma: float
    alignment: LabelAlignment

    @property
    def total(self) -> float:
        return self.delta_mu + self.delta_sigma + self.delta_pi + self.delta_rho_mu + self.delta_rho_sigma

    def as_dict(self) -> Dict[str, float]:
        return {
            "delta_mu": self.delta_mu,
            "delta_sigma": self.delta_sigma,
            "delta_pi": self.delta_pi,
            "delta_rho_mu": self.delta_rho_mu,
            "delta_rho_sigma": self.delta_rho_sigma,
        }


def _best_column_permutation(block_hat: np.ndarray, block_true: np.ndarray,
                             rho_hat: np.ndarray, rho_true: np.ndarray) -> Tuple[Tuple[int, ...], float, float]:
    """Column permutation minimising block error + proportion error, ties to the earliest permutation."""
    perms = np.array(list(itertools.permutations(range(rho_true.size))))
    block_err = np.abs(block_hat[:, perms] - block_true[:, None, :]).sum(axis=(0, 2))
    rho_err = np.abs(rho_hat[perms] - rho_true).sum(axis=1)
    k = int(np.argmin(block_err + rho_err))
    return tuple(int(v) for v in perms[k]), float(block_err[k]), float(rho_err[k])


def aligned_param_error(theta_hat: Params, theta_true: Params,
                        max_permutations: int = DEFAULT_PERMUTATION_CAP) -> ParamError:
    """
    Sum-of-absolute-errors of every parameter family under the joint label
    permutation minimising their total.

    The total separates into a row-permutation term plus independent
    column-by-means and column-by-variances terms, so for each row permutation
    the two column permutations are optimised separately; the minimum is the
    same as over the full joint space.

    Raises:
        DimensionMismatchError: if the two parameter sets have different specs.
        AlignmentSpaceError: if G! * Lmu! * Lsigma! exceeds ``max_permutations``.
    """
    spec = theta_true.spec
    if theta_hat.spec != spec:
        raise DimensionMismatchError("spec", str(spec), str(theta_hat.spec))
    G, Lmu, Lsigma = spec.as_tuple()
    space = math.factorial(G) * math.factorial(Lmu) * math.factorial(Lsigma)
    if space > max_permutations:
        raise AlignmentSpaceError(
            f"{space} joint label permutations exceed the cap of {max_permutations}; "
            "compute the metric at a reduced spec"
        )

    best = None
    for rows in itertools.permutations(range(G)):
        rows_idx = list(rows)
        delta_pi = float(np.abs(theta_hat.pi[rows_idx] - theta_true.pi).sum())
        mu_perm, delta_mu, delta_rho_mu = _best_column_permutation(
            theta_hat.mu[rows_idx], theta_true.mu, theta_hat.rho_mu, theta_true.rho_mu
        )
        sigma_perm, delta_sigma, delta_rho_sigma = _best_column_permutation(
            theta_hat.sigma2[rows_idx], theta_true.sigma2, theta_hat.rho_sigma, theta_true.rho_sigma
        )
        candidate = ParamError(
            delta_mu=delta_mu,
            delta_sigma=delta_sigma,
            delta_pi=delta_pi,
            delta_rho_mu=delta_rho_mu,
            delta_rho_sigma=delta_rho_sigma,
            alignment=LabelAlignment(tuple(rows), mu_perm, sigma_perm),
        )
        if best is None or candidate.total < best.total:
            best = candidate
    return best


# --- Replicate summaries ---

def summarize_replicates(rows: Iterable[Dict[str, Any]]) -> pd.DataFrame:
    """Mean and standard deviation of every numeric statistic over replicates."""
    frame = pd.DataFrame(list(rows)).select_dtypes(include="number")
    return frame.agg(["mean", "std"]).T


def choice_frequencies(specs: Sequence[Sequence[int]], axes: Sequence[str] = ("G", "Lmu", "Lsigma")) -> pd.DataFrame:
    """How often each cluster count was chosen, one row per axis."""
    chosen = pd.DataFrame([list(s) for s in specs], columns=list(axes))
    counts: List[pd.Series] = [chosen[axis].value_counts().rename(axis) for axis in axes]
    return pd.DataFrame(counts).fillna(0).astype(int).sort_index(axis=1)
