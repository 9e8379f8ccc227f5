"""
SEM-Gibbs estimation of the parameter-wise Gaussian latent block model.

One sweep draws the row partition, then the column partition by means,
then the column partition by variances from their full conditionals, and
finishes with the closed-form M-step. After ``burn_in`` sweeps the
parameters of the next ``iterations`` sweeps are averaged; the final
partitions are the most frequent labels over ``final_partition_runs``
SE sweeps run from the last chain state at the averaged parameters.

Every conditional draw is a Gumbel-max draw whose noise streams are keyed
by cluster identity (the smallest member index) rather than by label, so
relabelling the starting partitions relabels the whole chain and leaves
every score unchanged.

With ``tied=True`` the two column partitions are constrained to be equal
and drawn once per sweep, which is the classical single-partition block
model (see ``blockmix.baseline``).
"""
import enum
import logging
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import attrs
import numpy as np
import pandas as pd
from sklearn.cluster import KMeans

from blockmix.model import (
    BlockmixError,
    DataMatrix,
    ModelSpec,
    ModelSpecError,
    Params,
    Partitions,
    VARIANCE_FLOOR,
    block_logdensity,
    complete_data_loglik,
    complete_data_loglik_traditional,
)
from blockmix.utils.log_helper import BasicLogger
from blockmix.utils.random import StreamFactory, check_seed, gumbel_max, normalize_log_probs, sample_categorical

_logger = BasicLogger(logger_name="blockmix.sem")

AXES = ("rows", "columns_mu", "columns_sigma")

# stream path components: (phase, sweep, stage, attempt)
PHASE_INIT, PHASE_CHAIN, PHASE_FINAL = 0, 1, 2
STAGE_ROWS, STAGE_COL_MU, STAGE_COL_SIGMA = 0, 1, 2


class EmptyClusterError(BlockmixError):
    """An M-step was asked to estimate a cluster that has no members."""

    def __init__(self, axis: str, cluster: int):
        self.axis = axis
        self.cluster = cluster
        super().__init__(f"cluster {cluster} on axis '{axis}' is empty")


class DegenerateFitError(BlockmixError):
    pass


class InternalSamplingError(BlockmixError):
    pass


class InitMethod(str, enum.Enum):
    RANDOM_PARTITIONS = "random"
    KMEANS_ROWS = "kmeans"


def _non_negative(instance, attribute, value):
    if int(value) < 0:
        raise ValueError(f"{attribute.name} must be >= 0, got {value}")


def _at_least_one(instance, attribute, value):
    if int(value) < 1:
        raise ValueError(f"{attribute.name} must be >= 1, got {value}")


@attrs.frozen
class SemConfig:
    """Run settings of one SEM-Gibbs chain."""

    burn_in: int = attrs.field(default=20, converter=int, validator=_non_negative)
    iterations: int = attrs.field(default=100, converter=int, validator=_at_least_one)
    final_partition_runs: int = attrs.field(default=20, converter=int, validator=_at_least_one)
    seed: int = attrs.field(default=0, converter=check_seed)
    init: InitMethod = attrs.field(default=InitMethod.RANDOM_PARTITIONS, converter=InitMethod)
    max_resample_attempts: int = attrs.field(default=50, converter=int, validator=_non_negative)
    kmeans_iterations: int = attrs.field(default=10, converter=int, validator=_at_least_one)
    on_empty: str = attrs.field(default="reassign", validator=attrs.validators.in_(("reassign", "raise")))
    variance_floor: float = attrs.field(default=VARIANCE_FLOOR, converter=float)

    def with_seed(self, seed: int) -> "SemConfig":
        return attrs.evolve(self, seed=seed)

    def as_dict(self) -> Dict[str, Any]:
        out = attrs.asdict(self)
        out["init"] = self.init.value
        return out


def _tail_mean(stack: np.ndarray) -> np.ndarray:
    return stack[0] + (stack - stack[0]).mean(axis=0)


@attrs.frozen(eq=False)
class ChainTrace:
    """Per-sweep parameter snapshots and the complete-data log-likelihood of each drawn state."""

    iteration: np.ndarray
    pi: np.ndarray
    rho_mu: np.ndarray
    rho_sigma: np.ndarray
    mu: np.ndarray
    sigma2: np.ndarray
    cdll: np.ndarray

    def __len__(self) -> int:
        return int(self.iteration.size)

    @classmethod
    def from_snapshots(cls, thetas: List[Params], cdlls: List[float]) -> "ChainTrace":
        return cls(
            iteration=np.arange(len(thetas)),
            pi=np.stack([t.pi for t in thetas]),
            rho_mu=np.stack([t.rho_mu for t in thetas]),
            rho_sigma=np.stack([t.rho_sigma for t in thetas]),
            mu=np.stack([t.mu for t in thetas]),
            sigma2=np.stack([t.sigma2 for t in thetas]),
            cdll=np.asarray(cdlls, dtype=float),
        )

    def mean_params(self, start: int) -> Params:
        """
        Arithmetic mean of the snapshots from sweep ``start`` on.

        Averages the deviations from the first kept snapshot, so a component
        that never moves is returned unchanged.
        """
        names = ("pi", "rho_mu", "rho_sigma", "mu", "sigma2")
        return Params(*(_tail_mean(getattr(self, name)[start:]) for name in names))

    def to_frame(self) -> pd.DataFrame:
        """One row per sweep: iteration, cdll, then every parameter component (1-based labels)."""
        columns: Dict[str, np.ndarray] = {"iteration": self.iteration, "cdll": self.cdll}
        for name in ("pi", "rho_mu", "rho_sigma"):
            values = getattr(self, name)
            for k in range(values.shape[1]):
                columns[f"{name}_{k + 1}"] = values[:, k]
        for name in ("mu", "sigma2"):
            values = getattr(self, name)
            for g in range(values.shape[1]):
                for k in range(values.shape[2]):
                    columns[f"{name}_{g + 1}_{k + 1}"] = values[:, g, k]
        return pd.DataFrame(columns)


@attrs.frozen(eq=False)
class FitResult:
    theta_hat: Params
    partitions: Partitions
    row_probs: np.ndarray
    col_mu_probs: np.ndarray
    col_sigma_probs: np.ndarray
    cdll: float
    icl_bic: float
    trace: ChainTrace
    spec: ModelSpec
    seed: int
    tied: bool = False
    label_switch_suspected: bool = False

    @property
    def membership_probs(self) -> Dict[str, np.ndarray]:
        return {"rows": self.row_probs, "columns_mu": self.col_mu_probs, "columns_sigma": self.col_sigma_probs}

    def cluster_sizes(self) -> Dict[str, List[int]]:
        G, Lmu, Lsigma = self.spec.as_tuple()
        return {
            "rows": np.bincount(self.partitions.z, minlength=G).tolist(),
            "columns_mu": np.bincount(self.partitions.w_mu, minlength=Lmu).tolist(),
            "columns_sigma": np.bincount(self.partitions.w_sigma, minlength=Lsigma).tolist(),
        }

    def summary(self) -> Dict[str, Any]:
        if self.tied:
            model, spec = "traditional", [self.spec.G, self.spec.Lmu]
        else:
            model, spec = "non-id", list(self.spec.as_tuple())
        return {
            "model": model,
            "spec": spec,
            "seed": self.seed,
            "cdll": self.cdll,
            "icl_bic": self.icl_bic,
            "theta_hat": self.theta_hat.as_dict(),
            "cluster_sizes": self.cluster_sizes(),
            "label_switch_suspected": self.label_switch_suspected,
        }


# --- SE conditionals (unnormalised log weights for every entity at once) ---

def _row_log_weights(values: np.ndarray, w_mu, w_sigma, theta: Params) -> np.ndarray:
    G = theta.pi.size
    out = np.empty((values.shape[0], G))
    for g in range(G):
        cells = block_logdensity(values, theta.mu[g, w_mu], theta.sigma2[g, w_sigma])
        out[:, g] = np.log(theta.pi[g]) + cells.sum(axis=1)
    return out


def _col_mu_log_weights(values: np.ndarray, z, w_sigma, theta: Params) -> np.ndarray:
    variances = theta.sigma2[z][:, w_sigma]
    Lmu = theta.rho_mu.size
    out = np.empty((values.shape[1], Lmu))
    for l in range(Lmu):
        cells = block_logdensity(values, theta.mu[z, l][:, None], variances)
        out[:, l] = np.log(theta.rho_mu[l]) + cells.sum(axis=0)
    return out


def _col_sigma_log_weights(values: np.ndarray, z, w_mu, theta: Params) -> np.ndarray:
    means = theta.mu[z][:, w_mu]
    Lsigma = theta.rho_sigma.size
    out = np.empty((values.shape[1], Lsigma))
    for l in range(Lsigma):
        cells = block_logdensity(values, means, theta.sigma2[z, l][:, None])
        out[:, l] = np.log(theta.rho_sigma[l]) + cells.sum(axis=0)
    return out


def _col_tied_log_weights(values: np.ndarray, z, theta: Params) -> np.ndarray:
    L = theta.rho_mu.size
    out = np.empty((values.shape[1], L))
    for l in range(L):
        cells = block_logdensity(values, theta.mu[z, l][:, None], theta.sigma2[z, l][:, None])
        out[:, l] = np.log(theta.rho_mu[l]) + cells.sum(axis=0)
    return out


def _probabilities(log_weights: np.ndarray) -> np.ndarray:
    probs = normalize_log_probs(log_weights)
    if not np.all(np.isfinite(probs)):
        raise InternalSamplingError("posterior could not be normalised (all weights vanish)")
    return probs


def se_row_probabilities(x: DataMatrix, w_mu, w_sigma, theta: Params, i: int) -> np.ndarray:
    """P(z_i = g | x, w_mu, w_sigma; theta) for g = 0..G-1."""
    return _probabilities(_row_log_weights(x.values[[i]], np.asarray(w_mu), np.asarray(w_sigma), theta))[0]


def se_col_mu_probabilities(x: DataMatrix, z, w_sigma, theta: Params, j: int) -> np.ndarray:
    """P(w_mu_j = l | x, z, w_sigma; theta) for l = 0..Lmu-1."""
    w_sigma = np.asarray(w_sigma)
    return _probabilities(_col_mu_log_weights(x.values[:, [j]], np.asarray(z), w_sigma[[j]], theta))[0]


def se_col_sigma_probabilities(x: DataMatrix, z, w_mu, theta: Params, j: int) -> np.ndarray:
    """P(w_sigma_j = l | x, z, w_mu; theta) for l = 0..Lsigma-1."""
    w_mu = np.asarray(w_mu)
    return _probabilities(_col_sigma_log_weights(x.values[:, [j]], np.asarray(z), w_mu[[j]], theta))[0]


# --- M-step ---

def _counts(labels: np.ndarray, n_clusters: int, axis: str) -> np.ndarray:
    counts = np.bincount(labels, minlength=n_clusters)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise EmptyClusterError(axis, int(empty[0]))
    return counts


def m_step(x: DataMatrix, parts: Partitions, spec: ModelSpec, variance_floor: float = VARIANCE_FLOOR) -> Params:
    """
    Closed-form maximiser of the complete-data log-likelihood for fixed partitions.

    Raises:
        EmptyClusterError: if any row or column cluster has no members.
    """
    G, Lmu, Lsigma = spec.as_tuple()
    n_rows = _counts(parts.z, G, "rows")
    n_mu = _counts(parts.w_mu, Lmu, "columns_mu")
    n_sigma = _counts(parts.w_sigma, Lsigma, "columns_sigma")

    rows = [np.flatnonzero(parts.z == g) for g in range(G)]
    cols_mu = [np.flatnonzero(parts.w_mu == l) for l in range(Lmu)]
    cols_sigma = [np.flatnonzero(parts.w_sigma == l) for l in range(Lsigma)]

    # each block statistic is a plain np.mean over the block's cells
    mu = np.array([[x.values[np.ix_(r, c)].mean() for c in cols_mu] for r in rows])
    residuals = (x.values - mu[parts.z][:, parts.w_mu]) ** 2
    sigma2 = np.array([[residuals[np.ix_(r, c)].mean() for c in cols_sigma] for r in rows])

    return Params(
        pi=n_rows / x.n,
        rho_mu=n_mu / x.p,
        rho_sigma=n_sigma / x.p,
        mu=mu,
        sigma2=np.maximum(sigma2, variance_floor),
    )


# --- Chain ---

class SemGibbs:
    """
    One SEM-Gibbs chain on a fixed data matrix and model spec.

    Args:
        x (DataMatrix): observations.
        spec (ModelSpec): cluster counts; with ``tied`` Lmu must equal Lsigma.
        cfg (SemConfig): run settings including the master seed.
        tied (bool): constrain w_mu == w_sigma (classical block model).
    """

    def __init__(self, x: DataMatrix, spec: ModelSpec, cfg: SemConfig, tied: bool = False):
        spec.check_feasible(x.n, x.p)
        if tied and spec.Lmu != spec.Lsigma:
            raise ModelSpecError("a tied fit needs Lmu == Lsigma")
        self.x = x
        self.spec = spec
        self.cfg = cfg
        self.tied = tied
        self._streams = StreamFactory(cfg.seed)

    # draws

    def _draw(self, sampler: Callable[[int], np.ndarray], n_clusters: int, axis: str,
              cluster_keys: Sequence[int], key: Tuple[int, int, int], enforce_nonempty: bool = True) -> np.ndarray:
        """
        Samples one label per entity; redraws (then repairs) partitions that leave a cluster empty.

        Args:
            sampler: ``sampler(attempt)`` returns a full draw of labels.
            cluster_keys: stable identity of every cluster; empty clusters are repaired in key order.
        """
        labels = sampler(0)
        if not enforce_nonempty or n_clusters == 1:
            return labels
        attempt = 0
        while np.bincount(labels, minlength=n_clusters).min() == 0:
            if attempt >= self.cfg.max_resample_attempts:
                return self._repair_empty(labels, n_clusters, axis, cluster_keys, key)
            attempt += 1
            labels = sampler(attempt)
        if attempt:
            _logger.debug(f"{axis}: empty cluster cleared after {attempt} redraw(s)")
        return labels

    def _draw_conditional(self, log_weights: np.ndarray, previous: np.ndarray, n_clusters: int, axis: str,
                          key: Tuple[int, int, int], enforce_nonempty: bool = True) -> np.ndarray:
        """Gumbel-max draw from unnormalised log weights; noise streams follow the clusters of ``previous``."""
        if np.isnan(log_weights).any() or not np.all(np.isfinite(log_weights.max(axis=1))):
            raise InternalSamplingError(f"{axis}: conditional log weights are not finite")
        size = log_weights.shape[0]
        cluster_keys = _cluster_keys(previous, n_clusters)

        def sampler(attempt: int) -> np.ndarray:
            return gumbel_max(log_weights, self._streams.gumbel_columns(size, cluster_keys, *key, attempt))

        return self._draw(sampler, n_clusters, axis, cluster_keys, key, enforce_nonempty)

    def _draw_initial(self, probs: np.ndarray, n_clusters: int, axis: str, key: Tuple[int, int, int]) -> np.ndarray:
        size = probs.shape[0]

        def sampler(attempt: int) -> np.ndarray:
            return sample_categorical(probs, self._streams.uniforms(size, *key, attempt))

        return self._draw(sampler, n_clusters, axis, np.arange(n_clusters), key)

    def _repair_empty(self, labels: np.ndarray, n_clusters: int, axis: str, cluster_keys: Sequence[int],
                      key: Tuple[int, int, int]) -> np.ndarray:
        if self.cfg.on_empty == "raise":
            raise DegenerateFitError(
                f"{axis} kept an empty cluster after {self.cfg.max_resample_attempts} redraws; "
                f"try a smaller spec than {self.spec}"
            )
        labels = labels.copy()
        rng = self._streams.generator(*key, self.cfg.max_resample_attempts + 1)
        empty = np.flatnonzero(np.bincount(labels, minlength=n_clusters) == 0)
        for cluster in empty[np.argsort(np.asarray(cluster_keys)[empty], kind="stable")]:
            counts = np.bincount(labels, minlength=n_clusters)
            donors = np.flatnonzero(counts[labels] >= 2)
            if donors.size == 0:
                raise DegenerateFitError(f"cannot fill {n_clusters} {axis} clusters; try a smaller spec than {self.spec}")
            moved = donors[rng.integers(donors.size)]
            labels[moved] = cluster
            _logger.warning(f"{axis}: cluster {cluster} stayed empty, reassigned member {moved}")
        return labels

    def _sweep(self, parts: Partitions, theta: Params, phase: int, q: int,
               enforce_nonempty: bool = True) -> Partitions:
        G, Lmu, Lsigma = self.spec.as_tuple()
        values = self.x.values
        z = self._draw_conditional(_row_log_weights(values, parts.w_mu, parts.w_sigma, theta), parts.z,
                                   G, "rows", (phase, q, STAGE_ROWS), enforce_nonempty)
        if self.tied:
            w = self._draw_conditional(_col_tied_log_weights(values, z, theta), parts.w_mu,
                                       Lmu, "columns", (phase, q, STAGE_COL_MU), enforce_nonempty)
            return Partitions(z, w, w)
        w_mu = self._draw_conditional(_col_mu_log_weights(values, z, parts.w_sigma, theta), parts.w_mu,
                                      Lmu, "columns_mu", (phase, q, STAGE_COL_MU), enforce_nonempty)
        w_sigma = self._draw_conditional(_col_sigma_log_weights(values, z, w_mu, theta), parts.w_sigma,
                                         Lsigma, "columns_sigma", (phase, q, STAGE_COL_SIGMA), enforce_nonempty)
        return Partitions(z, w_mu, w_sigma)

    def _initial_partitions(self) -> Partitions:
        G, Lmu, Lsigma = self.spec.as_tuple()
        n, p = self.x.n, self.x.p
        if self.cfg.init is InitMethod.KMEANS_ROWS:
            kmeans = KMeans(
                n_clusters=G,
                init="random",
                n_init=1,
                max_iter=self.cfg.kmeans_iterations,
                algorithm="lloyd",
                random_state=self._streams.derive_seed(PHASE_INIT, STAGE_ROWS) % (2**32),
            )
            z = kmeans.fit_predict(self.x.values).astype(np.intp)
            z = self._draw_initial(np.eye(G)[z], G, "rows", (PHASE_INIT, 0, STAGE_ROWS))
        else:
            z = self._draw_initial(np.full((n, G), 1.0 / G), G, "rows", (PHASE_INIT, 0, STAGE_ROWS))
        w_mu = self._draw_initial(np.full((p, Lmu), 1.0 / Lmu), Lmu, "columns_mu", (PHASE_INIT, 0, STAGE_COL_MU))
        if self.tied:
            return Partitions(z, w_mu, w_mu)
        w_sigma = self._draw_initial(np.full((p, Lsigma), 1.0 / Lsigma), Lsigma, "columns_sigma",
                                     (PHASE_INIT, 0, STAGE_COL_SIGMA))
        return Partitions(z, w_mu, w_sigma)

    def _cdll(self, parts: Partitions, theta: Params) -> float:
        if self.tied:
            return complete_data_loglik_traditional(
                self.x, parts.z, parts.w_mu, theta.pi, theta.rho_mu, theta.mu, theta.sigma2
            )
        return complete_data_loglik(self.x, parts, theta)

    def _icl_bic(self, cdll: float) -> float:
        from blockmix.selection import icl_bic, icl_bic_traditional

        if self.tied:
            return icl_bic_traditional(cdll, self.spec.G, self.spec.Lmu, self.x.n, self.x.p)
        return icl_bic(cdll, self.spec, self.x.n, self.x.p)

    def run(self, init_partitions: Optional[Partitions] = None) -> FitResult:
        G, Lmu, Lsigma = self.spec.as_tuple()
        cfg = self.cfg
        _logger.info(f"SEM-Gibbs fit {'tied ' if self.tied else ''}spec={self.spec} seed={cfg.seed} "
                     f"burn_in={cfg.burn_in} iterations={cfg.iterations}")

        parts = init_partitions if init_partitions is not None else self._initial_partitions()
        if self.tied and not np.array_equal(parts.w_mu, parts.w_sigma):
            raise ModelSpecError("tied fits need identical column partitions")
        theta = m_step(self.x, parts, self.spec, cfg.variance_floor)

        thetas: List[Params] = []
        cdlls: List[float] = []
        for q in range(cfg.burn_in + cfg.iterations):
            parts = self._sweep(parts, theta, PHASE_CHAIN, q)
            theta = m_step(self.x, parts, self.spec, cfg.variance_floor)
            thetas.append(theta)
            cdlls.append(self._cdll(parts, theta))
            if _logger.isEnabledFor(logging.DEBUG):
                _logger.debug(f"sweep {q}: cdll={cdlls[-1]:.6f}")

        trace = ChainTrace.from_snapshots(thetas, cdlls)
        theta_hat = trace.mean_params(cfg.burn_in)
        switched = _label_switch_suspected(trace, cfg.burn_in)
        if switched:
            _logger.warning(f"spec={self.spec}: row cluster means cross after burn-in; labels may have switched")

        # every final run is one SE sweep from the last chain state
        row_counts = np.zeros((self.x.n, G))
        mu_counts = np.zeros((self.x.p, Lmu))
        sigma_counts = np.zeros((self.x.p, Lsigma))
        for r in range(cfg.final_partition_runs):
            drawn = self._sweep(parts, theta_hat, PHASE_FINAL, r, enforce_nonempty=False)
            row_counts[np.arange(self.x.n), drawn.z] += 1
            mu_counts[np.arange(self.x.p), drawn.w_mu] += 1
            sigma_counts[np.arange(self.x.p), drawn.w_sigma] += 1

        # ties go to the cluster whose smallest member index is lowest
        final = Partitions(
            _most_frequent(row_counts, _cluster_keys(parts.z, G)),
            _most_frequent(mu_counts, _cluster_keys(parts.w_mu, Lmu)),
            _most_frequent(sigma_counts, _cluster_keys(parts.w_sigma, Lsigma)),
        )
        cdll = self._cdll(final, theta_hat)
        score = self._icl_bic(cdll)
        _logger.info(f"spec={self.spec}: cdll={cdll:.4f} icl_bic={score:.4f}")

        runs = float(cfg.final_partition_runs)
        return FitResult(
            theta_hat=theta_hat,
            partitions=final,
            row_probs=row_counts / runs,
            col_mu_probs=mu_counts / runs,
            col_sigma_probs=sigma_counts / runs,
            cdll=cdll,
            icl_bic=score,
            trace=trace,
            spec=self.spec,
            seed=cfg.seed,
            tied=self.tied,
            label_switch_suspected=switched,
        )


def _cluster_keys(labels: np.ndarray, n_clusters: int) -> np.ndarray:
    """Smallest member index of every cluster; an empty cluster ``k`` gets ``labels.size + k``."""
    keys = np.arange(n_clusters) + labels.size
    np.minimum.at(keys, labels, np.arange(labels.size))
    return keys


def _most_frequent(counts: np.ndarray, cluster_keys: np.ndarray) -> np.ndarray:
    order = np.argsort(cluster_keys, kind="stable")
    return order[counts[:, order].argmax(axis=1)]


def _label_switch_suspected(trace: ChainTrace, burn_in: int) -> bool:
    """True when the ordering of row clusters by average block mean changes after burn-in."""
    # sorting first makes the average independent of the column labels
    means = np.sort(trace.mu[burn_in:], axis=2).mean(axis=2)
    if means.shape[0] < 2 or means.shape[1] < 2:
        return False
    orders = np.argsort(means, axis=1, kind="stable")
    return bool(np.any(orders != orders[0]))


def fit(x: DataMatrix, spec: ModelSpec, cfg: Optional[SemConfig] = None, tied: bool = False,
        init_partitions: Optional[Partitions] = None) -> FitResult:
    """
    Fits the model with SEM-Gibbs.

    Args:
        x (DataMatrix): observations.
        spec (ModelSpec): (G, Lmu, Lsigma).
        cfg (SemConfig, optional): defaults to burn-in 20, 100 iterations, 20 final runs, seed 0.
        tied (bool): constrain the two column partitions to be equal.
        init_partitions (Partitions, optional): starting partitions instead of the configured init.

    Returns:
        FitResult: averaged parameters, MAP partitions, membership frequencies, cdll, ICL-BIC and trace.

    Raises:
        ModelSpecError: if ``spec`` has more clusters than the data has rows or columns.
        DegenerateFitError: if empty clusters cannot be avoided.
    """
    return SemGibbs(x, spec, cfg or SemConfig(), tied=tied).run(init_partitions)
