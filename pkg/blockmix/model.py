"""
Domain types and likelihood bookkeeping for parameter-wise Gaussian co-clustering.

A data matrix ``x`` (n x p) is modelled with one row partition ``z`` (G
clusters) and two column partitions: ``w_mu`` (Lmu clusters) selects the
block mean and ``w_sigma`` (Lsigma clusters) selects the block variance of
every cell, ``x_ij ~ N(mu[z_i, w_mu_j], sigma2[z_i, w_sigma_j])``.
"""
import math
from typing import Any, Dict, Optional, Tuple

import attrs
import numpy as np

LOG_2PI = math.log(2.0 * math.pi)
VARIANCE_FLOOR = 1e-8
SIMPLEX_TOL = 1e-12


class BlockmixError(Exception):
    """Root of every error raised by blockmix."""
    pass


class DimensionMismatchError(BlockmixError, ValueError):
    """Raised when partitions, parameters and data disagree along one axis."""

    def __init__(self, axis: str, expected: Any, actual: Any, message: Optional[str] = None):
        self.axis = axis
        self.expected = expected
        self.actual = actual
        super().__init__(message or f"dimension mismatch on axis '{axis}': expected {expected}, got {actual}")


class DomainError(BlockmixError, ValueError):
    pass


class InvalidParamsError(BlockmixError, ValueError):
    pass


class ModelSpecError(BlockmixError, ValueError):
    pass


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _float_array(value) -> np.ndarray:
    return _readonly(np.array(value, dtype=float, order="C"))


def _label_array(value) -> np.ndarray:
    array = np.array(value)
    if array.size and not np.issubdtype(array.dtype, np.integer):
        if not np.all(np.equal(np.mod(array, 1), 0)):
            raise InvalidParamsError("partition labels must be integers")
    return _readonly(array.astype(np.intp).ravel())


def _positive_int(instance, attribute, value) -> None:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
        raise ModelSpecError(f"{attribute.name} must be a positive integer, got {value!r}")


# --- Domain types ---

@attrs.frozen(eq=False)
class DataMatrix:
    """Dense n x p matrix of finite observations; rows are individuals, columns variables."""

    values: np.ndarray = attrs.field(converter=_float_array)

    def __attrs_post_init__(self):
        if self.values.ndim != 2:
            raise DimensionMismatchError("values", "2-d matrix", f"{self.values.ndim}-d array")
        if self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise DimensionMismatchError("values", "n >= 1 and p >= 1", self.values.shape)
        if not np.all(np.isfinite(self.values)):
            bad = np.argwhere(~np.isfinite(self.values))[0]
            raise DomainError(f"non-finite entry at row {bad[0] + 1}, column {bad[1] + 1}")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def standardize(self) -> "DataMatrix":
        """Per-column z-score; constant columns are only centred."""
        centred = self.values - self.values.mean(axis=0)
        scale = self.values.std(axis=0)
        scale[scale == 0] = 1.0
        return DataMatrix(centred / scale)


@attrs.frozen
class ModelSpec:
    """Cluster counts (G, Lmu, Lsigma)."""

    G: int = attrs.field(validator=_positive_int)
    Lmu: int = attrs.field(validator=_positive_int)
    Lsigma: int = attrs.field(validator=_positive_int)

    @classmethod
    def parse(cls, text: str) -> "ModelSpec":
        """Reads "G,LMU,LSIGMA"."""
        try:
            parts = [int(v) for v in text.replace(" ", "").split(",")]
        except ValueError:
            raise ModelSpecError(f"cannot read a model spec from {text!r}")
        if len(parts) != 3:
            raise ModelSpecError(f"expected G,LMU,LSIGMA, got {text!r}")
        return cls(*parts)

    def as_tuple(self) -> Tuple[int, int, int]:
        return (self.G, self.Lmu, self.Lsigma)

    def fits_within(self, other: "ModelSpec") -> bool:
        return all(a <= b for a, b in zip(self.as_tuple(), other.as_tuple()))

    def check_feasible(self, n: int, p: int) -> None:
        if self.G > n:
            raise ModelSpecError(f"G={self.G} exceeds the number of rows n={n}")
        if self.Lmu > p:
            raise ModelSpecError(f"Lmu={self.Lmu} exceeds the number of columns p={p}")
        if self.Lsigma > p:
            raise ModelSpecError(f"Lsigma={self.Lsigma} exceeds the number of columns p={p}")

    def __str__(self) -> str:
        return f"({self.G},{self.Lmu},{self.Lsigma})"


def _check_simplex(name: str, value: np.ndarray) -> None:
    if value.ndim != 1 or value.size < 1:
        raise InvalidParamsError(f"{name} must be a non-empty vector")
    if np.any(value <= 0) or np.any(value > 1):
        raise InvalidParamsError(f"{name} entries must lie in (0, 1], got {value}")
    if abs(value.sum() - 1.0) > SIMPLEX_TOL:
        raise InvalidParamsError(f"{name} must sum to 1 (got {value.sum():.15g})")


def _floored_variances(value) -> np.ndarray:
    array = np.array(value, dtype=float)
    if np.any(~np.isfinite(array)) or np.any(array <= 0):
        raise InvalidParamsError("sigma2 entries must be finite and strictly positive")
    return _readonly(np.maximum(array, VARIANCE_FLOOR))


@attrs.frozen(eq=False)
class Params:
    """
    Model parameters theta = (pi, rho_mu, rho_sigma, mu, sigma2).

    Variances below the floor (1e-8) are raised to it on construction.
    """

    pi: np.ndarray = attrs.field(converter=_float_array)
    rho_mu: np.ndarray = attrs.field(converter=_float_array)
    rho_sigma: np.ndarray = attrs.field(converter=_float_array)
    mu: np.ndarray = attrs.field(converter=_float_array)
    sigma2: np.ndarray = attrs.field(converter=_floored_variances)

    def __attrs_post_init__(self):
        _check_simplex("pi", self.pi)
        _check_simplex("rho_mu", self.rho_mu)
        _check_simplex("rho_sigma", self.rho_sigma)
        G = self.pi.size
        if self.mu.shape != (G, self.rho_mu.size):
            raise DimensionMismatchError("mu", (G, self.rho_mu.size), self.mu.shape)
        if self.sigma2.shape != (G, self.rho_sigma.size):
            raise DimensionMismatchError("sigma2", (G, self.rho_sigma.size), self.sigma2.shape)
        if not np.all(np.isfinite(self.mu)):
            raise InvalidParamsError("mu entries must be finite")

    @classmethod
    def from_arrays(cls, pi, rho_mu, rho_sigma, mu, sigma2) -> "Params":
        return cls(pi=pi, rho_mu=rho_mu, rho_sigma=rho_sigma, mu=np.atleast_2d(mu), sigma2=np.atleast_2d(sigma2))

    @property
    def spec(self) -> ModelSpec:
        return ModelSpec(self.pi.size, self.rho_mu.size, self.rho_sigma.size)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "pi": self.pi.tolist(),
            "rho_mu": self.rho_mu.tolist(),
            "rho_sigma": self.rho_sigma.tolist(),
            "mu": self.mu.tolist(),
            "sigma2": self.sigma2.tolist(),
        }

    def permuted(self, row_perm=None, mu_perm=None, sigma_perm=None) -> "Params":
        """Relabels clusters: new cluster ``k`` is old cluster ``perm[k]``."""
        G, Lmu, Lsigma = self.spec.as_tuple()
        rp = np.arange(G) if row_perm is None else np.asarray(row_perm)
        mp = np.arange(Lmu) if mu_perm is None else np.asarray(mu_perm)
        sp = np.arange(Lsigma) if sigma_perm is None else np.asarray(sigma_perm)
        return Params(
            pi=self.pi[rp],
            rho_mu=self.rho_mu[mp],
            rho_sigma=self.rho_sigma[sp],
            mu=self.mu[np.ix_(rp, mp)],
            sigma2=self.sigma2[np.ix_(rp, sp)],
        )


@attrs.frozen(eq=False)
class Partitions:
    """Hard assignments stored as label vectors: z (rows), w_mu and w_sigma (columns)."""

    z: np.ndarray = attrs.field(converter=_label_array)
    w_mu: np.ndarray = attrs.field(converter=_label_array)
    w_sigma: np.ndarray = attrs.field(converter=_label_array)

    def __attrs_post_init__(self):
        for name in ("z", "w_mu", "w_sigma"):
            if np.any(getattr(self, name) < 0):
                raise InvalidParamsError(f"{name} labels must be non-negative")
        if self.w_mu.size != self.w_sigma.size:
            raise DimensionMismatchError("columns", self.w_mu.size, self.w_sigma.size,
                                         "w_mu and w_sigma must label the same number of columns")

    @property
    def n(self) -> int:
        return self.z.size

    @property
    def p(self) -> int:
        return self.w_mu.size

    def as_dict(self) -> Dict[str, Any]:
        return {"z": self.z.tolist(), "w_mu": self.w_mu.tolist(), "w_sigma": self.w_sigma.tolist()}


def spec_of(theta: Params) -> ModelSpec:
    return theta.spec


def check_consistent(x: DataMatrix, parts: Partitions, theta: Params) -> None:
    """Raises DimensionMismatchError naming the first axis on which the inputs disagree."""
    G, Lmu, Lsigma = theta.spec.as_tuple()
    if parts.z.size != x.n:
        raise DimensionMismatchError("rows", x.n, parts.z.size)
    if parts.w_mu.size != x.p:
        raise DimensionMismatchError("columns_mu", x.p, parts.w_mu.size)
    if parts.w_sigma.size != x.p:
        raise DimensionMismatchError("columns_sigma", x.p, parts.w_sigma.size)
    if parts.z.max() >= G:
        raise DimensionMismatchError("rows", f"labels < {G}", int(parts.z.max()))
    if parts.w_mu.max() >= Lmu:
        raise DimensionMismatchError("columns_mu", f"labels < {Lmu}", int(parts.w_mu.max()))
    if parts.w_sigma.max() >= Lsigma:
        raise DimensionMismatchError("columns_sigma", f"labels < {Lsigma}", int(parts.w_sigma.max()))


# --- Densities and likelihoods ---

def block_logdensity(x_ij, mu, sigma2):
    """
    Univariate Gaussian log-density, constant included.

    Broadcasts over numpy arrays; returns a float for scalar input.

    Raises:
        DomainError: if any sigma2 <= 0.
    """
    sigma2 = np.asarray(sigma2, dtype=float)
    if np.any(sigma2 <= 0):
        raise DomainError("sigma2 must be strictly positive")
    diff = np.asarray(x_ij, dtype=float) - mu
    out = -0.5 * LOG_2PI - 0.5 * np.log(sigma2) - diff * diff / (2.0 * sigma2)
    return float(out) if np.ndim(out) == 0 else out


def complete_data_loglik(x: DataMatrix, parts: Partitions, theta: Params) -> float:
    """
    Complete-data log-likelihood log p(x, z, w_mu, w_sigma; theta).

    Sums the mixing terms of the three partitions and every cell's Gaussian
    log-density (the -0.5 log(2 pi) constant is kept).
    """
    check_consistent(x, parts, theta)
    means = theta.mu[parts.z][:, parts.w_mu]
    variances = theta.sigma2[parts.z][:, parts.w_sigma]
    cells = block_logdensity(x.values, means, variances).sum()
    mixing = (
        np.log(theta.pi[parts.z]).sum()
        + np.log(theta.rho_mu[parts.w_mu]).sum()
        + np.log(theta.rho_sigma[parts.w_sigma]).sum()
    )
    return float(mixing + cells)


def complete_data_loglik_traditional(x: DataMatrix, z, w, pi, rho, mu, sigma2) -> float:
    """Complete-data log-likelihood of the single-column-partition block model."""
    z = np.asarray(z, dtype=np.intp)
    w = np.asarray(w, dtype=np.intp)
    if z.size != x.n:
        raise DimensionMismatchError("rows", x.n, z.size)
    if w.size != x.p:
        raise DimensionMismatchError("columns", x.p, w.size)
    mu = np.asarray(mu, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    cells = block_logdensity(x.values, mu[z][:, w], sigma2[z][:, w]).sum()
    mixing = np.log(np.asarray(pi)[z]).sum() + np.log(np.asarray(rho)[w]).sum()
    return float(mixing + cells)


# --- Parameter counting ---

def count_free_parameters(spec: ModelSpec) -> int:
    """(G-1) + (Lmu-1) + (Lsigma-1) + G*Lmu + G*Lsigma, i.e. G + (Lmu+Lsigma)(G+1) - 3."""
    return spec.G + (spec.Lmu + spec.Lsigma) * (spec.G + 1) - 3


def count_free_parameters_traditional(G: int, L: int) -> int:
    """Free parameters of the classical Gaussian block model, G + L + 2(GL - 1)."""
    return G + L + 2 * (G * L - 1)
