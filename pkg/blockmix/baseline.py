"""
Classical Gaussian latent block model (one column partition).

Fitted by the SEM-Gibbs core in ``blockmix.sem`` with the two column
partitions tied together, so both model families share one tested sampler.
"""
from typing import Optional, Tuple

import attrs

from blockmix.model import DataMatrix, ModelSpec, ModelSpecError, _positive_int, count_free_parameters_traditional
from blockmix.sem import FitResult, SemConfig, fit


@attrs.frozen
class TraditionalSpec:
    G: int = attrs.field(validator=_positive_int)
    L: int = attrs.field(validator=_positive_int)

    @classmethod
    def parse(cls, text: str) -> "TraditionalSpec":
        """Reads "G,L"."""
        try:
            parts = [int(v) for v in text.replace(" ", "").split(",")]
        except ValueError:
            raise ModelSpecError(f"cannot read a traditional spec from {text!r}")
        if len(parts) != 2:
            raise ModelSpecError(f"expected G,L, got {text!r}")
        return cls(*parts)

    def as_tuple(self) -> Tuple[int, int]:
        return (self.G, self.L)

    def as_model_spec(self) -> ModelSpec:
        """The tied non-id spec (G, L, L) this model is fitted as."""
        return ModelSpec(self.G, self.L, self.L)

    @property
    def n_free_parameters(self) -> int:
        return count_free_parameters_traditional(self.G, self.L)

    def __str__(self) -> str:
        return f"({self.G},{self.L})"


def fit_traditional(x: DataMatrix, spec: TraditionalSpec, cfg: Optional[SemConfig] = None) -> FitResult:
    """
    SEM-Gibbs fit of the classical block model.

    The returned FitResult has ``tied=True``, identical ``w_mu``/``w_sigma``
    partitions and an ICL-BIC computed with ``icl_bic_traditional``.
    """
    return fit(x, spec.as_model_spec(), cfg or SemConfig(), tied=True)
