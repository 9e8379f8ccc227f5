__version__ = "0.1.0"

from blockmix.model import (  # noqa: E402
    BlockmixError,
    DataMatrix,
    ModelSpec,
    Params,
    Partitions,
    block_logdensity,
    complete_data_loglik,
    count_free_parameters,
    count_free_parameters_traditional,
)
from blockmix.sem import FitResult, SemConfig, fit  # noqa: E402
from blockmix.selection import SearchConfig, forward_search, grid_search, icl_bic  # noqa: E402
from blockmix.baseline import TraditionalSpec, fit_traditional  # noqa: E402
