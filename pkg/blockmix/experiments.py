"""
Replicated simulation studies: estimation quality (sim1, sim2), exhaustive
ICL-BIC selection (sim3) and forward search against the exhaustive argmax
(sim4).
"""
from typing import Any, Dict, List, Optional, Tuple

import attrs
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from blockmix.metrics import aligned_param_error, ari, choice_frequencies, summarize_replicates
from blockmix.model import ModelSpec
from blockmix.selection import SearchConfig, forward_search, grid_search
from blockmix.sem import SemConfig, fit
from blockmix.simulate import GeneratorSpec, PaperSim, generate, paper_sim_spec
from blockmix.utils.log_helper import BasicLogger
from blockmix.utils.random import StreamFactory

_logger = BasicLogger(logger_name="blockmix.experiments")

SELECTION_RANGES = ((2, 3, 4), (2, 3, 4), (2, 3, 4))
SEARCH_MAX = ModelSpec(5, 5, 5)


@attrs.frozen(eq=False)
class ReproduceReport:
    summary: Dict[str, Any]
    replicates: pd.DataFrame


def _finite(value) -> Optional[float]:
    return None if pd.isna(value) else float(value)


def replicate_seeds(master_seed: int, replicate: int) -> Tuple[int, int]:
    """(data seed, fit seed) of one replicate."""
    streams = StreamFactory(master_seed)
    return streams.derive_seed(0, replicate), streams.derive_seed(1, replicate)


def estimation_replicate(gs: GeneratorSpec, sem: SemConfig, replicate: int) -> Dict[str, Any]:
    data_seed, fit_seed = replicate_seeds(sem.seed, replicate)
    x, truth = generate(gs.with_seed(data_seed))
    result = fit(x, gs.theta.spec, sem.with_seed(fit_seed))
    errors = aligned_param_error(result.theta_hat, gs.theta)
    return {
        "replicate": replicate,
        "ari_rows": ari(truth.z, result.partitions.z),
        "ari_columns_mu": ari(truth.w_mu, result.partitions.w_mu),
        "ari_columns_sigma": ari(truth.w_sigma, result.partitions.w_sigma),
        **errors.as_dict(),
        "icl_bic": result.icl_bic,
        "label_switch_suspected": int(result.label_switch_suspected),
    }


def selection_replicate(gs: GeneratorSpec, sem: SemConfig, replicate: int,
                        ranges=SELECTION_RANGES) -> Dict[str, Any]:
    data_seed, fit_seed = replicate_seeds(sem.seed, replicate)
    x, _ = generate(gs.with_seed(data_seed))
    record = grid_search(x, ranges, sem.with_seed(fit_seed))
    G, Lmu, Lsigma = record.chosen.as_tuple()
    return {
        "replicate": replicate,
        "G": G, "Lmu": Lmu, "Lsigma": Lsigma,
        "correct": int(record.chosen == gs.theta.spec),
        "chosen_icl_bic": record.candidate(record.chosen).icl_bic,
    }


def search_replicate(gs: GeneratorSpec, sem: SemConfig, replicate: int,
                     max_spec: ModelSpec = SEARCH_MAX) -> Dict[str, Any]:
    data_seed, fit_seed = replicate_seeds(sem.seed, replicate)
    x, _ = generate(gs.with_seed(data_seed))
    sem_fit = sem.with_seed(fit_seed)
    forward = forward_search(x, SearchConfig(max=max_spec, sem=sem_fit))
    exhaustive = grid_search(
        x, tuple(range(1, cap + 1) for cap in max_spec.as_tuple()), sem_fit
    )
    G, Lmu, Lsigma = forward.chosen.as_tuple()
    return {
        "replicate": replicate,
        "G": G, "Lmu": Lmu, "Lsigma": Lsigma,
        "matches_exhaustive": int(forward.chosen == exhaustive.chosen),
        "path_legal": int(forward.path_is_legal()),
        "n_fits_forward": len(forward.visited),
    }


_RUNNERS = {
    PaperSim.SIM1: estimation_replicate,
    PaperSim.SIM2: estimation_replicate,
    PaperSim.SIM3_ICL: selection_replicate,
    PaperSim.SIM4_SEARCH: search_replicate,
}


def reproduce(which, replicates: int = 50, n: Optional[int] = None, p: Optional[int] = None,
              sem: Optional[SemConfig] = None, jobs: int = 1, progress: bool = True) -> ReproduceReport:
    """
    Runs ``replicates`` independent datasets of one reference study.

    Replicate ``r`` draws its data and fit seeds from (sem.seed, r), so the
    report does not depend on ``jobs``.
    """
    which = PaperSim(which)
    sem = sem or SemConfig()
    gs = paper_sim_spec(which, n=n, p=p)
    runner = _RUNNERS[which]
    _logger.info(f"reproducing {which.value}: {replicates} replicates at n={gs.n}, p={gs.p}")

    tasks = (delayed(runner)(gs, sem, r) for r in range(replicates))
    results = Parallel(n_jobs=jobs, return_as="generator")(tasks)
    rows: List[Dict[str, Any]] = list(tqdm(results, total=replicates, disable=not progress, desc=which.value))
    frame = pd.DataFrame(rows).sort_values("replicate").reset_index(drop=True)

    stats = summarize_replicates(frame.drop(columns=["replicate"]).to_dict("records"))
    summary: Dict[str, Any] = {
        "study": which.value,
        "replicates": replicates,
        "n": gs.n,
        "p": gs.p,
        "true_spec": list(gs.theta.spec.as_tuple()),
        "master_seed": sem.seed,
        "statistics": {
            name: {"mean": _finite(row["mean"]), "std": _finite(row["std"])} for name, row in stats.iterrows()
        },
    }
    if which in (PaperSim.SIM3_ICL, PaperSim.SIM4_SEARCH):
        freq = choice_frequencies(frame[["G", "Lmu", "Lsigma"]].values.tolist())
        summary["choice_frequencies"] = {
            axis: {str(k): int(v) for k, v in counts.items()} for axis, counts in freq.iterrows()
        }
    return ReproduceReport(summary=summary, replicates=frame)
