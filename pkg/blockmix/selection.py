"""
Model selection by ICL-BIC: the criterion itself, exhaustive grids and the
greedy forward search over (G, Lmu, Lsigma).
"""
import itertools
import math
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import attrs
import numpy as np
from joblib import Parallel, delayed

from blockmix.model import BlockmixError, DataMatrix, ModelSpec, ModelSpecError
from blockmix.sem import DegenerateFitError, FitResult, SemConfig, fit
from blockmix.utils.log_helper import BasicLogger
from blockmix.utils.random import StreamFactory

_logger = BasicLogger(logger_name="blockmix.selection")

NON_ID = "non-id"
TRADITIONAL = "traditional"


class SearchError(BlockmixError):
    pass


# --- Criteria ---

def icl_bic(cdll: float, spec: ModelSpec, n: int, p: int) -> float:
    """
    ICL-BIC of a non-id fit:
    cdll - (G-1)/2 log n - (Lmu+Lsigma-2)/2 log p - G(Lmu+Lsigma)/2 log(np).
    """
    G, Lmu, Lsigma = spec.as_tuple()
    return (
        cdll
        - (G - 1) / 2.0 * math.log(n)
        - (Lmu + Lsigma - 2) / 2.0 * math.log(p)
        - G * (Lmu + Lsigma) / 2.0 * math.log(n * p)
    )


def icl_bic_traditional(cdll: float, G: int, L: int, n: int, p: int) -> float:
    """ICL-BIC of the single-partition model: GL means and GL variances share one column partition."""
    return (
        cdll
        - (G - 1) / 2.0 * math.log(n)
        - (L - 1) / 2.0 * math.log(p)
        - (2 * G * L) / 2.0 * math.log(n * p)
    )


# --- Records ---

@attrs.frozen(eq=False)
class Candidate:
    """One visited spec: its best ICL-BIC (-inf when degenerate) and the fit that produced it."""

    spec: ModelSpec
    icl_bic: float
    fit: Optional[FitResult] = None
    error: Optional[str] = None

    @property
    def degenerate(self) -> bool:
        return self.fit is None

    def as_dict(self, model: str = NON_ID) -> Dict[str, Any]:
        spec = list(self.spec.as_tuple()) if model == NON_ID else [self.spec.G, self.spec.Lmu]
        return {
            "spec": spec,
            "icl_bic": None if self.degenerate else self.icl_bic,
            "summary": None if self.degenerate else self.fit.summary(),
            "error": self.error,
        }


@attrs.frozen(eq=False)
class SearchRecord:
    visited: List[Candidate]
    chosen: ModelSpec
    path: List[ModelSpec]
    master_seed: int
    model: str = NON_ID

    def candidate(self, spec: ModelSpec) -> Candidate:
        for cand in self.visited:
            if cand.spec == spec:
                return cand
        raise KeyError(str(spec))

    @property
    def best_fit(self) -> FitResult:
        return self.candidate(self.chosen).fit

    def scores(self) -> Dict[Tuple[int, ...], float]:
        return {c.spec.as_tuple(): c.icl_bic for c in self.visited}

    def path_is_legal(self) -> bool:
        """Every accepted step raises exactly one axis by one and strictly increases ICL-BIC."""
        for before, after in zip(self.path, self.path[1:]):
            steps = np.subtract(after.as_tuple(), before.as_tuple())
            if sorted(steps.tolist()) != [0, 0, 1]:
                return False
            if not self.candidate(after).icl_bic > self.candidate(before).icl_bic:
                return False
        return True

    def to_dict(self) -> Dict[str, Any]:
        def spec_list(spec: ModelSpec) -> List[int]:
            return list(spec.as_tuple()) if self.model == NON_ID else [spec.G, spec.Lmu]

        return {
            "model": self.model,
            "master_seed": self.master_seed,
            "chosen": spec_list(self.chosen),
            "chosen_icl_bic": self.candidate(self.chosen).icl_bic,
            "path": [spec_list(s) for s in self.path],
            "visited": [c.as_dict(self.model) for c in self.visited],
        }


@attrs.frozen
class SearchConfig:
    """Settings of the forward search; ``max`` caps every axis."""

    start: ModelSpec = attrs.field(factory=lambda: ModelSpec(1, 1, 1))
    max: ModelSpec = attrs.field(factory=lambda: ModelSpec(5, 5, 5))
    fits_per_candidate: int = attrs.field(default=1, converter=int)
    sem: SemConfig = attrs.field(factory=SemConfig)
    jobs: int = attrs.field(default=1, converter=int)

    def __attrs_post_init__(self):
        if not self.start.fits_within(self.max):
            raise ModelSpecError(f"start {self.start} exceeds max {self.max} on some axis")
        if self.fits_per_candidate < 1:
            raise ValueError("fits_per_candidate must be >= 1")


# --- Candidate fitting ---

def _fit_candidate(x: DataMatrix, spec: ModelSpec, sem_cfg: SemConfig, fits_per_candidate: int,
                   tied: bool = False) -> Candidate:
    """Fits ``spec`` with seeds derived from (master seed, spec, refit) and keeps the best ICL-BIC."""
    streams = StreamFactory(sem_cfg.seed)
    best: Optional[FitResult] = None
    error = None
    for refit in range(fits_per_candidate):
        seed = streams.derive_seed(spec.G, spec.Lmu, spec.Lsigma, refit)
        try:
            result = fit(x, spec, sem_cfg.with_seed(seed), tied=tied)
        except (DegenerateFitError, ModelSpecError) as e:
            error = f"{type(e).__name__}: {e}"
            continue
        if best is None or result.icl_bic > best.icl_bic:
            best = result
    if best is None:
        _logger.warning(f"candidate {spec} is degenerate: {error}")
        return Candidate(spec=spec, icl_bic=-math.inf, error=error)
    return Candidate(spec=spec, icl_bic=best.icl_bic, fit=best)


def _fit_candidates(x: DataMatrix, specs: Sequence[ModelSpec], sem_cfg: SemConfig, fits_per_candidate: int,
                    jobs: int, tied: bool = False) -> List[Candidate]:
    if jobs == 1 or len(specs) == 1:
        candidates = [_fit_candidate(x, s, sem_cfg, fits_per_candidate, tied) for s in specs]
    else:
        candidates = Parallel(n_jobs=jobs)(
            delayed(_fit_candidate)(x, s, sem_cfg, fits_per_candidate, tied) for s in specs
        )
    for cand in candidates:
        _logger.info(f"candidate {cand.spec}: icl_bic={cand.icl_bic:.4f}")
    return list(candidates)


def _argmax(candidates: Sequence[Candidate]) -> Candidate:
    """Highest ICL-BIC; ties go to the earliest candidate."""
    best = candidates[0]
    for cand in candidates[1:]:
        if cand.icl_bic > best.icl_bic:
            best = cand
    return best


def _exhaustive(x: DataMatrix, specs: List[ModelSpec], sem_cfg: SemConfig, fits_per_candidate: int,
                jobs: int, tied: bool, model: str) -> SearchRecord:
    if not specs:
        raise SearchError("the search ranges are empty")
    visited = _fit_candidates(x, specs, sem_cfg, fits_per_candidate, jobs, tied)
    best = _argmax(visited)
    if best.degenerate:
        raise DegenerateFitError("every candidate of the grid was degenerate; try smaller cluster counts")
    return SearchRecord(visited=visited, chosen=best.spec, path=[best.spec], master_seed=sem_cfg.seed, model=model)


def grid_search(x: DataMatrix, ranges: Tuple[Iterable[int], Iterable[int], Iterable[int]],
                sem: Optional[SemConfig] = None, fits_per_candidate: int = 1, jobs: int = 1) -> SearchRecord:
    """
    Fits every (G, Lmu, Lsigma) in the Cartesian product of ``ranges`` and keeps the ICL-BIC argmax.

    Degenerate candidates score -inf and the search continues.
    """
    g_range, mu_range, sigma_range = (sorted(set(r)) for r in ranges)
    specs = [ModelSpec(G, Lmu, Lsigma) for G, Lmu, Lsigma in itertools.product(g_range, mu_range, sigma_range)]
    return _exhaustive(x, specs, sem or SemConfig(), fits_per_candidate, jobs, tied=False, model=NON_ID)


def grid_search_traditional(x: DataMatrix, g_range: Iterable[int], l_range: Iterable[int],
                            sem: Optional[SemConfig] = None, fits_per_candidate: int = 1,
                            jobs: int = 1) -> SearchRecord:
    """Exhaustive (G, L) sweep of the classical block model, scored with icl_bic_traditional."""
    specs = [ModelSpec(G, L, L) for G, L in itertools.product(sorted(set(g_range)), sorted(set(l_range)))]
    return _exhaustive(x, specs, sem or SemConfig(), fits_per_candidate, jobs, tied=True, model=TRADITIONAL)


def _neighbors(spec: ModelSpec, cap: ModelSpec, n: int, p: int) -> List[ModelSpec]:
    """+1 neighbours in axis priority order G, Lmu, Lsigma, within the caps and the data size."""
    limits = (min(cap.G, n), min(cap.Lmu, p), min(cap.Lsigma, p))
    out = []
    for axis in range(3):
        counts = list(spec.as_tuple())
        counts[axis] += 1
        if counts[axis] <= limits[axis]:
            out.append(ModelSpec(*counts))
    return out


def forward_search(x: DataMatrix, cfg: Optional[SearchConfig] = None) -> SearchRecord:
    """
    Greedy forward search: from the incumbent fit its three +1 neighbours,
    move to the best one if it raises ICL-BIC, stop otherwise or at the caps.
    """
    cfg = cfg or SearchConfig()
    visited: Dict[ModelSpec, Candidate] = {}

    start = _fit_candidates(x, [cfg.start], cfg.sem, cfg.fits_per_candidate, 1)[0]
    if start.degenerate:
        raise DegenerateFitError(f"the start spec {cfg.start} is degenerate: {start.error}")
    visited[start.spec] = start
    incumbent = start
    path = [start.spec]

    while True:
        neighbors = [s for s in _neighbors(incumbent.spec, cfg.max, x.n, x.p) if s not in visited]
        if not neighbors:
            _logger.info(f"forward search: no neighbours left at {incumbent.spec}")
            break
        fitted = _fit_candidates(x, neighbors, cfg.sem, cfg.fits_per_candidate, cfg.jobs)
        visited.update((c.spec, c) for c in fitted)
        best = _argmax(fitted)
        if best.degenerate:
            _logger.warning(f"forward search: every neighbour of {incumbent.spec} is degenerate")
            break
        if not best.icl_bic > incumbent.icl_bic:
            break
        _logger.info(f"forward search: {incumbent.spec} -> {best.spec} (icl_bic {best.icl_bic:.4f})")
        incumbent = best
        path.append(best.spec)

    record = SearchRecord(visited=list(visited.values()), chosen=incumbent.spec, path=path,
                          master_seed=cfg.sem.seed, model=NON_ID)
    if not record.path_is_legal():
        raise SearchError(f"forward search produced an illegal path {[str(s) for s in path]}")
    return record
