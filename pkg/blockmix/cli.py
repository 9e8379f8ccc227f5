"""
Command-line front end.

    blockmix fit DATA.csv --spec 3,2,3 --seed 7 -o out/
    blockmix fit-traditional DATA.csv --spec 7,3
    blockmix grid DATA.csv --range 2:4,2:4,2:4 --jobs 4
    blockmix grid DATA.csv --traditional --range 1:25,1:7
    blockmix forward DATA.csv --start 1,1,1 --max 5,5,5
    blockmix simulate sim1 -o sim1/
    blockmix reproduce sim1 --replicates 50 --jobs 8
"""
import json
import logging
import os
import sys
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import attrs
import click
from dotenv import load_dotenv

from blockmix import __version__
from blockmix.baseline import TraditionalSpec, fit_traditional
from blockmix.experiments import reproduce
from blockmix.model import BlockmixError, DataMatrix, ModelSpec
from blockmix.reports import (
    ERROR_FILE,
    SEARCH_FILE,
    TRUTH_FILE,
    error_payload,
    write_fit_outputs,
    write_json,
)
from blockmix.selection import SearchConfig, forward_search, grid_search, grid_search_traditional
from blockmix.sem import InitMethod, SemConfig, fit
from blockmix.simulate import PaperSim, generate, paper_sim_spec
from blockmix.utils.dataset import load_csv, save_csv
from blockmix.utils.log_helper import (
    BasicLogger,
    DirectoryCreationError,
    _checkDirectory,
    configure_package_logging,
    level_from_env,
)

_logger = BasicLogger(logger_name="blockmix.cli")

ENV_SEED = "BLOCKMIX_SEED"
ENV_JOBS = "BLOCKMIX_JOBS"
COMMANDS = ("fit", "fit-traditional", "grid", "forward", "simulate", "reproduce")
STUDIES = tuple(s.value for s in PaperSim)


class RunConfigError(BlockmixError, ValueError):
    pass


def resolve_seed(seed: Optional[int]) -> int:
    """--seed, else BLOCKMIX_SEED, else 0."""
    if seed is not None:
        return seed
    raw = os.environ.get(ENV_SEED)
    if raw in (None, ""):
        return 0
    try:
        return int(raw)
    except ValueError:
        raise RunConfigError(f"{ENV_SEED} must be an integer, got {raw!r}")


def resolve_jobs(jobs: Optional[int]) -> int:
    """--jobs, else BLOCKMIX_JOBS, else 1."""
    if jobs is not None:
        return jobs
    raw = os.environ.get(ENV_JOBS)
    if raw in (None, ""):
        return 1
    try:
        return int(raw)
    except ValueError:
        raise RunConfigError(f"{ENV_JOBS} must be an integer, got {raw!r}")


def parse_counts(text: Optional[str]) -> Optional[Tuple[int, ...]]:
    """"3,2,3" -> (3, 2, 3)."""
    if text is None:
        return None
    try:
        return tuple(int(v) for v in text.replace(" ", "").split(","))
    except ValueError:
        raise RunConfigError(f"expected comma-separated integers, got {text!r}")


def parse_ranges(text: Optional[str]) -> Optional[Tuple[Tuple[int, ...], ...]]:
    """"2:4,1,3:5" -> ((2, 3, 4), (1,), (3, 4, 5)); bounds are inclusive."""
    if text is None:
        return None
    axes = []
    for item in text.replace(" ", "").split(","):
        try:
            if ":" in item:
                lo, hi = (int(v) for v in item.split(":"))
                axes.append(tuple(range(lo, hi + 1)))
            else:
                axes.append((int(item),))
        except ValueError:
            raise RunConfigError(f"cannot read range {item!r}; use LO:HI or a single integer")
    return tuple(axes)


@attrs.frozen
class RunConfig:
    """Fully resolved settings of one CLI invocation."""

    command: str = attrs.field(validator=attrs.validators.in_(COMMANDS))
    output_dir: str = "blockmix_out"
    input_path: Optional[str] = None
    spec: Optional[Tuple[int, ...]] = None
    ranges: Optional[Tuple[Tuple[int, ...], ...]] = None
    start: Tuple[int, ...] = (1, 1, 1)
    max: Tuple[int, ...] = (5, 5, 5)
    traditional: bool = False
    sem: SemConfig = attrs.field(factory=SemConfig)
    jobs: int = 1
    fits_per_candidate: int = 1
    standardize: bool = False
    has_header: bool = False
    delimiter: str = ","
    study: Optional[str] = None
    n: Optional[int] = None
    p: Optional[int] = None
    replicates: int = 50
    sigma_as_std: bool = False

    def validate(self) -> None:
        """Checks the flag combination of the command before any computation."""
        c = self.command
        if c in ("fit", "fit-traditional", "grid", "forward") and not self.input_path:
            raise RunConfigError(f"'{c}' needs an input CSV")
        if c == "fit" and (self.spec is None or len(self.spec) != 3):
            raise RunConfigError("'fit' needs --spec G,LMU,LSIGMA")
        if c == "fit-traditional" and (self.spec is None or len(self.spec) != 2):
            raise RunConfigError("'fit-traditional' needs --spec G,L")
        if c == "grid":
            expected = 2 if self.traditional else 3
            if self.ranges is None or len(self.ranges) != expected or not all(self.ranges):
                axes = "G,L" if self.traditional else "G,LMU,LSIGMA"
                raise RunConfigError(f"'grid' needs --range with one non-empty range per axis ({axes})")
        if self.traditional and c != "grid":
            raise RunConfigError("--traditional only applies to 'grid'")
        if c == "forward" and (len(self.start) != 3 or len(self.max) != 3):
            raise RunConfigError("--start and --max need three counts")
        if c in ("simulate", "reproduce") and self.study not in STUDIES:
            raise RunConfigError(f"'{c}' needs one of {', '.join(STUDIES)}")
        if self.replicates < 1:
            raise RunConfigError("--replicates must be >= 1")
        if self.jobs == 0:
            raise RunConfigError("--jobs must be non-zero")
        if len(self.delimiter) != 1:
            raise RunConfigError("--delimiter must be a single character")

    def as_dict(self) -> Dict[str, Any]:
        out = attrs.asdict(self, recurse=False)
        out["sem"] = self.sem.as_dict()
        return out


def _provenance(cfg: RunConfig) -> Dict[str, Any]:
    return {"version": __version__, "command": cfg.command, "config": cfg.as_dict(), "master_seed": cfg.sem.seed}


def _load(cfg: RunConfig) -> DataMatrix:
    x = load_csv(cfg.input_path, has_header=cfg.has_header, delimiter=cfg.delimiter)
    return x.standardize() if cfg.standardize else x


def _run_fit(cfg: RunConfig, out_dir: str) -> None:
    result = fit(_load(cfg), ModelSpec(*cfg.spec), cfg.sem)
    write_fit_outputs(result, out_dir, _provenance(cfg))


def _run_fit_traditional(cfg: RunConfig, out_dir: str) -> None:
    result = fit_traditional(_load(cfg), TraditionalSpec(*cfg.spec), cfg.sem)
    write_fit_outputs(result, out_dir, _provenance(cfg))


def _write_search(record, cfg: RunConfig, out_dir: str) -> None:
    payload = record.to_dict()
    payload["provenance"] = _provenance(cfg)
    write_json(payload, os.path.join(out_dir, SEARCH_FILE))
    write_fit_outputs(record.best_fit, out_dir, _provenance(cfg))


def _run_grid(cfg: RunConfig, out_dir: str) -> None:
    x = _load(cfg)
    if cfg.traditional:
        record = grid_search_traditional(x, cfg.ranges[0], cfg.ranges[1], cfg.sem,
                                         fits_per_candidate=cfg.fits_per_candidate, jobs=cfg.jobs)
    else:
        record = grid_search(x, cfg.ranges, cfg.sem, fits_per_candidate=cfg.fits_per_candidate, jobs=cfg.jobs)
    _write_search(record, cfg, out_dir)


def _run_forward(cfg: RunConfig, out_dir: str) -> None:
    search_cfg = SearchConfig(
        start=ModelSpec(*cfg.start),
        max=ModelSpec(*cfg.max),
        fits_per_candidate=cfg.fits_per_candidate,
        sem=cfg.sem,
        jobs=cfg.jobs,
    )
    _write_search(forward_search(_load(cfg), search_cfg), cfg, out_dir)


def _run_simulate(cfg: RunConfig, out_dir: str) -> None:
    gs = paper_sim_spec(cfg.study, n=cfg.n, p=cfg.p, seed=cfg.sem.seed, sigma_as_std=cfg.sigma_as_std)
    x, truth = generate(gs)
    save_csv(x, os.path.join(out_dir, "data.csv"), header=cfg.has_header, delimiter=cfg.delimiter)
    write_json(
        {"generator": gs.as_dict(), "partitions": truth.as_dict(), "provenance": _provenance(cfg)},
        os.path.join(out_dir, TRUTH_FILE),
    )


def _run_reproduce(cfg: RunConfig, out_dir: str) -> None:
    report = reproduce(cfg.study, replicates=cfg.replicates, n=cfg.n, p=cfg.p, sem=cfg.sem, jobs=cfg.jobs)
    summary = dict(report.summary)
    summary["provenance"] = _provenance(cfg)
    write_json(summary, os.path.join(out_dir, "summary.json"))
    report.replicates.to_csv(os.path.join(out_dir, "replicates.csv"), index=False, float_format="%.17g")


_HANDLERS: Dict[str, Callable[[RunConfig, str], None]] = {
    "fit": _run_fit,
    "fit-traditional": _run_fit_traditional,
    "grid": _run_grid,
    "forward": _run_forward,
    "simulate": _run_simulate,
    "reproduce": _run_reproduce,
}


def _report_error(exc: BaseException, command: Optional[str], output_dir: Optional[str]) -> int:
    _logger.exception(f"'{command}' failed")
    payload = error_payload(exc, command)
    if output_dir:
        try:
            write_json(payload, os.path.join(_checkDirectory(output_dir), ERROR_FILE))
        except (DirectoryCreationError, OSError) as e:
            _logger.warning(f"could not write {ERROR_FILE}: {e}")
    click.echo(json.dumps(payload, sort_keys=True))
    return 1


def run(cfg: RunConfig) -> int:
    """Executes one command; returns the process exit status (0 on success)."""
    try:
        cfg.validate()
        out_dir = _checkDirectory(cfg.output_dir)
        _HANDLERS[cfg.command](cfg, out_dir)
    except Exception as e:
        return _report_error(e, cfg.command, cfg.output_dir)
    _logger.info(f"'{cfg.command}' finished; outputs in {out_dir}")
    return 0


# --- click surface ---

def _apply(options):
    def decorator(f):
        for option in reversed(options):
            f = option(f)
        return f
    return decorator


sem_options = _apply([
    click.option("--burn-in", type=click.IntRange(min=0), default=20, show_default=True),
    click.option("--iterations", type=click.IntRange(min=1), default=100, show_default=True),
    click.option("--final-runs", type=click.IntRange(min=1), default=20, show_default=True,
                 help="SE sweeps at the averaged parameters used for the final partitions."),
    click.option("--seed", type=int, default=None, help="Master seed (falls back to BLOCKMIX_SEED, then 0)."),
    click.option("--init", type=click.Choice([m.value for m in InitMethod]), default="random", show_default=True),
    click.option("--output", "-o", "output_dir", type=click.Path(file_okay=False), default="blockmix_out",
                 show_default=True),
])

data_options = _apply([
    click.argument("input_path", type=click.Path(dir_okay=False)),
    click.option("--has-header", is_flag=True, help="Skip the first line."),
    click.option("--delimiter", default=",", show_default=True),
    click.option("--standardize", is_flag=True, help="Per-column z-score before fitting."),
])

search_options = _apply([
    click.option("--jobs", type=int, default=None,
                 help="Parallel candidate fits (BLOCKMIX_JOBS; -1 uses every core)."),
    click.option("--fits-per-candidate", type=click.IntRange(min=1), default=1, show_default=True),
])


# option values still in their command-line text form
_PARSERS: Dict[str, Callable[[Optional[str]], Any]] = {
    "spec": parse_counts,
    "start": parse_counts,
    "max": parse_counts,
    "ranges": parse_ranges,
}


def _execute(ctx: click.Context, command: str, burn_in: int, iterations: int, final_runs: int,
             seed: Optional[int], init: str, **fields) -> None:
    try:
        sem = SemConfig(burn_in=burn_in, iterations=iterations, final_partition_runs=final_runs,
                        seed=resolve_seed(seed), init=init)
        parsed = {k: _PARSERS[k](v) if k in _PARSERS else v for k, v in fields.items()}
        if "jobs" in parsed:
            parsed["jobs"] = resolve_jobs(parsed["jobs"])
        cfg = RunConfig(command=command, sem=sem, **parsed)
    except Exception as e:
        ctx.exit(_report_error(e, command, fields.get("output_dir")))
    ctx.exit(run(cfg))


def _peek_invocation(argv: Sequence[str]) -> Tuple[Optional[str], Optional[str]]:
    """Command name and output directory read from raw arguments that click could not parse."""
    command = next((a for a in argv if a in COMMANDS), None)
    output_dir = "blockmix_out" if command else None
    for i, arg in enumerate(argv):
        if arg in ("-o", "--output") and i + 1 < len(argv):
            output_dir = argv[i + 1]
        elif arg.startswith("--output="):
            output_dir = arg.split("=", 1)[1]
    return command, output_dir


class ReportingGroup(click.Group):
    """A click group whose usage errors exit through the same error report as failed runs."""

    def main(self, args: Optional[Sequence[str]] = None, prog_name: Optional[str] = None,
             complete_var: Optional[str] = None, standalone_mode: bool = True, **extra) -> Any:
        argv: List[str] = list(sys.argv[1:] if args is None else args)
        try:
            rv = super().main(argv, prog_name, complete_var, standalone_mode=False, **extra)
        except click.ClickException as e:
            e.show()
            rv = _report_error(e, *_peek_invocation(argv))
        except click.Abort:
            click.echo("Aborted!", err=True)
            rv = 1
        if standalone_mode:
            sys.exit(rv or 0)
        return rv


@click.group(cls=ReportingGroup)
@click.version_option(__version__, prog_name="blockmix")
@click.option("--verbose", "-v", is_flag=True, help="Log progress at INFO level.")
@click.option("--log-dir", type=click.Path(file_okay=False), default=None, help="Also write logs to this directory.")
def cli(verbose: bool, log_dir: Optional[str]):
    """Parameter-wise Gaussian co-clustering."""
    load_dotenv()
    configure_package_logging(logging.INFO if verbose else level_from_env(), log_dir)


@cli.command("fit")
@data_options
@click.option("--spec", required=True, help="G,LMU,LSIGMA")
@sem_options
@click.pass_context
def fit_command(ctx, **kwargs):
    """Fit the non-id model with fixed cluster counts."""
    _execute(ctx, "fit", **kwargs)


@cli.command("fit-traditional")
@data_options
@click.option("--spec", required=True, help="G,L")
@sem_options
@click.pass_context
def fit_traditional_command(ctx, **kwargs):
    """Fit the classical single-partition block model."""
    _execute(ctx, "fit-traditional", **kwargs)


@cli.command("grid")
@data_options
@click.option("--range", "ranges", required=True, help="Per-axis LO:HI ranges, e.g. 2:4,2:4,2:4.")
@click.option("--traditional", is_flag=True, help="Search (G, L) of the classical model instead.")
@search_options
@sem_options
@click.pass_context
def grid_command(ctx, **kwargs):
    """Exhaustive ICL-BIC search over a grid of cluster counts."""
    _execute(ctx, "grid", **kwargs)


@cli.command("forward")
@data_options
@click.option("--start", default="1,1,1", show_default=True)
@click.option("--max", default="5,5,5", show_default=True)
@search_options
@sem_options
@click.pass_context
def forward_command(ctx, **kwargs):
    """Greedy forward ICL-BIC search."""
    _execute(ctx, "forward", **kwargs)


@cli.command("simulate")
@click.argument("study", type=click.Choice(STUDIES))
@click.option("--n", type=click.IntRange(min=1), default=None, help="Override the number of rows.")
@click.option("--p", type=click.IntRange(min=1), default=None, help="Override the number of columns.")
@click.option("--sigma-as-std", is_flag=True, help="Read the printed Sigma entries as standard deviations.")
@click.option("--has-header", is_flag=True, help="Write a header line.")
@click.option("--delimiter", default=",", show_default=True)
@sem_options
@click.pass_context
def simulate_command(ctx, **kwargs):
    """Write a dataset of a reference study (data.csv) with its ground truth (truth.json)."""
    _execute(ctx, "simulate", **kwargs)


@cli.command("reproduce")
@click.argument("study", type=click.Choice(STUDIES))
@click.option("--replicates", type=click.IntRange(min=1), default=50, show_default=True)
@click.option("--n", type=click.IntRange(min=1), default=None)
@click.option("--p", type=click.IntRange(min=1), default=None)
@click.option("--jobs", type=int, default=None, help="Parallel replicates (BLOCKMIX_JOBS; -1 uses every core).")
@sem_options
@click.pass_context
def reproduce_command(ctx, **kwargs):
    """Replicate a reference study and write summary.json and replicates.csv."""
    _execute(ctx, "reproduce", **kwargs)


def main():
    cli()


if __name__ == "__main__":
    main()
