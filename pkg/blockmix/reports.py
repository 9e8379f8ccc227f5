"""
Files written by the command-line front end.

    result.json             FitResult summary, partitions, membership frequencies, provenance
    trace.csv               one row per SEM sweep (ChainTrace.to_frame columns)
    layout_means.json       rows and columns reordered by (z, w_mu) with block boundaries
    layout_variances.json   same for (z, w_sigma)
    layout_combined.json    columns grouped by the non-empty (w_mu, w_sigma) pairs
    search.json             SearchRecord.to_dict plus provenance
    truth.json              generator parameters and true partitions of a simulated dataset
    error.json              {"error", "message", "command"} on failure
"""
import json
import os
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np

from blockmix.sem import FitResult

TRACE_FILE = "trace.csv"
RESULT_FILE = "result.json"
SEARCH_FILE = "search.json"
TRUTH_FILE = "truth.json"
ERROR_FILE = "error.json"
LAYOUT_FILES = {
    "means": "layout_means.json",
    "variances": "layout_variances.json",
    "combined": "layout_combined.json",
}


def write_json(payload: Dict[str, Any], path: Union[str, Path]) -> str:
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return os.fspath(path)


def _segments(sorted_keys: np.ndarray):
    """Boundaries (exclusive end offsets except the last) and the key of each run of equal keys."""
    if sorted_keys.size == 0:
        return [], []
    change = np.flatnonzero(sorted_keys[1:] != sorted_keys[:-1]) + 1
    starts = np.concatenate([[0], change])
    return change.tolist(), sorted_keys[starts].tolist()


def block_layout(row_labels: Sequence[int], column_labels: Sequence[int]) -> Dict[str, Any]:
    """Row and column orders that make the blocks contiguous, with the boundaries between groups."""
    rows = np.asarray(row_labels)
    cols = np.asarray(column_labels)
    row_order = np.argsort(rows, kind="stable")
    col_order = np.argsort(cols, kind="stable")
    row_bounds, row_groups = _segments(rows[row_order])
    col_bounds, col_groups = _segments(cols[col_order])
    return {
        "row_order": row_order.tolist(),
        "column_order": col_order.tolist(),
        "row_boundaries": row_bounds,
        "column_boundaries": col_bounds,
        "row_groups": row_groups,
        "column_groups": col_groups,
    }


def combined_layout(row_labels, w_mu, w_sigma, Lsigma: int) -> Dict[str, Any]:
    """Layout with columns grouped by (mean cluster, variance cluster); pairs without columns are omitted."""
    w_mu = np.asarray(w_mu)
    w_sigma = np.asarray(w_sigma)
    layout = block_layout(row_labels, w_mu * Lsigma + w_sigma)
    layout["column_groups"] = [[int(k // Lsigma), int(k % Lsigma)] for k in layout["column_groups"]]
    layout["n_column_groups"] = len(layout["column_groups"])
    return layout


def fit_layouts(result: FitResult) -> Dict[str, Dict[str, Any]]:
    parts = result.partitions
    return {
        "means": block_layout(parts.z, parts.w_mu),
        "variances": block_layout(parts.z, parts.w_sigma),
        "combined": combined_layout(parts.z, parts.w_mu, parts.w_sigma, result.spec.Lsigma),
    }


def fit_payload(result: FitResult, provenance: Dict[str, Any]) -> Dict[str, Any]:
    payload = dict(result.summary())
    payload["partitions"] = result.partitions.as_dict()
    payload["membership_probs"] = {k: v.tolist() for k, v in result.membership_probs.items()}
    payload["provenance"] = provenance
    return payload


def write_fit_outputs(result: FitResult, out_dir: Union[str, Path], provenance: Dict[str, Any]) -> Dict[str, str]:
    """Writes result.json, trace.csv and the three layout files; returns their paths."""
    out_dir = Path(out_dir)
    written = {"result": write_json(fit_payload(result, provenance), out_dir / RESULT_FILE)}
    trace_path = out_dir / TRACE_FILE
    result.trace.to_frame().to_csv(trace_path, index=False, float_format="%.17g")
    written["trace"] = os.fspath(trace_path)
    for name, layout in fit_layouts(result).items():
        written[f"layout_{name}"] = write_json(layout, out_dir / LAYOUT_FILES[name])
    return written


def error_payload(exc: BaseException, command: Optional[str]) -> Dict[str, Any]:
    return {"error": type(exc).__name__, "message": str(exc), "command": command}
