import json

import pandas as pd

from blockmix.model import ModelSpec
from blockmix.reports import (
    LAYOUT_FILES,
    RESULT_FILE,
    TRACE_FILE,
    block_layout,
    combined_layout,
    error_payload,
    write_fit_outputs,
)
from blockmix.sem import DegenerateFitError, fit


def test_block_layout_orders_and_boundaries():
    layout = block_layout([1, 0, 1], [2, 0, 0, 2])
    assert layout["row_order"] == [1, 0, 2]
    assert layout["row_boundaries"] == [1]
    assert layout["row_groups"] == [0, 1]
    assert layout["column_order"] == [1, 2, 0, 3]
    assert layout["column_boundaries"] == [2]
    assert layout["column_groups"] == [0, 2]


def test_combined_layout_pairs():
    layout = combined_layout([0, 0], [0, 1, 0, 1], [1, 1, 0, 0], 2)
    assert layout["column_order"] == [2, 0, 3, 1]
    assert layout["column_groups"] == [[0, 0], [0, 1], [1, 0], [1, 1]]
    assert layout["n_column_groups"] == 4


def test_combined_layout_omits_empty_pairs():
    layout = combined_layout([0], [0, 0, 1], [0, 0, 0], 2)
    assert layout["column_groups"] == [[0, 0], [1, 0]]
    assert layout["column_boundaries"] == [2]


def test_write_fit_outputs(tmp_path, separated_data, quick_sem):
    x, _ = separated_data
    result = fit(x, ModelSpec(2, 2, 2), quick_sem)
    written = write_fit_outputs(result, tmp_path, {"version": "test"})

    payload = json.loads((tmp_path / RESULT_FILE).read_text())
    assert payload["model"] == "non-id"
    assert payload["spec"] == [2, 2, 2]
    assert payload["icl_bic"] == result.icl_bic
    assert payload["provenance"] == {"version": "test"}
    assert len(payload["partitions"]["z"]) == x.n
    assert len(payload["membership_probs"]["columns_sigma"]) == x.p

    trace = pd.read_csv(tmp_path / TRACE_FILE)
    assert len(trace) == quick_sem.burn_in + quick_sem.iterations

    for name, file_name in LAYOUT_FILES.items():
        layout = json.loads((tmp_path / file_name).read_text())
        assert sorted(layout["row_order"]) == list(range(x.n))
        assert written[f"layout_{name}"].endswith(file_name)


def test_error_payload():
    payload = error_payload(DegenerateFitError("too many clusters"), "grid")
    assert payload == {"error": "DegenerateFitError", "message": "too many clusters", "command": "grid"}
