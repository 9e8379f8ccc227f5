import numpy as np
import pytest

from blockmix.model import DataMatrix, DomainError
from blockmix.utils.dataset import (
    CsvFormatError,
    Dataset,
    EmptyFileError,
    UnsupportedExtension,
    load_csv,
    save_csv,
)


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_plain_matrix(tmp_path):
    x = load_csv(write(tmp_path, "1,2,3\n4,5,6\n"))
    assert isinstance(x, DataMatrix)
    assert x.values.tolist() == [[1, 2, 3], [4, 5, 6]]


def test_header_and_blank_lines(tmp_path):
    dataset = Dataset(write(tmp_path, "a,b\n\n1.5,-2\n\n3e2,0\n"), has_header=True)
    x = dataset.load_data()
    assert dataset.header == ["a", "b"]
    assert x.values.tolist() == [[1.5, -2.0], [300.0, 0.0]]


def test_other_delimiter(tmp_path):
    x = load_csv(write(tmp_path, "1;2\n3;4\n", "data.txt"), delimiter=";")
    assert x.values.tolist() == [[1, 2], [3, 4]]


def test_ragged_row_reports_line(tmp_path):
    with pytest.raises(CsvFormatError) as info:
        load_csv(write(tmp_path, "1,2\n3,4\n5\n"))
    assert info.value.line == 3


def test_non_numeric_cell_reports_coordinates(tmp_path):
    with pytest.raises(CsvFormatError) as info:
        load_csv(write(tmp_path, "a,b\n1,2\n3,x\n"), has_header=True)
    assert (info.value.row, info.value.column, info.value.line) == (2, 2, 3)
    assert "'x'" in str(info.value)


def test_non_finite_cell(tmp_path):
    with pytest.raises(DomainError, match="row 1, column 2"):
        load_csv(write(tmp_path, "1,nan\n2,3\n"))


def test_empty_file(tmp_path):
    with pytest.raises(EmptyFileError):
        load_csv(write(tmp_path, "\n\n"))
    with pytest.raises(EmptyFileError):
        load_csv(write(tmp_path, "a,b\n", "header_only.csv"), has_header=True)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_csv(tmp_path / "absent.csv")


def test_unsupported_extension(tmp_path):
    with pytest.raises(UnsupportedExtension):
        load_csv(write(tmp_path, "1,2\n", "data.xlsx"))


def test_save_keeps_full_precision(tmp_path):
    values = np.array([[1 / 3, -2e-17], [np.pi, 1e300]])
    path = save_csv(DataMatrix(values), tmp_path / "out.csv", header=True)
    assert open(path).readline().strip() == "x1,x2"
    np.testing.assert_array_equal(load_csv(path, has_header=True).values, values)
