import csv
import os
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import pandas as pd

from blockmix.model import BlockmixError, DataMatrix
from blockmix.utils.log_helper import BasicLogger

_logger = BasicLogger(logger_name="blockmix.dataset")


class UnsupportedExtension(BlockmixError, ValueError):
    pass


class CsvFormatError(BlockmixError, ValueError):
    """Malformed table; ``row``/``column`` are 1-based data coordinates, ``line`` the file line."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[int] = None,
                 line: Optional[int] = None):
        self.row = row
        self.column = column
        self.line = line
        super().__init__(message)


class EmptyFileError(CsvFormatError):
    pass


class Dataset:
    """
    A delimited numeric table on disk, read into a DataMatrix.

    Args:
        file_path (str | Path): path to the file.
        has_header (bool): skip the first non-empty line.
        delimiter (str): field separator, "," by default.
    """

    _supported_extensions = [".csv", ".txt", ".tsv", ".dat", ""]

    def __init__(self, file_path: Union[str, Path], has_header: bool = False, delimiter: str = ","):
        self.file_path = Path(file_path)
        self.has_header = has_header
        self.delimiter = delimiter
        self.header: Optional[List[str]] = None

    @property
    def _extension(self) -> str:
        return self.file_path.suffix.lower()

    def _check_extension(self) -> None:
        if self._extension not in self._supported_extensions:
            raise UnsupportedExtension(f"Extension: {self._extension} is not supported")

    @property
    def _assert_file_path(self):
        if not self.file_path.exists():
            raise FileNotFoundError(f"File path does not exist: {self.file_path}")

    def _read_rows(self) -> List[List[float]]:
        rows: List[List[float]] = []
        width = None
        with open(self.file_path, "r", newline="") as f:
            reader = csv.reader(f, delimiter=self.delimiter)
            header_pending = self.has_header
            for cells in reader:
                line = reader.line_num
                if not cells or all(not c.strip() for c in cells):
                    continue
                if header_pending:
                    self.header = [c.strip() for c in cells]
                    width = len(cells)
                    header_pending = False
                    continue
                if width is None:
                    width = len(cells)
                elif len(cells) != width:
                    raise CsvFormatError(
                        f"line {line}: expected {width} fields, found {len(cells)}", line=line
                    )
                row_number = len(rows) + 1
                values = []
                for col, cell in enumerate(cells, start=1):
                    try:
                        values.append(float(cell))
                    except ValueError:
                        raise CsvFormatError(
                            f"non-numeric cell {cell.strip()!r} at row {row_number}, column {col}",
                            row=row_number, column=col, line=line,
                        )
                rows.append(values)
        return rows

    def load_data(self) -> DataMatrix:
        """
        Reads the file into a DataMatrix (rows = individuals, columns = variables).

        Raises:
            FileNotFoundError: if the path does not exist.
            EmptyFileError: if there is no data row.
            CsvFormatError: on ragged rows (with the file line) or non-numeric cells (with row and column).
        """
        self._check_extension()
        self._assert_file_path
        rows = self._read_rows()
        if not rows:
            raise EmptyFileError(f"{self.file_path} contains no data rows")
        matrix = DataMatrix(np.asarray(rows, dtype=float))
        _logger.info(f"loaded {matrix.n}x{matrix.p} matrix from {self.file_path}")
        return matrix


def load_csv(path: Union[str, Path], has_header: bool = False, delimiter: str = ",") -> DataMatrix:
    return Dataset(path, has_header=has_header, delimiter=delimiter).load_data()


def save_csv(x: DataMatrix, path: Union[str, Path], header: bool = False, delimiter: str = ",") -> str:
    """Writes a DataMatrix with full float precision; optional header ``x1..xp``."""
    frame = pd.DataFrame(x.values, columns=[f"x{j + 1}" for j in range(x.p)])
    frame.to_csv(path, index=False, header=header, sep=delimiter, float_format="%.17g")
    return os.fspath(path)
