# Copyright (C) 2019 Lecida Inc
# All Rights Reserved.
#
# NOTICE:  All information contained herein is, and remains the property of
# Lecida Inc. The intellectual and technical concepts contained herein are
# proprietary to Lecida Inc and may be covered by U.S. and Foreign Patents,
# patents in process, and are protected by trade secret or copyright law.
# Dissemination or reproduction of this material is strictly forbidden unless
# prior written permission is obtained from Lecida Inc.
"""CSV writer for experiment reports."""
from __future__ import annotations

import csv
import io
import numbers
from pathlib import Path
from types import TracebackType
from typing import Any, Dict, Iterable, List, Optional, TextIO, Type, Union

FLOAT_FORMAT = '.17g'


class monolab_dialect(csv.unix_dialect):  # noqa: N801
    """CSV dialect of the monolab reports."""

    quoting = csv.QUOTE_MINIMAL
    strict = True


csv.register_dialect('monolab', monolab_dialect)


def format_value(value: Any) -> Any:
    """Format floats with 17 significant digits, leave the rest untouched."""
    if isinstance(value, bool):
        return value
    if isinstance(value, numbers.Integral):
        return int(value)
    if isinstance(value, numbers.Real):
        return format(float(value), FLOAT_FORMAT)
    return value


class CSVWriter(object):
    """CSV writer that appends to existing files with a matching header."""

    def __init__(self, path: Union[str, Path],
                 field_names: Optional[Iterable[str]] = None,
                 use_line_buffering: bool = False) -> None:
        """Initialize the CSV writer.

        Args:
            path: The path to a new or existing CSV.
            field_names: The header. If None, the keys of the first row are
                used, or the header of the existing file.
            use_line_buffering: Whether to flush after every row.

        Raises:
            ValueError: If ``field_names`` differs from the header of an
                existing file.

        """
        self._path = Path(path)
        self._field_names: Optional[List[str]] = (
            list(field_names) if field_names is not None else None
        )

        self._file_already_had_header = False
        if self._path.exists():
            with self._path.open(newline='') as csv_file:
                reader = csv.reader(csv_file, dialect='monolab')
                header = next(reader, None)
            if header is not None:
                if (self._field_names is not None
                        and header != self._field_names):
                    raise ValueError(f'Field names {self._field_names} do '
                                     f'not match the header {header} of '
                                     f'{self._path}.')
                self._field_names = header
                self._file_already_had_header = True

        self._file: Optional[TextIO] = None
        self._dict_writer: Optional[csv.DictWriter] = None
        self._use_line_buffering = use_line_buffering

    def __enter__(self) -> CSVWriter:
        """Enter the context manager, just returning self."""
        return self

    def __exit__(self, exc_type: Optional[Type[BaseException]],
                 exc_value: Optional[BaseException],
                 traceback: Optional[TracebackType]) -> Optional[bool]:
        """Exit the context manager, closing open file."""
        if self._file is not None:
            self._file.close()
        return None

    def _get_dict_writer(self, row: Dict[str, Any]) -> csv.DictWriter:
        if self._field_names is None:
            self._field_names = list(row.keys())

        buffering = 1 if self._use_line_buffering else io.DEFAULT_BUFFER_SIZE
        self._file = self._path.open('a', newline='', buffering=buffering)

        dict_writer = csv.DictWriter(f=self._file, dialect='monolab',
                                     fieldnames=self._field_names)
        if not self._file_already_had_header:
            dict_writer.writeheader()
        return dict_writer

    def write_row(self, **row: Any) -> None:
        """Write a row to the csv file."""
        if self._dict_writer is None:
            self._dict_writer = self._get_dict_writer(row=row)
        self._dict_writer.writerow(
            {k: format_value(v) for k, v in row.items()}
        )

    def write_rows(self, rows: Iterable[Dict[str, Any]]) -> None:
        """Write multiple rows to the csv file."""
        for row in rows:
            self.write_row(**row)
