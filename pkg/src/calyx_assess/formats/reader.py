from __future__ import annotations

import csv
import json
import logging
from collections.abc import Callable
from pathlib import Path
from typing import IO, Any

from calyx_assess.compat import tomllib
from calyx_assess.constants import DEFAULT_ENCODING
from calyx_assess.exceptions import InputFormatError, InputNotFound
from calyx_assess.formats.features import read_features
from calyx_assess.formats.ply import read_ply
from calyx_assess.paths import compression_aware_open, get_effective_suffix
from calyx_assess.utils import add_error_note

__all__ = ["read_file"]

logger = logging.getLogger(__name__)


class FileReader:
    """A reader callable bound to the options used to open its files"""

    def __init__(self, reader: Callable[[IO[Any]], Any], read_options: dict[str, Any] | None = None) -> None:
        self.reader = reader
        self.read_options = dict(read_options or {"mode": "r", "encoding": DEFAULT_ENCODING})

    def read(self, path: Path) -> Any:
        with compression_aware_open(path, **self.read_options) as f:
            return self.reader(f)

    @staticmethod
    def get_reader(path: Path) -> FileReader | None:
        """Returns the file reader for the path's effective extension

        :param path: File path. A trailing compression suffix (.gz/.bz2/.xz) is skipped
        """
        return _READERS.get(get_effective_suffix(path))


def read_file(path: Path) -> Any:
    """Read a file with the reader for its extension

    :param path: File path
    :raises InputNotFound: The file does not exist
    :raises InputFormatError: The extension has no reader, or the content cannot be parsed
    """
    if not path.is_file():
        raise InputNotFound(f"File not found: {str(path)!r}")
    file_reader = FileReader.get_reader(path)
    if file_reader is None:
        raise InputFormatError(f"Unsupported file type {get_effective_suffix(path)!r} ({path.name})")
    logger.debug(f"Reading {path}")
    try:
        return file_reader.read(path)
    except (ValueError, KeyError, json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
        add_error_note(e, f"While reading {str(path)!r}")
        if isinstance(e, InputFormatError):
            raise
        raise InputFormatError(f"{path.name}: {e}") from e


def _csv_reader(f: IO[str]) -> list[dict[str, str]]:
    return list(csv.DictReader(f))


_READERS = {
    ".ply": FileReader(reader=read_ply, read_options={"mode": "rb"}),
    ".feat": FileReader(reader=read_features),
    ".csv": FileReader(reader=_csv_reader, read_options={"mode": "r", "encoding": DEFAULT_ENCODING, "newline": ""}),
    ".json": FileReader(reader=json.load),
    ".toml": FileReader(reader=tomllib.load, read_options={"mode": "rb"}),
}
