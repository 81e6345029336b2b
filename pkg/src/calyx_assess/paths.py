from __future__ import annotations

import bz2
import gzip
import lzma
import os
import re
from collections.abc import Callable
from pathlib import Path
from typing import IO, Any, BinaryIO, Literal, TextIO, overload

from calyx_assess.exceptions import InputNotFound
from calyx_assess.utils import add_error_note

__all__ = [
    "SUPPORTED_COMPRESSION_EXTENSIONS",
    "compression_aware_open",
    "expand_env_vars",
    "get_effective_suffix",
    "resolve_input_path",
]

_COMPRESSION_OPENERS: dict[str, Callable[..., IO[Any]]] = {
    ".gz": gzip.open,
    ".bz2": bz2.open,
    ".xz": lzma.open,
}
SUPPORTED_COMPRESSION_EXTENSIONS: tuple[str, ...] = tuple(_COMPRESSION_OPENERS)
_UNRESOLVED_ENV_VAR = re.compile(r"\$[A-Za-z_]\w*|\$\{[A-Za-z_]\w*\}")


def expand_env_vars(value: Path | str) -> str:
    """Expand $VAR and ${VAR} references

    :param value: Path as written in a configuration file
    :raises ValueError: A referenced variable is not set
    """
    expanded = os.path.expandvars(str(value))
    if unresolved := _UNRESOLVED_ENV_VAR.findall(expanded):
        raise ValueError(f"Environment variable(s) not set: {', '.join(unresolved)} in {str(value)!r}")
    return expanded


def resolve_input_path(value: Path | str, *, base_dir: Path, option: str, must_exist: bool = True) -> Path:
    """Resolve a path given in a configuration document.

    Environment variables are expanded first. Relative paths are resolved against base_dir (the directory the
    configuration file lives in).

    :param value: Path as written in the configuration
    :param base_dir: Directory relative paths are resolved from
    :param option: Fully qualified option name used in error messages
    :param must_exist: Raise InputNotFound when the resolved path does not exist
    """
    try:
        path = Path(expand_env_vars(value)).expanduser()
    except ValueError as e:
        add_error_note(e, f"While resolving option {option!r}")
        raise
    if not path.is_absolute():
        path = base_dir / path
    if must_exist and not path.exists():
        raise InputNotFound(f"{option}: File not found: {str(path)!r}")
    return path


def get_effective_suffix(path: Path) -> str:
    """The format-bearing suffix of path: phantom.ply.gz and phantom.ply both give .ply"""
    suffixes = [s.lower() for s in path.suffixes]
    if len(suffixes) >= 2 and suffixes[-1] in _COMPRESSION_OPENERS:
        return suffixes[-2]
    return path.suffix.lower()


@overload
def compression_aware_open(path: Path, *, mode: Literal["r", "rt", "w", "wt"], **kwargs: Any) -> TextIO: ...


@overload
def compression_aware_open(path: Path, *, mode: Literal["rb", "wb"], **kwargs: Any) -> BinaryIO: ...


def compression_aware_open(path: Path, *, mode: str = "r", **kwargs: Any) -> IO[Any]:
    """Open a plain or compressed file (chosen by its last suffix) with the semantics of the builtin open()

    :param path: File path
    :param mode: "r", "w" (text) or "rb", "wb" (binary)
    :param kwargs: Forwarded to the opener (encoding, newline)
    """
    opener = _COMPRESSION_OPENERS.get(path.suffix.lower())
    if opener is None:
        return open(path, mode, **kwargs)
    # compression openers treat a bare "r"/"w" as binary
    if mode in ("r", "w"):
        mode += "t"
    return opener(path, mode, **kwargs)
