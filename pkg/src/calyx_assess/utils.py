from __future__ import annotations

import logging
import sys
import time
from collections.abc import Iterator
from contextlib import contextmanager

logger = logging.getLogger(__name__)


def add_error_note(exc: Exception, note: str) -> None:
    """Add a contextual note to an exception.

    On Python 3.11+, uses ``Exception.add_note()``.
    On older versions, stores notes in ``__notes__``.
    """
    if sys.version_info >= (3, 11):
        exc.add_note(note)
    else:
        notes = getattr(exc, "__notes__", None)
        if not isinstance(notes, list):
            notes = []
        notes.append(note)

        try:
            setattr(exc, "__notes__", notes)
        except Exception:
            pass


@contextmanager
def log_duration(stage: str, *, level: int = logging.INFO) -> Iterator[None]:
    """Log how long the wrapped stage took

    :param stage: Human readable stage name
    :param level: Logging level of the completion message
    """
    start = time.perf_counter()
    logger.debug(f"{stage}: started")
    try:
        yield
    finally:
        logger.log(level, f"{stage}: finished in {time.perf_counter() - start:.2f}s")
