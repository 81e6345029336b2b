from __future__ import annotations

import sys

if sys.version_info >= (3, 11):
    import tomllib
    from enum import StrEnum
else:
    from enum import Enum

    import tomli as tomllib

    class StrEnum(str, Enum):
        """enum.StrEnum: auto() values are the lowercased member names"""

        @staticmethod
        def _generate_next_value_(name: str, start: int, count: int, last_values: list[object]) -> str:
            return name.lower()

        def __str__(self) -> str:
            return str(self.value)


__all__ = ["StrEnum", "tomllib"]
