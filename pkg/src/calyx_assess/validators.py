from __future__ import annotations

import math
from typing import Any


def validate_positive(name: str, value: Any, *, allow_zero: bool = False) -> float:
    """Validate a finite positive number and return it as float

    :param name: Option name used in error messages
    :param value: Value to validate
    :param allow_zero: Accept 0 as a valid value
    """
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TypeError(f"{name}: Must be a number, but got {_get_type_name(value)}")
    if not math.isfinite(value) or value < 0 or (value == 0 and not allow_zero):
        qualifier = "non-negative" if allow_zero else "positive"
        raise ValueError(f"{name}: Must be a finite {qualifier} number, but got {value!r}")
    return float(value)


def validate_positive_int(name: str, value: Any, *, allow_zero: bool = False) -> int:
    """Validate a positive integer

    :param name: Option name used in error messages
    :param value: Value to validate
    :param allow_zero: Accept 0 as a valid value
    """
    if isinstance(value, bool) or not isinstance(value, int):
        raise TypeError(f"{name}: Must be an integer, but got {_get_type_name(value)}")
    if value < 0 or (value == 0 and not allow_zero):
        qualifier = "non-negative" if allow_zero else "positive"
        raise ValueError(f"{name}: Must be a {qualifier} integer, but got {value!r}")
    return value


def validate_fraction(name: str, value: Any, *, inclusive_high: bool = True, inclusive_low: bool = True) -> float:
    """Validate a number in the unit interval

    :param name: Option name used in error messages
    :param value: Value to validate
    :param inclusive_high: Accept 1 as a valid value
    :param inclusive_low: Accept 0 as a valid value
    """
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TypeError(f"{name}: Must be a number, but got {_get_type_name(value)}")
    low_ok = value >= 0 if inclusive_low else value > 0
    high_ok = value <= 1 if inclusive_high else value < 1
    if not (math.isfinite(value) and low_ok and high_ok):
        low = "[" if inclusive_low else "("
        high = "]" if inclusive_high else ")"
        raise ValueError(f"{name}: Must be in {low}0, 1{high}, but got {value!r}")
    return float(value)


def validate_percentile(name: str, value: Any) -> float:
    """Validate a percentile in (0, 100]

    :param name: Option name used in error messages
    :param value: Value to validate
    """
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TypeError(f"{name}: Must be a number, but got {_get_type_name(value)}")
    if not (0 < value <= 100):
        raise ValueError(f"{name}: Must be in (0, 100], but got {value!r}")
    return float(value)


def validate_bool(name: str, value: Any) -> bool:
    if not isinstance(value, bool):
        raise TypeError(f"{name}: Must be a boolean, but got {_get_type_name(value)}")
    return value


def validate_str(name: str, value: Any) -> str:
    if not isinstance(value, str):
        raise TypeError(f"{name}: Must be a string, but got {_get_type_name(value)}")
    return value


def validate_int_list(name: str, value: Any) -> tuple[int, ...]:
    """Validate a list of integers

    :param name: Option name used in error messages
    :param value: Value to validate
    """
    if isinstance(value, (str, bytes)) or not isinstance(value, (list, tuple)):
        raise TypeError(f"{name}: Must be a list of integers, but got {_get_type_name(value)}")
    for x in value:
        if isinstance(x, bool) or not isinstance(x, int):
            raise TypeError(f"{name}: Must contain only integers, but got {_get_type_name(x)}")
    return tuple(value)


def _get_type_name(obj: Any) -> str:
    return type(obj).__name__
