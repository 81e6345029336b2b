from __future__ import annotations


class CalyxAssessError(Exception):
    """Base class for all errors raised by calyx-assess"""


class InputNotFound(CalyxAssessError, FileNotFoundError):
    """Raised when a configured input file cannot be located"""


class ConfigError(CalyxAssessError, ValueError):
    """Raised when a configuration document is malformed or fails validation"""


class InputFormatError(CalyxAssessError, ValueError):
    """Raised when an input file cannot be parsed"""


class MeshFormatError(InputFormatError):
    """Raised when a mesh or point cloud is malformed"""


class LabelCountMismatch(MeshFormatError):
    """Raised when the number of per-vertex labels differs from the vertex count"""


class NonContiguousLabels(MeshFormatError):
    """Raised when calyx ids do not form the contiguous range 1..K"""


class UndersizedCalyx(MeshFormatError):
    """Raised when a calyx has fewer vertices than the validation minimum"""


class WatertightnessRequired(CalyxAssessError):
    """Raised when an inside/outside query is made against a mesh that is not watertight"""


class InitializationTooFar(CalyxAssessError):
    """Raised when ICP finds no correspondence under the cutoff at its first iteration"""


class DegenerateFiducials(CalyxAssessError, ValueError):
    """Raised when fewer than 3 non-collinear fiducial pairs are available"""


class DimensionMismatch(CalyxAssessError, ValueError):
    """Raised when descriptor dimensions differ between a query and the reference model"""


class NonMonotonicTimestamps(CalyxAssessError, ValueError):
    """Raised when frame timestamps are not strictly increasing"""


class DegenerateFold(CalyxAssessError):
    """Raised when a cross-validation training split lacks visited or missed calyces"""

    def __init__(self, message: str, *, repeat: int | None = None, fold: int | None = None) -> None:
        super().__init__(message)
        self.repeat = repeat
        self.fold = fold


class GenerationFailed(CalyxAssessError):
    """Raised when a synthetic phantom cannot be generated from its spec"""


class UnreachableCalyx(CalyxAssessError, ValueError):
    """Raised when a trajectory visit plan names a calyx the phantom does not have"""
