"""TOML configuration of the assess, localize and metrics subcommands, the simulator and camera files.

Relative paths are resolved against the directory of the file they are written in. ``~`` and environment variables
(``$VAR``, ``${VAR}``) are expanded.
"""

from __future__ import annotations

import dataclasses
import logging
from collections.abc import Mapping
from pathlib import Path
from typing import Any, TypeVar

from calyx_assess.compat import StrEnum
from calyx_assess.constants import (
    DEFAULT_COVERAGE_RADIUS_MM,
    DEFAULT_FIDUCIAL_EVERY,
    DEFAULT_FRAME_STRIDE,
    DEFAULT_HAUSDORFF_PERCENTILE,
    DEFAULT_VISITATION_THRESHOLD,
    SIMULATED_MAX_VIEW_DISTANCE_MM,
)
from calyx_assess.exceptions import ConfigError, InputFormatError
from calyx_assess.formats.reader import read_file
from calyx_assess.geometry.camera import PinholeCamera
from calyx_assess.paths import resolve_input_path
from calyx_assess.synth.features import NoiseSpec
from calyx_assess.synth.phantom import PhantomSpec
from calyx_assess.synth.trajectory import TrajectorySpec
from calyx_assess.types import LocalizationParams, VisibilityParams
from calyx_assess.utils import add_error_note
from calyx_assess.validators import (
    validate_bool,
    validate_fraction,
    validate_int_list,
    validate_percentile,
    validate_positive,
    validate_positive_int,
    validate_str,
)

__all__ = ["AssessConfig", "AssessOption", "SimulationConfig", "load_camera", "parse_table"]

logger = logging.getLogger(__name__)

T = TypeVar("T")

_SECTIONS = ("paths", "assess", "localization", "visibility", "metrics")
# Reference explorations are slow and thorough
_REFERENCE_SPEED_MM_PER_S = 10.0


class AssessOption(StrEnum):
    MESH = "paths.mesh"
    REFERENCE = "paths.reference"
    REFERENCE_CLOUD = "paths.reference_cloud"
    QUERY = "paths.query"
    CAMERA = "paths.camera"
    OUTPUT_DIR = "paths.output_dir"
    REGISTRATION = "paths.registration"
    GROUND_TRUTH = "paths.ground_truth"
    QUERY_TRAJECTORY = "paths.query_trajectory"
    QUERY_GROUND_TRUTH = "paths.query_ground_truth"
    FRAME_STRIDE = "assess.frame_stride"
    THRESHOLD = "assess.threshold"
    THRESHOLD_FILE = "assess.threshold_file"
    WORKERS = "assess.workers"
    PHANTOM_ID = "assess.phantom_id"
    VIDEO_ID = "assess.video_id"
    FIDUCIAL_EVERY = "metrics.fiducial_every"
    WITH_SCALE = "metrics.with_scale"
    HAUSDORFF_PERCENTILE = "metrics.hausdorff_percentile"
    COVERAGE_RADIUS_MM = "metrics.coverage_radius_mm"

    @property
    def section(self) -> str:
        return self.value.partition(".")[0]

    @property
    def key(self) -> str:
        return self.value.partition(".")[2]


_INPUT_PATHS = (
    AssessOption.MESH,
    AssessOption.REFERENCE,
    AssessOption.REFERENCE_CLOUD,
    AssessOption.QUERY,
    AssessOption.CAMERA,
    AssessOption.REGISTRATION,
    AssessOption.GROUND_TRUTH,
    AssessOption.QUERY_TRAJECTORY,
    AssessOption.QUERY_GROUND_TRUTH,
)


class AssessConfig:
    """Parsed and validated configuration of one assessment"""

    def __init__(self, document: Mapping[str, Any], *, base_dir: Path) -> None:
        """Parse and validate every option.

        :param document: Parsed TOML document
        :param base_dir: Directory relative paths are resolved from
        """
        self._document = document
        self._base_dir = base_dir
        self._check_layout()
        self.paths: dict[AssessOption, Path | None] = {opt: self._parse_option(opt) for opt in _INPUT_PATHS}
        self.output_dir: Path = self._parse_option(AssessOption.OUTPUT_DIR)
        self.frame_stride: int = self._parse_option(AssessOption.FRAME_STRIDE)
        self.workers: int = self._parse_option(AssessOption.WORKERS)
        self.phantom_id: str = self._parse_option(AssessOption.PHANTOM_ID)
        self.video_id: str = self._parse_option(AssessOption.VIDEO_ID)
        self.threshold_file: Path | None = self._parse_option(AssessOption.THRESHOLD_FILE)
        self.threshold: float = self._parse_option(AssessOption.THRESHOLD)
        self.fiducial_every: int = self._parse_option(AssessOption.FIDUCIAL_EVERY)
        self.with_scale: bool = self._parse_option(AssessOption.WITH_SCALE)
        self.hausdorff_percentile: float = self._parse_option(AssessOption.HAUSDORFF_PERCENTILE)
        self.coverage_radius_mm: float = self._parse_option(AssessOption.COVERAGE_RADIUS_MM)
        self.localization = parse_table(self._document.get("localization", {}), LocalizationParams, "localization")
        self.visibility = parse_table(self._document.get("visibility", {}), VisibilityParams, "visibility")

    @classmethod
    def from_file(cls, path: Path) -> AssessConfig:
        """Read a TOML configuration file

        :param path: Config file path
        """
        document = _read_toml(path)
        try:
            config = cls(document, base_dir=path.resolve().parent)
        except ConfigError as e:
            add_error_note(e, f"While parsing config {str(path)!r}")
            raise
        logger.debug(f"Loaded config {path}")
        return config

    def path(self, option: AssessOption) -> Path | None:
        return self.paths[option]

    def require(self, option: AssessOption, *, purpose: str) -> Path:
        """Return a configured input path, or raise ConfigError when it is not set

        :param option: Path option
        :param purpose: What needs the path, used in the error message
        """
        value = self.paths[option]
        if value is None:
            raise ConfigError(f"{option}: Required by {purpose}")
        return value

    def parameters(self) -> dict[str, Any]:
        """Settings that affect the outcome of an assessment, in a fixed order"""
        return {
            "frame_stride": self.frame_stride,
            "threshold": self.threshold,
            "localization": dataclasses.asdict(self.localization),
            "visibility": dataclasses.asdict(self.visibility),
        }

    def _check_layout(self) -> None:
        known: dict[str, set[str]] = {section: set() for section in _SECTIONS}
        for opt in AssessOption:
            known[opt.section].add(opt.key)
        for section, table in self._document.items():
            if section not in _SECTIONS:
                raise ConfigError(f"{section}: Unknown section. Must be one of: {', '.join(_SECTIONS)}")
            if not isinstance(table, Mapping):
                raise ConfigError(f"{section}: Must be a table")
            if section in ("localization", "visibility"):
                continue
            unknown = sorted(set(table) - known[section])
            if unknown:
                raise ConfigError(f"{section}.{unknown[0]}: Unknown option")

    def _get(self, option: AssessOption) -> Any:
        return self._document.get(option.section, {}).get(option.key)

    def _parse_option(self, option: AssessOption) -> Any:
        """Parse one option and perform additional validation if needed.

        :param option: Config option
        """
        v = self._get(option)
        try:
            if option in _INPUT_PATHS or option == AssessOption.THRESHOLD_FILE:
                if v is None:
                    return None
                return resolve_input_path(validate_str(option, v), base_dir=self._base_dir, option=option)
            elif option == AssessOption.OUTPUT_DIR:
                if v is None:
                    raise ValueError("Required option is missing")
                path = resolve_input_path(
                    validate_str(option, v), base_dir=self._base_dir, option=option, must_exist=False
                )
                if path.is_file():
                    raise ValueError(f"The path must be a directory: {str(path)!r}")
                return path
            elif option == AssessOption.FRAME_STRIDE:
                return validate_positive_int(option, DEFAULT_FRAME_STRIDE if v is None else v)
            elif option == AssessOption.WORKERS:
                return validate_positive_int(option, 1 if v is None else v)
            elif option in (AssessOption.PHANTOM_ID, AssessOption.VIDEO_ID):
                return "" if v is None else validate_str(option, v)
            elif option == AssessOption.THRESHOLD:
                if v is not None and self.threshold_file is not None:
                    raise ValueError(f"Cannot be combined with {AssessOption.THRESHOLD_FILE}")
                if self.threshold_file is not None:
                    return self._read_threshold_file(self.threshold_file)
                return validate_fraction(option, DEFAULT_VISITATION_THRESHOLD if v is None else v)
            elif option == AssessOption.FIDUCIAL_EVERY:
                return validate_positive_int(option, DEFAULT_FIDUCIAL_EVERY if v is None else v)
            elif option == AssessOption.WITH_SCALE:
                return validate_bool(option, True if v is None else v)
            elif option == AssessOption.HAUSDORFF_PERCENTILE:
                return validate_percentile(option, DEFAULT_HAUSDORFF_PERCENTILE if v is None else v)
            elif option == AssessOption.COVERAGE_RADIUS_MM:
                return validate_positive(option, DEFAULT_COVERAGE_RADIUS_MM if v is None else v)
            return v
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            msg = str(e)
            prefix = f"{option}: "
            raise ConfigError(msg if msg.startswith(prefix) else prefix + msg) from e

    @staticmethod
    def _read_threshold_file(path: Path) -> float:
        doc = read_file(path)
        if not isinstance(doc, Mapping) or "mean_threshold" not in doc:
            raise ValueError(f"{path.name} has no 'mean_threshold' entry")
        return validate_fraction("mean_threshold", doc["mean_threshold"])


def parse_table(table: Mapping[str, Any], cls: type[T], section: str) -> T:
    """Build a parameter dataclass from a config table whose keys are the dataclass fields

    :param table: Config table
    :param cls: Frozen dataclass type
    :param section: Table name used in error messages
    """
    if not isinstance(table, Mapping):
        raise ConfigError(f"{section}: Must be a table")
    fields = [f for f in dataclasses.fields(cls) if f.init]  # type: ignore[arg-type]
    names = [f.name for f in fields]
    unknown = sorted(set(table) - set(names))
    if unknown:
        raise ConfigError(f"{section}.{unknown[0]}: Unknown option. Must be one of: {', '.join(names)}")
    for f in fields:
        no_default = f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING
        if no_default and f.name not in table:
            raise ConfigError(f"{section}.{f.name}: Required option is missing")
    try:
        return cls(**table)
    except (TypeError, ValueError) as e:
        msg = str(e)
        raise ConfigError(msg if msg.startswith(f"{section}.") else f"{section}.{msg}") from e


def load_camera(path: Path) -> PinholeCamera:
    """Read camera intrinsics from a TOML file holding fx, fy, cx, cy, width and height

    A top-level [camera] table is accepted as well.
    """
    document = _read_toml(path)
    table = document.get("camera", document)
    try:
        return parse_table(table, PinholeCamera, "camera")
    except ConfigError as e:
        add_error_note(e, f"While reading camera intrinsics {str(path)!r}")
        raise


class SimulationConfig:
    """Parsed simulator spec: phantom, ground-truth explorations, feature noise, camera and assessment visibility"""

    _TRAJECTORY_EXTRAS = ("teleport_count", "teleport_distance_mm")
    _REFERENCE_EXTRAS = ("keyframe_every",)
    _SECTIONS = ("simulation", "phantom", "trajectory", "noise", "camera", "reference", "visibility")

    def __init__(self, document: Mapping[str, Any]) -> None:
        for section in document:
            if section not in self._SECTIONS:
                raise ConfigError(f"{section}: Unknown section. Must be one of: {', '.join(self._SECTIONS)}")
        simulation = dict(document.get("simulation", {}))
        trajectory = dict(document.get("trajectory", {}))
        reference = dict(document.get("reference", {}))
        extras = {k: trajectory.pop(k) for k in self._TRAJECTORY_EXTRAS if k in trajectory}
        reference_extras = {k: reference.pop(k) for k in self._REFERENCE_EXTRAS if k in reference}
        self.phantom = parse_table(document.get("phantom", {}), PhantomSpec, "phantom")
        self.trajectory = parse_table(trajectory, TrajectorySpec, "trajectory")
        self.noise = parse_table(document.get("noise", {}), NoiseSpec, "noise")
        camera = document.get("camera")
        self.camera = parse_table(camera, PinholeCamera, "camera") if camera is not None else _default_camera()
        visibility = dict(document.get("visibility", {}))
        visibility.setdefault("max_view_distance_mm", SIMULATED_MAX_VIEW_DISTANCE_MM)
        self.visibility = parse_table(visibility, VisibilityParams, "visibility")
        plan = reference.pop("visit_plan", None)
        reference.setdefault("speed_mm_per_s", _REFERENCE_SPEED_MM_PER_S)
        self.reference_trajectory = parse_table(reference, TrajectorySpec, "reference")
        try:
            self.reference_visit_plan = None if plan is None else validate_int_list("reference.visit_plan", plan)
            self.teleport_count = validate_positive_int(
                "trajectory.teleport_count", extras.get("teleport_count", 0), allow_zero=True
            )
            self.teleport_distance_mm = validate_positive(
                "trajectory.teleport_distance_mm", extras.get("teleport_distance_mm", 1500.0 / 30.0)
            )
            self.keyframe_every = validate_positive_int(
                "reference.keyframe_every", reference_extras.get("keyframe_every", 3)
            )
            self.phantom_id = validate_str("simulation.phantom_id", simulation.pop("phantom_id", "phantom"))
            self.video_id = validate_str("simulation.video_id", simulation.pop("video_id", "query"))
            self.threshold = validate_fraction(
                "simulation.threshold", simulation.pop("threshold", DEFAULT_VISITATION_THRESHOLD)
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e
        if simulation:
            raise ConfigError(f"simulation.{sorted(simulation)[0]}: Unknown option")

    @classmethod
    def from_file(cls, path: Path) -> SimulationConfig:
        document = _read_toml(path)
        try:
            return cls(document)
        except ConfigError as e:
            add_error_note(e, f"While parsing simulator spec {str(path)!r}")
            raise


def _default_camera() -> PinholeCamera:
    return PinholeCamera(width=320, height=240, fx=160.0, fy=160.0, cx=160.0, cy=120.0)


def _read_toml(path: Path) -> Mapping[str, Any]:
    try:
        document = read_file(path)
    except InputFormatError as e:
        raise ConfigError(str(e)) from e
    if not isinstance(document, Mapping):
        raise ConfigError(f"{path.name}: Expected a TOML document")
    return document
