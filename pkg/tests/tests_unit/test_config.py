import re
from pathlib import Path

import pytest
from pytest_data_loader import parametrize_dir

from calyx_assess.config import AssessConfig, AssessOption, SimulationConfig, load_camera, parse_table
from calyx_assess.exceptions import ConfigError, InputNotFound
from calyx_assess.types import LocalizationParams, VisibilityParams
from tests.helper import read_expected_error
from tests.paths import PATH_INVALID_CONFIGS_DIR

pytestmark = pytest.mark.unittest


def _write(path: Path, text: str) -> Path:
    path.write_text(text)
    return path


class TestAssessConfig:
    """Tests for the assessment configuration"""

    def test_defaults(self, tmp_path: Path) -> None:
        """Test the value of every option that is not set"""
        config = AssessConfig.from_file(_write(tmp_path / "config.toml", '[paths]\noutput_dir = "out"\n'))
        assert config.output_dir == tmp_path / "out"
        assert all(v is None for v in config.paths.values())
        assert config.frame_stride == 2
        assert config.threshold == 0.45
        assert config.threshold_file is None
        assert config.workers == 1
        assert config.phantom_id == config.video_id == ""
        assert config.fiducial_every == 10
        assert config.with_scale is True
        assert config.hausdorff_percentile == 99.0
        assert config.coverage_radius_mm == 1.0
        assert config.localization == LocalizationParams()
        assert config.visibility == VisibilityParams()

    def test_tables(self, tmp_path: Path) -> None:
        """Test that parameter tables override the defaults they name"""
        config = AssessConfig.from_file(
            _write(
                tmp_path / "config.toml",
                '[paths]\noutput_dir = "out"\n\n[localization]\nv_max_mm_per_s = 100.0\nretrieval_k = 3\n\n'
                "[visibility]\nmax_view_distance_mm = 30.0\n",
            )
        )
        assert config.localization == LocalizationParams(v_max_mm_per_s=100.0, retrieval_k=3)
        assert config.visibility.max_view_distance_mm == 30.0
        assert config.parameters()["localization"]["retrieval_k"] == 3
        assert list(config.parameters()) == ["frame_stride", "threshold", "localization", "visibility"]

    def test_relative_and_env_paths(self, tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
        """Test that relative paths resolve from the config's directory and environment variables expand"""
        (tmp_path / "data").mkdir()
        mesh = _write(tmp_path / "data" / "mesh.ply", "")
        query = _write(tmp_path / "query.feat", "")
        monkeypatch.setenv("CALYX_DATA", str(tmp_path / "data"))
        config = AssessConfig.from_file(
            _write(
                tmp_path / "config.toml",
                '[paths]\nmesh = "$CALYX_DATA/mesh.ply"\nquery = "query.feat"\noutput_dir = "out"\n',
            )
        )
        assert config.path(AssessOption.MESH) == mesh
        assert config.path(AssessOption.QUERY) == query
        assert config.require(AssessOption.QUERY, purpose="localization") == query

    def test_missing_input(self, tmp_path: Path) -> None:
        """Test that a configured input path must exist"""
        with pytest.raises(InputNotFound, match="paths.mesh: File not found"):
            AssessConfig.from_file(_write(tmp_path / "config.toml", '[paths]\nmesh = "nope.ply"\noutput_dir = "out"\n'))

    def test_unset_env_var(self, tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
        """Test that a path referencing an unset environment variable is a config error"""
        monkeypatch.delenv("CALYX_UNSET", raising=False)
        path = _write(tmp_path / "config.toml", '[paths]\nmesh = "${CALYX_UNSET}/mesh.ply"\noutput_dir = "out"\n')
        with pytest.raises(ConfigError, match=r"paths.mesh: Environment variable\(s\) not set: \$\{CALYX_UNSET\}"):
            AssessConfig.from_file(path)

    def test_require(self, tmp_path: Path) -> None:
        """Test that a required but unset path is a config error naming its purpose"""
        config = AssessConfig.from_file(_write(tmp_path / "config.toml", '[paths]\noutput_dir = "out"\n'))
        with pytest.raises(ConfigError, match="paths.reference: Required by localization"):
            config.require(AssessOption.REFERENCE, purpose="localization")

    def test_output_dir_is_a_file(self, tmp_path: Path) -> None:
        """Test that the output directory cannot be an existing file"""
        _write(tmp_path / "out", "")
        with pytest.raises(ConfigError, match="paths.output_dir: The path must be a directory"):
            AssessConfig.from_file(_write(tmp_path / "config.toml", '[paths]\noutput_dir = "out"\n'))

    def test_threshold_file(self, tmp_path: Path) -> None:
        """Test that the threshold can be taken from a cross-validation result"""
        _write(tmp_path / "cv.json", '{"mean_threshold": 0.4, "k": 5}')
        config = AssessConfig.from_file(
            _write(tmp_path / "config.toml", '[paths]\noutput_dir = "out"\n\n[assess]\nthreshold_file = "cv.json"\n')
        )
        assert config.threshold == 0.4
        assert config.threshold_file == tmp_path / "cv.json"

    @pytest.mark.parametrize(
        ("assess", "threshold_doc", "error"),
        [
            ('threshold_file = "cv.json"\nthreshold = 0.5', '{"mean_threshold": 0.4}', "Cannot be combined with"),
            ('threshold_file = "cv.json"', '{"k": 5}', "cv.json has no 'mean_threshold' entry"),
            ('threshold_file = "cv.json"', '{"mean_threshold": 2}', r"mean_threshold: Must be in \[0, 1\]"),
        ],
    )
    def test_invalid_threshold_file(self, tmp_path: Path, assess: str, threshold_doc: str, error: str) -> None:
        """Test the threshold file conflicts and contents"""
        _write(tmp_path / "cv.json", threshold_doc)
        path = _write(tmp_path / "config.toml", f'[paths]\noutput_dir = "out"\n\n[assess]\n{assess}\n')
        with pytest.raises(ConfigError, match=error):
            AssessConfig.from_file(path)

    @parametrize_dir(("file_path", "data"), PATH_INVALID_CONFIGS_DIR)
    def test_invalid(self, file_path: Path, data: str) -> None:
        """Test that invalid configs are rejected with a message naming the option"""
        with pytest.raises(ConfigError, match=re.escape(read_expected_error(data))) as e:
            AssessConfig.from_file(file_path)
        assert f"While parsing config {str(file_path)!r}" in e.value.__notes__

    def test_malformed_toml(self, tmp_path: Path) -> None:
        """Test that a file that is not TOML is a config error"""
        with pytest.raises(ConfigError, match="config.toml"):
            AssessConfig.from_file(_write(tmp_path / "config.toml", "[paths\n"))


class TestParseTable:
    """Tests for building parameter objects from config tables"""

    def test_unknown_option(self) -> None:
        """Test that unknown keys are listed with the accepted ones"""
        with pytest.raises(ConfigError, match="visibility.range: Unknown option. Must be one of: max_view_distance_mm"):
            parse_table({"range": 3}, VisibilityParams, "visibility")

    def test_not_a_table(self) -> None:
        """Test that a parameter section must be a table"""
        with pytest.raises(ConfigError, match="visibility: Must be a table"):
            parse_table([1, 2], VisibilityParams, "visibility")  # type: ignore[arg-type]


class TestCamera:
    """Tests for camera intrinsics files"""

    @pytest.mark.parametrize("header", ["", "[camera]\n"])
    def test_load(self, tmp_path: Path, header: str) -> None:
        """Test that intrinsics load from a flat file or a [camera] table"""
        intrinsics = "width = 640\nheight = 480\nfx = 500.0\nfy = 510.0\ncx = 320.0\ncy = 240.0\n"
        path = _write(tmp_path / "camera.toml", header + intrinsics)
        camera = load_camera(path)
        assert (camera.width, camera.height, camera.fx, camera.fy, camera.cx, camera.cy) == (
            640,
            480,
            500.0,
            510.0,
            320.0,
            240.0,
        )

    def test_missing_value(self, tmp_path: Path) -> None:
        """Test that every intrinsic parameter is required"""
        path = _write(tmp_path / "camera.toml", "width = 640\nheight = 480\nfx = 500.0\ncx = 320.0\ncy = 240.0\n")
        with pytest.raises(ConfigError, match="camera.fy: Required option is missing") as e:
            load_camera(path)
        assert f"While reading camera intrinsics {str(path)!r}" in e.value.__notes__


class TestSimulationConfig:
    """Tests for simulator specs"""

    def test_defaults(self) -> None:
        """Test the simulator defaults"""
        config = SimulationConfig({})
        assert config.phantom.n_calyces == 6
        assert config.trajectory.visit_plan == ()
        assert config.reference_trajectory.speed_mm_per_s == 10.0
        assert config.reference_visit_plan is None
        assert config.teleport_count == 0
        assert config.teleport_distance_mm == pytest.approx(50.0)
        assert config.keyframe_every == 3
        assert config.camera.width == 320
        assert config.visibility == VisibilityParams(max_view_distance_mm=15.0)
        assert (config.phantom_id, config.video_id, config.threshold) == ("phantom", "query", 0.45)

    def test_sections(self) -> None:
        """Test that every section configures its part of the simulation"""
        config = SimulationConfig(
            {
                "simulation": {"phantom_id": "p1", "threshold": 0.5},
                "phantom": {"n_calyces": 4, "seed": 3},
                "trajectory": {"visit_plan": [1, 2], "teleport_count": 2, "teleport_distance_mm": 40.0},
                "reference": {"visit_plan": [1, 2, 3, 4], "keyframe_every": 2},
                "noise": {"pixel_noise_sigma_px": 0.5},
                "visibility": {"max_view_distance_mm": 25.0},
            }
        )
        assert config.visibility.max_view_distance_mm == 25.0
        assert config.phantom.n_calyces == 4
        assert tuple(config.trajectory.visit_plan) == (1, 2)
        assert (config.teleport_count, config.teleport_distance_mm) == (2, 40.0)
        assert config.reference_visit_plan == (1, 2, 3, 4)
        assert config.keyframe_every == 2
        assert config.noise.pixel_noise_sigma_px == 0.5
        assert (config.phantom_id, config.threshold) == ("p1", 0.5)

    @pytest.mark.parametrize(
        ("document", "error"),
        [
            ({"scene": {}}, "scene: Unknown section"),
            ({"simulation": {"fps": 30}}, "simulation.fps: Unknown option"),
            ({"phantom": {"radius": 3}}, "phantom.radius: Unknown option"),
            ({"trajectory": {"teleport_count": -1}}, "trajectory.teleport_count: Must be a non-negative integer"),
            ({"camera": {"width": 320}}, "camera.height: Required option is missing"),
            ({"visibility": {"max_view_distance_mm": 0}}, "visibility.max_view_distance_mm: Must be a finite positive"),
        ],
    )
    def test_invalid(self, document: dict, error: str) -> None:
        """Test that invalid simulator specs are rejected with a message naming the option"""
        with pytest.raises(ConfigError, match=error):
            SimulationConfig(document)
