from pathlib import Path
from typing import Any

import numpy as np
import pytest
from pytest_mock import MockerFixture

from calyx_assess.config import AssessConfig
from calyx_assess.constants import COLORED_MESH_FILE_NAME, REPORT_FILE_NAME, TRAJECTORY_FILE_NAME
from calyx_assess.formats.features import write_features
from calyx_assess.formats.tables import read_trajectory
from calyx_assess.geometry.camera import PinholeCamera
from calyx_assess.phantom import LabeledMesh, save_labeled_mesh
from calyx_assess.registration import PointCloud, save_point_cloud
from calyx_assess.runner import apply_stride, assess_video, run_assess
from calyx_assess.synth import NoiseSpec, TrajectorySpec, generate_trajectory, synthesize_features
from calyx_assess.synth.phantom import CenterlineTree
from calyx_assess.types import FrameStatus, Keypoints, LocalizedFrame, QueryFrame, Visitation

pytestmark = pytest.mark.unittest

VIDEO_FRAMES = 1800


def _query_video(n: int) -> list[QueryFrame]:
    return [
        QueryFrame(frame_id=i, timestamp=i / 30.0, global_descriptor=np.ones(1), keypoints=Keypoints.empty(4))
        for i in range(n)
    ]


def _unlocalized(processed: list[QueryFrame], *args: Any, **kwargs: Any) -> list[LocalizedFrame]:
    return [
        LocalizedFrame(frame_id=q.frame_id, timestamp=q.timestamp, status=FrameStatus.UNLOCALIZED) for q in processed
    ]


class TestStride:
    """Tests for frame stride bookkeeping"""

    @pytest.mark.parametrize(("n", "stride", "expected"), [(VIDEO_FRAMES, 2, 900), (7, 2, 4), (5, 1, 5), (3, 5, 1)])
    def test_apply_stride(self, n: int, stride: int, expected: int) -> None:
        """Test that a stride keeps ceil(n / stride) frames starting with the first"""
        kept = apply_stride(_query_video(n), stride)
        assert len(kept) == expected
        assert [q.frame_id for q in kept] == list(range(0, n, stride))

    def test_assess_frame_counts(self, mocker: MockerFixture, phantom: LabeledMesh, camera: PinholeCamera) -> None:
        """Test that stride 2 on a 1,800-frame video processes and reports 900 frames"""
        localize = mocker.patch("calyx_assess.runner.localize_video", side_effect=_unlocalized)
        result = assess_video(
            _query_video(VIDEO_FRAMES), mocker.Mock(), phantom, camera, threshold=0.45, frame_stride=2
        )
        assert len(localize.call_args.args[0]) == 900
        assert result.report.frames_input == VIDEO_FRAMES
        assert result.report.frames_processed == 900
        assert result.report.frame_counts[FrameStatus.UNLOCALIZED] == 900
        assert [fr.frame_id for fr in result.frames] == list(range(0, VIDEO_FRAMES, 2))
        assert not len(result.visited)


class TestRunAssess:
    """Tests for the assess subcommand on files"""

    def test_empty_query_video(
        self, tmp_path: Path, phantom: LabeledMesh, centerline: CenterlineTree, camera: PinholeCamera
    ) -> None:
        """Test that a query video without frames misses every calyx and still writes every artifact"""
        truth = generate_trajectory(centerline, TrajectorySpec(visit_plan=(1,)))[:4]
        references, _ = synthesize_features(phantom, truth, camera, NoiseSpec(), reference=True)
        save_labeled_mesh(tmp_path / "phantom.ply", phantom)
        save_point_cloud(tmp_path / "cloud.ply", PointCloud(phantom.vertices))
        write_features(tmp_path / "reference.feat", references)
        write_features(tmp_path / "query.feat", [], header=["no frames"])
        intrinsics = "width = 320\nheight = 240\nfx = 160.0\nfy = 160.0\ncx = 160.0\ncy = 120.0\n"
        (tmp_path / "camera.toml").write_text(intrinsics)
        config_path = tmp_path / "assess.toml"
        config_path.write_text(
            '[paths]\nmesh = "phantom.ply"\nreference = "reference.feat"\nreference_cloud = "cloud.ply"\n'
            'query = "query.feat"\ncamera = "camera.toml"\noutput_dir = "out"\n'
        )

        report = run_assess(AssessConfig.from_file(config_path))

        assert report.visited_calyces() == []
        assert {c.classification for c in report.calyces} == {Visitation.MISSED}
        assert all(c.score == 0.0 for c in report.calyces)
        assert report.frames_input == report.frames_processed == 0
        assert report.frame_counts[FrameStatus.ACCEPTED] == 0
        out = tmp_path / "out"
        assert (out / REPORT_FILE_NAME).is_file()
        assert (out / COLORED_MESH_FILE_NAME).is_file()
        assert read_trajectory(out / TRAJECTORY_FILE_NAME) == []
