import numpy as np
import pytest

from calyx_assess.exceptions import DimensionMismatch, NonMonotonicTimestamps, WatertightnessRequired
from calyx_assess.geometry.camera import PinholeCamera, project_world
from calyx_assess.geometry.mesh import TriMesh
from calyx_assess.geometry.transforms import RigidTransform, rotation_angle_deg
from calyx_assess.localization import (
    AbsolutePose,
    AbsolutePoseFailure,
    ReferenceModel,
    estimate_absolute_pose,
    localize_frame,
    localize_video,
    match_descriptors,
    retrieve_candidates,
    spatial_filter,
    status_counts,
    temporal_filter,
    verify_pair_essential,
)
from calyx_assess.localization.filters import check_timestamps
from calyx_assess.phantom import LabeledMesh
from calyx_assess.registration import PointCloud, RegistrationResult
from calyx_assess.synth import NoiseSpec, TrajectorySpec, generate_trajectory, perturb_trajectory, synthesize_features
from calyx_assess.synth.phantom import CenterlineTree
from calyx_assess.types import (
    FrameStatus,
    Keypoints,
    LocalizationParams,
    LocalizedFrame,
    PoseFailureReason,
    QueryFrame,
    ReferenceFrame,
    RejectReason,
)
from tests.helper import CUBE_FACES, CUBE_VERTICES, accepted_frame

pytestmark = [pytest.mark.unittest, pytest.mark.localization]

TRUE_POSE = RigidTransform.from_rotvec((0.1, -0.2, 0.05), (1.0, 2.0, 3.0))


def _reference_frame(frame_id: int, g: tuple[float, ...]) -> ReferenceFrame:
    return ReferenceFrame(
        frame_id=frame_id, pose=RigidTransform(), global_descriptor=np.array(g), keypoints=Keypoints.empty(4)
    )


def _query_frame(g: tuple[float, ...]) -> QueryFrame:
    return QueryFrame(frame_id=0, timestamp=0.0, global_descriptor=np.array(g), keypoints=Keypoints.empty(4))


def _two_views(camera: PinholeCamera, n: int, outliers: int = 0, seed: int = 0) -> tuple[Keypoints, Keypoints]:
    """Keypoints of n points seen from the origin (reference) and from a nearby query pose.

    Match i pairs query keypoint i with reference keypoint i; the first `outliers` query pixels are random.
    """
    rng = np.random.default_rng(seed)
    z = rng.uniform(30.0, 50.0, n)
    world = np.stack([rng.uniform(-0.5, 0.5, n) * z, rng.uniform(-0.4, 0.4, n) * z, z], axis=1)
    query_pose = RigidTransform.from_rotvec((0.0, 0.05, 0.02), (-2.0, 0.5, 0.0))
    q_px, _ = project_world(camera, query_pose, world)
    r_px, _ = project_world(camera, RigidTransform(), world)
    q_px[:outliers] = rng.uniform((0.0, 0.0), (camera.width, camera.height), size=(outliers, 2))
    desc = np.eye(n)
    q_kps = Keypoints(pixels=q_px, descriptors=desc, point_ids=np.full(n, -1))
    r_kps = Keypoints(pixels=r_px, descriptors=desc, point_ids=np.arange(n))
    return q_kps, r_kps


def _correspondences(
    camera: PinholeCamera, n: int, *, noise_px: float = 0.0, outlier_fraction: float = 0.0, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Pixels and world points of n points at 20-50 mm depth in front of TRUE_POSE"""
    rng = np.random.default_rng(seed)
    z = rng.uniform(20.0, 50.0, n)
    p_cam = np.stack([rng.uniform(-0.6, 0.6, n) * z, rng.uniform(-0.6, 0.6, n) * z, z], axis=1)
    world = TRUE_POSE.inverse().apply(p_cam)
    pixels = camera.project(p_cam) + rng.normal(scale=noise_px, size=(n, 2)) if noise_px else camera.project(p_cam)
    n_out = round(outlier_fraction * n)
    if n_out:
        swap = rng.choice(n, size=n_out, replace=False)
        pixels[swap] = rng.uniform((0.0, 0.0), (camera.width, camera.height), size=(n_out, 2))
    return pixels, world


class TestRetrieval:
    """Tests for global-descriptor retrieval"""

    @pytest.fixture(scope="class")
    @classmethod
    def model(cls) -> ReferenceModel:
        frames = [
            _reference_frame(3, (1.0, 0.0)),
            _reference_frame(0, (1.0, 0.0)),
            _reference_frame(1, (0.0, 1.0)),
            _reference_frame(2, (0.6, 0.8)),
        ]
        return ReferenceModel(cloud=PointCloud(CUBE_VERTICES), frames=tuple(frames))

    def test_ranking(self, model: ReferenceModel) -> None:
        """Test that candidates are ordered by similarity, with ties going to the lower frame id"""
        candidates = retrieve_candidates(_query_frame((1.0, 0.0)), model, 10)
        assert [frame_id for frame_id, _ in candidates] == [0, 3, 2, 1]
        assert [sim for _, sim in candidates] == pytest.approx([1.0, 1.0, 0.6, 0.0])

    def test_top_k(self, model: ReferenceModel) -> None:
        """Test that at most k candidates are returned"""
        assert len(retrieve_candidates(_query_frame((0.0, 1.0)), model, 2)) == 2

    def test_empty_model(self) -> None:
        """Test that an empty model yields no candidates"""
        empty = ReferenceModel(cloud=PointCloud(CUBE_VERTICES), frames=())
        assert retrieve_candidates(_query_frame((1.0, 0.0)), empty, 3) == []

    def test_dimension_mismatch(self, model: ReferenceModel) -> None:
        """Test that query and reference global descriptors must have the same dimension"""
        with pytest.raises(DimensionMismatch, match="Global descriptor has dimension 3"):
            retrieve_candidates(_query_frame((1.0, 0.0, 0.0)), model, 3)


class TestReferenceModel:
    """Tests for the reference model"""

    def test_duplicate_frame_id(self) -> None:
        """Test that frame ids must be unique"""
        with pytest.raises(ValueError, match="Duplicate frame id 1"):
            ReferenceModel(
                cloud=PointCloud(CUBE_VERTICES), frames=(_reference_frame(1, (1.0,)), _reference_frame(1, (1.0,)))
            )

    def test_unknown_point_id(self) -> None:
        """Test that keypoint point ids must index the cloud"""
        frame = ReferenceFrame(
            frame_id=0,
            pose=RigidTransform(),
            global_descriptor=np.array([1.0]),
            keypoints=Keypoints(pixels=[[1.0, 1.0]], descriptors=[[1.0]], point_ids=[8]),
        )
        with pytest.raises(ValueError, match="Point id 8 does not exist in a cloud of 8 points"):
            ReferenceModel(cloud=PointCloud(CUBE_VERTICES), frames=(frame,))

    def test_registered(self) -> None:
        """Test that registering the model keeps every camera's view of every point"""
        pose = RigidTransform.from_rotvec((0.0, 0.3, 0.0), (0.0, 0.0, 40.0))
        frame = ReferenceFrame(frame_id=0, pose=pose, global_descriptor=np.array([1.0]), keypoints=Keypoints.empty(2))
        model = ReferenceModel(cloud=PointCloud(CUBE_VERTICES), frames=(frame,))
        t = RigidTransform.from_rotvec((0.2, 0.1, -0.4), (5.0, -3.0, 1.0))
        moved = model.registered(RegistrationResult(transform=t, mean_residual_mm=0.0, iterations_used=1))
        np.testing.assert_allclose(moved.cloud.points, t.apply(CUBE_VERTICES), atol=1e-9)
        np.testing.assert_allclose(
            moved.frame(0).pose.apply(moved.cloud.points), pose.apply(CUBE_VERTICES), atol=1e-9
        )
        assert moved.registration is not None


class TestMatching:
    """Tests for mutual nearest-neighbour matching"""

    def test_permutation(self) -> None:
        """Test that identical descriptors in a different order are all matched"""
        q = np.eye(3)
        matches = match_descriptors(q, q[[2, 0, 1]])
        np.testing.assert_array_equal(matches, [[0, 1], [1, 2], [2, 0]])

    def test_not_mutual(self) -> None:
        """Test that a reference descriptor matches only its own nearest query descriptor"""
        q = np.array([[1.0, 0.0], [0.8, 0.6]])
        np.testing.assert_array_equal(match_descriptors(q, np.array([[1.0, 0.0]])), [[0, 0]])

    def test_ratio_test(self) -> None:
        """Test that an ambiguous nearest neighbour is dropped"""
        r = np.array([[0.8, 0.6], [0.8, -0.6]])
        assert match_descriptors(np.array([[1.0, 0.0]]), r).shape == (0, 2)

    def test_empty(self) -> None:
        """Test that matching against no descriptors yields no matches"""
        assert match_descriptors(np.empty((0, 4)), np.eye(4)).shape == (0, 2)

    def test_dimension_mismatch(self) -> None:
        """Test that descriptor dimensions must agree"""
        with pytest.raises(DimensionMismatch, match="query 3, reference 4"):
            match_descriptors(np.eye(3), np.eye(4))


class TestEssentialVerification:
    """Tests for two-view verification"""

    def test_noiseless(self, camera: PinholeCamera) -> None:
        """Test that geometrically consistent matches are all inliers"""
        q_kps, r_kps = _two_views(camera, 50)
        matches = np.stack([np.arange(50), np.arange(50)], axis=1)
        result = verify_pair_essential(matches, q_kps, r_kps, camera, LocalizationParams(), np.random.default_rng(0))
        assert result.accepted
        assert result.inlier_count == 50
        assert result.inlier_ratio == 1.0

    def test_outliers_are_removed(self, camera: PinholeCamera) -> None:
        """Test that every consistent match survives next to 20 % random matches"""
        q_kps, r_kps = _two_views(camera, 50, outliers=10, seed=1)
        matches = np.stack([np.arange(50), np.arange(50)], axis=1)
        result = verify_pair_essential(matches, q_kps, r_kps, camera, LocalizationParams(), np.random.default_rng(0))
        assert result.accepted
        assert result.inlier_mask[10:].all()
        assert 40 <= result.inlier_count < 50

    @pytest.mark.parametrize(
        ("n", "outliers", "params", "reason"),
        [
            (5, 0, LocalizationParams(), RejectReason.TOO_FEW_MATCHES),
            (30, 0, LocalizationParams(min_match_count=40), RejectReason.TOO_FEW_MATCHES),
            (50, 0, LocalizationParams(min_inlier_count=60), RejectReason.TOO_FEW_INLIERS),
            (50, 20, LocalizationParams(min_inlier_ratio=0.9), RejectReason.LOW_INLIER_RATIO),
        ],
    )
    def test_rejected(
        self, camera: PinholeCamera, n: int, outliers: int, params: LocalizationParams, reason: RejectReason
    ) -> None:
        """Test each reason a pair is rejected for"""
        q_kps, r_kps = _two_views(camera, n, outliers=outliers, seed=2)
        matches = np.stack([np.arange(n), np.arange(n)], axis=1)
        result = verify_pair_essential(matches, q_kps, r_kps, camera, params, np.random.default_rng(0))
        assert not result.accepted
        assert result.reason == reason

    def test_all_outliers(self, camera: PinholeCamera) -> None:
        """Test that 200 matches with random query pixels are rejected"""
        q_kps, r_kps = _two_views(camera, 200, outliers=200, seed=3)
        matches = np.stack([np.arange(200), np.arange(200)], axis=1)
        result = verify_pair_essential(matches, q_kps, r_kps, camera, LocalizationParams(), np.random.default_rng(0))
        assert not result.accepted
        assert result.reason in (RejectReason.TOO_FEW_INLIERS, RejectReason.LOW_INLIER_RATIO)
        assert result.inlier_ratio < 0.3


class TestAbsolutePose:
    """Tests for absolute pose estimation"""

    def test_noiseless(self, camera: PinholeCamera) -> None:
        """Test that the pose is recovered exactly from noiseless correspondences"""
        pixels, world = _correspondences(camera, 50)
        result = estimate_absolute_pose(pixels, world, camera, LocalizationParams(), np.random.default_rng(0))
        assert isinstance(result, AbsolutePose)
        assert np.linalg.norm(result.pose.translation_vector - TRUE_POSE.translation_vector) < 1e-3
        assert rotation_angle_deg(result.pose, TRUE_POSE) < 1e-4
        assert result.inlier_count == 50
        assert result.refined_rms_px <= result.ransac_rms_px

    @pytest.mark.parametrize(
        ("n", "reason"),
        [(3, PoseFailureReason.TOO_FEW_CORRESPONDENCES), (10, PoseFailureReason.TOO_FEW_INLIERS)],
    )
    def test_failure(self, camera: PinholeCamera, n: int, reason: PoseFailureReason) -> None:
        """Test that too few correspondences or inliers yield a failure instead of a pose"""
        pixels, world = _correspondences(camera, n)
        result = estimate_absolute_pose(pixels, world, camera, LocalizationParams(), np.random.default_rng(0))
        assert result == AbsolutePoseFailure(reason)

    @pytest.mark.slow
    def test_noise_and_outliers(self, camera: PinholeCamera) -> None:
        """Test translation accuracy under 1 px noise and 30 % outliers over 100 seeded trials"""
        params = LocalizationParams()
        good = 0
        for seed in range(100):
            pixels, world = _correspondences(camera, 200, noise_px=1.0, outlier_fraction=0.3, seed=seed)
            result = estimate_absolute_pose(pixels, world, camera, params, np.random.default_rng(seed))
            if isinstance(result, AbsolutePose):
                good += np.linalg.norm(result.pose.translation_vector - TRUE_POSE.translation_vector) < 1.0
        assert good >= 95


class TestFilters:
    """Tests for the spatial and temporal filters"""

    def test_spatial(self, cube_mesh: TriMesh) -> None:
        """Test that accepted frames outside the mesh are rejected and other frames are untouched"""
        frames = [
            accepted_frame(0, 0.0, (0.0, 0.0, 0.0)),
            accepted_frame(1, 0.1, (0.0, 0.0, 30.0)),
            LocalizedFrame(frame_id=2, timestamp=0.2, status=FrameStatus.UNLOCALIZED),
        ]
        out = spatial_filter(frames, cube_mesh)
        assert [fr.status for fr in out] == [
            FrameStatus.ACCEPTED,
            FrameStatus.REJECTED_SPATIAL,
            FrameStatus.UNLOCALIZED,
        ]
        assert out[1].pose == frames[1].pose

    def test_spatial_requires_watertight_mesh(self) -> None:
        """Test that an open mesh cannot be used by the spatial filter"""
        open_box = TriMesh(vertices=CUBE_VERTICES, faces=CUBE_FACES[:-2])
        with pytest.raises(WatertightnessRequired):
            spatial_filter([accepted_frame(0, 0.0, (0.0, 0.0, 0.0))], open_box)

    def test_temporal(self) -> None:
        """Test that a teleport is rejected and the frame after it is measured from the last kept frame"""
        frames = [
            accepted_frame(0, 0.0, (0.0, 0.0, 0.0)),
            LocalizedFrame(frame_id=1, timestamp=0.05, status=FrameStatus.UNLOCALIZED),
            accepted_frame(2, 0.1, (20.0, 0.0, 0.0)),
            accepted_frame(3, 0.2, (10.0, 0.0, 0.0)),
        ]
        out = temporal_filter(frames, 135.0)
        assert [fr.status for fr in out] == [
            FrameStatus.ACCEPTED,
            FrameStatus.UNLOCALIZED,
            FrameStatus.REJECTED_TEMPORAL,
            FrameStatus.ACCEPTED,
        ]

    def test_temporal_boundary(self) -> None:
        """Test that moving exactly v_max * dt is allowed"""
        frames = [accepted_frame(0, 0.0, (0.0, 0.0, 0.0)), accepted_frame(1, 0.5, (0.0, 0.0, 5.0))]
        assert status_counts(temporal_filter(frames, 10.0))[FrameStatus.ACCEPTED] == 2

    def test_status_counts(self) -> None:
        """Test that every status is counted, including absent ones"""
        counts = status_counts([accepted_frame(0, 0.0, (0.0, 0.0, 0.0))])
        assert counts == {
            FrameStatus.ACCEPTED: 1,
            FrameStatus.REJECTED_SPATIAL: 0,
            FrameStatus.REJECTED_TEMPORAL: 0,
            FrameStatus.UNLOCALIZED: 0,
        }

    @pytest.mark.parametrize("timestamps", [[0.0, 0.1, 0.1], [0.0, 0.2, 0.1]])
    def test_non_monotonic_timestamps(self, timestamps: list[float]) -> None:
        """Test that timestamps must strictly increase"""
        with pytest.raises(NonMonotonicTimestamps, match=f"but 0.1 follows {timestamps[1]!r}"):
            check_timestamps(timestamps)

    @pytest.mark.parametrize("seed", range(20))
    def test_simulated_teleports(self, centerline: CenterlineTree, seed: int) -> None:
        """Test that injected 1500 mm/s teleports are all rejected and clean frames are all kept"""
        truth = generate_trajectory(centerline, TrajectorySpec(visit_plan=(1, 2), seed=seed))
        perturbed, injected = perturb_trajectory(truth, 5, 50.0, seed=seed)
        frames = [
            LocalizedFrame(frame_id=fr.frame_id, timestamp=fr.timestamp, status=FrameStatus.ACCEPTED, pose=fr.pose)
            for fr in perturbed
        ]
        out = temporal_filter(frames, 135.0)
        rejected = tuple(i for i, fr in enumerate(out) if fr.status == FrameStatus.REJECTED_TEMPORAL)
        assert rejected == injected


@pytest.mark.slow
class TestLocalizeSimulated:
    """Tests for localizing simulated query frames"""

    def test_simulated_queries(self, phantom: LabeledMesh, centerline: CenterlineTree, camera: PinholeCamera) -> None:
        """Test that noiseless simulated query frames between reference frames are localized accurately"""
        truth = generate_trajectory(centerline, TrajectorySpec(visit_plan=(1,)))[:20]
        nspec = NoiseSpec()
        references, _ = synthesize_features(phantom, truth[::2], camera, nspec, reference=True)
        queries, _ = synthesize_features(phantom, truth[1::2], camera, nspec)
        model = ReferenceModel(cloud=PointCloud(phantom.vertices), frames=tuple(references))  # type: ignore[arg-type]
        gt = {fr.frame_id: fr.pose for fr in truth}

        results = [localize_frame(q, model, camera, LocalizationParams()) for q in queries]  # type: ignore[arg-type]

        accepted = [fr for fr in results if fr.status == FrameStatus.ACCEPTED]
        assert len(accepted) >= 8
        for fr in accepted:
            assert fr.pose is not None
            assert np.linalg.norm(fr.pose.center() - gt[fr.frame_id].center()) < 0.1

    def test_localize_video(self, phantom: LabeledMesh, centerline: CenterlineTree, camera: PinholeCamera) -> None:
        """Test that a filtered video keeps its frames in order and does not depend on the worker count"""
        truth = generate_trajectory(centerline, TrajectorySpec(visit_plan=(2,)))[:12]
        references, _ = synthesize_features(phantom, truth[::2], camera, NoiseSpec(), reference=True)
        queries, _ = synthesize_features(phantom, truth[1::2], camera, NoiseSpec(seed=1))
        model = ReferenceModel(cloud=PointCloud(phantom.vertices), frames=tuple(references))  # type: ignore[arg-type]
        params = LocalizationParams()

        serial = localize_video(queries, model, phantom, camera, params)  # type: ignore[arg-type]
        threaded = localize_video(queries, model, phantom, camera, params, workers=3)  # type: ignore[arg-type]

        assert [fr.frame_id for fr in serial] == [q.frame_id for q in queries]
        assert threaded == serial
        assert FrameStatus.REJECTED_SPATIAL not in {fr.status for fr in serial}
        assert localize_video([], model, phantom, camera, params) == []

    def test_unrelated_descriptors(
        self, phantom: LabeledMesh, centerline: CenterlineTree, camera: PinholeCamera
    ) -> None:
        """Test that query frames whose descriptors match nothing in the model are all left unlocalized"""
        truth = generate_trajectory(centerline, TrajectorySpec(visit_plan=(3,)))[:16]
        references, _ = synthesize_features(phantom, truth[::2], camera, NoiseSpec(), reference=True)
        model = ReferenceModel(cloud=PointCloud(phantom.vertices), frames=tuple(references))  # type: ignore[arg-type]
        dim = references[0].keypoints.descriptor_dim
        global_dim = len(references[0].global_descriptor)
        rng = np.random.default_rng(11)

        def unit(shape: tuple[int, ...]) -> np.ndarray:
            v = rng.normal(size=shape)
            return v / np.linalg.norm(v, axis=-1, keepdims=True)

        queries = [
            QueryFrame(
                frame_id=i,
                timestamp=i / 30.0,
                global_descriptor=unit((global_dim,)),
                keypoints=Keypoints(
                    pixels=rng.uniform((0.0, 0.0), (camera.width, camera.height), size=(150, 2)),
                    descriptors=unit((150, dim)),
                    point_ids=np.full(150, -1),
                ),
            )
            for i in range(10)
        ]

        frames = localize_video(queries, model, phantom, camera, LocalizationParams())

        assert {fr.status for fr in frames} == {FrameStatus.UNLOCALIZED}
        assert status_counts(frames)[FrameStatus.ACCEPTED] == 0
