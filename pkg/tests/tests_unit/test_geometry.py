import math

import numpy as np
import pytest

from calyx_assess.exceptions import MeshFormatError, WatertightnessRequired
from calyx_assess.geometry.camera import PinholeCamera, look_at_pose, project_world
from calyx_assess.geometry.mesh import TriMesh
from calyx_assess.geometry.transforms import RigidTransform, SimilarityTransform, compose, rotation_angle_deg
from calyx_assess.phantom import LabeledMesh
from calyx_assess.synth.phantom import CenterlineTree
from tests.helper import CUBE_FACES, CUBE_VERTICES

pytestmark = [pytest.mark.unittest, pytest.mark.geometry]


class TestRigidTransform:
    """Tests for rigid transforms"""

    def test_quaternion_is_canonicalized(self) -> None:
        """Test that a quaternion with a negative scalar part is flipped to w >= 0"""
        t = RigidTransform(rotation=(-1.0, 0.0, 0.0, 0.0))
        assert t.rotation == (1.0, 0.0, 0.0, 0.0)

    @pytest.mark.parametrize("rotation", [(2.0, 0.0, 0.0, 0.0), (0.5, 0.5, 0.0, 0.0)])
    def test_non_unit_quaternion(self, rotation: tuple[float, float, float, float]) -> None:
        """Test that a quaternion that is not unit length is rejected"""
        with pytest.raises(ValueError, match="rotation: Quaternion must be unit length"):
            RigidTransform(rotation=rotation)

    def test_inverse(self) -> None:
        """Test that a transform composed with its inverse is the identity"""
        t = RigidTransform.from_rotvec((0.1, -0.2, 0.3), (1.0, 2.0, 3.0))
        p = np.array([[4.0, 5.0, 6.0], [-1.0, 0.0, 2.0]])
        np.testing.assert_allclose(t.inverse().apply(t.apply(p)), p, atol=1e-12)
        identity = compose(t.inverse(), t)
        assert isinstance(identity, RigidTransform)
        np.testing.assert_allclose(identity.matrix, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(identity.translation, (0.0, 0.0, 0.0), atol=1e-12)

    def test_center(self) -> None:
        """Test that center() is the point the transform maps to the origin"""
        t = RigidTransform.from_rotvec((0.0, 0.5, 0.0), (3.0, -1.0, 7.0))
        np.testing.assert_allclose(t.apply(t.center()), (0.0, 0.0, 0.0), atol=1e-12)

    def test_rotvec(self) -> None:
        """Test that from_rotvec and rotvec agree"""
        t = RigidTransform.from_rotvec((0.0, 0.0, math.pi / 2))
        np.testing.assert_allclose(t.rotvec(), (0.0, 0.0, math.pi / 2), atol=1e-12)
        np.testing.assert_allclose(t.apply((1.0, 0.0, 0.0)), (0.0, 1.0, 0.0), atol=1e-12)

    def test_homogeneous(self) -> None:
        """Test that the homogeneous matrix round-trips"""
        t = RigidTransform.from_rotvec((0.3, 0.2, 0.1), (1.0, 2.0, 3.0))
        back = RigidTransform.from_homogeneous(t.homogeneous())
        np.testing.assert_allclose(back.rotation, t.rotation, atol=1e-12)
        np.testing.assert_allclose(back.translation, t.translation, atol=1e-12)

    def test_rotation_angle(self) -> None:
        """Test the angle between two rotations"""
        a = RigidTransform()
        b = RigidTransform.from_rotvec((0.0, 0.0, math.radians(30)))
        assert rotation_angle_deg(a, b) == pytest.approx(30.0)
        assert rotation_angle_deg(b, b) == pytest.approx(0.0, abs=1e-6)


class TestSimilarityTransform:
    """Tests for similarity transforms"""

    @pytest.mark.parametrize("scale", [0.0, -1.0, math.nan, math.inf])
    def test_invalid_scale(self, scale: float) -> None:
        """Test that a non-positive or non-finite scale is rejected"""
        with pytest.raises(ValueError, match="scale: Must be a finite positive number"):
            SimilarityTransform(scale=scale)

    def test_inverse(self) -> None:
        """Test that the inverse undoes scale, rotation and translation"""
        s = SimilarityTransform.from_matrix(RigidTransform.from_rotvec((0.2, 0.0, 0.1)).matrix, (5.0, 0.0, -2.0), 2.5)
        p = np.array([[1.0, 2.0, 3.0]])
        np.testing.assert_allclose(s.inverse().apply(s.apply(p)), p, atol=1e-12)
        assert s.inverse().scale == pytest.approx(0.4)

    def test_compose_with_rigid(self) -> None:
        """Test that composing with a similarity yields a similarity"""
        s = SimilarityTransform(scale=2.0)
        r = RigidTransform(translation=(1.0, 0.0, 0.0))
        c = compose(s, r)
        assert isinstance(c, SimilarityTransform)
        np.testing.assert_allclose(c.apply((0.0, 0.0, 0.0)), (2.0, 0.0, 0.0))
        assert isinstance(compose(r, r), RigidTransform)

    def test_rigid_part(self) -> None:
        """Test that the rigid part drops the scale"""
        s = SimilarityTransform(translation=(1.0, 2.0, 3.0), scale=3.0)
        assert s.rigid_part() == RigidTransform(translation=(1.0, 2.0, 3.0))


class TestPinholeCamera:
    """Tests for the pinhole camera model"""

    def test_project_point(self, camera: PinholeCamera) -> None:
        """Test projection of a point in front of and behind the camera"""
        assert camera.project_point((0.0, 0.0, 10.0)) == (160.0, 120.0)
        assert camera.project_point((1.0, -1.0, 10.0)) == (176.0, 104.0)
        assert camera.project_point((0.0, 0.0, 0.0)) is None
        assert camera.project_point((0.0, 0.0, -5.0)) is None

    def test_project_behind_is_nan(self, camera: PinholeCamera) -> None:
        """Test that batch projection returns NaN for points behind the camera"""
        pixels = camera.project([[0.0, 0.0, 10.0], [0.0, 0.0, -10.0]])
        np.testing.assert_array_equal(pixels[0], (160.0, 120.0))
        assert np.isnan(pixels[1]).all()

    def test_in_bounds(self, camera: PinholeCamera) -> None:
        """Test that the image is the half-open rectangle [0, width) x [0, height)"""
        pixels = np.array([[0.0, 0.0], [319.99, 239.99], [320.0, 10.0], [10.0, 240.0], [-0.01, 5.0], [np.nan, 1.0]])
        np.testing.assert_array_equal(camera.in_bounds(pixels), [True, True, False, False, False, False])

    def test_unproject(self, camera: PinholeCamera) -> None:
        """Test that unprojecting a pixel at a depth gives a point projecting back to that pixel"""
        p = camera.unproject((200.0, 50.0), 12.0)
        assert p[2] == pytest.approx(12.0)
        assert camera.project_point(p) == pytest.approx((200.0, 50.0))

    @pytest.mark.parametrize(
        ("kwargs", "error"),
        [
            ({"cx": 320.0}, "camera.cx: Must be in [0, 320), but got 320.0"),
            ({"cy": -1.0}, "camera.cy: Must be in [0, 240), but got -1.0"),
            ({"fx": 0.0}, "camera.fx: Must be a finite positive number"),
            ({"width": 0}, "camera.width: Must be a positive integer"),
        ],
    )
    def test_invalid_intrinsics(self, kwargs: dict[str, float], error: str) -> None:
        """Test that invalid intrinsics are rejected"""
        values = dict(width=320, height=240, fx=160.0, fy=160.0, cx=160.0, cy=120.0) | kwargs
        with pytest.raises((TypeError, ValueError)) as e:
            PinholeCamera(**values)  # type: ignore[arg-type]
        assert error in str(e.value)

    def test_look_at_pose(self, camera: PinholeCamera) -> None:
        """Test that a look-at pose puts the camera at its center and the target on the principal point"""
        pose = look_at_pose((0.0, 0.0, -30.0), (0.0, 0.0, 1.0))
        np.testing.assert_allclose(pose.center(), (0.0, 0.0, -30.0), atol=1e-12)
        pixels, depth = project_world(camera, pose, [[0.0, 0.0, 0.0], [0.0, 0.0, -40.0]])
        np.testing.assert_allclose(pixels[0], (160.0, 120.0), atol=1e-9)
        assert depth[0] == pytest.approx(30.0)
        assert depth[1] == pytest.approx(-10.0)
        assert np.isnan(pixels[1]).all()

    def test_look_at_zero_direction(self) -> None:
        """Test that a zero viewing direction is rejected"""
        with pytest.raises(ValueError, match="direction: Must be non-zero"):
            look_at_pose((0.0, 0.0, 0.0), (0.0, 0.0, 0.0))


class TestTriMesh:
    """Tests for triangle mesh validation and queries"""

    def test_watertight(self, cube_mesh: TriMesh) -> None:
        """Test watertightness of a closed and an open mesh"""
        assert cube_mesh.is_watertight
        assert cube_mesh.vertex_count == 8
        assert cube_mesh.face_count == 12
        open_mesh = TriMesh(vertices=CUBE_VERTICES, faces=CUBE_FACES[:-1])
        assert not open_mesh.is_watertight

    def test_degenerate_face(self) -> None:
        """Test that a zero-area face is rejected"""
        vertices = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]
        with pytest.raises(MeshFormatError, match="degenerate"):
            TriMesh(vertices=vertices, faces=[[0, 1, 2]])

    def test_index_out_of_range(self) -> None:
        """Test that a face referencing a missing vertex is rejected"""
        with pytest.raises(MeshFormatError, match="Vertex index out of range"):
            TriMesh(vertices=CUBE_VERTICES, faces=[[0, 1, 8]])

    def test_ray_cast(self, cube_mesh: TriMesh) -> None:
        """Test the nearest hit of a ray cast from inside the cube"""
        hit = cube_mesh.ray_cast((0.0, 3.0, -2.0), (1.0, 0.0, 0.0))
        assert hit is not None
        assert hit.face_index == 10
        assert hit.t == pytest.approx(10.0)
        assert cube_mesh.ray_cast_naive((0.0, 3.0, -2.0), (1.0, 0.0, 0.0)) == hit
        assert cube_mesh.ray_cast((0.0, 30.0, 0.0), (0.0, 1.0, 0.0)) is None
        assert cube_mesh.ray_cast_naive((0.0, 30.0, 0.0), (0.0, 1.0, 0.0)) is None

    def test_ray_cast_non_unit_direction(self, cube_mesh: TriMesh) -> None:
        """Test that ray directions must be unit length"""
        with pytest.raises(ValueError, match="directions: Must be unit length"):
            cube_mesh.ray_cast((0.0, 0.0, 0.0), (2.0, 0.0, 0.0))

    def test_occluded(self, cube_mesh: TriMesh) -> None:
        """Test occlusion of rays with a hit before and beyond their length"""
        origins = np.array([[0.3, 0.2, -30.0], [0.3, 0.2, -30.0]])
        directions = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]])
        np.testing.assert_array_equal(cube_mesh.occluded(origins, directions, [50.0, 15.0]), [True, False])

    def test_crossing_counts(self, cube_mesh: TriMesh) -> None:
        """Test that a ray through the cube crosses its surface twice"""
        counts = cube_mesh.crossing_counts([[-20.0, 0.3, 0.2], [-20.0, 30.0, 0.0]], [[1.0, 0.0, 0.0]] * 2)
        np.testing.assert_array_equal(counts, [2, 0])

    def test_contains(self, cube_mesh: TriMesh) -> None:
        """Test inside/outside classification, with surface points counted as inside"""
        points = [[0.0, 0.0, 0.0], [0.0, 0.0, 20.0], [10.0, 0.0, 0.0], [9.9, -9.9, 9.9], [10.5, 0.0, 0.0]]
        np.testing.assert_array_equal(cube_mesh.contains(points), [True, False, True, True, False])
        assert cube_mesh.point_inside((1.0, 2.0, 3.0))

    def test_contains_requires_watertight(self) -> None:
        """Test that inside/outside queries are refused on an open mesh"""
        open_mesh = TriMesh(vertices=CUBE_VERTICES, faces=CUBE_FACES[:-1])
        with pytest.raises(WatertightnessRequired):
            open_mesh.contains([[0.0, 0.0, 0.0]])

    def test_distance(self, cube_mesh: TriMesh) -> None:
        """Test unsigned distances to the surface"""
        points = [[0.0, 0.0, 20.0], [0.0, 0.0, 0.0], [20.0, 20.0, 10.0]]
        np.testing.assert_allclose(cube_mesh.distance(points), [10.0, 10.0, math.sqrt(200.0)], atol=1e-9)


class TestRayCastAcceleration:
    """Tests that the BVH returns exactly what a brute-force scan returns"""

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_bvh_matches_brute_force(
        self, phantom: LabeledMesh, centerline: CenterlineTree, seed: int
    ) -> None:
        """Test that BVH ray casts agree with brute force on face index and distance"""
        rng = np.random.default_rng(seed)
        origins = []
        for _ in range(200):
            axis = centerline.axis(int(rng.choice(centerline.calyx_ids)))
            origins.append(axis.point_at(float(rng.uniform(0.0, axis.length_mm))))
        origins_arr = np.array(origins)
        directions = rng.normal(size=origins_arr.shape)
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)

        faces, t = phantom.mesh.ray_cast_many(origins_arr, directions)
        naive_faces, naive_t = phantom.mesh.ray_cast_many_naive(origins_arr, directions)
        np.testing.assert_array_equal(faces, naive_faces)
        np.testing.assert_allclose(t, naive_t, rtol=1e-12)
        assert (faces >= 0).all()
