from pathlib import Path

import numpy as np
import pytest
from pytest_data_loader import load

from calyx_assess.exceptions import LabelCountMismatch, MeshFormatError, NonContiguousLabels, UndersizedCalyx
from calyx_assess.formats.reader import read_file
from calyx_assess.geometry.mesh import TriMesh
from calyx_assess.phantom import LabeledMesh, calyx_summaries, load_labeled_mesh, load_mesh, save_labeled_mesh
from tests.paths import PATH_OCTAHEDRON_FILE, PATH_OPEN_SQUARE_FILE

pytestmark = pytest.mark.unittest


class TestLabeledMesh:
    """Tests for labeled mesh validation"""

    def test_default_names(self, labeled_cube: LabeledMesh) -> None:
        """Test that calyces without a name are called calyx_<id>"""
        assert labeled_cube.calyx_ids == (1, 2)
        assert labeled_cube.calyx_names == {1: "calyx_1", 2: "calyx_2"}
        assert labeled_cube.calyx_sizes == {1: 4, 2: 4}
        assert labeled_cube.calyx_count == 2
        np.testing.assert_array_equal(labeled_cube.calyx_mask(2), [False] * 4 + [True] * 4)

    def test_label_count_mismatch(self, cube_mesh: TriMesh) -> None:
        """Test that every vertex needs exactly one label"""
        with pytest.raises(LabelCountMismatch, match="Got 7 labels for 8 vertices"):
            LabeledMesh(mesh=cube_mesh, labels=np.ones(7, dtype=np.int64), min_calyx_vertices=1)

    def test_non_contiguous(self, cube_mesh: TriMesh) -> None:
        """Test that calyx ids must be contiguous from 1"""
        with pytest.raises(NonContiguousLabels, match=r"but got \[1, 3\]"):
            LabeledMesh(mesh=cube_mesh, labels=np.array([1, 1, 1, 1, 3, 3, 3, 3]), min_calyx_vertices=1)

    def test_undersized_calyx(self, cube_mesh: TriMesh) -> None:
        """Test that a calyx smaller than the validation minimum is rejected"""
        with pytest.raises(UndersizedCalyx, match=r"1 \(4\), 2 \(4\)"):
            LabeledMesh(mesh=cube_mesh, labels=np.array([1, 1, 1, 1, 2, 2, 2, 2]), min_calyx_vertices=5)

    def test_unannotated_only(self, cube_mesh: TriMesh) -> None:
        """Test that a mesh may have no calyx at all"""
        m = LabeledMesh(mesh=cube_mesh, labels=np.zeros(8, dtype=np.int64))
        assert m.calyx_ids == ()

    def test_non_integer_labels(self, cube_mesh: TriMesh) -> None:
        """Test that float labels are rejected"""
        with pytest.raises(MeshFormatError, match="labels: Must be integers"):
            LabeledMesh(mesh=cube_mesh, labels=np.ones(8), min_calyx_vertices=1)

    def test_summaries(self, labeled_cube: LabeledMesh) -> None:
        """Test per-calyx summaries"""
        summaries = calyx_summaries(labeled_cube)
        assert [s.calyx_id for s in summaries] == [1, 2]
        assert summaries[0].vertex_count == 4
        assert summaries[0].centroid == pytest.approx((0.0, 0.0, -10.0))
        assert summaries[1].centroid == pytest.approx((0.0, 0.0, 10.0))


class TestMeshFiles:
    """Tests for loading and saving meshes"""

    @load(("file_path", "data"), PATH_OCTAHEDRON_FILE)
    def test_load_labeled_mesh(self, file_path: Path, data: str) -> None:
        """Test that labels and calyx names are taken from the file"""
        m = load_labeled_mesh(file_path, min_calyx_vertices=1)
        assert m.mesh.is_watertight
        assert m.calyx_ids == (1,)
        assert m.calyx_names == {1: "upper_pole"}
        assert m.calyx_sizes == {1: 3}

    @load(("file_path", "data"), PATH_OCTAHEDRON_FILE)
    def test_load_labeled_mesh_undersized(self, file_path: Path, data: str) -> None:
        """Test that the default minimum calyx size applies when loading"""
        with pytest.raises(UndersizedCalyx) as e:
            load_labeled_mesh(file_path)
        assert any("While loading labeled mesh" in note for note in e.value.__notes__)

    @load(("file_path", "data"), PATH_OPEN_SQUARE_FILE)
    def test_load_unlabeled(self, file_path: Path, data: str) -> None:
        """Test that an unlabeled mesh loads as a plain mesh but not as a labeled one"""
        mesh = load_mesh(file_path)
        assert mesh.face_count == 2
        assert not mesh.is_watertight
        with pytest.raises(LabelCountMismatch, match="no 'calyx_id' property"):
            load_labeled_mesh(file_path)

    def test_missing_label_values(self, tmp_path: Path) -> None:
        """Test that vertices whose rows end before their label are reported"""
        path = tmp_path / "partial.ply"
        path.write_text(
            "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\n"
            "property int calyx_id\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n"
            "0 0 0 1\n1 0 0\n0 1 0 1\n3 0 1 2\n"
        )
        with pytest.raises(LabelCountMismatch, match="1 of 3 vertices have no 'calyx_id' value"):
            load_labeled_mesh(path, min_calyx_vertices=1)

    def test_save_with_visited(self, tmp_path: Path, labeled_cube: LabeledMesh) -> None:
        """Test that a saved mesh keeps labels and names and flags visited vertices"""
        path = tmp_path / "visited.ply"
        save_labeled_mesh(path, labeled_cube, visited=[0, 5])
        ply = read_file(path)
        np.testing.assert_array_equal(ply.vertex["visited"], [1, 0, 0, 0, 0, 1, 0, 0])
        back = load_labeled_mesh(path, min_calyx_vertices=1)
        np.testing.assert_array_equal(back.labels, labeled_cube.labels)
        assert back.calyx_names == labeled_cube.calyx_names
        np.testing.assert_array_equal(back.mesh.vertices, labeled_cube.mesh.vertices)
