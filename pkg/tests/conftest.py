from typing import Any

import numpy as np
import pytest

from calyx_assess.geometry.camera import PinholeCamera
from calyx_assess.geometry.mesh import TriMesh
from calyx_assess.phantom import LabeledMesh
from calyx_assess.synth.phantom import CenterlineTree, PhantomSpec, generate_phantom
from tests.helper import CUBE_FACES, CUBE_VERTICES


def pytest_make_parametrize_id(val: Any, argname: str) -> str:
    if callable(val):
        val = val.__name__
    return f"{argname}={val!r}"


@pytest.fixture(scope="session")
def camera() -> PinholeCamera:
    return PinholeCamera(width=320, height=240, fx=160.0, fy=160.0, cx=160.0, cy=120.0)


@pytest.fixture(scope="session")
def cube_mesh() -> TriMesh:
    """A closed 20 mm cube centered on the origin"""
    return TriMesh(vertices=CUBE_VERTICES, faces=CUBE_FACES)


@pytest.fixture(scope="session")
def labeled_cube(cube_mesh: TriMesh) -> LabeledMesh:
    """The cube with its bottom four vertices in calyx 1 and its top four in calyx 2"""
    return LabeledMesh(mesh=cube_mesh, labels=np.array([1, 1, 1, 1, 2, 2, 2, 2]), min_calyx_vertices=1)


@pytest.fixture(scope="session")
def phantom_and_tree() -> tuple[LabeledMesh, CenterlineTree]:
    return generate_phantom(PhantomSpec())


@pytest.fixture(scope="session")
def phantom(phantom_and_tree: tuple[LabeledMesh, CenterlineTree]) -> LabeledMesh:
    return phantom_and_tree[0]


@pytest.fixture(scope="session")
def centerline(phantom_and_tree: tuple[LabeledMesh, CenterlineTree]) -> CenterlineTree:
    return phantom_and_tree[1]
