from __future__ import annotations

import numpy as np

from calyx_assess.arrays import IntArray
from calyx_assess.geometry.camera import PinholeCamera
from calyx_assess.geometry.mesh import TriMesh
from calyx_assess.geometry.transforms import RigidTransform
from calyx_assess.phantom import LabeledMesh
from calyx_assess.types import VisibilityParams
from calyx_assess.visitation import candidate_vertices

__all__ = ["brute_force_visibility"]


def brute_force_visibility(
    mesh: LabeledMesh | TriMesh, camera: PinholeCamera, pose: RigidTransform, params: VisibilityParams
) -> IntArray:
    """Exhaustive counterpart of visitation.visible_vertices.

    Every candidate vertex is tested against every face; it is visible when the nearest hit along the ray from the
    camera center is not closer than its distance minus occlusion_epsilon_mm.
    """
    surface = mesh.mesh if isinstance(mesh, LabeledMesh) else mesh
    idx, directions, dist = candidate_vertices(surface, camera, pose, params)
    if not len(idx):
        return idx
    origins = np.broadcast_to(pose.center(), directions.shape)
    face, t = surface.ray_cast_many_naive(origins, directions)
    visible = (face < 0) | (t >= dist - params.occlusion_epsilon_mm)
    return idx[visible]
