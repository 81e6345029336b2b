from calyx_assess.geometry.camera import PinholeCamera, look_at_pose, project_world
from calyx_assess.geometry.mesh import RayHit, TriMesh
from calyx_assess.geometry.transforms import RigidTransform, SimilarityTransform, compose, rotation_angle_deg

__all__ = [
    "PinholeCamera",
    "RayHit",
    "RigidTransform",
    "SimilarityTransform",
    "TriMesh",
    "compose",
    "look_at_pose",
    "project_world",
    "rotation_angle_deg",
]
