from importlib.metadata import PackageNotFoundError, version

from calyx_assess.geometry import PinholeCamera, RigidTransform, SimilarityTransform, TriMesh
from calyx_assess.phantom import LabeledMesh, load_labeled_mesh, save_labeled_mesh
from calyx_assess.runner import assess_video
from calyx_assess.types import FrameStatus, LocalizationParams, VisibilityParams, Visitation

try:
    __version__ = version("calyx-assess")
except PackageNotFoundError:
    __version__ = "unknown"

__all__ = [
    "FrameStatus",
    "LabeledMesh",
    "LocalizationParams",
    "PinholeCamera",
    "RigidTransform",
    "SimilarityTransform",
    "TriMesh",
    "VisibilityParams",
    "Visitation",
    "assess_video",
    "load_labeled_mesh",
    "save_labeled_mesh",
]
