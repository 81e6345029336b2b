"""Synthetic local and global features with known ground truth.

Every mesh vertex is a 3D point with a persistent random unit descriptor and a random saliency. A frame observes
the most salient visible vertices, so nearby frames share most of their keypoints and nearest-neighbour matching
recovers true correspondences. Outlier keypoints get uniform random pixels and fresh descriptors.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from calyx_assess.arrays import FloatArray, IntArray
from calyx_assess.geometry.camera import PinholeCamera, project_world
from calyx_assess.geometry.mesh import TriMesh
from calyx_assess.geometry.transforms import RigidTransform
from calyx_assess.phantom import LabeledMesh
from calyx_assess.synth.oracle import brute_force_visibility
from calyx_assess.types import Keypoints, PosedFrame, QueryFrame, ReferenceFrame, VisibilityParams
from calyx_assess.validators import validate_fraction, validate_positive, validate_positive_int

__all__ = ["NoiseSpec", "VisibilityFunction", "global_descriptor", "point_descriptors", "synthesize_features"]

logger = logging.getLogger(__name__)

VisibilityFunction = Callable[[LabeledMesh | TriMesh, PinholeCamera, RigidTransform, VisibilityParams], IntArray]


@dataclass(frozen=True, kw_only=True, slots=True)
class NoiseSpec:
    pixel_noise_sigma_px: float = 0.0
    outlier_fraction: float = 0.0
    descriptor_dim: int = 64
    max_keypoints: int = 200
    global_bins: int = 4
    seed: int = 0
    descriptor_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(
            self,
            "pixel_noise_sigma_px",
            validate_positive("pixel_noise_sigma_px", self.pixel_noise_sigma_px, allow_zero=True),
        )
        object.__setattr__(
            self, "outlier_fraction", validate_fraction("outlier_fraction", self.outlier_fraction, inclusive_high=False)
        )
        validate_positive_int("descriptor_dim", self.descriptor_dim)
        validate_positive_int("max_keypoints", self.max_keypoints)
        validate_positive_int("global_bins", self.global_bins)
        validate_positive_int("seed", self.seed, allow_zero=True)
        validate_positive_int("descriptor_seed", self.descriptor_seed, allow_zero=True)


def _unit_rows(rng: np.random.Generator, n: int, dim: int) -> FloatArray:
    v = rng.normal(size=(n, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def point_descriptors(n_points: int, dim: int, seed: int) -> tuple[FloatArray, FloatArray]:
    """Persistent (descriptors, saliency) of n_points 3D points"""
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    return _unit_rows(rng, n_points, dim), rng.random(n_points)


def global_descriptor(points: FloatArray, lo: FloatArray, hi: FloatArray, bins: int) -> FloatArray:
    """Unit-normalized occupancy histogram of points over the box [lo, hi]"""
    if not len(points):
        return np.full(bins**3, 1.0 / np.sqrt(bins**3))
    cell = np.clip(((points - lo) / (hi - lo) * bins).astype(np.int64), 0, bins - 1)
    flat = (cell[:, 0] * bins + cell[:, 1]) * bins + cell[:, 2]
    hist = np.bincount(flat, minlength=bins**3).astype(np.float64)
    return hist / np.linalg.norm(hist)


def synthesize_features(
    mesh: LabeledMesh | TriMesh,
    frames: Sequence[PosedFrame],
    camera: PinholeCamera,
    nspec: NoiseSpec,
    *,
    reference: bool = False,
    visibility: VisibilityFunction = brute_force_visibility,
    visibility_params: VisibilityParams | None = None,
) -> tuple[list[QueryFrame | ReferenceFrame], dict[int, IntArray]]:
    """Generate features for posed frames

    :param mesh: Phantom surface; vertex indices are the 3D point ids
    :param frames: Ground-truth frames
    :param camera: Camera intrinsics
    :param nspec: Noise parameters
    :param reference: Emit posed ReferenceFrames with point ids instead of QueryFrames
    :param visibility: Visible-vertex function
    :param visibility_params: Parameters passed to the visibility function
    :returns: (frames, truth) where truth maps each frame id to the 3D point id of every keypoint (-1 for outliers)
    """
    surface = mesh.mesh if isinstance(mesh, LabeledMesh) else mesh
    params = visibility_params or VisibilityParams()
    descriptors, saliency = point_descriptors(surface.vertex_count, nspec.descriptor_dim, nspec.descriptor_seed)
    lo = surface.vertices.min(axis=0) if surface.vertex_count else np.zeros(3)
    hi = surface.vertices.max(axis=0) if surface.vertex_count else np.ones(3)

    out: list[QueryFrame | ReferenceFrame] = []
    truth: dict[int, IntArray] = {}
    for fr in frames:
        rng = np.random.default_rng(np.random.SeedSequence([nspec.seed, fr.frame_id]))
        visible = visibility(mesh, camera, fr.pose, params)
        if not len(visible):
            logger.warning(f"frame {fr.frame_id}: No surface point is visible; emitting an empty frame")
        g = global_descriptor(surface.vertices[visible], lo, hi, nspec.global_bins)

        top = visible[np.argsort(-saliency[visible], kind="stable")[: nspec.max_keypoints]]
        ids = np.sort(top)
        pixels, _ = project_world(camera, fr.pose, surface.vertices[ids])
        if nspec.pixel_noise_sigma_px > 0:
            pixels = pixels + rng.normal(scale=nspec.pixel_noise_sigma_px, size=pixels.shape)
        desc = descriptors[ids].copy()
        ids = ids.astype(np.int64)

        n_out = round(nspec.outlier_fraction * len(ids))
        if n_out:
            swap = rng.choice(len(ids), size=n_out, replace=False)
            pixels[swap] = rng.random((n_out, 2)) * (camera.width, camera.height)
            desc[swap] = _unit_rows(rng, n_out, nspec.descriptor_dim)
            ids[swap] = -1
        pixels[:, 0] = np.clip(pixels[:, 0], 0.0, np.nextafter(camera.width, 0))
        pixels[:, 1] = np.clip(pixels[:, 1], 0.0, np.nextafter(camera.height, 0))

        truth[fr.frame_id] = ids
        file_ids = ids if reference else np.full(len(ids), -1, dtype=np.int64)
        keypoints = Keypoints(pixels=pixels, descriptors=desc, point_ids=file_ids)
        if reference:
            out.append(
                ReferenceFrame(
                    frame_id=fr.frame_id,
                    timestamp=fr.timestamp,
                    pose=fr.pose,
                    global_descriptor=g,
                    keypoints=keypoints,
                )
            )
        else:
            out.append(
                QueryFrame(frame_id=fr.frame_id, timestamp=fr.timestamp, global_descriptor=g, keypoints=keypoints)
            )
    return out, truth
