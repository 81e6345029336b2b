from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from calyx_assess.arrays import FloatArray, IntArray, frozen
from calyx_assess.exceptions import DimensionMismatch, InputFormatError
from calyx_assess.formats.reader import read_file
from calyx_assess.geometry.camera import PinholeCamera
from calyx_assess.geometry.transforms import compose
from calyx_assess.registration import PointCloud, RegistrationResult, load_point_cloud
from calyx_assess.types import ReferenceFrame
from calyx_assess.utils import add_error_note

__all__ = ["ReferenceModel", "load_reference_model"]

logger = logging.getLogger(__name__)


@dataclass(frozen=True, kw_only=True, slots=True, eq=False)
class ReferenceModel:
    """Reconstruction point cloud plus the posed reference frames observing it.

    Keypoint point ids index rows of ``cloud.points``. Frame poses are camera-from-world where the world frame is
    the frame of the cloud.
    """

    cloud: PointCloud
    frames: tuple[ReferenceFrame, ...]
    registration: RegistrationResult | None = None
    frame_ids: IntArray = field(init=False, repr=False)
    descriptors: FloatArray = field(init=False, repr=False)
    _by_id: Mapping[int, ReferenceFrame] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        frames = tuple(self.frames)
        by_id: dict[int, ReferenceFrame] = {}
        for fr in frames:
            if fr.frame_id in by_id:
                raise ValueError(f"reference frames: Duplicate frame id {fr.frame_id}")
            by_id[fr.frame_id] = fr
            ids = fr.keypoints.point_ids
            if len(ids) and ids.max() >= len(self.cloud):
                raise ValueError(
                    f"reference frame {fr.frame_id}: Point id {int(ids.max())} does not exist in a cloud of "
                    f"{len(self.cloud)} points"
                )
        dims = {len(fr.global_descriptor) for fr in frames}
        if len(dims) > 1:
            raise DimensionMismatch(f"reference frames: Global descriptors have mixed dimensions {sorted(dims)}")
        descriptors = np.stack([fr.global_descriptor for fr in frames]) if frames else np.empty((0, 0))
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "_by_id", by_id)
        object.__setattr__(self, "frame_ids", frozen(np.array([fr.frame_id for fr in frames], dtype=np.int64)))
        object.__setattr__(self, "descriptors", frozen(descriptors))

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def descriptor_dim(self) -> int:
        return int(self.descriptors.shape[1])

    def frame(self, frame_id: int) -> ReferenceFrame:
        return self._by_id[frame_id]

    def validate_pixels(self, camera: PinholeCamera) -> None:
        """Raise ValueError when a reference keypoint lies outside the image"""
        for fr in self.frames:
            px = fr.keypoints.pixels
            if len(px) and not np.all(camera.in_bounds(px)):
                raise ValueError(
                    f"reference frame {fr.frame_id}: Keypoint pixels outside the {camera.width}x{camera.height} image"
                )

    def registered(self, registration: RegistrationResult) -> ReferenceModel:
        """Return the model moved into the target frame of a registration.

        The cloud is transformed by T and every camera-from-world pose becomes pose * T^-1.
        """
        t = registration.transform
        t_inv = t.inverse()
        frames = [
            ReferenceFrame(
                frame_id=fr.frame_id,
                timestamp=fr.timestamp,
                pose=compose(fr.pose, t_inv),
                global_descriptor=fr.global_descriptor,
                keypoints=fr.keypoints,
            )
            for fr in self.frames
        ]
        return ReferenceModel(cloud=self.cloud.transformed(t), frames=tuple(frames), registration=registration)


def load_reference_model(
    features_path: Path,
    cloud_path: Path,
    *,
    camera: PinholeCamera | None = None,
    registration: RegistrationResult | None = None,
) -> ReferenceModel:
    """Load reference frames and their point cloud

    :param features_path: Features file whose frames all carry a pose record
    :param cloud_path: PLY point cloud indexed by the keypoint point ids
    :param camera: When given, keypoint pixels are checked against the image bounds
    :param registration: When given, the model is moved into the registration's target frame
    """
    frames = read_file(features_path)
    plain = [fr for fr in frames if not isinstance(fr, ReferenceFrame)]
    if plain:
        raise InputFormatError(f"{features_path.name}: Reference frame {plain[0].frame_id} has no pose record")
    cloud = load_point_cloud(cloud_path)
    try:
        model = ReferenceModel(cloud=cloud, frames=tuple(frames))
        if camera is not None:
            model.validate_pixels(camera)
    except ValueError as e:
        add_error_note(e, f"While loading reference model {str(features_path)!r}")
        raise
    logger.info(f"Loaded reference model: {len(model)} frames, {len(cloud)} points")
    return model.registered(registration) if registration is not None else model

