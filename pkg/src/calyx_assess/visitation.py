"""Vertex visibility, per-calyx visitation scores and threshold cross-validation"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from tqdm import tqdm

from calyx_assess.arrays import FloatArray, IntArray
from calyx_assess.constants import CI_Z_SCORE, DEFAULT_CV_FOLDS, DEFAULT_CV_REPEATS, DEFAULT_RNG_SEED
from calyx_assess.exceptions import DegenerateFold
from calyx_assess.geometry.camera import PinholeCamera, project_world
from calyx_assess.geometry.mesh import TriMesh
from calyx_assess.geometry.transforms import RigidTransform
from calyx_assess.phantom import LabeledMesh
from calyx_assess.types import FrameStatus, LocalizedFrame, Visitation, VisibilityParams
from calyx_assess.utils import add_error_note
from calyx_assess.validators import validate_fraction, validate_positive_int

__all__ = [
    "AnnotatedVideo",
    "CalyxResult",
    "CrossValidationResult",
    "FoldResult",
    "VisitationReport",
    "aggregate_visited",
    "build_report",
    "candidate_vertices",
    "classify",
    "cross_validate",
    "fold_threshold",
    "visible_vertices",
    "visited_from_frames",
    "visitation_scores",
]

logger = logging.getLogger(__name__)


def _surface(mesh: LabeledMesh | TriMesh) -> TriMesh:
    return mesh.mesh if isinstance(mesh, LabeledMesh) else mesh


def _as_indices(values: Iterable[int]) -> IntArray:
    if isinstance(values, np.ndarray):
        return values.astype(np.int64).reshape(-1)
    return np.fromiter(values, dtype=np.int64)


def candidate_vertices(
    surface: TriMesh, camera: PinholeCamera, pose: RigidTransform, params: VisibilityParams
) -> tuple[IntArray, FloatArray, FloatArray]:
    """Vertices in front of the camera, inside the image and within viewing range

    :returns: (vertex indices, unit directions from the camera center, distances)
    """
    verts = surface.vertices
    pixels, depth = project_world(camera, pose, verts)
    offsets = verts - pose.center()
    dist = np.linalg.norm(offsets, axis=1)
    keep = (depth > 0) & camera.in_bounds(pixels) & (dist <= params.max_view_distance_mm)
    idx = np.flatnonzero(keep)
    return idx, offsets[idx] / dist[idx, None], dist[idx]


def visible_vertices(
    mesh: LabeledMesh | TriMesh, camera: PinholeCamera, pose: RigidTransform, params: VisibilityParams
) -> IntArray:
    """Indices (ascending) of the vertices seen from a camera pose.

    A vertex is visible when it is in front of the camera, projects into [0, width) x [0, height), lies within
    max_view_distance_mm of the camera center, and no face is hit by the ray towards it closer than its distance
    minus occlusion_epsilon_mm.

    :param mesh: Surface to render
    :param camera: Camera intrinsics
    :param pose: Camera-from-world pose
    :param params: Visibility parameters
    """
    surface = _surface(mesh)
    idx, directions, dist = candidate_vertices(surface, camera, pose, params)
    if not len(idx):
        return idx
    origins = np.broadcast_to(pose.center(), directions.shape)
    blocked = surface.occluded(origins, directions, dist - params.occlusion_epsilon_mm)
    return idx[~blocked]


def aggregate_visited(per_frame_sets: Iterable[Iterable[int]]) -> IntArray:
    """Union of per-frame visible vertex sets, sorted"""
    parts = [_as_indices(s) for s in per_frame_sets]
    if not parts:
        return np.empty(0, dtype=np.int64)
    return np.unique(np.concatenate(parts))


def visitation_scores(mesh: LabeledMesh, visited: Iterable[int]) -> dict[int, float]:
    """Fraction of each calyx's vertices that were visited. Unannotated vertices are ignored

    :param mesh: Labeled mesh
    :param visited: Visited vertex indices
    """
    idx = np.unique(_as_indices(visited))
    if len(idx) and (idx[0] < 0 or idx[-1] >= mesh.mesh.vertex_count):
        raise ValueError(f"visited: Vertex indices must be in [0, {mesh.mesh.vertex_count})")
    counts = np.bincount(mesh.labels[idx], minlength=mesh.calyx_count + 1)
    return {cid: int(counts[cid]) / mesh.calyx_sizes[cid] for cid in mesh.calyx_ids}


def classify(scores: Mapping[int, float], threshold: float) -> dict[int, Visitation]:
    """A calyx is visited iff its score is strictly greater than the threshold"""
    threshold = validate_fraction("threshold", threshold)
    return {cid: Visitation.VISITED if s > threshold else Visitation.MISSED for cid, s in scores.items()}


def fold_threshold(visited_scores: Sequence[float], non_visited_scores: Sequence[float]) -> float:
    """Midpoint between the mean score of visited calyces and the mean score of missed calyces"""
    if not visited_scores or not non_visited_scores:
        empty = "visited" if not visited_scores else "missed"
        raise DegenerateFold(f"Training split has no {empty} calyces")
    mean_v = math.fsum(visited_scores) / len(visited_scores)
    mean_n = math.fsum(non_visited_scores) / len(non_visited_scores)
    return (mean_v + mean_n) / 2.0


@dataclass(frozen=True, kw_only=True, slots=True)
class AnnotatedVideo:
    """Expert visitation labels and computed scores of every calyx of one video"""

    video_id: str
    labels: Mapping[int, Visitation]
    scores: Mapping[int, float]

    def __post_init__(self) -> None:
        if set(self.labels) != set(self.scores):
            raise ValueError(f"video {self.video_id!r}: Labels and scores must cover the same calyces")
        object.__setattr__(self, "labels", {int(k): Visitation(v) for k, v in sorted(self.labels.items())})
        object.__setattr__(self, "scores", {int(k): float(v) for k, v in sorted(self.scores.items())})


@dataclass(frozen=True, kw_only=True, slots=True)
class FoldResult:
    repeat: int
    fold: int
    video_ids: tuple[str, ...]
    threshold: float
    correct: int
    total: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else 0.0


@dataclass(frozen=True, kw_only=True, slots=True)
class CrossValidationResult:
    folds: tuple[FoldResult, ...]
    repeat_accuracies: tuple[float, ...]
    mean_accuracy: float
    ci_low: float
    ci_high: float
    mean_threshold: float
    std_threshold: float
    mean_correct: float
    total_calyces: int
    k: int
    repeats: int
    seed: int


def _split_scores(videos: Iterable[AnnotatedVideo]) -> tuple[list[float], list[float]]:
    visited: list[float] = []
    missed: list[float] = []
    for v in videos:
        for cid, score in v.scores.items():
            (visited if v.labels[cid] == Visitation.VISITED else missed).append(score)
    return visited, missed


def _sample_std(values: Sequence[float]) -> float:
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


def cross_validate(
    videos: Sequence[AnnotatedVideo],
    k: int = DEFAULT_CV_FOLDS,
    repeats: int = DEFAULT_CV_REPEATS,
    seed: int = DEFAULT_RNG_SEED,
) -> CrossValidationResult:
    """Repeated k-fold cross-validation of the visitation threshold.

    Each repeat shuffles the videos with its own seed and splits them into k contiguous folds. A fold's threshold
    is derived from the calyces of the other folds and scored on its own calyces. The confidence interval is
    mean +- 1.96 standard errors of the per-repeat accuracies.

    :param videos: Annotated videos
    :param k: Number of folds
    :param repeats: Number of repeats
    :param seed: Base seed
    """
    validate_positive_int("k", k)
    validate_positive_int("repeats", repeats)
    validate_positive_int("seed", seed, allow_zero=True)
    if len(videos) < k:
        raise ValueError(f"Cannot split {len(videos)} videos into {k} folds")

    folds: list[FoldResult] = []
    repeat_acc: list[float] = []
    repeat_correct: list[int] = []
    total_calyces = sum(len(v.scores) for v in videos)
    for r in range(repeats):
        rng = np.random.default_rng(np.random.SeedSequence([seed, r]))
        order = rng.permutation(len(videos))
        correct = 0
        for f, test_idx in enumerate(np.array_split(order, k)):
            test_set = set(test_idx.tolist())
            train = [v for i, v in enumerate(videos) if i not in test_set]
            test = [videos[i] for i in test_idx.tolist()]
            try:
                threshold = fold_threshold(*_split_scores(train))
            except DegenerateFold as e:
                e.repeat, e.fold = r, f
                add_error_note(e, f"While deriving the threshold of repeat {r}, fold {f}")
                raise
            fold_correct = 0
            fold_total = 0
            for v in test:
                predicted = classify(v.scores, threshold)
                fold_correct += sum(predicted[cid] == label for cid, label in v.labels.items())
                fold_total += len(v.labels)
            folds.append(
                FoldResult(
                    repeat=r,
                    fold=f,
                    video_ids=tuple(v.video_id for v in test),
                    threshold=threshold,
                    correct=fold_correct,
                    total=fold_total,
                )
            )
            correct += fold_correct
        repeat_correct.append(correct)
        repeat_acc.append(correct / total_calyces if total_calyces else 0.0)

    mean_acc = math.fsum(repeat_acc) / repeats
    half_width = CI_Z_SCORE * _sample_std(repeat_acc) / math.sqrt(repeats)
    thresholds = [fr.threshold for fr in folds]
    result = CrossValidationResult(
        folds=tuple(folds),
        repeat_accuracies=tuple(repeat_acc),
        mean_accuracy=mean_acc,
        ci_low=mean_acc - half_width,
        ci_high=mean_acc + half_width,
        mean_threshold=math.fsum(thresholds) / len(thresholds),
        std_threshold=_sample_std(thresholds),
        mean_correct=math.fsum(repeat_correct) / repeats,
        total_calyces=total_calyces,
        k=k,
        repeats=repeats,
        seed=seed,
    )
    logger.info(
        f"Cross-validation: accuracy {mean_acc:.3f} (CI {result.ci_low:.3f}-{result.ci_high:.3f}), "
        f"threshold {result.mean_threshold:.3f} +- {result.std_threshold:.3f}"
    )
    return result


def visited_from_frames(
    mesh: LabeledMesh | TriMesh,
    camera: PinholeCamera,
    frames: Sequence[LocalizedFrame],
    params: VisibilityParams,
    *,
    workers: int = 1,
    progress: bool = False,
) -> IntArray:
    """Union of the vertices visible from every accepted frame"""
    poses = [fr.pose for fr in frames if fr.status == FrameStatus.ACCEPTED and fr.pose is not None]

    def visible(pose: RigidTransform) -> IntArray:
        return visible_vertices(mesh, camera, pose, params)

    per_frame: list[IntArray] = []
    with tqdm(total=len(poses), desc="Visibility", unit="frame", disable=not progress) as bar:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as executor:
                for s in executor.map(visible, poses):
                    per_frame.append(s)
                    bar.update()
        else:
            for pose in poses:
                per_frame.append(visible(pose))
                bar.update()
    return aggregate_visited(per_frame)


@dataclass(frozen=True, kw_only=True, slots=True)
class CalyxResult:
    calyx_id: int
    name: str
    vertex_count: int
    visited_vertex_count: int
    score: float
    classification: Visitation


@dataclass(frozen=True, kw_only=True, slots=True)
class VisitationReport:
    phantom_id: str
    video_id: str
    threshold: float
    calyces: tuple[CalyxResult, ...]
    frame_counts: Mapping[FrameStatus, int]
    frames_input: int
    frames_processed: int
    visited_vertex_count: int
    parameters: Mapping[str, object] = field(default_factory=dict)

    def visited_calyces(self) -> list[int]:
        return [c.calyx_id for c in self.calyces if c.classification == Visitation.VISITED]


def build_report(
    mesh: LabeledMesh,
    visited: Iterable[int],
    threshold: float,
    frame_counts: Mapping[FrameStatus, int],
    *,
    phantom_id: str = "",
    video_id: str = "",
    frames_input: int | None = None,
    parameters: Mapping[str, object] | None = None,
) -> VisitationReport:
    """Score and classify every calyx of a mesh from a visited vertex set"""
    visited = np.unique(_as_indices(visited))
    scores = visitation_scores(mesh, visited)
    labels = classify(scores, threshold)
    visited_per_calyx = np.bincount(mesh.labels[visited], minlength=mesh.calyx_count + 1)
    calyces = tuple(
        CalyxResult(
            calyx_id=cid,
            name=mesh.calyx_names[cid],
            vertex_count=mesh.calyx_sizes[cid],
            visited_vertex_count=int(visited_per_calyx[cid]),
            score=scores[cid],
            classification=labels[cid],
        )
        for cid in mesh.calyx_ids
    )
    processed = sum(frame_counts.values())
    for c in calyces:
        logger.info(f"Calyx {c.calyx_id} ({c.name}): score {c.score:.3f} -> {c.classification}")
    return VisitationReport(
        phantom_id=phantom_id,
        video_id=video_id,
        threshold=threshold,
        calyces=calyces,
        frame_counts=dict(frame_counts),
        frames_input=processed if frames_input is None else frames_input,
        frames_processed=processed,
        visited_vertex_count=len(visited),
        parameters=dict(parameters or {}),
    )
