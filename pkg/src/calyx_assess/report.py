"""JSON documents written and read by the command line tools.

Every document starts with ``schema_version`` and ``kind``. Keys are emitted in a fixed order and floats are written
with ``repr`` precision, so identical results serialize to identical bytes.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Mapping
from pathlib import Path
from typing import Any

from calyx_assess.compat import StrEnum
from calyx_assess.constants import DEFAULT_ENCODING, REPORT_SCHEMA_VERSION
from calyx_assess.exceptions import InputFormatError
from calyx_assess.formats.reader import read_file
from calyx_assess.geometry.transforms import RigidTransform
from calyx_assess.metrics import PoseErrorStats, ReconstructionMetrics
from calyx_assess.paths import compression_aware_open
from calyx_assess.registration import RegistrationResult
from calyx_assess.types import DistanceStats, FrameStatus, Visitation
from calyx_assess.visitation import AnnotatedVideo, CrossValidationResult, VisitationReport

__all__ = [
    "ReportKind",
    "cross_validation_to_dict",
    "metrics_to_dict",
    "read_annotated_videos",
    "read_registration",
    "read_transform",
    "registration_to_dict",
    "simulation_truth_to_dict",
    "transform_from_dict",
    "transform_to_dict",
    "visitation_report_to_dict",
    "write_json",
]

logger = logging.getLogger(__name__)


class ReportKind(StrEnum):
    VISITATION_REPORT = "visitation_report"
    RECONSTRUCTION_METRICS = "reconstruction_metrics"
    CROSS_VALIDATION = "cross_validation"
    REGISTRATION = "registration"
    SIMULATION_TRUTH = "simulation_truth"


def _header(kind: ReportKind) -> dict[str, Any]:
    return {"schema_version": REPORT_SCHEMA_VERSION, "kind": str(kind)}


def write_json(path: Path, document: Mapping[str, Any]) -> None:
    """Write a JSON document with a trailing newline

    :param path: Output path (a .gz/.bz2/.xz suffix compresses the output)
    :param document: JSON-serializable mapping
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    with compression_aware_open(path, mode="w", encoding=DEFAULT_ENCODING, newline="\n") as f:
        f.write(json.dumps(document, indent=2, allow_nan=False) + "\n")
    logger.info(f"Wrote {path}")


def transform_to_dict(t: RigidTransform) -> dict[str, Any]:
    return {"rotation": list(t.rotation), "translation": list(t.translation)}


def transform_from_dict(doc: Any, *, source: str) -> RigidTransform:
    if not isinstance(doc, Mapping) or "rotation" not in doc or "translation" not in doc:
        raise InputFormatError(f"{source}: A transform needs 'rotation' (w, x, y, z) and 'translation' entries")
    try:
        return RigidTransform(rotation=tuple(doc["rotation"]), translation=tuple(doc["translation"]))
    except (TypeError, ValueError) as e:
        raise InputFormatError(f"{source}: {e}") from None


def read_transform(path: Path) -> RigidTransform:
    """Read a rigid transform from JSON. Registration documents are accepted and yield their transform"""
    doc = read_file(path)
    if isinstance(doc, Mapping) and doc.get("kind") == ReportKind.REGISTRATION:
        doc = doc.get("transform")
    return transform_from_dict(doc, source=path.name)


def registration_to_dict(result: RegistrationResult) -> dict[str, Any]:
    return {
        **_header(ReportKind.REGISTRATION),
        "transform": transform_to_dict(result.transform),
        "mean_residual_mm": result.mean_residual_mm,
        "iterations_used": result.iterations_used,
        "residual_history_mm": list(result.residual_history),
    }


def read_registration(path: Path) -> RegistrationResult:
    """Read a registration document written by the register subcommand"""
    doc = read_file(path)
    if not isinstance(doc, Mapping) or doc.get("kind") != ReportKind.REGISTRATION:
        raise InputFormatError(f"{path.name}: Not a registration document")
    try:
        return RegistrationResult(
            transform=transform_from_dict(doc.get("transform"), source=path.name),
            mean_residual_mm=float(doc["mean_residual_mm"]),
            iterations_used=int(doc["iterations_used"]),
            residual_history=tuple(float(x) for x in doc.get("residual_history_mm", ())),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise InputFormatError(f"{path.name}: Malformed registration document ({e})") from None


def _stats(s: DistanceStats | None) -> dict[str, Any] | None:
    return None if s is None else {"mean": s.mean, "std": s.std, "count": s.count}


def _pose_stats(s: PoseErrorStats | None) -> dict[str, Any] | None:
    return None if s is None else {"position_mm": _stats(s.position_mm), "rotation_deg": _stats(s.rotation_deg)}


def visitation_report_to_dict(report: VisitationReport) -> dict[str, Any]:
    return {
        **_header(ReportKind.VISITATION_REPORT),
        "phantom_id": report.phantom_id,
        "video_id": report.video_id,
        "threshold": report.threshold,
        "frames": {
            "input": report.frames_input,
            "processed": report.frames_processed,
            **{str(status): report.frame_counts.get(status, 0) for status in FrameStatus},
        },
        "visited_vertex_count": report.visited_vertex_count,
        "visited_calyces": report.visited_calyces(),
        "calyces": [
            {
                "calyx_id": c.calyx_id,
                "name": c.name,
                "vertex_count": c.vertex_count,
                "visited_vertex_count": c.visited_vertex_count,
                "score": c.score,
                "classification": str(c.classification),
            }
            for c in report.calyces
        ],
        "parameters": dict(report.parameters),
    }


def metrics_to_dict(m: ReconstructionMetrics) -> dict[str, Any]:
    alignment = None
    if m.alignment is not None:
        a = m.alignment
        alignment = {
            "transform": {**transform_to_dict(a.transform.rigid_part()), "scale": a.transform.scale},
            "fiducial_count": a.fiducial_count,
            "held_out_count": a.held_out_count,
            "tre_mm": _stats(a.tre),
            "reference_pose_error": _pose_stats(a.pose_error),
        }
    return {
        **_header(ReportKind.RECONSTRUCTION_METRICS),
        "chamfer_mm": _stats(m.chamfer),
        "hausdorff": {"percentile": m.hausdorff_percentile, "distance_mm": m.hausdorff_mm},
        "coverage": {"radius_mm": m.coverage_radius_mm, "percent": m.coverage_percent},
        "reprojection": {
            "mean_px": m.reprojection.mean_px,
            "used": m.reprojection.used,
            "excluded_behind_camera": m.reprojection.excluded_behind_camera,
        },
        "alignment": alignment,
        "query_pose_error": _pose_stats(m.query_pose_error),
    }


def cross_validation_to_dict(result: CrossValidationResult) -> dict[str, Any]:
    return {
        **_header(ReportKind.CROSS_VALIDATION),
        "k": result.k,
        "repeats": result.repeats,
        "seed": result.seed,
        "mean_accuracy": result.mean_accuracy,
        "ci_low": result.ci_low,
        "ci_high": result.ci_high,
        "mean_threshold": result.mean_threshold,
        "std_threshold": result.std_threshold,
        "mean_correct": result.mean_correct,
        "total_calyces": result.total_calyces,
        "repeat_accuracies": list(result.repeat_accuracies),
        "folds": [
            {
                "repeat": f.repeat,
                "fold": f.fold,
                "video_ids": list(f.video_ids),
                "threshold": f.threshold,
                "correct": f.correct,
                "total": f.total,
                "accuracy": f.accuracy,
            }
            for f in result.folds
        ],
    }


def read_annotated_videos(path: Path) -> list[AnnotatedVideo]:
    """Read expert-annotated videos for cross-validation.

    The file holds a list (or a ``{"videos": [...]}`` document) of entries
    ``{"video_id": str, "labels": {calyx_id: "visited" | "missed"}, "scores": {calyx_id: float}}``.
    """
    doc = read_file(path)
    entries = doc.get("videos") if isinstance(doc, Mapping) else doc
    if not isinstance(entries, list):
        raise InputFormatError(f"{path.name}: Expected a list of annotated videos")
    videos = []
    for i, entry in enumerate(entries):
        try:
            videos.append(
                AnnotatedVideo(
                    video_id=str(entry["video_id"]),
                    labels={int(k): Visitation(v) for k, v in entry["labels"].items()},
                    scores={int(k): float(v) for k, v in entry["scores"].items()},
                )
            )
        except (KeyError, TypeError, ValueError, AttributeError) as e:
            raise InputFormatError(f"{path.name}: Video entry {i} is malformed ({e!r})") from None
    return videos


def simulation_truth_to_dict(
    *,
    phantom_id: str,
    visit_plan: tuple[int, ...],
    reference_visit_plan: tuple[int, ...],
    teleport_frames: tuple[int, ...],
    query: Mapping[int, Any],
    reference: Mapping[int, Any],
) -> dict[str, Any]:
    """Ground truth of a simulated video: per frame, the 3D point id of every keypoint (-1 for outliers)"""
    return {
        **_header(ReportKind.SIMULATION_TRUTH),
        "phantom_id": phantom_id,
        "visit_plan": list(visit_plan),
        "reference_visit_plan": list(reference_visit_plan),
        "teleport_frames": list(teleport_frames),
        "query": {str(k): [int(i) for i in v] for k, v in query.items()},
        "reference": {str(k): [int(i) for i in v] for k, v in reference.items()},
    }
