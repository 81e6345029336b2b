"""Subcommand implementations: load inputs, run the pipeline stages and write artifacts"""

from __future__ import annotations

import dataclasses
import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from calyx_assess.arrays import IntArray
from calyx_assess.config import AssessConfig, AssessOption, SimulationConfig, load_camera
from calyx_assess.constants import (
    COLORED_MESH_FILE_NAME,
    DEFAULT_CV_FOLDS,
    DEFAULT_CV_REPEATS,
    DEFAULT_ENCODING,
    DEFAULT_RNG_SEED,
    METRICS_FILE_NAME,
    REPORT_FILE_NAME,
    TRAJECTORY_FILE_NAME,
)
from calyx_assess.exceptions import ConfigError, InputFormatError
from calyx_assess.formats.features import write_features
from calyx_assess.formats.reader import read_file
from calyx_assess.formats.tables import read_fiducial_pairs, read_poses, read_trajectory, write_poses, write_trajectory
from calyx_assess.geometry.camera import PinholeCamera
from calyx_assess.localization.model import ReferenceModel, load_reference_model
from calyx_assess.localization.pipeline import localize_video, status_counts
from calyx_assess.metrics import ReconstructionMetrics, evaluate_reconstruction
from calyx_assess.paths import compression_aware_open
from calyx_assess.phantom import LabeledMesh, load_labeled_mesh, load_mesh, save_labeled_mesh
from calyx_assess.registration import (
    IcpParams,
    PointCloud,
    RegistrationResult,
    align_fiducials,
    icp_register,
    load_point_cloud,
    save_point_cloud,
)
from calyx_assess.report import (
    cross_validation_to_dict,
    metrics_to_dict,
    read_annotated_videos,
    read_registration,
    read_transform,
    registration_to_dict,
    simulation_truth_to_dict,
    visitation_report_to_dict,
    write_json,
)
from calyx_assess.synth.features import synthesize_features
from calyx_assess.synth.phantom import generate_phantom
from calyx_assess.synth.trajectory import generate_trajectory, perturb_trajectory
from calyx_assess.types import FrameStatus, LocalizationParams, LocalizedFrame, QueryFrame, VisibilityParams
from calyx_assess.utils import log_duration
from calyx_assess.visitation import (
    CrossValidationResult,
    VisitationReport,
    build_report,
    cross_validate,
    visible_vertices,
    visited_from_frames,
)

__all__ = [
    "Assessment",
    "SimulationOutputs",
    "apply_stride",
    "assess_video",
    "run_assess",
    "run_crossval",
    "run_localize",
    "run_metrics",
    "run_register",
    "run_simulate",
]

logger = logging.getLogger(__name__)

SIMULATED_MESH = "phantom.ply"
SIMULATED_CLOUD = "cloud.ply"
SIMULATED_REFERENCE = "reference.feat"
SIMULATED_QUERY = "query.feat"
SIMULATED_REFERENCE_GT = "reference_gt.csv"
SIMULATED_QUERY_GT = "query_gt.csv"
SIMULATED_TRUTH = "truth.json"
SIMULATED_CAMERA = "camera.toml"
SIMULATED_CONFIG = "assess.toml"


@dataclass(frozen=True, kw_only=True, slots=True)
class Assessment:
    report: VisitationReport
    frames: list[LocalizedFrame]
    visited: IntArray


def apply_stride(frames: Sequence[QueryFrame], stride: int) -> list[QueryFrame]:
    """Keep every stride-th frame, starting with the first"""
    return list(frames[::stride])


def assess_video(
    query: Sequence[QueryFrame],
    model: ReferenceModel,
    mesh: LabeledMesh,
    camera: PinholeCamera,
    *,
    threshold: float,
    localization: LocalizationParams | None = None,
    visibility: VisibilityParams | None = None,
    frame_stride: int = 1,
    workers: int = 1,
    progress: bool = False,
    phantom_id: str = "",
    video_id: str = "",
    parameters: Mapping[str, Any] | None = None,
) -> Assessment:
    """Localize a query video against the reference model and classify every calyx of the mesh

    :param query: Query frames in time order
    :param model: Reference model in the mesh frame
    :param mesh: Labeled cavity mesh
    :param camera: Camera intrinsics
    :param threshold: Visitation score threshold
    :param localization: Localization parameters
    :param visibility: Visibility parameters
    :param frame_stride: Process every frame_stride-th query frame
    :param workers: Threads used per stage
    :param progress: Show progress bars
    :param phantom_id: Mesh identifier copied into the report
    :param video_id: Video identifier copied into the report
    :param parameters: Settings copied into the report
    """
    localization = localization or LocalizationParams()
    visibility = visibility or VisibilityParams()
    processed = apply_stride(query, frame_stride)
    with log_duration("Localization"):
        frames = localize_video(processed, model, mesh, camera, localization, workers=workers, progress=progress)
    with log_duration("Visibility"):
        visited = visited_from_frames(mesh, camera, frames, visibility, workers=workers, progress=progress)
    report = build_report(
        mesh,
        visited,
        threshold,
        status_counts(frames),
        phantom_id=phantom_id,
        video_id=video_id,
        frames_input=len(query),
        parameters=parameters,
    )
    logger.info(f"{len(report.visited_calyces())} of {mesh.calyx_count} calyces visited: {report.visited_calyces()}")
    return Assessment(report=report, frames=frames, visited=visited)


def _load_query(path: Path) -> list[QueryFrame]:
    frames = read_file(path)
    posed = [fr.frame_id for fr in frames if not isinstance(fr, QueryFrame)]
    if posed:
        raise InputFormatError(f"{path.name}: Query frame {posed[0]} carries a pose record")
    return frames


def _load_model(config: AssessConfig, camera: PinholeCamera, purpose: str) -> ReferenceModel:
    registration_path = config.path(AssessOption.REGISTRATION)
    registration = read_registration(registration_path) if registration_path is not None else None
    return load_reference_model(
        config.require(AssessOption.REFERENCE, purpose=purpose),
        config.require(AssessOption.REFERENCE_CLOUD, purpose=purpose),
        camera=camera,
        registration=registration,
    )


def run_localize(config: AssessConfig, *, progress: bool = False) -> list[LocalizedFrame]:
    """Localize the configured query video and write its trajectory CSV"""
    purpose = "the localize subcommand"
    camera = load_camera(config.require(AssessOption.CAMERA, purpose=purpose))
    mesh = load_labeled_mesh(config.require(AssessOption.MESH, purpose=purpose))
    model = _load_model(config, camera, purpose)
    query = _load_query(config.require(AssessOption.QUERY, purpose=purpose))
    frames = localize_video(
        apply_stride(query, config.frame_stride),
        model,
        mesh,
        camera,
        config.localization,
        workers=config.workers,
        progress=progress,
    )
    config.output_dir.mkdir(parents=True, exist_ok=True)
    path = config.output_dir / TRAJECTORY_FILE_NAME
    write_trajectory(path, frames)
    logger.info(f"Wrote {path}")
    return frames


def run_assess(config: AssessConfig, *, progress: bool = False) -> VisitationReport:
    """Run the full assessment and write the report, the trajectory and the colored mesh"""
    purpose = "the assess subcommand"
    camera = load_camera(config.require(AssessOption.CAMERA, purpose=purpose))
    mesh = load_labeled_mesh(config.require(AssessOption.MESH, purpose=purpose))
    model = _load_model(config, camera, purpose)
    query = _load_query(config.require(AssessOption.QUERY, purpose=purpose))
    result = assess_video(
        query,
        model,
        mesh,
        camera,
        threshold=config.threshold,
        localization=config.localization,
        visibility=config.visibility,
        frame_stride=config.frame_stride,
        workers=config.workers,
        progress=progress,
        phantom_id=config.phantom_id,
        video_id=config.video_id,
        parameters=config.parameters(),
    )
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / REPORT_FILE_NAME, visitation_report_to_dict(result.report))
    write_trajectory(out / TRAJECTORY_FILE_NAME, result.frames)
    save_labeled_mesh(out / COLORED_MESH_FILE_NAME, mesh, visited=result.visited)
    logger.info(f"Wrote {out / TRAJECTORY_FILE_NAME} and {out / COLORED_MESH_FILE_NAME}")
    return result.report


def run_metrics(config: AssessConfig) -> ReconstructionMetrics:
    """Evaluate the reference reconstruction and write the metrics document"""
    purpose = "the metrics subcommand"
    camera = load_camera(config.require(AssessOption.CAMERA, purpose=purpose))
    surface = load_mesh(config.require(AssessOption.MESH, purpose=purpose))
    registration_path = config.path(AssessOption.REGISTRATION)
    registration = read_registration(registration_path).transform if registration_path is not None else None
    # the reconstruction is evaluated in its own frame; the registration is applied by the metrics
    model = load_reference_model(
        config.require(AssessOption.REFERENCE, purpose=purpose),
        config.require(AssessOption.REFERENCE_CLOUD, purpose=purpose),
        camera=camera,
    )
    ground_truth_path = config.path(AssessOption.GROUND_TRUTH)
    query_path = config.path(AssessOption.QUERY_TRAJECTORY)
    query_truth_path = config.path(AssessOption.QUERY_GROUND_TRUTH)
    query_estimates = None
    if query_path is not None:
        query_estimates = [fr for fr in read_trajectory(query_path) if fr.status == FrameStatus.ACCEPTED]
    metrics = evaluate_reconstruction(
        model.cloud,
        model.frames,
        surface,
        camera,
        registration=registration,
        ground_truth=read_poses(ground_truth_path) if ground_truth_path is not None else None,
        query_estimates=query_estimates,
        query_ground_truth=read_poses(query_truth_path) if query_truth_path is not None else None,
        fiducial_every=config.fiducial_every,
        with_scale=config.with_scale,
        percentile=config.hausdorff_percentile,
        coverage_radius_mm=config.coverage_radius_mm,
    )
    config.output_dir.mkdir(parents=True, exist_ok=True)
    write_json(config.output_dir / METRICS_FILE_NAME, metrics_to_dict(metrics))
    return metrics


def run_register(
    source: Path,
    target: Path,
    out: Path,
    *,
    init: Path | None = None,
    fiducials: Path | None = None,
    params: IcpParams | None = None,
) -> RegistrationResult:
    """Register a reconstruction cloud to the vertices of a CT mesh with ICP.

    The initial alignment is either a manual transform or a rigid fit to picked fiducial pairs.

    :param source: Reconstruction point cloud (PLY)
    :param target: CT mesh or point cloud (PLY)
    :param out: Output registration document
    :param init: Initial transform (JSON)
    :param fiducials: Fiducial pairs (CSV with sx, sy, sz, tx, ty, tz columns)
    :param params: ICP settings
    """
    if (init is None) == (fiducials is None):
        raise ConfigError("Exactly one of init and fiducials must be given")
    if fiducials is not None:
        initial = align_fiducials(*read_fiducial_pairs(fiducials), with_scale=False).rigid_part()
        logger.info(f"Initial alignment from {fiducials.name}")
    else:
        assert init is not None
        initial = read_transform(init)
    result = icp_register(load_point_cloud(source), load_point_cloud(target), initial, params)
    write_json(out, registration_to_dict(result))
    return result


def run_crossval(
    videos: Path,
    out: Path,
    *,
    k: int = DEFAULT_CV_FOLDS,
    repeats: int = DEFAULT_CV_REPEATS,
    seed: int = DEFAULT_RNG_SEED,
) -> CrossValidationResult:
    """Cross-validate the visitation threshold on annotated videos and write the result"""
    result = cross_validate(read_annotated_videos(videos), k=k, repeats=repeats, seed=seed)
    write_json(out, cross_validation_to_dict(result))
    return result


@dataclass(frozen=True, kw_only=True, slots=True)
class SimulationOutputs:
    out_dir: Path
    mesh: LabeledMesh
    visit_plan: tuple[int, ...]
    teleport_frames: tuple[int, ...]
    reference_frame_count: int
    query_frame_count: int

    @property
    def config_path(self) -> Path:
        return self.out_dir / SIMULATED_CONFIG


def run_simulate(spec_path: Path, out_dir: Path) -> SimulationOutputs:
    """Generate a phantom, a reference model and a query video with known ground truth

    The reference cloud holds the phantom vertices, so point ids are vertex indices and no registration is needed.
    """
    spec = SimulationConfig.from_file(spec_path)
    out_dir.mkdir(parents=True, exist_ok=True)
    mesh, tree = generate_phantom(spec.phantom)
    camera = spec.camera

    reference_plan = spec.reference_visit_plan if spec.reference_visit_plan is not None else tree.calyx_ids
    reference_spec = dataclasses.replace(spec.reference_trajectory, visit_plan=reference_plan)
    reference_gt = generate_trajectory(tree, reference_spec)[:: spec.keyframe_every]
    reference_noise = dataclasses.replace(
        spec.noise, pixel_noise_sigma_px=0.0, outlier_fraction=0.0, seed=spec.noise.seed + 1
    )
    with log_duration("Reference features"):
        reference_frames, reference_truth = synthesize_features(
            mesh, reference_gt, camera, reference_noise, reference=True, visibility=visible_vertices
        )

    query_gt = generate_trajectory(tree, spec.trajectory)
    perturbed, positions = perturb_trajectory(
        query_gt, spec.teleport_count, spec.teleport_distance_mm, seed=spec.trajectory.seed
    )
    with log_duration("Query features"):
        query_frames, query_truth = synthesize_features(
            mesh, perturbed, camera, spec.noise, visibility=visible_vertices
        )
    teleport_frames = tuple(perturbed[i].frame_id for i in positions)

    save_labeled_mesh(out_dir / SIMULATED_MESH, mesh)
    save_point_cloud(out_dir / SIMULATED_CLOUD, PointCloud(mesh.mesh.vertices))
    write_features(
        out_dir / SIMULATED_REFERENCE, reference_frames, header=[f"reference exploration of {spec.phantom_id}"]
    )
    write_features(out_dir / SIMULATED_QUERY, query_frames, header=[f"query video {spec.video_id}"])
    write_poses(out_dir / SIMULATED_REFERENCE_GT, reference_gt)
    write_poses(out_dir / SIMULATED_QUERY_GT, query_gt)
    write_json(
        out_dir / SIMULATED_TRUTH,
        simulation_truth_to_dict(
            phantom_id=spec.phantom_id,
            visit_plan=spec.trajectory.visit_plan,
            reference_visit_plan=tuple(reference_plan),
            teleport_frames=teleport_frames,
            query=query_truth,
            reference=reference_truth,
        ),
    )
    _write_text(out_dir / SIMULATED_CAMERA, _camera_toml(camera))
    _write_text(out_dir / SIMULATED_CONFIG, _assess_toml(spec))
    logger.info(
        f"Simulated {spec.phantom_id}: {mesh.calyx_count} calyces, {len(reference_frames)} reference frames, "
        f"{len(query_frames)} query frames ({len(teleport_frames)} teleported) in {out_dir}"
    )
    return SimulationOutputs(
        out_dir=out_dir,
        mesh=mesh,
        visit_plan=spec.trajectory.visit_plan,
        teleport_frames=teleport_frames,
        reference_frame_count=len(reference_frames),
        query_frame_count=len(query_frames),
    )


def _camera_toml(camera: PinholeCamera) -> str:
    return (
        f"width = {camera.width}\nheight = {camera.height}\n"
        f"fx = {camera.fx!r}\nfy = {camera.fy!r}\ncx = {camera.cx!r}\ncy = {camera.cy!r}\n"
    )


def _assess_toml(spec: SimulationConfig) -> str:
    return (
        "[paths]\n"
        f'mesh = "{SIMULATED_MESH}"\n'
        f'reference = "{SIMULATED_REFERENCE}"\n'
        f'reference_cloud = "{SIMULATED_CLOUD}"\n'
        f'query = "{SIMULATED_QUERY}"\n'
        f'camera = "{SIMULATED_CAMERA}"\n'
        'output_dir = "out"\n'
        f'ground_truth = "{SIMULATED_REFERENCE_GT}"\n'
        f'query_ground_truth = "{SIMULATED_QUERY_GT}"\n'
        f'# query_trajectory = "out/{TRAJECTORY_FILE_NAME}"\n'
        "\n[assess]\n"
        f"threshold = {spec.threshold!r}\n"
        f'phantom_id = "{spec.phantom_id}"\n'
        f'video_id = "{spec.video_id}"\n'
        "\n[visibility]\n"
        f"max_view_distance_mm = {spec.visibility.max_view_distance_mm!r}\n"
        f"occlusion_epsilon_mm = {spec.visibility.occlusion_epsilon_mm!r}\n"
    )


def _write_text(path: Path, text: str) -> None:
    with compression_aware_open(path, mode="w", encoding=DEFAULT_ENCODING, newline="\n") as f:
        f.write(text)
