import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from calyx_assess import cli
from calyx_assess.config import AssessConfig, AssessOption, SimulationConfig, load_camera
from calyx_assess.constants import METRICS_FILE_NAME, REPORT_FILE_NAME, TRAJECTORY_FILE_NAME
from calyx_assess.formats.tables import read_trajectory
from calyx_assess.localization.model import ReferenceModel, load_reference_model
from calyx_assess.registration import PointCloud
from calyx_assess.runner import SimulationOutputs, assess_video, run_assess, run_simulate
from calyx_assess.synth import (
    NoiseSpec,
    PhantomSpec,
    TrajectorySpec,
    generate_phantom,
    generate_trajectory,
    perturb_trajectory,
    synthesize_features,
)
from calyx_assess.types import FrameStatus, Visitation, VisibilityParams
from calyx_assess.visitation import visible_vertices

pytestmark = pytest.mark.slow

CLASSIFICATION_THRESHOLD = 0.45
MIN_CALYX_ACCURACY = 0.95
EXPLORATIONS = 20
RUNTIME_BUDGET_S = 600.0


def _simulator_spec(n_calyces: int, seed: int, plan: tuple[int, ...], *, video_id: str = "query") -> str:
    return (
        "[simulation]\n"
        f'phantom_id = "calyces_{n_calyces}_seed_{seed}"\n'
        f'video_id = "{video_id}"\n'
        f"threshold = {CLASSIFICATION_THRESHOLD}\n"
        "\n[phantom]\n"
        f"n_calyces = {n_calyces}\n"
        f"seed = {seed}\n"
        "\n[trajectory]\n"
        f"visit_plan = {list(plan)}\n"
        "teleport_count = 3\n"
        f"seed = {seed}\n"
        "\n[noise]\n"
        "pixel_noise_sigma_px = 0.5\n"
        "outlier_fraction = 0.1\n"
        f"seed = {seed}\n"
    )


def _simulate(root: Path, n_calyces: int, seed: int, plan: tuple[int, ...]) -> SimulationOutputs:
    root.mkdir(parents=True, exist_ok=True)
    spec = root / "spec.toml"
    spec.write_text(_simulator_spec(n_calyces, seed, plan))
    return run_simulate(spec, root / "sim")


@pytest.fixture(scope="module")
def simulated(tmp_path_factory: pytest.TempPathFactory) -> Path:
    """Config of a simulated four-calyx phantom whose query video visits calyces 1 and 2"""
    root = tmp_path_factory.mktemp("simulated")
    spec = root / "spec.toml"
    spec.write_text(_simulator_spec(4, 2, (1, 2), video_id="planned_1_2"))
    assert cli.main(["-q", "simulate", "--spec", str(spec), "--out", str(root / "sim")]) == cli.EXIT_OK
    return root / "sim" / "assess.toml"


def _with_workers(config: Path, workers: int) -> Path:
    text = config.read_text()
    text = text.replace('output_dir = "out"', f'output_dir = "out_{workers}"')
    text = text.replace("[assess]\n", f"[assess]\nworkers = {workers}\n")
    path = config.with_name(f"assess_{workers}.toml")
    path.write_text(text)
    return path


class TestPipeline:
    """End-to-end tests from simulation to the visitation report"""

    def test_simulation_outputs(self, simulated: Path) -> None:
        """Test that the simulation writes every input of the assessment plus its ground truth"""
        truth = json.loads((simulated.parent / "truth.json").read_text())
        assert truth["visit_plan"] == [1, 2]
        assert truth["reference_visit_plan"] == [1, 2, 3, 4]
        assert len(truth["teleport_frames"]) == 3
        assert AssessConfig.from_file(simulated).visibility == VisibilityParams(max_view_distance_mm=15.0)

    def test_assess(self, simulated: Path) -> None:
        """Test that exactly the planned calyces are visited"""
        assert cli.main(["-q", "assess", "--config", str(simulated)]) == cli.EXIT_OK
        out = simulated.parent / "out"
        report = json.loads((out / REPORT_FILE_NAME).read_text())
        assert report["kind"] == "visitation_report"
        assert report["phantom_id"] == "calyces_4_seed_2"
        assert [c["calyx_id"] for c in report["calyces"]] == [1, 2, 3, 4]
        assert report["visited_calyces"] == [1, 2]
        frames = report["frames"]
        statuses = ("accepted", "rejected_spatial", "rejected_temporal", "unlocalized")
        assert frames["processed"] == sum(frames[k] for k in statuses)
        assert frames["accepted"] > frames["processed"] // 2
        assert len(read_trajectory(out / TRAJECTORY_FILE_NAME)) == frames["processed"]

    def test_workers_do_not_change_the_report(self, simulated: Path) -> None:
        """Test that the report is byte-identical with one and with two workers"""
        reports = []
        for workers in (1, 2):
            config = _with_workers(simulated, workers)
            assert cli.main(["-q", "assess", "--config", str(config)]) == cli.EXIT_OK
            reports.append((simulated.parent / f"out_{workers}" / REPORT_FILE_NAME).read_bytes())
        assert reports[0] == reports[1]

    def test_metrics(self, simulated: Path) -> None:
        """Test that a reconstruction made of the mesh vertices matches the mesh and the reference trajectory"""
        assert cli.main(["-q", "metrics", "--config", str(simulated)]) == cli.EXIT_OK
        metrics = json.loads((simulated.parent / "out" / METRICS_FILE_NAME).read_text())
        assert metrics["chamfer_mm"]["mean"] == pytest.approx(0.0, abs=1e-9)
        assert metrics["coverage"]["percent"] == pytest.approx(100.0)
        assert metrics["reprojection"]["mean_px"] == pytest.approx(0.0, abs=1e-6)
        assert metrics["alignment"]["tre_mm"]["mean"] == pytest.approx(0.0, abs=1e-6)


class TestPlannedCalyces:
    """Tests that the assessment marks exactly the calyces of the visit plan"""

    @pytest.mark.parametrize(
        ("n_calyces", "seed", "plan"),
        [
            (6, 0, (1, 2, 3, 4, 5)),
            (6, 1, (3, 4, 6)),
            (6, 2, (2,)),
            (4, 3, (2, 3, 4)),
            (4, 5, (4,)),
        ],
    )
    def test_visited_matches_plan(self, tmp_path: Path, n_calyces: int, seed: int, plan: tuple[int, ...]) -> None:
        """Test that the visited calyces are the planned ones and every other calyx is missed"""
        outputs = _simulate(tmp_path, n_calyces, seed, plan)
        report = run_assess(AssessConfig.from_file(outputs.config_path))
        assert report.visited_calyces() == sorted(plan)
        for c in report.calyces:
            if c.calyx_id not in plan:
                assert c.score < CLASSIFICATION_THRESHOLD, c


class TestClassificationAccuracy:
    """Per-calyx accuracy over seeded explorations of one phantom"""

    @pytest.fixture(scope="class")
    @classmethod
    def default_phantom(cls, tmp_path_factory: pytest.TempPathFactory) -> SimulationOutputs:
        """The default six-calyx phantom with its reference model and assessment config"""
        return _simulate(tmp_path_factory.mktemp("default_phantom"), 6, 0, (1,))

    def test_random_plans(self, default_phantom: SimulationOutputs) -> None:
        """Test that 20 explorations of random calyx subsets are classified with at least 95 % accuracy"""
        config = AssessConfig.from_file(default_phantom.config_path)
        camera = load_camera(config.require(AssessOption.CAMERA, purpose="exploration"))
        model = load_reference_model(
            config.require(AssessOption.REFERENCE, purpose="exploration"),
            config.require(AssessOption.REFERENCE_CLOUD, purpose="exploration"),
            camera=camera,
        )
        mesh, tree = generate_phantom(PhantomSpec(n_calyces=6, seed=0))
        calyx_ids = np.array(tree.calyx_ids)

        correct = total = 0
        for seed in range(EXPLORATIONS):
            rng = np.random.default_rng(seed)
            size = int(rng.integers(1, len(calyx_ids)))
            plan = tuple(sorted(rng.choice(calyx_ids, size=size, replace=False).tolist()))
            truth = generate_trajectory(tree, TrajectorySpec(visit_plan=plan, dwell_s=1.0, seed=seed))
            perturbed, _ = perturb_trajectory(truth, 3, 50.0, seed=seed)
            nspec = NoiseSpec(pixel_noise_sigma_px=0.5, outlier_fraction=0.1, seed=seed)
            query, _ = synthesize_features(mesh, perturbed, camera, nspec, visibility=visible_vertices)
            result = assess_video(
                query,  # type: ignore[arg-type]
                model,
                mesh,
                camera,
                threshold=config.threshold,
                visibility=config.visibility,
                frame_stride=config.frame_stride,
                workers=4,
            )
            for c in result.report.calyces:
                correct += (c.classification == Visitation.VISITED) == (c.calyx_id in plan)
                total += 1
        assert total == EXPLORATIONS * len(calyx_ids)
        assert correct / total >= MIN_CALYX_ACCURACY


class TestRuntime:
    """Assessment runtime on a finely meshed phantom"""

    def test_thousand_frames(self) -> None:
        """Test that 1,000 processed frames against a 50k-vertex phantom are assessed within 10 minutes"""
        mesh, tree = generate_phantom(PhantomSpec(mesh_resolution=76))
        assert mesh.mesh.vertex_count >= 50_000
        simulation = SimulationConfig({})
        camera = simulation.camera
        reference_truth = generate_trajectory(
            tree, TrajectorySpec(visit_plan=tree.calyx_ids, speed_mm_per_s=10.0, seed=1)
        )[::3]
        references, _ = synthesize_features(
            mesh, reference_truth, camera, NoiseSpec(seed=1), reference=True, visibility=visible_vertices
        )
        model = ReferenceModel(cloud=PointCloud(mesh.vertices), frames=tuple(references))  # type: ignore[arg-type]
        query_truth = generate_trajectory(tree, TrajectorySpec(visit_plan=tree.calyx_ids, dwell_s=4.0, seed=2))
        assert len(query_truth) >= 1000
        nspec = NoiseSpec(pixel_noise_sigma_px=0.5, outlier_fraction=0.1, seed=2)
        query, _ = synthesize_features(mesh, query_truth[:1000], camera, nspec, visibility=visible_vertices)

        start = time.perf_counter()
        result = assess_video(
            query,  # type: ignore[arg-type]
            model,
            mesh,
            camera,
            threshold=CLASSIFICATION_THRESHOLD,
            visibility=simulation.visibility,
            frame_stride=1,
            workers=os.cpu_count() or 1,
        )
        elapsed = time.perf_counter() - start

        assert result.report.frames_processed == 1000
        assert result.report.frame_counts[FrameStatus.ACCEPTED] > 500
        assert elapsed <= RUNTIME_BUDGET_S
