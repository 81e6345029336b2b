from __future__ import annotations

import math

DEFAULT_ENCODING = "utf-8"

# Geometry tolerances (mm unless stated)
EPSILON_ORIGIN_MM = 1e-6
EPSILON_SURFACE_MM = 1e-3
UNIT_NORM_TOLERANCE = 1e-9
DESCRIPTOR_NORM_TOLERANCE = 1e-6
BVH_LEAF_SIZE = 8
BVH_BOX_PADDING_MM = 1e-7
# Fixed, irrational-looking direction used for inside/outside parity tests
PROBE_DIRECTION = tuple(c / math.sqrt(0.5773**2 + 0.6121**2 + 0.5403**2) for c in (0.5773, 0.6121, 0.5403))

# Labeled mesh
MIN_CALYX_VERTICES = 50
UNANNOTATED_LABEL = 0

# Registration
DEFAULT_ICP_MAX_ITERATIONS = 100
DEFAULT_ICP_CONVERGENCE_DELTA_MM = 1e-4
DEFAULT_ICP_CORRESPONDENCE_CUTOFF_MM = 10.0
DEFAULT_FIDUCIAL_INLIER_THRESHOLD_MM = 5.0
DEFAULT_FIDUCIAL_RANSAC_ITERATIONS = 1000
DEFAULT_HAUSDORFF_PERCENTILE = 99.0
DEFAULT_COVERAGE_RADIUS_MM = 1.0
DEFAULT_FIDUCIAL_EVERY = 10

# Localization
DEFAULT_RETRIEVAL_K = 10
DEFAULT_MIN_MATCH_COUNT = 20
DEFAULT_MIN_INLIER_COUNT = 15
DEFAULT_MIN_INLIER_RATIO = 0.3
DEFAULT_ESSENTIAL_SAMPSON_THRESHOLD_PX = 2.0
DEFAULT_PNP_REPROJECTION_THRESHOLD_PX = 4.0
DEFAULT_RANSAC_ITERATIONS = 2000
DEFAULT_RANSAC_CONFIDENCE = 0.999
DEFAULT_RANSAC_BATCH_SIZE = 250
DEFAULT_MIN_PNP_ITERATIONS = 50
DEFAULT_RATIO_TEST = 0.8
DEFAULT_V_MAX_MM_PER_S = 135.0
DEFAULT_RNG_SEED = 0

# Visitation
DEFAULT_MAX_VIEW_DISTANCE_MM = 50.0
DEFAULT_OCCLUSION_EPSILON_MM = 0.1
# Sight range pinned in simulated assessment configs. From the pelvis center it ends short of any calyx tip
SIMULATED_MAX_VIEW_DISTANCE_MM = 15.0
DEFAULT_VISITATION_THRESHOLD = 0.45
DEFAULT_CV_FOLDS = 5
DEFAULT_CV_REPEATS = 5
CI_Z_SCORE = 1.96

# Video ingestion
DEFAULT_FPS = 30.0
DEFAULT_FRAME_STRIDE = 2

# Output artifacts
REPORT_SCHEMA_VERSION = 1
REPORT_FILE_NAME = "report.json"
TRAJECTORY_FILE_NAME = "trajectory.csv"
COLORED_MESH_FILE_NAME = "visited_mesh.ply"
METRICS_FILE_NAME = "metrics.json"
