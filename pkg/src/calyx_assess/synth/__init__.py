from calyx_assess.synth.features import NoiseSpec, synthesize_features
from calyx_assess.synth.oracle import brute_force_visibility
from calyx_assess.synth.phantom import CalyxAxis, CenterlineTree, PhantomSpec, generate_phantom
from calyx_assess.synth.trajectory import TrajectorySpec, generate_trajectory, perturb_trajectory

__all__ = [
    "CalyxAxis",
    "CenterlineTree",
    "NoiseSpec",
    "PhantomSpec",
    "TrajectorySpec",
    "brute_force_visibility",
    "generate_phantom",
    "generate_trajectory",
    "perturb_trajectory",
    "synthesize_features",
]
