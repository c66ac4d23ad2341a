"""Gene-pool optimal mixing for gray-box problems, serial and batched-parallel."""

from pargomea.engine import GomeaConfig, ModelSpec, RunResult, Termination, TraceRecord
from pargomea.graybox import (
    EvaluatedSolution,
    GrayBoxProblem,
    Vig,
    apply_partial,
    build_vig,
    evaluate_modification,
    full_evaluate,
    partial_evaluate,
)
from pargomea.ims import ImsSettings, ImsState, ims_step
from pargomea.linkage import Fos, learn_tree_upgma, mi_similarity, validate_fos, weight_similarity
from pargomea.maxcut import (
    MaxCutInstance,
    as_graybox,
    brute_force_optimum,
    cut_value,
    generate_complete,
    generate_torus,
    load_edge_list,
)
from pargomea.parallel import run_parallel
from pargomea.scheduling import ColorGroups, Lmig, build_lmig, group_stats, welsh_powell
from pargomea.serial import run_serial

__all__ = [
    "ColorGroups",
    "EvaluatedSolution",
    "Fos",
    "GomeaConfig",
    "GrayBoxProblem",
    "ImsSettings",
    "ImsState",
    "Lmig",
    "MaxCutInstance",
    "ModelSpec",
    "RunResult",
    "Termination",
    "TraceRecord",
    "Vig",
    "apply_partial",
    "as_graybox",
    "brute_force_optimum",
    "build_lmig",
    "build_vig",
    "cut_value",
    "evaluate_modification",
    "full_evaluate",
    "generate_complete",
    "generate_torus",
    "group_stats",
    "ims_step",
    "learn_tree_upgma",
    "load_edge_list",
    "mi_similarity",
    "partial_evaluate",
    "run_parallel",
    "run_serial",
    "validate_fos",
    "weight_similarity",
    "welsh_powell",
]

__version__ = "0.1.0"
