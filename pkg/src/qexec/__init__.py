"""Execution-time prediction for quantum circuits.

Parse OpenQASM 2.0 programs, encode them as global and graph features, train a
graph-transformer regressor on measured timings and pick which circuits to
measure next with greedy input-space sampling.
"""
from .analysis import evaluate, shap_importance, spearman
from .circuit import (
    Circuit,
    CircuitDag,
    GateOp,
    GateRegistry,
    default_global_registry,
    default_node_registry,
    depth,
    to_dag,
    to_qasm,
)
from .dataset import kfold, label_samples, load_manifest, min_repeats, split
from .features import (
    BackendCalibration,
    GlobalFeatures,
    GraphSample,
    global_features,
    minmax_scale,
    node_features,
    pooled_graph_vector,
)
from .model import ModelConfig, forward, load_params, loss_and_grad, save_params
from .qasm import parse_qasm
from .sampling import blended_distance, build_pool, gsx_select, plan_budget
from .training import Predictor, TrainConfig, fine_tune_cv, grid_search, train

__version__ = "0.1.0"
