"""Simplicial graph attention networks for heterogeneous node classification."""
from .data import HeteroGraph, load_dataset, save_dataset
from .harness import ExperimentConfig, RunReport, evaluate_f1, sweep, train
from .kernels import BACKEND
from .lift import LiftConfig, SimplicialComplexBundle, lift
from .model import ModelConfig, init_params, model_forward

__all__ = [
    "BACKEND", "ExperimentConfig", "HeteroGraph", "LiftConfig", "ModelConfig", "RunReport",
    "SimplicialComplexBundle", "evaluate_f1", "init_params", "lift", "load_dataset",
    "model_forward", "save_dataset", "sweep", "train",
]

__version__ = "0.1.0"
