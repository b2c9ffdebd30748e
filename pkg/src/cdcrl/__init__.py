"""Offline actor-critic with an overestimation penalty and a behaviour-likelihood
policy penalty, fitted Q evaluation, and exact checks of the supporting theory."""

__version__ = "0.1.0"

from .agent import Agent, GaussianPolicy, QEnsemble, load_checkpoint, q_bar, save_checkpoint
from .cdc import CdcConfig, TrainRecord, ablation_grid, train
from .dataset import TransitionDataset, load, normalized_score, sample_minibatch, save
from .envs import behavior_policy, evaluate, generate_dataset, make_env, reference_scores
from .ope import OpeConfig, fqe, ope_benchmark, ope_score, pearson

__all__ = [
    "Agent", "GaussianPolicy", "QEnsemble", "load_checkpoint", "q_bar", "save_checkpoint",
    "CdcConfig", "TrainRecord", "ablation_grid", "train",
    "TransitionDataset", "load", "normalized_score", "sample_minibatch", "save",
    "behavior_policy", "evaluate", "generate_dataset", "make_env", "reference_scores",
    "OpeConfig", "fqe", "ope_benchmark", "ope_score", "pearson",
]
