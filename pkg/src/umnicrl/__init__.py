"""Latent causal graph and variable recovery from unknown multi-node interventions."""

from .graph import Dag, random_dag, shd, transitive_closure
from .harness import ExperimentConfig, run_batch, run_trial
from .kernels import BACKEND
from .metrics import EvaluationReport, align_permutation, evaluate, mixing_ratio_hard, mixing_ratio_soft
from .scm import EnvironmentSpec, LinearGaussianSem, ObservationModel
from .score import AffineScoreFn, ScoreDifferenceStack, estimate_gaussian_score
from .theory import adjugate_vector, build_counterexample, kappa_bound
from .umni import RecoveryError, RecoveryState, UmniOptions, run_umni

__all__ = [
    "AffineScoreFn",
    "BACKEND",
    "Dag",
    "EnvironmentSpec",
    "EvaluationReport",
    "ExperimentConfig",
    "LinearGaussianSem",
    "ObservationModel",
    "RecoveryError",
    "RecoveryState",
    "ScoreDifferenceStack",
    "UmniOptions",
    "adjugate_vector",
    "align_permutation",
    "build_counterexample",
    "estimate_gaussian_score",
    "evaluate",
    "kappa_bound",
    "mixing_ratio_hard",
    "mixing_ratio_soft",
    "random_dag",
    "run_batch",
    "run_trial",
    "run_umni",
    "shd",
    "transitive_closure",
]
