"""Distributed adaptive-sample-size inexact Newton solver for regularized ERM."""

from .data import Dataset, SampleWindow, parse_libsvm, load_libsvm, serialize_libsvm, synth_logistic, window, partition
from .model import RiskSpec, RiskView, accuracy, risk_value, risk_grad, full_grad, hvp, full_hvp, estimate_M
from .distrib import WorkerPool, RoundLedger
from .pcg import build_preconditioner, apply_pinv, pcg_solve, exact_newton_reference, reference_minimizer
from .solver import DanceConfig, StageReport, run_stage, run_dance, damped_step, stop_check, stage_sizes
from . import theory

__version__ = "0.1.0"
