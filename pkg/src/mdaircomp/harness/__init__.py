"""Experiment orchestration: sweeps, result files and the command line."""

from .experiments import (EXPERIMENTS, PRESETS, ExperimentResult, experiment_convergence, experiment_hardening,
                          experiment_mse_vs_m, experiment_mse_vs_q, experiment_optq_vs_l, experiment_sparsity,
                          experiment_vq, preset_config)
