"""Sparse identification of dynamics from GP-smoothed measurements."""

import sys

__version__ = "0.1.0"

from .errors import GPSINDyError
from .trajdata import (NoiseSpec, TrajectoryDataset, add_noise, central_difference, downsample,
                       load_csv, save_csv, train_test_split)
from .kernels import Family, HyperParams, KernelSpec, gram
from .gpsmooth import KernelInput, SmootherConfig, select_kernel, smooth_derivatives, smooth_states
from .funclib import LibrarySpec, build_library, term_names
from .sparsereg import AdmmConfig, LassoADMM, lasso_admm
from .sysid import (LearnedModel, fit_method, gpsindy_fit, load_model, rollout_model, save_model,
                    sindy_fit, ssr_fit)
from .benchmodels import figure_eight_dataset, generate_dataset, get_system, ground_truth_xi, sample_grid
from .evalbench import run_frequency_sweep, run_noise_sweep, summarize

__all__ = [n for n, v in dict(globals()).items()
           if not n.startswith("_") and not isinstance(v, type(sys))]
