"""Compressive-sensing R2*/T2* mapping from undersampled multi-coil k-space."""

from .core import (CoilSet, EchoTimes, KSpaceData, MultiEchoSet, ReconParams,
                   default_echo_times, image_linf_diff, masked_relative_error)
from .phantom import (AcquisitionSpec, Phantom, coil_combine, decay_images,
                      make_phantom, simulate_kspace, synth_coils, truncate_echoes)
from .recon import (ConvergenceTrace, ParamGrids, PreconditionReport, ReconMethod,
                    ReconResult, check_convergence_preconditions, recon_decoupled,
                    recon_joint_admm, recon_model_based, reconstruct, tune_parameters)
from .sampling import (EchoPatternSet, InfeasibleRateError, SamplingPattern,
                       make_echo_patterns, poisson_disk)
from .solvers import (Monotone1D, QuadL1Problem, bisect_root, fista_l1,
                      global_min_1d_e, global_min_1d_e_batch, power_iteration_norm)
from .transforms import SamplingOperator, WaveletFrame, soft_threshold

__version__ = "0.1.0"
