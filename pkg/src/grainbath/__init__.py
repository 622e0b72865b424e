"""Granular gas in a Maxwellian thermal bath.

Particle simulation (DSMC with majorant thinning), radial-grid collision
operators, spectral analysis of the linearized dynamics, entropy
diagnostics, and steady-state computation with cross-route validation.
"""

from .bath import (BathMaxwellian, collision_frequency_bath,
                   collision_frequency_closed_form, collision_frequency_state,
                   pair_speed_shell_average)
from .collisions import (RestitutionParams, angular_average_A,
                         angular_average_bath, elastic_bath_transform,
                         energy_loss, inelastic_transform, sphere_quadrature)
from .config import ConfigError, ExperimentConfig, load_config_file, resolve
from .density import DensityEstimate, density_estimate
from .engine import (MajorantConfig, SimulationResult, load_checkpoint, run,
                     save_checkpoint, step)
from .ensemble import Ensemble, init_ensemble, random_directions
from .entropy import (EntropyReport, csiszar_kullback_gap, entropy_balance,
                      entropy_production_D, entropy_production_DH,
                      interpolation_check, lambda_fit, relative_entropy,
                      relative_entropy_report)
from .grid import RadialGrid, build_grid
from .kernels import (KernelConstants, calibrate_C0, calibrate_carleman,
                      gain_kernel_K1, scattering_kernel_k,
                      scattering_kernel_mass)
from .manifest import RunManifest, derive_seed, file_sha256
from .operators import (DissipativityReport, OperatorMatrix, assemble_L,
                        assemble_L_alpha, assemble_T_alpha, assemble_splitting,
                        beta_star_default, calibrate_splitting,
                        dissipativity_check, gain_tensor)
from .spectral import DriftTable, SpectralReport, alpha_drift, spectral_report
from .steady import (SteadyStateResult, elastic_limit_curve, sandwich_check,
                     steady_deterministic, steady_dsmc)
from .weights import WeightSpec, operator_l1_norm, weighted_l1

__version__ = "0.1.0"

__all__ = [
    "BathMaxwellian", "ConfigError", "DensityEstimate", "DissipativityReport",
    "DriftTable", "Ensemble", "EntropyReport", "ExperimentConfig",
    "KernelConstants", "MajorantConfig", "OperatorMatrix", "RadialGrid",
    "RestitutionParams", "RunManifest", "SimulationResult", "SpectralReport",
    "SteadyStateResult", "WeightSpec", "alpha_drift", "angular_average_A",
    "angular_average_bath", "assemble_L", "assemble_L_alpha",
    "assemble_splitting", "assemble_T_alpha", "beta_star_default",
    "build_grid", "calibrate_C0", "calibrate_carleman", "calibrate_splitting",
    "collision_frequency_bath", "collision_frequency_closed_form",
    "collision_frequency_state", "csiszar_kullback_gap", "density_estimate",
    "derive_seed", "dissipativity_check", "elastic_bath_transform",
    "elastic_limit_curve", "energy_loss", "entropy_balance",
    "entropy_production_D", "entropy_production_DH", "file_sha256",
    "gain_kernel_K1", "gain_tensor", "inelastic_transform", "init_ensemble",
    "interpolation_check", "lambda_fit", "load_checkpoint", "load_config_file",
    "operator_l1_norm", "pair_speed_shell_average", "random_directions",
    "relative_entropy", "relative_entropy_report", "resolve", "run",
    "sandwich_check", "save_checkpoint", "scattering_kernel_k",
    "scattering_kernel_mass", "spectral_report", "sphere_quadrature",
    "steady_deterministic", "steady_dsmc", "step", "weighted_l1",
]
