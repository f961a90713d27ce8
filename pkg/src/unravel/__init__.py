"""Poisson-driven piecewise-deterministic unravellings of GKSL master equations."""

__version__ = "0.1.0"

from .ensemble import (CompareReport, EnsembleResult, compare, ensemble_density, run_ensemble,
                       run_one)
from .grw import (GrwFamily, GrwReport, build_grw_family, gaussian_wavepacket,
                  grw_localization_experiment, lattice_hamiltonian, tune_width)
from .master import MasterTrajectory, StepSizeError, integrate_master, time_grid, trace_distance
from .model import (EXCITED, GROUND, RAW_L, SHIFTED_M, SIGMA_X, ModelError, ModelSpec, ValidationReport, amplitude_damping,
                    lindbladian_apply, load_model, projector, projector_model, save_model, shift_model,
                    to_jump_frame, to_raw_frame, validate_model)
from .observables import (ObservableSeries, energy_memory_curve, observable_series,
                          projected_energy_operator)
from .pdp import (ForbiddenJump, GirsanovRates, JumpEvent, LinearTrajectory, TrajectoryRecord,
                  apply_jump, drift_step, girsanov_rates, jump_rates, norm_process,
                  norm_squared_process, normalizing_process, replay_normalized, simulate_exact,
                  simulate_linear, simulate_mcwf)
from .poisson import (InadmissibleIntegrand, PoissonPath, SampledProcess, StepProcess,
                      check_doleans_sde, doleans_exp, doleans_exp_sum, doleans_inverse,
                      doleans_product, integrate_compensated, sample_unit_poisson, substream)
