"""Dissipaton equations of motion for fermionic quantum-dot impurities."""

from .bath import (DissipatonMode, LorentzBath, ModeTable, build_mode_table, decompose_correlation,
                   decomposition_error, read_mode_table, reconstruct, reference_correlation, spectral_density,
                   write_mode_table)
from .config import PRESETS, RunConfig, parse_config
from .errors import (AlignmentError, CapacityError, ConfigError, ConvergenceError, DEOMError, FitError,
                     GridError, InstabilityError, QuadratureError, ShapeError, SingularityError, SizeError)
from .estimators import ExponentialSeriesFit, LorentzBathDecomposition
from .hierarchy import (DEOMGenerator, HierarchyIndex, HierarchyLayout, HierarchyState, ddo_count,
                        enumerate_indices, read_snapshot, write_snapshot)
from .model import (DqdParameters, FockOperatorSet, build_dqd_hamiltonian, build_fock_operators,
                    build_single_dot_hamiltonian, epsilon_from_scheme)
from .observables import (SpectrumTable, SteadySystem, correlation_function, impurity_spectral_function,
                          noise_spectrum, solve_system, spectrum_derivative, steady_current, total_noise)
from .solvers import (SolverConfig, propagate, solve_frequency_response, solve_steady_state)

__version__ = "0.1.0"
