"""Structure-preserving model reduction of port-Hamiltonian descriptor systems.

Systems are stored in staircase form (:class:`StaircaseSystem`). Reduced
models are obtained by tangential interpolation of the proper part with an
exact improper part (:func:`interpolate`), optionally with adaptive shift
selection (:func:`irka_ph`, :func:`trksm_ph`) or H-infinity tuning of the
reduced feedthrough (:func:`iha_ph`).
"""

__version__ = '0.1.0'

from phdae_mor.analysis import (ErrorReport, FrequencyResponse, Unbounded, error_report,
                                frequency_grid, h2_error, hinf_error, is_unbounded,
                                sigma_response, transfer_eval, verify_interpolation)
from phdae_mor.errors import (ConsistencyError, EmptyBasisError, InvertibilityError,
                              ModelIOError, NotPortHamiltonianError, PHDAEError,
                              ShiftSingularityError, StageError, StructuralError,
                              UnsupportedCaseError)
from phdae_mor.h2 import (IrkaOptions, IterationHistory, RegionSpec, TrksmOptions,
                          default_shifts, irka_ph, spectral_window, trksm_ph)
from phdae_mor.hinf import (IhaOptions, InterpolationCertificate, PerturbationParams,
                            build_certificate, iha_ph, perturb_rom)
from phdae_mor.interpolation import (InterpolationData, InterpolationOptions, ReducedModel,
                                     TangentialBasis, interpolate, orthonormalize_v2,
                                     reduction_matrices, tangential_basis)
from phdae_mor.io import load_model, save_model
from phdae_mor.kyp import (KypSolution, identity_solution, kyp_residual,
                           minimal_kyp_solution, reduction_matrix_minus)
from phdae_mor.models import (CATEGORIES, GeneratorSpec, LadderParams, generate_rcl_ladder,
                              generate_staircase)
from phdae_mor.pencil import SystemMatrixParts
from phdae_mor.rosenbrock import ProperSubsystem, dinf_closed_form, extract_proper
from phdae_mor.staircase import (StaircaseSystem, ValidationReport, differentiation_index,
                                 validate_staircase)

__all__ = [name for name in dir() if not name.startswith('_')]
