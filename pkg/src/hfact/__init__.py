"""Weak factorization of the Hardy space H^1 through multilinear fractional
integrals, computed on uniform grids."""
from ._accel import backend, set_backend, set_threads
from .atoms import (Atom, AtomicDecomposition, atomic_h1_bound, canonical_atom, maximal_h1_estimate,
                    two_bump_decompose, validate_atom)
from .errors import HfactError, NumericalFailure, ValidationError
from .factorization import (AtomApprox, FactorizationResult, FactorizationTerm, approximate_atom,
                            commutator_norm_estimate, duality_check, factorize, series_error_l1)
from .grid import Ball, Grid, GridFunction, ball_indicator, integrate, pointwise
from .operators import (KernelParams, apply_ialpha, apply_partial_adjoint, commutator, kernel_eval,
                        pairing, pi_l)
from .weights import (CubeFamily, ExponentConfig, WeightVector, a_vecp_constant, ap_constant,
                      apq_constant, bmo_norm, doubling_exponents, weighted_lp_norm)

__version__ = "0.1.0"
