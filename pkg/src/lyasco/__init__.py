"""Stability-constrained optimization with convex Lyapunov certificates."""

from .core import (DimensionMismatch, EquilibriumManifold, Polytope,
                   QuadraticCertificate, Trajectory, eval_quadratic,
                   eval_quadratic_gradient, min_eigenvalue, polytope_contains)
from .lure import (LmiCertificate, LureSystem, SectorBound,
                   convex_relaxation_coeffs, estimate_sector,
                   facet_vmin_closed_form, inner_approximation_coeffs,
                   solve_lmi, verify_sector, verify_vdot)
from .nlp import NlpProblem, NlpSolution, SolverConfig, solve as solve_nlp
from .sco import (DisturbanceScenario, ScoProblem, ScoSolution, assemble_ssco,
                  solve_sco, taylor_fault_state)
from .sim import (SimConfig, certificate_soundness_trial, classify_stability,
                  integrate)
from .sos import (PolynomialSystem, Polynomial, QuasiPolynomialSystem,
                  SosCertificate, ball_certificate, find_sos_convex_cllf,
                  recast, sos_decompose)
from .vmin import FacetMinimum, VminResult, facet_minimize, v_min, v_min_oracle

__version__ = "0.1.0"
