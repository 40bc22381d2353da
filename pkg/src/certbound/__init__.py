"""Certified lower bounds for multivariate transcendental functions.

The pipeline: expression trees with interval enclosures, max-plus
parabolic estimators for transcendental nodes, semialgebraic lifting to
polynomial optimization, Lasserre SOS relaxations solved by a dense
interior-point method, quadratic template compression, box subdivision,
and exact rational certificates for the SDP bounds.
"""

from .cert import (CertVerdict, SOSCertificate, check_certificate,
                   check_estimator_certificates, read_certificate,
                   round_project, write_certificate)
from .estimator import Parabola, SAEstimator, build_par, compose, compose_bop
from .expr import (Expr, ParseError, Problem, evaluate, differentiate,
                   gradient, interval_eval, parse_expr, parse_problem)
from .interval import Box, DomainError, Interval
from .lifting import LiftingPlan, max_sa, min_sa, translate
from .optimizer import (BoundReport, BoxRecord, RunConfig, certify_bound,
                        initial_control_points, parse_report,
                        refine_control_points, template_optim)
from .poly import MonomialBasis, SparsePoly
from .relax import POPInstance, assemble_Qk, min_k_order, pop_lower_bound
from .sdp import SDPProblem, SDPSolution, SDPStatus, solve_sdp
from .template import build_template, build_quadratic_form, halton_points

__version__ = "0.1.0"

__all__ = [
    "Box", "BoundReport", "BoxRecord", "CertVerdict", "DomainError", "Expr",
    "Interval", "LiftingPlan", "MonomialBasis", "POPInstance", "Parabola",
    "ParseError", "Problem", "RunConfig", "SAEstimator", "SDPProblem",
    "SDPSolution", "SDPStatus", "SOSCertificate", "SparsePoly",
    "assemble_Qk", "build_par", "build_quadratic_form", "build_template",
    "certify_bound", "check_certificate", "check_estimator_certificates",
    "compose", "compose_bop", "differentiate", "evaluate", "gradient",
    "halton_points", "initial_control_points", "interval_eval", "max_sa",
    "min_k_order", "min_sa", "parse_expr", "parse_problem", "parse_report",
    "pop_lower_bound", "read_certificate", "refine_control_points",
    "round_project", "solve_sdp", "template_optim", "translate",
    "write_certificate",
]
