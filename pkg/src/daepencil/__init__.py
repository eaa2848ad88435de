"""Pencil classification, block decomposition, semilinear DAE integration and
sampled solvability/blow-up certificates."""

from .pencil import (INDEX_ABOVE_ONE, Pencil, PencilClass, PencilKind,
                     RankTolerance, classify, pencil_rank, regular_index)
from .kernel import (ChainReport, MinimalBasis, PolySolution, Side,
                     minimal_indices, polynomial_kernel_basis, validate_chain)
from .decomposition import (Decomposition, IdentityReport, decompose,
                            max_principal_angle, regular_split, semi_inverse,
                            verify_decomposition)
from .expr import (Expr, Predicate, differentiate, evaluate, jacobian,
                   parse_expr, parse_predicate, to_text)
from .problem import ProblemFile, SemilinearDAE, load_problem
from .reduction import (ConsistencyResult, ReducedSystem, build_reduced,
                        check_consistency, consistency_project, phi_operator)
from .integrate import (FreePin, IntegratorOptions, Trajectory, Verdict,
                        estimate_escape_time, integrate, lagrange_report,
                        write_csv)
from .certificates import (CertificateReport, CertificateSpec, combined_verdict,
                           check_blowup_certificate, check_bounded_manifold,
                           check_global_certificate, check_invariance,
                           comparison_solve, osgood_test, parse_certificates,
                           run_certificate)
from . import corpus, errors

__version__ = "0.1.0"

__all__ = [
    "Pencil", "PencilClass", "PencilKind", "RankTolerance", "INDEX_ABOVE_ONE",
    "classify", "pencil_rank", "regular_index",
    "PolySolution", "MinimalBasis", "ChainReport", "Side",
    "polynomial_kernel_basis", "minimal_indices", "validate_chain",
    "Decomposition", "IdentityReport", "decompose", "regular_split",
    "semi_inverse", "verify_decomposition", "max_principal_angle",
    "Expr", "Predicate", "parse_expr", "parse_predicate", "differentiate",
    "evaluate", "jacobian", "to_text",
    "SemilinearDAE", "ProblemFile", "load_problem",
    "ReducedSystem", "ConsistencyResult", "build_reduced", "phi_operator",
    "consistency_project", "check_consistency",
    "Trajectory", "Verdict", "FreePin", "IntegratorOptions", "integrate",
    "estimate_escape_time", "lagrange_report", "write_csv",
    "CertificateSpec", "CertificateReport", "parse_certificates",
    "run_certificate", "check_global_certificate", "check_blowup_certificate",
    "check_invariance", "check_bounded_manifold", "comparison_solve",
    "osgood_test", "combined_verdict",
    "corpus", "errors",
]
