"""Computations with meromorphic connections on the projective line having
parahoric (ramified) irregular singularities: truncated Laurent matrix
arithmetic, gauge reduction to normalized formal types, moduli-point
assembly and validation, and numerical integration of the isomonodromy
equations with integrability and conservation checks."""

from .laurent import (LaurentMatrix, LaurentSeries, NotInvertibleError,
                      OneForm, WindowError, derive, exp_matrix,
                      gauge_transform, gauge_transform_logz, invert,
                      max_abs_diff, pair, residue_matrix)
from .parahoric import (ParahoricContext, TorusElement, canonical_framing,
                        grading_derivation, project_to_torus,
                        random_graded_element, random_unit_gauge,
                        same_framing_coset, torus_basis_element, valuation)
from .strata import (FormalType, ResonanceError, Stratum, StratumError,
                     StratumReport, check_regular, normalize,
                     reduce_to_formal_type, solve_graded_bracket)
from .moduli import (LocalPoint, ModuliError, ModuliPoint,
                     RationalMatrixForm, ValidationReport,
                     assemble_connection, decompose, glue_principal_parts,
                     local_normalized_type, moment_residue, validate_point)
from .isoflow import (FlowState, PathSpec, Trajectory, TrajectorySample,
                      alpha_velocity, assemble_alpha, balanced_flow_state,
                      curvature_two_form_residual, deformation_residuals,
                      extended_orbit_dim, global_deformation_form,
                      integrate_flow, irregular_tangent, iwahori_rhs,
                      pfaffian_rank_check)

__version__ = "0.1.0"
