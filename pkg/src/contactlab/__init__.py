"""Structure-preserving integration toolkit for contact Hamiltonian systems
on the first jet space of R^n.

Exact strict and lifted contact subflows, a symbolic polynomial bracket
algebra with depth-one decomposition, splitting and commutator-gadget
combinators, momentum-prolonged base integrators, and a benchmark CLI.
"""

from .core import (ConformalReport, Hamiltonian, JetPoint,
                   contact_vector_field, conformal_rate,
                   pullback_conformal_factor, verify_contactomorphism)
from .algebra import (DepthOneRepresentation, JetPoly, chebyshev_surrogate,
                      depth_one_decompose, euler_operator, format_poly,
                      jacobi_bracket, lower_degree, parse_poly,
                      poisson_bracket, raise_degree, scale_by)
from .subflows import (ContactStep, bernoulli_B_flow, bernoulli_T_flow,
                       drift_flow, forcing_flow, gradient_step,
                       harmonic_strict_flow, kick_flow, legendre_map,
                       quad_u_flow, reeb_scaling_flow, step_from_label,
                       vdp_substep_flows)
from .lifting import (BaseVectorField, JacobianBlocks, adaptive_base_step,
                      base_rhs, contact_rhs, full_system_rk4,
                      full_system_rk4_step, lifted_contact_step, lifted_step,
                      prolong_momentum, reference_solve, rk4_base_step)
from .composition import (RunRecord, Scheme, build_universal_scheme,
                          gadget_basic, gadget_symmetric, gadget_yoshida,
                          lie_trotter, run_trajectory, strang, yoshida4)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
