"""Numerical homogenization of strain-driven energies on periodic structures."""

__version__ = "0.1.0"

from .tensors import (RigidMotion, SkewMatrix, SymMatrix, recession_estimate,  # noqa: F401
                      rigid_eval, sym_product, sym_product_norm_sq)
from .integrand import Integrand, growth_check  # noqa: F401
from .structures import (Rectangle, TileGrid, build_cylinder_lattice,  # noqa: F401
                         build_elastic_spring_cell, build_rigid_spring_cell, competitor_field)
from .solver import CellProblem, assemble_energy, f_hom_estimate, solve  # noqa: F401
from .nonlocal_lab import (CONSTANTS, F_eps_gamma, TwoPhaseField,  # noqa: F401
                           convergence_study, gamma_limit_closed, lateral_surface_energy,
                           project_onto_rigid)
