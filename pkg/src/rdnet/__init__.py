"""Balanced reaction networks with diffusion on simplicial meshes."""

from .crn import (
    BalancedForm,
    EquilibriaSet,
    ReactionNetwork,
    balance,
    balanced_rate_constants,
    compute_limit_point,
    conserved_moieties,
    equilibria_set,
    find_thermodynamic_equilibrium,
    gibbs_free_energy,
    gibbs_gradient,
    is_equilibrium,
    reaction_vector_field,
    stoichiometric_matrix,
)
from .compartmental import (
    CompartmentalSystem,
    assemble,
    closed_rhs,
    disagreement,
    open_rhs,
    reaction_field_all,
    total_energy,
)
from .integrate import (
    ConvergenceStatus,
    IntegratorConfig,
    Trajectory,
    detect_convergence,
    integrate,
    monitor_persistency,
)

__version__ = "0.1.0"
