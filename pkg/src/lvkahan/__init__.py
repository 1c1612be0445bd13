"""Generalized Lotka-Volterra systems with linear Hamiltonian and their Kahan maps."""

from .core import (
    CumulativeSums,
    SystemParams,
    build_system,
    cumulative_sums,
    hamiltonian,
    interaction_matrix,
    rescale,
    vector_field,
)
from .dynamics import (
    QuadraticField,
    TrajectoryRecord,
    exact_flow,
    exact_v_flow,
    f_of_t,
    kahan_iterates_closed,
    kahan_step_closed,
    kahan_step_generic,
    rk4_step,
    step_to_time,
    trajectory,
)
from .integrals import (
    Integral,
    eval_C,
    eval_F,
    eval_G,
    eval_J,
    eval_K,
    independence_rank,
    liouville_set,
    superintegrable_set,
)
from .poisson import (
    DiagonalBracket,
    bracket,
    check_casimir,
    check_involution,
    jacobiator,
    poisson_map_check,
    structure_matrix,
)

__version__ = "0.1.0"
