"""2D solver for phase separation of a binary fluid in a porous medium:
convective Cahn-Hilliard transport coupled to Brinkman flow, with the
Darcy (Hele-Shaw) limit, plus experiments that verify the structural
properties of the system: mass conservation, energy dissipation,
continuous dependence, convergence to equilibrium, and the vanishing
viscosity limit.
"""

from .grid import (
    GridSpec,
    MacVector,
    ScalarField,
    divergence,
    gradient_to_faces,
    inner,
    face_inner,
    laplacian,
    norm_h1,
    norm_l2,
)
from .spectral import HelmholtzOperator, norm_hminus1, poisson_neumann
from .potential import Potential
from .flow import (
    FlowSolution,
    FlowSolverError,
    PhysParams,
    brinkman_solve,
    capillary_force,
    darcy_solve,
)
from .dynamics import (
    BlowUpError,
    DiagnosticsRecord,
    SimState,
    SolverConfig,
    ch_step,
    chemical_potential,
    convective_divergence,
    dissipation_audit,
    energy,
    run,
)
from .equilibrium import (
    RateFit,
    StationaryState,
    equilibrium_experiment,
    fit_decay,
    solve_stationary,
    velocity_decay_check,
)
from .experiments import (
    DependenceResult,
    SweepResult,
    continuous_dependence,
    dissipativity_probe,
    viscosity_sweep,
)
from .config import RunConfig, make_initial, parse_config, serialize

__version__ = "0.1.0"
