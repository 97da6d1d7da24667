"""Locally exact integrators: exponential-type modifications of classical and
discrete gradient schemes, with a verification and benchmark harness."""
from .matfun import expm, expm_phi1, phi1, tanhc_half
from .schemes import (
    CATALOG,
    RunRecord,
    SchemeSpec,
    SolverSettings,
    StepSizeError,
    integrate,
    scheme,
    step,
    step_scheme,
)
from .systems import (
    CostTally,
    HamiltonianSystem,
    LinearSystem,
    OdeSystem,
    anharmonic2d,
    circ_init,
    circular_orbit,
    get_system,
    hamiltonian_to_ode,
    linear_ode,
    quadratic_hamiltonian,
    quartic1d,
)

__version__ = "0.1.0"
