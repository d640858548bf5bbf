"""Reactive Maxwell-Stefan mixtures with continuous internal energy."""

from .coefficients import (
    AngularPower,
    CoefficientCache,
    CoefficientSet,
    KernelSpec,
    PowerFactor,
    coefficient_set,
    compute_A,
    compute_Dij,
    internal_energy_quadrature,
    ms_rhs,
    rate_constant,
)
from .errors import (
    ConfigError,
    DomainError,
    EstimateDegenerateError,
    IntegrationError,
    NumericalError,
    ReactMSError,
    SingularCoefficientError,
    StiffnessError,
)
from .mixture import (
    NONDIMENSIONAL,
    SI,
    PhysicalConstants,
    ReactionSpec,
    SpeciesParams,
    TabulatedWeight,
    mass_action_ratio,
    maxwellian,
    partition_q,
    partition_qstar,
)

__version__ = "0.1.0"
