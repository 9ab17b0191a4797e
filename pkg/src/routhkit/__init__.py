"""Routh reduction for magnetic Lagrangian systems, single stage and by stages."""

import jax

jax.config.update("jax_enable_x64", True)

from .errors import (ConfigurationError, ConsistencyError, ConvergenceError, DomainError,  # noqa: E402
                     HyperregularityError, NumericError, RegularityError, RouthError,
                     SingularMatrixError, StructureError)
from .lie import (SE2, Circle, GroupAction, Heisenberg, LieGroupModel, Product, RealN,  # noqa: E402
                  sigma_cocycle, sigma_inf, sigma_matrix)
from .magnetic import (BundleChart, MagneticLagrangianSystem, State, el_dynamics, energy,  # noqa: E402
                       gauge_transform, integrate, legendre, presymplectic_form)
from .numerics import (SampledForm, Trajectory, exterior_derivative, gradient, hessian,  # noqa: E402
                       newton_solve, rk4_integrate)

__all__ = [
    "BundleChart", "Circle", "ConfigurationError", "ConsistencyError", "ConvergenceError",
    "DomainError", "GroupAction", "Heisenberg", "HyperregularityError", "LieGroupModel",
    "MagneticLagrangianSystem", "NumericError", "Product", "RealN", "RegularityError",
    "RouthError", "SE2", "SampledForm", "SingularMatrixError", "State", "StructureError",
    "Trajectory", "el_dynamics", "energy", "exterior_derivative", "gauge_transform", "gradient",
    "hessian", "integrate", "legendre", "newton_solve", "presymplectic_form", "rk4_integrate",
    "sigma_cocycle", "sigma_inf", "sigma_matrix",
]
