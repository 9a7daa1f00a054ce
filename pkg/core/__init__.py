"""Numerical building blocks.

Finite-part quadrature, sphere geometry, scattering kinematics and cross
sections, phase space with its quadrature rules, and the analytic test
fields used by every operator.
"""

from .errors import (
    ConfigError,
    DomainError,
    FinitePartError,
    GeometryError,
    KinematicsError,
    MollerPfError,
)

__all__ = [
    "MollerPfError",
    "FinitePartError",
    "KinematicsError",
    "GeometryError",
    "DomainError",
    "ConfigError",
]
