"""Hermite-Galerkin certification toolkit for a linearized multi-species
Boltzmann system: spectral-gap constants, hypocoercivity hypotheses, and
exponential relaxation on the torus."""

from .hermite import HermiteBasis
from .kernels import KernelFamily, PowerLaw, AngularPolynomial
from .mixture import Mixture
from .galerkin import OperatorSet, build_operator_set

__all__ = [
    "HermiteBasis", "KernelFamily", "PowerLaw", "AngularPolynomial",
    "Mixture", "OperatorSet", "build_operator_set",
]

__version__ = "0.1.0"
