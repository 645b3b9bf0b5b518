"""Imprecise joint probability for non-commuting projectors.

Submodules: ``operators`` (dense substrate), ``lattice`` (meet/join),
``imprecise`` (lower/upper operators), ``csd`` (CS decomposition),
``nonlocality`` (two-particle gap and spin-1/2 example), ``campaign`` and
``cli`` (verification harness).
"""

from .operators import (
    DensityMatrix,
    HermitianOperator,
    Projector,
    born_expectation,
    haar_random_projector,
    random_density,
)
from .lattice import complement, join, meet
from .imprecise import imprecise_probability, lower_operator, upper_operator
from .csd import cs_decompose
from .nonlocality import TwoParticleScene, upper_gap

__version__ = "0.1.0"
