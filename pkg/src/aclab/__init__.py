"""Numerical laboratory for Allen-Cahn energies with a truncated double well.

Profiles, discrete energies and minimizers, comparison barriers with
refinement certificates, blow-down diagnostics, and Gamma-convergence
experiments for the Dirichlet plus perimeter limit.
"""

__version__ = "0.1.0"

from .potential import PotentialSpec, TRUNCATED_QUARTIC, eval_W, eval_W_prime, surface_tension_c0  # noqa: E402
from .profiles import Profile1D, build_profile, eval_profile, eval_profile_inverse  # noqa: E402
from .fields import IndicatorField, ScalarField, energy_J, perimeter_TV  # noqa: E402
from .minimize import MinimizeConfig, minimize_energy  # noqa: E402

__all__ = [
    "PotentialSpec", "TRUNCATED_QUARTIC", "eval_W", "eval_W_prime", "surface_tension_c0",
    "Profile1D", "build_profile", "eval_profile", "eval_profile_inverse",
    "IndicatorField", "ScalarField", "energy_J", "perimeter_TV",
    "MinimizeConfig", "minimize_energy",
]
