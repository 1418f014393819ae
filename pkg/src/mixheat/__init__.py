"""Simulation and verification tools for the killed process generated by Delta + a^alpha Delta^{alpha/2}."""

from .geometry import Annulus, Ball, BallUnion, HalfSpace, Interval, IntervalUnion, domain_from_config
from .levy_sampling import ProcessParams, RngStream, free_density
from .killed_sim import SimScheme, survival_probability
from .kernel_estimation import estimate_dirichlet_kernel, estimate_green

__version__ = "0.1.0"
