"""Gaussian random polytope laboratory.

Simulation of the plain, ball-truncated and Poisson polytope models,
the geometric constructions behind their variance and CLT analysis, and a
statistical harness that checks the predicted asymptotics at desk scale.
"""

from . import constructions, experiments, geometry, models, sampling, stats

__version__ = "0.1.0"

__all__ = [
    "constructions",
    "experiments",
    "geometry",
    "models",
    "sampling",
    "stats",
    "__version__",
]
