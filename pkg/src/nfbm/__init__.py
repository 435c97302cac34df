"""Nonlinear forward-backward splitting with momentum, inertia and relaxation.

Subpackages:

* :mod:`nfbm.linops` - vectors, metrics, linear operators and validators
* :mod:`nfbm.engine` - generic recurrences, Lyapunov monitor, run driver
* :mod:`nfbm.certify` - convergence conditions and closed-form parameters
* :mod:`nfbm.zoo` - forward-backward, FHRB and primal-dual instances
* :mod:`nfbm.imaging` - deblurring building blocks and image I/O
* :mod:`nfbm.bench` - experiment harness behind the ``nfbm`` command
"""

from .errors import (DimensionError, DivergenceError, InfeasibleParametersError, MetricError,
                     NFBMError, ParameterError)

__version__ = "0.1.0"

__all__ = [
    "NFBMError",
    "DimensionError",
    "MetricError",
    "ParameterError",
    "InfeasibleParametersError",
    "DivergenceError",
]
