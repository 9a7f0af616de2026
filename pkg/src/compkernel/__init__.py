"""Compositional kernels of deep perceptrons through branching-process duality.

An activation with normalized Hermite coefficients ``a_k`` corresponds to
the offspring law ``p_k = a_k^2``. The depth-``L`` kernel is the ``L``-fold
composition of that law's generating function, equivalently
``E[rho^Z_L]`` for the Galton-Watson generation size ``Z_L``.
"""

__version__ = "0.1.0"

from . import (  # noqa: E402
    branching,
    duality,
    features,
    hermite,
    kernel,
    memorization,
    rng,
    spectral,
    sphere,
)
from .duality import Pgf  # noqa: E402
from .errors import (  # noqa: E402
    BoundNotApplicableError,
    ConvergenceError,
    DegenerateActivationError,
    NotPositiveDefiniteError,
)
from .hermite import ActivationFn, ActivationSpec  # noqa: E402
from .kernel import CompositionalKernel, KernelMatrix  # noqa: E402
from .sphere import SphereDataset  # noqa: E402

__all__ = [
    "ActivationFn",
    "ActivationSpec",
    "BoundNotApplicableError",
    "CompositionalKernel",
    "ConvergenceError",
    "DegenerateActivationError",
    "KernelMatrix",
    "NotPositiveDefiniteError",
    "Pgf",
    "SphereDataset",
    "branching",
    "duality",
    "features",
    "hermite",
    "kernel",
    "memorization",
    "rng",
    "spectral",
    "sphere",
]
