"""Unitary sparsifying transform learning by alternating minimization.

Submodules:

* :mod:`utlearn.linops` - SVD, spectral norm, condition number
* :mod:`utlearn.genmodel` - seeded ground-truth models and initializations
* :mod:`utlearn.learner` - the alternating scheme and its trace
* :mod:`utlearn.analysis` - contraction factors, radii, alignment, rates
* :mod:`utlearn.fileio` - binary matrix files and CSV reports
* :mod:`utlearn.experiments` - experiment drivers behind the ``utlearn`` CLI
"""
__version__ = "0.1.0"

from .errors import MatrixFormatError, NumericalError  # noqa: E402
from .genmodel import (  # noqa: E402
    EpsilonBall,
    GenerativeModel,
    epsilon_for_support_recovery,
    generate_model,
    make_init,
    parse_init,
)
from .learner import LearnRecord, LearnResult, StopReason, learn  # noqa: E402
from .analysis import (  # noqa: E402
    align,
    convergence_radius,
    empirical_rate,
    spectral_report,
    support_recovery,
)
from .fileio import read_matrix, write_matrix  # noqa: E402

__all__ = [
    "__version__",
    "MatrixFormatError",
    "NumericalError",
    "EpsilonBall",
    "GenerativeModel",
    "epsilon_for_support_recovery",
    "generate_model",
    "make_init",
    "parse_init",
    "LearnRecord",
    "LearnResult",
    "StopReason",
    "learn",
    "align",
    "convergence_radius",
    "empirical_rate",
    "spectral_report",
    "support_recovery",
    "read_matrix",
    "write_matrix",
]
