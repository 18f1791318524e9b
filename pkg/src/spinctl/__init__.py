"""spinctl: optimal control-field histories for a spin under colored noise.

Submodules
----------
quat        quaternion algebra (scalar types + batched array helpers)
magnus      ordered exponentials and their exact rotation-vector resummation
noise       stationary covariance kernels (1/f flagship) and path sampling
evolution   rotating-triad kinematics, control recovery, targets, drift
fidelity    closed-form fidelity for arbitrary spin + Monte Carlo estimator
optimizer   constrained variational solver and lambda_inv continuation
cli         batch front end (JSON configs -> CSV/JSON artifacts)
"""

__version__ = "0.1.0"

from . import cli, evolution, fidelity, magnus, noise, optimizer, quat  # noqa: F401
from .errors import (  # noqa: F401
    AmbiguousAxis,
    AxisRequired,
    BCUnreachable,
    ConfigError,
    DegenerateSample,
    DomainError,
    NoDescent,
    NonConvergence,
    NotPSD,
    SingularCot,
    SpinctlError,
    UnsupportedOrder,
)
