"""Maximum-likelihood blind separation of two coupled qubits.

Estimates the coupling parameter of the nonlinear qubit mixing model from
observed probability triples, using the total derivative of the
log-likelihood (which accounts for the phase source drifting with the
coupling), and restores the sources.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    DegenerateData,
    DomainError,
    DomainTooTight,
    EvaluationError,
    InconsistentObservation,
    InfeasibleData,
    InvalidObservation,
    NearSingularPhase,
    NoInteriorMaximum,
    OutOfSupport,
    QubitBSSError,
    ScanError,
    SingularMixture,
)
from .mixing import ObservationVector, SourceVector  # noqa: E402
from .priors import PriorConfig  # noqa: E402
from .likelihood import SampleSet  # noqa: E402
from .estimator import EstimateResult, QubitMixingML, SearchOptions, estimate_v  # noqa: E402
from .datagen import generate, perturb  # noqa: E402
