"""Quantum neural network simulation with SGD stability and generalization bounds."""

__version__ = "0.1.0"

from .bounds import (  # noqa: E402
    BoundQuery,
    gen_bound,
    init_link,
    kappa,
    noisy_gen_bound,
    noisy_stability,
    onavg_bound,
    stability_const,
    stability_decay,
    stability_general,
)
from .circuit import Circuit, assemble_unitary, build_hea, encode, qnn_forward, spectral_distance  # noqa: E402
from .estimators import PooledAngleEncoder, QNNClassifier  # noqa: E402
from .exceptions import (  # noqa: E402
    BoundOverflowWarning,
    ConfigurationError,
    ContractError,
    IngestionError,
    QNNStabError,
)
from .grad import finite_diff_grad, loss_grad, param_shift_grad  # noqa: E402
from .loss import LossSpec, loss_deriv, loss_value, squared_error  # noqa: E402
from .qcore import (  # noqa: E402
    DensityMatrix,
    GateSpec,
    Observable,
    Statevector,
    apply_gate,
    depolarize,
    evolve,
    evolve_noisy,
    expectation,
    zero_state,
)
from .train import Dataset, SamplingScheme, StepSchedule, TrainRecord, empirical_risk, sgd_train  # noqa: E402
