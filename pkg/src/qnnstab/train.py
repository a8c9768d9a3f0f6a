"""Single-example SGD on a QNN, risk evaluation and gradient variance."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .circuit import Circuit, check_features, forward_batch
from .exceptions import ConfigurationError, ContractError
from .grad import loss_grad, per_example_loss_grads
from .loss import LossSpec, loss_value
from .qcore import Observable, default_observable


@dataclass(frozen=True)
class StepSchedule:
    """``constant``: ``eta_t = value``; ``inverse_decay``: ``eta_t = value / (t + 1)``."""

    kind: str
    value: float

    def __post_init__(self):
        if self.kind not in ("constant", "inverse_decay"):
            raise ConfigurationError(f"unknown schedule {self.kind!r}")
        if not self.value > 0:
            raise ConfigurationError("step size parameter must be positive")

    @classmethod
    def constant(cls, eta):
        return cls("constant", float(eta))

    @classmethod
    def inverse_decay(cls, c):
        return cls("inverse_decay", float(c))

    def rate(self, t: int) -> float:
        return self.value if self.kind == "constant" else self.value / (t + 1)

    def rates(self, T: int) -> np.ndarray:
        t = np.arange(T, dtype=float)
        if self.kind == "constant":
            return np.full(T, self.value)
        return self.value / (t + 1.0)


class SamplingScheme(enum.Enum):
    UNIFORM = "uniform"
    PERMUTATION = "permutation"


@dataclass(frozen=True, eq=False)
class Dataset:
    """Angle-encoded features ``X`` (``(m, d)``, entries in ``[0, pi]``) and labels in ``{-1, +1}``."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.array(np.atleast_2d(self.X), dtype=float)
        y = np.array(self.y, dtype=float).reshape(-1)
        if X.shape[0] < 1 or X.shape[0] != y.size:
            raise ContractError(f"dataset needs m >= 1 matching rows, got X {X.shape} and y {y.shape}")
        check_features(X)
        if not np.all(np.abs(y) == 1):
            raise ContractError("labels must be -1 or +1")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def m(self) -> int:
        return self.y.size

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def __len__(self):
        return self.m

    def example(self, i):
        return self.X[i], self.y[i]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx])

    def replace(self, i: int, x, y) -> "Dataset":
        """Copy with example ``i`` swapped for ``(x, y)``."""
        if not 0 <= i < self.m:
            raise ContractError(f"index {i} out of range for m={self.m}")
        X = self.X.copy()
        Y = self.y.copy()
        X[i] = x
        Y[i] = y
        return Dataset(X, Y)

    @staticmethod
    def concat(*parts: "Dataset") -> "Dataset":
        return Dataset(np.concatenate([p.X for p in parts]), np.concatenate([p.y for p in parts]))


@dataclass(eq=False)
class TrainRecord:
    """Trajectory of one SGD run.

    ``thetas`` has ``T + 1`` rows; ``risk_trace[t]`` is the empirical risk at
    ``thetas[t]``; ``grad_norm_trace[t]`` (when recorded) is the full-batch
    gradient norm at ``thetas[t]`` for ``t < T``.
    """

    thetas: np.ndarray
    indices: np.ndarray
    step_sizes: np.ndarray
    risk_trace: Optional[np.ndarray]
    grad_norm_trace: Optional[np.ndarray]
    seed: int

    @property
    def T(self) -> int:
        return len(self.indices)

    @property
    def theta(self) -> np.ndarray:
        return self.thetas[-1]


def make_rng(seed, *keys) -> np.random.Generator:
    """Independent PCG64 stream for ``(seed, *keys)``; keys are non-negative ints."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))))


def init_theta(K: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform on ``[-pi, pi)`` per coordinate."""
    return rng.uniform(-np.pi, np.pi, size=K)


def sample_indices(m: int, T: int, sampling, rng: np.random.Generator) -> np.ndarray:
    sampling = SamplingScheme(sampling)
    if sampling is SamplingScheme.UNIFORM:
        return rng.integers(0, m, size=T)
    epochs = -(-T // m) if T else 0
    return np.concatenate([rng.permutation(m) for _ in range(epochs)] or [np.empty(0, int)])[:T]


def sgd_train(
    circuit: Circuit,
    theta0,
    data: Dataset,
    schedule: StepSchedule,
    sampling,
    T: int,
    p: float,
    spec: LossSpec,
    seed: int,
    record_grad_norms: bool = False,
    obs: Observable = None,
    indices=None,
    record_risk: bool = True,
) -> TrainRecord:
    """Run ``theta_{t+1} = theta_t - eta_t * grad loss(theta_t; z_{i_t})`` for ``T`` steps.

    The example indices come from ``make_rng(seed)`` unless ``indices`` is
    given, so two runs with the same seed and ``m`` visit the same positions.
    """
    if T < 0:
        raise ConfigurationError("T must be non-negative")
    obs = obs or default_observable(circuit.n_qubits)
    theta = np.array(theta0, dtype=float).reshape(-1)
    if theta.size != circuit.K:
        raise ContractError(f"theta0 has length {theta.size}, circuit expects K={circuit.K}")
    if indices is None:
        indices = sample_indices(data.m, T, sampling, make_rng(seed))
    indices = np.asarray(indices, dtype=np.int64)
    if indices.shape != (T,):
        raise ContractError(f"need {T} indices, got {indices.shape}")
    etas = schedule.rates(T)
    thetas = np.empty((T + 1, circuit.K))
    thetas[0] = theta
    grad_norms = np.empty(T) if record_grad_norms else None
    for t in range(T):
        if record_grad_norms:
            _, g = per_example_loss_grads(circuit, theta, data.X, data.y, obs, p, spec)
            grad_norms[t] = np.linalg.norm(g.mean(axis=0))
        x, y = data.example(indices[t])
        theta = theta - etas[t] * loss_grad(circuit, theta, (x, y), obs, p, spec)
        thetas[t + 1] = theta
    risks = None
    if record_risk:
        risks = np.array([empirical_risk(circuit, th, data, obs, p, spec) for th in thetas])
    return TrainRecord(thetas, indices, etas, risks, grad_norms, int(seed))


def _outputs(circuit, theta, data, obs, p):
    if data.m < 1:
        raise ContractError("empty dataset")
    obs = obs or default_observable(circuit.n_qubits)
    return forward_batch(circuit, np.asarray(theta, float)[None], data.X, obs, p)


def empirical_risk(circuit, theta, data: Dataset, obs=None, p=0.0, spec: LossSpec = None) -> float:
    """Mean loss over ``data``."""
    return float(np.mean(loss_value(_outputs(circuit, theta, data, obs, p), data.y, spec)))


def predict_sign(f):
    """``sign(f)`` with ``f == 0`` mapped to ``+1``."""
    return np.where(np.asarray(f) >= 0, 1.0, -1.0)


def zero_one_error(circuit, theta, data: Dataset, obs=None, p=0.0) -> float:
    return float(np.mean(predict_sign(_outputs(circuit, theta, data, obs, p)) != data.y))


def gradient_variance(circuit, theta, data: Dataset, obs=None, p=0.0, spec: LossSpec = None) -> float:
    """``(1/m) sum_i ||grad l(theta; z_i) - grad R_S(theta)||^2``."""
    obs = obs or default_observable(circuit.n_qubits)
    _, g = per_example_loss_grads(circuit, theta, data.X, data.y, obs, p, spec)
    return float(np.mean(np.sum((g - g.mean(axis=0)) ** 2, axis=1)))


def full_gradient(circuit, theta, data: Dataset, obs=None, p=0.0, spec: LossSpec = None) -> np.ndarray:
    obs = obs or default_observable(circuit.n_qubits)
    return per_example_loss_grads(circuit, theta, data.X, data.y, obs, p, spec)[1].mean(axis=0)
