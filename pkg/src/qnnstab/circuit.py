"""Parameterized circuits, angle encoding and the QNN output function."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .exceptions import ConfigurationError, ContractError
from .qcore import (
    MAX_DENSITY_QUBITS,
    MAX_STATEVECTOR_QUBITS,
    GateSpec,
    Observable,
    Statevector,
    check_noise,
    expectation_batch,
    run_gates_batch,
)

MAX_UNITARY_QUBITS = 6


@dataclass(frozen=True, eq=False)
class Circuit:
    """Ordered gate list ``U(theta) = U_Kg ... U_1`` acting on ``n_qubits``.

    Every trainable gate owns exactly one parameter, so ``K`` trainable gates
    use parameter indices ``0 .. K-1``.
    """

    n_qubits: int
    gates: Tuple[GateSpec, ...]

    def __post_init__(self):
        if not 1 <= self.n_qubits <= MAX_STATEVECTOR_QUBITS:
            raise ConfigurationError(f"n_qubits must be in [1, {MAX_STATEVECTOR_QUBITS}]")
        gates = tuple(self.gates)
        object.__setattr__(self, "gates", gates)
        for g in gates:
            if max(g.qubits) >= self.n_qubits:
                raise ConfigurationError(f"gate {g.kind} on {g.qubits} exceeds {self.n_qubits} qubits")
        indices = sorted(g.param_index for g in gates if g.trainable)
        if indices != list(range(len(indices))):
            raise ConfigurationError("trainable gates must use parameter indices 0..K-1 exactly once")

    @property
    def K(self) -> int:
        return sum(g.trainable for g in self.gates)

    @property
    def K_g(self) -> int:
        return len(self.gates)

    def __repr__(self):
        return f"Circuit(n_qubits={self.n_qubits}, K={self.K}, K_g={self.K_g})"


def build_hea(n_qubits: int, layers: int) -> Circuit:
    """Hardware-efficient ansatz.

    Each layer applies trainable ``RY`` then ``RZ`` to every qubit followed by
    a CNOT ladder ``(0->1), (1->2), ...``. ``K = 2 n L`` and
    ``K_g = (3n - 1) L``.
    """
    if n_qubits < 1 or layers < 1:
        raise ConfigurationError("n_qubits and layers must both be >= 1")
    gates = []
    k = 0
    for _ in range(layers):
        for q in range(n_qubits):
            gates.append(GateSpec("RY", q, param_index=k))
            gates.append(GateSpec("RZ", q, param_index=k + 1))
            k += 2
        for q in range(n_qubits - 1):
            gates.append(GateSpec("CNOT", q + 1, control=q))
    return Circuit(n_qubits, tuple(gates))


def check_features(x, n_qubits=None):
    x = np.asarray(x, dtype=float)
    if n_qubits is not None and x.shape[-1] != n_qubits:
        raise ContractError(f"{x.shape[-1]} features given for {n_qubits} qubits")
    if not np.all(np.isfinite(x)) or np.any(x < 0.0) or np.any(x > np.pi):
        raise ContractError("encoded features must lie in [0, pi]")
    return x


def encode_batch(X, n_qubits):
    """Angle-encode rows of ``X``: ``RY(x_j)`` on qubit ``j`` of ``|0...0>``.

    Returns a ``(B, 2**n)`` array. The product state is built directly as a
    Kronecker product of ``(cos(x/2), sin(x/2))`` factors.
    """
    X = check_features(np.atleast_2d(X), n_qubits)
    out = np.ones((X.shape[0], 1), dtype=complex)
    for j in range(n_qubits):
        local = np.stack([np.cos(X[:, j] / 2), np.sin(X[:, j] / 2)], axis=1)
        out = (out[:, :, None] * local[:, None, :]).reshape(X.shape[0], -1)
    return out


def encode(x: Sequence[float], n_qubits: int) -> Statevector:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != n_qubits:
        raise ContractError(f"expected {n_qubits} features, got {x.size}")
    return Statevector(encode_batch(x[None], n_qubits)[0])


def _theta_rows(circuit, thetas):
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    if thetas.shape[1] != circuit.K:
        raise ContractError(f"theta has length {thetas.shape[1]}, circuit expects K={circuit.K}")
    return thetas


def assemble_unitary(circuit: Circuit, theta) -> np.ndarray:
    """Full ``2**n x 2**n`` matrix of ``U(theta)``."""
    n = circuit.n_qubits
    if n > MAX_UNITARY_QUBITS:
        raise ConfigurationError(f"dense unitaries are limited to {MAX_UNITARY_QUBITS} qubits")
    dim = 1 << n
    thetas = np.repeat(_theta_rows(circuit, theta), dim, axis=0)
    # row b of the output is U e_b, i.e. column b of U
    cols = run_gates_batch(np.eye(dim, dtype=complex), circuit.gates, thetas, n)
    return cols.T


def spectral_distance(circuit: Circuit, theta1, theta2) -> float:
    """``||U(theta1) - U(theta2)||`` in the operator 2-norm."""
    diff = assemble_unitary(circuit, theta1) - assemble_unitary(circuit, theta2)
    return float(np.linalg.norm(diff, 2))


def forward_batch(circuit: Circuit, thetas, X, obs: Observable, p: float = 0.0):
    """QNN outputs for paired rows of ``thetas`` (``(B, K)``) and ``X`` (``(B, d)``).

    Either argument may have a single row, in which case it is broadcast.
    """
    check_noise(p)
    n = circuit.n_qubits
    if obs.n_qubits != n:
        raise ContractError(f"observable acts on {obs.n_qubits} qubits, circuit on {n}")
    thetas = _theta_rows(circuit, thetas)
    psi = encode_batch(X, n)
    b = max(thetas.shape[0], psi.shape[0])
    if thetas.shape[0] != b:
        if thetas.shape[0] != 1:
            raise ContractError("theta and input batches differ in length")
        thetas = np.broadcast_to(thetas, (b, circuit.K))
    if psi.shape[0] != b:
        if psi.shape[0] != 1:
            raise ContractError("theta and input batches differ in length")
        psi = np.repeat(psi, b, axis=0)
    if p == 0.0:
        out = run_gates_batch(psi, circuit.gates, thetas, n)
        return expectation_batch(out, obs)
    if n > MAX_DENSITY_QUBITS:
        raise ConfigurationError(f"noisy simulation is limited to {MAX_DENSITY_QUBITS} qubits")
    rho = psi[:, :, None] * psi[:, None, :].conj()
    out = run_gates_batch(rho, circuit.gates, thetas, n, p=p)
    return expectation_batch(out, obs, density=True)


def qnn_forward(circuit: Circuit, theta, x, obs: Observable, p: float = 0.0) -> float:
    """``f_theta(x) = Tr(O U rho(x) U^dagger)``, with per-gate depolarizing noise if ``p > 0``."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != circuit.n_qubits:
        raise ContractError(f"expected {circuit.n_qubits} features, got {x.size}")
    return float(forward_batch(circuit, theta[None], x[None], obs, p)[0])
