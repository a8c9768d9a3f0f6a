"""Dense statevector / density-matrix kernels.

Qubit 0 is the most significant bit of a basis index, so ``|q0 q1 ... >``
maps to ``q0 * 2**(n-1) + q1 * 2**(n-2) + ...``.

The public operations act on single :class:`Statevector` /
:class:`DensityMatrix` values. The ``*_batch`` helpers underneath work on raw
arrays with a leading batch axis and are what the circuit, gradient and
training modules call in their inner loops.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigsh

from .exceptions import ConfigurationError, ContractError

MAX_STATEVECTOR_QUBITS = 12
MAX_DENSITY_QUBITS = 8
NORM_TOL = 1e-10

I2 = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = {"I": I2, "X": PAULI_X, "Y": PAULI_Y, "Z": PAULI_Z}

ROTATION_KINDS = ("RX", "RY", "RZ")
GATE_KINDS = ROTATION_KINDS + ("CNOT", "FIXED")


def _frozen(a):
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


def _check_qubits(n_qubits, cap):
    if not isinstance(n_qubits, (int, np.integer)) or not 1 <= n_qubits <= cap:
        raise ConfigurationError(f"n_qubits must be an integer in [1, {cap}], got {n_qubits!r}")


def _qubits_from_dim(dim):
    n = int(dim).bit_length() - 1
    if dim < 2 or 1 << n != dim:
        raise ContractError(f"dimension {dim} is not a power of two >= 2")
    return n


@dataclass(frozen=True, eq=False)
class Statevector:
    """Unit-norm pure state of ``n_qubits`` qubits."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = _frozen(self.amplitudes).reshape(-1)
        object.__setattr__(self, "amplitudes", amps)
        _check_qubits(_qubits_from_dim(amps.size), MAX_STATEVECTOR_QUBITS)
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_TOL:
            raise ContractError(f"statevector norm is {norm}, expected 1")

    @property
    def n_qubits(self) -> int:
        return _qubits_from_dim(self.amplitudes.size)

    def to_density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, trace-one, positive semi-definite state."""

    entries: np.ndarray

    def __post_init__(self):
        rho = _frozen(self.entries)
        object.__setattr__(self, "entries", rho)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ContractError(f"density matrix must be square, got shape {rho.shape}")
        _check_qubits(_qubits_from_dim(rho.shape[0]), MAX_DENSITY_QUBITS)
        if np.max(np.abs(rho - rho.conj().T)) > NORM_TOL:
            raise ContractError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1.0) > NORM_TOL:
            raise ContractError(f"density matrix trace is {np.trace(rho).real}, expected 1")

    @property
    def n_qubits(self) -> int:
        return _qubits_from_dim(self.entries.shape[0])

    def is_valid(self, tol=1e-9) -> bool:
        rho = self.entries
        hermitian = np.max(np.abs(rho - rho.conj().T)) <= NORM_TOL
        unit_trace = abs(np.trace(rho) - 1.0) <= NORM_TOL
        psd = np.linalg.eigvalsh((rho + rho.conj().T) / 2).min() >= -tol
        return bool(hermitian and unit_trace and psd)


@dataclass(frozen=True, eq=False)
class GateSpec:
    """One gate of a circuit.

    Rotation gates (``RX``, ``RY``, ``RZ``) are ``exp(-i angle P / 2)`` and are
    trainable iff ``param_index`` is set; otherwise ``fixed_angle`` is used.
    ``FIXED`` carries an arbitrary 2x2 unitary in ``matrix``.
    """

    kind: str
    target: int
    control: Optional[int] = None
    param_index: Optional[int] = None
    fixed_angle: Optional[float] = None
    matrix: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ConfigurationError(f"unknown gate kind {self.kind!r}")
        if self.target < 0:
            raise ConfigurationError("gate target must be non-negative")
        if self.kind == "CNOT":
            if self.control is None or self.control == self.target or self.control < 0:
                raise ConfigurationError("CNOT needs a control distinct from its target")
            if self.param_index is not None or self.fixed_angle is not None:
                raise ConfigurationError("CNOT takes no angle")
            return
        if self.control is not None:
            raise ConfigurationError(f"{self.kind} takes no control qubit")
        if self.kind == "FIXED":
            if self.matrix is None:
                raise ConfigurationError("FIXED gate needs a 2x2 unitary matrix")
            u = _frozen(self.matrix)
            if u.shape != (2, 2) or np.max(np.abs(u @ u.conj().T - I2)) > NORM_TOL:
                raise ConfigurationError("FIXED gate matrix must be a 2x2 unitary")
            object.__setattr__(self, "matrix", u)
            if self.param_index is not None or self.fixed_angle is not None:
                raise ConfigurationError("FIXED gate takes no angle")
            return
        if (self.param_index is None) == (self.fixed_angle is None):
            raise ConfigurationError("rotation needs exactly one of param_index / fixed_angle")
        if self.param_index is not None and self.param_index < 0:
            raise ConfigurationError("param_index must be non-negative")

    @property
    def trainable(self) -> bool:
        return self.param_index is not None

    @property
    def qubits(self) -> Tuple[int, ...]:
        return (self.target,) if self.control is None else (self.control, self.target)


def rotation_matrices(kind, angles):
    """``exp(-i angle P / 2)`` for an array of angles, shape ``angles.shape + (2, 2)``."""
    angles = np.asarray(angles, dtype=float)
    c = np.cos(angles / 2)
    s = np.sin(angles / 2)
    out = np.zeros(angles.shape + (2, 2), dtype=complex)
    if kind == "RX":
        out[..., 0, 0] = c
        out[..., 1, 1] = c
        out[..., 0, 1] = -1j * s
        out[..., 1, 0] = -1j * s
    elif kind == "RY":
        out[..., 0, 0] = c
        out[..., 1, 1] = c
        out[..., 0, 1] = -s
        out[..., 1, 0] = s
    elif kind == "RZ":
        out[..., 0, 0] = np.exp(-0.5j * angles)
        out[..., 1, 1] = np.exp(0.5j * angles)
    else:
        raise ConfigurationError(f"{kind} is not a rotation")
    return out


def gate_matrix(gate: GateSpec, angle=None):
    """The 2x2 (or 4x4 for CNOT, control first) matrix of ``gate``."""
    if gate.kind == "CNOT":
        m = np.eye(4, dtype=complex)
        m[2:, 2:] = PAULI_X
        return m
    if gate.kind == "FIXED":
        return np.array(gate.matrix)
    return rotation_matrices(gate.kind, gate.fixed_angle if angle is None else angle)


# ---------------------------------------------------------------- batch kernels


def apply_1q_batch(batch, mats, target, n_qubits):
    """Apply a single-qubit matrix to axis 1 of ``batch`` (shape ``(B, 2**n, ...)``).

    ``mats`` is either one ``(2, 2)`` matrix or a ``(B, 2, 2)`` stack.
    """
    b = batch.shape[0]
    view = batch.reshape(b, 1 << target, 2, -1)
    if mats.ndim == 2:
        out = np.einsum("ij,pajc->paic", mats, view)
    else:
        out = np.einsum("pij,pajc->paic", mats, view)
    return out.reshape(batch.shape)


_CNOT_PERM = {}


def _cnot_permutation(control, target, n_qubits):
    key = (control, target, n_qubits)
    perm = _CNOT_PERM.get(key)
    if perm is None:
        idx = np.arange(1 << n_qubits)
        cbit = 1 << (n_qubits - 1 - control)
        tbit = 1 << (n_qubits - 1 - target)
        perm = np.where(idx & cbit, idx ^ tbit, idx)
        _CNOT_PERM[key] = perm
    return perm


def apply_cnot_batch(batch, control, target, n_qubits):
    return batch[:, _cnot_permutation(control, target, n_qubits)]


def _gate_mats(gate, thetas):
    if gate.kind == "FIXED":
        return gate.matrix
    if gate.trainable:
        return rotation_matrices(gate.kind, thetas[:, gate.param_index])
    return rotation_matrices(gate.kind, gate.fixed_angle)


def apply_gate_batch(batch, gate, thetas, n_qubits, density=False):
    """Apply ``gate`` to every member of a batch of states.

    ``thetas`` has shape ``(B, K)`` and supplies the angle of trainable gates.
    For density matrices (``(B, D, D)``) the gate acts as ``U rho U^dagger``.
    """
    if gate.kind == "CNOT":
        out = apply_cnot_batch(batch, gate.control, gate.target, n_qubits)
        if density:
            out = out[:, :, _cnot_permutation(gate.control, gate.target, n_qubits)]
        return out
    mats = _gate_mats(gate, thetas)
    out = apply_1q_batch(batch, mats, gate.target, n_qubits)
    if density:
        # (U (U rho)^dagger)^dagger = U rho U^dagger
        out = apply_1q_batch(np.conj(out.transpose(0, 2, 1)), mats, gate.target, n_qubits)
        out = np.conj(out.transpose(0, 2, 1))
    return out


def depolarize_batch(batch, p):
    dim = batch.shape[-1]
    out = (1.0 - p) * batch
    if p:
        out[:, np.arange(dim), np.arange(dim)] += p / dim
    return out


def run_gates_batch(batch, gates, thetas, n_qubits, p=None):
    """Run a gate list over a batch.

    ``p=None`` treats ``batch`` as statevectors; otherwise it holds density
    matrices and the depolarizing channel of strength ``p`` follows every gate.
    """
    density = p is not None
    for gate in gates:
        batch = apply_gate_batch(batch, gate, thetas, n_qubits, density=density)
        if density:
            batch = depolarize_batch(batch, p)
    return batch


# ------------------------------------------------------------------ observables


@dataclass(frozen=True, eq=False)
class Observable:
    """Real linear combination of Pauli strings.

    Each term is ``(coefficient, "XIZ...")`` with one letter per qubit.
    """

    terms: Tuple[Tuple[float, str], ...]

    def __post_init__(self):
        terms = tuple((float(c), str(s).upper()) for c, s in self.terms)
        if not terms:
            raise ConfigurationError("observable needs at least one term")
        n = len(terms[0][1])
        for _, s in terms:
            if len(s) != n or set(s) - set("IXYZ"):
                raise ConfigurationError(f"bad Pauli string {s!r}")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def pauli(cls, letter="Z", qubit=0, n_qubits=1, coefficient=1.0):
        chars = ["I"] * n_qubits
        chars[qubit] = letter
        return cls(((coefficient, "".join(chars)),))

    @property
    def n_qubits(self) -> int:
        return len(self.terms[0][1])

    @cached_property
    def trace(self) -> float:
        return float(sum(c for c, s in self.terms if set(s) == {"I"}) * 2 ** self.n_qubits)

    @cached_property
    def spectral_norm(self) -> float:
        if len(self.terms) == 1:
            return abs(self.terms[0][0])
        n = self.n_qubits
        if all(set(s) <= {"I", "Z"} for _, s in self.terms):
            return float(np.max(np.abs(self._diagonal())))
        if n <= 10:
            return float(np.max(np.abs(np.linalg.eigvalsh(self.to_matrix()))))
        dim = 1 << n
        op = LinearOperator((dim, dim), matvec=lambda v: self.apply(v[None, :])[0], dtype=complex)
        return float(abs(eigsh(op, k=1, which="LM", return_eigenvectors=False)[0]))

    def _diagonal(self):
        n = self.n_qubits
        idx = np.arange(1 << n)
        diag = np.zeros(1 << n)
        for c, s in self.terms:
            sign = np.ones(1 << n)
            for q, ch in enumerate(s):
                if ch == "Z":
                    sign *= 1 - 2 * ((idx >> (n - 1 - q)) & 1)
            diag += c * sign
        return diag

    @cached_property
    def _is_diagonal(self):
        return all(set(s) <= {"I", "Z"} for _, s in self.terms)

    def apply(self, batch):
        """``O`` applied along axis 1 of a batch."""
        n = self.n_qubits
        out = np.zeros_like(batch, dtype=complex)
        for c, s in self.terms:
            term = batch
            for q, ch in enumerate(s):
                if ch != "I":
                    term = apply_1q_batch(term, PAULIS[ch], q, n)
            out = out + c * term
        return out

    def to_matrix(self):
        mat = np.zeros((1 << self.n_qubits,) * 2, dtype=complex)
        for c, s in self.terms:
            m = np.ones((1, 1), dtype=complex)
            for ch in s:
                m = np.kron(m, PAULIS[ch])
            mat += c * m
        return mat


def default_observable(n_qubits):
    """Pauli Z on qubit 0: unit spectral norm, traceless."""
    return Observable.pauli("Z", 0, n_qubits)


def expectation_batch(batch, obs, density=False):
    """Real expectation values for a batch of statevectors or density matrices."""
    if obs._is_diagonal:
        diag = obs._diagonal()
        if density:
            return np.einsum("i,bii->b", diag, batch).real
        return np.einsum("i,bi->b", diag, np.abs(batch) ** 2)
    if density:
        return np.einsum("bii->b", obs.apply(batch)).real
    return np.einsum("bi,bi->b", batch.conj(), obs.apply(batch)).real


# ------------------------------------------------------------ public operations


def zero_state(n_qubits: int) -> Statevector:
    """``|0...0>`` on ``n_qubits`` qubits."""
    _check_qubits(n_qubits, MAX_STATEVECTOR_QUBITS)
    amps = np.zeros(1 << n_qubits, dtype=complex)
    amps[0] = 1.0
    return Statevector(amps)


def _check_gate_fits(gate, n_qubits):
    if max(gate.qubits) >= n_qubits:
        raise ConfigurationError(f"gate on qubits {gate.qubits} does not fit {n_qubits} qubits")


def apply_gate(state: Statevector, gate: GateSpec, angle: Optional[float] = None) -> Statevector:
    """Return ``U_gate |state>``; ``angle`` is required iff the gate is trainable."""
    _check_gate_fits(gate, state.n_qubits)
    if gate.trainable != (angle is not None):
        raise ContractError("angle must be supplied exactly when the gate is trainable")
    thetas = None
    if gate.trainable:
        thetas = np.zeros((1, gate.param_index + 1))
        thetas[0, gate.param_index] = angle
    out = apply_gate_batch(state.amplitudes[None, :].copy(), gate, thetas, state.n_qubits)
    return Statevector(out[0])


def expectation(state, obs: Observable) -> float:
    """``<psi|O|psi>`` or ``Tr(O rho)``."""
    if state.n_qubits != obs.n_qubits:
        raise ContractError(f"state has {state.n_qubits} qubits, observable {obs.n_qubits}")
    if isinstance(state, DensityMatrix):
        return float(expectation_batch(state.entries[None], obs, density=True)[0])
    return float(expectation_batch(state.amplitudes[None], obs)[0])


def depolarize(rho: DensityMatrix, p: float) -> DensityMatrix:
    """``(1 - p) rho + p I / 2**n``."""
    check_noise(p)
    return DensityMatrix(depolarize_batch(rho.entries[None].copy(), p)[0])


def check_noise(p):
    if not 0.0 <= p <= 1.0:
        raise ConfigurationError(f"noise level must lie in [0, 1], got {p}")


def _theta_batch(circuit, theta):
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.size != circuit.K:
        raise ContractError(f"theta has length {theta.size}, circuit expects K={circuit.K}")
    return theta[None, :]


def evolve(state: Statevector, circuit, theta: Sequence[float]) -> Statevector:
    """Apply every gate of ``circuit`` to a pure state."""
    thetas = _theta_batch(circuit, theta)
    if state.n_qubits != circuit.n_qubits:
        raise ContractError("state and circuit qubit counts differ")
    out = run_gates_batch(state.amplitudes[None].copy(), circuit.gates, thetas, circuit.n_qubits)
    return Statevector(out[0])


def evolve_noisy(rho: DensityMatrix, circuit, theta: Sequence[float], p: float) -> DensityMatrix:
    """Apply each gate as ``U rho U^dagger`` followed by a depolarizing channel."""
    check_noise(p)
    thetas = _theta_batch(circuit, theta)
    if rho.n_qubits != circuit.n_qubits:
        raise ContractError("state and circuit qubit counts differ")
    out = run_gates_batch(rho.entries[None].copy(), circuit.gates, thetas, circuit.n_qubits, p=p)
    return DensityMatrix(out[0])
