import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracle
from qnnstab.circuit import Circuit, build_hea
from qnnstab.exceptions import ConfigurationError, ContractError
from qnnstab.qcore import (
    DensityMatrix,
    GateSpec,
    Observable,
    Statevector,
    apply_gate,
    default_observable,
    depolarize,
    evolve,
    evolve_noisy,
    expectation,
    zero_state,
)


def random_state(rng, n):
    v = rng.standard_normal(2**n) + 1j * rng.standard_normal(2**n)
    return Statevector(v / np.linalg.norm(v))


def random_circuit(rng, n, n_gates):
    gates, k = [], 0
    for _ in range(n_gates):
        if n > 1 and rng.random() < 0.3:
            c, t = rng.choice(n, 2, replace=False)
            gates.append(GateSpec("CNOT", int(t), control=int(c)))
        else:
            gates.append(GateSpec(str(rng.choice(["RX", "RY", "RZ"])), int(rng.integers(n)), param_index=k))
            k += 1
    return Circuit(n, gates)


class TestZeroState:
    @pytest.mark.parametrize("n, expected", [(1, [1, 0]), (2, [1, 0, 0, 0])])
    def test_small(self, n, expected):
        np.testing.assert_array_equal(zero_state(n).amplitudes, expected)

    @pytest.mark.parametrize("n", [0, 13])
    def test_out_of_range(self, n):
        with pytest.raises(ConfigurationError):
            zero_state(n)


class TestStateTypes:
    def test_rejects_unnormalized(self):
        with pytest.raises(ContractError):
            Statevector(np.array([1.0, 1.0]))

    def test_rejects_bad_length(self):
        with pytest.raises(ContractError):
            Statevector(np.ones(3) / np.sqrt(3))

    def test_amplitudes_read_only(self):
        s = zero_state(1)
        with pytest.raises(ValueError):
            s.amplitudes[0] = 0

    def test_density_validation(self):
        with pytest.raises(ContractError):
            DensityMatrix(np.array([[1, 1], [0, 0]]))
        with pytest.raises(ContractError):
            DensityMatrix(np.eye(2))
        assert DensityMatrix(np.eye(2) / 2).is_valid()

    def test_gate_spec_validation(self):
        with pytest.raises(ConfigurationError):
            GateSpec("CNOT", 0, control=0)
        with pytest.raises(ConfigurationError):
            GateSpec("RY", 0)
        with pytest.raises(ConfigurationError):
            GateSpec("RY", 0, param_index=0, fixed_angle=1.0)
        with pytest.raises(ConfigurationError):
            GateSpec("RX", 1, control=0, param_index=0)
        with pytest.raises(ConfigurationError):
            GateSpec("FIXED", 0, matrix=np.ones((2, 2)))


class TestApplyGate:
    def test_ry_pi_flips(self):
        out = apply_gate(zero_state(1), GateSpec("RY", 0, param_index=0), np.pi)
        np.testing.assert_allclose(out.amplitudes, [0, 1], atol=1e-15)

    def test_cnot_truth_table(self):
        ten = Statevector(np.eye(4)[2])
        out = apply_gate(ten, GateSpec("CNOT", 1, control=0))
        np.testing.assert_array_equal(out.amplitudes, np.eye(4)[3])

    def test_rz_zero_is_identity(self, rng):
        s = random_state(rng, 3)
        out = apply_gate(s, GateSpec("RZ", 1, param_index=0), 0.0)
        np.testing.assert_allclose(out.amplitudes, s.amplitudes, atol=1e-15)

    def test_fixed_angle_and_matrix(self, rng):
        s = random_state(rng, 2)
        out = apply_gate(s, GateSpec("RX", 1, fixed_angle=0.7))
        np.testing.assert_allclose(out.amplitudes, oracle.embed(oracle.rotation("X", 0.7), 1, 2) @ s.amplitudes, atol=1e-13)
        h = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
        out = apply_gate(s, GateSpec("FIXED", 0, matrix=h))
        np.testing.assert_allclose(out.amplitudes, oracle.embed(h, 0, 2) @ s.amplitudes, atol=1e-13)

    def test_angle_contract(self):
        with pytest.raises(ContractError):
            apply_gate(zero_state(1), GateSpec("RY", 0, param_index=0))
        with pytest.raises(ContractError):
            apply_gate(zero_state(1), GateSpec("RY", 0, fixed_angle=1.0), 0.3)

    def test_bad_index(self):
        with pytest.raises(ConfigurationError):
            apply_gate(zero_state(1), GateSpec("RY", 2, param_index=0), 0.1)

    @given(st.integers(1, 4), st.sampled_from(["RX", "RY", "RZ"]), st.floats(-10, 10), st.integers(0, 2**32 - 1))
    def test_matches_kron_oracle_and_preserves_norm(self, n, kind, angle, seed):
        rng = np.random.default_rng(seed)
        s = random_state(rng, n)
        target = int(rng.integers(n))
        out = apply_gate(s, GateSpec(kind, target, param_index=0), angle)
        expected = oracle.embed(oracle.rotation(kind[1], angle), target, n) @ s.amplitudes
        np.testing.assert_allclose(out.amplitudes, expected, atol=1e-12)
        assert abs(np.linalg.norm(out.amplitudes) - 1) < 1e-12


class TestObservable:
    def test_pauli_norm_and_trace(self):
        o = Observable.pauli("X", 1, 3, coefficient=-0.5)
        assert o.spectral_norm == 0.5
        assert o.trace == 0.0
        assert Observable([(2.0, "II")]).trace == 8.0

    def test_norm_matches_dense(self, rng):
        o = Observable([(0.3, "XZ"), (-0.7, "YY"), (0.2, "IZ")])
        dense = np.max(np.abs(np.linalg.eigvalsh(oracle.observable(o.terms, 2))))
        assert o.spectral_norm == pytest.approx(dense, rel=1e-12)
        assert o.spectral_norm <= sum(abs(c) for c, _ in o.terms)

    def test_diagonal_norm(self):
        o = Observable([(1.0, "ZI"), (1.0, "IZ")])
        assert o.spectral_norm == pytest.approx(2.0)

    def test_rejects_bad_string(self):
        with pytest.raises(ConfigurationError):
            Observable([(1.0, "ZQ")])


class TestExpectation:
    def test_z_on_zero(self):
        assert expectation(zero_state(1), default_observable(1)) == 1.0

    def test_maximally_mixed(self):
        assert expectation(DensityMatrix(np.eye(4) / 4), Observable([(1.0, "XY")])) == pytest.approx(0.0, abs=1e-15)

    def test_plus_state(self):
        plus = Statevector(np.array([1, 1]) / np.sqrt(2))
        assert expectation(plus, default_observable(1)) == pytest.approx(0.0, abs=1e-15)

    def test_qubit_mismatch(self):
        with pytest.raises(ContractError):
            expectation(zero_state(2), default_observable(1))

    def test_pure_equals_density(self, rng):
        o = Observable([(0.4, "XYZ"), (1.1, "ZZI")])
        for _ in range(10):
            s = random_state(rng, 3)
            assert expectation(s, o) == pytest.approx(expectation(s.to_density(), o), abs=1e-12)
            assert abs(expectation(s, o)) <= o.spectral_norm + 1e-12


class TestDepolarize:
    def test_identity_channel(self, rng):
        rho = random_state(rng, 2).to_density()
        np.testing.assert_allclose(depolarize(rho, 0.0).entries, rho.entries)

    def test_full_depolarization(self, rng):
        rho = random_state(rng, 2).to_density()
        np.testing.assert_allclose(depolarize(rho, 1.0).entries, np.eye(4) / 4, atol=1e-15)

    def test_fixed_point(self):
        mixed = DensityMatrix(np.eye(8) / 8)
        np.testing.assert_allclose(depolarize(mixed, 0.37).entries, mixed.entries, atol=1e-16)

    @pytest.mark.parametrize("p", [-0.1, 1.5])
    def test_range(self, p):
        with pytest.raises(ConfigurationError):
            depolarize(DensityMatrix(np.eye(2) / 2), p)


class TestEvolve:
    def test_empty_circuit(self, rng):
        s = random_state(rng, 2)
        np.testing.assert_array_equal(evolve(s, Circuit(2, []), []).amplitudes, s.amplitudes)

    def test_ry_zero(self):
        c = Circuit(1, [GateSpec("RY", 0, param_index=0)])
        np.testing.assert_allclose(evolve(zero_state(1), c, [0.0]).amplitudes, [1, 0])

    def test_bell_like(self):
        c = Circuit(2, [GateSpec("RY", 0, param_index=0), GateSpec("CNOT", 1, control=0)])
        np.testing.assert_allclose(evolve(zero_state(2), c, [np.pi]).amplitudes, [0, 0, 0, 1], atol=1e-15)

    def test_length_mismatch(self):
        with pytest.raises(ContractError):
            evolve(zero_state(4), build_hea(4, 1), np.zeros(3))

    def test_matches_oracle(self, rng):
        for n in (1, 2, 3, 4):
            c = random_circuit(rng, n, 8)
            theta = rng.uniform(-np.pi, np.pi, c.K)
            s = random_state(rng, n)
            np.testing.assert_allclose(evolve(s, c, theta).amplitudes, oracle.unitary(c, theta) @ s.amplitudes, atol=1e-12)


class TestEvolveNoisy:
    def test_zero_noise_is_pure(self, rng):
        c = random_circuit(rng, 3, 6)
        theta = rng.uniform(-np.pi, np.pi, c.K)
        s = random_state(rng, 3)
        out = evolve_noisy(s.to_density(), c, theta, 0.0)
        np.testing.assert_allclose(out.entries, evolve(s, c, theta).to_density().entries, atol=1e-12)

    def test_full_noise_one_gate(self, rng):
        c = Circuit(2, [GateSpec("RY", 0, param_index=0)])
        out = evolve_noisy(random_state(rng, 2).to_density(), c, [0.3], 1.0)
        np.testing.assert_allclose(out.entries, np.eye(4) / 4, atol=1e-15)

    def test_composition_example(self, rng):
        # three gates at p = 0.1 compose to one channel with p~ = 1 - 0.9**3 = 0.271
        c = Circuit(2, [GateSpec("RY", 0, param_index=0), GateSpec("CNOT", 1, control=0), GateSpec("RX", 1, param_index=1)])
        theta = rng.uniform(-np.pi, np.pi, 2)
        rho = random_state(rng, 2).to_density()
        u = oracle.unitary(c, theta)
        closed = 0.729 * u @ rho.entries @ u.conj().T + 0.271 * np.eye(4) / 4
        np.testing.assert_allclose(evolve_noisy(rho, c, theta, 0.1).entries, closed, atol=1e-10)

    @given(st.integers(1, 4), st.integers(1, 12), st.sampled_from([0.01, 0.1, 0.3]), st.integers(0, 2**32 - 1))
    def test_per_gate_equals_closed_form(self, n, n_gates, p, seed):
        rng = np.random.default_rng(seed)
        c = random_circuit(rng, n, n_gates)
        theta = rng.uniform(-np.pi, np.pi, c.K)
        rho = random_state(rng, n).to_density()
        out = evolve_noisy(rho, c, theta, p)
        pt = 1 - (1 - p) ** c.K_g
        u = oracle.unitary(c, theta)
        closed = (1 - pt) * u @ rho.entries @ u.conj().T + pt * np.eye(2**n) / 2**n
        np.testing.assert_allclose(out.entries, closed, atol=1e-10)
        assert out.is_valid()
