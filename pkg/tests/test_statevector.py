import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quassim.errors import CapacityError, ShapeError
from quassim.statevector import (
    DiagonalObservable,
    StateVector,
    amplitude_amplify,
    apply_cz,
    apply_diagonal_phase,
    apply_local_rotation,
    apply_mixer,
    basis_state,
    expectation_diagonal,
    grover_reflection,
    init_uniform,
    marked_mask,
    measure,
    oracle_phase_flip,
    probabilities,
    sample_indices,
)

from oracles import grover_success


def random_state(rng, n):
    amps = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return StateVector(n, amps / np.linalg.norm(amps))


class TestInitUniform:
    def test_two_qubits_all_half(self):
        state = init_uniform(2)
        assert np.allclose(state.amplitudes, 0.5)
        assert np.all(state.amplitudes.imag == 0)

    def test_one_qubit(self):
        state = init_uniform(1)
        assert np.allclose(state.amplitudes, 1 / np.sqrt(2))

    def test_ten_qubits_probabilities(self):
        probs = probabilities(init_uniform(10))
        assert np.all(np.abs(probs - 2.0**-10) < 1e-12)

    @pytest.mark.parametrize("n", [0, -1, 25])
    def test_capacity_errors(self, n):
        with pytest.raises(CapacityError):
            init_uniform(n)


class TestDiagonalPhase:
    def test_gamma_zero_is_identity(self, rng):
        state = random_state(rng, 3)
        obs = DiagonalObservable(rng.normal(size=8))
        out = apply_diagonal_phase(state, obs, 0.0)
        assert np.array_equal(out.amplitudes, state.amplitudes)

    def test_constant_table_is_global_phase(self, rng):
        state = random_state(rng, 3)
        obs = DiagonalObservable(np.full(8, 1.7))
        out = apply_diagonal_phase(state, obs, 0.9)
        assert np.allclose(out.amplitudes, np.exp(-1j * 0.9 * 1.7) * state.amplitudes)
        assert np.allclose(probabilities(out), probabilities(state))

    def test_pi_value_negates_amplitude(self):
        state = init_uniform(1)
        obs = DiagonalObservable(np.array([0.0, np.pi]))
        out = apply_diagonal_phase(state, obs, 1.0)
        assert abs(out.amplitudes[0] - 1 / np.sqrt(2)) < 1e-12
        assert abs(out.amplitudes[1] + 1 / np.sqrt(2)) < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            apply_diagonal_phase(init_uniform(2), DiagonalObservable(np.zeros(8)), 1.0)

    def test_nonfinite_observable_rejected(self):
        with pytest.raises(ValueError):
            DiagonalObservable(np.array([0.0, np.inf]))


class TestMixer:
    def test_beta_zero_identity(self, rng):
        state = random_state(rng, 2)
        out = apply_mixer(state, 0.0)
        assert np.allclose(out.amplitudes, state.amplitudes, atol=1e-15)

    def test_half_pi_on_basis_zero(self):
        out = apply_mixer(basis_state(1, 0), np.pi / 2)
        assert np.allclose(out.amplitudes, [0.0, -1j], atol=1e-12)

    @pytest.mark.parametrize("beta", [0.1, 0.7, 2.0])
    def test_uniform_state_probabilities_invariant(self, beta):
        state = init_uniform(3)
        out = apply_mixer(state, beta)
        assert np.allclose(probabilities(out), probabilities(state), atol=1e-12)


class TestLocalRotation:
    def test_zero_angle_identity(self, rng):
        state = random_state(rng, 2)
        out = apply_local_rotation(state, 1, "Z", 0.0)
        assert np.allclose(out.amplitudes, state.amplitudes)

    def test_y_pi_flips_zero_to_one(self):
        out = apply_local_rotation(basis_state(1, 0), 0, "Y", np.pi)
        assert np.allclose(probabilities(out), [0.0, 1.0], atol=1e-12)

    @pytest.mark.parametrize("axis", ["X", "Y", "Z"])
    def test_rotation_angles_add(self, rng, axis):
        state = random_state(rng, 3)
        a, b = 0.31, 1.12
        two = apply_local_rotation(apply_local_rotation(state, 2, axis, a), 2, axis, b)
        one = apply_local_rotation(state, 2, axis, a + b)
        assert np.allclose(two.amplitudes, one.amplitudes, atol=1e-12)

    def test_bad_qubit_and_axis(self):
        state = init_uniform(2)
        with pytest.raises(ValueError):
            apply_local_rotation(state, 2, "X", 0.5)
        with pytest.raises(ValueError):
            apply_local_rotation(state, 0, "W", 0.5)


class TestCz:
    def test_involution(self, rng):
        state = random_state(rng, 3)
        out = apply_cz(apply_cz(state, 0, 2), 0, 2)
        assert np.allclose(out.amplitudes, state.amplitudes)

    def test_on_basis_zero_unchanged(self):
        out = apply_cz(basis_state(2, 0), 0, 1)
        assert np.array_equal(out.amplitudes, basis_state(2, 0).amplitudes)

    def test_on_uniform(self):
        out = apply_cz(init_uniform(2), 0, 1)
        assert np.allclose(out.amplitudes, [0.5, 0.5, 0.5, -0.5])

    def test_equal_indices_rejected(self):
        with pytest.raises(ValueError):
            apply_cz(init_uniform(2), 1, 1)


class TestOracle:
    def test_empty_marking_is_identity(self, rng):
        state = random_state(rng, 3)
        out = oracle_phase_flip(state, lambda k: False)
        assert np.array_equal(out.amplitudes, state.amplitudes)

    def test_full_marking_is_global_phase(self, rng):
        state = random_state(rng, 3)
        out = oracle_phase_flip(state, lambda k: True)
        assert np.allclose(out.amplitudes, -state.amplitudes)
        assert np.allclose(probabilities(out), probabilities(state))

    def test_single_marked_on_uniform(self):
        out = oracle_phase_flip(init_uniform(2), [3])
        assert np.allclose(out.amplitudes, [0.5, 0.5, 0.5, -0.5])

    def test_marked_mask_forms_agree(self):
        dim = 8
        ref = marked_mask(lambda k: k % 3 == 0, dim)
        assert np.array_equal(ref, marked_mask([0, 3, 6], dim))
        assert np.array_equal(ref, marked_mask(ref, dim))


class TestGroverReflection:
    def test_reference_is_fixed_point(self, rng):
        state = random_state(rng, 3)
        out = grover_reflection(state, state)
        assert np.allclose(out.amplitudes, state.amplitudes, atol=1e-12)

    def test_orthogonal_state_negated(self):
        a, b = basis_state(2, 0), basis_state(2, 3)
        out = grover_reflection(a, b)
        assert np.allclose(out.amplitudes, -a.amplitudes)

    def test_flipped_uniform_amplifies_to_one(self):
        uniform = init_uniform(2)
        flipped = oracle_phase_flip(uniform, [3])
        out = grover_reflection(flipped, uniform)
        assert abs(probabilities(out)[3] - 1.0) < 1e-10

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            grover_reflection(init_uniform(2), init_uniform(3))


class TestAmplitudeAmplify:
    def test_zero_iterations_identity(self, rng):
        state = random_state(rng, 3)
        out = amplitude_amplify(state, [1], 0)
        assert np.array_equal(out.amplitudes, state.amplitudes)

    def test_three_qubit_closed_form(self):
        out = amplitude_amplify(init_uniform(3), [5], 1)
        expected = np.sin(3 * np.arcsin(np.sqrt(1 / 8))) ** 2
        assert abs(probabilities(out)[5] - expected) < 1e-10
        assert abs(expected - 0.78125) < 1e-12
        # two iterations reach sin^2(5 theta) = 0.9453125
        out2 = amplitude_amplify(init_uniform(3), [5], 2)
        assert abs(probabilities(out2)[5] - 0.9453125) < 1e-10

    def test_fully_marked_invariant_probabilities(self, rng):
        state = random_state(rng, 2)
        out = amplitude_amplify(state, lambda k: True, 3)
        assert np.allclose(probabilities(out), probabilities(state), atol=1e-12)

    def test_negative_iterations_rejected(self):
        with pytest.raises(ValueError):
            amplitude_amplify(init_uniform(2), [0], -1)

    @pytest.mark.parametrize("n", [2, 4, 6, 8])
    def test_closed_form_sweep(self, n):
        dim = 1 << n
        for m in [1, 2, dim // 4, dim // 2, dim]:
            marked = np.zeros(dim, dtype=bool)
            marked[:m] = True
            for k in [0, 1, 2]:
                out = amplitude_amplify(init_uniform(n), marked, k)
                got = float(np.sum(probabilities(out)[:m]))
                assert abs(got - grover_success(n, m, k)) < 1e-10


class TestMeasure:
    def test_basis_state_all_counts_on_it(self):
        rec = measure(basis_state(3, 5), shots=100, seed=1)
        assert rec.counts == {5: 100}

    def test_uniform_binomial_envelope(self):
        rec = measure(init_uniform(2), shots=40000, seed=7)
        for k in range(4):
            assert 0.49 * 10000 <= rec.counts[k] <= 1.51 * 10000

    def test_same_seed_identical(self):
        state = init_uniform(4)
        a = measure(state, shots=1000, seed=99)
        b = measure(state, shots=1000, seed=99)
        assert a == b

    def test_counts_sum_to_shots(self, rng):
        rec = measure(random_state(rng, 4), shots=512, seed=3)
        assert sum(rec.counts.values()) == 512

    def test_bad_shots(self):
        with pytest.raises(ValueError):
            measure(init_uniform(1), shots=0, seed=0)

    def test_sample_indices_matches_counts(self):
        state = init_uniform(3)
        idx = sample_indices(state, 1000, seed=4)
        rec = measure(state, 1000, seed=4)
        binned = np.bincount(idx, minlength=8)
        assert {k: int(v) for k, v in enumerate(binned) if v} == rec.counts


class TestProbabilitiesAndExpectation:
    def test_uniform_one_qubit(self):
        assert np.allclose(probabilities(init_uniform(1)), [0.5, 0.5])

    def test_basis_state_one_hot(self):
        probs = probabilities(basis_state(3, 6))
        assert probs[6] == 1.0 and probs.sum() == 1.0

    def test_global_phase_invariance(self, rng):
        state = random_state(rng, 3)
        rotated = StateVector(3, np.exp(1j * 0.77) * state.amplitudes)
        assert np.allclose(probabilities(rotated), probabilities(state))

    def test_uniform_expectation_is_mean(self):
        obs = DiagonalObservable(np.array([0.0, 1.0, 2.0, 3.0]))
        assert abs(expectation_diagonal(init_uniform(2), obs) - 1.5) < 1e-12

    def test_basis_state_expectation(self):
        obs = DiagonalObservable(np.arange(8.0))
        assert expectation_diagonal(basis_state(3, 5), obs) == 5.0

    def test_expectation_matches_shot_estimate(self, rng):
        state = random_state(rng, 4)
        obs = DiagonalObservable(rng.normal(size=16))
        exact = expectation_diagonal(state, obs)
        shots = 10**5
        rec = measure(state, shots, seed=11)
        estimate = sum(obs.values[k] * c for k, c in rec.counts.items()) / shots
        probs = probabilities(state)
        sigma = np.sqrt(max(probs @ obs.values**2 - exact**2, 1e-30) / shots)
        assert abs(estimate - exact) < 4 * sigma


OPS = [
    lambda s, r: apply_mixer(s, r.uniform(0, np.pi)),
    lambda s, r: apply_diagonal_phase(
        s, DiagonalObservable(r.normal(size=s.dim)), r.uniform(0, 2)
    ),
    lambda s, r: apply_local_rotation(
        s, int(r.integers(s.num_qubits)), "XYZ"[int(r.integers(3))], r.uniform(0, np.pi)
    ),
    lambda s, r: oracle_phase_flip(s, r.random(s.dim) < 0.3),
    lambda s, r: grover_reflection(s, init_uniform(s.num_qubits)),
]


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 6), seed=st.integers(0, 2**31), depth=st.integers(1, 6))
def test_norm_preserved_under_random_circuits(n, seed, depth):
    r = np.random.default_rng(seed)
    state = init_uniform(n)
    for _ in range(depth):
        state = OPS[int(r.integers(len(OPS)))](state, r)
    assert abs(state.norm_squared() - 1.0) < 1e-10


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 5), seed=st.integers(0, 2**31))
def test_inner_products_preserved(n, seed):
    r = np.random.default_rng(seed)
    a, b = random_state(r, n), random_state(r, n)
    before = np.vdot(a.amplitudes, b.amplitudes)
    for op in OPS:
        ua = op(a, np.random.default_rng(seed + 1))
        ub = op(b, np.random.default_rng(seed + 1))
        assert abs(np.vdot(ua.amplitudes, ub.amplitudes) - before) < 1e-10


def test_operations_bit_identical_across_calls(rng):
    state = random_state(rng, 5)
    obs = DiagonalObservable(rng.normal(size=32))
    first = apply_diagonal_phase(apply_mixer(state, 0.4), obs, 1.3)
    second = apply_diagonal_phase(apply_mixer(state, 0.4), obs, 1.3)
    assert np.array_equal(first.amplitudes, second.amplitudes)


def test_dump_amplitudes_csv(tmp_path):
    from quassim.statevector import dump_amplitudes_csv

    path = tmp_path / "amps.csv"
    dump_amplitudes_csv(init_uniform(2), path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "index,re,im"
    assert len(lines) == 5
