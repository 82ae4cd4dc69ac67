import numpy as np
import pytest

from quassim.encoding import EncodingScheme, decode_batch
from quassim.qaoa import (
    QaoaOptimizerConfig,
    QaoaParams,
    QaoaResult,
    evolve,
    expectation,
    fisher_information,
    gradient_adjoint,
    natural_gradient_step,
    optimize,
    parameter_shift_gradient,
    sample_particles,
)
from quassim.statevector import DiagonalObservable, init_uniform, measure, probabilities


def table_of(values) -> DiagonalObservable:
    return DiagonalObservable(np.asarray(values, dtype=float))


def random_instance(rng, n=4, depth=2):
    table = table_of(rng.uniform(0, 5, 1 << n))
    params = QaoaParams(depth, rng.uniform(0, 1.5, depth), rng.uniform(0, 1.5, depth))
    return table, params


def fd_gradient(table, params, eps=1e-6):
    vec = params.as_vector()
    out = np.empty(vec.size)
    for i in range(vec.size):
        vp, vm = vec.copy(), vec.copy()
        vp[i] += eps
        vm[i] -= eps
        out[i] = (
            expectation(table, QaoaParams.from_vector(params.depth, vp))
            - expectation(table, QaoaParams.from_vector(params.depth, vm))
        ) / (2 * eps)
    return out


class TestEvolve:
    def test_all_zero_angles_gives_uniform(self):
        table = table_of(np.arange(8.0))
        state = evolve(table, QaoaParams(2, np.zeros(2), np.zeros(2)))
        assert np.allclose(state.amplitudes, init_uniform(3).amplitudes, atol=1e-12)

    def test_unit_norm_for_random_angles(self, rng):
        table, params = random_instance(rng, n=5, depth=3)
        state = evolve(table, params)
        assert abs(state.norm_squared() - 1.0) < 1e-10

    def test_rejects_non_power_of_two(self):
        from quassim.errors import ShapeError

        with pytest.raises(ShapeError):
            evolve(table_of(np.arange(6.0)), QaoaParams(1, np.zeros(1), np.zeros(1)))


class TestExpectation:
    def test_zero_angles_give_table_mean(self):
        table = table_of([0.0, 1.0, 2.0, 3.0])
        got = expectation(table, QaoaParams(1, np.zeros(1), np.zeros(1)))
        assert abs(got - 1.5) < 1e-12

    def test_constant_table_for_any_angles(self, rng):
        table = table_of(np.full(8, 2.5))
        _, params = random_instance(rng, n=3, depth=3)
        assert abs(expectation(table, params) - 2.5) < 1e-12

    def test_bounded_by_table_range(self, rng):
        for _ in range(10):
            table, params = random_instance(rng, n=3, depth=2)
            val = expectation(table, params)
            assert table.values.min() - 1e-10 <= val <= table.values.max() + 1e-10


class TestGradients:
    def test_constant_table_zero_gradient(self, rng):
        table = table_of(np.full(16, 3.3))
        _, params = random_instance(rng, n=4, depth=2)
        assert np.allclose(parameter_shift_gradient(table, params), 0.0, atol=1e-12)

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_shift_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        table, params = random_instance(rng, n=4, depth=seed % 3 + 1)
        shift = parameter_shift_gradient(table, params)
        fd = fd_gradient(table, params)
        assert np.max(np.abs(shift - fd)) < 1e-5

    @pytest.mark.parametrize("seed", [4, 5])
    def test_adjoint_matches_shift(self, seed):
        rng = np.random.default_rng(seed)
        table, params = random_instance(rng, n=5, depth=3)
        shift = parameter_shift_gradient(table, params)
        adjoint = gradient_adjoint(table, params)
        assert np.max(np.abs(shift - adjoint)) < 1e-10

    def test_mixer_gradient_zero_at_zero_angles_for_symmetric_table(self):
        # bit-flip invariant: values[k] == values[~k]
        base = np.array([0.0, 3.0, 1.5, 2.0, 2.0, 1.5, 3.0, 0.0])
        assert np.allclose(base, base[::-1])
        params = QaoaParams(2, np.zeros(2), np.zeros(2))
        grad = parameter_shift_gradient(table_of(base), params)
        assert np.allclose(grad[2:], 0.0, atol=1e-10)


class TestNaturalGradient:
    def test_zero_gradient_leaves_params(self, rng):
        table = table_of(np.full(8, 1.0))
        _, params = random_instance(rng, n=3, depth=2)
        out = natural_gradient_step(table, params, learning_rate=0.3, ridge=1e-6)
        assert np.allclose(out.as_vector(), params.as_vector())

    def test_fisher_symmetric_psd(self, rng):
        table, params = random_instance(rng, n=4, depth=2)
        f = fisher_information(table, params)
        assert np.allclose(f, f.T, atol=1e-12)
        assert np.min(np.linalg.eigvalsh(f)) > -1e-10

    def test_identity_fisher_reduces_to_plain_step(self, rng):
        table, params = random_instance(rng, n=3, depth=2)
        lr, ridge = 0.2, 1e-9
        out = natural_gradient_step(
            table, params, lr, ridge, fisher=np.eye(2 * params.depth)
        )
        grad = parameter_shift_gradient(table, params)
        expected = params.as_vector() - lr * grad / (1 + ridge)
        assert np.allclose(out.as_vector(), expected, atol=1e-10)

    def test_ridge_must_be_positive(self, rng):
        table, params = random_instance(rng, n=3, depth=1)
        with pytest.raises(ValueError):
            natural_gradient_step(table, params, 0.1, ridge=0.0)


class TestOptimize:
    def test_never_worse_than_uniform_mean(self, rng):
        table = table_of(rng.uniform(0, 4, 16))
        res = optimize(table, 2, QaoaOptimizerConfig(max_iters=50, restarts=2, seed=1))
        assert res.expectation <= float(table.values.mean()) + 1e-12

    def test_two_qubit_ramp_concentrates_on_minimum(self):
        table = table_of([0.0, 1.0, 2.0, 3.0])
        res = optimize(
            table, 3, QaoaOptimizerConfig(max_iters=300, restarts=4, learning_rate=1.0, seed=11)
        )
        probs = probabilities(evolve(table, res.params))
        assert int(np.argmax(probs)) == 0
        assert probs[0] > 0.5

    def test_depth_one_grid_search_consistency(self):
        # coarse 2-parameter sweep bounds what depth-3 optimization must beat
        table = table_of([0.0, 1.0, 2.0, 3.0])
        best = np.inf
        for gamma in np.linspace(0, np.pi, 40):
            for beta in np.linspace(0, np.pi, 40):
                val = expectation(table, QaoaParams(1, np.array([gamma]), np.array([beta])))
                best = min(best, val)
        res = optimize(
            table, 3, QaoaOptimizerConfig(max_iters=300, restarts=4, learning_rate=1.0, seed=11)
        )
        assert res.expectation <= best + 1e-9

    def test_trace_monotone_and_final_matches(self, rng):
        table = table_of(rng.uniform(0, 3, 8))
        res = optimize(table, 2, QaoaOptimizerConfig(max_iters=60, restarts=3, seed=5))
        values = [v for _, v in res.trace]
        assert all(b <= a + 1e-15 for a, b in zip(values, values[1:]))
        assert values[-1] == res.expectation

    def test_same_seed_identical_traces(self, rng):
        table = table_of(rng.uniform(0, 3, 8))
        cfg = QaoaOptimizerConfig(max_iters=40, restarts=2, seed=9)
        a = optimize(table, 2, cfg)
        b = optimize(table, 2, cfg)
        assert a.trace == b.trace
        assert np.array_equal(a.params.as_vector(), b.params.as_vector())
        assert a.samples == b.samples

    def test_natural_gradient_mode_runs(self, rng):
        table = table_of(rng.uniform(0, 3, 8))
        cfg = QaoaOptimizerConfig(
            max_iters=25, restarts=1, seed=2, natural_gradient=True, ridge=1e-4
        )
        res = optimize(table, 2, cfg)
        assert res.expectation <= float(table.values.mean()) + 1e-12

    def test_bad_depth(self):
        with pytest.raises(ValueError):
            optimize(table_of(np.arange(4.0)), 0, QaoaOptimizerConfig())


class TestSampleParticles:
    def scheme(self):
        return EncodingScheme(2, 2, np.array([0.0, 0.0]), np.array([3.0, 3.0]))

    def test_concentrated_state_yields_identical_particles(self):
        # steep ramp: optimization concentrates near index 0
        table = table_of(np.array([0.0, 100.0, 100.0, 100.0] * 4))
        scheme = self.scheme()
        res = optimize(table, 3, QaoaOptimizerConfig(max_iters=200, restarts=3, seed=3))
        particles = sample_particles(table, res, 64, scheme, seed=4)
        assert particles.shape == (64, 2)

    def test_empirical_distribution_matches_state(self, rng):
        table = table_of(rng.uniform(0, 2, 16))
        params = QaoaParams(2, np.array([0.4, 0.9]), np.array([0.3, 0.7]))
        value = expectation(table, params)
        res = QaoaResult(
            params=params,
            expectation=value,
            trace=[(0, value)],
            samples=measure(evolve(table, params), 16, 0),
        )
        scheme = self.scheme()
        count = 10_000
        particles = sample_particles(table, res, count, scheme, seed=21)
        probs = probabilities(evolve(table, params))
        grid = decode_batch(np.arange(16), scheme)
        for k in range(16):
            hits = int(np.sum(np.all(np.isclose(particles, grid[k]), axis=1)))
            sigma = np.sqrt(count * probs[k] * (1 - probs[k]))
            assert abs(hits - count * probs[k]) <= 6 * sigma + 1e-9

    def test_zero_count_rejected(self, rng):
        table = table_of(rng.uniform(0, 2, 16))
        res = optimize(table, 1, QaoaOptimizerConfig(max_iters=5, restarts=1, seed=0))
        with pytest.raises(ValueError):
            sample_particles(table, res, 0, self.scheme(), seed=0)
