"""Policy distributions, analytic gradients, Adam, and checkpoints."""

import math

import numpy as np
import pytest

from budgetrl.policy import (
    AdamState,
    MlpPolicy,
    TabularPolicy,
    adam_step,
    load_policy,
    policy_from_bytes,
    policy_to_bytes,
    save_policy,
)


def flatten(grads):
    return np.concatenate([g.ravel() for g in grads])


def finite_difference_logprob(policy, state, action, h=1e-5):
    """Central differences of log pi(action|state) over every parameter."""
    params = [p.copy() for p in policy.parameters()]
    grads = []
    for i, base in enumerate(params):
        g = np.zeros_like(base)
        flat = base.ravel()
        gflat = g.ravel()
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            plus = math.log(
                policy.with_parameters(params).action_distribution(state)[action]
            )
            flat[j] = orig - h
            minus = math.log(
                policy.with_parameters(params).action_distribution(state)[action]
            )
            flat[j] = orig
            gflat[j] = (plus - minus) / (2 * h)
        grads.append(g)
    return grads


class TestDistributions:
    def test_zero_logits_uniform(self):
        policy = TabularPolicy.uniform(3, 2)
        assert np.allclose(policy.action_distribution(1), [0.5, 0.5])

    def test_softmax_analytic(self):
        policy = TabularPolicy(np.array([[math.log(3.0), 0.0]]))
        assert np.allclose(policy.action_distribution(0), [0.75, 0.25])

    def test_mlp_distribution_normalised(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            policy = MlpPolicy.initialize(6, 4, hidden=12, rng=rng)
            state = rng.normal(size=6)
            probs = policy.action_distribution(state)
            assert probs.shape == (4,)
            assert np.all(probs >= 0)
            assert abs(probs.sum() - 1.0) < 1e-9

    def test_tabular_rows_normalised(self):
        rng = np.random.default_rng(1)
        policy = TabularPolicy(rng.normal(scale=5, size=(20, 6)))
        for s in range(20):
            assert abs(policy.action_distribution(s).sum() - 1.0) < 1e-9

    def test_dimension_mismatch_rejected(self):
        policy = MlpPolicy.initialize(4, 2, hidden=8)
        with pytest.raises(ValueError):
            policy.action_distribution(np.zeros(5))


class TestSampling:
    def test_degenerate_distribution(self):
        policy = TabularPolicy(np.array([[50.0, -50.0]]))
        rng = np.random.default_rng(0)
        assert all(policy.sample_action(0, rng) == 0 for _ in range(100))

    def test_uniform_frequency_within_3_sigma(self):
        policy = TabularPolicy.uniform(1, 2)
        rng = np.random.default_rng(7)
        n = 10_000
        zeros = sum(policy.sample_action(0, rng) == 0 for _ in range(n))
        assert 0.47 <= zeros / n <= 0.53

    def test_seeded_sequences_repeat(self):
        rng_a = np.random.default_rng(3)
        rng_b = np.random.default_rng(3)
        policy = TabularPolicy(np.array([[0.3, -0.2, 0.1]]))
        seq_a = [policy.sample_action(0, rng_a) for _ in range(50)]
        seq_b = [policy.sample_action(0, rng_b) for _ in range(50)]
        assert seq_a == seq_b

    def test_mlp_sampling_matches_distribution(self):
        rng = np.random.default_rng(11)
        policy = MlpPolicy.initialize(5, 3, hidden=16, rng=rng)
        state = rng.normal(size=5)
        probs = policy.action_distribution(state)
        draws = np.bincount(
            [policy.sample_action(state, rng) for _ in range(20_000)], minlength=3
        )
        freq = draws / draws.sum()
        se = np.sqrt(probs * (1 - probs) / 20_000)
        assert np.all(np.abs(freq - probs) <= 3.5 * se + 1e-12)


class TestLogprobGradients:
    def test_tabular_uniform_row(self):
        policy = TabularPolicy.uniform(2, 2)
        (grad,) = policy.logprob_gradient(1, 0)
        assert np.allclose(grad[1], [0.5, -0.5])
        assert np.allclose(grad[0], 0.0)

    def test_tabular_row_sums_to_zero(self):
        rng = np.random.default_rng(5)
        policy = TabularPolicy(rng.normal(size=(4, 5)))
        for s in range(4):
            for a in range(5):
                (grad,) = policy.logprob_gradient(s, a)
                assert abs(grad[s].sum()) < 1e-12

    def test_tabular_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            policy = TabularPolicy(rng.normal(size=(3, 3)))
            s = int(rng.integers(3))
            a = int(rng.integers(3))
            analytic = flatten(policy.logprob_gradient(s, a))
            numeric = flatten(finite_difference_logprob(policy, s, a))
            assert np.allclose(analytic, numeric, atol=1e-6)

    def test_mlp_matches_finite_differences(self):
        rng = np.random.default_rng(9)
        for _ in range(5):
            policy = MlpPolicy.initialize(4, 3, hidden=6, rng=rng)
            state = rng.normal(size=4)
            a = int(rng.integers(3))
            analytic = flatten(policy.logprob_gradient(state, a))
            numeric = flatten(finite_difference_logprob(policy, state, a))
            denom = max(np.linalg.norm(numeric), 1e-12)
            assert np.linalg.norm(analytic - numeric) / denom < 1e-5

    def test_expected_score_is_zero(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            policy = TabularPolicy(rng.normal(size=(2, 4)))
            probs = policy.action_distribution(0)
            total = np.zeros_like(policy.logits)
            for a in range(4):
                (grad,) = policy.logprob_gradient(0, a)
                total += probs[a] * grad
            assert np.all(np.abs(total) < 1e-8)

    def test_weighted_score_matches_sum_of_single_gradients(self):
        rng = np.random.default_rng(12)
        policy = MlpPolicy.initialize(3, 2, hidden=5, rng=rng)
        states = rng.normal(size=(6, 3))
        actions = rng.integers(0, 2, size=6)
        weights = rng.normal(size=6)
        batched = policy.weighted_score_gradients(states, actions, weights)
        manual = [np.zeros_like(p) for p in policy.parameters()]
        for x, a, w in zip(states, actions, weights):
            for m, g in zip(manual, policy.logprob_gradient(x, int(a))):
                m += w * g
        for b, m in zip(batched, manual):
            assert np.allclose(b, m, atol=1e-12)

    def test_invalid_action_rejected(self):
        policy = TabularPolicy.uniform(2, 2)
        with pytest.raises(ValueError):
            policy.logprob_gradient(0, 2)


def adam_oracle(params, grad_seq, lr=3e-4, b1=0.9, b2=0.999, eps=1e-8):
    """Spreadsheet-style reimplementation of the published update rule."""
    theta = [p.copy() for p in params]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    for t, grads in enumerate(grad_seq, start=1):
        for i, g in enumerate(grads):
            m[i] = b1 * m[i] + (1 - b1) * g
            v[i] = b2 * v[i] + (1 - b2) * g * g
            mhat = m[i] / (1 - b1**t)
            vhat = v[i] / (1 - b2**t)
            theta[i] = theta[i] - lr * mhat / (np.sqrt(vhat) + eps)
    return theta


class TestAdam:
    def test_zero_gradient_leaves_parameters(self):
        params = [np.array([1.0, -2.0])]
        state = AdamState.initialize(params)
        new_params, new_state = adam_step(params, [np.zeros(2)], state)
        assert np.array_equal(new_params[0], params[0])
        assert new_state.step == 1

    def test_first_step_is_signed_lr(self):
        params = [np.array([0.0, 0.0, 0.0])]
        grads = [np.array([10.0, -3.0, 0.5])]
        state = AdamState.initialize(params, lr=3e-4)
        new_params, _ = adam_step(params, grads, state)
        assert np.allclose(new_params[0], -3e-4 * np.sign(grads[0]), rtol=1e-6)

    def test_three_step_sequence_matches_oracle(self):
        rng = np.random.default_rng(2)
        params = [np.array([0.5]), rng.normal(size=(2, 2))]
        grad_seq = [
            [np.array([0.3]), rng.normal(size=(2, 2))],
            [np.array([-0.1]), rng.normal(size=(2, 2))],
            [np.array([0.7]), rng.normal(size=(2, 2))],
        ]
        expected = adam_oracle(params, grad_seq)
        state = AdamState.initialize(params, lr=3e-4)
        current = params
        for grads in grad_seq:
            current, state = adam_step(current, grads, state)
        for got, want in zip(current, expected):
            assert np.allclose(got, want, atol=1e-15)

    def test_shape_mismatch_rejected(self):
        params = [np.zeros(3)]
        state = AdamState.initialize(params)
        with pytest.raises(ValueError):
            adam_step(params, [np.zeros(4)], state)


class TestCheckpoints:
    def test_tabular_round_trip(self, tmp_path):
        rng = np.random.default_rng(4)
        policy = TabularPolicy(rng.normal(size=(7, 3)))
        path = tmp_path / "p.bin"
        save_policy(policy, path)
        loaded = load_policy(path)
        assert isinstance(loaded, TabularPolicy)
        assert np.array_equal(loaded.logits, policy.logits)

    def test_mlp_round_trip_byte_exact(self, tmp_path):
        rng = np.random.default_rng(6)
        policy = MlpPolicy.initialize(8, 3, hidden=10, rng=rng)
        blob = policy_to_bytes(policy)
        loaded = policy_from_bytes(blob)
        assert policy_to_bytes(loaded) == blob
        for a, b in zip(loaded.parameters(), policy.parameters()):
            assert np.array_equal(a, b)

    def test_bad_magic_rejected(self):
        with pytest.raises(ValueError):
            policy_from_bytes(b"XXXX" + b"\x00" * 32)

    def test_initial_uniformity(self):
        policy = TabularPolicy.uniform(5, 3)
        for s in range(5):
            assert np.allclose(policy.action_distribution(s), 1 / 3)

    def test_mlp_init_near_uniform(self):
        rng = np.random.default_rng(15)
        policy = MlpPolicy.initialize(8, 3, hidden=64, rng=rng)
        probs = policy.action_distribution(rng.random(8))
        assert np.all(probs > 0.15)
