"""Decision loop: schedule, selection law, bookkeeping, determinism."""

import hashlib
import pickle

import numpy as np
import pytest

from ksib.environment import SyntheticEnv, sample_canonical_betas
from ksib.errors import StateError
from ksib.numerics import Rng
from ksib.policy import EpsilonGreedyPolicy, EpsilonSchedule, PolicyConfig
from ksib.score_features import KnownGaussianScore


def make_policy(seed=0, n_arms=2, dim=2, warm_start=10, **kw):
    cfg = PolicyConfig(n_arms=n_arms, dim=dim, warm_start=warm_start, **kw)
    return EpsilonGreedyPolicy(cfg, KnownGaussianScore.standard(dim), Rng(seed))


def run_rounds(policy, env, rounds):
    recs = []
    for _ in range(rounds):
        x, means, noise = env.draw_round()
        recs.append(policy.step(x, lambda a: means[a] + noise))
    return recs


class TestEpsilonSchedule:
    def test_first_round(self):
        assert EpsilonSchedule().value(1) == pytest.approx(0.15)

    def test_power_decay(self):
        assert EpsilonSchedule().value(10) == pytest.approx(0.05972, abs=1e-5)

    def test_floor_clamp(self):
        assert EpsilonSchedule().value(10 ** 9) == 0.005

    def test_cap_clamp(self):
        assert EpsilonSchedule(coeff=5.0).value(1) == 0.35

    def test_invalid(self):
        with pytest.raises(ValueError):
            EpsilonSchedule(floor=0.5, cap=0.4)


class TestSelectionLaw:
    def test_warm_start_round_robin(self):
        policy = make_policy(n_arms=3, warm_start=9)
        links = tuple(lambda z, c=c: c + 0.1 * np.tanh(z)
                      for c in (0.3, 0.5, 0.7))
        env = SyntheticEnv(sample_canonical_betas(2, 3, Rng(5)), 0.0, Rng(1),
                           links=links)
        recs = run_rounds(policy, env, 9)
        assert [r.arm for r in recs] == [0, 1, 2] * 3
        assert all(r.propensity == pytest.approx(1 / 3) for r in recs)

    def test_warm_start_equal_pulls(self):
        policy = make_policy(warm_start=50)
        env = SyntheticEnv(sample_canonical_betas(2, 2, Rng(5)), 0.0, Rng(1))
        recs = run_rounds(policy, env, 50)
        arms = [r.arm for r in recs]
        assert arms.count(0) == arms.count(1) == 25

    def test_propensity_values(self):
        """Recorded propensity re-derives exactly from (eps, greedy, arm)."""
        policy = make_policy(seed=3, warm_start=6)
        env = SyntheticEnv(sample_canonical_betas(2, 2, Rng(5)), 0.05, Rng(2))
        recs = run_rounds(policy, env, 300)
        for rec in recs:
            again = policy.propensity_of(rec.arm, rec.greedy_arm, rec.epsilon,
                                         rec.t)
            assert rec.propensity == again
            if rec.t > 6:
                expect = 1 - rec.epsilon if rec.arm == rec.greedy_arm \
                    else rec.epsilon
                assert rec.propensity == pytest.approx(expect)

    def test_exploration_frequency_matches_schedule(self):
        """Non-greedy pulls concentrate around sum(eps_t)."""
        total, expect, var = 0, 0.0, 0.0
        for seed in range(10):
            policy = make_policy(seed=seed, warm_start=10)
            env = SyntheticEnv(sample_canonical_betas(2, 2, Rng(5)), 0.05,
                               Rng(100 + seed))
            recs = run_rounds(policy, env, 400)
            for rec in recs[10:]:
                total += rec.arm != rec.greedy_arm
                expect += rec.epsilon
                var += rec.epsilon * (1 - rec.epsilon)
        assert abs(total - expect) <= 3 * np.sqrt(var)

    def test_explicit_probabilities(self):
        policy = make_policy()
        assert policy.propensity_of(1, 1, 0.15, 100) == pytest.approx(0.85)
        assert policy.propensity_of(0, 1, 0.15, 100) == pytest.approx(0.15)
        four = make_policy(n_arms=4, dim=2)
        assert four.propensity_of(2, 0, 0.3, 100) == pytest.approx(0.1)

    def test_greedy_undefined_during_warm_start(self):
        policy = make_policy(warm_start=10)
        with pytest.raises(StateError):
            policy.greedy_arm(np.zeros(2))


class TestGreedyArm:
    def test_tie_breaks_to_lowest_id(self):
        policy = make_policy(warm_start=2)
        env = SyntheticEnv(sample_canonical_betas(2, 2, Rng(5)), 0.0, Rng(3))
        run_rounds(policy, env, 2)
        # wipe both arms' models: every prediction is 0.0, a tie
        for arm in policy.arms:
            arm.model = None
        assert policy.greedy_arm(np.array([1.0, 1.0])) == 0

    def test_matches_bruteforce_prediction(self):
        policy = make_policy(seed=9, warm_start=20)
        env = SyntheticEnv(sample_canonical_betas(2, 2, Rng(5)), 0.05, Rng(4))
        run_rounds(policy, env, 120)
        for _ in range(20):
            x = env.rng.normal(2)
            preds = [policy._prediction(s, x) for s in policy.arms]
            assert policy.greedy_arm(x) == int(np.argmax(preds))


def state_digest(arm_state):
    """Digest of everything except the shared round clock acc.t."""
    blob = pickle.dumps((arm_state.acc.sum_gram, arm_state.acc.sum_moment,
                         arm_state.acc.pulls,
                         None if arm_state.estimate is None
                         else arm_state.estimate.beta_hat,
                         None if arm_state.model is None
                         else arm_state.model.dual_coeffs))
    return hashlib.sha256(blob).hexdigest()


class TestSingleArmUpdate:
    def test_non_pulled_arm_state_unchanged(self):
        policy = make_policy(seed=5, warm_start=6)
        env = SyntheticEnv(sample_canonical_betas(2, 2, Rng(5)), 0.05, Rng(6))
        run_rounds(policy, env, 30)
        for _ in range(40):
            x, means, noise = env.draw_round()
            before = {i: state_digest(s) for i, s in enumerate(policy.arms)}
            rec = policy.step(x, lambda a: means[a] + noise)
            for i, state in enumerate(policy.arms):
                assert state.acc.t == rec.t  # clock advances everywhere
                if i == rec.arm:
                    assert state_digest(state) != before[i]
                else:
                    assert state_digest(state) == before[i]


class TestDeterminism:
    def test_same_seed_identical_trajectory(self):
        logs = []
        for _ in range(2):
            policy = make_policy(seed=11, warm_start=10)
            env = SyntheticEnv(sample_canonical_betas(2, 2, Rng(5)), 0.1,
                               Rng(12))
            recs = run_rounds(policy, env, 200)
            logs.append([(r.t, r.arm, r.greedy_arm, r.propensity, r.reward)
                         for r in recs])
        assert logs[0] == logs[1]

    def test_estimates_bit_identical(self):
        digests = []
        for _ in range(2):
            policy = make_policy(seed=13, warm_start=10)
            env = SyntheticEnv(sample_canonical_betas(2, 2, Rng(5)), 0.1,
                               Rng(14))
            run_rounds(policy, env, 150)
            digests.append(tuple(state_digest(s) for s in policy.arms))
        assert digests[0] == digests[1]
