import numpy as np
import pytest

from cdcrl.dataset import save, to_bytes
from cdcrl.envs import (TIERS, behavior_policy, dataset_episode_return, evaluate,
                        generate_dataset, make_env, point_mass_1d, point_mass_2d, reference_scores,
                        reset, rollout, step)
from cdcrl.errors import DegenerateReferenceError, NumericError
from cdcrl.seeding import substream

# reference_scores(env, range(100)); also shipped in cdcrl/data/reference_scores.json
FROZEN_REFERENCE = {
    "PointMass1D": (-48.98658003177417, -10.522178506764165),
    "PointMass2D": (-63.23262288332734, -11.668471490312585),
}


class ConstantRewardEnv:
    """Wraps an environment so every step pays reward 1."""

    def __init__(self, gamma, horizon):
        self.inner = point_mass_1d(gamma=gamma, horizon=horizon)
        self.spec = self.inner.spec

    def reset(self, rng):
        return self.inner.reset(rng)

    def step(self, s, a, rng=None):
        nxt, _, done = self.inner.step(s, a, rng)
        return nxt, 1.0, done


def test_degenerate_start_and_seeding():
    env = point_mass_1d(start_std=0.0)
    np.testing.assert_array_equal(reset(env, np.random.default_rng(0)), [0.0, 0.0])
    env = point_mass_1d()
    a = reset(env, substream(4, "env"))
    b = reset(env, substream(4, "env"))
    np.testing.assert_array_equal(a, b)


def test_reset_mean_monte_carlo():
    env = point_mass_2d(start_mean=(0.2, -0.1, 0.0, 0.3), start_std=0.5)
    rng = np.random.default_rng(9)
    S = np.array([env.reset(rng) for _ in range(10_000)])
    se = S.std(axis=0, ddof=1) / np.sqrt(len(S))
    assert np.all(np.abs(S.mean(axis=0) - np.array(env.spec.start_mean)) <= 3 * se)


def test_reward_zero_at_target():
    env = point_mass_1d(dynamics_noise=0.0)
    # standing still at the target
    nxt, r, done = step(env, np.array([1.0, 0.0]), np.array([0.0]))
    assert r == 0.0 and not done
    np.testing.assert_array_equal(nxt, [1.0, 0.0])


def test_zero_action_keeps_position():
    env = point_mass_1d(dynamics_noise=0.0)
    nxt, _, _ = step(env, np.array([0.4, 0.0]), np.array([0.0]))
    np.testing.assert_array_equal(nxt, [0.4, 0.0])


def test_double_integrator_step():
    env = point_mass_1d(dynamics_noise=0.0)
    nxt, r, _ = step(env, np.array([0.0, 0.0]), np.array([1.0]))
    assert nxt[1] == pytest.approx(0.05, abs=1e-15)
    assert nxt[0] == pytest.approx(0.0025, abs=1e-15)
    assert r == pytest.approx(-(1 - 0.0025) / 2.0, abs=1e-15)


def test_action_clipping_counted():
    env = point_mass_1d(dynamics_noise=0.0)
    a, _, _ = env.step(np.zeros(2), np.array([3.0]))
    b, _, _ = env.step(np.zeros(2), np.array([1.0]))
    np.testing.assert_array_equal(a, b)
    assert env.clip_count == 1


def test_nonfinite_inputs_raise():
    env = point_mass_1d()
    with pytest.raises(NumericError):
        env.step(np.array([np.nan, 0.0]), np.array([0.0]))
    with pytest.raises(NumericError):
        env.step(np.zeros(2), np.array([np.inf]))


def test_rollout_geometric_sums():
    rng = np.random.default_rng(0)
    zero = lambda s, r: np.zeros(1)
    total, disc, n = rollout(ConstantRewardEnv(0.0, 5), zero, 5, rng)
    assert (total, disc, n) == (5.0, 1.0, 5)
    _, disc, n = rollout(ConstantRewardEnv(0.5, 3), zero, 3, rng)
    assert disc == 1.75 and n == 3
    with pytest.raises(ValueError):
        rollout(ConstantRewardEnv(0.5, 3), zero, 0, rng)


@pytest.mark.parametrize("name", ["PointMass1D", "PointMass2D"])
def test_tiers_strictly_ordered(name):
    env = make_env(name)
    means = {t: float(np.mean(evaluate(env, behavior_policy(env, t), 100, 0))) for t in TIERS}
    assert means["expert"] > means["medium"] > means["random"]


def test_reward_bound_random_steps():
    env = point_mass_2d()
    rng = np.random.default_rng(5)
    # vectorised over many independent states rather than one long chain
    S = rng.uniform(-2, 2, size=(10**6, 4))
    A = rng.uniform(-1.5, 1.5, size=(10**6, 2))
    pos = np.clip(S[:, :2] + env.spec.dt * np.clip(S[:, 2:] + env.spec.dt * A, -2, 2), -2, 2)
    r = env.reward(pos)
    assert np.all(np.abs(r) <= env.spec.reward_bound)
    for i in range(2000):
        _, rr, _ = env.step(S[i], A[i], rng)
        assert abs(rr) <= env.spec.reward_bound


def test_behavior_actions_in_box():
    env = point_mass_2d()
    rng = np.random.default_rng(0)
    for tier in TIERS:
        pol = behavior_policy(env, tier)
        for _ in range(200):
            a = pol(rng.uniform(-3, 3, size=4), rng)
            assert np.all(np.abs(a) <= 1.0)
    with pytest.raises(KeyError):
        behavior_policy(env, "novice")


def test_generate_dataset_single():
    ds = generate_dataset(point_mass_1d(), "medium", 1, 0)
    assert len(ds) == 1 and ds.episode_starts[0] and ds.truncated[0]


def test_generate_dataset_reproducible(tmp_path):
    env = point_mass_1d()
    a = generate_dataset(env, "expert", 500, 11)
    b = generate_dataset(env, "expert", 500, 11)
    assert to_bytes(a) == to_bytes(b)
    save(a, tmp_path / "a.cdcd")
    save(b, tmp_path / "b.cdcd")
    assert (tmp_path / "a.cdcd").read_bytes() == (tmp_path / "b.cdcd").read_bytes()


def test_generate_dataset_episode_structure():
    env = point_mass_1d(horizon=10)
    ds = generate_dataset(env, "medium", 35, 0)
    assert np.flatnonzero(ds.episode_starts).tolist() == [0, 10, 20, 30]
    assert np.flatnonzero(ds.truncated).tolist() == [9, 19, 29, 34]
    assert not ds.terminals.any()
    # consecutive rows chain within an episode
    np.testing.assert_array_equal(ds.next_states[:9], ds.states[1:10])


def test_random_tier_action_mean():
    ds = generate_dataset(point_mass_2d(), "random", 100_000, 1)
    se = ds.actions.std(axis=0, ddof=1) / np.sqrt(len(ds))
    assert np.all(np.abs(ds.actions.mean(axis=0)) <= 3 * se)


@pytest.mark.parametrize("name", ["PointMass1D", "PointMass2D"])
def test_reference_scores_frozen(name):
    lo, hi = reference_scores(make_env(name), range(100))
    assert (lo, hi) == FROZEN_REFERENCE[name]
    assert reference_scores(make_env(name), range(100)) == (lo, hi)


def test_reference_scores_degenerate():
    class ZeroEnv(ConstantRewardEnv):
        def step(self, s, a, rng=None):
            nxt, _, done = self.inner.step(s, a, rng)
            return nxt, 0.0, done

    with pytest.raises(DegenerateReferenceError):
        reference_scores(ZeroEnv(0.99, 20), range(10))
    with pytest.raises(ValueError):
        reference_scores(point_mass_1d(), range(5))


def test_dataset_episode_return():
    ds = generate_dataset(point_mass_1d(horizon=5), "medium", 10, 0)
    assert dataset_episode_return(ds) == pytest.approx(ds.rewards.reshape(2, 5).sum(axis=1).mean())
