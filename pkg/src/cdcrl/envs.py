"""Point-mass double-integrator tasks and behaviour policies of graded quality.

Dynamics, per step of length ``dt`` (velocity first, then position)::

    v' = clip(v + dt * a + noise, -vel_limit, vel_limit)
    x' = clip(x + dt * v', -pos_limit, pos_limit)

with ``a`` clipped to ``[-1, 1]`` and ``noise ~ N(0, dynamics_noise^2)`` per
axis. The reward for the transition is computed on the *next* position,

    r = -min(||x' - target|| / distance_scale, 1)

so it always lies in ``[-1, 0]`` and equals 0 only at the target. Hitting the
position wall zeroes the velocity component pushing into it. There is no
environment termination; the horizon cap is recorded as truncation.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateReferenceError, NumericError
from .seeding import substream

TIERS = ("random", "medium", "expert")


@dataclass(frozen=True)
class EnvSpec:
    name: str
    state_dim: int
    action_dim: int
    horizon: int = 100
    gamma: float = 0.99
    reward_bound: float = 1.0
    dt: float = 0.05
    target: tuple = (1.0,)
    start_mean: tuple = (0.0, 0.0)
    start_std: float = 0.1
    dynamics_noise: float = 0.01
    pos_limit: float = 2.0
    vel_limit: float = 2.0
    distance_scale: float = 2.0


class PointMass:
    """A ``k``-dimensional point mass; state is ``(positions, velocities)``."""

    def __init__(self, spec):
        self.spec = spec
        self.k = spec.action_dim
        if spec.state_dim != 2 * self.k or len(spec.target) != self.k:
            raise ValueError("state_dim must be 2*action_dim and target must match")
        self.clip_count = 0

    def configured(self, **changes):
        return PointMass(replace(self.spec, **changes))

    def reset(self, rng):
        s = self.spec
        mean = np.asarray(s.start_mean, dtype=np.float64)
        if s.start_std == 0:
            return mean.copy()
        return mean + s.start_std * rng.standard_normal(s.state_dim)

    def reward(self, position):
        s = self.spec
        d = np.linalg.norm(np.asarray(position) - np.asarray(s.target), axis=-1)
        return -np.minimum(d / s.distance_scale, 1.0) * s.reward_bound

    def step(self, state, action, rng=None):
        """Advance one step; returns ``(next_state, reward, terminal)``."""
        s = self.spec
        state = np.asarray(state, dtype=np.float64)
        action = np.asarray(action, dtype=np.float64)
        if not (np.all(np.isfinite(state)) and np.all(np.isfinite(action))):
            raise NumericError("non-finite state or action passed to step")
        clipped = np.clip(action, -1.0, 1.0)
        if np.any(clipped != action):
            self.clip_count += 1
        k = self.k
        pos, vel = state[:k], state[k:]
        vel = vel + s.dt * clipped
        if s.dynamics_noise > 0 and rng is not None:
            vel = vel + s.dynamics_noise * rng.standard_normal(k)
        vel = np.clip(vel, -s.vel_limit, s.vel_limit)
        pos = pos + s.dt * vel
        hit = np.abs(pos) >= s.pos_limit
        pos = np.clip(pos, -s.pos_limit, s.pos_limit)
        vel = np.where(hit & (np.sign(vel) == np.sign(pos)), 0.0, vel)
        nxt = np.concatenate([pos, vel])
        return nxt, float(self.reward(pos)), False


def point_mass_1d(**changes):
    return PointMass(replace(EnvSpec("PointMass1D", 2, 1, target=(1.0,),
                                     start_mean=(0.0, 0.0)), **changes))


def point_mass_2d(**changes):
    return PointMass(replace(EnvSpec("PointMass2D", 4, 2, target=(1.0, 0.5),
                                     start_mean=(0.0, 0.0, 0.0, 0.0)), **changes))


ENVS = {"PointMass1D": point_mass_1d, "PointMass2D": point_mass_2d}


def make_env(name, **changes):
    try:
        return ENVS[name](**changes)
    except KeyError:
        raise KeyError(f"unknown environment {name!r}; valid: {sorted(ENVS)}") from None


def reset(env, rng):
    return env.reset(rng)


def step(env, state, action, rng=None):
    return env.step(state, action, rng)


# Medium is a sluggish, under-damped PD loop with heavy action noise; expert
# is near critically damped with light noise.
_TIER_GAINS = {
    "medium": (1.0, 0.4, 0.3),
    "expert": (4.0, 3.0, 0.05),
}


@dataclass
class BehaviorPolicy:
    tier: str
    target: tuple
    kp: float = 0.0
    kd: float = 0.0
    noise: float = 0.0

    def act(self, state, rng):
        k = len(self.target)
        if self.tier == "random":
            return rng.uniform(-1.0, 1.0, size=k)
        pos, vel = state[:k], state[k:]
        a = self.kp * (np.asarray(self.target) - pos) - self.kd * vel
        a = a + self.noise * rng.standard_normal(k)
        return np.clip(a, -1.0, 1.0)

    def __call__(self, state, rng):
        return self.act(state, rng)


def behavior_policy(env, tier):
    if tier not in TIERS:
        raise KeyError(f"unknown tier {tier!r}; valid: {list(TIERS)}")
    if tier == "random":
        return BehaviorPolicy("random", env.spec.target)
    kp, kd, noise = _TIER_GAINS[tier]
    return BehaviorPolicy(tier, env.spec.target, kp, kd, noise)


def rollout(env, action_selector, horizon, rng):
    """Run one episode.

    ``action_selector(state, rng)`` returns an action. Returns
    ``(undiscounted_return, discounted_return, length)``.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    gamma = env.spec.gamma
    state = env.reset(rng)
    total, disc, g = 0.0, 0.0, 1.0
    t = 0
    for t in range(1, horizon + 1):
        action = action_selector(state, rng)
        state, r, terminal = env.step(state, action, rng)
        total += r
        disc += g * r
        g *= gamma
        if terminal:
            break
    return total, disc, t


def evaluate(env, action_selector, episodes, seed, stream="eval", *split):
    """Undiscounted returns of ``episodes`` rollouts, one RNG stream each."""
    out = []
    for ep in range(episodes):
        rng = substream(seed, stream, *split, ep)
        ret, _, _ = rollout(env, action_selector, env.spec.horizon, rng)
        out.append(ret)
    return np.asarray(out)


def generate_dataset(env, behavior, n_transitions, seed):
    """Collect exactly ``n_transitions`` steps of ``behavior`` in ``env``."""
    from .dataset import TransitionDataset

    if n_transitions < 1:
        raise ValueError("n_transitions must be >= 1")
    if isinstance(behavior, str):
        behavior = behavior_policy(env, behavior)
    rng = substream(seed, "data")
    dS, dA, H = env.spec.state_dim, env.spec.action_dim, env.spec.horizon
    S = np.empty((n_transitions, dS))
    A = np.empty((n_transitions, dA))
    R = np.empty(n_transitions)
    S2 = np.empty((n_transitions, dS))
    term = np.zeros(n_transitions, dtype=bool)
    trunc = np.zeros(n_transitions, dtype=bool)
    start = np.zeros(n_transitions, dtype=bool)
    t = 0
    state = None
    for i in range(n_transitions):
        if state is None:
            state = env.reset(rng)
            t = 0
            start[i] = True
        a = behavior(state, rng)
        nxt, r, done = env.step(state, a, rng)
        t += 1
        S[i], A[i], R[i], S2[i], term[i] = state, a, r, nxt, done
        if done or t >= H:
            trunc[i] = not done
            state = None
        else:
            state = nxt
    trunc[-1] = trunc[-1] or not term[-1]
    return TransitionDataset(env.spec.name, S, A, R, S2, term, trunc, start)


def reference_scores(env, seeds):
    """Mean undiscounted return of the random and expert tiers."""
    seeds = list(seeds)
    if len(seeds) < 10:
        raise ValueError("need at least 10 evaluation episodes per tier")
    scores = []
    for tier in ("random", "expert"):
        pol = behavior_policy(env, tier)
        rets = [rollout(env, pol, env.spec.horizon, substream(s, "env"))[0] for s in seeds]
        scores.append(float(np.mean(rets)))
    random_score, expert_score = scores
    if expert_score <= random_score:
        raise DegenerateReferenceError(
            f"expert score {expert_score} does not exceed random score {random_score}")
    return random_score, expert_score


def dataset_episode_return(dataset):
    """Average undiscounted return of the episodes stored in ``dataset``."""
    starts = np.flatnonzero(dataset.episode_starts)
    if starts.size == 0:
        return float(np.sum(dataset.rewards))
    bounds = list(starts) + [len(dataset)]
    rets = [dataset.rewards[a:b].sum() for a, b in zip(bounds[:-1], bounds[1:])]
    return float(np.mean(rets))
