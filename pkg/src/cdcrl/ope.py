"""Fitted Q evaluation with an optional overestimation penalty, and the
correlation benchmark between estimated and realised policy values.

A *frozen policy* here is any object with::

    actions(states, n, rng, idx=None, at_next=False) -> (B, n, dA)

``idx`` are dataset row indices of ``states`` (when known) and ``at_next``
says whether they are next-states. ``SampledPolicy`` wraps a stochastic
policy directly; ``ActionBank`` caches draws of an expensive selector
(best-of-N deployment) for every dataset state so FQE can reuse them.
"""

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .agent import QEnsemble, combine, polyak_update
from .cdc import critic_update
from .dataset import sample_minibatch
from .envs import evaluate
from .errors import ConfigError, MissingInitialStatesError, UndefinedCorrelationError
from .numerics import AdamState
from .seeding import substream


@dataclass(frozen=True)
class OpeConfig:
    eta: float = 1.0
    N: int = 15
    M: int = 4
    nu: float = 0.75
    gamma: float = 0.99
    tau: float = 0.005
    steps: int = 50000
    batch: int = 256
    critic_lr: float = 7e-4
    seed: int = 0
    hidden: tuple = (256, 256, 256, 256)
    grad_clip: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        for key, ok in [("eta", self.eta >= 0), ("N", self.N >= 1), ("M", self.M >= 1),
                        ("nu", 0 < self.nu < 1), ("gamma", 0 <= self.gamma < 1),
                        ("tau", 0 < self.tau <= 1), ("steps", self.steps >= 0),
                        ("batch", self.batch >= 1), ("critic_lr", self.critic_lr > 0),
                        ("grad_clip", self.grad_clip > 0)]:
            if not ok:
                raise ConfigError(f"config value out of range: {key}", key=key)


OPE_KEYS = {k: k for k in ("eta", "N", "M", "nu", "gamma", "tau", "steps", "batch",
                           "critic_lr", "seed")}
OPE_OPTIONAL = {"hidden": "hidden", "grad_clip": "grad_clip"}


class SampledPolicy:
    """Frozen view of a stochastic policy: fresh samples on every call."""

    def __init__(self, policy):
        self.policy = policy

    def actions(self, states, n, rng, idx=None, at_next=False):
        return self.policy.sample(states, n, rng)[0]


class ActionBank:
    """Precomputed draws of ``selector(states, rng) -> (B, dA)`` per dataset row.

    ``size`` draws are stored for every state and next-state; ``actions``
    returns ``n`` of them picked uniformly with replacement. Lookups need
    ``idx``; states outside the dataset fall back to calling ``selector``.
    """

    def __init__(self, selector, dataset, size, rng, chunk=2048):
        if size < 1:
            raise ValueError("bank size must be >= 1")
        self.selector = selector
        self.size = size
        self.banks = {}
        for at_next, states in ((False, dataset.states), (True, dataset.next_states)):
            bank = np.empty((len(dataset), size, dataset.action_dim))
            for k in range(size):
                for lo in range(0, len(dataset), chunk):
                    bank[lo:lo + chunk, k] = selector(states[lo:lo + chunk], rng)
            self.banks[at_next] = bank

    def actions(self, states, n, rng, idx=None, at_next=False):
        if idx is None:
            return np.stack([self.selector(states, rng) for _ in range(n)], axis=1)
        pick = rng.integers(0, self.size, size=(len(idx), n))
        return self.banks[bool(at_next)][np.asarray(idx)[:, None], pick]


def fqe(dataset, frozen_policy, config, on_step=None):
    """Fit an ensemble to the mean-over-samples backup of ``frozen_policy``.

    Target ``y = r + gamma / N * sum_k qbar_target(s', a'_k)`` (``y = r`` on
    terminal rows); with ``eta > 0`` each member also pays the overestimation
    penalty against ``N`` frozen-policy actions at ``s``.
    """
    cfg = config
    ens = QEnsemble.create(dataset.state_dim, dataset.action_dim, cfg.M, cfg.nu, cfg.hidden,
                           substream(cfg.seed, "ope", 0))
    opts = [AdamState.for_params(n.params) for n in ens.online]
    batch_rng = substream(cfg.seed, "ope", 1)
    act_rng = substream(cfg.seed, "ope", 2)
    for step in range(1, cfg.steps + 1):
        b = sample_minibatch(dataset, cfg.batch, batch_rng)
        y = np.array(b.rewards, dtype=np.float64)
        if cfg.gamma > 0:
            nxt = frozen_policy.actions(b.next_states, cfg.N, act_rng, b.indices, True)
            v = combine(ens.values(b.next_states, nxt, use_target=True), ens.nu).mean(axis=1)
            live = ~b.terminals
            y[live] += cfg.gamma * v[live]
        cand = (frozen_policy.actions(b.states, cfg.N, act_rng, b.indices, False)
                if cfg.eta > 0 else None)
        stats = critic_update(ens, opts, b.states, b.actions, y, cand, cfg.eta, cfg.critic_lr,
                              cfg.grad_clip, step)
        polyak_update(ens, cfg.tau)
        if on_step is not None:
            on_step(step, stats)
    return ens


def ope_score(q_hat, frozen_policy, dataset, N, rng, all_states=False, use_target=True):
    """Mean over start states (or every state) of mean-over-``N`` ``qbar``.

    The Polyak-averaged target nets are read by default: they are an
    iterate average of the online nets and much less noisy.
    """
    idx = np.arange(len(dataset)) if all_states else np.flatnonzero(dataset.episode_starts)
    if idx.size == 0:
        raise MissingInitialStatesError("dataset has no episode-start states")
    s = dataset.states[idx]
    acts = frozen_policy.actions(s, N, rng, idx, False)
    return float(q_hat.q_bar(s, acts, use_target).mean())


def pearson(xs, ys):
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("pearson needs two equal-length sequences of length >= 2")
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = math.sqrt(float(dx @ dx)), math.sqrt(float(dy @ dy))
    if sx == 0 or sy == 0:
        raise UndefinedCorrelationError("correlation is undefined for constant input")
    return float(np.clip((dx @ dy) / (sx * sy), -1.0, 1.0))


@dataclass
class OpeReport:
    eta: float
    names: list
    estimates: list
    actual: list
    correlation: float
    seed: int
    all_states: bool = False
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def csv_rows(self):
        rows = [["policy", "estimate", "actual"]]
        rows += [[n, repr(e), repr(a)] for n, e, a in zip(self.names, self.estimates, self.actual)]
        return rows


def ope_benchmark(dataset, env, policies, config, episodes=20, bank_size=8,
                  all_states=False, etas=(0.0, 1.0), select_N=None):
    """Score ``policies`` (a list of ``(name, agent)``) with FQE at each ``eta``.

    Actual value: mean undiscounted return of ``episodes`` best-of-N rollouts.
    Estimates: ``ope_score`` of an FQE ensemble fitted to the same deployment
    policy, whose actions come from a per-policy ``ActionBank``. Returns one
    ``OpeReport`` per entry of ``etas``. Every policy sees the same rollout,
    bank and scoring streams (common random numbers), so identical policies
    get identical numbers.
    """
    if len(policies) < 2:
        raise ValueError("need at least two policies to correlate")
    N = select_N if select_N is not None else config.N
    names, actual, banks = [], [], []
    for name, agent in policies:
        dep = agent.deployment(N)
        names.append(name)
        actual.append(float(np.mean(evaluate(env, dep, episodes, config.seed, "ope", 100))))
        banks.append(ActionBank(dep.batch, dataset, bank_size, substream(config.seed, "ope", 200)))
    reports = []
    for eta in etas:
        cfg = replace(config, eta=float(eta))
        est = []
        for bank in banks:
            q = fqe(dataset, bank, cfg)
            est.append(ope_score(q, bank, dataset, cfg.N, substream(cfg.seed, "ope", 300),
                                 all_states))
        reports.append(OpeReport(float(eta), list(names), est, list(actual), pearson(est, actual),
                                 cfg.seed, all_states,
                                 {"episodes": episodes, "bank_size": bank_size, "steps": cfg.steps}))
    return reports
