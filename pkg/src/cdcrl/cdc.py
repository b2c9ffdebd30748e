"""Doubly constrained actor-critic trainer.

One training step:

1. sample a minibatch ``(s, a, r, s')`` from the dataset;
2. EMaQ target ``y = r + gamma * (1 - terminal) * max_k qbar_target(s', a'_k)``
   with ``a'_k ~ pi(.|s')``; truncated transitions still bootstrap;
3. for each member ``j``, one Adam step on
   ``mean((Q_j(s, a) - y)^2 + eta * Delta_j(s, a))`` where
   ``Delta_j = relu(max_k Q_j(s, ahat_k) - Q_j(s, a))^2`` and the candidate
   set ``ahat_k ~ pi(.|s)`` is shared by every member;
4. one Adam ascent step on ``mean(qbar_online(s, ahat)) + lambda * mean(log pi(a|s))``
   with a fresh reparameterised ``ahat``;
5. Polyak averaging of the target nets.
"""

import math
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .agent import Agent, combine, polyak_update
from .dataset import sample_minibatch
from .envs import evaluate
from .errors import ConfigError, NumericError, ShapeError
from .numerics import adam_step, clip_grad_norm
from .seeding import substream

# config ------------------------------------------------------------------

# file key -> attribute
KEY_MAP = {
    "eta": "eta", "lambda": "lam", "nu": "nu", "N": "N", "M": "M", "gamma": "gamma",
    "tau": "tau", "batch_size": "batch_size", "actor_lr": "actor_lr", "critic_lr": "critic_lr",
    "total_steps": "total_steps", "seed": "seed",
}
OPTIONAL_KEYS = {
    "hidden": "hidden", "log_interval": "log_interval", "eval_interval": "eval_interval",
    "eval_episodes": "eval_episodes", "grad_clip": "grad_clip",
}


@dataclass(frozen=True)
class CdcConfig:
    eta: float = 1.0
    lam: float = 0.5
    nu: float = 0.75
    N: int = 15
    M: int = 4
    gamma: float = 0.99
    tau: float = 0.005
    batch_size: int = 256
    actor_lr: float = 3e-4
    critic_lr: float = 7e-4
    total_steps: int = 20000
    seed: int = 0
    hidden: tuple = (256, 256, 256, 256)
    log_interval: int = 100
    eval_interval: int = 1000
    eval_episodes: int = 10
    grad_clip: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        checks = [
            ("eta", self.eta >= 0), ("lambda", self.lam >= 0), ("nu", 0 < self.nu < 1),
            ("N", self.N >= 1), ("M", self.M >= 1), ("gamma", 0 <= self.gamma < 1),
            ("tau", 0 < self.tau <= 1), ("batch_size", self.batch_size >= 1),
            ("actor_lr", self.actor_lr > 0), ("critic_lr", self.critic_lr > 0),
            ("total_steps", self.total_steps >= 0), ("log_interval", self.log_interval >= 1),
            ("eval_interval", self.eval_interval >= 1), ("eval_episodes", self.eval_episodes >= 1),
            ("grad_clip", self.grad_clip > 0), ("hidden", all(h > 0 for h in self.hidden)),
        ]
        for key, ok in checks:
            if not ok:
                raise ConfigError(f"config value out of range: {key}", key=key)

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


def _parse_value(kind, text, key):
    try:
        if kind is tuple:
            return tuple(int(x) for x in text.split(",") if x.strip())
        return kind(text)
    except ValueError:
        raise ConfigError(f"cannot parse value for key {key!r}: {text!r}", key=key) from None


def parse_config(text, required=KEY_MAP, optional=OPTIONAL_KEYS, cls=CdcConfig):
    """Parse ``key = value`` lines. Every required key must appear exactly once.

    Values are converted to the type annotated on the matching field of ``cls``.
    """
    kinds = {f.name: f.type for f in fields(cls)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value")
        key, val = (p.strip() for p in line.split("=", 1))
        attr = required.get(key) or optional.get(key)
        if attr is None:
            raise ConfigError(f"unknown config key {key!r}", key=key)
        if attr in values:
            raise ConfigError(f"duplicate config key {key!r}", key=key)
        values[attr] = _parse_value(kinds[attr], val, key)
    for key, attr in required.items():
        if attr not in values:
            raise ConfigError(f"missing config key {key!r}", key=key)
    return cls(**values)


def format_config(cfg, required=KEY_MAP, optional=OPTIONAL_KEYS):
    lines = []
    for key, attr in {**required, **optional}.items():
        v = getattr(cfg, attr)
        lines.append(f"{key} = {','.join(map(str, v)) if attr == 'hidden' else repr(v)}")
    return "\n".join(lines) + "\n"


def load_config(path, **kw):
    with open(path) as fh:
        return parse_config(fh.read(), **kw)


def save_config(cfg, path, **kw):
    with open(path, "w") as fh:
        fh.write(format_config(cfg, **kw))


# penalised critic ----------------------------------------------------------

def emaq_target(batch, ensemble, policy, gamma, N, rng):
    """Max over ``N`` policy samples at ``s'`` of the target-net ``qbar``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    y = np.array(batch.rewards, dtype=np.float64)
    if gamma == 0:
        return y
    cand, _ = policy.sample(batch.next_states, N, rng)
    best = combine(ensemble.values(batch.next_states, cand, use_target=True), ensemble.nu).max(axis=1)
    live = ~np.asarray(batch.terminals, dtype=bool)
    y[live] += gamma * best[live]
    return y


def delta_penalty(net, s, a, sampled_actions):
    """Per-row ``relu(max_k Q(s, ahat_k) - Q(s, a))^2`` for one critic net.

    ``s`` is ``(B, dS)`` (or 1-D for a single state), ``a`` is ``(B, dA)`` and
    ``sampled_actions`` is ``(B, n, dA)``.
    """
    single = np.ndim(s) == 1
    s, a, cand = _delta_inputs(s, a, sampled_actions)
    B, n, _ = cand.shape
    q_sa = net.forward(np.concatenate([s, a], axis=1))[:, 0]
    q_c = net.forward(np.concatenate([np.repeat(s, n, axis=0), cand.reshape(B * n, -1)], axis=1))
    gap = np.maximum(q_c[:, 0].reshape(B, n).max(axis=1) - q_sa, 0.0)
    out = gap * gap
    return float(out[0]) if single else out


def _delta_inputs(s, a, cand):
    s = np.asarray(s, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    cand = np.asarray(cand, dtype=np.float64)
    if s.ndim == 1:
        s, a = s[None, :], a[None, :]
        cand = cand[None] if cand.ndim == 2 else cand
    if cand.ndim != 3 or cand.shape[0] != s.shape[0] or cand.shape[1] < 1:
        raise ShapeError("sampled_actions must be (B, n >= 1, dA)")
    return s, a, cand


def critic_loss_grads(net, s, a, y, cand, eta):
    """Loss ``mean((Q(s,a) - y)^2 + eta * Delta(s,a))`` and its exact gradient.

    The gradient of ``Delta`` is ``2 * gap * (dQ(s, a*) - dQ(s, a))`` with
    ``a*`` the best candidate (lowest index on ties), zero where the gap is
    non-positive. ``y`` is a constant. Returns ``(loss, grads, stats)``.
    """
    B = s.shape[0]
    x_sa = np.concatenate([s, a], axis=1)
    rows = [x_sa]
    star = None
    if eta > 0:
        n = cand.shape[1]
        q_c = net.forward(np.concatenate([np.repeat(s, n, axis=0), cand.reshape(B * n, -1)], axis=1))
        star = np.argmax(q_c[:, 0].reshape(B, n), axis=1)
        rows.append(np.concatenate([s, cand[np.arange(B), star]], axis=1))
    out, cache = net.forward_cache(np.concatenate(rows, axis=0) if len(rows) > 1 else x_sa)
    q = out[:, 0]
    q_sa = q[:B]
    td = q_sa - y
    td_loss = float(np.mean(td * td))
    up = np.zeros_like(q)
    up[:B] = 2.0 * td / B
    pen = 0.0
    if eta > 0:
        gap = np.maximum(q[B:] - q_sa, 0.0)
        pen = float(np.mean(gap * gap))
        up[:B] -= 2.0 * eta * gap / B
        up[B:] = 2.0 * eta * gap / B
    grads, _ = net.backward_cache(cache, up[:, None])
    stats = {"td_loss": td_loss, "delta": pen, "q": q_sa}
    return td_loss + eta * pen, grads, stats


def critic_update(ensemble, opts, s, a, y, cand, eta, lr, grad_clip, step=None):
    """One Adam step per member on the penalised TD loss; returns summary stats."""
    td, pen, qs = [], [], []
    for j, (net, opt) in enumerate(zip(ensemble.online, opts)):
        loss, grads, st = critic_loss_grads(net, s, a, y, cand, eta)
        if not math.isfinite(loss):
            raise NumericError(f"non-finite critic loss (member {j})", step=step)
        clip_grad_norm(grads, grad_clip)
        try:
            adam_step(net.params, grads, opt, lr)
        except NumericError as exc:
            exc.step = step
            raise
        td.append(st["td_loss"])
        pen.append(st["delta"])
        qs.append(st["q"])
    qs = np.stack(qs)
    return {"td_loss": float(np.mean(td)), "delta_penalty": float(np.mean(pen)),
            "mean_q": float(qs.mean()), "max_q": float(qs.max()),
            "max_abs_q": float(np.abs(qs).max())}


def value_update(config, batch, agent, rng, step=None):
    """EMaQ target plus penalised regression for every ensemble member."""
    ens, pol = agent.ensemble, agent.policy
    y = emaq_target(batch, ens, pol, config.gamma, config.N, rng)
    cand = pol.sample(batch.states, config.N, rng)[0] if config.eta > 0 else None
    return critic_update(ens, agent.critic_opts, batch.states, batch.actions, y, cand,
                         config.eta, config.critic_lr, config.grad_clip, step)


# policy --------------------------------------------------------------------

def qbar_action_grad(ensemble, s, a):
    """``qbar_online(s, a)`` and its gradient in ``a`` (critic params fixed)."""
    x = np.concatenate([s, a], axis=1)
    outs, caches = [], []
    for net in ensemble.online:
        o, c = net.forward_cache(x)
        outs.append(o[:, 0])
        caches.append(c)
    vals = np.stack(outs)
    rows = np.arange(x.shape[0])
    lo, hi = np.argmin(vals, axis=0), np.argmax(vals, axis=0)
    nu = ensemble.nu
    qbar = nu * vals[lo, rows] + (1.0 - nu) * vals[hi, rows]
    dS = s.shape[1]
    da = np.zeros_like(a)
    for j, (net, c) in enumerate(zip(ensemble.online, caches)):
        w = nu * (lo == j) + (1.0 - nu) * (hi == j)
        if not w.any():
            continue
        dx = _input_grad(net, c, w)
        da += dx[:, dS:]
    return qbar, da


def _input_grad(net, cache, upstream):
    inputs, _ = cache
    g = upstream[:, None]
    for i in range(len(net.weights) - 1, -1, -1):
        g = g @ net.weights[i].T
        if i > 0:
            g = g * (inputs[i] > 0.0)
    return g


def policy_objective(config, batch, agent, eps):
    """Objective value, log-likelihood and parameter gradients of ``-objective``."""
    pol, ens = agent.policy, agent.ensemble
    s = batch.states
    B = s.shape[0]
    mu, log_std = pol.distribution(s)
    a_hat = np.tanh(mu + np.exp(log_std) * eps[:, 0, :])
    qbar, da = qbar_action_grad(ens, s, a_hat)
    lam = config.lam
    grads, lp = pol.objective_grads(s, eps, -da[:, None, :] / B, batch.actions,
                                    np.full(B, -lam / B))
    obj = float(np.mean(qbar) + lam * np.mean(lp))
    return obj, float(np.mean(lp)), grads


def policy_update(config, batch, agent, rng, step=None):
    """One reparameterised ascent step for the policy; critics are untouched."""
    pol = agent.policy
    eps = rng.standard_normal((len(batch), 1, pol.action_dim))
    obj, mean_lp, grads = policy_objective(config, batch, agent, eps)
    if not math.isfinite(obj):
        raise NumericError("non-finite policy objective", step=step)
    clip_grad_norm(grads, config.grad_clip)
    try:
        adam_step(pol.params, grads, agent.policy_opt, config.actor_lr)
    except NumericError as exc:
        exc.step = step
        raise
    return {"policy_obj": obj, "mean_logpi": mean_lp}


# training loop ---------------------------------------------------------------

@dataclass
class TrainRecord:
    step: int
    td_loss: float
    delta_penalty: float
    policy_obj: float
    mean_q: float
    max_q: float
    mean_logpi: float
    eval_return: float = None
    max_abs_q: float = 0.0

    CSV_FIELDS = ("step", "td_loss", "delta_penalty", "policy_obj", "mean_q", "max_q",
                  "mean_logpi", "eval_return")

    def csv_row(self):
        out = []
        for f in self.CSV_FIELDS:
            v = getattr(self, f)
            out.append("" if v is None else (str(v) if f == "step" else repr(float(v))))
        return out


CSV_HEADER = ",".join(TrainRecord.CSV_FIELDS)


def train_step(config, dataset, agent, batch_rng, policy_rng, step):
    batch = sample_minibatch(dataset, config.batch_size, batch_rng)
    v = value_update(config, batch, agent, policy_rng, step)
    p = policy_update(config, batch, agent, policy_rng, step)
    polyak_update(agent.ensemble, config.tau)
    return {**v, **p}


def train(config, dataset, env=None, on_record=None, agent=None):
    """Run ``config.total_steps`` steps. Returns ``(agent, records)``.

    Records are emitted every ``log_interval`` steps and average the step
    statistics over the interval (maxima are taken over it). With ``env``,
    the deployment policy is evaluated every ``eval_interval`` steps and at
    the final step. On a numeric failure the raised ``NumericError`` carries
    ``step``, ``records`` and ``last_record``.
    """
    dims = (dataset.state_dim, dataset.action_dim)
    if agent is not None and (agent.state_dim, agent.action_dim) != dims:
        raise ShapeError("agent dimensions do not match the dataset")
    if env is not None and (env.spec.state_dim, env.spec.action_dim) != dims:
        raise ShapeError("environment dimensions do not match the dataset")
    if agent is None:
        agent = Agent.create(dataset.state_dim, dataset.action_dim, config.M, config.nu,
                             config.hidden, config.seed)
    batch_rng = substream(config.seed, "batch")
    policy_rng = substream(config.seed, "policy")
    records, window = [], []
    for step in range(1, config.total_steps + 1):
        try:
            window.append(train_step(config, dataset, agent, batch_rng, policy_rng, step))
        except NumericError as exc:
            exc.step = step
            exc.records = records
            exc.last_record = records[-1] if records else None
            raise
        if step % config.log_interval == 0:
            rec = _summarise(step, window)
            window = []
            if env is not None and (step % config.eval_interval == 0 or step == config.total_steps):
                rets = evaluate(env, agent.deployment(config.N), config.eval_episodes,
                                config.seed, "eval", step)
                rec.eval_return = float(np.mean(rets))
            records.append(rec)
            if on_record is not None:
                on_record(rec)
    return agent, records


def _summarise(step, window):
    mean = lambda k: float(np.mean([w[k] for w in window]))
    return TrainRecord(step=step, td_loss=mean("td_loss"), delta_penalty=mean("delta_penalty"),
                       policy_obj=mean("policy_obj"), mean_q=mean("mean_q"),
                       max_q=float(max(w["max_q"] for w in window)),
                       mean_logpi=mean("mean_logpi"),
                       max_abs_q=float(max(w["max_abs_q"] for w in window)))


# ablation ------------------------------------------------------------------

ABLATION_VARIANTS = ("lambda=0 & eta=0", "eta=0", "lambda=0", "CDC")


@dataclass
class AblationRun:
    name: str
    config: CdcConfig
    agent: Agent
    records: list
    final_return: float
    final_max_abs_q: float


def ablation_configs(base):
    eta, lam = base.eta, base.lam
    return [replace(base, eta=0.0, lam=0.0), replace(base, eta=0.0, lam=lam),
            replace(base, eta=eta, lam=0.0), replace(base, eta=eta, lam=lam)]


def ablation_grid(dataset, base_config, env=None, on_run=None):
    """Train the four penalty on/off variants with identical seeds.

    Returns ``(runs, report_rows)``; each row is a dict with the variant
    name, its ``eta``/``lambda``, final evaluation return and final max |Q|,
    plus the max-Q trajectory.
    """
    runs, rows = [], []
    for name, cfg in zip(ABLATION_VARIANTS, ablation_configs(base_config)):
        agent, recs = train(cfg, dataset, env)
        final = recs[-1] if recs else None
        run = AblationRun(name, cfg, agent, recs,
                          final.eval_return if final and final.eval_return is not None else float("nan"),
                          final.max_abs_q if final else float("nan"))
        runs.append(run)
        rows.append({"variant": name, "eta": cfg.eta, "lambda": cfg.lam,
                     "final_return": run.final_return, "final_max_abs_q": run.final_max_abs_q,
                     "max_q_curve": [r.max_q for r in recs]})
        if on_run is not None:
            on_run(run)
    return runs, rows
