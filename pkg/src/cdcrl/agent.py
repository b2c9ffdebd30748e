"""Policy, critic ensemble, target averaging, deployment selection, checkpoints.

Shapes: states ``(B, dS)``; a single action per state ``(B, dA)``; ``n``
candidate actions per state ``(B, n, dA)``. Ensemble values are returned
stacked along a leading member axis, ``(M, B)`` or ``(M, B, n)``.
"""

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ShapeError
from .numerics import DEFAULT_HIDDEN, AdamState, DenseNet
from .seeding import substream

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
ACTION_CLAMP = 1.0 - 1e-6
_LOG_2PI = np.log(2.0 * np.pi)


def _atleast_2d(x, width, what):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != width:
        raise ShapeError(f"{what}: expected width {width}, got shape {x.shape}")
    return x


class GaussianPolicy:
    """Tanh-squashed diagonal Gaussian; the net emits ``[mu, log_std]``."""

    def __init__(self, net, action_dim, log_std_min=LOG_STD_MIN, log_std_max=LOG_STD_MAX):
        if net.out_dim != 2 * action_dim:
            raise ShapeError("policy net output must be 2 * action_dim")
        self.net = net
        self.state_dim = net.in_dim
        self.action_dim = action_dim
        self.log_std_min = float(log_std_min)
        self.log_std_max = float(log_std_max)

    @classmethod
    def create(cls, state_dim, action_dim, hidden, rng):
        return cls(DenseNet((state_dim, *hidden, 2 * action_dim), rng), action_dim)

    @property
    def params(self):
        return self.net.params

    def copy(self):
        return GaussianPolicy(self.net.copy(), self.action_dim, self.log_std_min, self.log_std_max)

    def _heads(self, out):
        d = self.action_dim
        mu = out[:, :d]
        raw = out[:, d:]
        log_std = np.clip(raw, self.log_std_min, self.log_std_max)
        inside = (raw >= self.log_std_min) & (raw <= self.log_std_max)
        return mu, log_std, inside

    def distribution(self, s):
        s = _atleast_2d(s, self.state_dim, "state")
        mu, log_std, _ = self._heads(self.net.forward(s))
        return mu, log_std

    def sample(self, s, n, rng):
        """Draw ``n`` actions per state. Returns ``(actions, eps)``, both ``(B, n, dA)``."""
        if n < 1:
            raise ValueError("n must be >= 1")
        mu, log_std = self.distribution(s)
        eps = rng.standard_normal((mu.shape[0], n, self.action_dim))
        return np.tanh(mu[:, None, :] + np.exp(log_std)[:, None, :] * eps), eps

    def log_prob(self, s, a):
        s = _atleast_2d(s, self.state_dim, "state")
        a = _atleast_2d(a, self.action_dim, "action")
        mu, log_std = self.distribution(s)
        return self._log_prob(mu, log_std, a)[0]

    def _log_prob(self, mu, log_std, a):
        a = np.clip(a, -ACTION_CLAMP, ACTION_CLAMP)
        u = np.arctanh(a)
        z = (u - mu) * np.exp(-log_std)
        lp = (-0.5 * z * z - log_std - 0.5 * _LOG_2PI).sum(axis=1)
        lp -= np.log1p(-a * a).sum(axis=1)
        return lp, z

    def objective_grads(self, s, eps, d_actions, a_data, d_logp):
        """Parameter gradients of a reparameterised objective.

        The objective is ``sum(d_actions * tanh(mu + sigma*eps)) +
        sum(d_logp * log_prob(s, a_data))``; ``eps`` has shape ``(B, n, dA)``
        and ``d_actions`` matches it. Either term may be ``None``.
        Returns ``(grads, log_prob_values)``.
        """
        s = _atleast_2d(s, self.state_dim, "state")
        out, cache = self.net.forward_cache(s)
        mu, log_std, inside = self._heads(out)
        d_mu = np.zeros_like(mu)
        d_ls = np.zeros_like(log_std)
        lp = None
        if d_actions is not None:
            std = np.exp(log_std)[:, None, :]
            act = np.tanh(mu[:, None, :] + std * eps)
            g = d_actions * (1.0 - act * act)
            d_mu += g.sum(axis=1)
            d_ls += (g * std * eps).sum(axis=1)
        if a_data is not None:
            lp, z = self._log_prob(mu, log_std, _atleast_2d(a_data, self.action_dim, "action"))
            w = np.asarray(d_logp, dtype=np.float64).reshape(-1, 1)
            d_mu += w * z * np.exp(-log_std)
            d_ls += w * (z * z - 1.0)
        d_ls *= inside
        grads, _ = self.net.backward_cache(cache, np.concatenate([d_mu, d_ls], axis=1))
        return grads, lp


def policy_sample(policy, s, n, rng):
    return policy.sample(s, n, rng)


def policy_log_prob(policy, s, a):
    lp = policy.log_prob(s, a)
    return float(lp[0]) if np.ndim(s) == 1 else lp


def combine(values, nu):
    """``nu * min + (1 - nu) * max`` over the leading member axis."""
    return nu * values.min(axis=0) + (1.0 - nu) * values.max(axis=0)


class QEnsemble:
    def __init__(self, online, target, nu):
        if len(online) < 1 or len(online) != len(target):
            raise ShapeError("need M >= 1 online nets and as many targets")
        if any(o.layer_sizes != t.layer_sizes for o, t in zip(online, target)):
            raise ShapeError("online and target architectures differ")
        if not 0.0 <= nu <= 1.0:
            raise ValueError("nu must lie in [0, 1]")
        self.online = list(online)
        self.target = list(target)
        self.nu = float(nu)
        self.input_dim = online[0].in_dim

    @classmethod
    def create(cls, state_dim, action_dim, M, nu, hidden, rng):
        online = [DenseNet((state_dim + action_dim, *hidden, 1), rng) for _ in range(M)]
        return cls(online, [n.copy() for n in online], nu)

    @property
    def M(self):
        return len(self.online)

    def copy(self):
        return QEnsemble([n.copy() for n in self.online], [n.copy() for n in self.target], self.nu)

    def member_inputs(self, s, a):
        """Stack ``(s, a)`` rows; ``a`` may carry a candidate axis."""
        s = np.asarray(s, dtype=np.float64)
        a = np.asarray(a, dtype=np.float64)
        if a.ndim == 3:
            B, n, dA = a.shape
            x = np.concatenate([np.repeat(s, n, axis=0), a.reshape(B * n, dA)], axis=1)
            return x, (B, n)
        return np.concatenate([s, a], axis=1), (s.shape[0],)

    def values(self, s, a, use_target=False):
        x, shape = self.member_inputs(s, a)
        nets = self.target if use_target else self.online
        return np.stack([net.forward(x)[:, 0].reshape(shape) for net in nets])

    def q_bar(self, s, a, use_target=False):
        return combine(self.values(s, a, use_target), self.nu)


def q_bar(ensemble, s, a, use_target=False):
    single = np.ndim(s) == 1
    if single:
        s, a = np.asarray(s)[None, :], np.asarray(a)[None, :]
    out = ensemble.q_bar(s, a, use_target)
    return float(out[0]) if single else out


def polyak_update(ensemble, tau):
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    for on, tg in zip(ensemble.online, ensemble.target):
        for p, q in zip(on.params, tg.params):
            q *= 1.0 - tau
            q += tau * p


def select_actions(policy, ensemble, states, N, rng):
    """Batched deployment selection: best of ``N`` samples under online ``q_bar``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    states = _atleast_2d(states, policy.state_dim, "state")
    cand, _ = policy.sample(states, N, rng)
    if N == 1:
        return cand[:, 0]
    best = np.argmax(ensemble.q_bar(states, cand), axis=1)  # first index on ties
    return cand[np.arange(states.shape[0]), best]


def select_action(policy, ensemble, s, N, rng):
    return select_actions(policy, ensemble, np.asarray(s)[None, :], N, rng)[0]


@dataclass
class Agent:
    policy: GaussianPolicy
    ensemble: QEnsemble
    policy_opt: AdamState = None
    critic_opts: list = None

    def __post_init__(self):
        if self.policy_opt is None:
            self.policy_opt = AdamState.for_params(self.policy.params)
        if self.critic_opts is None:
            self.critic_opts = [AdamState.for_params(n.params) for n in self.ensemble.online]

    @classmethod
    def create(cls, state_dim, action_dim, M=4, nu=0.75, hidden=DEFAULT_HIDDEN, seed=0):
        rng = substream(seed, "init")
        policy = GaussianPolicy.create(state_dim, action_dim, hidden, rng)
        ensemble = QEnsemble.create(state_dim, action_dim, M, nu, hidden, rng)
        return cls(policy, ensemble)

    @property
    def state_dim(self):
        return self.policy.state_dim

    @property
    def action_dim(self):
        return self.policy.action_dim

    def deployment(self, N):
        return DeploymentPolicy(self.policy, self.ensemble, N)


class DeploymentPolicy:
    """Callable ``(state, rng) -> action`` implementing best-of-N selection."""

    def __init__(self, policy, ensemble, N):
        self.policy, self.ensemble, self.N = policy, ensemble, int(N)

    def __call__(self, state, rng):
        return select_action(self.policy, self.ensemble, state, self.N, rng)

    def batch(self, states, rng):
        return select_actions(self.policy, self.ensemble, states, self.N, rng)


# checkpoint format ---------------------------------------------------------

CKPT_MAGIC = b"CDCA"
CKPT_VERSION = 1


def checkpoint_bytes(agent):
    pol, ens = agent.policy, agent.ensemble
    psizes, qsizes = pol.net.layer_sizes, ens.online[0].layer_sizes
    head = CKPT_MAGIC + struct.pack("<IIII", CKPT_VERSION, pol.state_dim, pol.action_dim, ens.M)
    head += struct.pack("<ddd", ens.nu, pol.log_std_min, pol.log_std_max)
    head += struct.pack("<I", len(psizes)) + struct.pack(f"<{len(psizes)}I", *psizes)
    head += struct.pack("<I", len(qsizes)) + struct.pack(f"<{len(qsizes)}I", *qsizes)
    arrays = list(pol.params)
    for net in ens.online + ens.target:
        arrays.extend(net.params)
    payload = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in arrays)
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return head + payload + digest


def _param_shapes(sizes):
    out = []
    for a, b in zip(sizes[:-1], sizes[1:]):
        out.extend(((a, b), (b,)))
    return out


def agent_from_bytes(buf):
    buf = bytes(buf)
    if len(buf) < 48 or buf[:4] != CKPT_MAGIC:
        raise FormatError("bad magic: not a CDCA checkpoint")
    version, dS, dA, M = struct.unpack_from("<IIII", buf, 4)
    if version != CKPT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    nu, lo, hi = struct.unpack_from("<ddd", buf, 20)
    off = 44
    sizes = []
    for _ in range(2):
        (k,) = struct.unpack_from("<I", buf, off)
        off += 4
        if k < 2 or len(buf) < off + 4 * k:
            raise FormatError("corrupt layer table")
        sizes.append(struct.unpack_from(f"<{k}I", buf, off))
        off += 4 * k
    psizes, qsizes = sizes
    if psizes[0] != dS or psizes[-1] != 2 * dA or qsizes[0] != dS + dA or qsizes[-1] != 1:
        raise FormatError("layer table inconsistent with dimensions")
    pshapes, qshapes = _param_shapes(psizes), _param_shapes(qsizes)
    count = sum(int(np.prod(s)) for s in pshapes) + 2 * M * sum(int(np.prod(s)) for s in qshapes)
    if len(buf) != off + 8 * count + 8:
        raise FormatError("checkpoint length does not match its header")
    payload = buf[off:off + 8 * count]
    if hashlib.blake2b(payload, digest_size=8).digest() != buf[off + 8 * count:]:
        raise FormatError("checkpoint checksum mismatch")
    flat = np.frombuffer(payload, dtype="<f8")
    pos = 0

    def net_from(sizes_, shapes):
        nonlocal pos
        arrs = []
        for shp in shapes:
            k = int(np.prod(shp))
            arrs.append(flat[pos:pos + k].reshape(shp).astype(np.float64))
            pos += k
        return DenseNet(sizes_, weights=arrs[0::2], biases=arrs[1::2])

    policy = GaussianPolicy(net_from(psizes, pshapes), dA, lo, hi)
    online = [net_from(qsizes, qshapes) for _ in range(M)]
    target = [net_from(qsizes, qshapes) for _ in range(M)]
    return Agent(policy, QEnsemble(online, target, nu))


def save_checkpoint(agent, path):
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(agent))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return agent_from_bytes(fh.read())
