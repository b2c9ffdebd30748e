"""Dense MLPs with hand-written reverse mode, Adam, and finite-difference checks.

Everything runs in float64. Networks act on row batches: ``x`` of shape
``(batch, in_dim)`` (a single 1-D vector is accepted and treated as one row).
"""

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ShapeError

DEFAULT_HIDDEN = (256, 256, 256, 256)

def _affine(h, w, b):
    out = h @ w
    out += b
    return out


def tune_allocator():
    """Keep large numpy temporaries on the heap instead of fresh mmaps.

    Minibatch-by-candidate activations are a few MB each; with glibc's
    defaults every one of them is a new mapping and page-faults on first
    touch, which roughly doubles the cost of a forward pass. Results are
    unaffected. Returns True when the allocator accepted the settings.
    """
    import ctypes
    import ctypes.util

    name = ctypes.util.find_library("c")
    if not name:
        return False
    try:
        libc = ctypes.CDLL(name)
        m_trim, m_top_pad, m_mmap = -1, -2, -3
        return bool(libc.mallopt(m_mmap, 1 << 30) and libc.mallopt(m_trim, 1 << 30)
                    and libc.mallopt(m_top_pad, 64 << 20))
    except (OSError, AttributeError):
        return False


class DenseNet:
    """ReLU multilayer perceptron with an identity output layer.

    Parameters are stored as ``weights[i]`` of shape ``(fan_in, fan_out)``
    and ``biases[i]`` of shape ``(fan_out,)``; ``params`` lists them in the
    order W0, b0, W1, b1, ... and is the order used by every gradient list.
    """

    def __init__(self, layer_sizes, rng=None, weights=None, biases=None):
        sizes = tuple(int(n) for n in layer_sizes)
        if len(sizes) < 2 or any(n <= 0 for n in sizes):
            raise ShapeError(f"layer sizes must be >= 2 positive ints, got {layer_sizes}")
        self.layer_sizes = sizes
        if weights is None:
            if rng is None:
                raise ValueError("need an rng to initialise weights")
            weights, biases = [], []
            for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
                bound = 1.0 / np.sqrt(fan_in)
                weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
                biases.append(rng.uniform(-bound, bound, size=fan_out))
        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        self.biases = [np.array(b, dtype=np.float64) for b in biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
                raise ShapeError(f"layer {i}: weight {w.shape} / bias {b.shape} do not chain")

    @property
    def in_dim(self):
        return self.layer_sizes[0]

    @property
    def out_dim(self):
        return self.layer_sizes[-1]

    @property
    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self):
        return DenseNet(self.layer_sizes, weights=self.weights, biases=self.biases)

    def load_params(self, params):
        for dst, src in zip(self.params, params):
            dst[...] = src

    def _as_batch(self, x):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"expected input of width {self.in_dim}, got shape {x.shape}")
        return x, single

    def forward(self, x):
        x, single = self._as_batch(x)
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = _affine(h, w, b)
            if i < last:
                np.maximum(h, 0.0, out=h)
        return h[0] if single else h

    def forward_cache(self, x):
        """Forward pass that also returns the layer inputs needed by backward."""
        x, single = self._as_batch(x)
        inputs = []
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            h = _affine(h, w, b)
            if i < last:
                h = np.maximum(h, 0.0)
        return (h[0] if single else h), (inputs, single)

    def backward_cache(self, cache, upstream):
        """Gradients of ``sum(upstream * forward(x))`` from a cached forward.

        Returns ``(grads, dx)`` with ``grads`` aligned with ``params``.
        """
        inputs, single = cache
        g = np.asarray(upstream, dtype=np.float64)
        if single:
            g = g[None, :]
        if g.shape != (inputs[0].shape[0], self.out_dim):
            raise ShapeError(f"upstream shape {g.shape} does not match output")
        grads = [None] * (2 * len(self.weights))
        for i in range(len(self.weights) - 1, -1, -1):
            h_in = inputs[i]
            grads[2 * i] = h_in.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.weights[i].T
            if i > 0:
                # h_in is the post-ReLU activation of layer i-1
                g = g * (h_in > 0.0)
        dx = g[0] if single else g
        return grads, dx

    def backward(self, x, upstream):
        _, cache = self.forward_cache(x)
        return self.backward_cache(cache, upstream)


def forward(net, x):
    return net.forward(x)


def backward(net, x, upstream):
    return net.backward(x, upstream)


def param_hash(params):
    """Stable digest of a parameter list, for before/after comparisons."""
    import hashlib

    h = hashlib.sha256()
    for p in params:
        h.update(np.ascontiguousarray(p, dtype="<f8").tobytes())
    return h.hexdigest()


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, **kw):
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params], **kw)


def adam_step(params, grads, state, lr):
    """One bias-corrected Adam update, in place. Returns ``(params, state)``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("params, grads and Adam state have different lengths")
    for i, g in enumerate(grads):
        if g.shape != params[i].shape or state.m[i].shape != params[i].shape:
            raise ShapeError(f"param {i}: shape mismatch")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in layer {i // 2}", layer=i // 2)
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if lr:
            p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def clip_grad_norm(grads, max_norm):
    """Scale ``grads`` in place so their joint L2 norm is at most ``max_norm``."""
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if max_norm is not None and total > max_norm > 0:
        scale = max_norm / total
        for g in grads:
            g *= scale
    return total


def relative_error(a, n):
    a, n = float(a), float(n)
    if abs(a) < 1e-12 and abs(n) < 1e-12:
        return 0.0
    return abs(a - n) / max(abs(a), abs(n), 1e-8)


def grad_check(f, params, h=1e-5, probes=None, rng=None):
    """Worst relative error between analytic and central-difference gradients.

    ``f(params)`` must return ``(value, grads)`` where ``grads`` mirrors
    ``params`` (a list of arrays, perturbed in place). With ``probes`` set,
    only that many random coordinates are checked; otherwise all of them.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    params = [p if isinstance(p, np.ndarray) else np.asarray(p, dtype=np.float64) for p in params]
    _, analytic = f(params)
    coords = [(i, j) for i, p in enumerate(params) for j in range(p.size)]
    if probes is not None and probes < len(coords):
        rng = rng if rng is not None else np.random.default_rng(0)
        pick = rng.choice(len(coords), size=probes, replace=False)
        coords = [coords[k] for k in pick]
    worst = 0.0
    for i, j in coords:
        flat = params[i].reshape(-1)
        old = flat[j]
        flat[j] = old + h
        up, _ = f(params)
        flat[j] = old - h
        down, _ = f(params)
        flat[j] = old
        numeric = (up - down) / (2.0 * h)
        worst = max(worst, relative_error(np.asarray(analytic[i]).reshape(-1)[j], numeric))
    return worst
