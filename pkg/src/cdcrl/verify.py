"""Numerical checks of the method's theory on problems small enough to solve exactly.

* a tabular version of the CDC value/policy iteration and an empirical
  sup-norm contraction ratio;
* the partition approximator used to compare overestimation with and
  without the penalty, its closed-form expectation and a Monte Carlo
  simulation of the penalised update;
* closed-form KL-regularised policy optima against brute-force search.
"""

import itertools
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import SolverError
from .seeding import substream


# tabular MDPs ---------------------------------------------------------------

@dataclass
class TabularMdp:
    T: np.ndarray  # (nS, nA, nS)
    r: np.ndarray  # (nS, nA)
    gamma: float

    def __post_init__(self):
        self.T = np.asarray(self.T, dtype=np.float64)
        self.r = np.asarray(self.r, dtype=np.float64)
        nS, nA = self.r.shape
        if self.T.shape != (nS, nA, nS):
            raise ValueError("T must have shape (nS, nA, nS)")
        if np.any(self.T < 0) or np.max(np.abs(self.T.sum(axis=2) - 1.0)) > 1e-12:
            raise ValueError("transition rows must be probability vectors")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")

    @property
    def nS(self):
        return self.r.shape[0]

    @property
    def nA(self):
        return self.r.shape[1]

    @property
    def r_star(self):
        return float(np.max(np.abs(self.r)))


def random_mdp(rng, nS, nA, gamma):
    T = rng.dirichlet(np.ones(nS), size=(nS, nA))
    T /= T.sum(axis=2, keepdims=True)
    return TabularMdp(T, rng.uniform(-1.0, 1.0, size=(nS, nA)), gamma)


def policy_evaluation(mdp, pi):
    """Exact ``Q^pi`` for a tabular policy ``pi[s, a]`` via a linear solve."""
    nS, nA = mdp.nS, mdp.nA
    P = np.einsum("sat,tb->satb", mdp.T, pi).reshape(nS * nA, nS * nA)
    return np.linalg.solve(np.eye(nS * nA) - mdp.gamma * P, mdp.r.reshape(-1)).reshape(nS, nA)


def expected_max_of_draws(values, probs, N):
    """``E[max_k values[a_k]]`` for ``N`` i.i.d. ``a_k ~ probs``; row-wise."""
    values = np.atleast_2d(values)
    probs = np.atleast_2d(probs)
    order = np.argsort(values, axis=1, kind="stable")
    v = np.take_along_axis(values, order, axis=1)
    F = np.cumsum(np.take_along_axis(probs, order, axis=1), axis=1)
    F = np.minimum(F, 1.0)
    F[:, -1] = 1.0
    FN = F ** N
    w = np.diff(np.concatenate([np.zeros((FN.shape[0], 1)), FN], axis=1), axis=1)
    return (w * v).sum(axis=1)


def greedy_policy(q):
    pi = np.zeros_like(q)
    pi[np.arange(q.shape[0]), np.argmax(q, axis=1)] = 1.0
    return pi


def improve(q, behavior, lam):
    """Reverse-KL regularised improvement per state; greedy when ``lam == 0``."""
    if lam == 0:
        return greedy_policy(q)
    return np.stack([reverse_kl_optimum(q[s], behavior[s], lam)[0] for s in range(q.shape[0])])


def _penalised_fit(y, w, eta):
    """argmin_Q sum_a w_a [(Q_a - y_a)^2 + eta * (max(Q) - Q_a)^2] for one state.

    The solution has ``Q_a = min(m, (y_a + eta*m)/(1 + eta))`` where ``m``
    zeroes the increasing piecewise-linear
    ``h(m) = sum_{y>=m} w (m - y) + k sum_{y<m} w (m - y)``, ``k = eta/(1+eta)``.
    """
    if eta == 0:
        return y.copy()
    k = eta / (1.0 + eta)
    order = np.argsort(y)
    ys, ws = y[order], w[order]
    # on (ys[i-1], ys[i]] entries from index i up weigh 1, the rest k, so
    # h(m) = a_i m - b_i there; h is increasing and h(ys[-1]) >= 0
    suffix_w = np.cumsum(ws[::-1])[::-1]
    suffix_wy = np.cumsum((ws * ys)[::-1])[::-1]
    prefix_w = np.concatenate([[0.0], np.cumsum(ws)[:-1]])
    prefix_wy = np.concatenate([[0.0], np.cumsum(ws * ys)[:-1]])
    a = suffix_w + k * prefix_w
    b = suffix_wy + k * prefix_wy
    i = int(np.argmax(a * ys - b >= 0)) if np.any(a * ys - b >= 0) else ys.size - 1
    lo = ys[i - 1] if i > 0 else -np.inf
    m = float(np.clip(b[i] / a[i], lo, ys[i]))
    return np.minimum(m, (y + eta * m) / (1.0 + eta))


def cdc_operator_tabular(mdp, Q_table, eta, lam, N, nu, M=None, behavior=None, policy=None):
    """One exact CDC iteration on tables. Returns ``(Q_next (M, nS, nA), policy)``.

    ``Q_table`` is an ensemble ``(M, nS, nA)`` or one table ``(nS, nA)``.
    The backup uses ``qbar`` of the input ensemble, the policy from
    ``improve`` (or the one supplied, held fixed) and the exact expected
    max over ``N`` policy draws. Each member's table is then the exact
    minimiser of the behaviour-weighted TD plus ``eta``-penalty objective,
    with the penalty taken against the best action on the policy support,
    which here is every action.
    """
    Q = np.asarray(Q_table, dtype=np.float64)
    if Q.ndim == 2:
        Q = np.broadcast_to(Q, (M or 1, *Q.shape))
    M = Q.shape[0]
    nS, nA = mdp.nS, mdp.nA
    if Q.shape[1:] != (nS, nA):
        raise ValueError("Q table shape does not match the MDP")
    behavior = np.full((nS, nA), 1.0 / nA) if behavior is None else np.asarray(behavior)
    qbar = nu * Q.min(axis=0) + (1.0 - nu) * Q.max(axis=0)
    pi = improve(qbar, behavior, lam) if policy is None else np.asarray(policy)
    v = expected_max_of_draws(qbar, pi, N)
    y = mdp.r + mdp.gamma * mdp.T @ v
    out = np.stack([_penalised_fit(y[s], behavior[s], eta) for s in range(nS)])
    return np.broadcast_to(out, (M, nS, nA)).copy(), pi


def contraction_check(mdp, trials, rng, eta=1.0, lam=0.5, N=3, nu=0.75, M=2, scale=1.0):
    """Max over ``trials`` random pairs of ``||T Q1 - T Q2|| / ||qbar1 - qbar2||``.

    Both members of a pair are backed up with the same policy, the improved
    policy of the first input. Pairs at zero distance are skipped.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    worst = 0.0
    shape = (M, mdp.nS, mdp.nA)
    for _ in range(trials):
        q1 = rng.uniform(-scale, scale, size=shape)
        q2 = rng.uniform(-scale, scale, size=shape)
        b1 = nu * q1.min(axis=0) + (1 - nu) * q1.max(axis=0)
        b2 = nu * q2.min(axis=0) + (1 - nu) * q2.max(axis=0)
        d_in = np.max(np.abs(b1 - b2))
        if d_in == 0:
            continue
        t1, pi = cdc_operator_tabular(mdp, q1, eta, lam, N, nu)
        t2, _ = cdc_operator_tabular(mdp, q2, eta, lam, N, nu, policy=pi)
        o1 = nu * t1.min(axis=0) + (1 - nu) * t1.max(axis=0)
        o2 = nu * t2.min(axis=0) + (1 - nu) * t2.max(axis=0)
        worst = max(worst, float(np.max(np.abs(o1 - o2)) / d_in))
    return worst


# partition approximator -------------------------------------------------------

@dataclass
class PartitionApprox:
    """``Q(s, a) = V + q_i`` for ``a`` in cell ``i``; ``Q(s, a_ID) = Q_ID``."""

    q: np.ndarray
    V: float
    Q_ID: float
    alpha: float
    L1: float

    @property
    def m(self):
        return len(self.q)

    def value(self, cell=None):
        return self.Q_ID if cell is None else self.V + self.q[cell]

    def max_value(self):
        return max(self.Q_ID, self.V + float(np.max(self.q)))


def oe_max_expectation(L1, m, alpha, trials, rng, chunk=250_000):
    """Monte Carlo ``E[max{0, q_1 + alpha L1, ..., q_m + alpha L1}]``.

    Returns ``(mean, standard_error)``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    total = total_sq = 0.0
    done = 0
    while done < trials:
        n = min(chunk, trials - done)
        x = np.maximum(rng.uniform(-L1, L1, size=(n, m)).max(axis=1) + alpha * L1, 0.0)
        total += float(x.sum())
        total_sq += float((x * x).sum())
        done += n
    mean = total / trials
    var = max(total_sq / trials - mean * mean, 0.0) * trials / max(trials - 1, 1)
    return mean, math.sqrt(var / trials)


def oe_closed_form(L1, m, alpha):
    """``m L1 * integral_{(1-alpha)/2}^1 (2y - (1 - alpha)) y^(m-1) dy``."""
    if m < 1 or not 0.0 <= alpha < 1.0:
        raise ValueError("need m >= 1 and 0 <= alpha < 1")
    c = (1.0 - alpha) / 2.0
    return L1 * (2.0 * m * (1.0 - c ** (m + 1)) / (m + 1) - (1.0 - alpha) * (1.0 - c ** m))


def oe_closed_form_printed(L1, m, alpha):
    """The expanded expression as typeset alongside the integral.

    It differs from ``oe_closed_form`` by ``L1 c^(m+1) / (m+1)`` with
    ``c = (1 - alpha)/2`` (the tail term should carry a factor 2), so it
    gives 3/8 rather than 5/12 at ``m=2, alpha=0``. Kept for comparison.
    """
    c = (1.0 - alpha) / 2.0
    return m * L1 * (2.0 / (m + 1) - (1.0 - alpha) / m) + L1 * c ** (m + 1) / (m + 1)


@dataclass
class OeSimResult:
    cdc_mean: float
    cdc_se: float
    baseline_mean: float
    baseline_se: float
    diff_se: float
    conditions_ok: bool
    L2: float
    bound: float
    trial_fraction_ordered: float

    def to_dict(self):
        return asdict(self)


def oe_conditions(eta, mu, alpha, m):
    """The step-size and partition-count conditions for the ordering.

    ``mu < (1 - alpha)/(2 alpha eta)`` (no constraint when ``alpha eta == 0``)
    and ``m >= 1/(1/2 - 1/(1 + eta mu))``. The right side of the second is
    negative for ``eta mu < 1``, so any ``m`` passes there; at ``eta mu == 1``
    it is undefined and treated as failing.
    """
    if alpha * eta > 0 and not mu < (1.0 - alpha) / (2.0 * alpha * eta):
        return False
    denom = 0.5 - 1.0 / (1.0 + eta * mu)
    if denom == 0:
        return False
    return m >= 1.0 / denom


def oe_simulation(eta, mu, alpha, L1, m, trials, rng, C=0.0, chunk=200_000):
    """Overestimation of the max with and without one penalised gradient step.

    Each trial draws ``q_i ~ U[-L1, L1]`` and ``Q_ID ~ U[-alpha L1, alpha L1]``
    around the common true value ``C`` (``V = C``). The baseline error is
    ``max(Q_ID, V + q_i) - C``. The penalised estimate first takes the step
    ``theta -= mu*eta*(dQ(a_1) - dQ(a_ID)) * eps_+`` with
    ``eps_+ = max(0, max_i Q(a_i) - Q_ID)``: ``q_1`` and ``V`` each drop by
    ``mu eta eps_+`` and ``Q_ID`` rises by the same amount.
    """
    cdc_sum = cdc_sq = base_sum = base_sq = diff_sq = diff_sum = 0.0
    ordered = 0
    done = 0
    step = mu * eta
    while done < trials:
        n = min(chunk, trials - done)
        q = rng.uniform(-L1, L1, size=(n, m))
        qid = C + rng.uniform(-alpha * L1, alpha * L1, size=n)
        V = np.full(n, C)
        top = q.max(axis=1)
        base = np.maximum(qid, V + top) - C
        if step > 0:
            eps = np.maximum(0.0, V + top - qid)
            V2 = V - step * eps
            qid2 = qid + step * eps
            arg = q.argmax(axis=1)
            q2 = q.copy()
            q2[np.arange(n), arg] -= step * eps
            cdc = np.maximum(qid2, V2 + q2.max(axis=1)) - C
        else:
            cdc = base.copy()
        d = cdc - base
        cdc_sum += float(cdc.sum()); cdc_sq += float((cdc * cdc).sum())
        base_sum += float(base.sum()); base_sq += float((base * base).sum())
        diff_sum += float(d.sum()); diff_sq += float((d * d).sum())
        ordered += int(np.count_nonzero(d <= 0))
        done += n

    def stats(s, sq):
        mean = s / trials
        var = max(sq / trials - mean * mean, 0.0) * trials / max(trials - 1, 1)
        return mean, math.sqrt(var / trials)

    cm, cs = stats(cdc_sum, cdc_sq)
    bm, bs = stats(base_sum, base_sq)
    _, ds = stats(diff_sum, diff_sq)
    L2 = mu * (oe_closed_form(L1, m, alpha) - 2.0 * alpha * L1)
    return OeSimResult(cm, cs, bm, bs, ds, oe_conditions(eta, mu, alpha, m), L2,
                       L1 - eta * L2, ordered / trials)


def draw_ordering_params(rng):
    """One parameter set from the suite used to test the ordering.

    ``alpha ~ U[0, 0.2]``, ``eta`` log-uniform on ``[0.1, 10]``,
    ``eta*mu ~ U(0, 1)``, ``L1 ~ U[0.5, 2]``, ``m`` uniform on ``1..20``,
    redrawn until ``oe_conditions`` holds.
    """
    while True:
        alpha = rng.uniform(0.0, 0.2)
        eta = float(np.exp(rng.uniform(np.log(0.1), np.log(10.0))))
        mu = rng.uniform(0.0, 1.0) / eta
        L1 = rng.uniform(0.5, 2.0)
        m = int(rng.integers(1, 21))
        if mu > 0 and oe_conditions(eta, mu, alpha, m):
            return {"eta": eta, "mu": mu, "alpha": alpha, "L1": L1, "m": m}


# KL-regularised optima -------------------------------------------------------

def _bisect_decreasing(g, lo, hi, tol=1e-12, max_iter=400):
    """Root of a decreasing ``g`` on ``(lo, hi)``; ``hi`` grown until ``g(hi) < 0``."""
    width = max(1.0, abs(lo))
    grow = 0
    while g(hi) >= 0:
        hi = lo + 2.0 * (hi - lo)
        grow += 1
        if grow > 200 or not math.isfinite(hi):
            raise SolverError("could not bracket the normalising constant")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(width, abs(hi)):
            break
    return 0.5 * (lo + hi)


def forward_kl_optimum(q, pb, lam):
    """``pb * exp(q / lam) / Z``; ``Z`` found by bisection. Returns ``(pi, Z)``.

    ``Z`` is reported relative to ``exp(max(q) / lam)`` for stability.
    """
    q, pb = _check_simplex_inputs(q, pb, lam)
    tilt = pb * np.exp((q - q.max()) / lam)
    g = lambda z: float(tilt.sum() / z - 1.0)
    z = _bisect_decreasing(g, 0.0, 1.0)
    return tilt / z, z


def reverse_kl_optimum(q, pb, lam):
    """``pb / (Z - q / lam)`` with ``Z > max(q)/lam`` normalising. Returns ``(pi, Z)``."""
    q, pb = _check_simplex_inputs(q, pb, lam)
    with np.errstate(over="ignore"):
        u = q / lam
    if not np.all(np.isfinite(u)):
        raise SolverError("Q / lambda overflows; no normalising constant")
    lo = float(u.max())
    g = lambda z: float(np.sum(pb / (z - u)) - 1.0) if z > lo else math.inf
    z = _bisect_decreasing(g, lo, lo + 1.0)
    pi = pb / (z - u)
    if not np.all(np.isfinite(pi)) or np.any(pi <= 0):
        raise SolverError("reverse-KL optimum is degenerate for this Q/lambda")
    return pi, z


def _check_simplex_inputs(q, pb, lam):
    q = np.asarray(q, dtype=np.float64)
    pb = np.asarray(pb, dtype=np.float64)
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if q.shape != pb.shape or q.ndim != 1:
        raise ValueError("Q values and behaviour probabilities must be matching vectors")
    if np.any(pb <= 0) or abs(pb.sum() - 1.0) > 1e-9:
        raise ValueError("behaviour probabilities must be strictly positive and sum to 1")
    return q, pb


def kl_objective(pi, q, pb, lam, direction):
    if direction == "forward":
        return float(pi @ q - lam * np.sum(pi * (np.log(pi) - np.log(pb))))
    return float(pi @ q - lam * np.sum(pb * (np.log(pb) - np.log(pi))))


def _objective_grad(pi, q, pb, lam, direction):
    if direction == "forward":
        return q - lam * (np.log(pi) - np.log(pb) + 1.0)
    return q + lam * pb / pi


def project_simplex(v, floor=0.0):
    """Euclidean projection onto ``{x : x >= floor, sum x = 1}``."""
    n = v.size
    w = v - floor
    s = 1.0 - n * floor
    u = np.sort(w)[::-1]
    css = np.cumsum(u) - s
    rho = np.nonzero(u - css / np.arange(1, n + 1) > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(w - theta, 0.0) + floor


def simplex_grid(n, resolution):
    for comp in itertools.combinations(range(resolution + n - 1), n - 1):
        parts = np.diff(np.concatenate([[-1], comp, [resolution + n - 1]])) - 1
        yield parts / resolution


def brute_force_optimum(q, pb, lam, direction, grid_resolution=20, floor=1e-12,
                        max_iter=200_000, tol=1e-15):
    """Grid search over the simplex followed by projected-gradient ascent.

    Ascent uses Barzilai-Borwein steps with an Armijo backtracking safeguard
    and stops once an iterate moves less than ``tol`` in sup norm.
    """
    q, pb = _check_simplex_inputs(q, pb, lam)
    n = q.size
    best, best_val = None, -math.inf
    for p in simplex_grid(n, grid_resolution):
        p = np.maximum(p, 1e-3)
        p /= p.sum()
        val = kl_objective(p, q, pb, lam, direction)
        if val > best_val:
            best, best_val = p, val
    x = best
    fx = best_val
    gx = _objective_grad(x, q, pb, lam, direction)
    step = 1.0 / lam
    for _ in range(max_iter):
        while True:
            cand = project_simplex(x + step * gx, floor)
            fc = kl_objective(cand, q, pb, lam, direction)
            if fc >= fx + 1e-4 * gx @ (cand - x) or step < 1e-300:
                break
            step *= 0.5
        gc = _objective_grad(cand, q, pb, lam, direction)
        dx, dg = cand - x, gc - gx
        moved = float(np.max(np.abs(dx)))
        x, fx, gx = cand, fc, gc
        if moved < tol:
            break
        curv = -(dx @ dg)
        step = (dx @ dx) / curv if curv > 0 else 1.0 / lam
    return x


@dataclass
class KlCheckResult:
    forward_closed: np.ndarray
    reverse_closed: np.ndarray
    forward_brute: np.ndarray
    reverse_brute: np.ndarray
    forward_dev: float
    reverse_dev: float

    @property
    def max_dev(self):
        return max(self.forward_dev, self.reverse_dev)


def lemma1_check(q_values, behavior_probs, lam, grid_resolution=20):
    fc, _ = forward_kl_optimum(q_values, behavior_probs, lam)
    rc, _ = reverse_kl_optimum(q_values, behavior_probs, lam)
    fb = brute_force_optimum(q_values, behavior_probs, lam, "forward", grid_resolution)
    rb = brute_force_optimum(q_values, behavior_probs, lam, "reverse", grid_resolution)
    return KlCheckResult(fc, rc, fb, rb, float(np.max(np.abs(fc - fb))),
                        float(np.max(np.abs(rc - rb))))


def random_kl_instance(rng, max_actions=6):
    n = int(rng.integers(2, max_actions + 1))
    pb = rng.dirichlet(np.ones(n) * 2.0)
    pb = np.maximum(pb, 0.02)
    pb /= pb.sum()
    return rng.uniform(-1.0, 1.0, size=n), pb, float(rng.uniform(0.5, 5.0))


# the whole suite ---------------------------------------------------------------

def random_operator_params(rng):
    return {
        "eta": float(rng.choice([0.0, rng.uniform(0.1, 3.0)])),
        "lam": float(rng.choice([0.0, rng.uniform(0.1, 3.0)])),
        "N": int(rng.integers(1, 6)),
        "nu": float(rng.uniform(0.05, 0.95)),
        "M": int(rng.integers(1, 5)),
    }


def contraction_suite(seed, n_mdps=50, pairs=20, gammas=(0.5, 0.9, 0.99)):
    rng = substream(seed, "verify", 1)
    rows = []
    for i in range(n_mdps):
        gamma = gammas[i % len(gammas)]
        mdp = random_mdp(rng, int(rng.integers(2, 11)), int(rng.integers(2, 6)), gamma)
        p = random_operator_params(rng)
        ratio = contraction_check(mdp, pairs, rng, **p, scale=float(rng.uniform(0.5, 5.0)))
        rows.append({"gamma": gamma, "nS": mdp.nS, "nA": mdp.nA, **p, "ratio": ratio,
                     "ok": ratio <= gamma + 1e-9})
    return rows


OE_GRID = {"m": (1, 2, 3, 5, 10), "alpha": (0.0, 0.1, 0.3), "L1": (0.5, 1.0, 2.0)}


def run_verification(seed=0, scale=1.0):
    """Run every check; ``scale`` < 1 shrinks trial counts for a quick pass.

    Returns a JSON-ready dict with one entry per check and an overall flag.
    """
    checks = {}
    n = lambda k: max(int(k * scale), 1000)

    rows = contraction_suite(seed, n_mdps=max(int(50 * scale), 3), pairs=max(int(20 * scale), 2))
    checks["contraction"] = {"pass": all(r["ok"] for r in rows),
                             "max_excess": max(r["ratio"] - r["gamma"] for r in rows),
                             "mdps": len(rows)}

    rng = substream(seed, "verify", 2)
    mean, se = oe_max_expectation(1.0, 2, 0.0, n(1_000_000), rng)
    grid = []
    for m, a, L1 in itertools.product(OE_GRID["m"], OE_GRID["alpha"], OE_GRID["L1"]):
        mc, s = oe_max_expectation(L1, m, a, n(400_000), rng)
        cf = oe_closed_form(L1, m, a)
        grid.append({"m": m, "alpha": a, "L1": L1, "mc": mc, "se": s, "closed": cf,
                     "ok": abs(mc - cf) <= 4 * s})
    big, bse = oe_max_expectation(1.0, 200, 0.0, n(200_000), rng)
    checks["oe_anchor"] = {"pass": abs(mean - 5 / 12) <= 3 * se, "mean": mean, "se": se}
    checks["oe_closed_form"] = {"pass": all(g["ok"] for g in grid),
                                "worst_z": max(abs(g["mc"] - g["closed"]) / g["se"] for g in grid)}
    checks["oe_large_m"] = {"pass": abs(big - 1.0) <= 0.02, "mean": big}

    rng = substream(seed, "verify", 3)
    draws = max(int(200 * scale), 10)
    ordered = 0
    for _ in range(draws):
        p = draw_ordering_params(rng)
        res = oe_simulation(p["eta"], p["mu"], p["alpha"], p["L1"], p["m"], n(100_000), rng)
        ordered += res.cdc_mean <= res.baseline_mean
    checks["oe_ordering"] = {"pass": ordered >= 0.95 * draws, "fraction": ordered / draws,
                                   "draws": draws}

    rng = substream(seed, "verify", 4)
    devs = []
    for _ in range(max(int(20 * scale), 3)):
        q, pb, lam = random_kl_instance(rng)
        devs.append(lemma1_check(q, pb, lam).max_dev)
    q, pb, _ = random_kl_instance(rng)
    far = max(float(np.max(np.abs(forward_kl_optimum(q, pb, 1e6)[0] - pb))),
              float(np.max(np.abs(reverse_kl_optimum(q, pb, 1e6)[0] - pb))))
    checks["kl_optima"] = {"pass": max(devs) <= 1e-6 and far <= 1e-4, "max_dev": max(devs),
                        "large_lambda_dev": far}

    return {"seed": seed, "scale": scale, "checks": checks,
            "pass": all(c["pass"] for c in checks.values())}
