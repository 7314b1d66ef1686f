"""Bayesian learning on the parameter grid.

The learner holds a posterior over the finite parameter grid, observes
transitions drawn from the true kernel and updates by Bayes' rule with the
model's cell masses as likelihoods. Actions follow either a fixed policy or
the anticipated-utility rule: every ``resolve_every`` periods the Bellman
equation is re-solved under the current posterior's mixed kernel, treating
that posterior as permanent, and the lowest-index optimal action is played.

Randomness comes from a Philox generator seeded explicitly, so a seed fixes
the whole trace.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .bellman import mix_kernel, optimal_actions, solve_bellman
from .discretize import _gather_kron
from .divergence import closest_parameters
from .errors import DomainError, ImpossibleObservationError, ShapeError

NORM_TOL = 1e-12


def _check_belief(mu, n):
    mu = np.asarray(getattr(mu, "weights", mu), dtype=float)
    if mu.shape != (n,):
        raise ShapeError(f"belief has shape {mu.shape}, expected ({n},)")
    if np.any(mu < 0) or abs(mu.sum() - 1.0) > 1e-10:
        raise DomainError("belief must be a probability vector")
    return mu


def _coords(fsmdp, s2):
    return np.unravel_index(int(s2), fsmdp.grid_shape)


def likelihoods(fsmdp, s, x, s2):
    """``Q_theta(s2 | s, x)`` for every parameter (``(T,)`` array)."""
    Qm = fsmdp.Q_model
    out = np.ones(Qm.n_theta)
    for F, idx, c in zip(Qm.factors, Qm.indices, _coords(fsmdp, s2)):
        out = out * F[:, idx[s, x], c]
    return out


def bayes_update(mu, s, x, s2, fsmdp):
    """Posterior after observing the transition ``(s, x) -> s2`` (grid indices).

    Raises :class:`ImpossibleObservationError` when every parameter with
    prior mass gives the observed cell zero probability.

    Examples
    --------
    A uniform prior returns the normalised likelihoods; a point mass is
    absorbing.
    """
    mu = _check_belief(mu, fsmdp.n_theta)
    post = mu * likelihoods(fsmdp, s, x, s2)
    total = post.sum()
    if not total > 0:
        raise ImpossibleObservationError(
            f"transition ({s}, {x}) -> {s2} has zero probability under every parameter in the prior support"
        )
    return post / total


def _log_update(logmu, loglik, where):
    with np.errstate(invalid="ignore"):
        post = logmu + loglik
    post = np.where(np.isfinite(logmu), post, -np.inf)
    norm = logsumexp(post)
    if not np.isfinite(norm):
        raise ImpossibleObservationError(f"observation at step {where} has zero probability under the posterior")
    return post - norm


def checkpoints(horizon):
    """Half-decade spaced times ``10, 32, 100, 316, ...`` up to ``horizon`` (always included)."""
    if horizon < 1:
        raise DomainError("horizon must be >= 1")
    out = []
    k = 2
    while True:
        t = int(round(10 ** (k / 2)))
        if t >= horizon:
            break
        out.append(t)
        k += 1
    out.append(int(horizon))
    return out


@dataclass(eq=False)
class LearningTrace:
    """One simulated path.

    Attributes
    ----------
    states : (horizon + 1,) int array
        ``s_0, ..., s_horizon``.
    actions : (horizon,) int array
    checkpoints : list of int
    beliefs : (n_checkpoints, T) array
        Posterior after ``k`` observations for each checkpoint ``k``.
    frequencies : list of (S, X) arrays
        Empirical state-action frequencies ``m_k`` of the first ``k`` pairs.
    seed : int
    mode : str
    """

    states: np.ndarray
    actions: np.ndarray
    checkpoints: list
    beliefs: np.ndarray
    frequencies: list
    seed: int
    mode: str
    prior: np.ndarray = field(repr=False, default=None)

    @property
    def posterior(self):
        return self.beliefs[-1]

    def frequency(self, k):
        """Empirical ``m_k`` from the stored history (any ``1 <= k <= horizon``)."""
        nS, nX = self.frequencies[0].shape
        w = np.bincount(self.states[:k] * nX + self.actions[:k], minlength=nS * nX)
        return (w / k).reshape(nS, nX)

    def history_rows(self):
        return [[k, int(s), int(x)] for k, (s, x) in enumerate(zip(self.states[:-1], self.actions))]

    def belief_rows(self):
        return [[k, *map(float, b)] for k, b in zip(self.checkpoints, self.beliefs)]

    def frequency_rows(self):
        """Sparse rows ``(k, s, x, m_k(s, x))`` for the visited cells."""
        rows = []
        for k, m in zip(self.checkpoints, self.frequencies):
            for s, x in zip(*np.nonzero(m)):
                rows.append([k, int(s), int(x), float(m[s, x])])
        return rows


def _sampler(T):
    """Row-wise cumulative sums for inverse-CDF draws."""
    return [np.cumsum(F, axis=1) for F in T.factors]


def _draw(cdfs, T, s, x, u, grid_shape):
    coords = []
    for cdf, idx, uj in zip(cdfs, T.indices, u):
        row = cdf[idx[s, x]]
        j = int(np.searchsorted(row, uj * row[-1], side="right"))
        coords.append(min(j, len(row) - 1))
    return int(np.ravel_multi_index(coords, grid_shape))


def simulate_learning(
    fsmdp,
    horizon,
    prior=None,
    policy=None,
    resolve_every=100,
    seed=0,
    eps_V=None,
):
    """Simulate a Bayesian learner on a finite SMDP.

    Parameters
    ----------
    fsmdp : FiniteSMDP
    horizon : int
        Number of transitions.
    prior : array_like, optional
        Full-support belief over the grid (uniform by default).
    policy : array_like, optional
        Fixed policy, ``(S, X)`` probabilities or ``(S,)`` action indices.
        When omitted the anticipated-utility rule is used.
    resolve_every : int
        Periods between Bellman re-solves (anticipated utility only).
    seed : int
    eps_V : float, optional
        Value-iteration accuracy, ``1e-6 / 8`` by default.

    Returns
    -------
    LearningTrace
    """
    if horizon < 1 or resolve_every < 1:
        raise DomainError("horizon and resolve_every must be >= 1")
    nS, nX, nT = fsmdp.n_states, fsmdp.n_actions, fsmdp.n_theta
    prior = np.full(nT, 1.0 / nT) if prior is None else _check_belief(prior, nT)
    if np.any(prior <= 0):
        raise DomainError("the prior must have full support")
    eps_V = 1e-6 / 8 if eps_V is None else eps_V
    rng = np.random.Generator(np.random.Philox(seed))

    mode = "anticipated-utility" if policy is None else "fixed-policy"
    fixed = None
    if policy is not None:
        policy = np.asarray(policy)
        if policy.shape == (nS,):
            fixed = np.zeros((nS, nX))
            fixed[np.arange(nS), policy.astype(int)] = 1.0
        elif policy.shape == (nS, nX):
            fixed = policy.astype(float)
        else:
            raise ShapeError(f"policy has shape {policy.shape}")
        fixed_cdf = np.cumsum(fixed, axis=1)

    Qt, Qm = fsmdp.Q_true, fsmdp.Q_model
    cdfs = _sampler(Qt)
    nf = len(Qt.factors)
    s = int(np.searchsorted(np.cumsum(fsmdp.q0), rng.random() * fsmdp.q0.sum(), side="right"))
    s = min(s, nS - 1)

    states = np.empty(horizon + 1, dtype=np.int64)
    actions = np.empty(horizon, dtype=np.int64)
    states[0] = s
    cks = checkpoints(horizon)
    ck_set = set(cks)
    beliefs, freqs = [], []
    counts = np.zeros(nS * nX)
    logmu = np.log(prior)
    act = None
    V0 = None
    block = 4096
    U = None
    for k in range(horizon):
        if k % block == 0:
            U = rng.random((min(block, horizon - k), nf + 1))
        u = U[k % block]
        if fixed is not None:
            x = min(int(np.searchsorted(fixed_cdf[s], u[0] * fixed_cdf[s, -1], side="right")), nX - 1)
        else:
            if nX == 1:
                x = 0
            else:
                if k % resolve_every == 0:
                    nu = np.exp(logmu)
                    nu = nu / nu.sum()
                    Qbar = mix_kernel(nu, fsmdp)
                    V = solve_bellman(fsmdp, Qbar, eps_V, V0=V0)
                    V0 = V.values
                    gap = 1e-6 * (1 + float(np.max(np.abs(V.values)))) * 0.25
                    act = optimal_actions(fsmdp, Qbar, V, gap).pure()
                x = int(act[s])
        s2 = _draw(cdfs, Qt, s, x, u[1:], fsmdp.grid_shape)
        with np.errstate(divide="ignore"):
            loglik = np.zeros(nT)
            for F, idx, c in zip(Qm.factors, Qm.indices, _coords(fsmdp, s2)):
                loglik = loglik + np.log(F[:, idx[s, x], c])
        logmu = _log_update(logmu, loglik, k)
        actions[k] = x
        counts[s * nX + x] += 1
        states[k + 1] = s2
        s = s2
        if k + 1 in ck_set:
            mu = np.exp(logmu)
            beliefs.append(mu / mu.sum())
            freqs.append((counts / (k + 1)).reshape(nS, nX))
    return LearningTrace(states, actions, cks, np.array(beliefs), freqs, seed, mode, prior)


# ---------------------------------------------------------------------------
# identification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IdentificationResult:
    identified: bool
    witness: tuple | None
    distance: float
    band: tuple


def kernel_tv(fsmdp, i, j, budget=4_000_000):
    """Largest total-variation distance between ``Q_i(.|s, x)`` and ``Q_j(.|s, x)`` over all ``(s, x)``."""
    Qm = fsmdp.Q_model
    a, b = Qm.theta(i), Qm.theta(j)
    sizes = [F.shape[0] for F in a.factors]
    key = np.ravel_multi_index(Qm.indices, sizes)
    uniq = np.unique(key.ravel())
    sub = [np.asarray(v) for v in np.unravel_index(uniq, sizes)]
    width = int(np.prod(fsmdp.grid_shape))
    chunk = max(1, budget // width)
    worst = 0.0
    for lo in range(0, len(uniq), chunk):
        part = [v[lo : lo + chunk] for v in sub]
        ra = _gather_kron(a.factors, part)
        rb = _gather_kron(b.factors, part)
        worst = max(worst, float(0.5 * np.abs(ra - rb).sum(axis=1).max()))
    return worst


def identification_check(fsmdp, m, tol=None):
    """Whether every pair in the closest-parameter band induces the same kernel.

    The band uses ``tol`` (default band tolerance when None); a pair counts
    as identical when its kernels are within ``tol`` in sup-over-``(s, x)``
    total variation (``1e-8`` when ``tol`` is None). The witness is the pair
    with the largest distance.
    """
    prof = closest_parameters(m, fsmdp, tol)
    band = tuple(int(t) for t in prof.argmin_set)
    tv_tol = 1e-8 if tol is None else float(tol)
    worst, witness = 0.0, None
    for a in range(len(band)):
        for b in range(a + 1, len(band)):
            d = kernel_tv(fsmdp, band[a], band[b])
            if d > worst:
                worst, witness = d, (band[a], band[b])
    ok = worst <= tv_tol
    return IdentificationResult(ok, None if ok else witness, worst, band)


def median_mass_on(traces, theta_index):
    """Median final posterior mass on one parameter across traces."""
    return float(np.median([t.posterior[theta_index] for t in traces]))


def tv_distance(p, q):
    return 0.5 * float(np.abs(np.asarray(p, float) - np.asarray(q, float)).sum())

