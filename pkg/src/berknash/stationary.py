"""Stationary state-action measures under a fixed (possibly mixed) policy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NonConvergenceError, ShapeError

DENSE_LIMIT = 4_000_000  # build the S x S chain when it has at most this many entries


@dataclass(frozen=True, eq=False)
class JointMeasure:
    """Probability weights over state-action cells (``(S, X)``)."""

    weights: np.ndarray
    residual: float = 0.0
    iterations: int = 0
    damped: bool = False

    @property
    def marginal(self):
        return self.weights.sum(axis=1)

    def csv_rows(self, centers, actions):
        """Rows ``(s_0, ..., s_{dim-1}, x, weight)`` for every cell."""
        out = []
        for s in range(self.weights.shape[0]):
            for j, x in enumerate(actions):
                out.append([*map(float, centers[s]), float(x), float(self.weights[s, j])])
        return out


def tv(p, q):
    """Total-variation distance ``0.5 * ||p - q||_1``."""
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def _as_policy(policy, shape):
    policy = np.asarray(policy, dtype=float)
    if policy.shape != shape:
        raise ShapeError(f"policy has shape {policy.shape}, expected {shape}")
    if np.any(policy < 0) or np.any(np.abs(policy.sum(axis=1) - 1.0) > 1e-10):
        raise DomainError("policy rows must be probability vectors")
    return policy


def _stepper(Q, policy):
    nS = Q.indices[0].shape[0]
    if len(Q.factors) == 1 and nS * nS <= DENSE_LIMIT:
        rows, index = Q.factors[0], Q.indices[0]
        P = np.zeros((nS, nS))
        for j in range(policy.shape[1]):
            w = policy[:, j]
            on = w > 0
            if on.any():
                P[on] += w[on, None] * rows[index[on, j]]
        return lambda mu: mu @ P
    return lambda mu: Q.push(mu[:, None] * policy)


def stationary_distribution(Q, policy, eps_tv=1e-10, max_iter=200_000, q0=None):
    """Stationary joint measure by power iteration.

    Iterates ``mu <- mu P`` with ``P[s, s'] = sum_x policy(x|s) Q(s'|s, x)``
    from ``q0`` (uniform by default) until the total-variation step is at
    most ``eps_tv``. A period-2 oscillation switches on 0.5 damping. Returns
    ``m(s, x) = mu(s) policy(x|s)``; raises :class:`NonConvergenceError`
    (carrying the residual and the last iterate) at ``max_iter``.
    """
    nS, nX, _ = Q.shape
    policy = _as_policy(policy, (nS, nX))
    mu = np.full(nS, 1.0 / nS) if q0 is None else np.asarray(q0, dtype=float).copy()
    step = _stepper(Q, policy)
    damped = False
    prev_mu, prev_change, flips = None, np.inf, 0
    change = np.inf
    for it in range(1, max_iter + 1):
        nxt = step(mu)
        if damped:
            nxt = 0.5 * mu + 0.5 * nxt
        nxt /= nxt.sum()
        change = tv(nxt, mu)
        if change <= eps_tv:
            mu = nxt
            break
        # period 2: the step does not shrink but two steps return
        if not damped and prev_mu is not None and change >= 0.5 * prev_change and tv(nxt, prev_mu) < 0.1 * change:
            flips += 1
            if flips >= 3:
                damped = True
        prev_mu, prev_change, mu = mu, change, nxt
    else:
        m = JointMeasure(mu[:, None] * policy, change, max_iter, damped)
        raise NonConvergenceError(
            f"power iteration did not reach TV step {eps_tv:g} in {max_iter} iterations (last {change:.3g})",
            residual=change,
            result=m,
        )
    return JointMeasure(mu[:, None] * policy, change, it, damped)


def stationarity_residual(m, Q, policy=None):
    """TV distance between the state marginal of ``m`` and its one-step image.

    If ``policy`` is given, ``m`` is first rebuilt as ``m_S(s) policy(x|s)``.
    """
    w = np.asarray(getattr(m, "weights", m), dtype=float)
    nS, nX, _ = Q.shape
    w = w.reshape(nS, nX)
    if policy is not None:
        w = w.sum(axis=1)[:, None] * _as_policy(policy, (nS, nX))
    return tv(w.sum(axis=1), Q.push(w))
