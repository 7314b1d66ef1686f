"""Value iteration for the belief-mixed model and optimal action sets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractionError, DomainError

GROWTH_STREAK = 10


def mix_kernel(nu, fsmdp):
    """Belief-mixed kernel ``sum_theta nu(theta) Q_theta`` (row-compressed)."""
    nu = np.asarray(getattr(nu, "weights", nu), dtype=float)
    if np.any(nu < 0) or abs(nu.sum() - 1.0) > 1e-10:
        raise DomainError("belief must be a probability vector")
    return fsmdp.Q_model.mix(nu)


@dataclass(frozen=True, eq=False)
class ValueFunction:
    """Approximate fixed point of the Bellman operator.

    ``q_values[s, x]`` is the action value at ``V``; ``growth`` holds the
    constants ``(E, C)`` of ``|V(s)| <= E + C ||s||`` for state-bounded payoffs.
    """

    values: np.ndarray
    sup_residual: float
    iterations: int
    q_values: np.ndarray
    threshold: float
    growth: tuple | None = None


def _q_values(reward, Qbar, V, delta, states=None):
    return reward + delta * Qbar.expect(V, states) if delta > 0 else reward.copy()


def _row_ids(a):
    a = np.ascontiguousarray(a.reshape(a.shape[0], -1))
    raw = a.view(np.dtype((np.void, a.dtype.itemsize * a.shape[1]))).ravel()
    return np.unique(raw, return_inverse=True)[1].ravel()


def state_classes(fsmdp, Q=None):
    """Groups of states that share every kernel row and payoff row.

    States in one group have equal values, so value iteration runs on one
    representative per group. ``Q`` defaults to the model kernel. Returns
    ``(reps, inverse)`` with ``inverse[s]`` the group of state ``s``.
    """
    Q = fsmdp.Q_model if Q is None else Q
    store = fsmdp._cache.setdefault("classes", {})
    key = tuple(id(ix) for ix in Q.indices)
    if key in store:
        return store[key][1]
    nS = fsmdp.n_states
    pay = fsmdp.payoff
    if pay.dense is not None:
        out = (np.arange(nS), np.arange(nS))
    else:
        ids = np.zeros(nS, dtype=np.int64)
        for a in (*Q.indices, pay.base, pay.scale):
            ids = _row_ids(np.stack([ids, _row_ids(a)], axis=1))
        _, reps, inverse = np.unique(ids, return_index=True, return_inverse=True)
        out = (reps, inverse.ravel())
    if len(store) >= 8:
        store.clear()
    # holding the index arrays keeps their ids from being reused
    store[key] = (Q.indices, out)
    return out


def solve_bellman(fsmdp, Qbar, eps_V=1e-8, max_iter=1_000_000, V0=None, reward=None):
    """Value iteration from ``V = 0`` (or ``V0``).

    Stops once the sup-norm change is at most ``eps_V (1 - delta) / (2 delta)``,
    which bounds the distance to the fixed point by ``eps_V``. Raises
    :class:`ContractionError` if the change grows for 10 consecutive sweeps.
    """
    if eps_V <= 0:
        raise DomainError("eps_V must be > 0")
    delta = fsmdp.discount
    if not 0 <= delta < 1:
        raise DomainError(f"discount must lie in [0, 1), got {delta}")
    reps, inverse = state_classes(fsmdp, Qbar)
    if reward is None:
        reward = fsmdp.payoff.expected(Qbar, reps)
    else:
        reward = np.asarray(reward, dtype=float)[reps]
    threshold = eps_V * (1 - delta) / (2 * delta) if delta > 0 else np.inf
    V = np.zeros(len(reps)) if V0 is None else np.asarray(V0, dtype=float)[reps]
    prev, streak, change = np.inf, 0, np.inf
    it = 0
    while it < max_iter:
        it += 1
        Qv = _q_values(reward, Qbar, V[inverse], delta, reps)
        V_new = Qv.max(axis=1)
        change = float(np.max(np.abs(V_new - V)))
        V = V_new
        if change <= threshold:
            break
        streak = streak + 1 if change > prev else 0
        if streak >= GROWTH_STREAK or not np.isfinite(change):
            raise ContractionError(f"value iteration diverging: sup change {change:.3g} after {it} sweeps")
        prev = change
    else:
        raise ContractionError(f"value iteration hit max_iter={max_iter} with change {change:.3g}")
    Qv = _q_values(reward, Qbar, V[inverse], delta, reps)[inverse]
    V = V[inverse]
    growth = None
    if fsmdp.growth is not None:
        _, B = fsmdp.growth
        C = B / (1 - delta)
        E = float(np.max(np.abs(V) - C * fsmdp.state_norm()))
        growth = (max(E, 0.0), C)
    return ValueFunction(V, change, it, Qv, threshold, growth)


@dataclass(frozen=True, eq=False)
class PolicyCorrespondence:
    """Per-state sets of near-optimal actions (boolean mask ``(S, X)``)."""

    mask: np.ndarray
    gap: float
    shortfall: np.ndarray

    def actions(self, s):
        return np.flatnonzero(self.mask[s]).tolist()

    def pure(self):
        """Lowest-index optimal action per state."""
        return np.argmax(self.mask, axis=1)

    def pure_policy(self):
        pol = np.zeros(self.mask.shape)
        pol[np.arange(len(pol)), self.pure()] = 1.0
        return pol

    def uniform_policy(self):
        m = self.mask.astype(float)
        return m / m.sum(axis=1, keepdims=True)


def optimal_actions(fsmdp, Qbar, V, gap=1e-6):
    """Actions whose value is within ``gap`` of the state's best action value."""
    Qv = V.q_values if isinstance(V, ValueFunction) else _q_values(
        fsmdp.payoff.expected(Qbar), Qbar, np.asarray(V, float), fsmdp.discount
    )
    shortfall = Qv.max(axis=1, keepdims=True) - Qv
    return PolicyCorrespondence(shortfall <= gap, gap, shortfall)
