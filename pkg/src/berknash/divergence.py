"""Relative entropy and the weighted Kullback-Leibler divergence on a grid.

Divergences are extended nonnegative reals; ``+inf`` is IEEE infinity and
follows ``0 ln 0 = 0`` and ``p ln(p / 0) = +inf`` for ``p > 0``. Cells with
zero weight never contribute, so an infinite row only matters where the
joint measure puts mass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoDominatingParameterError, ShapeError

_SUM_TOL = 1e-10


def _terms(p, q):
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        t = p * np.log(p / q)
    t = np.where(q > 0, t, np.inf)
    return np.where(p > 0, t, 0.0)


def _seqsum(a, axis=-1):
    # left-to-right accumulation, so loop oracles reproduce it exactly
    if a.shape[axis] == 0:
        return np.zeros(np.delete(a.shape, axis))
    return np.take(np.cumsum(a, axis=axis), -1, axis=axis)


def relative_entropy_row(p, q):
    """Relative entropy ``sum_i p_i ln(p_i / q_i)`` from ``q`` to ``p``.

    Parameters
    ----------
    p, q : array_like
        Probability vectors of equal length, each summing to 1 within 1e-10.

    Returns
    -------
    float
        A nonnegative value or ``inf`` when ``p`` is not dominated by ``q``.

    Examples
    --------
    >>> relative_entropy_row([1.0, 0.0], [0.5, 0.5])  # doctest: +ELLIPSIS
    0.693147...
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 1:
        raise ShapeError(f"rows must be 1-D of equal length, got {p.shape} and {q.shape}")
    for name, v in (("p", p), ("q", q)):
        if np.any(v < 0) or abs(v.sum() - 1.0) > _SUM_TOL:
            raise ValueError(f"{name} is not a probability vector")
    return max(float(_seqsum(_terms(p, q))), 0.0)


def _first_occurrence(key):
    """Ids numbered by first occurrence of each distinct key, and the first positions."""
    _, first, inverse = np.unique(key.ravel(), return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    return rank[inverse].reshape(key.shape), first[order]


def _factor_table(P_rows, Q_rows, it, im, budget):
    key = it.astype(np.int64) * Q_rows.shape[1] + im
    pair, sel = _first_occurrence(key)
    pt, pm = it.ravel()[sel], im.ravel()[sel]
    P = P_rows[pt]
    D = np.empty((Q_rows.shape[0], len(sel)))
    chunk = max(1, budget // max(1, P.size))
    for lo in range(0, Q_rows.shape[0], chunk):
        D[lo : lo + chunk] = _seqsum(_terms(P[None], Q_rows[lo : lo + chunk][:, pm]))
    # relative entropy is nonnegative; clip rounding on near-identical rows
    np.maximum(D, 0.0, out=D)
    return pair, D


def divergence_table(fsmdp, budget=2_000_000):
    """Row divergences for every (true row, model row) combination in use.

    Returns ``(pair, D)``: ``pair`` maps each ``(s, x)`` to a pair id and
    ``D[t, k]`` is the relative entropy of pair ``k`` under parameter ``t``.
    For product kernels the divergence is the sum of per-axis divergences.
    Cached on the finite SMDP.
    """
    cached = fsmdp._cache.get("divergence")
    if cached is not None:
        return cached
    Qt, Qm = fsmdp.Q_true, fsmdp.Q_model
    T = fsmdp.n_theta
    same = len(Qt.factors) == len(Qm.factors) and all(
        a.shape[-1] == b.shape[-1] for a, b in zip(Qt.factors, Qm.factors)
    )
    if same:
        tables = [
            _factor_table(Ft, Fm, it, im, budget)
            for Ft, Fm, it, im in zip(Qt.factors, Qm.factors, Qt.indices, Qm.indices)
        ]
    else:
        rows_t, it = Qt.joint()
        joint = [Qm.theta(t).joint() for t in range(T)]
        tables = [_factor_table(rows_t, np.stack([r for r, _ in joint]), it, joint[0][1], budget)]
    if len(tables) == 1:
        pair, D = tables[0]
        D = np.broadcast_to(D, (T, D.shape[1])).copy() if D.shape[0] != T else D
    else:
        sizes = [D.shape[1] for _, D in tables]
        key = np.ravel_multi_index([p for p, _ in tables], sizes)
        pair, sel = _first_occurrence(key)
        sub = np.unravel_index(key.ravel()[sel], sizes)
        D = np.zeros((T, len(sel)))
        for (_, Dj), idx in zip(tables, sub):
            D = D + Dj[:, idx]
    fsmdp._cache["divergence"] = (pair, D)
    return pair, D


def _weights(m, fsmdp):
    m = np.asarray(getattr(m, "weights", m), dtype=float)
    shape = (fsmdp.n_states, fsmdp.n_actions)
    if m.size != shape[0] * shape[1]:
        raise ShapeError(f"joint measure has {m.size} entries, expected {shape[0]}x{shape[1]}")
    return m.reshape(shape)


def kl_profile(m, fsmdp):
    """``K(m, theta)`` for every parameter on the grid (``(T,)`` array)."""
    pair, D = divergence_table(fsmdp)
    w = np.bincount(pair.ravel(), weights=_weights(m, fsmdp).ravel(), minlength=D.shape[1])
    pos = w > 0
    with np.errstate(invalid="ignore"):
        contrib = np.where(pos[None, :], w[None, :] * D, 0.0)
    return _seqsum(contrib)


def weighted_kl(m, theta_index, fsmdp):
    """Weighted divergence ``sum_{s,x} m(s,x) KL(Q(s,x) || Q_theta(s,x))``."""
    return float(kl_profile(m, fsmdp)[theta_index])


def nondominating(fsmdp):
    """Parameters with an infinite row divergence somewhere on the grid."""
    _, D = divergence_table(fsmdp)
    return np.isinf(D).any(axis=1)


@dataclass(frozen=True, eq=False)
class KLProfile:
    """Divergence values over the parameter grid and the argmin band."""

    values: np.ndarray
    argmin_set: np.ndarray
    tol: float

    @property
    def minimum(self):
        return float(np.min(self.values))

    def csv_rows(self, thetas):
        """Rows ``(theta_0, ..., theta_{d-1}, K)`` for export."""
        return [[*map(float, th), float(v)] for th, v in zip(thetas, self.values)]


def default_tol(k_min):
    return 1e-8 * (1.0 + abs(k_min))


def argmin_band(values, tol=None):
    values = np.asarray(values, dtype=float)
    finite = np.isfinite(values)
    if not finite.any():
        raise NoDominatingParameterError("every parameter has infinite weighted divergence")
    k_min = float(values[finite].min())
    tol = default_tol(k_min) if tol is None else float(tol)
    if tol < 0:
        raise ValueError("tol must be >= 0")
    return np.flatnonzero(values <= k_min + tol), tol


def closest_parameters(m, fsmdp, tol=None):
    """Closest-parameter band ``{theta : K(m, theta) <= min K + tol}``.

    ``tol`` defaults to ``1e-8 (1 + |min K|)``. Raises
    :class:`NoDominatingParameterError` if every value is infinite.
    """
    values = kl_profile(m, fsmdp)
    band, tol = argmin_band(values, tol)
    return KLProfile(values, band, tol)

