"""Finite SMDPs from continuous declarations.

A state box is cut into a product grid of cells; each transition row is the
vector of cell masses renormalised by the box mass (truncate and
renormalise). Rows are stored compressed: many ``(s, x)`` pairs share the
same next-state law (iid shocks, action-free kernels), so a
:class:`TransitionTensor` keeps the distinct rows plus an ``(s, x) -> row``
index.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, ShapeError, TruncationError
from .model import SMDPSpec, cell_log_masses, cell_masses

ROW_TOL = 1e-10
UNDERFLOW = 1e-250


# ---------------------------------------------------------------------------
# compressed tensors
# ---------------------------------------------------------------------------


def _gather_kron(factors, indices, sel=None):
    """Joint rows ``kron(F_1[i_1], ..., F_d[i_d])`` for the selected cells."""
    out = None
    for F, idx in zip(factors, indices):
        part = F[idx if sel is None else idx[sel]]
        out = part if out is None else (out[..., :, None] * part[..., None, :]).reshape(part.shape[:-1] + (-1,))
    return out


@dataclass(frozen=True, eq=False)
class TransitionTensor:
    """Factored, row-compressed ``|S| x |X| x |S|`` stochastic tensor.

    The state grid is a product of axes and the next-state law at ``(s, x)``
    is the product of one row per axis: ``factors[j][indices[j][s, x]]``.
    One-axis tensors (``TransitionTensor.single``) are plain row-compressed
    matrices.
    """

    factors: tuple
    indices: tuple
    _cache: dict = field(default_factory=dict, repr=False, compare=False)
    # derived from ``indices`` alone, so tensors sharing indices share it
    _index_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def single(cls, rows, index):
        return cls((np.asarray(rows, dtype=float),), (np.asarray(index),))

    @property
    def grid_shape(self):
        return tuple(F.shape[1] for F in self.factors)

    @property
    def shape(self):
        nS, nX = self.indices[0].shape
        return nS, nX, int(np.prod(self.grid_shape))

    def joint(self):
        """Materialised ``(rows, index)`` over distinct joint rows."""
        if len(self.factors) == 1:
            return self.factors[0], self.indices[0]
        if "joint" not in self._cache:
            sizes = [F.shape[0] for F in self.factors]
            key = np.ravel_multi_index(self.indices, sizes)
            uniq, index = np.unique(key.ravel(), return_inverse=True)
            sub = np.unravel_index(uniq, sizes)
            rows = _gather_kron(self.factors, [np.asarray(s) for s in sub])
            self._cache["joint"] = (rows, index.reshape(key.shape))
        return self._cache["joint"]

    @property
    def rows(self):
        return self.joint()[0]

    @property
    def index(self):
        return self.joint()[1]

    def dense(self):
        return _gather_kron(self.factors, self.indices)

    def _pairs(self):
        c = self._index_cache
        if "pairs" not in c:
            i1, i2 = self.indices
            key = i1.astype(np.int64) * self.factors[1].shape[0] + i2
            uniq, inv = np.unique(key.ravel(), return_inverse=True)
            c["pairs"] = (uniq // self.factors[1].shape[0], uniq % self.factors[1].shape[0], inv.reshape(key.shape))
        return c["pairs"]

    def expect(self, v, states=None):
        """``E[v(s') | s, x]`` as an ``(S, X)`` array (rows ``states`` only if given)."""
        v = np.asarray(v, dtype=float)
        sel = slice(None) if states is None else states
        if len(self.factors) == 1:
            return (self.factors[0] @ v)[self.indices[0][sel]]
        if len(self.factors) == 2:
            R1, R2 = self.factors
            A = R1 @ v.reshape(self.grid_shape)
            p1, p2, inv = self._pairs()
            return np.einsum("ij,ij->i", A[p1], R2[p2])[inv[sel]]
        rows, index = self.joint()
        return (rows @ v)[index[sel]]

    def push(self, w):
        """Next-state law of the joint weights ``w`` (``(S, X)``)."""
        w = np.asarray(w, dtype=float).ravel()
        if len(self.factors) == 1:
            F, idx = self.factors[0], self.indices[0]
            return np.bincount(idx.ravel(), weights=w, minlength=F.shape[0]) @ F
        if len(self.factors) == 2:
            R1, R2 = self.factors
            p1, p2, inv = self._pairs()
            wp = np.bincount(inv.ravel(), weights=w, minlength=len(p1))
            W = np.zeros((R1.shape[0], R2.shape[0]))
            np.add.at(W, (p1, p2), wp)
            return (R1.T @ W @ R2).ravel()
        rows, index = self.joint()
        return np.bincount(index.ravel(), weights=w, minlength=rows.shape[0]) @ rows

    def chain(self, policy):
        """State-to-state matrix ``P[s, s'] = sum_x policy(x|s) Q[s, x, s']``."""
        return np.einsum("sx,sxt->st", policy, self.dense())

    @classmethod
    def from_dense(cls, Q):
        Q = np.asarray(Q, dtype=float)
        if Q.ndim != 3 or Q.shape[0] != Q.shape[2]:
            raise ShapeError(f"expected an S x X x S tensor, got shape {Q.shape}")
        nS, nX, _ = Q.shape
        return cls.single(Q.reshape(nS * nX, nS).copy(), np.arange(nS * nX).reshape(nS, nX))


@dataclass(frozen=True, eq=False)
class ModelTensor:
    """Factored model family.

    ``factors[j]`` has shape ``(T_j, U_j, n_j)`` with ``T_j`` either the grid
    size ``T`` (axis law depends on the parameter) or 1 (shared by all
    parameters); ``indices[j]`` maps ``(s, x)`` to a row as for
    :class:`TransitionTensor`.
    """

    factors: tuple
    indices: tuple
    _index_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def single(cls, rows, index):
        return cls((np.asarray(rows, dtype=float),), (np.asarray(index),))

    @property
    def n_theta(self):
        return max(F.shape[0] for F in self.factors)

    @property
    def rows(self):
        """Joint rows ``(T, U, S)`` (one-axis tensors only)."""
        if len(self.factors) != 1:
            raise ShapeError("joint rows are only stored for one-axis tensors")
        return self.factors[0]

    @property
    def index(self):
        if len(self.factors) != 1:
            raise ShapeError("joint index is only stored for one-axis tensors")
        return self.indices[0]

    def theta(self, t):
        return TransitionTensor(
            tuple(F[t if F.shape[0] > 1 else 0] for F in self.factors), self.indices, _index_cache=self._index_cache
        )

    def mix(self, nu):
        """Belief-weighted kernel ``sum_t nu[t] Q_theta_t``."""
        nu = np.asarray(nu, dtype=float)
        if nu.shape != (self.n_theta,):
            raise ShapeError(f"belief has shape {nu.shape}, expected ({self.n_theta},)")
        support = np.flatnonzero(nu)
        varying = [j for j, F in enumerate(self.factors) if F.shape[0] > 1]
        if len(varying) <= 1:
            facs = tuple(
                np.tensordot(nu[support], F[support], axes=1) if F.shape[0] > 1 else F[0] for F in self.factors
            )
            return TransitionTensor(facs, self.indices, _index_cache=self._index_cache)
        # a mixture of products is not a product: materialise joint rows
        base = self.theta(int(support[0]))
        rows, index = base.joint()
        total = nu[support[0]] * rows
        for t in support[1:]:
            total = total + nu[t] * self.theta(int(t)).joint()[0]
        return TransitionTensor.single(total, index)

    def dense(self):
        return np.stack([self.theta(t).dense() for t in range(self.n_theta)])

    @classmethod
    def from_dense(cls, Q):
        Q = np.asarray(Q, dtype=float)
        if Q.ndim != 4:
            raise ShapeError(f"expected a Theta x S x X x S tensor, got shape {Q.shape}")
        nT, nS, nX, _ = Q.shape
        return cls.single(Q.reshape(nT, nS * nX, nS).copy(), np.arange(nS * nX).reshape(nS, nX))


@dataclass(frozen=True, eq=False)
class Payoff:
    """Separable payoff ``base[s, x] + scale[s, x] * nxt[s']`` (plus optional dense part)."""

    base: np.ndarray
    scale: np.ndarray
    nxt: np.ndarray
    dense: np.ndarray | None = None

    def expected(self, Q, states=None):
        """``sum_{s'} pi(s, x, s') Q(s' | s, x)`` as ``(S, X)`` (rows ``states`` only if given)."""
        sel = slice(None) if states is None else states
        r = self.base[sel] + self.scale[sel] * Q.expect(self.nxt, states)
        if self.dense is not None:
            r = r + np.einsum("sxt,sxt->sx", self.dense[sel], Q.dense()[sel])
        return r

    def tensor(self):
        t = self.base[:, :, None] + self.scale[:, :, None] * self.nxt[None, None, :]
        return t + self.dense if self.dense is not None else t

    def bound(self):
        return float(np.max(np.abs(self.tensor())))


# ---------------------------------------------------------------------------
# finite SMDP
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class FiniteSMDP:
    """Grid-indexed finite SMDP.

    Attributes
    ----------
    centers : (S, dim) array
        Cell centers in state units, C-order over the per-axis grids.
    cell_lo, cell_hi : (S, dim) arrays
        Cell boxes ``[lo, hi)``.
    grid_shape : tuple of int
        Cells per axis.
    actions : (X,) array
    thetas : (T, d) array
    Q_true : TransitionTensor
    Q_model : ModelTensor
    payoff : Payoff
    discount : float
    q0 : (S,) array
    min_mass, min_log_mass : float
        Smallest pre-normalisation box mass over all rows (the witnessed r)
        and its logarithm (the mass itself may underflow to 0).
    """

    centers: np.ndarray
    cell_lo: np.ndarray
    cell_hi: np.ndarray
    grid_shape: tuple
    actions: np.ndarray
    thetas: np.ndarray
    Q_true: TransitionTensor
    Q_model: ModelTensor
    payoff: Payoff
    discount: float
    q0: np.ndarray
    min_mass: float = 1.0
    min_log_mass: float = 0.0
    box: tuple = ()
    spec: SMDPSpec | None = None
    growth: tuple | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_states(self):
        return self.centers.shape[0]

    @property
    def n_actions(self):
        return len(self.actions)

    @property
    def n_theta(self):
        return self.thetas.shape[0]

    def state_norm(self):
        if self.spec is not None:
            return self.spec.norm(self.centers)
        return np.sqrt((self.centers**2).sum(axis=1))

    @classmethod
    def from_dense(cls, Q_true, Q_model, payoff, discount, q0=None, thetas=None, actions=None, centers=None):
        """Build from dense arrays (hand-made test problems).

        ``Q_true`` is ``S x X x S``, ``Q_model`` is ``T x S x X x S`` and
        ``payoff`` is ``S x X x S``.
        """
        Qt = TransitionTensor.from_dense(Q_true)
        if np.ndim(Q_model) != 4 or np.shape(Q_model)[1:] != Qt.shape:
            raise ShapeError(f"model tensor has shape {np.shape(Q_model)}, expected (T, {', '.join(map(str, Qt.shape))})")
        Qm = ModelTensor.from_dense(Q_model)
        nS, nX, _ = Qt.shape
        if Qm.index.shape != (nS, nX) or Qm.rows.shape[2] != nS:
            raise ShapeError("true and model tensors disagree in shape")
        pay = np.asarray(payoff, dtype=float)
        if pay.shape != (nS, nX, nS):
            raise ShapeError(f"payoff has shape {pay.shape}, expected {(nS, nX, nS)}")
        for name, rows in (("true", Qt.rows), ("model", Qm.rows)):
            if np.any(rows < 0) or np.any(np.abs(rows.sum(axis=-1) - 1.0) > ROW_TOL):
                raise DomainError(f"{name} rows must be nonnegative and sum to 1")
        if not 0.0 <= discount < 1.0:
            raise DomainError(f"discount must lie in [0, 1), got {discount}")
        zeros = np.zeros((nS, nX))
        centers = np.arange(nS, dtype=float)[:, None] if centers is None else np.atleast_2d(centers).reshape(nS, -1)
        return cls(
            centers=centers,
            cell_lo=centers - 0.5,
            cell_hi=centers + 0.5,
            grid_shape=(nS,),
            actions=np.arange(nX, dtype=float) if actions is None else np.asarray(actions, float),
            thetas=np.arange(Qm.n_theta, dtype=float)[:, None] if thetas is None else np.atleast_2d(thetas).reshape(Qm.n_theta, -1),
            Q_true=Qt,
            Q_model=Qm,
            payoff=Payoff(zeros, zeros, np.zeros(nS), pay),
            discount=float(discount),
            q0=np.full(nS, 1.0 / nS) if q0 is None else np.asarray(q0, float),
        )


# ---------------------------------------------------------------------------
# truncation ladder
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TruncationLadder:
    """Nested compact state boxes and the smallest observed kernel box mass.

    Box masses are also kept as logarithms since far-tail parameter points
    can have masses below the smallest double.
    """

    levels: tuple
    min_kernel_mass: float
    radii: tuple = ()
    per_level_log_mass: tuple = ()
    min_log_mass: float = 0.0
    unchecked: tuple = ("level boxes are assumed to be continuity sets",)

    def __len__(self):
        return len(self.levels)


def level_box(spec, radius):
    """State box ``{|s_j - c_j| <= radius}`` (working coordinates) clipped to the bounds.

    Bounded axes keep their declared (or gridded) box regardless of radius.
    """
    box = []
    for j, ax in enumerate(spec.axes):
        if ax.finite:
            box.append((ax.points[0], ax.points[-1]))
            continue
        given = spec.grid.state_box[j] if j < len(spec.grid.state_box) else None
        if ax.bounded:
            box.append(given or (ax.lower, ax.upper))
            continue
        if radius is None:
            if given is None:
                raise ConfigError("unbounded axis needs a radius or state.box", f"state.box.{j}")
            box.append(given)
            continue
        c = spec.grid.center[j] if j < len(spec.grid.center) else 0.0
        lo, hi = (float(v) for v in ax.from_work(np.array([c - radius, c + radius])))
        box.append((max(lo, ax.lower), min(hi, ax.upper)))
    return tuple(box)


def truncation_bounds(spec, n_levels, base_radius, check_cells=41, theta_points=None):
    """Ladder of boxes ``{||s|| <= base_radius * k}`` for ``k = 1..n_levels``.

    Uses sup-norm boxes in working coordinates. A spec whose every axis is
    bounded yields a single level equal to the state space. Each level is
    checked on a ``check_cells`` grid per axis: every true and model row must
    keep positive mass in the box; the smallest mass is recorded as ``r``.
    """
    if base_radius is None or base_radius <= 0:
        raise DomainError("base_radius must be > 0")
    if n_levels < 1:
        raise DomainError("n_levels must be >= 1")
    compact = all(ax.bounded for ax in spec.axes)
    radii = (None,) if compact else tuple(base_radius * k for k in range(1, n_levels + 1))
    levels, masses = [], []
    for k, R in enumerate(radii, 1):
        box = level_box(spec, R)
        cells = tuple(
            len(ax.points) if ax.finite else min(check_cells, spec.grid.state_cells[j])
            for j, ax in enumerate(spec.axes)
        )
        f = discretize_smdp(spec, box, states=cells, thetas=theta_points, level=k)
        levels.append(box)
        masses.append(f.min_log_mass)
    low = float(min(masses))
    return TruncationLadder(tuple(levels), math.exp(low), tuple(r for r in radii if r is not None), tuple(masses), low)


# ---------------------------------------------------------------------------
# discretisation
# ---------------------------------------------------------------------------


def _axis_cells(ax, lo, hi, n, j):
    if ax.finite:
        pts = np.asarray(ax.points, dtype=float)
        return pts, pts, pts
    if n < 2:
        raise DomainError(f"state axis {j} needs at least 2 cells, got {n}")
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        raise DomainError(f"state axis {j} box [{lo}, {hi}] is not a bounded interval")
    if ax.scale == "log":
        if lo <= 0:
            raise DomainError(f"log axis {j} box must have a positive lower end")
        w = np.linspace(math.log(lo), math.log(hi), n + 1)
        edges = np.exp(w)
        centers = np.exp(0.5 * (w[:-1] + w[1:]))
        edges[0], edges[-1] = lo, hi
    else:
        edges = np.linspace(lo, hi, n + 1)
        centers = 0.5 * (edges[:-1] + edges[1:])
    return edges[:-1], edges[1:], centers


def _coordinate_rows(kernel, j, deps, uses_action, axis_centers, axis_index, centers, actions, lo, hi, thetas):
    """Per-coordinate renormalised 1-D rows and the ``(s, x) -> key`` map.

    Returns ``(rows, log_mass, keys)``: rows ``(T, n_keys, n_j)`` (``T = 1``
    for unparameterised kernels) each summing to 1, the log box mass of each
    row, and keys shaped ``(S, X)``. The box is a product, so normalising each
    coordinate normalises the joint row.
    """
    deps = sorted(deps)
    nS, nX = centers.shape[0], len(actions)
    dims = [len(axis_centers[k]) for k in deps] + ([nX] if uses_action else [])
    n_keys = int(np.prod(dims)) if dims else 1
    key_coords = np.unravel_index(np.arange(n_keys), dims) if dims else ()
    # representative states/actions per key
    rep_s = np.repeat(centers[:1], n_keys, axis=0).copy()
    rep_x = np.full(n_keys, actions[0])
    for pos, k in enumerate(deps):
        rep_s[:, k] = axis_centers[k][key_coords[pos]]
    if uses_action:
        rep_x = actions[key_coords[-1]]
    # key of each (s, x)
    parts = [np.repeat(axis_index[:, k][:, None], nX, axis=1) for k in deps]
    if uses_action:
        parts.append(np.broadcast_to(np.arange(nX)[None, :], (nS, nX)))
    keys = np.ravel_multi_index(parts, dims) if dims else np.zeros((nS, nX), dtype=np.int64)

    nT = 1 if thetas is None else thetas.shape[0]
    S_ = np.tile(rep_s, (nT, 1))
    X_ = np.tile(rep_x, nT)
    th = None if thetas is None else np.repeat(thetas, n_keys, axis=0)
    rows = cell_masses(kernel, j, S_, X_, th, lo, hi)
    mass = rows.sum(axis=1)
    with np.errstate(divide="ignore"):
        log_mass = np.log(mass)
    tiny = np.flatnonzero(mass < UNDERFLOW)
    if tiny.size:
        # far-tail rows: renormalise in log space
        lr = cell_log_masses(kernel, j, S_[tiny], X_[tiny], None if th is None else th[tiny], lo, hi)
        top = lr.max(axis=1)
        ok = np.isfinite(top)
        with np.errstate(invalid="ignore"):
            e = np.exp(lr - np.where(ok, top, 0.0)[:, None])
        log_mass[tiny] = np.where(ok, top + np.log(e.sum(axis=1)), -np.inf)
        rows[tiny] = np.where(ok[:, None], e, 0.0)
        mass[tiny] = np.where(ok, e.sum(axis=1), 1.0)
    good = mass > 0
    rows[good] /= mass[good][:, None]
    return rows.reshape(nT, n_keys, -1), log_mass.reshape(nT, n_keys), keys


def _build_factors(kernel, spec, axis_centers, axis_index, centers, actions, edges, thetas, what, level):
    """Per-axis renormalised rows, their ``(s, x)`` indices and the log of r."""
    dim = spec.state_dim
    factors, indices, logs = [], [], []
    for j, k in enumerate(kernel.coordinates(dim)):
        deps, act = k.dependencies(j)
        if k.param_refs() and thetas is None:
            raise ConfigError("the true kernel cannot depend on the parameter")
        r, lm, key = _coordinate_rows(
            k, j, deps, act, axis_centers, axis_index, centers, actions, edges[j][0], edges[j][1],
            thetas if k.param_refs() else None,
        )
        bad = np.argwhere(~np.isfinite(lm))
        if bad.size:
            t, u = bad[0]
            s, x = np.argwhere(key == u)[0]
            tag = what if r.shape[0] == 1 else f"{what} theta #{t}"
            raise TruncationError(
                f"{tag}: zero mass in level {level} box at state {centers[s].tolist()}, action {actions[x]}",
                level, centers[s], actions[x],
            )
        factors.append(np.ascontiguousarray(r))
        indices.append(key)
        logs.append(lm.min(axis=0))
    # smallest joint box mass: product over axes of the per-key masses
    sizes = [F.shape[1] for F in factors]
    joint = np.unique(np.ravel_multi_index(indices, sizes).ravel())
    sub = np.unravel_index(joint, sizes)
    low = sum(logs[j][sub[j]] for j in range(dim))
    return tuple(factors), tuple(indices), float(np.min(low))


def discretize_smdp(spec, box=None, states=None, actions=None, thetas=None, level=1, radius=None):
    """Finite SMDP on a state box.

    Parameters
    ----------
    spec : SMDPSpec
    box : tuple of (lo, hi), optional
        State box; defaults to the model's grid box or ``radius`` truncation.
    states : tuple of int, optional
        Cells per state axis (default ``spec.grid.state_cells``).
    actions : int, optional
        Action grid points for interval action sets.
    thetas : tuple of int or array, optional
        Points per parameter coordinate, or an explicit ``(T, d)`` grid.
    level : int
        Label used in truncation errors.
    """
    if box is None:
        box = level_box(spec, radius if radius is not None else spec.grid.radius)
    cells = tuple(states) if states is not None else spec.grid.state_cells
    if isinstance(cells, int) or np.isscalar(cells):
        cells = (int(cells),)
    if len(cells) != spec.state_dim or len(box) != spec.state_dim:
        raise ShapeError(f"need {spec.state_dim} state cell counts and box intervals")

    edges, axis_centers = [], []
    for j, ax in enumerate(spec.axes):
        lo, hi, c = _axis_cells(ax, box[j][0], box[j][1], cells[j], j)
        edges.append((lo, hi))
        axis_centers.append(c)
    shape = tuple(len(c) for c in axis_centers)
    mesh = np.meshgrid(*[np.arange(n) for n in shape], indexing="ij")
    axis_index = np.column_stack([m.ravel() for m in mesh])
    centers = np.column_stack([axis_centers[j][axis_index[:, j]] for j in range(len(shape))])
    cell_lo = np.column_stack([edges[j][0][axis_index[:, j]] for j in range(len(shape))])
    cell_hi = np.column_stack([edges[j][1][axis_index[:, j]] for j in range(len(shape))])

    x = spec.actions.grid(actions if actions is not None else spec.grid.action_points)
    if thetas is None or isinstance(thetas, (tuple, list)) and np.ndim(thetas) == 1:
        theta_grid = spec.theta_grid(thetas)
    else:
        theta_grid = np.atleast_2d(np.asarray(thetas, dtype=float))

    fac_t, idx_t, r_true = _build_factors(
        spec.true_kernel, spec, axis_centers, axis_index, centers, x, edges, None, "true kernel", level
    )
    fac_m, idx_m, r_model = _build_factors(
        spec.model_kernel, spec, axis_centers, axis_index, centers, x, edges, theta_grid, "model kernel", level
    )

    base, scale, nxt, dense = spec.payoff.components(centers, x)
    growth = None
    if spec.payoff.growth == "state-bounded":
        growth = (spec.payoff.A, spec.payoff.B)

    q0 = _initial(spec, centers, cell_lo, cell_hi)
    return FiniteSMDP(
        centers=centers,
        cell_lo=cell_lo,
        cell_hi=cell_hi,
        grid_shape=shape,
        actions=x,
        thetas=theta_grid,
        Q_true=TransitionTensor(tuple(F[0] for F in fac_t), idx_t),
        Q_model=ModelTensor(fac_m, idx_m),
        payoff=Payoff(base, scale, nxt, dense),
        discount=spec.discount,
        q0=q0,
        min_mass=math.exp(min(r_true, r_model)),
        min_log_mass=min(r_true, r_model),
        box=tuple(box),
        spec=spec,
        growth=growth,
    )


def _initial(spec, centers, lo, hi):
    nS = centers.shape[0]
    init = spec.initial
    if init == "uniform" or init is None:
        return np.full(nS, 1.0 / nS)
    point = np.atleast_1d(np.asarray(init, dtype=float))
    if point.size != spec.state_dim:
        raise ConfigError("initial state has the wrong dimension", "state.initial")
    inside = np.all((lo <= point) & (point < hi) | (lo == hi) & (lo == point), axis=1)
    if not inside.any():
        # outside the box: start from the nearest cell
        inside = np.zeros(nS, bool)
        inside[np.argmin(((centers - point) ** 2).sum(axis=1))] = True
    q0 = np.zeros(nS)
    q0[np.flatnonzero(inside)[0]] = 1.0
    return q0


# ---------------------------------------------------------------------------
# text dump
# ---------------------------------------------------------------------------


def _write_csv(path, header, columns, rows, comments=()):
    with open(path, "w", newline="\n") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        fh.write(",".join(columns) + "\n")
        for r in rows:
            fh.write(",".join(repr(float(v)) if not isinstance(v, (int, np.integer)) else str(int(v)) for v in r) + "\n")


def dump_csv(fsmdp, directory, comments=(), slices=None):
    """Write the finite SMDP as CSV slices.

    Files: ``states.csv`` (center and cell box per state), ``actions.csv``,
    ``thetas.csv``, ``q_true_x<j>.csv`` (one ``S x S`` slice per action),
    ``q_model_t<t>_x<j>.csv`` for the parameter indices in ``slices``
    (all by default) and ``payoff_x<j>.csv``. Returns the written paths.
    """
    os.makedirs(directory, exist_ok=True)
    written = []
    dim = fsmdp.centers.shape[1]

    def out(name, columns, rows):
        path = os.path.join(directory, name)
        _write_csv(path, None, columns, rows, comments)
        written.append(path)

    scols = [f"s{j}" for j in range(dim)] + [f"lo{j}" for j in range(dim)] + [f"hi{j}" for j in range(dim)]
    out("states.csv", ["index"] + scols,
        ([i, *fsmdp.centers[i], *fsmdp.cell_lo[i], *fsmdp.cell_hi[i]] for i in range(fsmdp.n_states)))
    out("actions.csv", ["index", "x"], ([i, v] for i, v in enumerate(fsmdp.actions)))
    tcols = [f"theta{j}" for j in range(fsmdp.thetas.shape[1])]
    out("thetas.csv", ["index"] + tcols, ([i, *row] for i, row in enumerate(fsmdp.thetas)))
    cols = ["s"] + [f"p{k}" for k in range(fsmdp.n_states)]
    rows, index = fsmdp.Q_true.joint()
    pay = fsmdp.payoff.tensor()
    for j in range(fsmdp.n_actions):
        out(f"q_true_x{j}.csv", cols, ([s, *rows[index[s, j]]] for s in range(fsmdp.n_states)))
        out(f"payoff_x{j}.csv", cols, ([s, *pay[s, j]] for s in range(fsmdp.n_states)))
    for t in range(fsmdp.n_theta) if slices is None else slices:
        rows, index = fsmdp.Q_model.theta(t).joint()
        for j in range(fsmdp.n_actions):
            out(f"q_model_t{t}_x{j}.csv", cols, ([s, *rows[index[s, j]]] for s in range(fsmdp.n_states)))
    return written
