"""Continuous SMDP declarations and kernel cell masses.

An :class:`SMDPSpec` bundles the state, action and parameter domains, the
true transition kernel, the parametric model family, the payoff and the
discount factor. Kernels act coordinate-wise: a multi-dimensional state uses
a ``product`` kernel whose factors each drive one next-state coordinate from
the current state, the action and (for the model family) the parameter.

Cell masses are computed from closed-form CDFs; cells are half-open
``[lo, hi)`` so point masses at a lower edge land in the cell above them.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr, ndtr

from .document import Grid, Interval, ParamRef, parse_document
from .errors import ConfigError, DomainError, RangeError

FAMILIES = (
    "gaussian-linear",
    "lognormal-linear",
    "truncated-exponential",
    "uniform",
    "product",
    "tabulated-matrix",
)
PAYOFF_KINDS = (
    "constant",
    "next-state",
    "log-consumption",
    "production-cost",
    "revenue-cost",
    "tabulated",
)

_DEFAULTS = {
    "gaussian-linear": {"a": 0.0, "c": 0.0, "d": 0.0},
    "lognormal-linear": {"alpha": 0.0, "gamma": 0.0, "sigma": 1.0},
    "truncated-exponential": {"power": 0.0},
    "uniform": {"lo": 0.0, "hi": 1.0, "power": 0.0},
    "tabulated-matrix": {},
}
_REQUIRED = {
    "gaussian-linear": ("b",),
    "lognormal-linear": ("beta",),
    "truncated-exponential": ("theta",),
    "uniform": (),
    "tabulated-matrix": (),
}
# coefficient that must stay strictly positive for the kernel to dominate
SCALE_PARAMS = {
    "gaussian-linear": "b",
    "lognormal-linear": "sigma",
    "truncated-exponential": "theta",
}
_INDEX_PARAMS = ("source", "shock")


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StateAxis:
    """One state coordinate.

    ``lower``/``upper`` may be infinite. ``scale="log"`` means the grid and
    the truncation radius are uniform in ``ln s`` (requires ``lower >= 0``).
    ``points`` turns the axis into a finite label set (cells are the points).
    """

    lower: float = -math.inf
    upper: float = math.inf
    scale: str = "linear"
    points: tuple | None = None

    @property
    def finite(self):
        return self.points is not None

    @property
    def bounded(self):
        if self.finite:
            return True
        if self.scale == "log":
            return self.lower > 0 and math.isfinite(self.upper)
        return math.isfinite(self.lower) and math.isfinite(self.upper)

    def to_work(self, v):
        """Map a state value to the axis' working coordinate."""
        return np.log(v) if self.scale == "log" else np.asarray(v, dtype=float)

    def from_work(self, w):
        return np.exp(w) if self.scale == "log" else np.asarray(w, dtype=float)


@dataclass(frozen=True)
class ActionDomain:
    """Either a compact interval gridded with ``GridSpec.action_points`` or a finite set."""

    interval: tuple[float, float] | None = None
    values: tuple[float, ...] | None = None

    def grid(self, n):
        if self.values is not None:
            return np.asarray(self.values, dtype=float)
        lo, hi = self.interval
        if n is None or n < 1:
            raise ConfigError("an action interval needs action.points >= 1", "action.points")
        return np.linspace(lo, hi, n) if n > 1 else np.array([0.5 * (lo + hi)])


@dataclass(frozen=True)
class GridSpec:
    """Default discretisation carried with a spec (overridable per call)."""

    state_cells: tuple[int, ...]
    state_box: tuple[tuple[float, float] | None, ...]
    radius: float = 10.0
    center: tuple[float, ...] = ()
    action_points: int | None = None
    theta_points: tuple[int, ...] = ()


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """A transition kernel family.

    ``params`` maps coefficient names to floats or :class:`ParamRef`.
    ``factors`` holds one coordinate kernel per state dimension for the
    ``product`` family. ``tables`` (``(T, |X|, n, n)``) and ``table_states``
    back the ``tabulated-matrix`` family; with two tables the ``weight``
    coefficient mixes them as ``(1 - w) T0 + w T1``.
    """

    family: str
    params: Mapping = field(default_factory=dict)
    factors: tuple = ()
    tables: np.ndarray | None = None
    table_states: tuple | None = None
    table_actions: tuple | None = None

    def coordinates(self, dim):
        """Per-coordinate 1-D kernels."""
        if self.family == "product":
            if len(self.factors) != dim:
                raise ConfigError(f"product kernel has {len(self.factors)} factors for a {dim}-D state")
            return self.factors
        if dim != 1:
            raise ConfigError(f"{self.family} kernel on a {dim}-D state needs family = product")
        return (self,)

    def param_refs(self):
        refs = {v.index for v in self.params.values() if isinstance(v, ParamRef)}
        for f in self.factors:
            refs |= f.param_refs()
        return refs

    def coef(self, name, theta):
        """Resolve coefficient ``name`` against ``theta`` (``(N, d)`` array or None)."""
        v = self.params.get(name, _DEFAULTS.get(self.family, {}).get(name))
        if v is None:
            raise ConfigError(f"missing coefficient {name!r} for {self.family}")
        if isinstance(v, ParamRef):
            if theta is None:
                raise ConfigError(f"coefficient {name} is bound to {v} but no parameter was given")
            theta = np.atleast_2d(theta)
            if v.index >= theta.shape[1]:
                raise ConfigError(f"{v} out of range for a {theta.shape[1]}-D parameter")
            return theta[:, v.index]
        return float(v)

    def _active(self, name):
        v = self.params.get(name, _DEFAULTS.get(self.family, {}).get(name, 0.0))
        return isinstance(v, ParamRef) or v != 0

    def dependencies(self, target):
        """State coordinates and whether the action enter this 1-D kernel."""
        fam = self.family
        src = int(self.params.get("source", target))
        if fam == "gaussian-linear":
            return ({src} if self._active("a") else set()), self._active("c")
        if fam == "lognormal-linear":
            coords = {src} if self._active("beta") else set()
            if self._active("gamma"):
                coords.add(int(self.params["shock"]))
            return coords, self._active("beta")
        if fam in ("truncated-exponential", "uniform"):
            return set(), self._active("power")
        if fam == "tabulated-matrix":
            return {target}, True
        raise ConfigError(f"no dependency rule for {fam}")


@dataclass(frozen=True, eq=False)
class PayoffSpec:
    """Per-period payoff pi(s, x, s').

    Coordinates named in ``params`` (``coord``, ``wealth``, ``shock``,
    ``cost``, ``revenue``) index the state vector. ``growth`` is ``bounded``
    or ``state-bounded`` with ``|pi| <= A + B max(|s|, |s'|)``.
    """

    kind: str
    params: Mapping = field(default_factory=dict)
    growth: str = "bounded"
    A: float = 0.0
    B: float = 0.0
    table: np.ndarray | None = None

    def _i(self, name, default=0):
        return int(self.params.get(name, default))

    def components(self, centers, actions):
        """Separable form ``pi = base[s, x] + scale[s, x] * nxt[s']``.

        Returns ``(base, scale, nxt, dense)``; ``dense`` is a full
        ``(S, X, S)`` tensor for tabulated payoffs and None otherwise.
        """
        centers = np.atleast_2d(centers)
        x = np.asarray(actions, dtype=float)[None, :]
        nS = centers.shape[0]
        zero_sx = np.zeros((nS, x.shape[1]))
        k = self.kind
        if k == "constant":
            return zero_sx + float(self.params.get("value", 0.0)), zero_sx, np.zeros(nS), None
        if k == "next-state":
            return zero_sx, zero_sx + 1.0, centers[:, self._i("coord")].copy(), None
        if k == "log-consumption":
            y = centers[:, self._i("wealth", 0)][:, None]
            z = centers[:, self._i("shock", 1)][:, None]
            with np.errstate(divide="ignore", invalid="ignore"):
                base = z * np.log(y * (1.0 - x))
            base = np.where(z == 0, 0.0, base)
            return base, zero_sx, np.zeros(nS), None
        if k == "production-cost":
            z = centers[:, self._i("shock", 0)][:, None]
            with np.errstate(divide="ignore", invalid="ignore"):
                base = np.where(z == 0, 0.0, z * np.log(x))
            return base, zero_sx - x, centers[:, self._i("cost", 1)].copy(), None
        if k == "revenue-cost":
            z = centers[:, self._i("shock", 0)][:, None]
            return zero_sx - x**2, z * x, centers[:, self._i("revenue", 1)].copy(), None
        if k == "tabulated":
            dense = np.transpose(np.asarray(self.table, dtype=float), (1, 0, 2))
            return zero_sx, zero_sx, np.zeros(nS), dense
        raise ConfigError(f"unknown payoff kind {k!r}", "payoff.kind")

    def evaluate(self, s, x, s2):
        """pi at matched rows of states ``s``, actions ``x`` and next states ``s2``."""
        s, s2 = np.atleast_2d(s), np.atleast_2d(s2)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.kind == "tabulated":
            raise ConfigError("tabulated payoffs are only defined on their grid")
        out = np.empty(len(x))
        for i in range(len(x)):
            base, scale, _, _ = self.components(s[i : i + 1], x[i : i + 1])
            _, _, nxt, _ = self.components(s2[i : i + 1], x[i : i + 1])
            out[i] = base[0, 0] + scale[0, 0] * nxt[0]
        return out


@dataclass(frozen=True, eq=False)
class SMDPSpec:
    """Validated continuous SMDP."""

    axes: tuple[StateAxis, ...]
    actions: ActionDomain
    param_box: tuple[tuple[float, float], ...]
    true_kernel: KernelSpec
    model_kernel: KernelSpec
    payoff: PayoffSpec
    discount: float
    grid: GridSpec
    initial: object = "uniform"
    name: str = ""

    @property
    def state_dim(self):
        return len(self.axes)

    @property
    def param_dim(self):
        return len(self.param_box)

    def norm(self, states):
        """Euclidean norm in working coordinates (``|ln s|`` on log axes)."""
        states = np.atleast_2d(np.asarray(states, dtype=float))
        w = np.column_stack([ax.to_work(states[:, j]) for j, ax in enumerate(self.axes)])
        return np.sqrt((w**2).sum(axis=1))

    def theta_grid(self, points=None):
        """Parameter grid drawn from the absolutely continuous set.

        Grid values where a bound scale coefficient would be <= 0 are dropped
        (equivalently, shifted onto the smallest positive grid value).
        """
        points = tuple(points or self.grid.theta_points)
        if len(points) != self.param_dim:
            raise ConfigError(f"need {self.param_dim} theta grid counts, got {len(points)}", "theta.grid")
        positive = _scale_refs(self.model_kernel)
        axes = []
        for i, ((lo, hi), n) in enumerate(zip(self.param_box, points)):
            g = np.linspace(lo, hi, n) if n > 1 else np.array([lo if lo == hi else 0.5 * (lo + hi)])
            if i in positive:
                g = g[g > 0]
                if g.size == 0:
                    raise DomainError(f"theta coordinate {i} has no positive grid value")
            axes.append(g)
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])


def _scale_refs(kernel):
    out = set()
    for f in kernel.factors or (kernel,):
        name = SCALE_PARAMS.get(f.family)
        if name and isinstance(f.params.get(name), ParamRef):
            out.add(f.params[name].index)
        if f.family == "truncated-exponential" and isinstance(f.params.get("support"), ParamRef):
            out.add(f.params["support"].index)
    return out


# ---------------------------------------------------------------------------
# cell masses
# ---------------------------------------------------------------------------


def _normal_mass(zl, zu):
    # subtract survival functions on the upper side to keep tail precision
    return np.where(zl >= 0, ndtr(-zl) - ndtr(-zu), ndtr(zu) - ndtr(zl))


def _point_mass(at, lo, hi):
    return ((lo[None, :] <= at[:, None]) & (at[:, None] < hi[None, :])).astype(float)


def _scaled_shock(kernel, x, lo, hi, shock_mass):
    """Masses for s' = x**power * eps given the shock's mass function."""
    p = kernel.coef("power", None)
    with np.errstate(divide="ignore"):
        scale = np.where(x == 0, 0.0, np.abs(x) ** p) if p != 0 else np.ones_like(x)
    if p < 0 and np.any(x == 0):
        raise DomainError(f"{kernel.family} with power {p} is undefined at action 0")
    pos = scale > 0
    out = np.empty((len(x), len(lo)))
    if np.any(pos):
        sc = scale[pos][:, None]
        out[pos] = shock_mass(lo[None, :] / sc, hi[None, :] / sc, pos)
    if np.any(~pos):
        out[~pos] = _point_mass(np.zeros((~pos).sum()), lo, hi)
    return out


def cell_masses(kernel, target, s, x, theta, lo, hi):
    """Masses of cells ``[lo_i, hi_i)`` along coordinate ``target``.

    ``kernel`` is a 1-D coordinate kernel, ``s`` an ``(N, dim)`` array of
    current states, ``x`` an ``(N,)`` array of actions and ``theta`` an
    ``(N, d)`` array (or None for kernels without parameter bindings).
    Returns an ``(N, len(lo))`` array (unnormalised).
    """
    s = np.atleast_2d(np.asarray(s, dtype=float))
    x = np.asarray(x, dtype=float).reshape(-1)
    lo = np.asarray(lo, dtype=float).reshape(-1)
    hi = np.asarray(hi, dtype=float).reshape(-1)
    N = s.shape[0]
    fam = kernel.family

    def full(v):
        return np.broadcast_to(np.asarray(v, dtype=float), (N,))

    if fam == "gaussian-linear":
        src = int(kernel.params.get("source", target))
        mean = full(kernel.coef("a", theta)) * s[:, src] + full(kernel.coef("c", theta)) * x
        mean = mean + full(kernel.coef("d", theta))
        sd = full(kernel.coef("b", theta))
        if np.any(sd < 0):
            raise DomainError("gaussian-linear scale b must be >= 0")
        out = np.empty((N, len(lo)))
        pos = sd > 0
        if np.any(pos):
            m, v = mean[pos][:, None], sd[pos][:, None]
            out[pos] = _normal_mass((lo[None, :] - m) / v, (hi[None, :] - m) / v)
        if np.any(~pos):
            out[~pos] = _point_mass(mean[~pos], lo, hi)
        return out

    if fam == "lognormal-linear":
        src = int(kernel.params.get("source", target))
        base = x * s[:, src]
        if np.any(base <= 0):
            raise DomainError("lognormal-linear needs x * s > 0")
        mu = full(kernel.coef("alpha", theta)) + full(kernel.coef("beta", theta)) * np.log(base)
        if kernel._active("gamma"):
            mu = mu + full(kernel.coef("gamma", theta)) * s[:, int(kernel.params["shock"])]
        sig = full(kernel.coef("sigma", theta))
        if np.any(sig <= 0):
            raise DomainError("lognormal-linear sigma must be > 0")
        with np.errstate(divide="ignore"):
            llo = np.where(lo > 0, np.log(np.maximum(lo, 1e-300)), -np.inf)
            lhi = np.where(hi > 0, np.log(np.maximum(hi, 1e-300)), -np.inf)
        m, v = mu[:, None], sig[:, None]
        return _normal_mass((llo[None, :] - m) / v, (lhi[None, :] - m) / v)

    if fam == "truncated-exponential":
        th = full(kernel.coef("theta", theta))
        if "support" in kernel.params:
            b = full(kernel.coef("support", theta))
        elif "k" in kernel.params:
            b = full(kernel.coef("k", theta)) * th
        else:
            raise ConfigError("truncated-exponential needs 'support' or 'k'")
        if np.any(th <= 0) or np.any(b <= 0):
            raise DomainError("truncated-exponential needs theta > 0 and support > 0")

        def shock(l, u, rows):
            t, bb = th[rows][:, None], b[rows][:, None]
            l = np.clip(l, 0.0, bb)
            u = np.clip(u, 0.0, bb)
            return np.exp(-l / t) * -np.expm1(-(u - l) / t) / -np.expm1(-bb / t)

        return _scaled_shock(kernel, x, lo, hi, shock)

    if fam == "uniform":
        a, b = kernel.coef("lo", theta), kernel.coef("hi", theta)
        a, b = full(a), full(b)
        if np.any(b <= a):
            raise DomainError("uniform needs lo < hi")

        def shock(l, u, rows):
            aa, bb = a[rows][:, None], b[rows][:, None]
            return (np.clip(u, aa, bb) - np.clip(l, aa, bb)) / (bb - aa)

        return _scaled_shock(kernel, x, lo, hi, shock)

    if fam == "tabulated-matrix":
        pts = np.asarray(kernel.table_states, dtype=float)
        acts = np.asarray(kernel.table_actions, dtype=float)
        si = _lookup(pts, s[:, target], "state")
        xi = _lookup(acts, x, "action")
        ci = _lookup(pts, lo, "cell")
        if not np.array_equal(lo, hi):
            raise RangeError("tabulated kernels only have point cells")
        T = kernel.tables
        rows = T[0][xi, si][:, ci]
        if T.shape[0] == 2:
            w = full(kernel.coef("weight", theta))[:, None]
            rows = (1.0 - w) * rows + w * T[1][xi, si][:, ci]
        return rows

    raise ConfigError(f"unknown kernel family {fam!r}")


def _normal_log_mass(zl, zu):
    with np.errstate(divide="ignore", invalid="ignore"):
        upper = log_ndtr(-zl) + np.log1p(-np.exp(log_ndtr(-zu) - log_ndtr(-zl)))
        lower = log_ndtr(zu) + np.log1p(-np.exp(log_ndtr(zl) - log_ndtr(zu)))
        mid = np.log(ndtr(zu) - ndtr(zl))
    out = np.where(zl >= 0, upper, np.where(zu <= 0, lower, mid))
    return np.where(zu <= zl, -np.inf, out)


def cell_log_masses(kernel, target, s, x, theta, lo, hi):
    """Logarithms of :func:`cell_masses`, accurate far in the tails.

    Gaussian and lognormal rows are evaluated with log-CDFs so that boxes
    many standard deviations from the mean still get a well-defined
    renormalised law; other families take the log of the plain masses.
    """
    fam = kernel.family
    if fam not in ("gaussian-linear", "lognormal-linear"):
        with np.errstate(divide="ignore"):
            return np.log(cell_masses(kernel, target, s, x, theta, lo, hi))
    s = np.atleast_2d(np.asarray(s, dtype=float))
    x = np.asarray(x, dtype=float).reshape(-1)
    lo = np.asarray(lo, dtype=float).reshape(-1)
    hi = np.asarray(hi, dtype=float).reshape(-1)
    N = s.shape[0]

    def full(v):
        return np.broadcast_to(np.asarray(v, dtype=float), (N,))

    src = int(kernel.params.get("source", target))
    if fam == "gaussian-linear":
        mean = full(kernel.coef("a", theta)) * s[:, src] + full(kernel.coef("c", theta)) * x
        mean = mean + full(kernel.coef("d", theta))
        sd = full(kernel.coef("b", theta))
        if np.any(sd <= 0):
            with np.errstate(divide="ignore"):
                return np.log(cell_masses(kernel, target, s, x, theta, lo, hi))
        m, v = mean[:, None], sd[:, None]
        return _normal_log_mass((lo[None, :] - m) / v, (hi[None, :] - m) / v)
    base = x * s[:, src]
    if np.any(base <= 0):
        raise DomainError("lognormal-linear needs x * s > 0")
    mu = full(kernel.coef("alpha", theta)) + full(kernel.coef("beta", theta)) * np.log(base)
    if kernel._active("gamma"):
        mu = mu + full(kernel.coef("gamma", theta)) * s[:, int(kernel.params["shock"])]
    sig = full(kernel.coef("sigma", theta))
    with np.errstate(divide="ignore"):
        llo = np.where(lo > 0, np.log(np.maximum(lo, 1e-300)), -np.inf)
        lhi = np.where(hi > 0, np.log(np.maximum(hi, 1e-300)), -np.inf)
    m, v = mu[:, None], sig[:, None]
    return _normal_log_mass((llo[None, :] - m) / v, (lhi[None, :] - m) / v)


def _lookup(points, values, what):
    idx = np.searchsorted(points, values)
    idx = np.clip(idx, 0, len(points) - 1)
    if not np.all(points[idx] == values):
        bad = np.asarray(values)[points[idx] != values][0]
        raise RangeError(f"tabulated kernel queried at {what} {bad!r} outside its grid")
    return idx


def kernel_mass(kernel, theta, s, x, cell):
    """Probability that the next state lands in ``cell``.

    Parameters
    ----------
    kernel : KernelSpec
    theta : array_like or "true"
        Parameter point for bound coefficients; ``"true"`` for an unbound kernel.
    s : array_like
        Current state (length ``dim``).
    x : float
        Action.
    cell : sequence of (lo, hi)
        One interval per state coordinate (a bare pair is accepted for 1-D).
        Finite-axis cells are degenerate ``(p, p)``.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    dim = s.size
    if dim == 1 and len(cell) == 2 and np.isscalar(cell[0]):
        cell = (cell,)
    if len(cell) != dim:
        raise ConfigError(f"cell has {len(cell)} intervals for a {dim}-D state")
    th = None if (isinstance(theta, str) and theta == "true") else np.atleast_2d(np.asarray(theta, dtype=float))
    mass = 1.0
    for j, k in enumerate(kernel.coordinates(dim)):
        lo, hi = cell[j]
        mass *= float(cell_masses(k, j, s[None, :], [x], th, [lo], [hi])[0, 0])
    return mass


# ---------------------------------------------------------------------------
# building from documents
# ---------------------------------------------------------------------------


def _indexed(cfg, key, dim, default=None):
    """Look up ``key.j`` for each coordinate, falling back to ``key`` for 1-D."""
    out = []
    for j in range(dim):
        if f"{key}.{j}" in cfg:
            out.append(cfg[f"{key}.{j}"])
        elif key in cfg and (dim == 1 or not isinstance(cfg[key], tuple) or key.endswith("points")):
            out.append(cfg[key])
        else:
            out.append(default)
    return out


def _as_tuple(v):
    return v if isinstance(v, tuple) else (v,)


def _kernel_from(cfg, prefix, dim, action_values, state_points):
    family = cfg.get(f"{prefix}.family")
    if family is None:
        raise ConfigError("missing kernel family", f"{prefix}.family")
    if family not in FAMILIES:
        raise ConfigError(f"unknown family {family!r}; expected one of {FAMILIES}", f"{prefix}.family")
    if family == "product":
        factors = tuple(
            _kernel_from(cfg, f"{prefix}.{j}", dim, action_values, state_points) for j in range(dim)
        )
        return KernelSpec("product", {}, factors)
    params = {}
    tables = []
    p = prefix + "."
    for key, val in cfg.items():
        if not key.startswith(p):
            continue
        name = key[len(p) :]
        if name == "family" or (name.split(".")[0].isdigit()):
            continue
        if name.startswith("table"):
            tables.append((name, val))
            continue
        if isinstance(val, (Interval, Grid, tuple, str)) and name not in _INDEX_PARAMS:
            raise ConfigError("expected a number or param[i]", key)
        params[name] = val if isinstance(val, ParamRef) else (int(val) if name in _INDEX_PARAMS else float(val))
    for req in _REQUIRED[family]:
        if req not in params:
            raise ConfigError("missing coefficient", f"{prefix}.{req}")
    spec = {"family": family, "params": params}
    if family == "truncated-exponential" and "support" not in params and "k" not in params:
        raise ConfigError("missing coefficient (support or k)", f"{prefix}.support")
    if family == "tabulated-matrix":
        if state_points is None:
            raise ConfigError("tabulated kernels need a finite state axis (state.points)", f"{prefix}.table")
        spec.update(_tables(tables, prefix, action_values, state_points))
    _check_literals(family, params, prefix)
    return KernelSpec(**spec)


def _tables(items, prefix, action_values, state_points):
    # keys: table.<x> (one table set) or table.<t>.<x> (two sets mixed by weight)
    sets = {}
    for name, val in items:
        parts = name.split(".")[1:]
        if len(parts) == 1:
            t, xi = 0, int(parts[0])
        elif len(parts) == 2:
            t, xi = int(parts[0]), int(parts[1])
        else:
            raise ConfigError("expected table.<x> or table.<t>.<x>", f"{prefix}.{name}")
        mat = np.array(val, dtype=float)
        sets.setdefault(t, {})[xi] = mat
    n, nx = len(state_points), len(action_values)
    T = np.zeros((len(sets), nx, n, n))
    for t, by_x in sets.items():
        for xi in range(nx):
            if xi not in by_x:
                raise ConfigError("missing table for action", f"{prefix}.table.{xi}")
            mat = by_x[xi]
            if mat.shape != (n, n):
                raise ConfigError(f"table must be {n}x{n}", f"{prefix}.table.{xi}")
            if np.any(mat < 0) or np.any(np.abs(mat.sum(axis=1) - 1.0) > 1e-8):
                raise DomainError(f"{prefix}.table.{xi}: rows must be nonnegative and sum to 1 within 1e-8")
            T[t, xi] = mat
    if T.shape[0] > 2:
        raise ConfigError("at most two table sets", f"{prefix}.table")
    return {
        "tables": T,
        "table_states": tuple(float(v) for v in state_points),
        "table_actions": tuple(float(v) for v in action_values),
    }


def _check_literals(family, params, prefix):
    def lit(name):
        v = params.get(name)
        return None if isinstance(v, ParamRef) else v

    if family == "truncated-exponential":
        for name in ("theta", "support", "k"):
            v = lit(name)
            if v is not None and v <= 0:
                raise DomainError(f"{prefix}.{name} must be > 0")
    if family == "gaussian-linear" and lit("b") is not None and lit("b") < 0:
        raise DomainError(f"{prefix}.b must be >= 0")
    if family == "lognormal-linear" and lit("sigma") is not None and lit("sigma") <= 0:
        raise DomainError(f"{prefix}.sigma must be > 0")
    if family == "uniform" and lit("lo") is not None and lit("hi") is not None and lit("hi") <= lit("lo"):
        raise DomainError(f"{prefix}: uniform needs lo < hi")


def build_smdp(config, name=""):
    """Validate a model document (text or parsed dict) into an :class:`SMDPSpec`.

    Raises :class:`ConfigError` with the dotted key for malformed entries and
    :class:`DomainError` for values outside their domain (discount outside
    ``[0, 1)``, unbounded parameter boxes, open action sets).
    """
    cfg = parse_document(config) if isinstance(config, str) else dict(config)

    # --- state
    dim = int(cfg.get("state.dim", 1))
    if dim < 1:
        raise DomainError("state.dim must be a positive integer")
    points = cfg.get("state.points")
    axes = []
    for j, (bounds, scale) in enumerate(
        zip(_indexed(cfg, "state.bounds", dim, "unbounded"), _indexed(cfg, "state.scale", dim, "linear"))
    ):
        path = f"state.bounds.{j}" if dim > 1 else "state.bounds"
        if points is not None:
            if dim != 1:
                raise ConfigError("finite state axes are 1-D only", "state.points")
            pts = tuple(sorted(float(v) for v in _as_tuple(points)))
            axes.append(StateAxis(pts[0], pts[-1], "linear", pts))
            continue
        if scale not in ("linear", "log"):
            raise ConfigError("scale must be linear or log", f"state.scale.{j}")
        if bounds == "unbounded":
            lo, hi = (0.0, math.inf) if scale == "log" else (-math.inf, math.inf)
        elif isinstance(bounds, Interval):
            lo, hi = bounds.lo, bounds.hi
        else:
            raise ConfigError("expected [lo,hi] or unbounded", path)
        if scale == "log" and lo < 0:
            raise DomainError(f"{path}: log axes need a nonnegative lower bound")
        axes.append(StateAxis(lo, hi, scale))
    axes = tuple(axes)

    # --- actions
    if "action.values" in cfg:
        vals = tuple(float(v) for v in _as_tuple(cfg["action.values"]))
        actions = ActionDomain(values=vals)
        action_points = len(vals)
    elif "action.grid" in cfg:
        g = cfg["action.grid"]
        if not isinstance(g, Grid):
            raise ConfigError("expected grid(lo,hi,n)", "action.grid")
        actions = ActionDomain(interval=(g.lo, g.hi))
        action_points = g.n
    elif "action.interval" in cfg:
        iv = cfg["action.interval"]
        if not isinstance(iv, Interval):
            raise ConfigError("expected [lo,hi]", "action.interval")
        actions = ActionDomain(interval=(iv.lo, iv.hi))
        action_points = int(cfg.get("action.points", 11))
    else:
        actions = ActionDomain(values=(0.0,))
        action_points = 1
    if actions.interval is not None and not all(math.isfinite(v) for v in actions.interval):
        raise DomainError("action interval must be bounded")
    action_values = actions.grid(action_points)

    # --- parameters
    refs = set()
    box, counts = [], []
    d = int(cfg.get("theta.dim", 0))
    keys = [k for k in cfg if k.startswith("theta.grid") or k.startswith("theta.box")]
    if d == 0 and keys:
        d = max((int(k.split(".")[2]) + 1 if k.count(".") == 2 else 1) for k in keys)
    for i in range(d):
        g = cfg.get(f"theta.grid.{i}", cfg.get("theta.grid") if d == 1 else None)
        b = cfg.get(f"theta.box.{i}", cfg.get("theta.box") if d == 1 else None)
        if isinstance(g, Grid):
            lo, hi, n = g.lo, g.hi, g.n
        elif isinstance(b, Interval):
            lo, hi, n = b.lo, b.hi, int(cfg.get(f"theta.points.{i}", cfg.get("theta.points", 11)))
        else:
            raise ConfigError("expected grid(lo,hi,n) or a [lo,hi] box", f"theta.grid.{i}")
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise DomainError(f"theta.grid.{i}: parameter box must be bounded")
        box.append((lo, hi))
        counts.append(n)

    state_points = axes[0].points if axes[0].finite else None
    true_kernel = _kernel_from(cfg, "kernel.true", dim, action_values, state_points)
    model_kernel = _kernel_from(cfg, "kernel.model", dim, action_values, state_points)
    if true_kernel.param_refs():
        raise ConfigError("the true kernel cannot bind param[i]", "kernel.true")
    refs = model_kernel.param_refs()
    if refs and max(refs) >= d:
        raise ConfigError(f"param[{max(refs)}] used but theta has {d} coordinates", "kernel.model")
    # validate coordinate structure early
    true_kernel.coordinates(dim)
    model_kernel.coordinates(dim)

    # --- payoff
    kind = cfg.get("payoff.kind", "constant")
    if kind not in PAYOFF_KINDS:
        raise ConfigError(f"unknown payoff kind {kind!r}", "payoff.kind")
    pparams = {
        k[len("payoff.") :]: v
        for k, v in cfg.items()
        if k.startswith("payoff.") and k not in ("payoff.kind", "payoff.growth", "payoff.A", "payoff.B")
        and not k.startswith("payoff.table")
    }
    table = None
    if kind == "tabulated":
        if state_points is None:
            raise ConfigError("tabulated payoffs need a finite state axis", "payoff.table")
        mats = []
        for xi in range(len(action_values)):
            key = f"payoff.table.{xi}"
            if key not in cfg:
                raise ConfigError("missing payoff table", key)
            mats.append(np.array(cfg[key], dtype=float))
        table = np.stack(mats)
    growth = cfg.get("payoff.growth", "bounded")
    if growth not in ("bounded", "state-bounded"):
        raise ConfigError("growth must be bounded or state-bounded", "payoff.growth")
    payoff = PayoffSpec(kind, pparams, growth, float(cfg.get("payoff.A", 0.0)), float(cfg.get("payoff.B", 0.0)), table)

    # --- solve
    delta = float(cfg.get("solve.discount", 0.9))
    if not 0.0 <= delta < 1.0:
        raise DomainError(f"solve.discount must lie in [0, 1), got {delta}")

    # --- grid defaults
    cells, sbox = [], []
    for j, ax in enumerate(axes):
        c = _indexed(cfg, "state.cells", dim, None)[j]
        g = _indexed(cfg, "state.grid", dim, None)[j]
        b = _indexed(cfg, "state.box", dim, None)[j]
        if isinstance(g, Grid):
            b, c = Interval(g.lo, g.hi), g.n
        if ax.finite:
            c = len(ax.points)
        if c is None:
            raise ConfigError("missing cell count", f"state.cells.{j}" if dim > 1 else "state.cells")
        if isinstance(c, bool) or not isinstance(c, (int, float)) or c != int(c) or c < 1:
            raise ConfigError(f"cell count must be a positive integer, got {c!r}", f"state.cells.{j}" if dim > 1 else "state.cells")
        cells.append(int(c))
        sbox.append((b.lo, b.hi) if isinstance(b, Interval) else None)
    centers = tuple(float(v) for v in _indexed(cfg, "state.center", dim, 0.0))
    grid = GridSpec(
        tuple(cells),
        tuple(sbox),
        float(cfg.get("state.radius", 10.0)),
        centers,
        action_points,
        tuple(counts),
    )
    initial = cfg.get("state.initial", "uniform")

    spec = SMDPSpec(axes, actions, tuple(box), true_kernel, model_kernel, payoff, delta, grid, initial, name)
    check_payoff_growth(spec)
    return spec


def check_payoff_growth(spec, n_samples=256, seed=0):
    """Verify the declared growth bound on sampled (s, x, s') triples.

    Only ``state-bounded`` payoffs are checked; samples are drawn from the
    default discretisation box.
    """
    pay = spec.payoff
    if pay.growth != "state-bounded" or pay.kind == "tabulated":
        return True
    rng = np.random.default_rng(seed)
    lo, hi = [], []
    for j, ax in enumerate(spec.axes):
        box = spec.grid.state_box[j]
        if box is None:
            c = spec.grid.center[j] if j < len(spec.grid.center) else 0.0
            w = (c - spec.grid.radius, c + spec.grid.radius)
            box = tuple(float(v) for v in ax.from_work(np.array(w)))
            if ax.scale != "log":
                box = (max(box[0], ax.lower), min(box[1], ax.upper))
        lo.append(box[0])
        hi.append(box[1])
    lo, hi = np.array(lo), np.array(hi)
    s = lo + (hi - lo) * rng.random((n_samples, len(lo)))
    s2 = lo + (hi - lo) * rng.random((n_samples, len(lo)))
    xs = spec.actions.grid(spec.grid.action_points)
    x = xs[rng.integers(0, len(xs), n_samples)]
    vals = np.abs(pay.evaluate(s, x, s2))
    bound = pay.A + pay.B * np.maximum(spec.norm(s), spec.norm(s2))
    bad = np.flatnonzero(vals > bound * (1 + 1e-12) + 1e-12)
    if bad.size:
        i = bad[0]
        raise DomainError(
            f"payoff growth bound violated at s={s[i].tolist()}, x={x[i]}, s'={s2[i].tolist()}: "
            f"|pi|={vals[i]:.6g} > {bound[i]:.6g}"
        )
    return True
