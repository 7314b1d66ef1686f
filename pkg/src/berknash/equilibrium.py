"""Berk-Nash equilibrium search, verification and diagnostics.

An equilibrium of a finite SMDP is a pair ``(m, nu)`` where

* every action in the support of ``m`` is optimal under the belief-mixed
  kernel ``Q_nu`` (optimality),
* ``nu`` is supported on the divergence minimisers given ``m`` (belief
  restriction),
* the state marginal of ``m`` is invariant under the true kernel
  (stationarity).

The search is damped best-response iteration followed, when the belief keeps
alternating between parameters, by a two-point refinement that bisects on the
belief weight and on the mixing of the two adjacent best responses.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtr

from .bellman import mix_kernel, optimal_actions, solve_bellman
from .discretize import discretize_smdp, level_box
from .divergence import argmin_band, kl_profile
from .model import cell_masses
from .errors import DomainError, NonConvergenceError
from .stationary import JointMeasure, stationarity_residual, stationary_distribution, tv


@dataclass(frozen=True)
class Tolerances:
    """Acceptance thresholds for the three equilibrium conditions.

    ``optimality`` is relative to ``1 + max|V|``, ``belief`` to
    ``1 + |min K|``; ``stationarity`` is an absolute TV distance. Cells with
    weight at most ``support`` are treated as outside the support.
    """

    optimality: float = 1e-6
    belief: float = 1e-8
    stationarity: float = 1e-8
    support: float = 1e-12
    eps_tv: float = 1e-11

    def eps_V(self):
        return self.optimality / 8


@dataclass(eq=False)
class EquilibriumReport:
    """Candidate ``(m, nu)`` with its three residuals."""

    m: np.ndarray
    nu: np.ndarray
    optimality_gap: float
    belief_gap: float
    stationarity_residual: float
    converged: bool
    tolerances: Tolerances
    iterations: int = 0
    trace: list = field(default_factory=list)
    kl: np.ndarray | None = None
    band: np.ndarray | None = None
    values: np.ndarray | None = None
    value_scale: float = 0.0
    kl_min: float = 0.0
    singleton_band: bool | None = None
    method: str = "verify"
    restart: int = 0

    @property
    def marginal(self):
        return self.m.sum(axis=1)

    def normalized_gaps(self):
        t = self.tolerances
        return (
            self.optimality_gap / (t.optimality * (1 + self.value_scale)),
            self.belief_gap / (t.belief * (1 + abs(self.kl_min))),
            self.stationarity_residual / t.stationarity,
        )

    def max_gap(self):
        return max(self.normalized_gaps())

    def passes(self):
        return self.max_gap() <= 1.0

    def belief_mean(self, thetas):
        return self.nu @ thetas

    def policy(self):
        """Conditional action law ``m(x | s)`` (uniform where ``m_S(s) = 0``)."""
        ms = self.marginal
        out = np.full(self.m.shape, 1.0 / self.m.shape[1])
        pos = ms > 0
        out[pos] = self.m[pos] / ms[pos, None]
        return out


def _policy_hash(policy):
    return hashlib.sha1(np.ascontiguousarray(np.round(policy, 12)).tobytes()).hexdigest()[:12]


def verify_equilibrium(fsmdp, m, nu, tolerances=None):
    """Recompute the three equilibrium residuals for ``(m, nu)``.

    Pure function of its inputs. ``optimality_gap`` is the largest action
    value shortfall over the support of ``m`` under the ``nu``-mixed model,
    ``belief_gap`` the largest ``K(m, theta) - min K`` over the support of
    ``nu``, ``stationarity_residual`` the TV distance between ``m_S`` and
    its image under the true kernel.
    """
    tol = tolerances or Tolerances()
    m = np.asarray(getattr(m, "weights", m), dtype=float).reshape(fsmdp.n_states, fsmdp.n_actions)
    nu = np.asarray(nu, dtype=float).reshape(-1)
    m = m / m.sum()
    nu = nu / nu.sum()
    Qbar = mix_kernel(nu, fsmdp)
    V = solve_bellman(fsmdp, Qbar, tol.eps_V())
    shortfall = V.q_values.max(axis=1, keepdims=True) - V.q_values
    on = m > tol.support
    opt_gap = float(np.max(np.where(on, shortfall, 0.0)))
    K = kl_profile(m, fsmdp)
    finite = np.isfinite(K)
    k_min = float(K[finite].min()) if finite.any() else np.inf
    on_nu = nu > tol.support
    belief_gap = float(np.max(K[on_nu] - k_min)) if np.isfinite(k_min) else np.inf
    stat = stationarity_residual(m, fsmdp.Q_true)
    band, _ = argmin_band(K, tol.belief * (1 + abs(k_min))) if np.isfinite(k_min) else (np.array([], int), 0)
    rep = EquilibriumReport(
        m=m,
        nu=nu,
        optimality_gap=opt_gap,
        belief_gap=belief_gap,
        stationarity_residual=stat,
        converged=False,
        tolerances=tol,
        kl=K,
        band=band,
        values=V.values,
        value_scale=float(np.max(np.abs(V.values))),
        kl_min=k_min if np.isfinite(k_min) else 0.0,
    )
    rep.converged = bool(rep.passes())
    return rep


# ---------------------------------------------------------------------------
# search
# ---------------------------------------------------------------------------


# value accuracy of the search relative to the verification accuracy
_SHARPEN = 1e-3


class _Search:
    """Shared evaluation helpers for one finite SMDP."""

    def __init__(self, fsmdp, tol):
        self.f = fsmdp
        self.tol = tol
        self._mu = None
        self._V = None

    def band(self, m):
        K = kl_profile(m, self.f)
        band, _ = argmin_band(K, self._band_tol(K))
        return band, K

    def _band_tol(self, K):
        finite = K[np.isfinite(K)]
        k_min = float(finite.min()) if finite.size else 0.0
        return self.tol.belief * (1 + abs(k_min)) * 0.5

    def response(self, nu):
        """Best-response correspondence and values under belief ``nu``.

        Values are solved well below the verification tolerance and only
        actions within the value error of the best one are kept: on flat
        objectives the tolerance band spans many grid actions, and mixing
        over all of them would bias the induced measure.
        """
        Qbar = mix_kernel(nu, self.f)
        eps = self.tol.eps_V() * _SHARPEN
        V = solve_bellman(self.f, Qbar, eps, V0=self._V)
        self._V = V.values
        corr = optimal_actions(self.f, Qbar, V, 4 * eps)
        return corr, V

    def stationary(self, policy):
        try:
            res = stationary_distribution(self.f.Q_true, policy, self.tol.eps_tv, q0=self._mu)
        except NonConvergenceError as err:
            res = err.result
        self._mu = res.marginal
        return res.weights


def _uniform_on(idx, n):
    nu = np.zeros(n)
    nu[idx] = 1.0 / len(idx)
    return nu


def _initial_measure(search, rng):
    f = search.f
    if rng is None:
        policy = np.full((f.n_states, f.n_actions), 1.0 / f.n_actions)
    else:
        policy = rng.dirichlet(np.ones(f.n_actions), size=f.n_states)
    return search.stationary(policy)


# visits of one belief band after which damping is abandoned
_CYCLE_LIMIT = 12


def _best_response_run(search, m, damping, max_outer, trace, restart):
    f = search.f
    lam = damping
    seen = {}
    best = None
    for k in range(1, max_outer + 1):
        band, K = search.band(m)
        nu = _uniform_on(band, f.n_theta)
        corr, V = search.response(nu)
        policy = corr.uniform_policy()
        m_br = search.stationary(policy)
        band_br, _ = search.band(m_br)
        step = tv(m_br, m)
        trace.append(
            {
                "restart": restart,
                "iteration": k,
                "theta": f.thetas[band[0]].tolist(),
                "band_size": len(band),
                "policy": _policy_hash(policy),
                "tv_step": step,
                "damping": lam,
            }
        )
        if np.isin(band, band_br).all():
            return m_br, nu, k, "best-response", seen
        key = tuple(band.tolist())
        seen[key] = seen.get(key, 0) + 1
        if seen[key] > _CYCLE_LIMIT:
            # a persistent cycle: hand over to the mixed-belief refinement
            return m, nu, k, None, seen
        if seen[key] > 1 and lam > 1e-6:
            lam *= 0.5
        m = (1 - lam) * m + lam * m_br
        best = (m, nu)
    return best[0], best[1], max_outer, None, seen


def _pair_refine(search, i, j, max_bisect=60):
    """Exact two-point equilibrium for the parameter pair ``(i, j)``.

    With ``nu_w = (1 - w) delta_i + w delta_j``, let ``g(w)`` be the divergence
    difference ``K(m_w, i) - K(m_w, j)`` at the best response ``m_w``. A sign
    change of ``g`` on ``[0, 1]`` is located by bisection; at the switch point
    the two adjacent best responses are mixed so that ``i`` and ``j`` tie.
    """
    f = search.f
    n = f.n_theta

    def at(w):
        nu = np.zeros(n)
        nu[i] += 1 - w
        nu[j] += w
        corr, _ = search.response(nu)
        pol = corr.pure_policy()
        m = search.stationary(pol)
        K = kl_profile(m, f)
        return K[i] - K[j], pol, m, nu

    g0, p0, m0, nu0 = at(0.0)
    g1, p1, m1, nu1 = at(1.0)
    if not (np.isfinite(g0) and np.isfinite(g1)) or g0 <= 0 or g1 >= 0:
        return None
    lo, hi = 0.0, 1.0
    plo, phi = p0, p1
    for _ in range(max_bisect):
        mid = 0.5 * (lo + hi)
        g, p, _, _ = at(mid)
        if g > 0:
            lo, plo = mid, p
        else:
            hi, phi = mid, p
        if hi - lo < 1e-15:
            break
    w = 0.5 * (lo + hi)

    def mixed(a):
        pol = (1 - a) * plo + a * phi
        m = search.stationary(pol)
        K = kl_profile(m, f)
        return K[i] - K[j], m

    a_lo, a_hi = 0.0, 1.0
    g_lo, m_lo = mixed(0.0)
    g_hi, m_hi = mixed(1.0)
    if g_lo < 0 or g_hi > 0:
        return None
    m = m_lo
    for _ in range(max_bisect):
        a = 0.5 * (a_lo + a_hi)
        g, m = mixed(a)
        if g > 0:
            a_lo = a
        else:
            a_hi = a
        if abs(g) <= search.tol.belief * 1e-2 or a_hi - a_lo < 1e-15:
            break
    nu = np.zeros(n)
    nu[i] += 1 - w
    nu[j] += w
    return m, nu


def _refine_candidates(search, m, trace_bands, limit=4):
    """Try pure single-point and two-point refinements near ``m``."""
    f = search.f
    K = kl_profile(m, f)
    order = [int(t) for t in np.argsort(K, kind="stable") if np.isfinite(K[t])][:limit]
    for t in trace_bands:
        if t not in order:
            order.append(t)
    out = []
    for t in order:
        nu = _uniform_on([t], f.n_theta)
        corr, _ = search.response(nu)
        m_t = search.stationary(corr.uniform_policy())
        band, _ = search.band(m_t)
        if t in band:
            out.append((m_t, nu, "pure-refine"))
    if out:
        return out
    for a in range(len(order)):
        for b in range(a + 1, len(order)):
            for i, j in ((order[a], order[b]), (order[b], order[a])):
                res = _pair_refine(search, i, j)
                if res is not None:
                    out.append((res[0], res[1], "pair-refine"))
                    return out
    return out


def solve_berk_nash(fsmdp, damping=1.0, tolerances=None, max_outer=200, restarts=0, seed=0):
    """Search for a Berk-Nash equilibrium.

    Parameters
    ----------
    fsmdp : FiniteSMDP
    damping : float in (0, 1]
        Initial weight on the best response when updating ``m``; halved
        each time a belief band recurs.
    tolerances : Tolerances, optional
    max_outer : int
        Best-response iterations per start.
    restarts : int
        Extra starts from random policies (seeded, run in order).
    seed : int

    Returns
    -------
    EquilibriumReport
        The verified candidate with the smallest normalised gap;
        ``converged`` is False if none passed.
    """
    if not 0 < damping <= 1:
        raise DomainError("damping must lie in (0, 1]")
    tol = tolerances or Tolerances()
    search = _Search(fsmdp, tol)
    seeds = np.random.SeedSequence(seed).spawn(restarts) if restarts else []
    trace = []
    best = None
    total = 0
    for r in range(restarts + 1):
        rng = None if r == 0 else np.random.Generator(np.random.Philox(seeds[r - 1]))
        search._mu = search._V = None
        m0 = _initial_measure(search, rng)
        m, nu, its, how, seen = _best_response_run(search, m0, damping, max_outer, trace, r)
        total += its
        cands = [(m, nu, how or "best-response")]
        if how is None:
            recent = [t for t, _ in sorted(seen.items(), key=lambda kv: -kv[1])]
            flat = []
            for key in recent:
                flat.extend(t for t in key if t not in flat)
            cands += _refine_candidates(search, m, flat[:4])
        for cm, cnu, method in cands:
            rep = verify_equilibrium(fsmdp, cm, cnu, tol)
            rep.method, rep.restart = method, r
            if best is None or rep.max_gap() < best.max_gap():
                best = rep
            if rep.converged:
                break
        if best.converged:
            break
    best.iterations = total
    best.trace = trace
    bands = [t["band_size"] for t in trace if t["restart"] == best.restart]
    best.singleton_band = bool(bands) and all(b == 1 for b in bands)
    return best


# ---------------------------------------------------------------------------
# Lyapunov drift certificate
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LyapunovResult:
    alpha: float
    beta: float
    passed: bool
    witness: tuple | None
    drift: np.ndarray
    ratio: float


def _folded_normal_mean(mu, sd):
    sd = np.asarray(sd, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sd > 0, mu / sd, np.sign(mu) * np.inf)
    return np.where(
        sd > 0,
        sd * np.sqrt(2 / np.pi) * np.exp(-0.5 * z**2) + mu * (1 - 2 * ndtr(-z)),
        np.abs(mu),
    )


def _drift(spec, V, s, x):
    """``E[V(s') | s, x]`` for every sample pair."""
    k = spec.true_kernel
    if V == "abs-norm" and spec.state_dim == 1 and k.family == "gaussian-linear":
        src = int(k.params.get("source", 0))
        mu = k.coef("a", None) * s[:, src] + k.coef("c", None) * x + k.coef("d", None)
        return _folded_normal_mean(mu, np.full(len(mu), k.coef("b", None)))
    if spec.state_dim != 1:
        raise DomainError("quadrature drift is implemented for 1-D states")
    if V == "abs-norm":
        Vf = lambda y: np.abs(spec.axes[0].to_work(y))  # noqa: E731
    else:
        pts, vals = (np.asarray(a, dtype=float) for a in V)
        Vf = lambda y: np.interp(y, pts, vals)  # noqa: E731
    out = np.empty(len(s))
    for i in range(len(s)):
        # quadrature on a fine grid wide enough to hold the kernel's mass
        c = float(s[i, 0])
        span = 50.0 + 10 * abs(c)
        edges = np.linspace(c - span, c + span, 20001)
        edges = np.clip(edges, spec.axes[0].lower, spec.axes[0].upper)
        lo, hi = edges[:-1], edges[1:]
        w = cell_masses(k, 0, s[i : i + 1], [x[i]], None, lo, hi)[0]
        out[i] = float(np.dot(Vf(0.5 * (lo + hi)), w) / w.sum())
    return out


def lyapunov_check(spec, V="abs-norm", sample_states=None, sample_actions=None, top_fraction=0.1):
    """Fit the drift bound ``E[V(s') | s, x] <= (1 - alpha) V(s) + beta`` on samples.

    The slope ``1 - alpha`` is the largest drift ratio ``E[V(s')]/V(s)`` over
    the top ``top_fraction`` of samples by ``V`` (the growth regime); ``beta``
    is the smallest intercept making the bound hold on every sample. Passes
    iff ``0 < alpha <= 1``; otherwise the witness is the growth-regime sample
    with the largest drift ratio.
    """
    if sample_states is None:
        sample_states = np.linspace(0.0, 20.0, 200)
    s = np.asarray(sample_states, dtype=float)
    xs = np.asarray(sample_actions if sample_actions is not None else spec.actions.grid(spec.grid.action_points), float)
    if s.size == 0 or xs.size == 0:
        raise DomainError("sample sets must be nonempty")
    s = s.reshape(len(s), -1)
    S = np.repeat(s, len(xs), axis=0)
    X = np.tile(xs, len(s))
    drift = _drift(spec, V, S, X)
    if V == "abs-norm":
        v = spec.norm(S)
    else:
        pts, vals = (np.asarray(a, dtype=float) for a in V)
        v = np.interp(S[:, 0], pts, vals)
    pos = v > 0
    ratio = np.full(len(v), -np.inf)
    ratio[pos] = drift[pos] / v[pos]
    cut = np.quantile(v[pos], 1 - top_fraction) if pos.any() else 0.0
    top = pos & (v >= cut)
    slope = float(ratio[top].max())
    alpha = 1.0 - slope
    beta = float(max(np.max(drift - slope * v), 0.0))
    passed = bool(1e-9 < alpha <= 1.0)
    # the witness comes from the growth regime that fixes the slope
    w = int(np.flatnonzero(top)[np.argmax(ratio[top])])
    witness = None if passed else (S[w].tolist(), float(X[w]), float(ratio[w]))
    return LyapunovResult(alpha, beta, passed, witness, drift, slope)


# ---------------------------------------------------------------------------
# truncation ladder diagnosis
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class LadderReport:
    verdict: str
    levels: list
    boundary_mass: list
    escape_mass: list
    reports: list
    top: EquilibriumReport | None


def _outer_band(f, frac):
    """Cells within the outermost ``frac`` of any truncated axis."""
    spec = f.spec
    idx = np.unravel_index(np.arange(f.n_states), f.grid_shape)
    band = np.zeros(f.n_states, dtype=bool)
    for j, n in enumerate(f.grid_shape):
        if spec is not None and spec.axes[j].bounded:
            continue
        w = max(1, int(np.ceil(frac * n / 2)))
        band |= (idx[j] < w) | (idx[j] >= n - w)
    return band


def ladder_diagnose(
    spec,
    n_levels=4,
    base_radius=5.0,
    cells_per_level=None,
    solve_opts=None,
    band_fraction=0.05,
    threshold=0.1,
    escape_growth=0.05,
):
    """Solve on nested truncation boxes and look for escaping mass.

    Level ``k`` uses the box of radius ``k * base_radius`` and ``k`` times
    the level-1 cell counts on unbounded axes (fixed cells per unit length).
    Level-1 counts default to half the cell density of the model's own grid,
    which keeps the top level within memory.
    Two mass series are recorded: the boundary mass in the outermost
    ``band_fraction`` of cells and the escape mass outside the level-1 box.
    The verdict is ``mass-escape`` if either series is nondecreasing and
    ends above ``threshold`` (for the escape series, also growing by at least
    ``escape_growth`` from level 2 when there are three or more levels);
    otherwise ``equilibrium-found`` if the top level converged and
    ``undetermined`` if it did not.
    """
    solve_opts = dict(solve_opts or {})
    compact = all(ax.bounded for ax in spec.axes)
    n_levels = 1 if compact else n_levels
    if cells_per_level is None:
        g = spec.grid
        ratio = base_radius / (2 * g.radius) if g.radius else 1.0
        base_cells = tuple(
            n if spec.axes[j].bounded else max(21, int(math.ceil(n * ratio))) for j, n in enumerate(g.state_cells)
        )
    else:
        base_cells = tuple(cells_per_level)
    box1 = level_box(spec, base_radius)
    levels, bmass, emass, reports = [], [], [], []
    for k in range(1, n_levels + 1):
        box = level_box(spec, None if compact else base_radius * k)
        cells = tuple(n if spec.axes[j].bounded else n * k for j, n in enumerate(base_cells))
        f = discretize_smdp(spec, box, states=cells, level=k)
        rep = solve_berk_nash(f, **solve_opts)
        mS = rep.marginal
        bmass.append(float(mS[_outer_band(f, band_fraction)].sum()))
        inside = np.all([(f.centers[:, j] >= box1[j][0]) & (f.centers[:, j] <= box1[j][1]) for j in range(spec.state_dim)], axis=0)
        emass.append(float(mS[~inside].sum()))
        levels.append(box)
        reports.append(rep)

    def rising(series):
        return all(b >= a for a, b in zip(series, series[1:]))

    escape = False
    if len(levels) >= 2:
        if rising(bmass) and bmass[-1] > threshold:
            escape = True
        e = emass[1:]
        if rising(emass) and emass[-1] > threshold and (len(e) < 2 or e[-1] - e[0] >= escape_growth):
            escape = True
    if escape:
        verdict = "mass-escape"
    elif reports[-1].converged:
        verdict = "equilibrium-found"
    else:
        verdict = "undetermined"
    return LadderReport(verdict, levels, bmass, emass, reports, reports[-1])


# ---------------------------------------------------------------------------
# serialisation
# ---------------------------------------------------------------------------


def report_lines(rep, fsmdp):
    """Key/value summary of a report (no CSV blocks)."""
    t = rep.tolerances
    lines = [
        ("converged", str(rep.converged).lower()),
        ("method", rep.method),
        ("iterations", str(rep.iterations)),
        ("restart", str(rep.restart)),
        ("optimality_gap", repr(float(rep.optimality_gap))),
        ("belief_gap", repr(float(rep.belief_gap))),
        ("stationarity_residual", repr(float(rep.stationarity_residual))),
        ("tolerance.optimality", repr(t.optimality)),
        ("tolerance.belief", repr(t.belief)),
        ("tolerance.stationarity", repr(t.stationarity)),
        ("value_scale", repr(float(rep.value_scale))),
        ("kl_min", repr(float(rep.kl_min))),
        ("belief_support", ";".join(str(int(i)) for i in np.flatnonzero(rep.nu > t.support))),
        ("belief_mean", ",".join(repr(float(v)) for v in rep.nu @ fsmdp.thetas)),
        ("belief_max_mass", repr(float(rep.nu.max()))),
        ("singleton_band", str(rep.singleton_band).lower()),
    ]
    return lines


def with_tolerances(tol, **kw):
    return replace(tol, **{k: v for k, v in kw.items() if v is not None})


__all__ = [
    "EquilibriumReport",
    "JointMeasure",
    "LadderReport",
    "LyapunovResult",
    "Tolerances",
    "ladder_diagnose",
    "lyapunov_check",
    "report_lines",
    "solve_berk_nash",
    "verify_equilibrium",
]
