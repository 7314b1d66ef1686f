"""Ready-made SMDPs and their closed-form equilibrium quantities.

=============  ==========================================================
``ar1``        AR(1) state, bounded (zero) payoff, Gaussian model family
``ar1-action`` AR(1) with an action shift and payoff ``s'``
``cost``       producer with a misspecified cost shock
``revenue``    producer with a misspecified revenue shock
``savings``    consumption-savings with a correlated preference shock
=============  ==========================================================

Each example is built as a model document (a flat dict), so command-line
overrides can edit any key before validation.

The two producer examples carry the shock as a *per-unit* state coordinate
``u'``: per-unit cost ``c'/x`` or per-unit revenue ``r'/(z x)``. The model
family says ``u' = eps`` with ``eps`` truncated exponential on
``[0, k theta]``; the truth is ``u' = x eps`` (quadratic cost) and
``u' = eps / sqrt(x)`` (square-root production). Observing ``u'`` is
equivalent to observing the cost or revenue itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .document import Grid, Interval, ParamRef
from .errors import ConfigError, DomainError
from .model import build_smdp

EXAMPLES = ("ar1", "ar1-action", "cost", "revenue", "savings")

_DEFAULTS = {
    "ar1": {"a0": 0.5, "b0": 1.0, "delta": 0.9, "states": 401, "radius": 10.0,
            "a_points": 21, "b_points": 10},
    "ar1-action": {"a0": 0.5, "b0": 1.0, "c0": 1.0, "delta": 0.9, "states": 201, "radius": 10.0,
                   "actions": 5, "theta_points": 5},
    "cost": {"mean": None, "k": 50.0, "support_ratio": 3.0, "delta": 0.5, "z_cells": 40, "u_cells": 240,
             "actions": 101, "theta_points": 201, "eps": 1e-3},
    "revenue": {"mean": None, "k": 50.0, "support_ratio": 3.0, "delta": 0.5, "z_cells": 300, "u_cells": 300,
                "actions": 80, "theta_points": 301, "x_min": 1e-3},
    "savings": {"alpha": 0.0, "beta": 0.5, "gamma": 1.0, "delta": 0.9, "y_cells": 81, "z_cells": 10,
                "radius": 6.0, "center": None, "actions": 100, "eps": 1e-3, "theta_points": 46,
                "beta_max": 0.9},
}


def example_constants(example_id):
    """Names of the constants an example accepts."""
    if example_id not in _DEFAULTS:
        raise ConfigError(f"unknown example {example_id!r}; expected one of {EXAMPLES}")
    return tuple(_DEFAULTS[example_id])


def example_params(example_id, params=None):
    """Defaults merged with ``params``; unknown names and missing constants raise ConfigError."""
    if example_id not in _DEFAULTS:
        raise ConfigError(f"unknown example {example_id!r}; expected one of {EXAMPLES}")
    out = dict(_DEFAULTS[example_id])
    for key, val in (params or {}).items():
        if key not in out:
            raise ConfigError(f"unknown constant {key!r} for example {example_id}")
        out[key] = val
    for key, val in out.items():
        if val is None and not (example_id == "savings" and key == "center"):
            raise ConfigError(f"example {example_id} needs constant {key!r}")
    return out


def truncexp_mean_factor(k):
    """``K`` with ``E[eps] = theta / K`` for ``eps`` truncated exponential on ``[0, k theta]``."""
    return -math.expm1(-k) / (1.0 - (k + 1.0) * math.exp(-k))


def truncexp_mean(scale, support):
    """Mean of the exponential with scale ``scale`` truncated to ``[0, support]``."""
    r = support / scale
    if r > 700:
        return scale
    return scale - support / math.expm1(r)


def truncexp_scale_for_mean(mean, support):
    """Scale of the truncated exponential on ``[0, support]`` with the given mean."""
    if not 0 < mean < support / 2:
        raise DomainError(f"a truncated exponential on [0, {support}] has mean in (0, {support / 2})")
    return brentq(lambda s: truncexp_mean(s, support) - mean, 1e-6 * mean, 1e6 * support, xtol=1e-14, rtol=1e-15)


def gaussian_kl(a0, b0, a, b, s):
    """Relative entropy between ``N(a0 s, b0^2)`` and ``N(a s, b^2)``."""
    return math.log(b / b0) + (b0**2 + (a0 * s - a * s) ** 2) / (2 * b**2) - 0.5


def savings_policy(z, beta, delta):
    """Saved fraction ``0.5 delta beta / ((1 - delta beta) z + 0.5 delta beta)`` under belief ``beta``."""
    z = np.asarray(z, dtype=float)
    db = delta * beta
    return 0.5 * db / ((1 - db) * z + 0.5 * db)


# ---------------------------------------------------------------------------
# documents
# ---------------------------------------------------------------------------


def _ar1(p):
    return {
        "state.bounds": "unbounded",
        "state.cells": int(p["states"]),
        "state.radius": float(p["radius"]),
        "action.values": 0.0,
        "theta.grid.0": Grid(0.0, 2.0, int(p["a_points"])),
        "theta.grid.1": Grid(0.1, 1.0, int(p["b_points"])),
        "kernel.true.family": "gaussian-linear",
        "kernel.true.a": float(p["a0"]),
        "kernel.true.b": float(p["b0"]),
        "kernel.model.family": "gaussian-linear",
        "kernel.model.a": ParamRef(0),
        "kernel.model.b": ParamRef(1),
        "payoff.kind": "constant",
        "payoff.value": 0.0,
        "solve.discount": float(p["delta"]),
    }


def _ar1_action(p):
    n = int(p["theta_points"])
    return {
        "state.bounds": "unbounded",
        "state.cells": int(p["states"]),
        "state.radius": float(p["radius"]),
        "action.grid": Grid(-1.0, 1.0, int(p["actions"])),
        "theta.grid.0": Grid(0.0, 1.0, n),
        "theta.grid.1": Grid(0.0, 1.0, n),
        "theta.grid.2": Grid(-1.0, 1.0, n),
        "kernel.true.family": "gaussian-linear",
        "kernel.true.a": float(p["a0"]),
        "kernel.true.b": float(p["b0"]),
        "kernel.true.c": float(p["c0"]),
        "kernel.model.family": "gaussian-linear",
        "kernel.model.a": ParamRef(0),
        "kernel.model.b": ParamRef(1),
        "kernel.model.c": ParamRef(2),
        "payoff.kind": "next-state",
        "payoff.coord": 0,
        "payoff.growth": "state-bounded",
        "payoff.A": 0.0,
        "payoff.B": 1.0,
        "solve.discount": float(p["delta"]),
    }


def _producer(p, revenue):
    E, k = float(p["mean"]), float(p["k"])
    if E <= 0 or k <= 0:
        raise DomainError("mean and k must be > 0")
    K = truncexp_mean_factor(k)
    b_true = float(p["support_ratio"]) * E
    scale = truncexp_scale_for_mean(E, b_true)
    if revenue:
        theta_hi = 2 * K * E + 1
        x_lo, x_hi = float(p["x_min"]), 2.0
        # geometric action grid: constant relative resolution near 0
        actions = tuple(np.geomspace(x_lo, x_hi, int(p["actions"])).tolist())
        u_hi = b_true / math.sqrt(x_lo) * 1.05
        true_power, kind, coord = -0.5, "revenue-cost", "payoff.revenue"
    else:
        theta_hi = math.sqrt((K + 1) / 2) * E + 1
        eps = float(p["eps"])
        x_hi = max((E / 4) ** (2 / 3), (E / math.sqrt(K)) ** (2 / 3)) + 1
        actions = None
        u_hi = max(x_hi * b_true, 12 * E) * 1.05
        true_power, kind, coord = 1.0, "production-cost", "payoff.cost"
    doc = {
        "state.dim": 2,
        "state.bounds.0": Interval(0.0, 1.0),
        "state.bounds.1": Interval(0.0, u_hi),
        "state.cells.0": int(p["z_cells"]),
        "state.cells.1": int(p["u_cells"]),
    }
    if actions is None:
        doc["action.grid"] = Grid(eps, x_hi, int(p["actions"]))
    else:
        doc["action.values"] = actions
    doc.update(
        {
            "theta.grid.0": Grid(0.0, theta_hi, int(p["theta_points"])),
            "kernel.true.family": "product",
            "kernel.true.0.family": "uniform",
            "kernel.true.0.lo": 0.0,
            "kernel.true.0.hi": 1.0,
            "kernel.true.1.family": "truncated-exponential",
            "kernel.true.1.theta": scale,
            "kernel.true.1.support": b_true,
            "kernel.true.1.power": true_power,
            "kernel.model.family": "product",
            "kernel.model.0.family": "uniform",
            "kernel.model.0.lo": 0.0,
            "kernel.model.0.hi": 1.0,
            "kernel.model.1.family": "truncated-exponential",
            "kernel.model.1.theta": ParamRef(0),
            "kernel.model.1.k": k,
            "payoff.kind": kind,
            "payoff.shock": 0,
            coord: 1,
            "solve.discount": float(p["delta"]),
        }
    )
    return doc


def _savings(p):
    a, b, g, d = (float(p[k]) for k in ("alpha", "beta", "gamma", "delta"))
    if not 0 <= b < 1 or not d * b < 1:
        raise DomainError("savings needs 0 <= beta < 1 and delta * beta < 1")
    if g == 0:
        raise DomainError("savings needs gamma != 0 (otherwise the model is correct)")
    eps = float(p["eps"])
    center = p["center"]
    if center is None:
        # long-run mean of ln y at a typical saving rate of one half
        center = (a + b * math.log(0.5) + 0.5 * g) / (1 - b)
    bmax = float(p["beta_max"])
    return {
        "state.dim": 2,
        "state.scale.0": "log",
        "state.bounds.0": "unbounded",
        "state.center.0": float(center),
        "state.radius": float(p["radius"]),
        "state.cells.0": int(p["y_cells"]),
        "state.bounds.1": Interval(0.0, 1.0),
        "state.cells.1": int(p["z_cells"]),
        "action.interval": Interval(eps, 1 - eps),
        "action.points": int(p["actions"]),
        "theta.grid.0": Grid(0.0, bmax, int(p["theta_points"])),
        "kernel.true.family": "product",
        "kernel.true.0.family": "lognormal-linear",
        "kernel.true.0.alpha": a,
        "kernel.true.0.beta": b,
        "kernel.true.0.gamma": g,
        "kernel.true.0.shock": 1,
        "kernel.true.0.sigma": 1.0,
        "kernel.true.1.family": "uniform",
        "kernel.true.1.lo": 0.0,
        "kernel.true.1.hi": 1.0,
        "kernel.model.family": "product",
        "kernel.model.0.family": "lognormal-linear",
        "kernel.model.0.alpha": a,
        "kernel.model.0.beta": ParamRef(0),
        "kernel.model.0.sigma": 1.0,
        "kernel.model.1.family": "uniform",
        "kernel.model.1.lo": 0.0,
        "kernel.model.1.hi": 1.0,
        "payoff.kind": "log-consumption",
        "payoff.wealth": 0,
        "payoff.shock": 1,
        "payoff.growth": "state-bounded",
        "payoff.A": -math.log(eps),
        "payoff.B": 1.0,
        "solve.discount": d,
    }


_BUILDERS = {
    "ar1": _ar1,
    "ar1-action": _ar1_action,
    "cost": lambda p: _producer(p, revenue=False),
    "revenue": lambda p: _producer(p, revenue=True),
    "savings": _savings,
}


def example_document(example_id, params=None):
    """Model document (flat dict) for an example."""
    p = example_params(example_id, params)
    return _BUILDERS[example_id](p)


def make_example(example_id, params=None, overrides=None):
    """Validated :class:`~berknash.model.SMDPSpec` for an example.

    ``overrides`` replaces document keys before validation.
    """
    doc = example_document(example_id, params)
    doc.update(overrides or {})
    return build_smdp(doc, name=example_id)


# ---------------------------------------------------------------------------
# oracles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExampleOracle:
    """Closed-form quantities for an example (``quantities``) and notes on their origin."""

    example_id: str
    quantities: dict
    notes: dict = field(default_factory=dict)
    no_equilibrium: bool = False


def oracle(example_id, params=None):
    """Closed-form equilibrium quantities.

    ``ar1``: stationary variance ``b0^2 / (1 - a0^2)`` (no equilibrium for
    ``a0 >= 1``). ``ar1-action``: optimal action ``sign(c0)``. ``cost``:
    ``theta* = sqrt(K E / 2)`` and action slope ``K / theta*``. ``revenue``:
    ``theta* = 2 (K E)^(2/3)`` and slope ``theta* / (2K)``. ``savings``:
    the policy map ``A_z(beta)`` and the bracket ``(0, beta*)`` for the
    equilibrium belief.
    """
    p = example_params(example_id, params)
    q, notes = {}, {}
    if example_id == "ar1":
        a0, b0 = float(p["a0"]), float(p["b0"])
        if abs(a0) >= 1:
            return ExampleOracle(example_id, {"a0": a0}, {"a0": "unit or explosive root"}, True)
        q["stationary_variance"] = b0**2 / (1 - a0**2)
        q["theta_true"] = (a0, b0)
        q["lyapunov_alpha"] = 1 - abs(a0)
        q["lyapunov_beta"] = b0 * math.sqrt(2 / math.pi)
        notes["stationary_variance"] = "variance of the stationary normal law"
    elif example_id == "ar1-action":
        a0, b0, c0 = (float(p[k]) for k in ("a0", "b0", "c0"))
        if abs(a0) >= 1:
            return ExampleOracle(example_id, {"a0": a0}, {"a0": "unit or explosive root"}, True)
        q["optimal_action"] = float(np.sign(c0))
        q["theta_true"] = (a0, b0, c0)
        q["stationary_mean"] = abs(c0) / (1 - a0)
        q["stationary_variance"] = b0**2 / (1 - a0**2)
        notes["optimal_action"] = "x = sign(c0) dominates; every action is optimal when c0 = 0"
    elif example_id in ("cost", "revenue"):
        E, k = float(p["mean"]), float(p["k"])
        K = truncexp_mean_factor(k)
        q["K"] = K
        q["mean"] = E
        if example_id == "cost":
            q["theta_star"] = math.sqrt(K * E / 2)
            q["x_star_slope"] = K / q["theta_star"]
            q["x_opt_correct"] = 1 / math.sqrt(2 * E)
            q["theta_box"] = (0.0, math.sqrt((K + 1) / 2) * E + 1)
        else:
            q["theta_star"] = 2 * (K * E) ** (2 / 3)
            q["x_star_slope"] = q["theta_star"] / (2 * K)
        notes["K"] = "mean factor of the truncated exponential on [0, k theta]"
    elif example_id == "savings":
        d, b = float(p["delta"]), float(p["beta"])
        q["beta_star"] = b
        q["beta_m_bracket"] = (0.0, b)
        q["delta"] = d
        notes["policy"] = "savings_policy(z, beta, delta)"
    return ExampleOracle(example_id, q, notes)
