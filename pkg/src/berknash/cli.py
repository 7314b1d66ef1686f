"""Command-line front end.

``berknash <command> (--model FILE | --example ID) [options]``

Commands: ``discretize``, ``solve``, ``verify``, ``ladder``, ``learn``,
``example``, ``lyapunov``. Every command writes ``report.txt`` plus CSV
artifacts into the output directory; every artifact starts with ``#``
comment lines carrying the tool version, the argument list and the seed.

Exit status: 0 on success (converged, verified, passed), 2 for a diagnostic
negative result (no convergence, mass escape, failed certificate), 1 for
errors.
"""

from __future__ import annotations

import argparse
import os
import shlex
import sys

import numpy as np

from . import __version__
from .discretize import _write_csv, discretize_smdp, dump_csv, truncation_bounds
from .document import format_document, parse_document, parse_value
from .equilibrium import (
    Tolerances,
    ladder_diagnose,
    lyapunov_check,
    report_lines,
    solve_berk_nash,
    verify_equilibrium,
    with_tolerances,
)
from .errors import BerkNashError, ConfigError
from .examples import EXAMPLES, example_constants, example_document, oracle
from .learning import identification_check, simulate_learning
from .model import build_smdp

OUT_ENV = "BERKNASH_OUT"
COMMANDS = ("discretize", "solve", "verify", "ladder", "learn", "example", "lyapunov")


def _parser():
    p = argparse.ArgumentParser(prog="berknash", description="Misspecified MDPs and Berk-Nash equilibria.")
    p.add_argument("--version", action="version", version=f"berknash {__version__}")
    sub = p.add_subparsers(dest="command", metavar="command")
    for name in COMMANDS:
        c = sub.add_parser(name)
        src = c.add_mutually_exclusive_group(required=True)
        src.add_argument("--model", help="model document file")
        src.add_argument("--example", choices=EXAMPLES, help="built-in example")
        c.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./out)")
        c.add_argument("--seed", type=int, default=0)
        c.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a document key (repeatable)")
        c.add_argument("--param", action="append", default=[], metavar="NAME=VALUE",
                       help="example constant (repeatable)")
        for flag in ("a0", "b0", "c0", "mean"):
            c.add_argument(f"--{flag}", type=float)
        c.add_argument("--states", type=int, help="cells per unbounded state axis")
        c.add_argument("--radius", type=float, help="truncation radius")
        c.add_argument("--actions", type=int, help="number of action grid points")
        c.add_argument("--discount", type=float)
        c.add_argument("--tol-optimality", type=float)
        c.add_argument("--tol-belief", type=float)
        c.add_argument("--tol-stationarity", type=float)
        if name == "solve":
            c.add_argument("--restarts", type=int, default=0)
            c.add_argument("--damping", type=float, default=1.0)
            c.add_argument("--max-outer", type=int, default=200)
        if name == "verify":
            c.add_argument("--m", required=True, help="joint measure CSV (as written by solve)")
            c.add_argument("--nu", required=True, help="belief CSV (as written by solve)")
        if name == "ladder":
            c.add_argument("--levels", type=int, default=4)
            c.add_argument("--base-radius", type=float, default=5.0)
        if name == "learn":
            c.add_argument("--horizon", type=int, default=10000)
            c.add_argument("--resolve-every", type=int, default=100)
            c.add_argument("--fixed-uniform", action="store_true",
                           help="play uniformly random actions instead of anticipated utility")
        if name == "discretize":
            c.add_argument("--levels", type=int, default=1, help="truncation levels to bound")
            c.add_argument("--slices", action="store_true", help="also write the per-action kernel slices")
        if name == "lyapunov":
            c.add_argument("--samples", type=int, default=200)
            c.add_argument("--max-state", type=float, default=20.0)
    return p


# ---------------------------------------------------------------------------
# model assembly
# ---------------------------------------------------------------------------


def _pairs(items, what):
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"{what} {item!r} is not KEY=VALUE")
        k, v = item.split("=", 1)
        out[k.strip()] = parse_value(v.strip())
    return out


def _document(args):
    """Model document (flat dict) after flags and overrides."""
    if args.example:
        params = _pairs(args.param, "--param")
        known = example_constants(args.example)
        for flag in ("a0", "b0", "c0", "mean"):
            v = getattr(args, flag)
            if v is not None:
                if flag not in known:
                    raise ConfigError(f"--{flag} does not apply to example {args.example}")
                params[flag] = v
        for flag, key in (("states", "states"), ("radius", "radius"), ("actions", "actions"), ("discount", "delta")):
            v = getattr(args, flag)
            if v is not None and key in known:
                params[key] = v
            elif v is not None:
                raise ConfigError(f"--{flag} does not apply to example {args.example}; use --set")
        doc = example_document(args.example, params)
        name = args.example
    else:
        try:
            with open(args.model, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as err:
            raise ConfigError(f"cannot read model file {args.model!r}: {err.strerror}") from None
        doc = parse_document(text)
        name = os.path.basename(args.model)
        for flag, key in (("a0", "kernel.true.a"), ("b0", "kernel.true.b"), ("c0", "kernel.true.c")):
            if getattr(args, flag) is not None:
                doc[key] = getattr(args, flag)
        if args.mean is not None:
            raise ConfigError("--mean only applies to the cost and revenue examples")
        if args.states is not None:
            doc["state.cells"] = args.states
        if args.radius is not None:
            doc["state.radius"] = args.radius
        if args.actions is not None:
            doc["action.points"] = args.actions
        if args.discount is not None:
            doc["solve.discount"] = args.discount
    doc.update(_pairs(args.set, "--set"))
    return doc, name


def _tolerances(args):
    kw = {}
    for flag, field in (("tol_optimality", "optimality"), ("tol_belief", "belief"), ("tol_stationarity", "stationarity")):
        v = getattr(args, flag)
        if v is not None:
            if not v > 0:
                raise ConfigError(f"--{flag.replace('_', '-')} must be > 0")
            kw[field] = v
    return with_tolerances(Tolerances(), **kw)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


class _Output:
    def __init__(self, directory, argv, seed):
        self.dir = directory
        self.comments = (
            f"berknash {__version__}",
            "argv: " + " ".join(shlex.quote(a) for a in argv),
            f"seed: {seed}",
        )
        os.makedirs(directory, exist_ok=True)

    def path(self, name):
        return os.path.join(self.dir, name)

    def csv(self, name, columns, rows):
        _write_csv(self.path(name), None, columns, rows, self.comments)

    def report(self, lines):
        with open(self.path("report.txt"), "w", newline="\n") as fh:
            for c in self.comments:
                fh.write(f"# {c}\n")
            for k, v in lines:
                fh.write(f"{k} = {v}\n")

    def text(self, name, body):
        with open(self.path(name), "w", newline="\n") as fh:
            for c in self.comments:
                fh.write(f"# {c}\n")
            fh.write(body)


def _f(v):
    return repr(float(v))


def _write_solution(out, f, rep):
    dim = f.centers.shape[1]
    scols = [f"s{j}" for j in range(dim)]
    rows = []
    for s, x in zip(*np.nonzero(rep.m)):
        rows.append([int(s), int(x), *f.centers[s], f.actions[x], rep.m[s, x]])
    out.csv("m.csv", ["s_index", "x_index", *scols, "x", "weight"], rows)
    tcols = [f"theta{j}" for j in range(f.thetas.shape[1])]
    out.csv("nu.csv", ["index", *tcols, "weight"], ([i, *f.thetas[i], rep.nu[i]] for i in range(f.n_theta)))
    if rep.kl is not None:
        out.csv("kl.csv", ["index", *tcols, "K"], ([i, *f.thetas[i], rep.kl[i]] for i in range(f.n_theta)))


def _read_table(path, what):
    try:
        with open(path, encoding="utf-8") as fh:
            lines = [ln for ln in fh if ln.strip() and not ln.startswith("#")]
    except OSError as err:
        raise ConfigError(f"cannot read {what} file {path!r}: {err.strerror}") from None
    if not lines:
        raise ConfigError(f"{what} file {path!r} is empty")
    cols = [c.strip() for c in lines[0].split(",")]
    try:
        data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]], dtype=float).reshape(-1, len(cols))
    except ValueError:
        raise ConfigError(f"{what} file {path!r} has malformed rows") from None
    return cols, data


def _read_solution(f, m_path, nu_path):
    cols, data = _read_table(m_path, "joint measure")
    if "s_index" not in cols or "x_index" not in cols or "weight" not in cols:
        raise ConfigError("joint measure CSV needs s_index, x_index and weight columns")
    m = np.zeros((f.n_states, f.n_actions))
    si, xi, w = (data[:, cols.index(c)] for c in ("s_index", "x_index", "weight"))
    if data.size and (si.max() >= f.n_states or xi.max() >= f.n_actions or si.min() < 0 or xi.min() < 0):
        raise ConfigError("joint measure CSV indexes outside the grid")
    np.add.at(m, (si.astype(int), xi.astype(int)), w)
    cols, data = _read_table(nu_path, "belief")
    if "index" not in cols or "weight" not in cols:
        raise ConfigError("belief CSV needs index and weight columns")
    nu = np.zeros(f.n_theta)
    idx = data[:, cols.index("index")].astype(int)
    if idx.size and (idx.max() >= f.n_theta or idx.min() < 0):
        raise ConfigError("belief CSV indexes outside the grid")
    nu[idx] = data[:, cols.index("weight")]
    return m, nu


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _cmd_example(args, out):
    doc, name = _document(args)
    out.text("model.txt", format_document(doc))
    params = _pairs(args.param, "--param")
    for flag in ("a0", "b0", "c0", "mean"):
        if getattr(args, flag) is not None:
            params[flag] = getattr(args, flag)
    orc = oracle(args.example, params) if args.example else None
    lines = [("model", name)]
    if orc is not None:
        lines.append(("no_equilibrium", str(orc.no_equilibrium).lower()))
        for k in sorted(orc.quantities):
            v = orc.quantities[k]
            lines.append((f"oracle.{k}", ",".join(_f(t) for t in v) if isinstance(v, tuple) else _f(v)))
    out.report(lines)
    return 0


def _cmd_discretize(args, out):
    doc, name = _document(args)
    spec = build_smdp(doc, name)
    f = discretize_smdp(spec)
    if args.slices:
        dump_csv(f, out.dir, out.comments)
    else:
        dim = f.centers.shape[1]
        scols = [f"s{j}" for j in range(dim)] + [f"lo{j}" for j in range(dim)] + [f"hi{j}" for j in range(dim)]
        out.csv("states.csv", ["index"] + scols,
                ([i, *f.centers[i], *f.cell_lo[i], *f.cell_hi[i]] for i in range(f.n_states)))
        out.csv("actions.csv", ["index", "x"], ([i, v] for i, v in enumerate(f.actions)))
        tcols = [f"theta{j}" for j in range(f.thetas.shape[1])]
        out.csv("thetas.csv", ["index"] + tcols, ([i, *row] for i, row in enumerate(f.thetas)))
    lines = [
        ("model", name),
        ("states", str(f.n_states)),
        ("actions", str(f.n_actions)),
        ("parameters", str(f.n_theta)),
        ("discount", _f(f.discount)),
        ("min_kernel_mass", _f(f.min_mass)),
        ("min_log_kernel_mass", _f(f.min_log_mass)),
    ]
    if args.levels > 1:
        lad = truncation_bounds(spec, args.levels, spec.grid.radius)
        out.csv("trace_truncation.csv", ["level", "min_log_mass"],
                ([k + 1, v] for k, v in enumerate(lad.per_level_log_mass)))
        lines.append(("truncation.min_log_mass", _f(lad.min_log_mass)))
    out.report(lines)
    return 0


def _trace_rows(trace):
    for t in trace:
        yield [t["restart"], t["iteration"], t["band_size"], *map(float, t["theta"]), t["tv_step"], t["damping"]]


def _cmd_solve(args, out):
    doc, name = _document(args)
    spec = build_smdp(doc, name)
    f = discretize_smdp(spec)
    tol = _tolerances(args)
    rep = solve_berk_nash(f, damping=args.damping, tolerances=tol, max_outer=args.max_outer,
                          restarts=args.restarts, seed=args.seed)
    _write_solution(out, f, rep)
    tcols = [f"theta{j}" for j in range(f.thetas.shape[1])]
    out.csv("trace_solve.csv", ["restart", "iteration", "band_size", *tcols, "tv_step", "damping"],
            _trace_rows(rep.trace))
    ident = identification_check(f, rep.m)
    lines = [("model", name), *report_lines(rep, f), ("identified", str(ident.identified).lower())]
    out.report(lines)
    return 0 if rep.converged else 2


def _cmd_verify(args, out):
    doc, name = _document(args)
    f = discretize_smdp(build_smdp(doc, name))
    m, nu = _read_solution(f, args.m, args.nu)
    rep = verify_equilibrium(f, m, nu, _tolerances(args))
    _write_solution(out, f, rep)
    out.report([("model", name), *report_lines(rep, f)])
    return 0 if rep.converged else 2


def _cmd_ladder(args, out):
    doc, name = _document(args)
    spec = build_smdp(doc, name)
    tol = _tolerances(args)
    lad = ladder_diagnose(spec, n_levels=args.levels, base_radius=args.base_radius,
                          solve_opts={"tolerances": tol, "seed": args.seed})
    rows = []
    for k, (box, b, e, rep) in enumerate(zip(lad.levels, lad.boundary_mass, lad.escape_mass, lad.reports)):
        radius = max(max(abs(lo), abs(hi)) for lo, hi in box)
        rows.append([k + 1, radius, b, e, int(rep.converged)])
    out.csv("trace_ladder.csv", ["level", "radius", "boundary_mass", "escape_mass", "converged"], rows)
    lines = [("model", name), ("verdict", lad.verdict), ("levels", str(len(lad.levels)))]
    top = lad.top
    lines += [
        ("top.converged", str(top.converged).lower()),
        ("top.optimality_gap", _f(top.optimality_gap)),
        ("top.belief_gap", _f(top.belief_gap)),
        ("top.stationarity_residual", _f(top.stationarity_residual)),
    ]
    out.report(lines)
    return 0 if lad.verdict == "equilibrium-found" else 2


def _cmd_learn(args, out):
    doc, name = _document(args)
    f = discretize_smdp(build_smdp(doc, name))
    if args.horizon < 1 or args.resolve_every < 1:
        raise ConfigError("--horizon and --resolve-every must be >= 1")
    policy = np.full((f.n_states, f.n_actions), 1.0 / f.n_actions) if args.fixed_uniform else None
    tr = simulate_learning(f, args.horizon, policy=policy, resolve_every=args.resolve_every, seed=args.seed)
    out.csv("trace_history.csv", ["k", "s_index", "x_index"], tr.history_rows())
    tcols = [f"mu{t}" for t in range(f.n_theta)]
    out.csv("trace_beliefs.csv", ["k", *tcols], tr.belief_rows())
    out.csv("trace_frequencies.csv", ["k", "s_index", "x_index", "weight"], tr.frequency_rows())
    post = tr.posterior
    top = int(np.argmax(post))
    lines = [
        ("model", name),
        ("mode", tr.mode),
        ("horizon", str(args.horizon)),
        ("seed", str(args.seed)),
        ("posterior_argmax", str(top)),
        ("posterior_argmax_theta", ",".join(_f(v) for v in f.thetas[top])),
        ("posterior_max_mass", _f(post[top])),
        ("posterior_mean", ",".join(_f(v) for v in post @ f.thetas)),
    ]
    out.report(lines)
    return 0


def _witness(w):
    state, action, ratio = w
    return ";".join([",".join(_f(v) for v in np.ravel(state)), _f(action), _f(ratio)])


def _cmd_lyapunov(args, out):
    doc, name = _document(args)
    spec = build_smdp(doc, name)
    if args.samples < 2 or not args.max_state > 0:
        raise ConfigError("--samples must be >= 2 and --max-state > 0")
    res = lyapunov_check(spec, sample_states=np.linspace(0.0, args.max_state, args.samples))
    out.csv("trace_drift.csv", ["index", "drift"], ([i, d] for i, d in enumerate(np.ravel(res.drift))))
    lines = [
        ("model", name),
        ("passed", str(res.passed).lower()),
        ("alpha", _f(res.alpha)),
        ("beta", _f(res.beta)),
        ("ratio", _f(res.ratio)),
        ("witness", "none" if res.witness is None else _witness(res.witness)),
    ]
    out.report(lines)
    return 0 if res.passed else 2


_COMMANDS = {
    "discretize": _cmd_discretize,
    "solve": _cmd_solve,
    "verify": _cmd_verify,
    "ladder": _cmd_ladder,
    "learn": _cmd_learn,
    "example": _cmd_example,
    "lyapunov": _cmd_lyapunov,
}


def run_command(argv):
    """Run one command; returns the exit status."""
    argv = list(argv)
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    if args.command == "example" and not args.example:
        print("berknash: example needs --example", file=sys.stderr)
        return 1
    directory = args.out or os.environ.get(OUT_ENV) or "out"
    try:
        out = _Output(directory, argv, args.seed)
        return _COMMANDS[args.command](args, out)
    except (BerkNashError, ValueError, ArithmeticError, OSError) as err:
        print(f"berknash: error: {err}", file=sys.stderr)
        return 1


def main(argv=None):
    sys.exit(run_command(sys.argv[1:] if argv is None else argv))
