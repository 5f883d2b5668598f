"""Command-line front end.

Every subcommand writes ``<name>.csv`` and ``<name>.json`` (run manifest)
into the output directory, plus ``<name>.svg`` where a figure makes sense.
Results are cached under ``<out>/.cache`` keyed by the canonical config.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np
from filelock import FileLock

from . import __version__
from .assembly import AssemblyError, QuadratureError
from .geometry import ChartError, DomainSpec, FermiChart
from .linalg import EigenError
from .mesh import MeshError

log = logging.getLogger("hardylab")

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 1, 2


class ConfigError(ValueError):
    pass


class SolverFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# run configuration

@dataclass
class RunConfig:
    command: str
    params: Dict[str, object] = field(default_factory=dict)
    out: str = "hardylab-out"
    cache: bool = True
    verbosity: int = 0

    def to_dict(self) -> dict:
        return {"command": self.command, "params": dict(self.params), "out": self.out,
                "cache": self.cache, "verbosity": self.verbosity}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - {"command", "params", "out", "cache", "verbosity"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "command" not in d:
            raise ConfigError("command: missing")
        cfg = cls(d["command"], dict(d.get("params", {})), d.get("out", "hardylab-out"),
                  bool(d.get("cache", True)), int(d.get("verbosity", 0)))
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"command: unknown subcommand {self.command!r}")
        defaults = _defaults(self.command)
        unknown = set(self.params) - set(defaults)
        if unknown:
            raise ConfigError(f"{self.command}: unknown parameters {sorted(unknown)}")
        for k, v in self.params.items():
            d = defaults[k]
            if isinstance(d, bool) and not isinstance(v, bool):
                raise ConfigError(f"{k}: expected a boolean")
            if isinstance(d, (int, float)) and not isinstance(d, bool) and v is not None \
                    and not isinstance(v, (int, float)):
                raise ConfigError(f"{k}: expected a number")

    def key(self) -> str:
        """Cache key: hash of the canonical command and parameters plus the code version."""
        payload = json.dumps({"command": self.command, "params": self.params,
                              "version": __version__}, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()


def _canonical(v):
    # tuples and lists hash alike
    if isinstance(v, (list, tuple)):
        return [_canonical(x) for x in v]
    return v


# ---------------------------------------------------------------------------
# argument parsing

def _floats(text: str) -> List[float]:
    try:
        return [float(eval_number(t)) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def eval_number(text: str) -> float:
    """Float literal, optionally using ``pi`` (e.g. ``3*pi/2``)."""
    t = text.strip().replace("pi", repr(math.pi))
    allowed = set("0123456789.eE+-*/() ")
    if not t or set(t) - allowed:
        raise ValueError(f"not a number: {text!r}")
    try:
        return float(eval(t, {"__builtins__": {}}, {}))
    except Exception:
        raise ValueError(f"not a number: {text!r}") from None


def _number(text: str) -> float:
    try:
        return eval_number(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_domain(p, default_kind="half_disk", default_r=0.5):
    g = p.add_argument_group("domain")
    g.add_argument("--domain", default=default_kind,
                   help="half_disk, sector, fermi_half_ball, exterior_cap or polygon")
    g.add_argument("--r", type=_number, default=default_r)
    g.add_argument("--theta", type=_number, default=math.pi, help="sector opening angle")
    g.add_argument("--hole-radius", type=_number, default=1.0)
    g.add_argument("--chart", default="sphere_exterior",
                   help="plane, sphere_exterior or sphere_interior (fermi_half_ball)")
    g.add_argument("--vertices", default=None, help="polygon vertices 'x,y;x,y;...'")


def _add_mesh(p, h=0.1, beta=2.0, refine=3):
    g = p.add_argument_group("mesh")
    g.add_argument("--h", type=_number, default=h)
    g.add_argument("--beta", type=_number, default=beta)
    g.add_argument("--floor", type=_number, default=None, help="innermost grading radius")
    g.add_argument("--refine", type=int, default=refine, help="number of meshes in the chain")


def _add_fields(p):
    g = p.add_argument_group("weights")
    g.add_argument("--p", default=None, help="stiffness weight, e.g. '1+r2'")
    g.add_argument("--q", default=None, help="weight of the |x|^-2 denominator")
    g.add_argument("--eta", default=None, help="weight of the lambda term (default r2)")
    g.add_argument("--tol", type=_number, default=1e-9)


class _Parser(argparse.ArgumentParser):
    # usage errors are validation errors: exit 1, not argparse's 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="hardylab",
                                 description="Hardy-Poincare quotients with a boundary singularity")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("--out", default=None, help="output directory (env HARDYLAB_OUT)")
    ap.add_argument("--cache", action=argparse.BooleanOptionalAction, default=True)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    ap.add_argument("-q", "--quiet", action="store_true")
    ap.add_argument("--seed", type=int, default=0, help="reserved; all algorithms are deterministic")
    ap.add_argument("--config", default=None, help="JSON run config (overrides the command line)")
    sub = ap.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("mu", help="mu^h along a refinement chain")
    _add_domain(p)
    _add_mesh(p)
    _add_fields(p)
    p.add_argument("--lambda", dest="lam", type=_number, default=0.0)

    p = sub.add_parser("sweep", help="mu^h against lambda on a fixed mesh")
    _add_domain(p)
    _add_mesh(p, refine=2)
    _add_fields(p)
    p.add_argument("--lambdas", type=_floats, default=[-20.0, 0.0, 10.0, 20.0, 30.0, 40.0])

    p = sub.add_parser("lambda-star", help="plateau threshold per refinement level")
    _add_domain(p)
    _add_mesh(p)
    _add_fields(p)
    p.add_argument("--eps-detect", type=_number, default=0.02)
    p.add_argument("--bisect-tol", type=_number, default=1e-2)
    p.add_argument("--bracket", type=_floats, default=None, help="'lo,hi'")

    p = sub.add_parser("scaling-bound", help="quotient of a profile pushed in at scale eps")
    _add_domain(p)
    p.add_argument("--lambda", dest="lam", type=_number, default=0.0)
    p.add_argument("--eps", type=_floats, default=[0.2, 0.1, 0.05, 0.025])
    p.add_argument("--profile", choices=("bubble", "log"), default="bubble")
    p.add_argument("--log-length", type=_number, default=15.0)

    p = sub.add_parser("improved-hardy", help="remainder constant c_h of the improved inequality")
    p.add_argument("--r", type=_floats, default=[0.1, 0.05])
    p.add_argument("--chart", default="sphere_exterior")
    p.add_argument("--variant", choices=("lemma", "corollary"), default="lemma",
                   help="lemma: Fermi half ball; corollary: half disk")
    p.add_argument("--no-distance", action="store_true", help="drop the inverse distance term")
    p.add_argument("--h", type=_number, default=None, help="default r/10")
    p.add_argument("--beta", type=_number, default=2.0)
    p.add_argument("--floor", type=_number, default=None)
    p.add_argument("--refine", type=int, default=3)

    p = sub.add_parser("exterior-scan", help="mu^h on B_r outside a tangent disk")
    p.add_argument("--r", type=_floats, default=[0.3, 0.8, 2.0, 5.0, 12.0])
    p.add_argument("--hole-radius", type=_number, default=1.0)
    p.add_argument("--lambda", dest="lam", type=_number, default=0.0)
    p.add_argument("--eps-detect", type=_number, default=0.02)
    p.add_argument("--h", type=_number, default=0.1)
    p.add_argument("--beta", type=_number, default=1.0)
    p.add_argument("--floor", type=_number, default=1e-12)
    p.add_argument("--refine", type=int, default=2)

    p = sub.add_parser("barrier-check", help="sign scan of the barrier family")
    p.add_argument("--chart", default="sphere_interior")
    p.add_argument("--a", type=_floats, default=[-0.99, -0.9, -0.75, -0.6, -0.51])
    p.add_argument("--K", type=_number, default=1.0)
    p.add_argument("--lambda", dest="lam", type=_number, default=1.0)
    p.add_argument("--r", type=_floats, default=[0.4, 0.2, 0.1, 0.05])
    p.add_argument("--grid", type=int, default=64)

    p = sub.add_parser("mesh-info", help="quality statistics of the mesh chain")
    _add_domain(p)
    _add_mesh(p)

    p = sub.add_parser("verify", help="built-in consistency suites")
    p.add_argument("suite", nargs="?", default="all",
                   choices=("barriers", "charts", "assembly", "eigensolver", "all"))

    p = sub.add_parser("plot", help="SVG figure from a CSV file")
    p.add_argument("csv")
    p.add_argument("x")
    p.add_argument("y")
    p.add_argument("--output", default=None, help="SVG path (default: next to the CSV)")
    p.add_argument("--ref", type=_number, default=None, help="horizontal reference line")
    p.add_argument("--logx", action="store_true")
    return ap


_GLOBAL = {"out", "cache", "verbose", "quiet", "seed", "config", "command"}


def _defaults(command: str) -> dict:
    ap = build_parser()
    sub = next(a for a in ap._actions if isinstance(a, argparse._SubParsersAction))
    sp = sub.choices[command]
    return {a.dest: a.default for a in sp._actions
            if a.dest not in ("help",) and a.default is not argparse.SUPPRESS}


COMMANDS = ("mu", "sweep", "lambda-star", "scaling-bound", "improved-hardy", "exterior-scan",
            "barrier-check", "mesh-info", "verify", "plot")


# ---------------------------------------------------------------------------
# helpers shared by the commands

def _domain(p: dict) -> DomainSpec:
    kind = p["domain"]
    if kind == "polygon":
        if not p.get("vertices"):
            raise ConfigError("vertices: polygon needs --vertices")
        try:
            verts = tuple(tuple(eval_number(c) for c in v.split(","))
                          for v in p["vertices"].split(";") if v.strip())
        except ValueError as exc:
            raise ConfigError(f"vertices: {exc}") from None
        return DomainSpec("polygon", vertices=verts)
    chart = FermiChart(p.get("chart", "sphere_exterior")) if kind == "fermi_half_ball" \
        else FermiChart()
    return DomainSpec(kind, r=p["r"], theta=p["theta"], hole_radius=p["hole_radius"], chart=chart)


def _problem(p: dict, lam: Optional[float] = None):
    from .problems import QuotientProblem
    return QuotientProblem(_domain(p), lam=p.get("lam", 0.0) if lam is None else lam,
                           p=p.get("p"), q=p.get("q"), eta=p.get("eta"), h=p["h"], beta=p["beta"],
                           refinements=p["refine"], floor=p.get("floor"),
                           tol=p.get("tol", 1e-9))


def _require_converged(eigs) -> None:
    bad = [e for e in eigs if not e.converged]
    if bad:
        raise SolverFailure(f"{len(bad)} eigen solve(s) did not reach tolerance "
                            f"(worst residual {max(e.residual for e in bad):.2e})")


@dataclass
class Outcome:
    rows: List[dict]
    summary: dict = field(default_factory=dict)
    figure: Optional[dict] = None     # arguments for plotting.line_plot
    ok: bool = True


def _trace_rows(trace) -> List[dict]:
    return [{"level": t.level, "mu": t.mu, "residual": t.residual, "iterations": t.iterations,
             "converged": t.converged, "n_free": t.n_free, "h_min": t.h_min, "h_max": t.h_max,
             "fingerprint": t.fingerprint} for t in trace]


# ---------------------------------------------------------------------------
# commands

def cmd_mu(p: dict) -> Outcome:
    from .problems import compute_mu
    res = compute_mu(_problem(p))
    rows = _trace_rows(res.trace)
    _require_converged([res.eigen])
    return Outcome(rows, {"mu_h": res.mu_h},
                   {"x": "level", "y": "mu", "ref": 1.0})


def cmd_sweep(p: dict) -> Outcome:
    from .problems import mu_sweep
    prob = _problem(p)
    res = mu_sweep(prob, p["lambdas"], level=prob.refinements - 1)
    _require_converged(res.eigen)
    rows = res.rows()
    return Outcome(rows, {"n": len(rows)}, {"x": "lambda", "y": "mu", "ref": 1.0})


def cmd_lambda_star(p: dict) -> Outcome:
    from .problems import lambda_star
    res = lambda_star(_problem(p), p.get("bracket"), p["eps_detect"], p["bisect_tol"])
    rows = [{"level": r.level, "lambda_star": r.lam_star, "lo": r.lo, "hi": r.hi,
             "evaluations": r.evaluations, "lambda1": r.lambda1, "n_free": r.n_free,
             "fingerprint": r.fingerprint} for r in res]
    return Outcome(rows, {"lambda_star": [r.lam_star for r in res]},
                   {"x": "level", "y": "lambda_star"})


def cmd_scaling_bound(p: dict) -> Outcome:
    from .problems import bubble_profile, flat_quotient, log_profile, pushed_quotient
    prof = bubble_profile() if p["profile"] == "bubble" else log_profile(p["log_length"])
    dom = _domain(p)
    flat = flat_quotient(prof)
    rows = []
    for e in p["eps"]:
        q = pushed_quotient(prof, dom, e, p["lam"])
        rows.append({"eps": e, "quotient": q, "flat": flat, "gap": q - flat, "lambda": p["lam"]})
    return Outcome(rows, {"flat": flat, "profile": prof.name},
                   {"x": "eps", "y": "quotient", "ref": flat, "logx": True})


def cmd_improved_hardy(p: dict) -> Outcome:
    from .problems import improved_hardy_constant
    chart = FermiChart(p["chart"])
    rows = []
    for r in p["r"]:
        dom = DomainSpec("half_disk", r=r) if p["variant"] == "corollary" else None
        res = improved_hardy_constant(r, not p["no_distance"], chart, dom, p["h"], p["beta"],
                                      p["floor"], p["refine"])
        for t in res.trace:
            row = {"r": r}
            row.update(_trace_rows([t])[0])
            row["c_h"] = row.pop("mu")
            rows.append(row)
    finest = [row for row in rows if row["level"] == p["refine"] - 1]
    return Outcome(rows, {"c_h": {str(row["r"]): row["c_h"] for row in finest}},
                   {"x": "r", "y": "c_h", "ref": 0.0, "logx": True, "rows": finest})


def cmd_exterior_scan(p: dict) -> Outcome:
    from .problems import exterior_transition
    res = exterior_transition(p["r"], p["hole_radius"], p["lam"], p["eps_detect"], p["h"],
                              p["beta"], p["floor"], p["refine"])
    _require_converged(res.sweep.eigen)
    return Outcome(res.sweep.rows(), {"r_hat": res.r_hat, "bracket": res.bracket,
                                      "monotone": res.monotone},
                   {"x": "r", "y": "mu", "ref": 1.0 - p["eps_detect"], "logx": True})


def cmd_barrier_check(p: dict) -> Outcome:
    from .closedform import BarrierParams, OperatorSpec, barrier_sign_scan
    chart = FermiChart(p["chart"])
    rows = []
    for r in p["r"]:
        for a in p["a"]:
            s = barrier_sign_scan(BarrierParams(a, p["K"]), OperatorSpec(lam=p["lam"]), chart, r,
                                  grid=p["grid"])
            rows.append({"a": a, "K": p["K"], "r": r, "grid": p["grid"],
                         "max_residual_ratio": s.max_ratio, "admissible": s.admissible,
                         "n_points": s.n_points})
    good = [r for r in p["r"] if all(x["admissible"] for x in rows if x["r"] == r)]
    return Outcome(rows, {"admissible_radii": good})


def cmd_mesh_info(p: dict) -> Outcome:
    from .mesh import check_invariants, corner_angle, generate, mesh_quality, refine
    dom = _domain(p)
    m = generate(dom, p["h"], p["beta"], floor=p["floor"])
    rows = []
    for k in range(p["refine"]):
        q = mesh_quality(m)
        ang = corner_angle(dom, m.meta.get("r_meshed"))
        limit = min(20.0, 0.7 * ang) if dom.kind == "exterior_cap" else 20.0
        viol = check_invariants(m, min_angle=limit)
        row = {"level": k}
        row.update({key: (float(v) if isinstance(v, (float, np.floating)) else int(v))
                    for key, v in q.items()})
        row.update({"violations": len(viol), "fingerprint": m.fingerprint()})
        rows.append(row)
        if k < p["refine"] - 1:
            m = refine(m)
    return Outcome(rows, {"n_vertices": rows[-1]["n_vertices"]},
                   {"mesh": m})


def cmd_verify(p: dict) -> Outcome:
    from .verify import run_suite
    rows = run_suite(p["suite"])
    ok = all(r["passed"] for r in rows)
    return Outcome(rows, {"passed": ok}, None, ok)


HANDLERS: Dict[str, Callable[[dict], Outcome]] = {
    "mu": cmd_mu, "sweep": cmd_sweep, "lambda-star": cmd_lambda_star,
    "scaling-bound": cmd_scaling_bound, "improved-hardy": cmd_improved_hardy,
    "exterior-scan": cmd_exterior_scan, "barrier-check": cmd_barrier_check,
    "mesh-info": cmd_mesh_info, "verify": cmd_verify,
}


# ---------------------------------------------------------------------------
# output

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def write_csv(path: Path, rows: List[dict]) -> None:
    cols: List[str] = []
    for r in rows:
        cols.extend(k for k in r if k not in cols)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in cols])
    path.write_text(buf.getvalue(), encoding="utf-8", newline="")


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    return v


def _figure(name: str, out: Path, fig: Optional[dict], rows: List[dict]) -> Optional[str]:
    if not fig or not rows:
        return None
    from . import plotting
    path = out / f"{name}.svg"
    if "mesh" in fig:
        plotting.mesh_plot(fig["mesh"], path)
        return path.name
    data = fig.get("rows", rows)
    xs = [float(r[fig["x"]]) for r in data]
    ys = [float(r[fig["y"]]) for r in data]
    plotting.line_plot(xs, ys, path, fig["x"], fig["y"], fig.get("ref"), name,
                       fig.get("logx", False) and min(xs) > 0)
    return path.name


def run(cfg: RunConfig) -> int:
    """Execute one configured command; returns the exit code."""
    try:
        cfg.validate()
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    name = cfg.command
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    params = _defaults(name)
    params.update(cfg.params)
    params = {k: _canonical(v) for k, v in params.items()}
    cfg = RunConfig(name, params, cfg.out, cfg.cache, cfg.verbosity)
    key = cfg.key()
    cache_file = out / ".cache" / f"{key}.json"
    with FileLock(str(out / ".lock")):
        if cfg.cache and cache_file.exists():
            stored = json.loads(cache_file.read_text())
            if stored.get("version") == __version__:
                log.info("cache hit %s", key[:12])
                write_csv(out / f"{name}.csv", stored["rows"])
                manifest = dict(stored["manifest"], cache_hit=True)
                (out / f"{name}.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
                return stored["exit"]
        t0 = time.perf_counter()
        code = EXIT_OK
        error = None
        try:
            outcome = HANDLERS[name](params)
        except SolverFailure as exc:
            log.error("solver: %s", exc)
            return EXIT_SOLVER
        except (EigenError, QuadratureError) as exc:
            log.error("solver: %s", exc)
            return EXIT_SOLVER
        except (ValueError, ChartError, MeshError, AssemblyError, ConfigError) as exc:
            log.error("invalid input: %s", exc)
            return EXIT_INVALID
        if not outcome.ok:
            code = EXIT_INVALID
            error = "checks failed"
        elapsed = time.perf_counter() - t0
        write_csv(out / f"{name}.csv", outcome.rows)
        figure = _figure(name, out, outcome.figure, outcome.rows)
        manifest = {"command": name, "params": params, "version": __version__, "key": key,
                    "seconds": round(elapsed, 3), "rows": len(outcome.rows),
                    "summary": _jsonable(outcome.summary), "csv": f"{name}.csv",
                    "figure": figure, "python": platform.python_version(),
                    "numpy": np.__version__, "exit": code, "error": error, "cache_hit": False}
        (out / f"{name}.json").write_text(json.dumps(_jsonable(manifest), indent=2,
                                                     sort_keys=True))
        if cfg.cache:
            cache_file.parent.mkdir(exist_ok=True)
            cache_file.write_text(json.dumps(_jsonable({"version": __version__, "rows": outcome.rows,
                                                        "manifest": manifest, "exit": code})))
        for k, v in outcome.summary.items():
            log.info("%s: %s", k, v)
        return code


def _plot(ns) -> int:
    from .plotting import PlotError, plot_csv
    out = ns.output or str(Path(ns.csv).with_suffix(".svg"))
    try:
        plot_csv(ns.csv, ns.x, ns.y, out, ref=ns.ref, logx=ns.logx)
    except (PlotError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    log.info("wrote %s", out)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:    # --help, --version and usage errors
        return int(exc.code or 0)
    level = logging.WARNING if ns.quiet else (logging.DEBUG if ns.verbose > 1 else logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr, force=True)
    out = ns.out or os.environ.get("HARDYLAB_OUT") or "hardylab-out"
    if ns.config:
        try:
            data = json.loads(Path(ns.config).read_text())
            data.setdefault("out", out)
            cfg = RunConfig.from_dict(data)
        except (OSError, json.JSONDecodeError, ConfigError) as exc:
            log.error("config: %s", exc)
            return EXIT_INVALID
        if cfg.command == "plot":
            log.error("config: plot is not configurable from a file")
            return EXIT_INVALID
        return run(cfg)
    if ns.command is None:
        ap.print_help(sys.stderr)
        return EXIT_INVALID
    if ns.command == "plot":
        return _plot(ns)
    params = {k: v for k, v in vars(ns).items() if k not in _GLOBAL}
    return run(RunConfig(ns.command, params, out, ns.cache, ns.verbose))


if __name__ == "__main__":
    sys.exit(main())
