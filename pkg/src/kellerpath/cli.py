"""Command-line front end.

    kellerpath eigs --dim 2 --count 4 --out run/
    kellerpath monotone --dim 3 --mu 200 --out run/
    kellerpath glue --dim 3 --mu 300 --k 2 --boundary-layer --out run/
    kellerpath branch --dim 3 --i 2 --sign minus --mu-max 60 --out run/
    kellerpath verify --suite all --dim 3 --out run/
    kellerpath report --dim 3 --out run/

Settings come from built-in defaults, then an optional ``--config`` file of
``key=value`` lines, then explicit flags.  Every run writes its outputs and
one ``manifest.json`` into ``--out``.  Exit codes: 0 success, 1 solver
failure (or a failed check under ``verify``), 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .errors import ConfigError, SolverError

MANIFEST = "manifest.json"

# key -> (type, default)
SETTINGS: Dict[str, tuple] = {
    "dim": (int, 3),
    "mu": (float, 200.0),
    "a": (float, 0.0),
    "b": (float, 1.0),
    "k": (int, 1),
    "count": (int, 4),
    "suite": (str, "all"),
    "direction": (str, "increasing"),
    "boundary_layer": (bool, False),
    "annulus_left": (bool, False),
    "i": (int, 2),
    "sign": (str, "minus"),
    "mu_max": (float, 0.0),
    "steps": (int, 400),
    "nodes": (int, 4001),
    "profiles": (bool, False),
    "plot": (bool, False),
}

CHOICES = {
    "suite": ("pohozaev", "blowup", "limit", "sensitivity", "nondeg", "green", "all"),
    "direction": ("increasing", "decreasing"),
    "sign": ("minus", "plus"),
}


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _convert(key: str, text: str):
    kind = SETTINGS[key][0]
    val = _parse_bool(text) if kind is bool else kind(text.strip())
    if key in CHOICES and val not in CHOICES[key]:
        raise ValueError(f"{key} must be one of {', '.join(CHOICES[key])}")
    return val


def config_load(path) -> dict:
    """Read a ``key=value`` file (``#`` starts a comment).

    Raises
    ------
    ConfigError
        On a malformed line (with its number) or an unknown key (by name).
    """
    out: dict = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in SETTINGS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                out[key] = _convert(key, val)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from None
    return out


def resolve(config: dict, flags: dict) -> dict:
    """Defaults, overridden by the config file, overridden by explicit flags."""
    out = {k: d for k, (_, d) in SETTINGS.items()}
    out.update(config)
    out.update({k: v for k, v in flags.items() if v is not None})
    return out


@dataclass
class RunManifest:
    command: str
    params: dict
    outputs: List[str] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)
    version: str = __version__

    def write(self, directory: str) -> str:
        path = os.path.join(directory, MANIFEST)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


class _Run:
    """Output directory bookkeeping for one command."""

    def __init__(self, command: str, settings: dict, out: str):
        self.out = out
        os.makedirs(out, exist_ok=True)
        self.manifest = RunManifest(command, settings)
        self._t = time.perf_counter()

    def path(self, name: str) -> str:
        full = os.path.join(self.out, name)
        os.makedirs(os.path.dirname(full), exist_ok=True)
        if name not in self.manifest.outputs:
            self.manifest.outputs.append(name)
        return full

    def json(self, name: str, obj) -> None:
        from .verify import _clean

        with open(self.path(name), "w", encoding="utf-8", newline="") as fh:
            json.dump(_clean(obj), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def stage(self, name: str) -> None:
        now = time.perf_counter()
        self.manifest.timings[name] = round(now - self._t, 6)
        self._t = now

    def close(self) -> None:
        self.manifest.outputs.sort()
        self.manifest.write(self.out)


def _params(s: dict):
    from .radial_ode import Params

    return Params(N=s["dim"], mu=s["mu"], a=s["a"], b=s["b"])


def _solver_settings() -> dict:
    from . import continuation, green, monotone, radial_ode

    return {
        "shoot_rtol": monotone.SHOOT_RTOL,
        "shoot_atol": monotone.SHOOT_ATOL,
        "pair_rtol": green.PAIR_RTOL,
        "pair_atol": green.PAIR_ATOL,
        "ode_rtol": radial_ode.DEFAULT_RTOL,
        "ode_atol": radial_ode.DEFAULT_ATOL,
        "newton_tol": continuation.NEWTON_TOL,
        "seed": 0,
    }


# ----------------------------------------------------------------------------
# commands


def cmd_eigs(s: dict, run: _Run) -> int:
    from .spectrum import cubic_integral, radial_neumann_eigs

    eigs = radial_neumann_eigs(_params(s), s["count"])
    run.stage("solve")
    with open(run.path("eigs.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write("index,lambda,cubic_integral\n")
        for e in eigs:
            fh.write(f"{e.index},{e.lam:.17g},{cubic_integral(e):.17g}\n")
    if s["plot"]:
        from .svg import line_chart

        r = np.linspace(s["a"], s["b"], 401)
        line_chart([(r, e.phi(r), f"phi_{e.index}") for e in eigs], "radial Neumann eigenfunctions", "r", "phi", run.path("eigs.svg"))
    return 0


def cmd_monotone(s: dict, run: _Run) -> int:
    from .monotone import lower_barrier_gap, mass_balance, solve_monotone

    sol = solve_monotone(_params(s), s["direction"])
    run.stage("solve")
    sol.profile.to_csv(run.path("profile.csv"))
    info = sol.manifest()
    info["mass_balance"] = mass_balance(sol.profile, sol.mu)
    info["lower_barrier_gap"] = lower_barrier_gap(sol.profile, sol.mu)
    run.json("solution.json", info)
    if s["plot"]:
        from .svg import line_chart

        p = sol.profile
        line_chart([(p.grid, p.u, f"{sol.direction}, mu={sol.mu:g}")], "monotone solution", "r", "u", run.path("profile.svg"))
    return 0


def cmd_glue(s: dict, run: _Run) -> int:
    from .gluing import k_layer

    sol = k_layer(_params(s), s["k"], boundary_layer=s["boundary_layer"], annulus_left=s["annulus_left"])
    run.stage("solve")
    sol.profile.to_csv(run.path("profile.csv"))
    info = sol.manifest()
    info["converged"] = bool(sol.converged)
    info["violations"] = list(sol.violations)
    info["amplitude_residual"] = sol.limit.residual
    run.json("layer.json", info)
    if s["plot"]:
        from .svg import line_chart

        p = sol.profile
        r = np.linspace(p.a, p.b, 801)
        line_chart([(p.grid, p.u, f"k={sol.k}, mu={sol.mu:g}"), (r, sol.limit.profile(r), "limit")], "glued layer solution", "r", "u", run.path("profile.svg"))
    return 0 if sol.converged else 1


def cmd_branch(s: dict, run: _Run) -> int:
    from .continuation import trace_branch
    from .spectrum import radial_neumann_eigs

    params = _params(s)
    mu_max = s["mu_max"] if s["mu_max"] > 0 else 2.0 * radial_neumann_eigs(params, s["i"])[-1].lam
    br = trace_branch(params, s["i"], s["sign"], mu_max, max_steps=s["steps"], nodes=s["nodes"])
    run.stage("trace")
    br.to_csv(run.path("branch.csv"))
    info = br.manifest()
    info["mu_max"] = mu_max
    info["records_detail"] = [asdict(r) for r in br.records]
    run.json("branch.json", info)
    if s["profiles"]:
        for ref, prof in br.profiles.items():
            prof.to_csv(run.path(os.path.join("profiles", ref.replace("/", "_") + ".csv")))
    if s["plot"]:
        from .svg import line_chart

        line_chart([(br.mus, br.u0s, br.key)], "bifurcation diagram", "mu", "u(0)", run.path("branch.svg"), markers=True)
    return 0


def cmd_verify(s: dict, run: _Run) -> int:
    from .verify import reports_json, run_suite

    reps = run_suite(s["suite"], s["dim"])
    run.stage("checks")
    with open(run.path("report.json"), "w", encoding="utf-8", newline="") as fh:
        fh.write(reports_json(reps))
    if s["plot"]:
        from .svg import line_chart

        for rep in reps:
            if rep.trend:
                m, g = zip(*rep.trend)
                line_chart([(m, g, rep.name)], f"{rep.name} gap", "mu", "gap", run.path(f"trend_{rep.name}.svg"), logy=True, markers=True)
    for rep in reps:
        print(f"{'PASS' if rep.passed else 'FAIL'} {rep.name} gap={rep.gap:.3e}")
    return 0 if all(r.passed for r in reps) else 1


def cmd_report(s: dict, run: _Run) -> int:
    """Ladder summary of the increasing solution: boundary value, energy and asymptotic gaps."""
    from .monotone import solve_increasing
    from .verify import LADDER, blowup_profile, monotone_limit_gap, pohozaev_check

    params = _params(s)
    rows = []
    for mu in LADDER:
        sol = solve_increasing(params.with_(mu=mu))
        rows.append(
            {
                "mu": mu,
                "u_a": float(sol.profile.u[0]),
                "u_b": float(sol.boundary_value),
                "energy": float(sol.energy),
                "pohozaev_gap": pohozaev_check(sol).gap,
                "blowup_gap": blowup_profile(sol).gap,
                "limit_gap": monotone_limit_gap(sol),
            }
        )
    run.stage("ladder")
    keys = list(rows[0])
    with open(run.path("ladder.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(keys) + "\n")
        for row in rows:
            fh.write(",".join(f"{row[k]:.17g}" for k in keys) + "\n")
    run.json("report.json", {"params": params.as_dict(), "ladder": rows})
    if s["plot"]:
        from .svg import line_chart

        mus = [r["mu"] for r in rows]
        series = [(mus, [r[k] for r in rows], k) for k in ("pohozaev_gap", "blowup_gap", "limit_gap")]
        line_chart(series, "asymptotic gaps", "mu", "gap", run.path("trends.svg"), logy=True, markers=True)
    return 0


COMMANDS = {
    "eigs": cmd_eigs,
    "monotone": cmd_monotone,
    "glue": cmd_glue,
    "branch": cmd_branch,
    "verify": cmd_verify,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kellerpath", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, allow_abbrev=False)
        p.add_argument("--out", default=None, help="output directory (default: ./kellerpath-<command>)")
        p.add_argument("--config", default=None, help="key=value settings file")
        p.add_argument("--dim", type=int, default=None)
        p.add_argument("--mu", type=float, default=None)
        p.add_argument("--a", type=float, default=None)
        p.add_argument("--b", type=float, default=None)
        p.add_argument("--k", type=int, default=None)
        p.add_argument("--count", type=int, default=None)
        p.add_argument("--suite", choices=CHOICES["suite"], default=None)
        p.add_argument("--direction", choices=CHOICES["direction"], default=None)
        p.add_argument("--boundary-layer", dest="boundary_layer", action="store_const", const=True, default=None)
        p.add_argument("--annulus-left", dest="annulus_left", action="store_const", const=True, default=None)
        p.add_argument("--i", type=int, default=None)
        p.add_argument("--sign", choices=CHOICES["sign"], default=None)
        p.add_argument("--mu-max", dest="mu_max", type=float, default=None)
        p.add_argument("--steps", type=int, default=None)
        p.add_argument("--nodes", type=int, default=None)
        p.add_argument("--profiles", action="store_const", const=True, default=None)
        p.add_argument("--plot", action="store_const", const=True, default=None)
    return parser


def _error(payload: dict, out: Optional[str]) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True, default=str)
    print(text)
    if out:
        try:
            os.makedirs(out, exist_ok=True)
            with open(os.path.join(out, "error.json"), "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        except OSError:
            pass


def run(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    flags = {k: v for k, v in vars(ns).items() if k in SETTINGS}
    out = ns.out or f"kellerpath-{ns.command}"
    try:
        config = config_load(ns.config) if ns.config else {}
        settings = resolve(config, flags)
        _params(settings)  # validates dim, mu, a, b
    except (ConfigError, ValueError, OSError) as exc:
        _error({"error": type(exc).__name__, "message": str(exc)}, None)
        return 2
    full = {**settings, "solver": _solver_settings()}
    job = _Run(ns.command, full, out)
    try:
        code = COMMANDS[ns.command](settings, job)
    except SolverError as exc:
        payload = exc.to_dict()
        job.path("error.json")
        _error(payload, out)
        code = 1
    except ValueError as exc:
        job.path("error.json")
        _error({"error": type(exc).__name__, "message": str(exc)}, out)
        code = 2
    job.stage("write")
    job.close()
    return code


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
