"""Command line front end: ``posorbit <subcommand> --config <path> [--set key=value ...] --out <dir>``.

Every run writes ``report.json`` (keys ``config``, ``checks``, ``thresholds``,
``degrees``, ``orbits``, ``provenance`` and ``results``) plus plot-ready CSV
files. Exit status is 0 on success, 2 when a condition named with
``--require`` does not pass, and 1 on configuration or numerical errors.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
import time
from typing import Any, Optional

import numpy as np

from . import __version__
from .degree import small_ball_degree
from .errors import ConfigError, PosOrbitError
from .fields import FieldSpecError, build_g, build_h, build_phi
from .flow import SystemInstance, period_map
from .hypotheses import (CONDITION_ALIASES, R_of_lambda, applicability, check_strong_max_L1,
                         check_strong_max_Linf, lambda_star)
from .solver import (StartGrid, StepPolicy, continue_lambda, degree_ledger, multistart_solve, newton_periodic,
                     nonexistence_probe, probe_r0)
from .weights import build_weight

SUBCOMMANDS = ("check", "thresholds", "degree", "solve", "continue", "period-map", "probe")

DEFAULTS: dict = {
    "system": {
        "h": {"family": "identity"},
        "g": {"family": "power", "beta": 3.0},
        "weight": {"family": "shifted-sine", "amplitude": 1.0, "offset": -0.3, "phase": 0.0, "period": 1.0},
        "phi": None,
        "lambda": 50.0,
        "lambda_end": 200.0,
    },
    "run": {
        "tol": 1e-10,
        "degree_tol": 1e-9,
        "refine": 1,
        "mu": 1e-3,
        "R": 1.0,
        "r0": None,
        "small_box": 0.5,
        "ledger": False,
        "require": [],
        "seed_point": None,
        "grid": {"u_range": [0.0, 2.0], "v_range": [-2.0, 2.0], "counts": [16, 16]},
        "ledger_grid": {"u_range": [0.0, 2.0], "v_range": [-2.0, 2.0], "counts": [6, 6]},
        "probe": {"r": None, "theta_grid": [0.25, 0.5, 0.75, 1.0], "start_count": 24, "band": 0.1},
        "continuation": {"initial": None, "min_step": 1e-4, "max_frac": 0.5, "grow": 1.5, "shrink": 0.5,
                         "trust_radius": 0.5},
        "period_map": {"A": 1.0, "B": 1.0, "alpha": 1.0, "beta": 3.0,
                       "energies": [1e-6, 1e-3, 1.0, 1e3, 1e6]},
    },
    "output": {"dir": "posorbit-out", "csv": True},
}

# blocks whose contents are family parameters checked by the builders
_FREE_BLOCKS = {("system", "h"), ("system", "g"), ("system", "weight"), ("system", "phi")}


# ----------------------------------------------------------------------------
# configuration

def _merge(base: dict, over: dict, path: tuple = ()) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        here = path + (k,)
        if k not in base:
            raise ConfigError(f"unknown config key '{'.'.join(here)}'")
        if isinstance(base[k], dict) and here not in _FREE_BLOCKS:
            if not isinstance(v, dict):
                raise ConfigError(f"config field '{'.'.join(here)}' must be an object")
            out[k] = _merge(base[k], v, here)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: dict, sets: list[str]) -> dict:
    """Apply ``key.path=value`` overrides; values are JSON when they parse as JSON."""
    cfg = copy.deepcopy(cfg)
    for item in sets:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        node, path = cfg, ()
        for p in parts[:-1]:
            path += (p,)
            if path in _FREE_BLOCKS and node.get(p) is None:
                node[p] = {}
            if not isinstance(node.get(p), dict):
                raise ConfigError(f"unknown config key '{'.'.join(path)}'")
            node = node[p]
        last = parts[-1]
        if path not in _FREE_BLOCKS and last not in node:
            raise ConfigError(f"unknown config key '{key}'")
        node[last] = _parse_value(text)
    return cfg


def load_config(path: Optional[str], sets: Optional[list[str]] = None) -> dict:
    """Defaults, then the JSON file, then overrides. Unknown keys are errors."""
    user = {}
    if path:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be an object")
    cfg = _merge(DEFAULTS, user)
    cfg = apply_overrides(cfg, sets or [])
    _validate(cfg)
    return cfg


def _validate(cfg: dict) -> None:
    run = cfg["run"]
    for key in ("tol", "degree_tol", "mu", "R", "small_box"):
        val = run[key]
        if not isinstance(val, (int, float)) or isinstance(val, bool) or not val > 0:
            raise ConfigError(f"run.{key} must be a positive number, got {val!r}")
    lam = cfg["system"]["lambda"]
    if not isinstance(lam, (int, float)) or not lam > 0:
        raise ConfigError(f"system.lambda must be a positive number, got {lam!r}")
    if not isinstance(run["require"], list):
        raise ConfigError("run.require must be a list of condition names")
    for block in ("h", "g", "weight"):
        if not isinstance(cfg["system"][block], dict) or "family" not in cfg["system"][block]:
            raise ConfigError(f"system.{block} must be an object with a 'family' field")


def build_system(cfg: dict, mode: str = "S-tilde"):
    """``(SystemInstance or None, h, g, a, phi)``; the instance is None when ``g`` violates the sign condition."""
    s = cfg["system"]
    try:
        h = build_h(s["h"])
        g = build_g(s["g"])
        a = build_weight(s["weight"])
        phi = None
        if s["phi"] is not None:
            phi = build_phi(s["phi"])
        elif s["h"]["family"] == "phi-inverse":
            spec = dict(s["h"])
            spec.pop("family")
            spec["family"] = spec.pop("phi")
            phi = build_phi(spec)
    except (FieldSpecError, PosOrbitError) as exc:
        raise ConfigError(str(exc)) from None
    try:
        sysi = SystemInstance(h, g, a, float(s["lambda"]), mode=mode)
    except ConfigError:
        sysi = None
    return sysi, h, g, a, phi


# ----------------------------------------------------------------------------
# report helpers

def _clean(x):
    """JSON-ready copy: numpy scalars and arrays to Python, tuples to lists."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _strip_timing(x):
    if isinstance(x, dict):
        return {k: _strip_timing(v) for k, v in x.items() if k != "wall_time"}
    if isinstance(x, list):
        return [_strip_timing(v) for v in x]
    return x


def report_digest(report: dict) -> str:
    """SHA-256 of the report with wall-clock entries removed."""
    text = json.dumps(_strip_timing(_clean(report)), sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()


def _error_entry(stage: str, exc: Exception) -> dict:
    return {"stage": stage, "type": type(exc).__name__, "message": str(exc)}


def _write_rows(path: str, header: list[str], rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(f"{x:.15g}" if isinstance(x, float) else str(x) for x in row) + "\n")


# ----------------------------------------------------------------------------
# pipelines

class Run:
    def __init__(self, cfg: dict, out_dir: str, stream=sys.stdout):
        self.cfg = cfg
        self.out = out_dir
        self.stream = stream
        self.report = {"config": cfg, "checks": {}, "thresholds": {}, "degrees": {}, "orbits": [],
                       "provenance": {"tool": "posorbit", "version": __version__, "errors": [],
                                      "tolerances": {"tol": cfg["run"]["tol"],
                                                     "degree_tol": cfg["run"]["degree_tol"]}},
                       "results": {}}
        self.status = 0
        self._sys = None

    def say(self, text: str) -> None:
        print(text, file=self.stream)

    def fail(self, stage: str, exc: Exception) -> None:
        self.report["provenance"]["errors"].append(_error_entry(stage, exc))
        self.say(f"error in {stage}: {type(exc).__name__}: {exc}")
        self.status = 1

    @property
    def system(self) -> SystemInstance:
        if self._sys is None:
            sysi, *_ = build_system(self.cfg)
            if sysi is None:
                raise ConfigError("g violates the sign condition; the extended system is undefined")
            self._sys = sysi
        return self._sys

    def csv_path(self, name: str) -> Optional[str]:
        if not self.cfg["output"]["csv"]:
            return None
        return os.path.join(self.out, name)

    def _r0(self) -> float:
        r0 = self.cfg["run"]["r0"]
        if r0 is not None:
            return float(r0)
        r0, log = probe_r0(self.system, tol=1e-9)
        self.report["results"]["r0_probe"] = [p.to_dict() for p in log]
        return r0

    # subcommands ---------------------------------------------------------

    def check(self) -> None:
        run = self.cfg["run"]
        _, h, g, a, phi = build_system(self.cfg)
        reports, table = applicability(h, g, a, phi, refine=run["refine"])
        lam = float(self.cfg["system"]["lambda"])
        for name, fn in (("strong-max-L1", check_strong_max_L1), ("strong-max-Linf", check_strong_max_Linf)):
            try:
                reports[name] = fn(h, g, lam, a)
            except PosOrbitError as exc:
                self.fail(name, exc)
        self.report["checks"] = {"reports": {k: r.to_dict() for k, r in reports.items()}, "table": table}
        self.say(f"{'condition':<24} verdict")
        for k, r in reports.items():
            self.say(f"{k:<24} {r.verdict}")
        self.say("")
        self.say(f"{'theorem':<30} {'regime':<18} verdict")
        for row in table:
            self.say(f"{row['theorem']:<30} {row['regime']:<18} {row['verdict']}")
        failed = []
        for name in run["require"]:
            key = CONDITION_ALIASES.get(name, name)
            if key not in reports:
                raise ConfigError(f"--require names an unknown condition {name!r}")
            if not reports[key].passed:
                failed.append(name)
        self.report["checks"]["required_failed"] = failed
        if failed and self.status == 0:
            self.say("required conditions not passed: " + ", ".join(failed))
            self.status = 2

    def thresholds(self) -> None:
        run, sysi = self.cfg["run"], self.system
        r0 = self._r0()
        out = {}
        try:
            out["lambda_star"] = lambda_star(sysi, float(run["R"]), r0_probe=r0, mu=run["mu"]).to_dict()
            self.say(f"lambda* (R={run['R']:g}) = {out['lambda_star']['lambda_star']:.10g}")
        except PosOrbitError as exc:
            self.fail("lambda_star", exc)
        try:
            out["R_of_lambda"] = R_of_lambda(sysi, mu=run["mu"], r0_probe=r0).to_dict()
            t = out["R_of_lambda"]
            self.say(f"R(lambda={sysi.lam:g}) = {t['R']:.6g}, R' = {t['R_prime']:.6g}, alpha0 = {t['alpha_zero']:.6g}")
        except PosOrbitError as exc:
            self.fail("R_of_lambda", exc)
        self.report["thresholds"] = out

    def degree(self, ledger: bool) -> None:
        run, sysi = self.cfg["run"], self.system
        if not ledger:
            res = small_ball_degree(sysi, float(run["small_box"]))
            self.report["degrees"]["small_averaged"] = res.to_dict()
            self.say(f"averaged field degree on the box of half-width {run['small_box']:g}: {res.degree}")
            path = self.csv_path("degree_small.csv")
            if path:
                res.to_csv(path)
            return
        r0 = self._r0()
        ms = multistart_solve(sysi, StartGrid(**_grid(run["ledger_grid"])), tol=max(run["tol"], 1e-10))
        th = R_of_lambda(sysi, mu=run["mu"], r0_probe=r0)
        self.report["thresholds"]["R_of_lambda"] = th.to_dict()
        self.report["orbits"] = [o.summary() for o in ms.orbits]
        led = degree_ledger(sysi, r0, th.R, th.R_prime, enclose=[o.z0 for o in ms.orbits],
                            tol=run["degree_tol"])
        self.report["degrees"] = led.to_dict()
        self.say(f"small box (averaged field):   {led.small_averaged.degree}")
        self.say(f"small box (Poincare residual): {led.small_poincare.degree}")
        self.say(f"large box (Poincare residual): {led.large_poincare.degree}  half-widths {led.box_info['used']}")
        self.say(f"annulus: {led.annulus}  certified: {led.certified}  wall time {led.wall_time:.2f} s")
        for name, res in (("ledger_small.csv", led.small_poincare), ("ledger_large.csv", led.large_poincare)):
            path = self.csv_path(name)
            if path:
                res.to_csv(path)

    def solve(self) -> None:
        run, sysi = self.cfg["run"], self.system
        ms = multistart_solve(sysi, StartGrid(**_grid(run["grid"])), tol=run["tol"])
        self.report["orbits"] = [o.summary() for o in ms.orbits]
        self.report["results"]["multistart"] = {"failures": ms.failures, "starts": ms.starts,
                                                "trivial": None if ms.trivial is None else ms.trivial.summary()}
        self.say(f"{len(ms.orbits)} nontrivial orbit(s) from {ms.starts} starts; tallies {ms.failures}")
        for k, o in enumerate(ms.orbits):
            self.say(f"  z0=({o.z0[0]:.10g}, {o.z0[1]:.10g}) max u={o.max_u:.6g} min u={o.min_u:.3g} "
                     f"strong={o.strong_ok}")
            path = self.csv_path(f"orbit_{k}.csv")
            if path:
                o.trajectory.to_csv(path, sysi.period)
        path = self.csv_path("orbits.csv")
        if path:
            keys = ["lambda", "u0", "v0", "residual", "min_u", "max_u", "argmax_t", "strong_ok"]
            _write_rows(path, keys, ([o.summary()[k] for k in keys] for o in ms.orbits))

    def continuation(self) -> None:
        run, sysi = self.cfg["run"], self.system
        seed = None
        if run["seed_point"] is not None:
            seed = newton_periodic(sysi, run["seed_point"], run["tol"])
        else:
            ms = multistart_solve(sysi, StartGrid(**_grid(run["grid"])), tol=run["tol"])
            pos = ms.positive
            seed = pos[0] if pos else None
        br = continue_lambda(sysi, seed, float(self.cfg["system"]["lambda_end"]),
                             StepPolicy(**run["continuation"]), tol=run["tol"])
        self.report["results"]["branch"] = br.to_dict()
        self.report["orbits"] = [o.summary() for _, o in br.points]
        self.say(f"branch of {len(br.points)} points from lambda={br.lambdas[0]:g} to {br.lambdas[-1]:g}; "
                 f"stopped: {br.reason}")
        path = self.csv_path("branch.csv")
        if path:
            keys = ["lambda", "u0", "v0", "residual", "min_u", "max_u", "argmax_t", "strong_ok"]
            _write_rows(path, keys, ([o.summary()[k] for k in keys] for _, o in br.points))

    def period_map(self) -> None:
        pm = self.cfg["run"]["period_map"]
        rows = []
        for E in pm["energies"]:
            tau = period_map(pm["A"], pm["B"], pm["alpha"], pm["beta"], float(E))
            rows.append((float(E), tau))
            self.say(f"E={E:<10g} tau={tau:.12g}")
        self.report["results"]["period_map"] = {"params": {k: pm[k] for k in ("A", "B", "alpha", "beta")},
                                                "table": [list(r) for r in rows]}
        path = self.csv_path("period_map.csv")
        if path:
            _write_rows(path, ["E", "tau"], rows)

    def probe(self) -> None:
        pr, sysi = self.cfg["run"]["probe"], self.system
        if pr["r"] is None:
            r0 = self._r0()
            self.report["thresholds"]["r0_probe"] = r0
            self.say(f"largest probe-negative radius: {r0:g}")
            return
        res = nonexistence_probe(sysi, float(pr["r"]), theta_grid=pr["theta_grid"],
                                 start_count=pr["start_count"], band=pr["band"])
        self.report["results"]["probe"] = res.to_dict()
        self.say(f"probe at r={res.r:g}: " + ", ".join(f"theta={k:g} {'found' if v else 'none'}"
                                                       for k, v in res.found.items()))


def _grid(spec: dict) -> dict:
    return {"u_range": tuple(spec["u_range"]), "v_range": tuple(spec["v_range"]), "counts": tuple(spec["counts"])}


def run(subcommand: str, cfg: dict, out_dir: Optional[str] = None, ledger: bool = False, stream=None) -> tuple[int, dict]:
    """Execute one pipeline, write the report, and return ``(exit status, report)``."""
    if subcommand not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    out_dir = out_dir or cfg["output"]["dir"]
    os.makedirs(out_dir, exist_ok=True)
    r = Run(cfg, out_dir, stream or sys.stdout)
    t0 = time.perf_counter()
    try:
        if subcommand == "check":
            r.check()
        elif subcommand == "thresholds":
            r.thresholds()
        elif subcommand == "degree":
            r.degree(ledger or bool(cfg["run"]["ledger"]))
        elif subcommand == "solve":
            r.solve()
        elif subcommand == "continue":
            r.continuation()
        elif subcommand == "period-map":
            r.period_map()
        else:
            r.probe()
    except PosOrbitError as exc:
        r.fail(subcommand, exc)
    prov = r.report["provenance"]
    prov["subcommand"] = subcommand
    prov["wall_time"] = time.perf_counter() - t0
    prov["exit_status"] = r.status
    report = _clean(r.report)
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    return r.status, report


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="posorbit", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"posorbit {__version__}")
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file (defaults apply to missing fields)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field, e.g. system.lambda=100")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        p.add_argument("--require", action="append", default=[], metavar="CONDITION",
                       help="exit 2 unless this condition passes (check only)")
        if name == "degree":
            p.add_argument("--ledger", action="store_true", help="small box, large box and annulus degrees")
    return ap


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
        if args.require:
            cfg["run"]["require"] = list(cfg["run"]["require"]) + args.require
        status, _ = run(args.subcommand, cfg, args.out, ledger=getattr(args, "ledger", False))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    return status


if __name__ == "__main__":
    sys.exit(main())
