"""``interpgap`` command line: resolve a run config, execute it, persist CSV/JSON plus a manifest.

Exit codes: 0 success, 2 usage error, 3 numerical failure (or a failed
selfcheck), 4 I/O failure.
"""

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np
import scipy

from . import __version__
from .errors import InterpGapError
from .experiments import (LAMBDA_SCHEDULES, alpha_sweep, consistency_divergence_sweep,
                          double_descent_curve, flip_experiment, lambda_schedule, norm_limit_check,
                          ridge_equivalence_curve)
from .gap import gap_decomposition_ball
from .interpolators import min_norm
from .model import ProblemSpec, sample_dataset
from .selfcheck import run_selfcheck

log = logging.getLogger("interpgap")

ENV_OUTPUT_DIR = "INTERPGAP_OUTPUT_DIR"
EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4
COMMANDS = ("gap", "alpha-sweep", "flip", "norms", "double-descent", "sweep-n", "ridge-equiv", "selfcheck")
W_STAR_GENERATORS = ("e1", "zeros", "unit")

F, I, B, S = "float", "int", "bool", "str"
COLUMNS = {
    "gap": [("n", I), ("d_S", I), ("d_J", I), ("lambda", F), ("sigma2", F), ("B_factor", F),
            ("B", F), ("mn_norm", F), ("gap_value", F), ("anchor_risk", F), ("kappa", F),
            ("lambda_star", F), ("remainder", F), ("remainder_bound", F), ("seed", I)],
    "alpha-sweep": [("alpha", F), ("gap_mean", F), ("gap_se", F), ("target", F), ("tolerance", F),
                    ("pass", B), ("seed", I), ("trials", I)],
    "flip": [("n", I), ("d_S", I), ("d_J", I), ("lambda", F),
             ("ls_mean", F), ("ls_se", F), ("ls_target", F), ("ls_tolerance", F), ("ls_pass", B),
             ("ld_mean", F), ("ld_se", F), ("ld_target", F), ("ld_tolerance", F), ("ld_pass", B),
             ("ld_mn_mean", F), ("ld_mn_se", F), ("identity_max_rel", F), ("seed", I), ("trials", I)],
    "norms": [("n", I), ("lambda", F), ("d_J", I),
              ("mr_norm2_mean", F), ("mr_norm2_se", F), ("mr_norm2_limit", F), ("mr_pass", B),
              ("mn_norm2_mean", F), ("mn_norm2_se", F), ("mn_norm2_limit", F), ("mn_pass", B),
              ("beta_n", F), ("beta_se", F), ("size_product", F), ("size_target", F),
              ("size_tolerance", F), ("size_pass", B), ("seed", I), ("trials", I)],
    "double-descent": [("n", I), ("p", I), ("formula", F), ("risk_mean", F), ("risk_se", F),
                       ("tolerance", F), ("pass", B), ("seed", I), ("trials", I)],
    "sweep-n": [("n", I), ("lambda", F), ("d_J", I), ("excess_mn_mean", F), ("excess_mn_se", F),
                ("excess_ridge_mean", F), ("excess_ridge_se", F), ("dev_product_mean", F),
                ("dev_product_se", F), ("kappa_product_mean", F), ("kappa_product_se", F),
                ("kappa_target", F), ("kappa_tolerance", F), ("kappa_pass", B), ("seed", I), ("trials", I)],
    "ridge-equiv": [("n", I), ("lambda", F), ("d_J", I), ("signal_gap_mean", F), ("signal_gap_se", F),
                    ("rel_signal_gap_mean", F), ("rel_signal_gap_se", F), ("junk_pred_mean", F),
                    ("junk_pred_se", F), ("seed", I), ("trials", I)],
    "selfcheck": [("check", S), ("instances", I), ("max_error", F), ("tolerance", F), ("pass", B),
                  ("seed", I)],
}


class ConfigError(ValueError):
    """Invalid or missing configuration value; ``field`` names the offender."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class RunConfig:
    command: str
    n: Optional[int] = None
    n_grid: Optional[tuple] = None
    d_S: int = 1
    d_J: Optional[int] = None      # None: d_J_factor * n
    d_J_factor: int = 10
    lam: Optional[float] = None    # None: schedule(n)
    schedule: str = "sqrt"
    sigma2: float = 1.0
    w_star: object = "e1"          # generator name or explicit tuple
    alphas: Optional[tuple] = None
    p_grid: Optional[tuple] = None
    d_J_grid: Optional[tuple] = None
    B_factor: float = 1.5
    method: str = "auto"
    trials: int = 1000
    seed: int = 42
    workers: int = 1
    rel_tol: Optional[float] = None
    rel_tol_risk: float = 0.10
    out: Optional[str] = None
    format: str = "csv"

    def w_star_vector(self) -> np.ndarray:
        if isinstance(self.w_star, tuple):
            return np.array(self.w_star, dtype=float)
        w = np.zeros(self.d_S)
        if self.w_star == "e1" and self.d_S:
            w[0] = 1.0
        elif self.w_star == "unit" and self.d_S:
            w[:] = 1.0 / np.sqrt(self.d_S)
        return w

    def spec_for(self, n: int, d_J: Optional[int] = None) -> ProblemSpec:
        lam = self.lam if self.lam is not None else lambda_schedule(self.schedule)(n)
        d_J = d_J or self.d_J or self.d_J_factor * n
        return ProblemSpec(self.d_S, d_J, lam, self.sigma2, self.w_star_vector())

    def as_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d


COMMAND_DEFAULTS = {
    "gap": dict(n=50),
    "alpha-sweep": dict(n=200, alphas=(1.0, 1.5, 2.0), rel_tol=0.15),
    "flip": dict(n=200, d_J=10_000, rel_tol=0.05),
    "norms": dict(n=100, d_J_grid=(1000, 10000), rel_tol=0.10),
    "double-descent": dict(n=20, p_grid=(22, 25, 30, 40, 60, 100, 200), rel_tol=0.0),
    "sweep-n": dict(n_grid=(50, 100, 200, 400), rel_tol=0.10),
    "ridge-equiv": dict(n=100, d_J_grid=(100, 1000, 10000)),
    "selfcheck": dict(trials=200),
}

# config-file key -> dataclass field
_ALIASES = {"lambda": "lam", "b_factor": "B_factor", "d_s": "d_S", "d_j": "d_J",
            "d_j_factor": "d_J_factor", "d_j_grid": "d_J_grid", "w_star_s": "w_star"}


def _list(kind):
    def parse(text):
        try:
            vals = [kind(t) for t in str(text).split(",") if t.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid {kind.__name__} list: {text!r}") from None
        return tuple(vals)
    return parse


def _w_star(text):
    text = str(text).strip()
    if text in W_STAR_GENERATORS:
        return text
    try:
        return tuple(float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected one of {W_STAR_GENERATORS} or a comma list of floats, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    a = common.add_argument
    a("--config", help="JSON file of config values; flags take precedence")
    a("--n", type=int, help="sample size")
    a("--n-grid", dest="n_grid", type=_list(int), help="comma list of sample sizes (sweep-n)")
    a("--d-s", dest="d_S", type=int, help="signal dimension")
    a("--d-j", dest="d_J", type=int, help="junk dimension (default d-j-factor * n)")
    a("--d-j-factor", dest="d_J_factor", type=int, help="junk dimension per sample (default 10)")
    a("--lambda", dest="lam", type=float, help="total junk variance (overrides --schedule)")
    a("--schedule", choices=sorted(LAMBDA_SCHEDULES), help="lambda as a function of n (default sqrt)")
    a("--sigma2", type=float, help="noise variance")
    a("--w-star", dest="w_star", type=_w_star, help="e1 | zeros | unit | comma list of floats")
    a("--alphas", type=_list(float), help="comma list of budget multipliers >= 1")
    a("--p-grid", dest="p_grid", type=_list(int), help="comma list of dimensions (double-descent)")
    a("--d-j-grid", dest="d_J_grid", type=_list(int), help="comma list of junk dimensions")
    a("--B-factor", dest="B_factor", type=float, help="budget as a multiple of ||w_mn|| (gap)")
    a("--method", choices=("auto", "dense", "structured"), help="gap solver path")
    a("--trials", type=int, help="Monte Carlo trials (selfcheck: instances per check)")
    a("--seed", type=int, help="master seed")
    a("--workers", type=int, help="worker threads")
    a("--rel-tol", dest="rel_tol", type=float, help="declared relative tolerance")
    a("--rel-tol-risk", dest="rel_tol_risk", type=float, help="flip: tolerance on population risk")
    a("--out", help=f"output path; '-' for stdout (default ${ENV_OUTPUT_DIR} or cwd)")
    a("--format", choices=("csv", "json"))
    parser = argparse.ArgumentParser(prog="interpgap", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"interpgap {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for cmd in COMMANDS:
        sub.add_parser(cmd, parents=[common])
    return parser


def _load_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"{path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be an object")
    names = {f.name for f in fields(RunConfig)} - {"command"}
    out = {}
    for key, val in raw.items():
        k = key.replace("-", "_")
        k = _ALIASES.get(k.lower(), k)
        if k not in names:
            raise ConfigError(key, "unknown config key")
        if isinstance(val, list):
            val = tuple(val)
        if k == "w_star" and isinstance(val, str):
            val = _w_star(val)
        out[k] = val
    return out


def _ascending(name, vals):
    if not vals:
        raise ConfigError(name, "grid must be nonempty")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ConfigError(name, f"grid must be strictly ascending, got {list(vals)}")


def validate(cfg: RunConfig) -> RunConfig:
    def need(name, ok, msg):
        if not ok:
            raise ConfigError(name, f"{msg}, got {getattr(cfg, name)!r}")

    ints = ("n", "d_S", "d_J", "d_J_factor", "trials", "seed", "workers")
    for name in ints:
        v = getattr(cfg, name)
        if v is not None and (isinstance(v, bool) or not isinstance(v, (int, np.integer))):
            raise ConfigError(name, f"must be an integer, got {v!r}")
    if cfg.command == "sweep-n":
        _ascending("n_grid", cfg.n_grid or ())
        need("n_grid", min(cfg.n_grid) >= 1, "entries must be >= 1")
    elif cfg.command != "selfcheck":
        need("n", cfg.n is not None and cfg.n >= 1, "must be >= 1")
    need("trials", cfg.trials >= 2, "must be >= 2")
    need("sigma2", math.isfinite(cfg.sigma2) and cfg.sigma2 >= 0, "must be >= 0")
    need("lam", cfg.lam is None or (math.isfinite(cfg.lam) and cfg.lam > 0), "lambda must be > 0")
    need("schedule", cfg.schedule in LAMBDA_SCHEDULES, f"must be one of {sorted(LAMBDA_SCHEDULES)}")
    need("d_S", cfg.d_S >= 0, "must be >= 0")
    need("d_J", cfg.d_J is None or cfg.d_J >= 1, "must be >= 1")
    need("d_J_factor", cfg.d_J_factor >= 1, "must be >= 1")
    need("seed", cfg.seed >= 0, "must be >= 0")
    need("workers", cfg.workers >= 1, "must be >= 1")
    need("B_factor", cfg.B_factor >= 1, "must be >= 1")
    need("format", cfg.format in ("csv", "json"), "must be csv or json")
    need("method", cfg.method in ("auto", "dense", "structured"), "must be auto, dense or structured")
    need("rel_tol", cfg.rel_tol is None or cfg.rel_tol >= 0, "must be >= 0")
    need("rel_tol_risk", cfg.rel_tol_risk >= 0, "must be >= 0")
    if isinstance(cfg.w_star, tuple):
        need("w_star", len(cfg.w_star) == cfg.d_S, f"needs d_S={cfg.d_S} entries")
    else:
        need("w_star", cfg.w_star in W_STAR_GENERATORS, f"must be one of {W_STAR_GENERATORS}")
    if cfg.command == "alpha-sweep":
        _ascending("alphas", cfg.alphas or ())
        need("alphas", min(cfg.alphas) >= 1, "entries must be >= 1")
    if cfg.command == "double-descent":
        _ascending("p_grid", cfg.p_grid or ())
        need("p_grid", min(cfg.p_grid) > cfg.n + 1, "entries must exceed n + 1")
    if cfg.command in ("norms", "ridge-equiv"):
        _ascending("d_J_grid", cfg.d_J_grid or ())
        need("d_J_grid", min(cfg.d_J_grid) >= 1, "entries must be >= 1")
    if cfg.command == "ridge-equiv":
        need("d_S", cfg.d_S >= 1, "ridge-equiv needs d_S >= 1")
    return cfg


def parse_config(argv=None) -> RunConfig:
    """Defaults < command defaults < config file < flags. Raises ``ConfigError`` or ``SystemExit``."""
    ns = vars(build_parser().parse_args(argv))
    command = ns.pop("command")
    values = dict(COMMAND_DEFAULTS[command])
    path = ns.pop("config", None)
    if path is not None:
        values.update(_load_file(path))
    values.update(ns)
    return validate(RunConfig(command=command, **values))


# ------------------------------------------------------------------------ execution


def _gap_rows(cfg):
    spec = cfg.spec_for(cfg.n)
    S = sample_dataset(spec, cfg.n, cfg.seed)
    mn = min_norm(S)
    B_ = cfg.B_factor * mn.norm
    d = gap_decomposition_ball(S, spec, B_, method=cfg.method, anchor=mn)
    r = d.result
    return [dict(n=cfg.n, d_S=spec.d_S, d_J=spec.d_J, **{"lambda": spec.lam}, sigma2=spec.sigma2,
                 B_factor=cfg.B_factor, B=B_, mn_norm=mn.norm, gap_value=r.value,
                 anchor_risk=r.anchor_risk, kappa=r.kappa, lambda_star=r.lambda_star,
                 remainder=d.remainder, remainder_bound=d.remainder_bound, seed=cfg.seed)]


def _alpha_rows(cfg):
    rows = alpha_sweep(cfg.spec_for(cfg.n), cfg.n, cfg.alphas, cfg.trials, cfg.seed,
                       rel_tol=cfg.rel_tol, workers=cfg.workers)
    return [dict(alpha=r.alpha, gap_mean=r.estimate.mean, gap_se=r.estimate.std_error,
                 target=r.target, tolerance=r.tolerance, **{"pass": r.passed}, seed=cfg.seed,
                 trials=cfg.trials) for r in rows]


def _flip_rows(cfg):
    spec = cfg.spec_for(cfg.n)
    res = flip_experiment(spec, cfg.n, cfg.trials, cfg.seed, workers=cfg.workers)
    ls_tol = res.L_S_tilde.tolerance(res.L_S_target, cfg.rel_tol)
    ld_tol = res.L_D_tilde.tolerance(spec.sigma2, cfg.rel_tol_risk)
    return [dict(n=cfg.n, d_S=spec.d_S, d_J=spec.d_J, **{"lambda": spec.lam},
                 ls_mean=res.L_S_tilde.mean, ls_se=res.L_S_tilde.std_error, ls_target=res.L_S_target,
                 ls_tolerance=ls_tol, ls_pass=abs(res.L_S_tilde.mean - res.L_S_target) <= ls_tol,
                 ld_mean=res.L_D_tilde.mean, ld_se=res.L_D_tilde.std_error, ld_target=spec.sigma2,
                 ld_tolerance=ld_tol, ld_pass=abs(res.L_D_tilde.mean - spec.sigma2) <= ld_tol,
                 ld_mn_mean=res.L_D_mn.mean, ld_mn_se=res.L_D_mn.std_error,
                 identity_max_rel=res.identity_max_rel, seed=cfg.seed, trials=cfg.trials)]


def _norm_rows(cfg):
    spec = cfg.spec_for(cfg.n, d_J=cfg.d_J_grid[-1])
    res = norm_limit_check(spec, cfg.n, cfg.d_J_grid, cfg.trials, cfg.seed, workers=cfg.workers)
    lim = res.limits
    out = []
    for row in res.rows:
        mr, mn = row.mr_norm2, row.mn_norm2
        size = mn.mean * spec.trace_sigma / cfg.n
        size_tol = cfg.rel_tol * spec.sigma2
        out.append(dict(n=cfg.n, **{"lambda": spec.lam}, d_J=row.d_J,
                        mr_norm2_mean=mr.mean, mr_norm2_se=mr.std_error, mr_norm2_limit=lim.mr_norm2,
                        mr_pass=mr.agrees(lim.mr_norm2),
                        mn_norm2_mean=mn.mean, mn_norm2_se=mn.std_error, mn_norm2_limit=lim.mn_norm2,
                        mn_pass=mn.agrees(lim.mn_norm2), beta_n=lim.beta_n,
                        beta_se=res.beta_estimate.std_error, size_product=size, size_target=spec.sigma2,
                        size_tolerance=size_tol, size_pass=abs(size - spec.sigma2) <= size_tol,
                        seed=cfg.seed, trials=cfg.trials))
    return out


def _dd_rows(cfg):
    rows = double_descent_curve(cfg.n, cfg.p_grid, cfg.sigma2, cfg.trials, cfg.seed, workers=cfg.workers)
    out = []
    for r in rows:
        tol = r.estimate.tolerance(r.formula, cfg.rel_tol)
        out.append(dict(n=cfg.n, p=r.p, formula=r.formula, risk_mean=r.estimate.mean,
                        risk_se=r.estimate.std_error, tolerance=tol,
                        **{"pass": abs(r.estimate.mean - r.formula) <= tol}, seed=cfg.seed, trials=cfg.trials))
    return out


def _sweep_rows(cfg):
    template = cfg.spec_for(cfg.n_grid[0])
    rows = consistency_divergence_sweep(template, cfg.n_grid, cfg.schedule, cfg.trials, cfg.seed,
                                        d_J_factor=cfg.d_J_factor, workers=cfg.workers)
    if cfg.lam is not None or cfg.d_J is not None:
        log.warning("sweep-n uses the lambda schedule and d_J_factor; --lambda/--d-j are ignored")
    out = []
    for r in rows:
        kp = r.kappa_product
        tol = kp.tolerance(cfg.sigma2, cfg.rel_tol)
        out.append(dict(n=r.n, **{"lambda": r.lam}, d_J=r.d_J,
                        excess_mn_mean=r.excess_mn.mean, excess_mn_se=r.excess_mn.std_error,
                        excess_ridge_mean=r.excess_ridge.mean, excess_ridge_se=r.excess_ridge.std_error,
                        dev_product_mean=r.dev_norm_product.mean, dev_product_se=r.dev_norm_product.std_error,
                        kappa_product_mean=kp.mean, kappa_product_se=kp.std_error, kappa_target=cfg.sigma2,
                        kappa_tolerance=tol, kappa_pass=abs(kp.mean - cfg.sigma2) <= tol,
                        seed=cfg.seed, trials=cfg.trials))
    return out


def _ridge_rows(cfg):
    spec = cfg.spec_for(cfg.n, d_J=cfg.d_J_grid[-1])
    rows = ridge_equivalence_curve(spec, cfg.n, cfg.d_J_grid, cfg.trials, cfg.seed, workers=cfg.workers)
    return [dict(n=cfg.n, **{"lambda": spec.lam}, d_J=r.d_J, signal_gap_mean=r.signal_gap.mean,
                 signal_gap_se=r.signal_gap.std_error, rel_signal_gap_mean=r.rel_signal_gap.mean,
                 rel_signal_gap_se=r.rel_signal_gap.std_error, junk_pred_mean=r.junk_prediction.mean,
                 junk_pred_se=r.junk_prediction.std_error, seed=cfg.seed, trials=cfg.trials)
            for r in rows]


def _selfcheck_rows(cfg):
    return [dict(check=c.check, instances=c.instances, max_error=c.max_error, tolerance=c.tolerance,
                 **{"pass": c.passed}, seed=cfg.seed)
            for c in run_selfcheck(cfg.seed, cfg.trials, cfg.workers)]


_RUNNERS = {"gap": _gap_rows, "alpha-sweep": _alpha_rows, "flip": _flip_rows, "norms": _norm_rows,
            "double-descent": _dd_rows, "sweep-n": _sweep_rows, "ridge-equiv": _ridge_rows,
            "selfcheck": _selfcheck_rows}


@dataclass(frozen=True)
class RunOutcome:
    status: int
    records: list
    error: Optional[dict] = None


def run_command(cfg: RunConfig) -> RunOutcome:
    """Execute ``cfg``; numerical failures become status 3 with a diagnostic record."""
    try:
        records = _RUNNERS[cfg.command](cfg)
    except (InterpGapError, np.linalg.LinAlgError, FloatingPointError) as exc:
        diag = {"command": cfg.command, "error": type(exc).__name__, "message": str(exc),
                "diagnostics": getattr(exc, "diagnostics", {})}
        return RunOutcome(EXIT_NUMERICAL, [], diag)
    names = [c for c, _ in COLUMNS[cfg.command]]
    records = [{k: r[k] for k in names} for r in records]
    for r in records:
        log.info("%s %s", cfg.command, json.dumps(_jsonable(r), sort_keys=False))
    failed = cfg.command == "selfcheck" and not all(r["pass"] for r in records)
    return RunOutcome(EXIT_NUMERICAL if failed else EXIT_OK, records)


# --------------------------------------------------------------------------- output


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _jsonable(rec: dict) -> dict:
    out = {}
    for k, v in rec.items():
        if isinstance(v, (bool, np.bool_)):
            out[k] = bool(v)
        elif isinstance(v, (int, np.integer)):
            out[k] = int(v)
        elif isinstance(v, (float, np.floating)):
            out[k] = float(v) if math.isfinite(v) else None
        else:
            out[k] = v
    return out


def render_csv(records, command) -> str:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    names = [c for c, _ in COLUMNS[command]]
    w.writerow(names)
    for r in records:
        w.writerow([_cell(r[k]) for k in names])
    return buf.getvalue()


def render_json(records) -> str:
    return json.dumps([_jsonable(r) for r in records], indent=2) + "\n"


def record_schema(command: str) -> dict:
    """JSON Schema for the ``--format json`` output of ``command``."""
    types = {F: ["number", "null"], I: "integer", B: "boolean", S: "string"}
    cols = COLUMNS[command]
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": f"interpgap {command} records",
        "type": "array",
        "items": {"type": "object", "properties": {c: {"type": types[t]} for c, t in cols},
                  "required": [c for c, _ in cols], "additionalProperties": False},
    }


def build_id() -> str:
    return f"interpgap-{__version__}+numpy-{np.__version__}+scipy-{scipy.__version__}"


def output_path(cfg: RunConfig) -> str:
    if cfg.out:
        return cfg.out
    return os.path.join(os.environ.get(ENV_OUTPUT_DIR, "."), f"{cfg.command}.{cfg.format}")


def atomic_write(path: str, text: str) -> None:
    """Write via a temp file in the target directory and rename over ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".interpgap-", suffix=".tmp")
    try:
        os.fchmod(fd, 0o644)
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def write_report(records, cfg: RunConfig) -> Optional[str]:
    """Persist records plus a ``<out>.manifest.json`` sidecar; returns the output path
    (``None`` when writing to stdout, which skips the manifest)."""
    text = render_csv(records, cfg.command) if cfg.format == "csv" else render_json(records)
    path = output_path(cfg)
    if path == "-":
        sys.stdout.write(text)
        return None
    manifest = {"tool": "interpgap", "version": __version__, "build": build_id(),
                "command": cfg.command, "seed": cfg.seed, "format": cfg.format,
                "output": os.path.basename(path), "records": len(records),
                "columns": [c for c, _ in COLUMNS[cfg.command]], "config": cfg.as_dict()}
    atomic_write(path, text)
    atomic_write(path + ".manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = parse_config(argv)
    except SystemExit as exc:  # argparse usage errors and --help
        return int(exc.code or 0)
    except ConfigError as exc:
        print(f"interpgap: error: invalid value for {exc}", file=sys.stderr)
        return EXIT_USAGE
    t0 = time.perf_counter()
    outcome = run_command(cfg)
    log.info("%s finished in %.2fs", cfg.command, time.perf_counter() - t0)
    if outcome.error is not None:
        print(json.dumps(outcome.error), file=sys.stderr)
        return outcome.status
    try:
        path = write_report(outcome.records, cfg)
    except OSError as exc:
        print(f"interpgap: error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    if path:
        log.info("wrote %s", path)
    return outcome.status


__all__ = ["RunConfig", "ConfigError", "COLUMNS", "parse_config", "run_command", "write_report",
           "record_schema", "render_csv", "render_json", "main"]
