"""Command-line experiment runner.

``titeica-lab run --config exp.json [--out DIR] [--verbose]`` runs one
experiment (a JSON object with an ``"experiment"`` tag) or a batch
(``{"experiments": [...]}``) and writes ``<tag>-<hash>.json`` and
``<tag>-<hash>.csv`` per experiment. ``titeica-lab summary DIR`` collects
the reports in ``DIR`` into ``summary.csv``.

Exit status: 0 when every embedded assertion passes, 1 on numerical
failure, 2 on a usage or configuration error.
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
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import frames, immersion, properness, repdiag
from .domain import CubicDiff, RadialDisc, domain_from_dict
from .geometry import project
from .titeica import (LOG2, SolverError, TiteicaProblem, constant_Q_for_M, curvature_g,
                      residual_H, solve)

log = logging.getLogger("titeica_lab")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
THREADS_ENV = "TITEICA_LAB_THREADS"

TAGS = ("solve", "frame", "u0-baseline", "immersion-scan", "ode-growth", "goldman",
        "gradient-check")


class ConfigError(ValueError):
    pass


# -- helpers -------------------------------------------------------------------------

def config_hash(cfg: dict) -> str:
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def _domain(cfg: dict, default=None):
    d = cfg.get("domain", default)
    if d is None:
        raise ConfigError("missing 'domain'")
    try:
        return domain_from_dict(d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad domain: {exc}") from exc


def _cubic(cfg: dict, domain) -> CubicDiff:
    q = cfg.get("Q", {"kind": "constant", "value": 0.0})
    try:
        if "M" in q:
            return constant_Q_for_M(domain, float(q["M"]))
        return CubicDiff.from_dict(q)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"bad Q: {exc}") from exc


def _problem(cfg: dict, domain, Q) -> TiteicaProblem:
    try:
        return TiteicaProblem(domain, Q, method=cfg.get("method", "newton"),
                              tol=float(cfg.get("tol", 1e-10)),
                              max_iter=int(cfg.get("max_iter", 500)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _require(cfg: dict, *keys):
    missing = [k for k in keys if k not in cfg]
    if missing:
        raise ConfigError(f"{cfg.get('experiment')}: missing {', '.join(missing)}")


# -- experiments ---------------------------------------------------------------------
# Each returns (metrics, assertions, csv_header, csv_rows).

def exp_solve(cfg):
    dom = _domain(cfg, {"kind": "radial_disc"})
    Q = _cubic(cfg, dom)
    problem = _problem(cfg, dom, Q)
    rep = solve(problem)
    kappa = curvature_g(rep.u, problem)
    res = residual_H(rep.u, problem)
    metrics = rep.to_dict()
    metrics["kappa_min"] = kappa.min()
    metrics["kappa_max"] = kappa.max()
    metrics["residual_max"] = float(np.max(np.abs(res.values[res.valid])))
    checks = {"converged": rep.converged, "bracket": rep.lower_ok and rep.upper_ok,
              "small": rep.small}
    if Q.is_zero:
        dev = float(np.max(np.abs(rep.u.values + LOG2)))
        metrics["max_dev_from_minus_log2"] = dev
        checks["zero_cubic_constant"] = dev <= 1e-8
    if isinstance(dom, RadialDisc):
        header = ["r", "u", "kappa"]
        rows = zip(dom.r, rep.u.values, kappa.values)
    else:
        X, Y = dom.mesh()
        header = ["x", "y", "u", "kappa"]
        rows = zip(X.ravel(), Y.ravel(), rep.u.values.ravel(), kappa.values.ravel())
    return metrics, checks, header, rows


def exp_frame(cfg):
    dom = _domain(cfg, {"kind": "radial_disc", "n_r": 2048})
    Q = _cubic(cfg, dom) if "Q" in cfg else constant_Q_for_M(dom, 1.0 / 54.0)
    rep = solve(_problem(cfg, dom, Q))
    conn = frames.build_AB_minimal(frames.factor_from_field(rep.u), Q)
    zc = complex(*cfg.get("center", [0.3, 0.2]))
    h = float(cfg.get("spacing", 1e-3))
    n = int(cfg.get("half_width", 12))
    path = frames.PathSpec([0j, zc.real, zc], max_step=float(cfg.get("step", 1e-3)))
    if not isinstance(dom, RadialDisc):
        base = complex(0.5 * (dom.x0 + dom.x1), 0.5 * (dom.y0 + dom.y1))
        path = frames.PathSpec([base, complex(zc.real, base.imag), zc],
                               max_step=float(cfg.get("step", 1e-3)))
    fr = frames.integrate_frame(conn, path)
    patch, Z = frames.frame_patch(conn, fr.F, zc, h, n)
    s_c = float(conn.factor(zc))
    diag = frames.extract_and_verify(patch, h, s_c, complex(Q(zc)))
    drift = max(fr.drift)
    tol = float(cfg.get("diagnostic_tol", 1e-4))
    metrics = {"solve": rep.to_dict(), "diagnostics": diag.to_dict(), "su21_drift": drift,
               "rk4_steps": fr.steps, "center": [zc.real, zc.imag], "spacing": h}
    checks = {"su21_drift": drift <= 1e-6, "diagnostics": diag.worst() <= tol}
    w1, w2 = project(patch[..., :, 2])
    header = ["x", "y", "re_w1", "im_w1", "re_w2", "im_w2"]
    rows = zip(Z.real.ravel(), Z.imag.ravel(), w1.real.ravel(), w1.imag.ravel(),
               w2.real.ravel(), w2.imag.ravel())
    return metrics, checks, header, rows


def exp_u0_baseline(cfg):
    x0, x1 = cfg.get("x_range", [0.0, 2.0])
    y0, y1 = cfg.get("y_range", [1.0, 3.0])
    nx, ny = cfg.get("lattice", [10, 10])
    step = float(cfg.get("step", 1e-3))
    conn = frames.build_AB_minimal(frames.HalfPlaneU0Factor(), CubicDiff.constant(0))
    F0, _ = frames.closed_form_U0(0.0, 1.0)
    rows, worst_closed, worst_path, worst_hyp = [], 0.0, 0.0, 0.0
    for x in np.linspace(x0, x1, nx):
        for y in np.linspace(y0, y1, ny):
            Fc, fc = frames.closed_form_U0(x, y)
            Fa = frames.integrate_frame(conn, frames.PathSpec([1j, complex(x, 1), complex(x, y)],
                                                              step, F0)).F
            Fb = frames.integrate_frame(conn, frames.PathSpec([1j, complex(0, y), complex(x, y)],
                                                              step, F0)).F
            d_closed = float(np.max(np.abs(Fa - Fc)))
            d_path = float(np.max(np.abs(Fa - Fb)))
            f = Fa[:, 2]
            hyp = float(abs(f[0].real**2 + f[1].real**2 - f[2].real**2 + 1.0))
            worst_closed = max(worst_closed, d_closed)
            worst_path = max(worst_path, d_path)
            worst_hyp = max(worst_hyp, hyp, float(np.max(np.abs(fc.imag))))
            rows.append((x, y, d_closed, d_path, hyp))
    metrics = {"max_dev_closed_form": worst_closed, "max_path_dependence": worst_path,
               "max_hyperboloid_dev": worst_hyp, "lattice": [nx, ny], "step": step}
    checks = {"closed_form": worst_closed <= 1e-6, "path_independence": worst_path <= 1e-6,
              "hyperboloid": worst_hyp <= 1e-10}
    return metrics, checks, ["x", "y", "dev_closed_form", "dev_path", "hyperboloid_dev"], rows


def exp_immersion_scan(cfg):
    _require(cfg, "seed")
    rng = np.random.default_rng(int(cfg["seed"]))
    n = int(cfg.get("samples", 4000))
    q_max = float(cfg.get("Q_max", 2.0))
    rho = np.sqrt(rng.uniform(0.0, 0.5, n))
    th = rng.uniform(0.0, 2 * np.pi, n)
    Qs = rng.uniform(0.0, q_max, n)
    a, b = rho * np.cos(th), rho * np.sin(th)
    rows, worst = [], 0.0
    for ai, bi, qi in zip(a, b, Qs):
        jf = float(immersion.jacobian_det_formula(ai, bi, qi))
        jd = immersion.jacobian_det_fd(ai, bi, qi)
        worst = max(worst, abs(jf - jd) / (1.0 + abs(jf)))
        rows.append((ai, bi, qi, jf, jd))
    scan = immersion.min_critical_root(int(cfg.get("resolution", 1000)))
    near = [min(math.hypot(p[2] - c[0], p[3] - c[1]) for p in scan.argmins)
            for c in immersion.CRITICAL_POINTS]
    metrics = {"samples": n, "max_rel_dev": worst, "min_critical_root": scan.minimum,
               "argmins": scan.argmins, "distance_to_critical_points": near}
    checks = {"formula_vs_fd": worst <= 1e-6,
              "min_root": abs(scan.minimum - math.sqrt(2)) <= 1e-3,
              "argmins": max(near) <= 1e-2}
    return metrics, checks, ["a", "b", "Q", "J_formula", "J_fd"], rows


def exp_ode_growth(cfg):
    _require(cfg, "seed", "delta")
    keys = ("delta", "T", "steps", "trials", "seed", "generator", "X0", "G")
    try:
        gcfg = properness.GrowthConfig.from_dict({k: cfg[k] for k in keys if k in cfg})
        consts = properness.k_and_C(gcfg.delta)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    res = properness.simulate_growth(gcfg, record=False)
    metrics = {"constants": consts.to_dict(), "min_margin": float(res.margins.min()),
               "trials": gcfg.trials, "generator": gcfg.generator,
               "quadratic_residual": consts.quadratic_residual(),
               "balancing_residual": consts.balancing_residual(),
               "inequality_slack": consts.inequality_slack()}
    checks = {"growth_bound": res.verdict, "growth_inequality": consts.inequality_slack() >= 0}
    rows = [tuple(r.values()) for r in res.rows()]
    return metrics, checks, ["seed", "trial", "delta", "k", "C", "min_margin"], rows


def exp_goldman(cfg):
    dom = _domain(cfg, {"kind": "radial_disc", "n_r": 512})
    Q = _cubic(cfg, dom) if "Q" in cfg else CubicDiff.constant(1.0)
    s = repdiag.u0_conformal_factor(dom)
    v = repdiag.delta_U_alpha(Q, s)
    vi = repdiag.delta_U_alpha(Q.scaled(1j), s)
    g = repdiag.goldman_density(v, vi)
    expected = 2j * np.abs(Q(dom.points)) ** 2 / s.values**4
    vf = repdiag.delta_alpha_fd(dom, Q, float(cfg.get("t", 1e-6)))
    fd_dev = float(max(np.max(np.abs(vf.A - v.A)), np.max(np.abs(vf.B - v.B))))
    dens_dev = float(np.max(np.abs(g - expected)))
    metrics = {"fd_variation_dev": fd_dev, "density_dev": dens_dev,
               "u21_residual": v.u21_residual(),
               "min_im_density": float(g.imag.min())}
    checks = {"fd_variation": fd_dev <= 1e-4, "density": dens_dev <= 1e-10,
              "nonnegative": bool(np.all(g.imag >= 0))}
    pts = dom.points
    rows = zip(pts.real.ravel(), pts.imag.ravel(), g.real.ravel(), g.imag.ravel(),
               expected.imag.ravel())
    return metrics, checks, ["x", "y", "re_density", "im_density", "expected_im"], rows


def exp_gradient_check(cfg):
    dom = _domain(cfg, {"kind": "radial_disc", "n_r": 1024})
    fractions = cfg.get("fractions", [1.0, 1e-2, 1e-3, 1e-4])
    M = float(cfg.get("M", 1.0 / 54.0))
    rows, lhs = [], []
    ok = True
    for fr in fractions:
        Q = constant_Q_for_M(dom, M).scaled(fr)
        rep = solve(_problem(cfg, dom, Q))
        gb = properness.gradient_bound_check(rep.u, Q)
        ok &= gb.verdict
        lhs.append(gb.lhs)
        rows.append((fr, gb.lhs, gb.rhs, gb.verdict))
    order = np.argsort(fractions)[::-1]
    ordered = [lhs[i] for i in order]
    monotone = all(x >= y for x, y in zip(ordered, ordered[1:]))
    metrics = {"M": M, "rows": [list(r) for r in rows], "max_lhs": max(lhs),
               "min_margin": min(r[2] - r[1] for r in rows)}
    checks = {"bound": ok, "lhs_decreases": monotone}
    return metrics, checks, ["fraction", "lhs", "rhs", "verdict"], rows


EXPERIMENTS = {
    "solve": exp_solve,
    "frame": exp_frame,
    "u0-baseline": exp_u0_baseline,
    "immersion-scan": exp_immersion_scan,
    "ode-growth": exp_ode_growth,
    "goldman": exp_goldman,
    "gradient-check": exp_gradient_check,
}


# -- running -------------------------------------------------------------------------

def validate(cfg) -> str:
    if not isinstance(cfg, dict):
        raise ConfigError("experiment config must be a JSON object")
    tag = cfg.get("experiment")
    if tag not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment tag {tag!r}; expected one of {', '.join(TAGS)}")
    if tag == "ode-growth":
        _require(cfg, "seed", "delta")
        d = cfg["delta"]
        if not isinstance(d, (int, float)) or not 0 < d <= properness.DELTA_MAX:
            raise ConfigError(f"delta = {d!r} outside (0, 1/(4 sqrt2 + 3)]")
    return tag


def run_experiment(cfg: dict, out: Path) -> dict:
    """Run one validated experiment and write its JSON report and CSV."""
    tag = validate(cfg)
    h = config_hash(cfg)
    stem = f"{tag}-{h}"
    report = {"experiment": tag, "config_hash": h, "config": cfg}
    try:
        metrics, checks, header, rows = EXPERIMENTS[tag](cfg)
    except ConfigError:
        raise
    except (SolverError, frames.FrameDegeneracy, ArithmeticError, np.linalg.LinAlgError) as exc:
        report.update(metrics={}, assertions={}, passed=False, error=str(exc))
        (out / f"{stem}.json").write_text(json.dumps(_jsonable(report), indent=1, sort_keys=True))
        return report
    write_csv(out / f"{stem}.csv", header, rows)
    checks = {k: bool(v) for k, v in checks.items()}
    report.update(metrics=metrics, assertions=checks, passed=all(checks.values()),
                  data=f"{stem}.csv")
    (out / f"{stem}.json").write_text(json.dumps(_jsonable(report), indent=1, sort_keys=True))
    return report


def _threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def run(config: dict, out: Path) -> int:
    items = config["experiments"] if isinstance(config, dict) and "experiments" in config else [config]
    if not isinstance(items, list) or not items:
        raise ConfigError("'experiments' must be a non-empty list")
    for cfg in items:
        validate(cfg)
    out.mkdir(parents=True, exist_ok=True)
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        reports = list(pool.map(lambda c: run_experiment(c, out), items))
    for r in reports:
        status = "PASS" if r["passed"] else "FAIL"
        log.info("%s %s %s", status, r["experiment"], r["config_hash"])
        if not r["passed"]:
            failed = [k for k, v in r.get("assertions", {}).items() if not v]
            log.warning("%s failed: %s", r["experiment"], r.get("error") or ", ".join(failed))
    return EXIT_OK if all(r["passed"] for r in reports) else EXIT_FAIL


def _flatten(prefix, obj, out):
    if isinstance(obj, dict):
        for k in sorted(obj):
            _flatten(f"{prefix}.{k}" if prefix else k, obj[k], out)
    elif isinstance(obj, (int, float)) and not isinstance(obj, bool):
        out[prefix] = obj
    elif isinstance(obj, bool):
        out[prefix] = obj


def emit_summary(reports) -> str:
    """CSV text with one row per report, sorted by tag then config hash."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to summarise")
    reports.sort(key=lambda r: (r["experiment"], r["config_hash"]))
    rows = []
    for r in reports:
        flat = {}
        _flatten("", r.get("metrics", {}), flat)
        key = ";".join(f"{k}={_fmt(v)}" for k, v in flat.items())
        rows.append((r["experiment"], r["config_hash"], r["passed"], key))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["experiment", "config_hash", "passed", "metrics"])
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def summary(directory: Path) -> int:
    reports = []
    for p in sorted(directory.glob("*.json")):
        try:
            d = json.loads(p.read_text())
        except json.JSONDecodeError:
            continue
        if isinstance(d, dict) and "experiment" in d and "config_hash" in d:
            reports.append(d)
    text = emit_summary(reports)
    (directory / "summary.csv").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="titeica-lab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment(s) in a JSON config")
    r.add_argument("--config", required=True, type=Path)
    r.add_argument("--out", type=Path, default=None)
    r.add_argument("--verbose", action="store_true")
    s = sub.add_parser("summary", help="summarise the reports in a directory")
    s.add_argument("directory", type=Path)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "summary":
            if not args.directory.is_dir():
                raise ConfigError(f"{args.directory} is not a directory")
            return summary(args.directory)
        try:
            config = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        out = args.out or Path(config.get("output", "titeica-out") if isinstance(config, dict)
                               else "titeica-out")
        return run(config, out)
    except (ConfigError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
