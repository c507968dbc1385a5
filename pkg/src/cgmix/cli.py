"""Command-line surface: fit, impute, select-g, cv, jackknife, simulate.

Every command accepts ``--config FILE`` (a JSON document of settings,
unknown keys rejected) and ``--print-config`` (emit the fully resolved
configuration as JSON and exit).  Explicit flags override the config file,
which overrides the built-in defaults.  Exit codes: 0 success, 1 usage error,
2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import io as cio
from .em import FitConfig, fit_em, fit_em_warm, select_g
from .imputation import estimate_mean, impute, jackknife
from .model import DataError, Dataset, DesignSpec, FitError
from .penalized import PenaltyConfig, cv_select_lambda, fit_penalized_em
from .simulate import (SimModelSpec, cgmm_conditional_logpdf, fit_gmm_select,
                       generate, gmm_conditional_logpdf, kl_diagnostic,
                       monte_carlo)

DEFAULTS = {
    "fit": {"data": None, "out": "cgmix_fit", "g": 1, "tol": 1e-8,
            "max_iter": 500, "n_starts": 5, "seed": 0,
            "gate_cols": None, "mean_cols": None,
            "gate_intercept": True, "mean_intercept": True},
    "impute": {"data": None, "params": None, "out": "cgmix_impute"},
    "select-g": {"data": None, "out": "cgmix_selectg", "g_max": 6,
                 "tol": 1e-8, "max_iter": 500, "n_starts": 5, "seed": 0,
                 "gate_cols": None, "mean_cols": None,
                 "gate_intercept": True, "mean_intercept": True},
    "cv": {"data": None, "out": "cgmix_cv", "g": 2, "folds": 10,
           "lambda_grid": [round(v, 10) for v in np.geomspace(100.0, 0.1, 50)],
           "tol": 1e-7, "max_iter": 200, "n_starts": 3, "seed": 0},
    "jackknife": {"data": None, "out": "cgmix_jackknife", "g": None,
                  "g_max": 6, "groups": 100, "tol": 1e-8, "max_iter": 500,
                  "n_starts": 5, "seed": 0,
                  "gate_cols": None, "mean_cols": None,
                  "gate_intercept": True, "mean_intercept": True},
    "simulate": {"model": "M1", "reps": 10, "n": 1000, "N": 20000,
                 "seed": 0, "g_max": 6, "methods": None, "coverage": False,
                 "kl": False, "groups": 100, "threads": 1,
                 "out": "cgmix_simulate", "n_starts": 3, "tol": 1e-7,
                 "max_iter": 500, "folds": 10,
                 "lambda_grid": [round(v, 10) for v in np.geomspace(100.0, 0.1, 50)]},
}


def _build_parser():
    ap = argparse.ArgumentParser(prog="cgmix", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for cmd in DEFAULTS:
        p = sub.add_parser(cmd)
        p.add_argument("--config")
        p.add_argument("--print-config", action="store_true")
        for key, val in DEFAULTS[cmd].items():
            flag = "--" + key.replace("_", "-")
            if key in ("coverage", "kl"):
                p.add_argument(flag, action="store_const", const=True,
                               default=None)
            elif key in ("gate_intercept", "mean_intercept"):
                p.add_argument("--no-" + key.replace("_", "-"),
                               dest=key, action="store_const", const=False,
                               default=None)
            elif key == "lambda_grid":
                p.add_argument("--lambda-grid", default=None,
                               help="comma-separated descending values")
            elif key in ("gate_cols", "mean_cols", "data", "out", "params",
                         "model", "methods"):
                p.add_argument(flag, default=None)
            elif key in ("tol",):
                p.add_argument(flag, type=float, default=None)
            else:
                p.add_argument(flag, type=int if not isinstance(val, float)
                               else float, default=None)
        if cmd == "cv":
            p.add_argument("--lambda", dest="lambda_", type=float, default=None,
                           help="skip CV and fit at this single value")
    return ap


def _resolve(cmd: str, args) -> dict:
    cfg = dict(DEFAULTS[cmd])
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            doc = json.load(fh)
        unknown = set(doc) - set(cfg)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(doc)
    for key in DEFAULTS[cmd]:
        val = getattr(args, key, None)
        if val is not None:
            if key == "lambda_grid" and isinstance(val, str):
                val = [float(v) for v in val.split(",")]
            if key == "methods" and isinstance(val, str):
                pass
            cfg[key] = val
    if getattr(args, "lambda_", None) is not None:
        cfg["lambda_grid"] = [float(args.lambda_)]
    return cfg


def _parse_cols(v):
    if v is None or v == "":
        return None
    if isinstance(v, (list, tuple)):
        return tuple(int(c) for c in v)
    return tuple(int(c) for c in str(v).split(","))


def _design(cfg) -> DesignSpec:
    return DesignSpec(gate_cols=_parse_cols(cfg.get("gate_cols")),
                      mean_cols=_parse_cols(cfg.get("mean_cols")),
                      gate_intercept=bool(cfg.get("gate_intercept", True)),
                      mean_intercept=bool(cfg.get("mean_intercept", True)))


def _fit_config(cfg, G=1) -> FitConfig:
    return FitConfig(G=G, max_iter=int(cfg["max_iter"]), tol=float(cfg["tol"]),
                     n_starts=int(cfg["n_starts"]), seed=int(cfg["seed"]))


def _need(cfg, key):
    if not cfg.get(key):
        raise ValueError(f"missing required setting --{key.replace('_', '-')}")
    return cfg[key]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _cmd_fit(cfg):
    data = cio.load_csv(_need(cfg, "data"))
    design = _design(cfg)
    report = fit_em(data, design, _fit_config(cfg, G=int(cfg["g"])))
    out = cfg["out"]
    cio.save_params(out + ".params.json", report.params, design, extra={
        "loglik_trace": [float(v) for v in report.loglik_trace],
        "bic": report.bic, "converged": report.converged,
        "n_iter": report.n_iter})
    with open(out + ".summary.txt", "w", encoding="utf-8") as fh:
        fh.write(f"G={report.params.G} loglik={report.loglik_trace[-1]:.4f} "
                 f"bic={report.bic:.4f} iters={report.n_iter} "
                 f"converged={report.converged}\n")
        for w in report.warnings:
            fh.write(f"warning: {w}\n")
    print(f"wrote {out}.params.json")
    return 0


def _cmd_impute(cfg):
    data = cio.load_csv(_need(cfg, "data"))
    params, design, _doc = cio.load_params(_need(cfg, "params"))
    result = impute(data, params, design)
    out = cfg["out"]
    cio.save_csv(out + ".completed.csv", data, y_values=result.y_imputed)
    cio.save_fractional_csv(out + ".fractional.csv", result, data.p)
    print(f"wrote {out}.completed.csv")
    return 0


def _cmd_select_g(cfg):
    data = cio.load_csv(_need(cfg, "data"))
    design = _design(cfg)
    best, reports = select_g(data, design, _fit_config(cfg),
                             range(1, int(cfg["g_max"]) + 1))
    out = cfg["out"]
    with open(out + ".bic.csv", "w", encoding="utf-8") as fh:
        fh.write("G,bic,loglik,converged,selected\n")
        for G in sorted(reports):
            r = reports[G]
            fh.write(f"{G},{float(r.bic)!r},{float(r.loglik_trace[-1])!r},"
                     f"{int(r.converged)},{int(G == best)}\n")
    cio.save_params(out + ".params.json", reports[best].params, design,
                    extra={"bic": reports[best].bic})
    print(f"selected G={best}")
    return 0


def _cmd_cv(cfg):
    data = cio.load_csv(_need(cfg, "data"))
    if data.p != 1:
        raise DataError("cv requires a scalar response (single y column)")
    pen = PenaltyConfig(lambda_grid=np.asarray(cfg["lambda_grid"], dtype=float),
                        cv_folds=int(cfg["folds"]))
    fcfg = _fit_config(cfg, G=int(cfg["g"]))
    if pen.lambda_grid.size == 1:
        lam = float(pen.lambda_grid[0])
        curve = np.array([[lam, float("nan")]])
    else:
        lam, curve = cv_select_lambda(data, fcfg, pen)
    params, report = fit_penalized_em(data, fcfg, pen, lam)
    out = cfg["out"]
    with open(out + ".cv.csv", "w", encoding="utf-8") as fh:
        fh.write("lambda,cv_error,selected\n")
        for row in curve:
            fh.write(f"{float(row[0])!r},{float(row[1])!r},"
                     f"{int(row[0] == lam)}\n")
    from .penalized import _as_cgmm
    cio.save_params(out + ".params.json", _as_cgmm(params), DesignSpec(),
                    extra={"lambda": lam})
    print(f"selected lambda={lam:.6g}")
    return 0


def _cmd_jackknife(cfg):
    data = cio.load_csv(_need(cfg, "data"))
    if data.p != 1:
        raise DataError("jackknife summaries require a scalar response")
    design = _design(cfg)
    if cfg.get("g"):
        report = fit_em(data, design, _fit_config(cfg, G=int(cfg["g"])))
    else:
        _best, reports = select_g(data, design, _fit_config(cfg),
                                  range(1, int(cfg["g_max"]) + 1))
        report = reports[_best]
    params = report.params

    def pipeline(sub):
        wrep = fit_em_warm(sub, design, params, max_iter=50,
                           tol=float(cfg["tol"]))
        res = impute(sub, wrep.params, design)
        yc = res.y_imputed[:, 0]
        return np.array([np.quantile(yc, 0.25), np.quantile(yc, 0.5),
                         float(yc.mean()), np.quantile(yc, 0.75)])

    groups = min(int(cfg["groups"]), data.n)
    jk = jackknife(data, pipeline, groups, seed=int(cfg["seed"]))
    out = cfg["out"]
    names = ["q1", "median", "mean", "q3"]
    with open(out + ".jackknife.csv", "w", encoding="utf-8") as fh:
        fh.write("statistic,estimate,variance,ci_lower,ci_upper\n")
        for i, nm in enumerate(names):
            fh.write(f"{nm},{float(jk.point[i])!r},{float(jk.variance[i])!r},"
                     f"{float(jk.ci_lower[i])!r},{float(jk.ci_upper[i])!r}\n")
    print(f"wrote {out}.jackknife.csv")
    return 0


def _fmt(v, nd=4):
    if v is None or (isinstance(v, float) and not np.isfinite(v)):
        return "n/a"
    return f"{v:.{nd}f}"


def _cmd_simulate(cfg):
    model = cfg["model"]
    spec = SimModelSpec(model, n=int(cfg["n"]), N=int(cfg["N"]),
                        seed=int(cfg["seed"]))
    if cfg["methods"]:
        methods = [m.strip() for m in str(cfg["methods"]).split(",")]
    else:
        methods = (["full", "gmm", "cgmm-lasso"] if model in ("M5", "M6")
                   else ["full", "gmm", "cgmm"])
    fcfg = FitConfig(n_starts=int(cfg["n_starts"]), tol=float(cfg["tol"]),
                     max_iter=int(cfg["max_iter"]), seed=int(cfg["seed"]))
    pen = PenaltyConfig(lambda_grid=np.asarray(cfg["lambda_grid"], dtype=float),
                        cv_folds=int(cfg["folds"]))
    g_range = range(1, int(cfg["g_max"]) + 1)
    table = monte_carlo(spec, methods, int(cfg["reps"]), int(cfg["seed"]),
                        g_range=g_range, cfg=fcfg, pen=pen,
                        coverage=bool(cfg["coverage"]),
                        n_groups=int(cfg["groups"]),
                        threads=int(cfg["threads"]))
    lines = [f"model {model}  reps={cfg['reps']}  n={spec.n}  N={spec.N}  "
             f"seed={cfg['seed']}",
             f"{'method':<12}{'rmspe':>10}{'mae':>10}{'bias_x100':>12}"
             f"{'var_x100':>10}{'mse_x100':>10}"]
    for m in ["full", "pmm"] + [x for x in methods if x != "full"]:
        if m == "pmm":
            lines.append(f"{'pmm':<12}{'n/a':>10}{'n/a':>10}{'n/a':>12}"
                         f"{'n/a':>10}{'n/a':>10}")
            continue
        if m not in table:
            continue
        r = table[m]
        lines.append(f"{m:<12}{_fmt(r.rmspe):>10}{_fmt(r.mae):>10}"
                     f"{_fmt(r.bias * 100, 3):>12}{_fmt(r.var * 100, 3):>10}"
                     f"{_fmt(r.mse * 100, 3):>10}")
    for m, r in table.items():
        if r.coverage_hits is not None and r.coverage_reps:
            pct = 100.0 * r.coverage_hits / r.coverage_reps
            lines.append(f"coverage ({m}, jackknife 95% CI): {pct:.1f}% "
                         f"({r.coverage_hits}/{r.coverage_reps})")
    if cfg["kl"]:
        lines.extend(_kl_lines(spec, fcfg, g_range))
    text = "\n".join(lines) + "\n"
    out = cfg["out"]
    with open(out + ".report.txt", "w", encoding="utf-8") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return 0


def _kl_lines(spec, fcfg, g_range):
    child = int(np.random.SeedSequence(spec.seed).generate_state(1)[0]) ^ 0x5EED
    rspec = SimModelSpec(spec.model_id, spec.n, spec.N, child)
    _pop, data, _yf = generate(rspec)
    bestg, reports = select_g(data, DesignSpec(),
                              FitConfig(n_starts=fcfg.n_starts, tol=fcfg.tol,
                                        max_iter=fcfg.max_iter, seed=child),
                              g_range)
    bestj, fits = fit_gmm_select(data, g_range,
                                 FitConfig(n_starts=fcfg.n_starts, tol=fcfg.tol,
                                           max_iter=fcfg.max_iter, seed=child))
    rep = kl_diagnostic(rspec,
                        cgmm_conditional_logpdf(reports[bestg].params),
                        gmm_conditional_logpdf(fits[bestj]),
                        m_draws=20000, seed=child)
    return [f"kl (cgmm, G={bestg}): {rep.kl_a:.4f} (se {rep.se_a:.4f}, "
            f"clipped {rep.clipped_a})",
            f"kl (gmm, G={bestj}): {rep.kl_b:.4f} (se {rep.se_b:.4f}, "
            f"clipped {rep.clipped_b})"]


_RUNNERS = {"fit": _cmd_fit, "impute": _cmd_impute, "select-g": _cmd_select_g,
            "cv": _cmd_cv, "jackknife": _cmd_jackknife,
            "simulate": _cmd_simulate}


def main(argv=None) -> int:
    ap = _build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 0 if not exc.code else 1
    try:
        cfg = _resolve(args.command, args)
        if args.print_config:
            print(json.dumps(cfg, indent=1, sort_keys=True))
            return 0
        return _RUNNERS[args.command](cfg)
    except DataError as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return 2
    except (FitError, np.linalg.LinAlgError) as exc:
        print(f"error: numeric: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
