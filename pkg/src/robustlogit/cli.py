"""Command-line interface: ``robustlogit <command> ...``.

Exit codes: 0 success, 2 invalid input, 3 non-convergence under ``--strict``.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .core import StructuralError, accuracy, log_likelihood
from .diagnostics import (
    DegeneratePointError,
    fisher_trace_mle,
    fisher_trace_robust_feature,
    compare_traces_robust_label,
    prediction_error_bound,
)
from .experiments import (
    METRICS,
    PerturbationScheme,
    default_alpha_grid,
    evaluate_revenue,
    generate_synthetic_test,
    grid_search_tune,
    pricing_optimization,
    run_replications,
)
from .fileio import (
    ConfigError,
    DataValidationError,
    RunConfig,
    beta_to_json,
    default_seed,
    dumps,
    fit_result_to_json,
    load_config,
    read_beta,
    read_dataset,
    write_dataset,
    write_json,
)
from .robust_feature import (
    exact_robust_objective,
    rf_objective,
    rf_upper_bound_objective,
)
from .robust_label import LabelBudget

log = logging.getLogger("robustlogit")

EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED = 0, 2, 3


class _NotConverged(Exception):
    pass


def _emit(args, payload: dict):
    text = dumps(payload)
    out = getattr(args, "out", None)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _info(args, text: str):
    # human-readable output goes to stderr when stdout carries JSON
    stream = sys.stdout if getattr(args, "out", None) else sys.stderr
    stream.write(text.rstrip("\n") + "\n")


def coefficient_table(spec, beta) -> str:
    width = max(len(f) for f in spec.features)
    head = " " * width + "".join(f"{a:>14s}" for a in spec.alternatives)
    lines = [head]
    for k, f in enumerate(spec.features):
        cells = "".join(
            f"{beta[i, k]:>14.6f}" if spec.mask[i, k] else f"{'.':>14s}" for i in range(spec.n_alternatives)
        )
        lines.append(f"{f:<{width}s}{cells}")
    return "\n".join(lines)


def _seed(args, section: dict) -> int:
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    if "seed" in section:
        return int(section["seed"])
    return default_seed()


def _scheme(cfg: RunConfig, seed: int) -> PerturbationScheme:
    e = cfg.experiment
    try:
        return PerturbationScheme(
            kind=str(e.get("scheme", "independent")),
            feature_magnitude=float(e.get("feature_magnitude", 0.3)),
            label_flip_prob=float(e.get("label_flip_prob", 0.1)),
            time_feature_indices=tuple(cfg.feature_index(f) for f in e.get("time_features", ())),
            green_mode_indices=tuple(cfg.alternative_index(a) for a in e.get("green_modes", ())),
            exempt_features=tuple(cfg.feature_index(f) for f in e.get("exempt_features", ())),
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(f"experiment: {exc}") from None


def _check_radii(cfg: RunConfig, est, n_obs: int):
    if est.kind == "robust_feature" and np.ndim(est.rho) and len(est.rho) != n_obs:
        raise ConfigError(f"estimator.rho has {len(est.rho)} radii for {n_obs} observations")


# ------------------------------------------------------------------ commands


def cmd_fit(args):
    cfg = load_config(args.config)
    data = read_dataset(args.data, cfg.spec)
    _check_radii(cfg, cfg.estimator, data.n_obs)
    res = cfg.estimator.fit(data, cfg.spec, cfg.fit)
    extra = {
        "train_log_likelihood": log_likelihood(cfg.spec, res.beta, data),
        "train_accuracy": accuracy(cfg.spec, res.beta, data),
        "n_obs": data.n_obs,
    }
    _emit(args, fit_result_to_json(cfg.spec, res, cfg.estimator, extra))
    _info(args, f"{cfg.estimator.label}: objective {res.objective:.6f}, "
                f"{res.iterations} iterations, converged={res.converged}")
    _info(args, coefficient_table(cfg.spec, res.beta))
    if args.strict and not res.converged:
        raise _NotConverged(cfg.estimator.label)


def cmd_evaluate(args):
    spec = load_config(args.config).spec if args.config else None
    spec, beta = read_beta(args.beta, spec)
    data = read_dataset(args.data, spec)
    _emit(args, {
        "n_obs": data.n_obs,
        "log_likelihood": log_likelihood(spec, beta, data),
        "accuracy": accuracy(spec, beta, data),
    })


def cmd_synth(args):
    cfg = load_config(args.config)
    data = read_dataset(args.clean_test, cfg.spec)
    scheme = _scheme(cfg, _seed(args, cfg.experiment))
    res = generate_synthetic_test(data, cfg.spec, scheme, fit_config=cfg.fit, details=True)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "beta_test.json", beta_to_json(cfg.spec, res.beta_test))
    write_dataset(out / "perturbed.csv", res.perturbed, cfg.spec)
    write_dataset(out / "simulated_clean.csv", res.clean, cfg.spec)
    sys.stdout.write(f"wrote {out/'beta_test.json'}, {out/'perturbed.csv'}, {out/'simulated_clean.csv'}\n")


def report_csv(report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "replication", *METRICS])
    for r in report.rows:
        w.writerow([r["model"], r["replication"], *(format(r[m], ".17g") for m in METRICS)])
    agg = report.aggregate()
    for stat in ("mean", "std"):
        for m in report.models:
            w.writerow([m, stat, *(format(agg[m][k][stat], ".17g") for k in METRICS)])
    return buf.getvalue()


def cmd_experiment(args):
    cfg = load_config(args.config)
    train = read_dataset(args.train, cfg.spec)
    clean = read_dataset(args.clean_test, cfg.spec)
    models = cfg.models()
    for m in models:
        _check_radii(cfg, m, train.n_obs)
    scheme = _scheme(cfg, _seed(args, cfg.experiment))
    R = int(cfg.experiment.get("R", 30))
    report, fits = run_replications(train, clean, cfg.spec, models, scheme, R, cfg.fit, threads=args.threads)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report_csv(report), encoding="utf-8")
    write_json(out / "report.json", {
        "models": report.models,
        "replications": R,
        "seed": scheme.seed,
        "scheme": scheme.kind,
        "rows": report.rows,
        "aggregate": report.aggregate(),
        "fits": {k: {"beta": v.beta, "converged": v.converged, "objective": v.objective} for k, v in fits.items()},
    })
    agg = report.aggregate()
    for m in report.models:
        a = agg[m]
        sys.stdout.write(
            f"{m:45s} test acc {a['test_accuracy']['mean']:.4f} (+-{a['test_accuracy']['std']:.4f})"
            f"  test LL {a['test_ll']['mean']:.2f} (+-{a['test_ll']['std']:.2f})\n"
        )
    if args.strict and not all(f.converged for f in fits.values()):
        raise _NotConverged(", ".join(k for k, f in fits.items() if not f.converged))


def cmd_tune(args):
    cfg = load_config(args.config)
    train = read_dataset(args.train, cfg.spec)
    t = cfg.tune
    if "grid" not in t:
        raise ConfigError("tune.grid is required")
    if cfg.estimator.kind == "nominal":
        raise ConfigError("tuning needs a robust estimator kind")
    best, table = grid_search_tune(
        train, cfg.spec, cfg.estimator, [float(v) for v in t["grid"]],
        float(t.get("validation_fraction", 0.2)), _seed(args, t), cfg.fit, threads=args.threads,
    )
    _emit(args, {
        "estimator": cfg.estimator.kind,
        "best": best,
        "table": [{"value": v, "validation_ll": ll, "converged": c} for v, ll, c in table],
    })
    _info(args, "\n".join(f"{v:>12g}  {ll:.6f}{'' if c else '  (not converged)'}" for v, ll, c in table))
    _info(args, f"selected {best:g}")
    if args.strict and not all(c for _, _, c in table):
        raise _NotConverged("tune")


def _pricing_args(cfg: RunConfig):
    p = cfg.pricing
    if "feature" not in p or "alternative" not in p:
        raise ConfigError("pricing.feature and pricing.alternative are required")
    k, i = cfg.feature_index(p["feature"]), cfg.alternative_index(p["alternative"])
    if not cfg.spec.mask[i, k]:
        raise ConfigError(f"feature {p['feature']!r} does not enter {p['alternative']!r}")
    grid = default_alpha_grid(float(p.get("step", 0.01)), float(p.get("upper", 10.0)))
    return k, i, grid


def cmd_price(args):
    cfg = load_config(args.config)
    spec = cfg.spec
    _, beta_hat = read_beta(args.beta, spec)
    _, beta_true = read_beta(args.beta_true, spec)
    data = read_dataset(args.data, spec)
    clean = read_dataset(args.clean, spec) if args.clean else data
    k, i, grid = _pricing_args(cfg)
    a_star, predicted = pricing_optimization(data, spec, beta_hat, k, i, grid)
    a_oracle, oracle_pred = pricing_optimization(clean, spec, beta_true, k, i, grid)
    _emit(args, {
        "alpha_star": a_star,
        "predicted_revenue": predicted,
        "actual_revenue": evaluate_revenue(clean, spec, beta_true, a_star, k, i),
        "oracle_alpha": a_oracle,
        "oracle_revenue": evaluate_revenue(clean, spec, beta_true, a_oracle, k, i),
    })


def cmd_diagnose(args):
    cfg = load_config(args.config)
    spec = cfg.spec
    _, beta = read_beta(args.beta, spec)
    data = read_dataset(args.data, spec)
    d = cfg.diagnose
    est = cfg.estimator
    out: dict = {"trace_mle": fisher_trace_mle(spec, beta, data), "estimator": est.label}
    if est.kind == "robust_feature" and not est.constraints:
        _check_radii(cfg, est, data.n_obs)
        budget = est.feature_budget()
        try:
            out["trace_robust_feature"] = fisher_trace_robust_feature(spec, beta, data, budget)
        except DegeneratePointError as exc:
            out["trace_robust_feature"] = None
            out["trace_note"] = str(exc)
        m = min(int(d.get("subsample", 20)), data.n_obs)
        sub = data.subset(np.arange(m))
        sub_budget = budget if not np.ndim(est.rho) else replace(est, rho=est.rho[:m]).feature_budget()
        sandwich = {
            "n_obs": m,
            "rf_objective": rf_objective(spec, beta, sub, sub_budget),
            "upper_bound": rf_upper_bound_objective(spec, beta, sub, sub_budget),
        }
        if math.isinf(est.p):
            sandwich["exact"] = exact_robust_objective(spec, beta, sub, sub_budget, method="vertex")
        elif est.p == 2.0:
            sandwich["exact_sampled"] = exact_robust_objective(spec, beta, sub, sub_budget, method="sampling")
        out["bound_sandwich"] = sandwich
    if est.kind == "robust_label":
        rep = compare_traces_robust_label(spec, beta, data, LabelBudget(est.gamma))
        out["trace_robust_label"] = rep.trace_robust
        out["selection_tie"] = rep.tie
    pert = float(d.get("perturbation_l2", 0.0))
    lip = float(d.get("lipschitz", 1.0))
    base = float(d.get("baseline_error", 0.0))
    out["error_bound"] = {
        "beta_l2": float(np.linalg.norm(beta)),
        "expected_perturbation_l2": pert,
        "lipschitz": lip,
        "baseline_error": base,
        "bound": prediction_error_bound(beta, pert, lip, base),
    }
    _emit(args, out)


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="robustlogit", description="Robust logit estimation toolkit")
    p.add_argument("--threads", type=int, default=1, help="worker threads for replications and grids")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_, parents=[common])
        sp.set_defaults(func=fn)
        return sp

    sp = add("fit", cmd_fit, "fit one estimator")
    sp.add_argument("data")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out")
    sp.add_argument("--strict", action="store_true")

    sp = add("evaluate", cmd_evaluate, "accuracy and log-likelihood of stored coefficients")
    sp.add_argument("data")
    sp.add_argument("--beta", required=True)
    sp.add_argument("--config")
    sp.add_argument("--out")

    sp = add("synth", cmd_synth, "generate a perturbed synthetic test set")
    sp.add_argument("clean_test")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--seed", type=int)

    sp = add("experiment", cmd_experiment, "replicated train/test comparison")
    sp.add_argument("train")
    sp.add_argument("clean_test")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--strict", action="store_true")

    sp = add("tune", cmd_tune, "grid search on a validation split")
    sp.add_argument("train")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--strict", action="store_true")

    sp = add("price", cmd_price, "revenue-maximising price multiplier")
    sp.add_argument("data")
    sp.add_argument("--beta", required=True)
    sp.add_argument("--beta-true", required=True)
    sp.add_argument("--clean", help="unperturbed attributes for the actual revenue (default: data)")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out")

    sp = add("diagnose", cmd_diagnose, "Fisher traces, error bound and bound sandwich")
    sp.add_argument("data")
    sp.add_argument("--beta", required=True)
    sp.add_argument("--config", required=True)
    sp.add_argument("--out")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    try:
        args.func(args)
    except _NotConverged as exc:
        sys.stderr.write(f"error: not converged: {exc}\n")
        return EXIT_NOT_CONVERGED
    except (DataValidationError, ConfigError, StructuralError, FileNotFoundError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
