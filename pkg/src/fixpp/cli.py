"""
Command-line interface.

Usage::

    fixpp fit      --config run.toml [--seed S] [--out DIR] [--threads N]
    fixpp simulate --config run.toml ...
    fixpp evaluate --config run.toml ...
    fixpp diagnose --config run.toml ...
    fixpp scenario NAME --out DIR [--seed S]

Exit codes: 0 success, 2 validation error, 3 convergence or numerical
failure, 4 input/output error.  All inputs are read and validated before any
computation and outputs are written only once everything has succeeded.
"""

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config
from .diagnostics import posterior_predictive_check
from .domain import Grid, Partition, PointPattern, integrate_field
from .errors import (ConditioningError, ConvergenceError, DataFormatError, FixppError,
                     NumericError, ValidationError)
from .glm import ByLabel, FitResult, fit_mle
from .gp import CovarianceSpec, LatentField, fit_map_latent, select_hyperparameters
from .intensity import LinearPredictor
from .io import dumps_json, patterns_csv_text, raster_texts, read_patterns_csv, read_raster
from .metrics import (MetricReport, area_count, area_count_integral, auc_2afc,
                      contour_volume_curve, shuffled_auc_correction)
from .simulate import (make_rng, replicate_dataset, sample_conditional_n,
                       sample_homogeneous, sample_thinning)

__all__ = ["main", "load_fit"]

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CONVERGENCE = 3
EXIT_IO = 4


def _load_covariates(cfg):
    out = {}
    for name, spec in cfg.covariates.items():
        if "raster" in spec:
            out[name] = _checked_raster(spec["raster"], cfg.window)
        else:
            fields = {k: _checked_raster(p, cfg.window) for k, p in spec["rasters"].items()}
            out[name] = ByLabel(spec["by"], fields)
    return out


def _checked_raster(path, window):
    f = read_raster(path)
    if window is not None and f.window != window:
        raise ValidationError(
            f"window mismatch: raster {path} has {f.window.bounds}, data window is "
            f"{window.bounds}"
        )
    return f


def _load_patterns(cfg):
    pats = read_patterns_csv(cfg.patterns, cfg.window, cfg.labels)
    if not pats:
        raise ValidationError(f"{cfg.patterns}: no patterns")
    return pats


def _fit_files(fit, selection=None):
    d = fit.to_dict()
    files = {}
    if fit.latent is not None:
        for key in ("mean", "sd"):
            header, payload = raster_texts(getattr(fit.latent, key), f"latent_{key}.csv")
            files[f"latent_{key}.json"] = header.encode("utf-8")
            files[f"latent_{key}.csv"] = payload
            d["latent"][key] = f"latent_{key}.json"
    if selection is not None:
        d["hyperparameter_selection"] = selection
    files["fit.json"] = dumps_json(d).encode("utf-8")
    return files


def load_fit(path):
    """Read a fit artifact (and its latent rasters, if any)."""
    path = Path(path)
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataFormatError(f"cannot read fit artifact: {exc.strerror or exc}", path) from None
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None
    latent = None
    if "latent" in d:
        lat = d["latent"]
        try:
            mean = read_raster(path.parent / lat["mean"])
            sd = read_raster(path.parent / lat["sd"])
            cov = CovarianceSpec(**lat["covariance"])
        except (KeyError, TypeError) as exc:
            raise DataFormatError(f"invalid latent description: {exc}", path) from None
        latent = LatentField(mean, sd, cov, Grid(mean.window, mean.nx, mean.ny))
    return FitResult.from_dict(d, latent=latent)


def _cmd_fit(cfg):
    patterns = _load_patterns(cfg)
    covs = _load_covariates(cfg)
    selection = None
    if cfg.model.latent is not None:
        grid = Grid(cfg.window, *(cfg.grid or (32, 32)))
        cands = cfg.gp_candidates
        if len(cands) > 1:
            chosen, scores = select_hyperparameters(
                cfg.model, patterns, covs, cands, grid=grid, tie_tolerance=cfg.tie_tolerance,
                return_scores=True, tol=cfg.tol,
            )
            selection = {
                "candidates": [c.to_dict() for c in cands],
                "log_evidence": [None if s is None else float(f"{s:.12g}") for s in scores],
                "chosen": chosen.to_dict(),
            }
        else:
            chosen = cands[0]
        fit = fit_map_latent(cfg.model, patterns, covs, chosen, grid=grid, tol=cfg.tol)
    else:
        grid = Grid(cfg.window, *cfg.grid) if cfg.grid else None
        fit = fit_mle(cfg.model, patterns, covs, grid=grid, tol=cfg.tol,
                      max_iter=cfg.max_iter, threads=cfg.threads)
    return _fit_files(fit, selection), f"fitted {len(fit.names)} coefficients, loglik {fit.loglik:.6g}"


def _sim_predictor(cfg):
    sim = cfg.simulate
    terms = []
    for t in sim.get("terms", []):
        f = _checked_raster(cfg.covariates[t["covariate"]]["raster"], cfg.window)
        terms.append((float(t.get("coef", 1.0)), f))
    return LinearPredictor(cfg.window, float(sim.get("intercept", 0.0)), terms)


def _cmd_simulate(cfg):
    sim = cfg.simulate
    mode = sim["mode"]
    n_sets = int(sim.get("n_datasets", 1))
    if mode == "fit":
        fit = load_fit(cfg.fit_artifact)
        patterns = _load_patterns(cfg)
        covs = _load_covariates(cfg)
        for i, p in enumerate(patterns):
            fit.predictor(p, covs, index=i)
    elif mode != "homogeneous":
        eta = _sim_predictor(cfg)
    files = {}
    width = max(4, len(str(n_sets - 1)))
    for k in range(n_sets):
        rng = make_rng(cfg.seed, k)
        if mode == "homogeneous":
            pats = [sample_homogeneous(cfg.window, float(sim["lambda0"]), rng, "sim")]
        elif mode == "thinning":
            pats = [sample_thinning(eta, rng, "sim")]
        elif mode == "conditional":
            pats = [sample_conditional_n(eta, int(sim["n"]), rng, "sim")]
        else:
            pats = replicate_dataset(fit, patterns, covs, rng)
        files[f"simulated_{k:0{width}d}.csv"] = patterns_csv_text(pats).encode("utf-8")
    return files, f"wrote {n_sets} simulated dataset(s)"


def _pooled(patterns, window):
    xy = np.concatenate([p.xy for p in patterns]) if patterns else np.zeros((0, 2))
    return PointPattern(xy, window, "pooled")


def _uniform_controls(window, n, rng):
    u = rng.random((n, 2))
    xy = np.column_stack([window.x_min + u[:, 0] * window.width,
                          window.y_min + u[:, 1] * window.height])
    return PointPattern(xy, window, "control")


def _cmd_evaluate(cfg):
    ev = cfg.evaluate
    m = _checked_raster(ev["saliency"], cfg.window)
    phi = _checked_raster(ev["control"], cfg.window) if "control" in ev else None
    patterns = _load_patterns(cfg)
    fix = _pooled(patterns, cfg.window)
    if len(fix) == 0:
        raise ValidationError("no fixations to evaluate")
    if phi is not None and np.any(phi.values <= 0):
        raise ValidationError("control intensity must be positive")
    n_c = int(ev["n_controls"])
    controls = _uniform_controls(cfg.window, n_c, make_rng(cfg.seed, 0))
    auc = auc_2afc(m, fix, controls)
    counts = {float(q): area_count(m, fix, float(q)) for q in ev["q"]}
    a_c = area_count_integral(m, fix)
    curve = None
    vol_int = float("nan")
    if np.all(m.values >= 0):
        total = integrate_field(m)
        if total > 0:
            curve = contour_volume_curve(m.map(lambda v: v / total))
            vol_int = curve.integral()
    shuffled = unshuffled = None
    if phi is not None:
        eta = LinearPredictor.from_field(phi.map(np.log))
        ctrl_phi = sample_conditional_n(eta, n_c, make_rng(cfg.seed, 1), "control")
        unshuffled = auc_2afc(m, fix, ctrl_phi)
        shuffled = auc_2afc(shuffled_auc_correction(m, phi), fix, ctrl_phi)
    report = MetricReport(auc, counts, a_c, vol_int, shuffled, unshuffled, len(fix), n_c, curve)
    files = {"report.json": dumps_json(report.to_dict()).encode("utf-8")}
    if curve is not None:
        files["volume_curve.csv"] = curve.to_csv().encode("utf-8")
    return files, f"AUC {auc:.4f}, A_c {a_c:.4f}"


def _cmd_diagnose(cfg):
    dg = cfg.diagnose
    fit = load_fit(cfg.fit_artifact)
    if fit.window != cfg.window:
        raise ValidationError("fit artifact window differs from the data window")
    patterns = _load_patterns(cfg)
    covs = _load_covariates(cfg)
    nx, ny = dg["partition"]
    partition = Partition.regular(cfg.window, int(nx), int(ny))
    summary = posterior_predictive_check(
        fit, patterns, covs, int(dg["n_replicates"]), partition,
        make_rng(cfg.seed, 0), bins=int(dg["bins"]), threads=cfg.threads,
    )
    files = {
        "diagnostics.json": dumps_json(summary.to_dict()).encode("utf-8"),
        "regions.csv": summary.regions_csv().encode("utf-8"),
        "margins.csv": summary.margins_csv().encode("utf-8"),
    }
    return files, f"{sum(bool(f) for f in summary.flags)} of {len(summary.regions)} regions flagged"


_COMMANDS = {
    "fit": _cmd_fit,
    "simulate": _cmd_simulate,
    "evaluate": _cmd_evaluate,
    "diagnose": _cmd_diagnose,
}


def _write(out, files):
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name in sorted(files):
            (out / name).write_bytes(files[name])
    except OSError as exc:
        raise DataFormatError(f"cannot write output: {exc.strerror or exc}", out) from None


def _parser():
    p = argparse.ArgumentParser(prog="fixpp", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"fixpp {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        s = sub.add_parser(name, help=f"run the {name} step from a config file")
        s.add_argument("--config", required=True, help="run configuration (TOML)")
        s.add_argument("--seed", type=int, help="override the config seed (unsigned 64-bit)")
        s.add_argument("--out", help="output directory (overrides the config)")
        s.add_argument("--threads", type=int, help="worker threads")
    s = sub.add_parser("scenario", help="write a bundled synthetic scenario")
    s.add_argument("name", help="scenario name (see 'fixpp scenario list')")
    s.add_argument("--out", required=False, help="destination directory")
    s.add_argument("--seed", type=int, default=None)
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.command == "scenario":
            from .scenarios import SCENARIOS, write_scenario

            if args.name == "list":
                print("\n".join(sorted(SCENARIOS)))
                return EXIT_OK
            if not args.out:
                raise ValidationError("--out is required")
            path = write_scenario(args.name, args.out, seed=args.seed)
            print(f"wrote scenario {args.name!r} to {path}")
            return EXIT_OK
        cfg = load_config(args.config, args.command, seed=args.seed, out=args.out,
                          threads=args.threads)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            files, message = _COMMANDS[args.command](cfg)
        _write(cfg.out, files)
        print(message)
        return EXIT_OK
    except DataFormatError as exc:
        print(f"fixpp: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValidationError as exc:
        print(f"fixpp: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ConvergenceError, ConditioningError, NumericError) as exc:
        print(f"fixpp: error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except OSError as exc:
        print(f"fixpp: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except FixppError as exc:
        print(f"fixpp: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
