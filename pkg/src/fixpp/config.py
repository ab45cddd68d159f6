"""
Run configuration.

A run is described by one TOML file.  Relative paths are resolved against
the directory holding the file.  Grammar (all tables optional unless the
command needs them)::

    seed = 20240101            # mandatory (or --seed); unsigned 64-bit
    threads = 1
    out = "results"            # output directory (or --out)

    [data]
    window = [0.0, 1.0, 0.0, 1.0]
    patterns = "patterns.csv"  # group_id,x,y
    labels = "labels.csv"      # optional: group_id,<label>,...

    [covariates.m]             # one table per covariate name
    raster = "m.json"          # the same field for every pattern, or
    by = "group_id"            # a label name (or group_id) selecting
    rasters = { p1 = "m1.json", p2 = "m2.json" }   # per-value rasters

    [[model.terms]]            # see fixpp.glm.Term
    name = "alpha"
    intercept = true
    [[model.terms]]
    name = "beta"
    covariate = "m"
    scope = "pattern"          # pattern | shared | label
    # by = "image", modifier = "phi", latent = true

    [grid]                     # quadrature / latent grid
    nx = 32
    ny = 32

    [gp]                       # needed when a term is latent
    family = "matern52"
    candidates = [{ variance = 1.0, length_scale = 0.2 }]
    tie_tolerance = 1.0

    [fit]
    tol = 1e-6
    max_iter = 500
    artifact = "results/fit.json"   # input for simulate/diagnose

    [simulate]
    mode = "homogeneous"       # homogeneous | thinning | conditional | fit
    n_datasets = 1
    lambda0 = 50.0             # homogeneous
    n = 100                    # conditional: points per dataset
    intercept = 0.0            # thinning / conditional log-intensity:
    terms = [{ covariate = "m", coef = 2.0 }]   # eta = intercept + sum coef*m

    [evaluate]
    saliency = "saliency.json"
    control = "phi.json"       # optional non-uniform control intensity
    n_controls = 10000
    q = [0.1, 0.2, 0.3]

    [diagnose]
    n_replicates = 99
    partition = [4, 4]
    bins = 16
"""

from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .domain import Window
from .errors import DataFormatError, ValidationError
from .glm import ModelSpec
from .gp import CovarianceSpec

__all__ = ["RunConfig", "load_config", "COMMANDS"]

COMMANDS = ("fit", "simulate", "evaluate", "diagnose")

_TOP_KEYS = {"seed", "threads", "out", "data", "covariates", "model", "grid", "gp",
             "fit", "simulate", "evaluate", "diagnose"}


@dataclass
class RunConfig:
    path: Path
    seed: int
    threads: int
    out: Path
    window: Window = None
    patterns: Path = None
    labels: Path = None
    covariates: dict = field(default_factory=dict)
    model: ModelSpec = None
    grid: tuple = None
    gp_candidates: tuple = ()
    tie_tolerance: float = 1.0
    tol: float = 1e-6
    max_iter: int = 500
    fit_artifact: Path = None
    simulate: dict = field(default_factory=dict)
    evaluate: dict = field(default_factory=dict)
    diagnose: dict = field(default_factory=dict)


def _err(msg):
    return ValidationError(f"config: {msg}")


def _table(raw, key):
    v = raw.get(key, {})
    if not isinstance(v, dict):
        raise _err(f"[{key}] must be a table")
    return v


def _check_keys(table, allowed, where):
    extra = sorted(set(table) - set(allowed))
    if extra:
        raise _err(f"unknown key(s) {extra} in {where}")


def _existing(base, value, what):
    if not isinstance(value, str) or not value:
        raise _err(f"{what} must be a path string")
    p = (base / value).resolve()
    if not p.exists():
        raise _err(f"{what} {value!r} does not exist ({p})")
    return p


def _int(v, what, lo=None, hi=None):
    if isinstance(v, bool) or not isinstance(v, int):
        raise _err(f"{what} must be an integer, got {v!r}")
    if lo is not None and v < lo or hi is not None and v > hi:
        raise _err(f"{what} must lie in [{lo}, {hi}], got {v}")
    return v


def _float(v, what, positive=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise _err(f"{what} must be a number, got {v!r}")
    v = float(v)
    if positive and not v > 0:
        raise _err(f"{what} must be positive, got {v}")
    return v


def load_config(path, command, seed=None, out=None, threads=None):
    """Parse and fully validate a run configuration for ``command``.

    Raises
    ------
    DataFormatError
        The file cannot be read.
    ValidationError
        On any other problem, before any computation happens.
    """
    if command not in COMMANDS:
        raise _err(f"unknown command {command!r}")
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataFormatError(f"cannot read config: {exc.strerror or exc}", path) from None
    except tomllib.TOMLDecodeError as exc:
        raise _err(f"{path}: {exc}") from None
    base = path.resolve().parent
    _check_keys(raw, _TOP_KEYS, "top level")

    if seed is None:
        if "seed" not in raw:
            raise _err("a seed is mandatory (set 'seed' or pass --seed)")
        seed = raw["seed"]
    seed = _int(seed, "seed", 0, 2**64 - 1)
    threads = _int(threads if threads is not None else raw.get("threads", 1), "threads", 1)
    if out is not None:
        out_path = Path(out).resolve()
    else:
        out_path = (base / str(raw.get("out", "out"))).resolve()
    cfg = RunConfig(path=path.resolve(), seed=seed, threads=threads, out=out_path)

    data = _table(raw, "data")
    _check_keys(data, {"window", "patterns", "labels"}, "[data]")
    if "window" in data:
        w = data["window"]
        if not (isinstance(w, list) and len(w) == 4):
            raise _err("data.window must be [x_min, x_max, y_min, y_max]")
        try:
            cfg.window = Window(*[_float(v, "data.window entry") for v in w])
        except ValueError as exc:
            raise _err(str(exc)) from None
    if "patterns" in data:
        cfg.patterns = _existing(base, data["patterns"], "data.patterns")
    if "labels" in data:
        cfg.labels = _existing(base, data["labels"], "data.labels")

    covs = _table(raw, "covariates")
    for name, spec in covs.items():
        if not isinstance(spec, dict):
            raise _err(f"[covariates.{name}] must be a table")
        _check_keys(spec, {"raster", "by", "rasters"}, f"[covariates.{name}]")
        if "raster" in spec:
            if "rasters" in spec or "by" in spec:
                raise _err(f"covariate {name!r}: give either 'raster' or 'by' + 'rasters'")
            cfg.covariates[name] = {"raster": _existing(base, spec["raster"], f"covariates.{name}.raster")}
        else:
            if "by" not in spec or not isinstance(spec.get("rasters"), dict) or not spec["rasters"]:
                raise _err(f"covariate {name!r} needs 'raster' or 'by' + 'rasters'")
            cfg.covariates[name] = {
                "by": str(spec["by"]),
                "rasters": {
                    str(k): _existing(base, v, f"covariates.{name}.rasters.{k}")
                    for k, v in spec["rasters"].items()
                },
            }

    model = _table(raw, "model")
    if model:
        _check_keys(model, {"terms"}, "[model]")
        if not isinstance(model.get("terms"), list):
            raise _err("model.terms must be an array of tables")
        cfg.model = ModelSpec.from_dict(model)
        for t in cfg.model.terms:
            if t.covariate is not None and t.covariate not in cfg.covariates:
                raise _err(f"term {t.name!r} refers to undefined covariate {t.covariate!r}")

    grid = _table(raw, "grid")
    if grid:
        _check_keys(grid, {"nx", "ny"}, "[grid]")
        nx = _int(grid.get("nx", 32), "grid.nx", 1)
        cfg.grid = (nx, _int(grid.get("ny", nx), "grid.ny", 1))

    gp = _table(raw, "gp")
    if gp:
        _check_keys(gp, {"family", "candidates", "tie_tolerance"}, "[gp]")
        family = gp.get("family", "matern52")
        cands = gp.get("candidates")
        if not isinstance(cands, list) or not cands:
            raise _err("gp.candidates must be a non-empty array")
        out_c = []
        for c in cands:
            if not isinstance(c, dict):
                raise _err("each gp candidate must be a table")
            _check_keys(c, {"variance", "length_scale", "family"}, "gp candidate")
            out_c.append(CovarianceSpec(
                _float(c.get("variance", 1.0), "variance", True),
                _float(c.get("length_scale", 0.2), "length_scale", True),
                c.get("family", family),
            ))
        cfg.gp_candidates = tuple(out_c)
        cfg.tie_tolerance = _float(gp.get("tie_tolerance", 1.0), "gp.tie_tolerance")

    fit = _table(raw, "fit")
    _check_keys(fit, {"tol", "max_iter", "artifact"}, "[fit]")
    cfg.tol = _float(fit.get("tol", 1e-6), "fit.tol", True)
    cfg.max_iter = _int(fit.get("max_iter", 500), "fit.max_iter", 1)
    if "artifact" in fit and command in ("simulate", "diagnose"):
        cfg.fit_artifact = _existing(base, fit["artifact"], "fit.artifact")

    cfg.simulate = _table(raw, "simulate")
    cfg.evaluate = _table(raw, "evaluate")
    cfg.diagnose = _table(raw, "diagnose")
    _VALIDATORS[command](cfg, base)
    return cfg


def _need(cfg, *attrs):
    for a in attrs:
        if getattr(cfg, a) is None:
            key = {"window": "data.window", "patterns": "data.patterns", "model": "[model]",
                   "fit_artifact": "fit.artifact"}[a]
            raise _err(f"{key} is required for this command")


def _validate_fit(cfg, base):
    _need(cfg, "window", "patterns", "model")
    if cfg.model.latent is not None and not cfg.gp_candidates:
        raise _err("a latent term needs [gp] candidates")


def _validate_terms(cfg, sim):
    terms = sim.get("terms", [])
    if not isinstance(terms, list):
        raise _err("simulate.terms must be an array")
    for t in terms:
        if not isinstance(t, dict):
            raise _err("each simulate term must be a table")
        _check_keys(t, {"covariate", "coef"}, "simulate term")
        name = t.get("covariate")
        if name not in cfg.covariates or "raster" not in cfg.covariates[name]:
            raise _err(f"simulate term covariate {name!r} must be a single-raster covariate")
        _float(t.get("coef", 1.0), "simulate term coef")
    _float(sim.get("intercept", 0.0), "simulate.intercept")


def _validate_simulate(cfg, base):
    sim = cfg.simulate
    _check_keys(sim, {"mode", "n_datasets", "lambda0", "n", "intercept", "terms"}, "[simulate]")
    mode = sim.get("mode")
    if mode not in ("homogeneous", "thinning", "conditional", "fit"):
        raise _err("simulate.mode must be homogeneous, thinning, conditional or fit")
    _int(sim.get("n_datasets", 1), "simulate.n_datasets", 1)
    if mode == "fit":
        _need(cfg, "fit_artifact", "patterns", "window")
        return
    _need(cfg, "window")
    if mode == "homogeneous":
        if "lambda0" not in sim:
            raise _err("simulate.lambda0 is required in homogeneous mode")
        if _float(sim["lambda0"], "simulate.lambda0") < 0:
            raise _err("simulate.lambda0 must be non-negative")
    else:
        _validate_terms(cfg, sim)
        if mode == "conditional":
            if "n" not in sim:
                raise _err("simulate.n is required in conditional mode")
            _int(sim["n"], "simulate.n", 0)


def _validate_evaluate(cfg, base):
    ev = cfg.evaluate
    _check_keys(ev, {"saliency", "control", "n_controls", "q"}, "[evaluate]")
    _need(cfg, "window", "patterns")
    ev["saliency"] = _existing(base, ev.get("saliency"), "evaluate.saliency")
    if "control" in ev:
        ev["control"] = _existing(base, ev["control"], "evaluate.control")
    _int(ev.setdefault("n_controls", 10000), "evaluate.n_controls", 1)
    q = ev.setdefault("q", [0.1, 0.2, 0.3])
    if not isinstance(q, list) or not q:
        raise _err("evaluate.q must be a non-empty array")
    for v in q:
        if not 0 < _float(v, "evaluate.q entry") < 1:
            raise _err(f"evaluate.q entries must lie in (0, 1), got {v}")


def _validate_diagnose(cfg, base):
    dg = cfg.diagnose
    _check_keys(dg, {"n_replicates", "partition", "bins"}, "[diagnose]")
    _need(cfg, "fit_artifact", "patterns", "window")
    _int(dg.setdefault("n_replicates", 99), "diagnose.n_replicates", 20)
    part = dg.setdefault("partition", [4, 4])
    if not (isinstance(part, list) and len(part) == 2):
        raise _err("diagnose.partition must be [nx, ny]")
    for v in part:
        _int(v, "diagnose.partition entry", 1)
    _int(dg.setdefault("bins", 16), "diagnose.bins", 2)


_VALIDATORS = {
    "fit": _validate_fit,
    "simulate": _validate_simulate,
    "evaluate": _validate_evaluate,
    "diagnose": _validate_diagnose,
}
