"""
Bundled synthetic scenarios.

Each generator writes data, run configurations and a ``manifest.json``
holding the generating values and the tolerances the outputs should meet.
They double as end-to-end tests of the command-line interface.

==============  ==========================================================
``toy``         homogeneous patterns; the intercept-only fit is log(n / A)
``saliency``    ``eta_i = alpha_i + 2.5 m_i`` with per-pattern bump maps
``two-level``   80% of the mass on 20% of the area; area count at 0.2 ~ 0.8
``center-bias`` saliency plus a central bias the no-bias model misses
==============  ==========================================================
"""

from pathlib import Path

import numpy as np

from .domain import CovariateField, PointPattern, Window, minmax_scale
from .intensity import LinearPredictor
from .io import dumps_json, write_patterns_csv, write_raster
from .simulate import make_rng, sample_conditional_n, sample_homogeneous

__all__ = ["SCENARIOS", "write_scenario"]


def _bump(window, cx, cy, s, n=32):
    return minmax_scale(CovariateField.from_function(
        lambda x, y: np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * s * s)), window, n, n))


def _write_text(path, text):
    Path(path).write_text(text, encoding="utf-8")


def _window_line(w):
    return f"window = [{w.x_min!r}, {w.x_max!r}, {w.y_min!r}, {w.y_max!r}]"


def _maps_block(name, gids):
    lines = [f"[covariates.{name}]", 'by = "group_id"', f"[covariates.{name}.rasters]"]
    lines += [f'{g} = "maps/{name}_{g}.json"' for g in gids]
    return "\n".join(lines)


def _toy(out, seed):
    w = Window(0.0, 2.0, 0.0, 1.0)
    rng = make_rng(seed)
    pats = [sample_homogeneous(w, 100.0, rng, f"g{i}") for i in range(3)]
    write_patterns_csv(out / "patterns.csv", pats)
    _write_text(out / "fit.toml", f"""seed = {seed}
out = "out/fit"

[data]
{_window_line(w)}
patterns = "patterns.csv"

[[model.terms]]
name = "alpha"
intercept = true
""")
    return {
        "config": "fit.toml",
        "command": "fit",
        "expected": {f"alpha[{p.group_id}]": float(np.log(len(p) / w.area())) for p in pats},
        "tolerance": 1e-6,
    }


def _saliency_patterns(out, seed, n_patterns, n_points, beta, bias=None, bias_amp=0.0):
    w = Window.unit()
    rng = make_rng(seed)
    (out / "maps").mkdir(exist_ok=True)
    pats = []
    gids = []
    for i in range(n_patterns):
        gid = f"p{i:02d}"
        c = rng.uniform(0.15, 0.85, size=2)
        m = _bump(w, c[0], c[1], 0.12)
        write_raster(out / "maps" / f"m_{gid}.json", m)
        terms = [(beta, m)]
        if bias is not None:
            terms.append((bias_amp, bias))
        eta = LinearPredictor(w, 0.0, terms)
        pats.append(sample_conditional_n(eta, n_points, rng, gid))
        gids.append(gid)
    write_patterns_csv(out / "patterns.csv", pats)
    return w, gids


_SALIENCY_MODEL = """[[model.terms]]
name = "alpha"
intercept = true

[[model.terms]]
name = "beta"
covariate = "m"
scope = "shared"
"""


def _saliency(out, seed):
    w, gids = _saliency_patterns(out, seed, 20, 150, 2.5)
    head = f"""seed = {seed}

[data]
{_window_line(w)}
patterns = "patterns.csv"

{_maps_block("m", gids)}

"""
    _write_text(out / "fit.toml", head.replace("\n\n[data]", '\nout = "out/fit"\n\n[data]', 1)
                + _SALIENCY_MODEL)
    _write_text(out / "simulate.toml", head.replace(
        "\n\n[data]", '\nout = "out/sim"\n\n[data]', 1) + """[fit]
artifact = "out/fit/fit.json"

[simulate]
mode = "fit"
n_datasets = 2
""")
    _write_text(out / "diagnose.toml", head.replace(
        "\n\n[data]", '\nout = "out/diagnose"\n\n[data]', 1) + """[fit]
artifact = "out/fit/fit.json"

[diagnose]
n_replicates = 99
partition = [4, 4]
""")
    return {
        "config": "fit.toml",
        "command": "fit",
        "expected": {"beta": 2.5},
        "tolerance": 0.3,
    }


def _two_level(out, seed):
    w = Window.unit()
    n = 10
    vals = np.full((n, n), 0.25)
    vals[n - 2:, :] = 4.0  # top 20% of the area holds 80% of the mass
    m = CovariateField(vals, w, "pixel")
    write_raster(out / "saliency.json", m)
    rng = make_rng(seed)
    p = (vals / vals.sum()).ravel()
    cells = rng.choice(p.size, size=5000, p=p)
    iy, ix = np.divmod(cells, n)
    u = rng.random((cells.size, 2))
    xy = np.column_stack([(ix + u[:, 0]) / n, (iy + u[:, 1]) / n])
    write_patterns_csv(out / "patterns.csv", [PointPattern(xy, w, "f")])
    _write_text(out / "evaluate.toml", f"""seed = {seed}
out = "out/evaluate"

[data]
{_window_line(w)}
patterns = "patterns.csv"

[evaluate]
saliency = "saliency.json"
n_controls = 10000
q = [0.1, 0.2, 0.5]
""")
    return {
        "config": "evaluate.toml",
        "command": "evaluate",
        "expected": {"area_count_0.2": 0.8, "auc_minus_area_count_integral": 0.0},
        "tolerance": {"area_count_0.2": 0.02, "auc_minus_area_count_integral": 0.01},
    }


def _center_bias(out, seed):
    w = Window.unit()
    g = CovariateField.from_function(
        lambda x, y: np.exp(-((x - 0.5) ** 2 + (y - 0.5) ** 2) / (2 * 0.15**2)), w, 32, 32)
    w, gids = _saliency_patterns(out, seed, 12, 400, 1.5, bias=g, bias_amp=2.0)
    head = f"""seed = {seed}
out = "OUT"

[data]
{_window_line(w)}
patterns = "patterns.csv"

{_maps_block("m", gids)}

"""
    model = _SALIENCY_MODEL.replace('scope = "shared"', 'scope = "pattern"')
    latent = model + """
[[model.terms]]
name = "g"
scope = "shared"
latent = true

[grid]
nx = 32
ny = 32

[gp]
family = "matern52"
candidates = [{ variance = 1.0, length_scale = 0.25 }]
"""
    _write_text(out / "fit_nobias.toml", head.replace("OUT", "out/nobias") + model)
    _write_text(out / "fit_bias.toml", head.replace("OUT", "out/bias") + latent)
    for tag in ("nobias", "bias"):
        _write_text(out / f"diagnose_{tag}.toml", head.replace("OUT", f"out/diagnose_{tag}") + f"""[fit]
artifact = "out/{tag}/fit.json"

[diagnose]
n_replicates = 99
partition = [4, 4]
""")
    return {
        "config": "fit_nobias.toml",
        "command": "fit",
        "expected": {"nobias_central_flags": ["high", "high", "high", "high"]},
        "central_regions": [5, 6, 9, 10],
        "tolerance": None,
    }


SCENARIOS = {
    "toy": (_toy, 11),
    "saliency": (_saliency, 12),
    "two-level": (_two_level, 13),
    "center-bias": (_center_bias, 14),
}


def write_scenario(name, out, seed=None):
    """Generate scenario ``name`` into directory ``out``; returns the path."""
    from .errors import ValidationError

    if name not in SCENARIOS:
        raise ValidationError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")
    gen, default_seed = SCENARIOS[name]
    seed = default_seed if seed is None else int(seed)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = gen(out, seed)
    manifest = {"scenario": name, "seed": seed, **manifest}
    (out / "manifest.json").write_text(dumps_json(manifest), encoding="utf-8")
    return out
