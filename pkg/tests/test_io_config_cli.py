import json

import numpy as np
import pytest

from fixpp.cli import load_fit, main
from fixpp.config import load_config
from fixpp.domain import CovariateField, PointPattern, Window
from fixpp.errors import DataFormatError, ValidationError
from fixpp.io import (patterns_csv_text, read_labels_csv, read_patterns_csv, read_raster,
                      write_patterns_csv, write_raster)
from fixpp.simulate import make_rng, sample_homogeneous


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def read_csv_points(path):
    lines = path.read_text().splitlines()[1:]
    return np.array([[float(v) for v in l.split(",")[1:]] for l in lines]).reshape(-1, 2)


class TestPatternsCsv:
    def test_round_trip_exact(self, tmp_path, rng):
        w = Window(-1.0, 2.0, 0.0, 0.5)
        pats = [PointPattern(rng.random((20, 2)) * [3, 0.5] + [-1, 0], w, "a"),
                PointPattern([[0.1, 0.1]], w, "b")]
        write_patterns_csv(tmp_path / "p.csv", pats)
        back = read_patterns_csv(tmp_path / "p.csv", w)
        assert [p.group_id for p in back] == ["a", "b"]
        np.testing.assert_array_equal(back[0].xy, pats[0].xy)

    def test_group_order_of_first_occurrence(self, tmp_path, unit):
        write(tmp_path / "p.csv", "group_id,x,y\nz,0.1,0.1\na,0.2,0.2\nz,0.3,0.3\n")
        back = read_patterns_csv(tmp_path / "p.csv", unit)
        assert [p.group_id for p in back] == ["z", "a"]
        assert len(back[0]) == 2

    @pytest.mark.parametrize("body, line, fragment", [
        ("g,0.1\n", 2, "3 fields"),
        ("g,0.1,0.1\ng,abc,0.2\n", 3, "numbers"),
        ("g,0.1,nan\n", 2, "finite"),
        ("g,0.5,1.5\n", 2, "outside"),
        (",0.5,0.5\n", 2, "group_id"),
    ])
    def test_malformed_row_names_line(self, tmp_path, unit, body, line, fragment):
        write(tmp_path / "p.csv", "group_id,x,y\n" + body)
        with pytest.raises(DataFormatError) as exc:
            read_patterns_csv(tmp_path / "p.csv", unit)
        assert exc.value.line == line
        assert fragment in str(exc.value)
        assert "p.csv" in str(exc.value)

    def test_bad_header(self, tmp_path, unit):
        write(tmp_path / "p.csv", "id,x,y\n")
        with pytest.raises(DataFormatError):
            read_patterns_csv(tmp_path / "p.csv", unit)

    def test_labels(self, tmp_path, unit):
        write(tmp_path / "p.csv", "group_id,x,y\ns1,0.1,0.1\n")
        write(tmp_path / "l.csv", "group_id,image,weight\ns1,im3,2.5\ns2,im4,1\n")
        assert read_labels_csv(tmp_path / "l.csv")["s1"] == {"image": "im3", "weight": 2.5}
        back = read_patterns_csv(tmp_path / "p.csv", unit, tmp_path / "l.csv")
        assert [p.group_id for p in back] == ["s1", "s2"]
        assert back[1].labels["image"] == "im4" and len(back[1]) == 0

    def test_text_uses_shortest_repr(self, unit):
        txt = patterns_csv_text([PointPattern([[0.1, 1 / 3]], unit, "g")])
        assert txt == "group_id,x,y\ng,0.1,0.3333333333333333\n"


class TestRaster:
    @pytest.mark.parametrize("encoding", ["csv", "float64-le"])
    @pytest.mark.parametrize("registration", ["node", "pixel"])
    def test_round_trip(self, tmp_path, rng, encoding, registration):
        f = CovariateField(rng.normal(size=(4, 7)), Window(0, 3, -1, 1), registration)
        write_raster(tmp_path / "r.json", f, encoding)
        g = read_raster(tmp_path / "r.json")
        np.testing.assert_array_equal(g.values, f.values)
        assert g.window == f.window and g.registration == registration

    def test_first_csv_line_is_y_min(self, tmp_path):
        write(tmp_path / "r.csv", "1,2\n3,4\n")
        write(tmp_path / "r.json", json.dumps({"window": [0, 1, 0, 1], "nx": 2, "ny": 2,
                                               "payload": "r.csv"}))
        f = read_raster(tmp_path / "r.json")
        assert f([[0.0, 0.0]])[0] == 1.0 and f([[1.0, 1.0]])[0] == 4.0

    def test_wrong_row_length(self, tmp_path):
        write(tmp_path / "r.csv", "1,2\n3\n")
        write(tmp_path / "r.json", json.dumps({"window": [0, 1, 0, 1], "nx": 2, "ny": 2,
                                               "payload": "r.csv"}))
        with pytest.raises(DataFormatError) as exc:
            read_raster(tmp_path / "r.json")
        assert exc.value.line == 2

    def test_short_binary_payload(self, tmp_path):
        (tmp_path / "r.f64").write_bytes(np.zeros(3).tobytes())
        write(tmp_path / "r.json", json.dumps({"window": [0, 1, 0, 1], "nx": 2, "ny": 2,
                                               "encoding": "float64-le", "payload": "r.f64"}))
        with pytest.raises(DataFormatError, match="4 doubles"):
            read_raster(tmp_path / "r.json")

    def test_missing_payload(self, tmp_path):
        write(tmp_path / "r.json", json.dumps({"window": [0, 1, 0, 1], "nx": 2, "ny": 2,
                                               "payload": "none.csv"}))
        with pytest.raises(DataFormatError):
            read_raster(tmp_path / "r.json")


def base_dir(tmp_path):
    w = Window.unit()
    write_patterns_csv(tmp_path / "patterns.csv",
                       [sample_homogeneous(w, 200.0, make_rng(1, i), f"g{i}") for i in range(2)])
    write_raster(tmp_path / "m.json", CovariateField.from_function(lambda x, y: x, w, 9, 9))
    return tmp_path


FIT = """seed = 5
out = "out"

[data]
window = [0.0, 1.0, 0.0, 1.0]
patterns = "patterns.csv"

[covariates.m]
raster = "m.json"

[[model.terms]]
name = "alpha"
intercept = true

[[model.terms]]
name = "beta"
covariate = "m"
scope = "shared"
"""


class TestConfig:
    def test_valid(self, tmp_path):
        d = base_dir(tmp_path)
        cfg = load_config(write(d / "c.toml", FIT), "fit")
        assert cfg.seed == 5 and cfg.out == (d / "out").resolve()
        assert cfg.covariates["m"]["raster"] == (d / "m.json").resolve()

    def test_seed_mandatory(self, tmp_path):
        d = base_dir(tmp_path)
        path = write(d / "c.toml", FIT.replace("seed = 5\n", ""))
        with pytest.raises(ValidationError, match="seed"):
            load_config(path, "fit")
        assert load_config(path, "fit", seed=9).seed == 9

    @pytest.mark.parametrize("edit, fragment", [
        (("seed = 5", "seed = 5\ncolour = 1"), "unknown key"),
        (("raster = ", "rastr = "), "unknown key"),
        (('"m.json"', '"missing.json"'), "does not exist"),
        (('covariate = "m"', 'covariate = "q"'), "undefined covariate"),
        (("seed = 5", "seed = -1"), "seed"),
        (("seed = 5", 'seed = "5"'), "integer"),
        (("window = [0.0, 1.0, 0.0, 1.0]", "window = [1.0, 0.0, 0.0, 1.0]"), "x_min < x_max"),
        (('patterns = "patterns.csv"\n', ""), "data.patterns"),
    ])
    def test_rejections(self, tmp_path, edit, fragment):
        d = base_dir(tmp_path)
        path = write(d / "c.toml", FIT.replace(*edit))
        with pytest.raises(ValidationError, match=fragment):
            load_config(path, "fit")

    def test_latent_needs_candidates(self, tmp_path):
        d = base_dir(tmp_path)
        txt = FIT + '\n[[model.terms]]\nname = "g"\nlatent = true\nscope = "shared"\n'
        with pytest.raises(ValidationError, match="gp"):
            load_config(write(d / "c.toml", txt), "fit")

    def test_diagnose_replicate_floor(self, tmp_path):
        d = base_dir(tmp_path)
        write(d / "fit.json", "{}")
        txt = FIT + '\n[fit]\nartifact = "fit.json"\n\n[diagnose]\nn_replicates = 19\n'
        with pytest.raises(ValidationError, match="n_replicates"):
            load_config(write(d / "c.toml", txt), "diagnose")

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(DataFormatError):
            load_config(tmp_path / "absent.toml", "fit")

    def test_toml_syntax_error(self, tmp_path):
        with pytest.raises(ValidationError):
            load_config(write(tmp_path / "c.toml", "seed = = 1\n"), "fit")


class TestCli:
    def test_fit_writes_artifact(self, tmp_path, capsys):
        d = base_dir(tmp_path)
        assert main(["fit", "--config", str(write(d / "c.toml", FIT))]) == 0
        fit = load_fit(d / "out" / "fit.json")
        assert set(fit.names) == {"alpha[g0]", "alpha[g1]", "beta"}
        assert "fitted 3 coefficients" in capsys.readouterr().out

    def test_exit_codes(self, tmp_path):
        d = base_dir(tmp_path)
        assert main(["fit", "--config", str(d / "absent.toml")]) == 4
        assert main(["fit", "--config", str(write(d / "c.toml", FIT.replace("seed = 5\n", "")))]) == 2
        write(d / "patterns.csv", "group_id,x,y\ng,0.5\n")
        assert main(["fit", "--config", str(write(d / "c.toml", FIT))]) == 4

    def test_malformed_row_message(self, tmp_path, capsys):
        d = base_dir(tmp_path)
        write(d / "patterns.csv", "group_id,x,y\ng,0.5,0.5\ng,x,0.5\n")
        assert main(["fit", "--config", str(write(d / "c.toml", FIT))]) != 0
        err = capsys.readouterr().err
        assert "patterns.csv:3:" in err

    def test_nonidentifiable_fit_exits_nonzero(self, tmp_path):
        d = base_dir(tmp_path)
        write(d / "patterns.csv", "group_id,x,y\n")
        write(d / "labels.csv", "group_id,k\ng,1\n")
        txt = FIT.replace('patterns = "patterns.csv"', 'patterns = "patterns.csv"\nlabels = "labels.csv"')
        assert main(["fit", "--config", str(write(d / "c.toml", txt))]) in (2, 3)

    def test_simulate_homogeneous_mean(self, tmp_path):
        d = base_dir(tmp_path)
        txt = ('seed = 3\nout = "sim"\n[data]\nwindow = [0.0, 2.0, 0.0, 0.5]\n'
               '[simulate]\nmode = "homogeneous"\nlambda0 = 50.0\nn_datasets = 400\n')
        assert main(["simulate", "--config", str(write(d / "s.toml", txt))]) == 0
        files = sorted((d / "sim").glob("simulated_*.csv"))
        assert len(files) == 400
        n = np.array([len(read_csv_points(f)) for f in files])
        assert abs(n.mean() - 50.0) < 4 * np.sqrt(50.0 / 400)

    def test_simulate_conditional_rows(self, tmp_path):
        d = base_dir(tmp_path)
        txt = ('seed = 3\nout = "sim"\n[data]\nwindow = [0.0, 1.0, 0.0, 1.0]\n'
               '[covariates.m]\nraster = "m.json"\n'
               '[simulate]\nmode = "conditional"\nn = 37\nn_datasets = 3\n'
               'terms = [{ covariate = "m", coef = 2.0 }]\n')
        assert main(["simulate", "--config", str(write(d / "s.toml", txt))]) == 0
        for f in sorted((d / "sim").glob("simulated_*.csv")):
            assert len(read_csv_points(f)) == 37

    def test_evaluate_constant_saliency(self, tmp_path):
        d = base_dir(tmp_path)
        write_raster(d / "flat.json", CovariateField.constant(1.0, Window.unit(), 5, 5))
        txt = ('seed = 3\nout = "ev"\n[data]\nwindow = [0.0, 1.0, 0.0, 1.0]\n'
               'patterns = "patterns.csv"\n[evaluate]\nsaliency = "flat.json"\nn_controls = 500\n')
        assert main(["evaluate", "--config", str(write(d / "e.toml", txt))]) == 0
        report = json.loads((d / "ev" / "report.json").read_text())
        assert report["auc"] == 0.5

    def test_evaluate_window_mismatch(self, tmp_path, capsys):
        d = base_dir(tmp_path)
        write_raster(d / "wide.json", CovariateField.constant(1.0, Window(0, 2, 0, 1), 5, 5))
        txt = ('seed = 3\nout = "ev"\n[data]\nwindow = [0.0, 1.0, 0.0, 1.0]\n'
               'patterns = "patterns.csv"\n[evaluate]\nsaliency = "wide.json"\n')
        assert main(["evaluate", "--config", str(write(d / "e.toml", txt))]) == 2
        assert "window mismatch" in capsys.readouterr().err

    def test_byte_identical_reruns(self, tmp_path):
        d = base_dir(tmp_path)
        cfg = str(write(d / "c.toml", FIT))
        outs = []
        for k in range(2):
            assert main(["fit", "--config", cfg, "--out", str(d / f"o{k}")]) == 0
            outs.append((d / f"o{k}" / "fit.json").read_bytes())
        assert outs[0] == outs[1]

    def test_seed_override_changes_simulation(self, tmp_path):
        d = base_dir(tmp_path)
        txt = ('seed = 3\n[data]\nwindow = [0.0, 1.0, 0.0, 1.0]\n'
               '[simulate]\nmode = "homogeneous"\nlambda0 = 30.0\n')
        cfg = str(write(d / "s.toml", txt))
        main(["simulate", "--config", cfg, "--out", str(d / "a")])
        main(["simulate", "--config", cfg, "--out", str(d / "b"), "--seed", "4"])
        assert (d / "a" / "simulated_0000.csv").read_bytes() != (d / "b" / "simulated_0000.csv").read_bytes()

    def test_scenario_list(self, capsys):
        assert main(["scenario", "list"]) == 0
        assert capsys.readouterr().out.split() == ["center-bias", "saliency", "toy", "two-level"]

    def test_unknown_scenario(self, tmp_path):
        assert main(["scenario", "nope", "--out", str(tmp_path)]) == 2
