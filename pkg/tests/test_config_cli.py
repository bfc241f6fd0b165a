import csv
import json

import numpy as np
import pytest

from slogse import cli
from slogse.config import ConfigError, load_config, load_noise, parse_config
from slogse.grid import Field, make_grid, write_field
from slogse.nonlinearity import energy, entropy_F, luxembourg_norm
from slogse.grid import h1_norm, l2_norm
from slogse.noise import read_path
from slogse.solver import NumericalAbort, initial_field

SMALL = """
[grid]
d = 1
n = 64
ell = 20
[solver]
eps = 0.01
lambda = {lam}
dt = 0.002
T = 0.2
seed = 3
samples = 5
[noise]
kind = {noise}
atoms = 0.5:3; -0.8:2
[sweep]
paths = 2
eps_list = 0.5, 0.25, 0.125, 0.0625
[output]
plots = {plots}
states = true
"""


def write_cfg(tmp_path, name="run.ini", lam=1.0, noise="atomic", plots="false", text=None):
    path = tmp_path / name
    path.write_text(text if text is not None else SMALL.format(lam=lam, noise=noise, plots=plots))
    return path


def files(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != "manifest.json"}


class TestConfig:
    def test_loads(self, tmp_path):
        cfg = load_config(write_cfg(tmp_path))
        assert cfg.solver.eps == 0.01
        assert cfg.solver.sample_times == pytest.approx((0, 0.05, 0.1, 0.15, 0.2))
        assert cfg.n_paths == 2
        assert cfg.radius == 20 / 8
        assert len(cfg.solver.spec.atoms) == 2

    def test_unknown_key_line(self):
        with pytest.raises(ConfigError, match=r"x\.ini:3: unknown key 'bogus'"):
            parse_config("[grid]\nd = 1\nbogus = 2\n", "x.ini")

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match=":1: unknown section"):
            parse_config("[nope]\n")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config("[grid]\nd = 1\nd = 2\n")

    def test_missing_key_named(self, tmp_path):
        text = SMALL.format(lam=1, noise="none", plots="false").replace("eps = 0.01\n", "")
        with pytest.raises(ConfigError, match="'eps'"):
            load_config(write_cfg(tmp_path, text=text))

    def test_eps_out_of_range(self, tmp_path):
        text = SMALL.format(lam=1, noise="none", plots="false").replace("eps = 0.01", "eps = 1.5")
        with pytest.raises(ConfigError, match=r"run\.ini:7: .*\(0, 1\)"):
            load_config(write_cfg(tmp_path, text=text))

    def test_grid_size_checked(self, tmp_path):
        text = SMALL.format(lam=1, noise="none", plots="false").replace("n = 64", "n = 60")
        with pytest.raises(ConfigError, match="power of two"):
            load_config(write_cfg(tmp_path, text=text))

    def test_bad_atom(self, tmp_path):
        text = SMALL.format(lam=1, noise="atomic", plots="false").replace("0.5:3", "0.5")
        with pytest.raises(ConfigError, match="atoms"):
            load_config(write_cfg(tmp_path, text=text))

    def test_initial_file(self, tmp_path):
        grid = make_grid(1, 64, 20)
        u = initial_field(grid, "sech", amp=0.7)
        write_field(tmp_path / "u0.cfld", u)
        text = SMALL.format(lam=1, noise="none", plots="false") + "[initial]\nfile = u0.cfld\n"
        cfg = load_config(write_cfg(tmp_path, text=text))
        assert np.array_equal(cfg.u0.values, u.values)

    def test_noise_horizon(self, tmp_path):
        spec, T = load_noise(write_cfg(tmp_path))
        assert T == 0.2 and spec.kind == "atomic"


class TestSimulate:
    def test_outputs(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, plots="true")
        out = tmp_path / "o"
        assert cli.main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
        names = {p.name for p in out.iterdir()}
        assert {"diagnostics.csv", "noise.npath", "diagnostics.png", "manifest.json"} <= names
        assert sum(n.startswith("state_t") for n in names) == 5
        rows = list(csv.DictReader(open(out / "diagnostics.csv")))
        mass = np.array([float(r["mass"]) for r in rows])
        assert np.ptp(mass) / mass[0] < 1e-12
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 3 and manifest["exit_code"] == 0
        assert "mass_drift" in capsys.readouterr().out

    def test_seed_override_and_repeat(self, tmp_path):
        cfg = write_cfg(tmp_path)
        runs = []
        for name in ("a", "b", "c"):
            seed = "3" if name != "c" else "4"
            cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path / name),
                      "--seed", seed, "--quiet"])
            runs.append(files(tmp_path / name))
        assert runs[0] == runs[1]
        assert runs[0]["noise.npath"] != runs[2]["noise.npath"]
        assert read_path(tmp_path / "a" / "noise.npath").seed == 3

    def test_config_error_exit(self, tmp_path, capsys):
        text = SMALL.format(lam=1, noise="none", plots="false").replace("eps = 0.01\n", "")
        code = cli.main(["simulate", "--config", str(write_cfg(tmp_path, text=text)),
                         "--out", str(tmp_path / "o")])
        assert code == 2
        assert "'eps'" in capsys.readouterr().err

    def test_numerical_abort_exit(self, tmp_path, monkeypatch, capsys):
        def boom(*_):
            raise NumericalAbort(0.125)

        monkeypatch.setattr(cli, "run", boom)
        code = cli.main(["simulate", "--config", str(write_cfg(tmp_path)),
                         "--out", str(tmp_path / "o")])
        assert code == 3
        assert "0.125" in capsys.readouterr().err

    def test_real_nan_aborts(self, tmp_path, capsys):
        # an absurd coupling overflows the phase
        text = SMALL.format(lam=1e308, noise="none", plots="false")
        code = cli.main(["simulate", "--config", str(write_cfg(tmp_path, text=text)),
                         "--out", str(tmp_path / "o"), "--quiet"])
        assert code == 3

    def test_bad_seed(self, tmp_path):
        assert cli.main(["simulate", "--config", str(write_cfg(tmp_path)), "--seed", "-1",
                         "--out", str(tmp_path / "o")]) == 2


class TestConverge:
    def test_runs_and_repeats(self, tmp_path):
        cfg = write_cfg(tmp_path, plots="true")
        argv = ["converge", "--config", str(cfg), "--quiet"]
        assert cli.main(argv + ["--out", str(tmp_path / "a")]) == 0
        assert cli.main(argv + ["--out", str(tmp_path / "b")]) == 0
        a, b = files(tmp_path / "a"), files(tmp_path / "b")
        assert {"sweep.csv", "sweep_eps.csv", "sweep.png"} <= set(a)
        assert a["sweep.csv"] == b["sweep.csv"] and a["sweep_eps.csv"] == b["sweep_eps.csv"]
        assert b"paths=2" in a["sweep.csv"]

    @pytest.mark.parametrize("eps", ["0.5", "0.5,0.25,0.3,0.1", "0.5,0.25,0.125,1.0", "a,b"])
    def test_bad_eps_list(self, tmp_path, eps):
        code = cli.main(["converge", "--config", str(write_cfg(tmp_path)), "--eps-list", eps,
                         "--out", str(tmp_path / "o")])
        assert code == 2

    def test_bad_radius(self, tmp_path):
        code = cli.main(["converge", "--config", str(write_cfg(tmp_path)), "--radius", "6",
                         "--out", str(tmp_path / "o")])
        assert code == 2


class TestProps:
    def test_single(self, tmp_path, capsys):
        out = tmp_path / "p"
        assert cli.main(["props", "--lemma", "a", "--samples", "100000", "--out", str(out)]) == 0
        rows = dict(csv.reader(open(out / "scan_a.csv")))
        assert rows["violations"] == "0"
        assert "violations=0" in capsys.readouterr().out

    def test_repeat_identical(self, tmp_path):
        for name in ("a", "b"):
            cli.main(["props", "--lemma", "lip_phi", "--samples", "100000", "--seed", "8",
                      "--quiet", "--out", str(tmp_path / name)])
        assert files(tmp_path / "a") == files(tmp_path / "b")

    def test_unknown_lemma(self, tmp_path, capsys):
        assert cli.main(["props", "--lemma", "zz", "--out", str(tmp_path / "o")]) == 2
        assert "unknown lemma" in capsys.readouterr().err

    def test_too_few_samples(self, tmp_path):
        assert cli.main(["props", "--lemma", "a", "--samples", "10", "--out", str(tmp_path)]) == 2

    def test_exact_violation_exit(self, tmp_path, monkeypatch):
        real = cli.inequality_scan
        monkeypatch.setattr(cli, "inequality_scan",
                            lambda lemma, n, seed: real(lemma, n, seed, slack=-0.9))
        assert cli.main(["props", "--lemma", "b", "--samples", "100000", "--quiet",
                         "--out", str(tmp_path)]) == 1


class TestNorms:
    def parse(self, text):
        return {k: float(v) for k, v in (line.split() for line in text.strip().splitlines())}

    def test_zero_field(self, tmp_path, capsys):
        write_field(tmp_path / "z.cfld", Field.zeros(make_grid(1, 32, 10)))
        assert cli.main(["norms", str(tmp_path / "z.cfld")]) == 0
        vals = self.parse(capsys.readouterr().out)
        assert set(vals) == {"L2", "H1", "V", "W", "entropy", "energy"}
        assert all(v == 0 for v in vals.values())

    def test_matches_library(self, tmp_path, capsys):
        u = initial_field(make_grid(2, 32, 16), "modulated", amp=1.3)
        write_field(tmp_path / "g.cfld", u)
        assert cli.main(["norms", str(tmp_path / "g.cfld"), "--lam", "-0.5"]) == 0
        vals = self.parse(capsys.readouterr().out)
        assert vals["L2"] == l2_norm(u)
        assert vals["H1"] == h1_norm(u)
        assert vals["V"] == luxembourg_norm(u)
        assert vals["W"] == h1_norm(u) + luxembourg_norm(u)
        assert vals["entropy"] == entropy_F(u)
        assert vals["energy"] == energy(u, -0.5)

    def test_truncated(self, tmp_path, capsys):
        write_field(tmp_path / "g.cfld", initial_field(make_grid(1, 32, 10)))
        data = (tmp_path / "g.cfld").read_bytes()
        (tmp_path / "g.cfld").write_bytes(data[:-10])
        assert cli.main(["norms", str(tmp_path / "g.cfld")]) == 2
        assert capsys.readouterr().err

    def test_missing(self, tmp_path):
        assert cli.main(["norms", str(tmp_path / "none.cfld")]) == 2


class TestNoise:
    def test_moments(self, tmp_path):
        out = tmp_path / "n"
        assert cli.main(["noise", "--config", str(write_cfg(tmp_path)), "--quiet",
                         "--out", str(out)]) == 0
        rows = list(csv.DictReader(open(out / "moments.csv")))
        assert [r["quantity"] for r in rows] == ["count", "sum_sq_marks"]
        assert all(r["within_3sigma"] == "1" for r in rows)
        assert float(rows[0]["expected"]) == pytest.approx(5 * 0.2)

    def test_empty_measure(self, tmp_path):
        out = tmp_path / "n"
        assert cli.main(["noise", "--config", str(write_cfg(tmp_path, noise="none")),
                         "--quiet", "--out", str(out)]) == 0
        assert len(read_path(out / "path.npath")) == 0

    def test_repeat_identical(self, tmp_path):
        cfg = write_cfg(tmp_path)
        for name in ("a", "b"):
            cli.main(["noise", "--config", str(cfg), "--seed", "12", "--quiet",
                      "--out", str(tmp_path / name)])
        assert files(tmp_path / "a") == files(tmp_path / "b")
