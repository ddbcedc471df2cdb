import json
import math
import subprocess
import sys

import numpy as np
import pytest

from oracles import eps2_grid, orthonormal_s2_codes
from utlearn import __version__
from utlearn.cli import main
from utlearn.experiments import (
    ExperimentConfig,
    parse_seeds,
    run_analyze,
    run_convergence,
    run_experiment,
    run_initializations,
    run_lemma_bound,
    run_qsweep,
)
from utlearn.fileio import CsvTable, read_matrix, save_model
from utlearn.genmodel import synthesize

SMALL = dict(n=12, bigN=400, s=[2], seeds=[0, 1])


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert (cfg.n, cfg.bigN, cfg.s, cfg.max_iter) == (50, 10000, (5, 10), 200)
        assert cfg.bigN_list == (2000, 5000, 10000, 20000, 50000, 100000)
        assert cfg.qsweep_s == (3, 5, 10)

    def test_from_mapping_aliases(self):
        cfg = ExperimentConfig.from_mapping({"N": "300", "max-iter": 5, "seeds": "0-2,7", "dist": "signs",
                                             "normalize": "yes", "s": "2,3", "n": 10})
        assert cfg.bigN == 300 and cfg.max_iter == 5 and cfg.seeds == (0, 1, 2, 7)
        assert cfg.dists == ("signs",) and cfg.normalize is True and cfg.s == (2, 3)

    @pytest.mark.parametrize("bad", [
        {"experiment": "nope"}, {"n": 0}, {"s": [0]}, {"s": [60]}, {"seeds": []},
        {"dists": ["laplace"]}, {"inits": ["ones"]}, {"max_iter": 0}, {"obj_tol": -1.0},
        {"eps_fraction": 0.7}, {"eps_list": [-1.0]}, {"experiment": "qsweep", "s_over_n": [0.001]}, {"s_over_n": [1.5]}, {"bigN_list": [0]},
        {"experiment": "lemma", "noise_sigma": 0.1}, {"jobs": 0}, {"normalize": "maybe"},
    ])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            ExperimentConfig(**bad)

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown config key"):
            ExperimentConfig.from_mapping({"colour": 1})

    def test_parse_seeds(self):
        assert parse_seeds("3") == [3]
        assert parse_seeds("0-2, 5") == [0, 1, 2, 5]
        with pytest.raises(ValueError):
            parse_seeds("4-1")
        with pytest.raises(ValueError):
            parse_seeds(",")


def _provenance(table):
    cfg_line = next(c for c in table.comments if c.startswith("config "))
    return json.loads(cfg_line[len("config "):])


class TestDrivers:
    def test_convergence(self):
        cfg = ExperimentConfig(experiment="convergence", max_iter=40, obj_tol=0, **SMALL)
        t = run_convergence(cfg)
        assert t.header[:8] == ["dist", "s", "seed", "iteration", "werr", "zerr", "objective", "support_recovery"]
        assert len(t.rows) == 80
        assert not t.failed_checks
        runs = [c for c in t.comments if c.startswith("run ")]
        assert len(runs) == 2 and all("q_thm1=" in r and "q_n=" in r and "q_limit=" in r for r in runs)
        assert _provenance(t)["seeds"] == [0, 1]
        assert f"utlearn {__version__}" in t.comments and "normalized False" in t.comments

    def test_reproducible_and_parallel(self):
        cfg = ExperimentConfig(experiment="convergence", max_iter=10, obj_tol=0, **SMALL)
        a = run_convergence(cfg)
        b = run_convergence(cfg)
        c = run_convergence(ExperimentConfig(experiment="convergence", max_iter=10, obj_tol=0, jobs=2, **SMALL))
        assert a.rows == b.rows == c.rows

    def test_inits(self):
        cfg = ExperimentConfig(experiment="inits", max_iter=200, **SMALL)
        t = run_initializations(cfg)
        labels = {r["init_label"] for r in t.records()}
        assert labels == {"eps", "rand", "id", "dct", "unif", "zero"}
        assert t.header == ["dist", "s", "seed", "init_label", "iteration", "objective",
                            "support_recovery", "aligned_werr"]
        eps_first = [r for r in t.records() if r["init_label"] == "eps" and r["iteration"] == 1]
        assert all(r["support_recovery"] == 1.0 for r in eps_first)

    def test_inits_failing_check(self):
        t = run_initializations(ExperimentConfig(experiment="inits", max_iter=2, inits=["rand"], **SMALL))
        assert "support_recovered" in t.failed_checks

    def test_qsweep(self):
        cfg = ExperimentConfig(experiment="qsweep", n=20, bigN_list=[500, 5000], s_over_n=[0.1],
                               dists=["gaussian", "signs"], seeds=[0, 1])
        t = run_qsweep(cfg)
        recs = t.records()
        assert len(recs) == 2 * 2 * 3
        means = [r for r in recs if r["seed"] == "mean"]
        assert len(means) == 4
        first = [r for r in recs if r["dist"] == "gaussian" and r["N"] == 500]
        assert means[0]["kappa"] == pytest.approx(np.mean([r["kappa"] for r in first[:2]]))
        assert all(r["q_limit"] == pytest.approx(math.sqrt(1 / 19)) for r in recs)

    def test_lemma(self):
        cfg = ExperimentConfig(experiment="lemma", n=10, bigN=300, s=[2], seeds=[0, 1, 2],
                               eps_list=[0.0, 1e-6, 0.5, 5.0], dists=["gaussian", "signs"])
        t = run_lemma_bound(cfg)
        assert not t.failed_checks
        recs = t.records()
        assert len(recs) == 2 * 3 * 4
        zero = [r for r in recs if r["eps"] == 0.0]
        assert all(r["z_err"] <= 1e-12 and r["ratio"] == 0 for r in zero)
        tiny = [r for r in recs if r["eps"] == 1e-6]
        assert all(r["ratio"] <= 1 for r in tiny)
        assert all(r["ratio"] <= 2 + 1e-9 for r in recs)
        assert "normalized True" in t.comments

    def test_analyze_generated(self):
        t = run_analyze(ExperimentConfig(experiment="analyze", n=10, bigN=2000, s=[2, 3]))
        recs = t.records()
        assert [r["s"] for r in recs] == [2, 3]
        assert isinstance(recs[0]["s2_holds"], bool) and recs[1]["s2_holds"] == ""


class TestAnalyzeModels:
    cfg = ExperimentConfig(experiment="analyze")

    def test_q_zero_identity(self):
        rec = run_analyze(self.cfg, synthesize(np.eye(4), np.eye(4), s=1)).records()[0]
        assert rec["radius_q"] == 0.0
        assert rec["eps2"] == pytest.approx(eps2_grid(0.0)[0], abs=1e-4)
        assert rec["eps2"] == pytest.approx(0.152, abs=5e-4)
        assert rec["eps1"] == 0.5 and rec["eps"] == pytest.approx(rec["eps2"])

    def test_rank_deficient(self):
        z = np.array([[1.0, -2.0, 0.5], [0.0, 0.0, 0.0]])
        rec = run_analyze(self.cfg, synthesize(np.eye(2), z, s=1)).records()[0]
        assert rec["kappa"] == math.inf and rec["a3_holds"] is False
        assert math.isnan(rec["eps2"])

    def test_s2_corollary_reported(self):
        z = orthonormal_s2_codes(6, np.random.default_rng(0))
        rec = run_analyze(self.cfg, synthesize(np.eye(6), z, s=2)).records()[0]
        assert rec["s2_holds"] is True and rec["s2_q"] < 1
        assert rec["s2_q"] == pytest.approx(rec["q_thm1"], abs=1e-10)


class TestCli:
    def test_gen_learn_analyze(self, tmp_path, capsys):
        mdir = tmp_path / "model"
        assert main(["gen", "--n", "10", "--N", "200", "--s", "2", "--seed", "4", "--out", str(mdir)]) == 0
        assert (mdir / "wstar.utlm").exists() and (mdir / "zstar.utlm").exists()
        rdir = tmp_path / "run"
        assert main(["learn", "--model", str(mdir), "--init", "dct", "--max-iter", "300", "--out", str(rdir)]) == 0
        t = CsvTable.from_csv((rdir / "trace.csv").read_text())
        assert t.header[0] == "iteration" and len(t.rows) >= 1
        w = read_matrix(rdir / "w_final.utlm")
        assert np.allclose(w.T @ w, np.eye(10), atol=1e-9)
        capsys.readouterr()
        assert main(["analyze", "--model", str(mdir)]) == 0
        out = capsys.readouterr().out
        assert "kappa" in out and out.startswith("# utlearn")

    def test_experiment_to_csv(self, tmp_path):
        out = tmp_path / "c.csv"
        assert main(["experiment", "convergence", "--n", "12", "--N", "400", "--s", "2",
                     "--max-iter", "20", "--obj-tol", "0", "--out", str(out)]) == 0
        t = CsvTable.from_csv(out.read_text())
        assert len(t.rows) == 20

    def test_output_directory(self, tmp_path):
        assert main(["experiment", "lemma", "--n", "8", "--N", "100", "--s", "2", "--seeds", "0-1",
                     "--out", str(tmp_path / "d")]) == 0
        assert (tmp_path / "d" / "lemma.csv").exists()

    def test_config_file_and_override(self, tmp_path):
        cfgfile = tmp_path / "c.yaml"
        cfgfile.write_text("n: 8\nN: 100\ns: [2]\nseeds: 0-2\neps_list: [0.1]\n")
        out = tmp_path / "l.csv"
        assert main(["experiment", "lemma", "--config", str(cfgfile), "--seeds", "5", "--out", str(out)]) == 0
        t = CsvTable.from_csv(out.read_text())
        assert [r["seed"] for r in t.records()] == ["5"]
        assert _provenance(t)["n"] == 8

    def test_failed_check_exit(self, tmp_path, capsys):
        code = main(["experiment", "inits", "--n", "12", "--N", "400", "--s", "2", "--init", "rand",
                     "--max-iter", "2", "--out", str(tmp_path / "i.csv")])
        assert code == 1
        assert "check failed: support_recovered" in capsys.readouterr().err

    def test_invalid_input_exit(self, tmp_path, capsys):
        assert main(["experiment", "lemma", "--s", "99", "--out", str(tmp_path / "x.csv")]) == 2
        bad = tmp_path / "bad.yaml"
        bad.write_text("n: 8\nnested:\n  a: 1\n")
        assert main(["experiment", "lemma", "--config", str(bad)]) == 2
        assert main(["analyze", "--model", str(tmp_path / "missing")]) == 2
        assert "error" in capsys.readouterr().err

    def test_gen_needs_out(self):
        assert main(["gen", "--n", "4", "--N", "10", "--s", "1"]) == 2

    def test_model_dir_with_file_init(self, tmp_path):
        m = synthesize(np.eye(3), np.array([[1.0, 0, 0, 2.0], [0, 1.0, 0, 0], [0, 0, -1.0, 0]]), s=1)
        save_model(m, tmp_path / "m")
        from utlearn.fileio import write_matrix

        write_matrix(tmp_path / "w0.utlm", np.eye(3))
        assert main(["learn", "--model", str(tmp_path / "m"), "--init", f"file:{tmp_path / 'w0.utlm'}",
                     "--out", str(tmp_path / "r")]) == 0

    def test_module_entry_point(self):
        out = subprocess.run([sys.executable, "-m", "utlearn", "--help"], capture_output=True, text=True)
        assert out.returncode == 0 and "experiment" in out.stdout


def test_run_experiment_dispatch():
    cfg = ExperimentConfig(experiment="analyze", n=6, bigN=50, s=[1])
    assert run_experiment(cfg).header[0] == "dist"
