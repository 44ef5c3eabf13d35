"""Command-line interface: outputs, manifests, reruns, exit codes."""

import json

import numpy as np
import pytest
from conftest import DATA

from smckit.cli import main
from smckit.filters import bootstrap_filter
from smckit.kalman import extract_gaussian, kalman_filter

LG = [
    "--model", str(DATA / "lg.mod"),
    "--data", str(DATA / "lg.csv"),
    "--latent", "x",
]
SV = [
    "--model", str(DATA / "sv.mod"),
    "--data", str(DATA / "sv.csv"),
    "--constants", str(DATA / "sv_constants.json"),
    "--inits", str(DATA / "sv_inits.json"),
    "--latent", "x",
]
CONJ = [
    "--model", str(DATA / "conj.mod"),
    "--data", str(DATA / "conj.csv"),
    "--latent", "x",
]


def read_rows(path):
    header, *rows = path.read_text().strip().splitlines()
    return header.split(","), [r.split(",") for r in rows]


def test_bootstrap_run_matches_library(tmp_path, lg_graph):
    out = tmp_path / "run"
    code = main(
        ["run", *LG, "--filter", "bootstrap", "--particles", "500",
         "--seed", "42", "--out", str(out)]
    )
    assert code == 0
    header, rows = read_rows(out / "filter_summary.csv")
    assert header == ["t", "ESS", "mean", "q2.5", "q50", "q97.5"]
    assert len(rows) == 10
    res = bootstrap_filter(lg_graph, "x", n_particles=500, seed=42)
    # 17 significant digits round-trip exactly
    assert [float(r[2]) for r in rows] == list(res.means)
    manifest = json.loads((out / "run.json").read_text())
    assert manifest["command"] == "run"
    assert manifest["tool"] == "smckit"
    assert manifest["loglik"] == res.loglik
    assert manifest["config"]["filter"] == "bootstrap"
    assert manifest["config"]["particles"] == 500
    assert manifest["outputs"] == {"filter_summary": "filter_summary.csv"}


def test_kalman_run_writes_exact_summary(tmp_path, lg_graph, lg_y):
    out = tmp_path / "kal"
    assert main(["run", *LG, "--filter", "kalman", "--out", str(out)]) == 0
    header, rows = read_rows(out / "filter_summary.csv")
    assert header == ["t", "mean", "sd", "gain"]
    ssm, _ = extract_gaussian(lg_graph, "x")
    exact = kalman_filter(ssm, lg_y)
    assert [float(r[1]) for r in rows] == list(exact.means)
    assert [float(r[3]) for r in rows] == list(exact.gains)
    manifest = json.loads((out / "run.json").read_text())
    assert manifest["loglik"] == exact.loglik


@pytest.mark.filterwarnings("ignore:init for deterministic")
def test_liu_west_run_writes_histograms(tmp_path):
    out = tmp_path / "lw"
    code = main(
        ["run", *SV, "--filter", "liu_west", "--particles", "400",
         "--target", "betaSquaredInv,phiStar", "--target", "sigmaSquaredInv",
         "--seed", "1", "--out", str(out)]
    )
    assert code == 0
    manifest = json.loads((out / "run.json").read_text())
    assert manifest["loglik"] is None
    for name in ("betaSquaredInv", "phiStar", "sigmaSquaredInv"):
        assert manifest["outputs"][f"hist_{name}"] == f"hist_{name}.csv"
        header, rows = read_rows(out / f"hist_{name}.csv")
        assert header == ["bin_lo", "bin_hi", "density"]
        assert len(rows) == 50


def test_save_all_writes_sample_dumps(tmp_path):
    out = tmp_path / "dump"
    code = main(
        ["run", *LG, "--filter", "bootstrap", "--particles", "50",
         "--save-all", "--out", str(out)]
    )
    assert code == 0
    header, rows = read_rows(out / "samples_w.csv")
    assert header == ["t", "particle", "value", "weight"]
    assert len(rows) == 10 * 50
    header, rows = read_rows(out / "samples_ew.csv")
    assert header == ["t", "particle", "value"]
    assert len(rows) == 10 * 50
    manifest = json.loads((out / "run.json").read_text())
    assert manifest["outputs"]["samples_w"] == "samples_w.csv"
    assert manifest["outputs"]["samples_ew"] == "samples_ew.csv"


def test_ensemble_run_has_unweighted_outputs(tmp_path):
    out = tmp_path / "enkf"
    code = main(
        ["run", *LG, "--filter", "enkf", "--particles", "200",
         "--save-all", "--out", str(out)]
    )
    assert code == 0
    header, rows = read_rows(out / "filter_summary.csv")
    assert header == ["t", "mean", "sd"]
    assert len(rows) == 10
    header, rows = read_rows(out / "samples.csv")
    assert header == ["t", "particle", "value"]
    assert len(rows) == 10 * 200


def test_pmmh_chain_thinning_and_manifest(tmp_path):
    out = tmp_path / "pm"
    code = main(
        ["pmmh", *CONJ, "--target", "mu", "--iterations", "200",
         "--thin", "20", "--inner", "kalman", "--seed", "5",
         "--out", str(out)]
    )
    assert code == 0
    header, rows = read_rows(out / "chain.csv")
    assert header == ["iteration", "mu", "loglik", "accepted"]
    assert [int(r[0]) for r in rows] == list(range(20, 201, 20))
    assert all(r[3] in ("0", "1") for r in rows)
    manifest = json.loads((out / "run.json").read_text())
    assert 0.0 <= manifest["acceptance_rate"] <= 1.0
    assert manifest["config"]["iterations"] == 200
    # exact likelihood has no particle cloud to draw trajectories from
    assert not (out / "trajectories.csv").exists()


def test_pmmh_trajectory_dump(tmp_path):
    out = tmp_path / "traj"
    code = main(
        ["pmmh", "--model", str(DATA / "lgA.mod"),
         "--data", str(DATA / "lgA.csv"), "--latent", "x",
         "--target", "a", "--iterations", "20", "--inner", "bootstrap",
         "--inner-particles", "60", "--save-trajectories",
         "--out", str(out)]
    )
    assert code == 0
    header, rows = read_rows(out / "trajectories.csv")
    assert header == ["iteration", "t", "value"]
    assert len(rows) == 20 * 50
    manifest = json.loads((out / "run.json").read_text())
    assert manifest["outputs"]["trajectories"] == "trajectories.csv"


def test_rerun_reproduces_run_byte_for_byte(tmp_path):
    first = tmp_path / "first"
    again = tmp_path / "again"
    argv = ["run", *LG, "--filter", "bootstrap", "--particles", "400",
            "--save-all", "--seed", "9", "--out", str(first)]
    assert main(argv) == 0
    assert main(["rerun", str(first / "run.json"), "--out", str(again)]) == 0
    names = sorted(p.name for p in first.iterdir())
    assert names == sorted(p.name for p in again.iterdir())
    for name in names:
        assert (first / name).read_bytes() == (again / name).read_bytes()


def test_pmmh_rerun_reproduces_chain(tmp_path):
    first = tmp_path / "first"
    again = tmp_path / "again"
    argv = ["pmmh", *CONJ, "--target", "mu", "--iterations", "100",
            "--inner", "kalman", "--seed", "3", "--out", str(first)]
    assert main(argv) == 0
    assert main(["rerun", str(first / "run.json"), "--out", str(again)]) == 0
    assert (first / "chain.csv").read_bytes() == (again / "chain.csv").read_bytes()
    assert (first / "run.json").read_bytes() == (again / "run.json").read_bytes()


def test_thread_count_leaves_outputs_unchanged(tmp_path):
    outs = []
    for threads in ("1", "4"):
        out = tmp_path / f"t{threads}"
        argv = ["run", *LG, "--filter", "bootstrap", "--particles", "20000",
                "--seed", "2", "--threads", threads, "--out", str(out)]
        assert main(argv) == 0
        outs.append((out / "filter_summary.csv").read_bytes())
    assert outs[0] == outs[1]


def test_prop_cov_matrix_file(tmp_path):
    prop = tmp_path / "prop.json"
    prop.write_text("[[0.04]]\n")
    out = tmp_path / "pm"
    code = main(
        ["pmmh", *CONJ, "--target", "mu", "--iterations", "50",
         "--inner", "kalman", "--prop-cov", str(prop), "--out", str(out)]
    )
    assert code == 0
    manifest = json.loads((out / "run.json").read_text())
    assert manifest["config"]["prop_cov"] == [[0.04]]


@pytest.mark.filterwarnings("ignore:init for deterministic")
def test_nonlinear_model_is_rejected_with_report(tmp_path, capsys):
    out = tmp_path / "bad"
    code = main(["run", *SV, "--filter", "kalman", "--out", str(out)])
    assert code == 2
    err = capsys.readouterr().err
    assert "not linear-Gaussian" in err
    assert "y[1]" in err


def test_missing_required_options_exit_2(tmp_path, capsys):
    out = tmp_path / "o"
    code = main(
        ["run", *LG, "--filter", "bootstrap", "--out", str(out)]
    )
    assert code == 2
    assert "--particles" in capsys.readouterr().err
    code = main(
        ["run", *LG, "--filter", "liu_west", "--particles", "50",
         "--out", str(out)]
    )
    assert code == 2
    assert "--target" in capsys.readouterr().err


def test_missing_model_file_exits_2(tmp_path, capsys):
    code = main(
        ["run", "--model", str(tmp_path / "nope.mod"),
         "--data", str(DATA / "lg.csv"), "--latent", "x",
         "--filter", "bootstrap", "--particles", "10",
         "--out", str(tmp_path / "o")]
    )
    assert code == 2


def test_degenerate_weights_exit_3(tmp_path, capsys):
    model = tmp_path / "far.mod"
    model.write_text(
        "x[1] ~ dnorm(0, var = 1)\ny[1] ~ dunif(x[1] + 10, x[1] + 11)\n"
    )
    data = tmp_path / "far.csv"
    data.write_text("y\n0.0\n")
    code = main(
        ["run", "--model", str(model), "--data", str(data), "--latent", "x",
         "--filter", "bootstrap", "--particles", "30",
         "--out", str(tmp_path / "o")]
    )
    assert code == 3
    assert "t=1" in capsys.readouterr().err


def test_bad_data_files_exit_2(tmp_path, capsys):
    model = tmp_path / "m.mod"
    model.write_text(
        "x[1] ~ dnorm(0, var = 1)\n"
        "y[1] ~ dnorm(x[1], var = 1)\n"
        "for(t in 2:3){\n"
        "  x[t] ~ dnorm(x[t-1], var = 1)\n"
        "  y[t] ~ dnorm(x[t], var = 1)\n"
        "}\n"
    )
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("y\n0.5\n0.1,0.2\n0.7\n")
    code = main(
        ["run", "--model", str(model), "--data", str(ragged), "--latent", "x",
         "--filter", "bootstrap", "--particles", "10",
         "--out", str(tmp_path / "o1")]
    )
    assert code == 2
    assert "expected 1 cells" in capsys.readouterr().err

    gappy = tmp_path / "gappy.csv"
    gappy.write_text("y\n0.5\n \n0.7\n")
    code = main(
        ["run", "--model", str(model), "--data", str(gappy), "--latent", "x",
         "--filter", "bootstrap", "--particles", "10",
         "--out", str(tmp_path / "o2")]
    )
    assert code == 2


def test_bad_proposal_covariance_exits_2(tmp_path, capsys):
    prop = tmp_path / "prop.json"
    prop.write_text("[[-1.0]]\n")
    code = main(
        ["pmmh", *CONJ, "--target", "mu", "--iterations", "5",
         "--inner", "kalman", "--prop-cov", str(prop),
         "--out", str(tmp_path / "o")]
    )
    assert code == 2
    code = main(
        ["pmmh", *CONJ, "--target", "mu", "--iterations", "5",
         "--inner", "kalman", "--prop-cov", "not-a-number",
         "--out", str(tmp_path / "o2")]
    )
    assert code == 2
