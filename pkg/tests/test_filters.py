"""Particle filter engines against the exact linear-Gaussian oracle."""

import os
import subprocess
import sys

import numpy as np
import pytest
from conftest import DATA

from smckit import compile_model
from smckit.errors import ConfigError, DegenerateWeightsError
from smckit.filters import (
    auxiliary_filter,
    bootstrap_filter,
    ensemble_kalman_filter,
    liu_west_filter,
    shrinkage,
)
from smckit.kalman import GaussianSSM, extract_gaussian, kalman_filter

# observations carry no information about the state, so the likelihood
# factorizes exactly and every filter must reproduce it
FLAT_OBS = """
x[1] ~ dnorm(0, var = 1)
y[1] ~ dnorm(0 * x[1], var = 1)
for(t in 2:6){
  x[t] ~ dnorm(.8 * x[t-1], var = 1)
  y[t] ~ dnorm(0 * x[t], var = 1)
}
"""

GAMMA_TRANS = """
r ~ dgamma(2, 2)
x[1] ~ dgamma(2, 2)
y[1] ~ dnorm(x[1], var = 1)
for(t in 2:4){
  x[t] ~ dgamma(2, x[t-1] + r)
  y[t] ~ dnorm(x[t], var = 1)
}
"""


@pytest.fixture(scope="module")
def lg_exact(lg_graph, lg_y):
    ssm, report = extract_gaussian(lg_graph, "x")
    assert report is None
    return kalman_filter(ssm, lg_y)


@pytest.fixture(scope="module")
def flat_graph():
    y = np.array([0.3, -1.2, 0.5, 2.0, -0.7, 0.9])
    return compile_model(FLAT_OBS, data={"y": y}, latent="x"), y


def test_bootstrap_tracks_exact_filter(lg_graph, lg_exact):
    res = bootstrap_filter(lg_graph, "x", n_particles=4000, seed=1)
    sd = np.sqrt(lg_exact.variances)
    assert np.max(np.abs(res.means - lg_exact.means)) < 0.1
    for col, target in (
        (0, lg_exact.means - 1.96 * sd),
        (1, lg_exact.means),
        (2, lg_exact.means + 1.96 * sd),
    ):
        assert np.max(np.abs(res.quantiles[:, col] - target)) < 0.15
    assert abs(res.loglik - lg_exact.loglik) < 1.0
    assert res.loglik == pytest.approx(np.sum(res.step_logliks), abs=1e-10)


@pytest.mark.parametrize("lookahead", ["mean", "simulate"])
def test_auxiliary_tracks_exact_filter(lg_graph, lg_exact, lookahead):
    res = auxiliary_filter(
        lg_graph, "x", n_particles=10000, seed=2, lookahead=lookahead
    )
    sd = np.sqrt(lg_exact.variances)
    assert np.max(np.abs(res.means - lg_exact.means)) < 0.15
    assert np.max(np.abs(res.quantiles[:, 0] - (lg_exact.means - 1.96 * sd))) < 0.15
    assert np.max(np.abs(res.quantiles[:, 2] - (lg_exact.means + 1.96 * sd))) < 0.15
    assert abs(res.loglik - lg_exact.loglik) < 1.0
    assert res.resampled.all()


def test_ensemble_tracks_exact_filter(lg_graph, lg_exact):
    res = ensemble_kalman_filter(lg_graph, "x", n_particles=4000, seed=3)
    assert np.max(np.abs(res.means - lg_exact.means)) < 0.1
    assert np.max(np.abs(res.sds - np.sqrt(lg_exact.variances))) < 0.1
    assert res.gains.shape == (10,)
    assert abs(res.gains[0] - lg_exact.gains[0]) < 0.05
    assert res.ess is None
    assert res.quantiles is None
    assert res.weights is None
    assert res.loglik is None
    assert np.array_equal(res.samples, res.ew_samples)
    assert np.all(res.final_weights == 1.0 / 4000)


def test_single_particle_is_one_simulated_trajectory(lg_graph):
    res = bootstrap_filter(lg_graph, "x", n_particles=1, seed=5)
    assert res.final_weights.tolist() == [1.0]
    assert np.all(res.ess == 1.0)
    assert not res.resampled.any()
    assert np.array_equal(res.means, res.trajectories[0])
    assert np.isfinite(res.loglik)


def test_identical_seed_gives_identical_results(lg_graph, lgA_graph):
    runs = [
        lambda: bootstrap_filter(lg_graph, "x", n_particles=300, seed=9),
        lambda: auxiliary_filter(
            lg_graph, "x", n_particles=300, seed=9, lookahead="simulate"
        ),
        lambda: liu_west_filter(lgA_graph, "x", ["a"], n_particles=300, seed=9),
        lambda: ensemble_kalman_filter(lg_graph, "x", n_particles=300, seed=9),
    ]
    for make in runs:
        a, b = make(), make()
        assert np.array_equal(a.means, b.means)
        assert np.array_equal(a.sds, b.sds)
        assert np.array_equal(a.trajectories, b.trajectories)
        assert a.loglik == b.loglik or (a.loglik is None and b.loglik is None)


def test_resampling_threshold_extremes(lg_graph, lg_exact):
    never = bootstrap_filter(lg_graph, "x", n_particles=4000, seed=3, thresh=0.0)
    always = bootstrap_filter(lg_graph, "x", n_particles=4000, seed=3, thresh=1.0)
    assert not never.resampled.any()
    assert always.resampled.all()
    # both variants still agree with the exact filter
    for res in (never, always):
        assert np.max(np.abs(res.means - lg_exact.means)) < 0.15
        assert abs(res.loglik - lg_exact.loglik) < 1.0


def test_flat_observations_give_exact_likelihood(flat_graph):
    graph, y = flat_graph
    exact = float(np.sum(-0.5 * (np.log(2 * np.pi) + y**2)))
    boot = bootstrap_filter(graph, "x", n_particles=64, seed=2)
    apf = auxiliary_filter(graph, "x", n_particles=64, seed=2, lookahead="mean")
    assert boot.loglik == pytest.approx(exact, abs=1e-9)
    assert apf.loglik == pytest.approx(exact, abs=1e-9)
    # uniform weights keep the ESS at K, so resampling is never triggered
    assert not boot.resampled.any()


def test_simulate_lookahead_matches_bootstrap_distribution(flat_graph):
    # with weights flat the auxiliary filter is bootstrap-with-resampling
    # in distribution; compare the final-time mean across seeds
    graph, _ = flat_graph
    runs = 60
    a = np.array(
        [
            bootstrap_filter(graph, "x", n_particles=128, seed=s, thresh=1.0).means[-1]
            for s in range(runs)
        ]
    )
    b = np.array(
        [
            auxiliary_filter(
                graph, "x", n_particles=128, seed=1000 + s, lookahead="simulate"
            ).means[-1]
            for s in range(runs)
        ]
    )
    z = (a.mean() - b.mean()) / np.sqrt((a.var() + b.var()) / runs)
    assert abs(z) < 3.2905


def test_mean_lookahead_requires_normal_transition():
    y = np.array([0.5, 1.5, 0.7, 1.1])
    graph = compile_model(GAMMA_TRANS, data={"y": y}, latent="x")
    with pytest.raises(ConfigError, match="simulate"):
        auxiliary_filter(graph, "x", n_particles=50, seed=0)
    with pytest.raises(ConfigError, match="simulate"):
        liu_west_filter(graph, "x", ["r"], n_particles=50, seed=0)
    res = auxiliary_filter(graph, "x", n_particles=50, seed=0, lookahead="simulate")
    assert np.isfinite(res.means).all()


def test_shrinkage_identities():
    for d in (0.5, 0.95, 0.99, 1.0):
        a, h2 = shrinkage(d)
        assert a == (3.0 * d - 1.0) / (2.0 * d)
        assert a * a + h2 == 1.0
    a, h2 = shrinkage(0.95)
    assert abs(a - 0.973684) < 1e-6
    assert abs(h2 - 0.051939) < 1e-6
    assert shrinkage(1.0) == (1.0, 0.0)
    for bad in (0.0, -0.5, 1.5, 0.19):
        with pytest.raises(ConfigError):
            shrinkage(bad)


def test_unit_discount_only_resamples_parameters(lgA_graph):
    res = liu_west_filter(
        lgA_graph, "x", ["a"], n_particles=200, seed=4, discount=1.0, save_all=True
    )
    # zero kernel variance: every surviving value is one of the prior draws
    assert np.isin(res.param_samples["a"][-1], res.param_samples["a"][0]).all()
    assert res.loglik is None
    assert res.param_names == ("a",)
    assert res.param_means.shape == (50, 1)
    assert np.isfinite(res.param_means).all()


def test_volatility_parameters_stay_in_support(sv_graph):
    res = liu_west_filter(
        sv_graph,
        "x",
        ["betaSquaredInv", "phiStar", "sigmaSquaredInv"],
        n_particles=1500,
        seed=8,
    )
    for name in ("betaSquaredInv", "sigmaSquaredInv"):
        assert (res.param_samples[name][-1] > 0).all()
        assert (res.param_ew_samples[name][-1] > 0).all()
    phi_star = res.param_samples["phiStar"][-1]
    assert ((phi_star > 0) & (phi_star < 1)).all()
    assert np.isfinite(res.param_means).all()


def test_tiny_observation_noise_pins_ensemble_to_data():
    src = (
        "x[1] ~ dnorm(0, var = 4)\n"
        "y[1] ~ dnorm(x[1], var = 1e-8)\n"
        "for(t in 2:5){\n"
        "  x[t] ~ dnorm(.5 * x[t-1], var = 4)\n"
        "  y[t] ~ dnorm(x[t], var = 1e-8)\n"
        "}\n"
    )
    y = np.array([1.0, -2.0, 0.5, 3.0, -1.5])
    graph = compile_model(src, data={"y": y}, latent="x")
    res = ensemble_kalman_filter(graph, "x", n_particles=2000, seed=6)
    assert np.max(np.abs(res.means - y)) < 1e-2


def test_ensemble_rejects_state_dependent_noise(sv_graph):
    with pytest.raises(ConfigError, match="noise variance"):
        ensemble_kalman_filter(sv_graph, "x", n_particles=50, seed=0)


def test_ensemble_rejects_non_normal_observation():
    src = "x[1] ~ dnorm(0, var = 1)\ny[1] ~ dgamma(2, 2 + x[1] * x[1])\n"
    graph = compile_model(src, data={"y": np.array([0.7])}, latent="x")
    with pytest.raises(ConfigError, match="normal observations"):
        ensemble_kalman_filter(graph, "x", n_particles=50, seed=0)


def test_saved_containers_and_shapes(lg_graph):
    res = bootstrap_filter(lg_graph, "x", n_particles=256, seed=12, save_all=True)
    assert res.samples.shape == (10, 256)
    assert res.weights.shape == (10, 256)
    assert res.ew_samples.shape == (10, 256)
    assert res.trajectories.shape == (256, 10)
    for row in range(10):
        # the equal-weight container draws from the weighted one
        assert np.isin(res.ew_samples[row], res.samples[row]).all()
        assert res.weights[row].sum() == pytest.approx(1.0, abs=1e-12)
    small = bootstrap_filter(lg_graph, "x", n_particles=256, seed=12)
    assert small.samples.shape == (1, 256)
    assert np.array_equal(small.samples[0], res.samples[-1])


def test_thread_count_does_not_change_results(lg_graph):
    one = bootstrap_filter(lg_graph, "x", n_particles=20000, seed=13, threads=1)
    four = bootstrap_filter(lg_graph, "x", n_particles=20000, seed=13, threads=4)
    assert one.loglik == four.loglik
    assert np.array_equal(one.means, four.means)
    assert np.array_equal(one.trajectories, four.trajectories)


def test_pure_python_backend_is_bit_identical(lg_graph):
    res = bootstrap_filter(lg_graph, "x", n_particles=2000, seed=11)
    script = (
        "import numpy as np\n"
        "from pathlib import Path\n"
        "from smckit import compile_model\n"
        "from smckit.filters import bootstrap_filter\n"
        "from smckit.kernels import BACKEND\n"
        f"data = Path({str(DATA)!r})\n"
        "rows = (data / 'lg.csv').read_text().strip().splitlines()[1:]\n"
        "y = np.array([float(v) for v in rows])\n"
        "graph = compile_model((data / 'lg.mod').read_text(), data={'y': y},"
        " latent='x')\n"
        "out = bootstrap_filter(graph, 'x', n_particles=2000, seed=11)\n"
        "print(BACKEND)\n"
        "print(float(out.loglik).hex())\n"
        "print(' '.join(float(m).hex() for m in out.means))\n"
    )
    proc = subprocess.run(
        [sys.executable, "-c", script],
        capture_output=True,
        text=True,
        check=True,
        env=dict(os.environ, SMCKIT_PURE_PYTHON="1"),
    )
    backend, loglik_hex, means_hex = proc.stdout.strip().splitlines()
    assert backend == "python"
    assert loglik_hex == float(res.loglik).hex()
    assert means_hex == " ".join(float(m).hex() for m in res.means)


def test_fixed_parameter_override(lgA_graph, lgA_y):
    ssm = GaussianSSM(A=0.8, Q=1.0, H=1.0, R=0.5, m0=0.0, P0=1.0)
    exact = kalman_filter(ssm, lgA_y)
    res = bootstrap_filter(
        lgA_graph, "x", n_particles=4000, seed=14, fixed_params={"a": 0.8}
    )
    assert abs(res.loglik - exact.loglik) < 1.5
    with pytest.raises(ConfigError, match="parameter"):
        bootstrap_filter(
            lgA_graph, "x", n_particles=10, seed=0, fixed_params={"y[1]": 0.0}
        )


def test_observation_off_the_chain_is_rejected():
    src = (
        "x[1] ~ dnorm(0, var = 1)\n"
        "y[1] ~ dnorm(x[1], var = 1)\n"
        "z ~ dnorm(0, var = 1)\n"
        "for(t in 2:3){\n"
        "  x[t] ~ dnorm(x[t-1], var = 1)\n"
        "  y[t] ~ dnorm(x[t], var = 1)\n"
        "}\n"
    )
    graph = compile_model(
        src, data={"y": np.array([0.1, -0.2, 0.3]), "z": 0.5}, latent="x"
    )
    with pytest.raises(ConfigError, match="does not depend"):
        bootstrap_filter(graph, "x", n_particles=10, seed=0)


def test_degenerate_weights_cite_the_time_step():
    src = "x[1] ~ dnorm(0, var = 1)\ny[1] ~ dunif(x[1] + 10, x[1] + 11)\n"
    graph = compile_model(src, data={"y": np.array([0.0])}, latent="x")
    with pytest.raises(DegenerateWeightsError, match="t=1"):
        bootstrap_filter(graph, "x", n_particles=20, seed=0)


def test_engine_config_validation(lg_graph):
    with pytest.raises(ConfigError):
        bootstrap_filter(lg_graph, "x", n_particles=0, seed=0)
    with pytest.raises(ConfigError):
        bootstrap_filter(lg_graph, "x", n_particles=10, seed=0, method="bogus")
    with pytest.raises(ConfigError):
        bootstrap_filter(lg_graph, "x", n_particles=10, seed=0, threads=0)
    with pytest.raises(ConfigError):
        bootstrap_filter(lg_graph, "x", n_particles=10, seed=0, thresh=1.5)
    with pytest.raises(ConfigError):
        auxiliary_filter(lg_graph, "x", n_particles=10, seed=0, lookahead="oracle")
    with pytest.raises(ConfigError):
        liu_west_filter(lg_graph, "x", [], n_particles=10, seed=0)
    with pytest.raises(ConfigError):
        liu_west_filter(lg_graph, "x", ["nope"], n_particles=10, seed=0)
    with pytest.raises(ConfigError):
        liu_west_filter(lg_graph, "x", ["x[1]"], n_particles=10, seed=0)
    with pytest.raises(ConfigError):
        ensemble_kalman_filter(lg_graph, "x", n_particles=1, seed=0)
