"""Distribution registry checks against independent numerical oracles."""

import numpy as np
import pytest
from scipy import integrate, stats

from smckit import dists
from smckit.errors import ParameterDomainError

CASES = [
    ("dnorm", {"mean": 0.3, "tau": 2.0}, (-np.inf, np.inf)),
    ("dnorm", {"mean": -1.0, "var": 0.5}, (-np.inf, np.inf)),
    ("dnorm", {"mean": 2.0, "sd": 3.0}, (-np.inf, np.inf)),
    ("dbeta", {"shape1": 18.0, "shape2": 1.0}, (0.0, 1.0)),
    ("dbeta", {"shape1": 2.0, "shape2": 5.0}, (0.0, 1.0)),
    ("dgamma", {"shape": 5.0, "rate": 20.0}, (0.0, np.inf)),
    ("dgamma", {"shape": 1.5, "scale": 2.0}, (0.0, np.inf)),
    ("dunif", {"min": -2.0, "max": 3.0}, (-2.0, 3.0)),
]


def scipy_frozen(name, params):
    if name == "dnorm":
        var = dists.convert_scale(
            params.get("tau", params.get("var", params.get("sd"))),
            "tau" if "tau" in params else ("var" if "var" in params else "sd"),
            "var",
        )
        return stats.norm(params["mean"], np.sqrt(var))
    if name == "dbeta":
        return stats.beta(params["shape1"], params["shape2"])
    if name == "dgamma":
        scale = params.get("scale", 1.0 / params.get("rate", np.nan))
        return stats.gamma(params["shape"], scale=scale)
    if name == "dunif":
        return stats.uniform(params["min"], params["max"] - params["min"])
    raise AssertionError(name)


def test_standard_normal_at_zero():
    lp = dists.log_density("dnorm", 0.0, {"mean": 0.0, "var": 1.0})
    assert lp == pytest.approx(-0.5 * np.log(2 * np.pi), abs=1e-15)


def test_uniform_unit_density():
    assert dists.log_density("dunif", 0.3, {"min": 0.0, "max": 1.0}) == 0.0


@pytest.mark.parametrize("name,params,support", CASES)
def test_density_integrates_to_one(name, params, support):
    total, err = integrate.quad(
        lambda x: np.exp(dists.log_density(name, x, params)),
        support[0],
        support[1],
        limit=200,
    )
    assert total == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("name,params,support", CASES)
def test_density_matches_scipy(name, params, support):
    frozen = scipy_frozen(name, params)
    xs = frozen.ppf(np.linspace(0.01, 0.99, 23))
    ours = dists.log_density(name, xs, params)
    np.testing.assert_allclose(ours, frozen.logpdf(xs), rtol=1e-12)


@pytest.mark.parametrize("name,params,support", CASES)
def test_sampler_ks(name, params, support):
    rng = np.random.default_rng(abs(hash((name, tuple(sorted(params))))) % 2**32)
    draws = dists.sample(name, rng, params, size=100_000)
    frozen = scipy_frozen(name, params)
    assert stats.kstest(draws, frozen.cdf).pvalue > 0.001


def test_gamma_mean_clt():
    rng = np.random.default_rng(123)
    draws = dists.sample("dgamma", rng, {"shape": 5.0, "rate": 20.0}, size=100_000)
    se = np.sqrt(5.0 / 20.0**2 / draws.size)
    assert abs(draws.mean() - 0.25) < 5 * se


def test_normal_variance_clt():
    rng = np.random.default_rng(124)
    draws = dists.sample("dnorm", rng, {"mean": 0.0, "var": 1.0}, size=100_000)
    assert abs(draws.var() - 1.0) < 5 * np.sqrt(2.0 / draws.size)


def test_beta_support():
    rng = np.random.default_rng(125)
    draws = dists.sample("dbeta", rng, {"shape1": 18.0, "shape2": 1.0}, size=10_000)
    assert np.all((draws > 0) & (draws < 1))


def test_out_of_support_is_neg_inf_not_error():
    assert dists.log_density("dbeta", 1.5, {"shape1": 2.0, "shape2": 2.0}) == -np.inf
    assert dists.log_density("dgamma", -1.0, {"shape": 2.0, "rate": 1.0}) == -np.inf
    assert dists.log_density("dunif", 9.0, {"min": 0.0, "max": 1.0}) == -np.inf


def test_invalid_params_strict_raises():
    with pytest.raises(ParameterDomainError):
        dists.log_density("dnorm", 0.0, {"mean": 0.0, "var": -1.0})
    with pytest.raises(ParameterDomainError):
        dists.log_density("dgamma", 1.0, {"shape": -2.0, "rate": 1.0})
    with pytest.raises(ParameterDomainError):
        dists.sample("dnorm", np.random.default_rng(0), {"mean": 0.0, "var": -1.0})


def test_invalid_params_lenient_scores_neg_inf():
    lp = dists.log_density("dnorm", 0.0, {"mean": 0.0, "var": -1.0}, strict=False)
    assert lp == -np.inf
    var = np.array([1.0, -1.0, 2.0])
    lp = dists.log_density("dnorm", 0.0, {"mean": 0.0, "var": var}, strict=False)
    assert np.isfinite(lp[0]) and lp[1] == -np.inf and np.isfinite(lp[2])


def test_scalar_value_array_params_returns_array():
    tau = np.array([1.0, 2.0, 4.0])
    lp = dists.log_density("dnorm", 0.5, {"mean": 0.0, "tau": tau})
    assert lp.shape == (3,)
    singles = [
        dists.log_density("dnorm", 0.5, {"mean": 0.0, "tau": t}) for t in tau
    ]
    np.testing.assert_allclose(lp, singles, rtol=1e-15)


def test_convert_scale_values():
    assert dists.convert_scale(0.5, "var", "tau") == 2.0
    assert dists.convert_scale(2.0, "sd", "tau") == 0.25
    assert dists.convert_scale(31.561, "tau", "tau") == 31.561


def test_convert_scale_round_trip():
    rng = np.random.default_rng(3)
    vals = rng.gamma(2.0, size=50)
    for src in ("tau", "var", "sd"):
        for dst in ("tau", "var", "sd"):
            back = dists.convert_scale(dists.convert_scale(vals, src, dst), dst, src)
            np.testing.assert_allclose(back, vals, rtol=1e-15)


def test_resolve_params_conventions():
    resolved = dists.resolve_params("dnorm", [0.0, 2.0], {})
    assert resolved == {"mean": 0.0, "tau": 2.0}
    resolved = dists.resolve_params("dgamma", [5.0], {"scale": 2.0})
    assert resolved == {"shape": 5.0, "scale": 2.0}
    with pytest.raises(Exception):
        dists.resolve_params("dnorm", [0.0], {"var": 1.0, "sd": 1.0})
    with pytest.raises(Exception):
        dists.resolve_params("dgamma", [5.0], {"rate": 1.0, "scale": 1.0})
    with pytest.raises(Exception):
        dists.resolve_params("dnorm", [0.0], {})
