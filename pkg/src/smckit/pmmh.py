"""Particle marginal Metropolis-Hastings over top-level parameters.

Random-walk proposals act on transformed unconstrained scales (log for
positive support, logit for (0,1)) with the Jacobian folded into the
prior term, so the chain targets the posterior of the raw parameters.
The marginal likelihood comes from an exchangeable inner filter:
bootstrap or auxiliary particle filters, the exact Kalman recursion for
linear-Gaussian models, or a caller-supplied function (useful for
testing the Metropolis machinery in isolation).

Everything is computed in log space; acceptance compares the log ratio
against the log of a uniform draw.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import dists, filters, kalman, runtime
from .errors import (
    ConfigError,
    DegenerateWeightsError,
    NumericalError,
    ParameterDomainError,
)
from .filters import _claim_observations, _transform_for
from .graph import ModelGraph
from .rng import RngState, STREAM_INIT, STREAM_PMMH

INNER_FILTERS = ("bootstrap", "auxiliary", "kalman", "custom")

# sub-streams under STREAM_PMMH
_CHAIN = 1
_PROPOSAL_RUN = 2
_REFRESH_RUN = 3


@dataclass
class PmmhConfig:
    """Settings for one sampler run.

    ``prop_cov`` is the initial proposal covariance on the transformed
    scale: a scalar is read as scale * identity.  ``burn_in`` only
    controls when adaptation freezes; every thinned iteration is
    retained.  ``burn_in=0`` means adaptation never freezes.
    """

    targets: tuple
    iterations: int
    prop_cov: object = 0.1
    thin: int = 1
    burn_in: int = 0
    adaptive: bool = False
    pf_resample: bool = False
    inner: str = "bootstrap"
    n_particles: int = 1000
    inner_thresh: float = 0.8
    inner_method: str = "systematic"
    inner_lookahead: str = "mean"
    transform: bool = True
    threads: int = 1
    loglik_fn: object = None
    save_trajectories: bool = True


@dataclass
class PmmhChain:
    """Thinned sampler output; one row per retained iteration."""

    param_names: tuple
    thetas: np.ndarray  # (n_kept, d), raw scale
    logliks: np.ndarray
    accepted: np.ndarray
    trajectories: np.ndarray | None  # (n_kept, T) sampled latent paths
    acceptance_rate: float
    proposal_cov: np.ndarray  # final proposal covariance (transformed scale)
    iterations: int
    thin: int

    @property
    def n_kept(self) -> int:
        return self.thetas.shape[0]


def proposal_scale(dim: int) -> float:
    """Standard adaptive-Metropolis scaling 2.38^2 / dim."""
    return 2.38 * 2.38 / dim


def adapt_proposal(
    history, iteration: int, base_cov: np.ndarray, *, epsilon: float = 1e-6
):
    """Adapted proposal covariance from the chain states so far.

    Returns ``base_cov`` unchanged through the 100-iteration warm-up,
    then s_d * (cov(history) + epsilon * I).  Freezing after burn-in is
    the caller's job (it just stops calling).
    """
    base_cov = np.asarray(base_cov, dtype=np.float64)
    if iteration <= 100:
        return base_cov
    history = np.atleast_2d(np.asarray(history, dtype=np.float64))
    d = history.shape[1]
    if history.shape[0] < 2:
        cov = np.zeros((d, d))
    else:
        cov = np.cov(history, rowvar=False).reshape(d, d)
    return proposal_scale(d) * (cov + epsilon * np.eye(d))


class _RunningCov:
    """Welford accumulator for the chain's empirical covariance."""

    def __init__(self, dim: int):
        self.n = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros((dim, dim))

    def update(self, x: np.ndarray) -> None:
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += np.outer(delta, x - self.mean)

    def cov(self) -> np.ndarray:
        if self.n < 2:
            return np.zeros_like(self.m2)
        return self.m2 / (self.n - 1)


def _prop_chol(cov, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Validate a proposal covariance and return (cov, cholesky factor)."""
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim == 0:
        if not cov > 0:
            raise ConfigError("proposal scale must be positive")
        cov = float(cov) * np.eye(dim)
    if cov.shape != (dim, dim):
        raise ConfigError(f"proposal covariance must be {dim}x{dim}")
    if not np.allclose(cov, cov.T):
        raise ConfigError("proposal covariance must be symmetric")
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ConfigError("proposal covariance must be positive definite") from None
    return cov, L


class _InnerLikelihood:
    """Marginal-likelihood estimator at a fixed parameter vector."""

    def __init__(self, graph, latent, config: PmmhConfig, target_names):
        self.graph = graph
        self.latent = latent
        self.config = config
        self.target_names = target_names
        self.determ = [
            n for i in graph.order
            if (n := graph.nodes[i]).kind == "deterministic"
        ]
        self.kalman_parts = None
        if config.inner == "kalman":
            structure, report = kalman._gaussian_structure(graph, latent)
            if report is not None:
                raise ConfigError(f"model is not linear-Gaussian: {report}")
            chain, observations = structure
            self.kalman_parts = (chain, observations)
            self.y = np.array([graph.base_values()[o.name] for o in observations])
        elif config.inner == "custom":
            if config.loglik_fn is None:
                raise ConfigError("inner='custom' needs loglik_fn")
        elif config.inner in ("bootstrap", "auxiliary"):
            _claim_observations(graph, graph.latent_nodes(latent))
        else:
            raise ConfigError(f"inner filter must be one of {INNER_FILTERS}")

    @property
    def particle_based(self) -> bool:
        return self.config.inner in ("bootstrap", "auxiliary")

    def __call__(self, theta: np.ndarray, rng: RngState, base_env: dict):
        """(loglik, trajectories, final_weights); clouds None when exact."""
        cfg = self.config
        overrides = dict(zip(self.target_names, theta))
        if cfg.inner == "custom":
            return float(cfg.loglik_fn(overrides)), None, None
        if cfg.inner == "kalman":
            env = dict(base_env)
            env.update(overrides)
            with np.errstate(all="ignore"):
                for node in self.determ:
                    env[node.name] = float(node.expr_fn(env))
            chain, observations = self.kalman_parts
            ssm, report = kalman._gaussian_coefficients(
                chain, observations, self.latent, env
            )
            if report is not None:
                raise NumericalError(f"coefficient extraction failed: {report}")
            return kalman.kalman_filter(ssm, self.y).loglik, None, None
        run = dict(
            n_particles=cfg.n_particles,
            seed=rng,
            method=cfg.inner_method,
            threads=cfg.threads,
            fixed_params=overrides,
        )
        if cfg.inner == "bootstrap":
            res = filters.bootstrap_filter(
                self.graph, self.latent, thresh=cfg.inner_thresh, **run
            )
        else:
            res = filters.auxiliary_filter(
                self.graph, self.latent, lookahead=cfg.inner_lookahead, **run
            )
        return res.loglik, res.trajectories, res.final_weights


def pmmh_run(
    graph: ModelGraph, latent: str, config: PmmhConfig, seed: int = 0
) -> PmmhChain:
    """Run the sampler and return the thinned chain.

    Each iteration proposes on the transformed scale, estimates the
    marginal likelihood with the inner filter, and accepts in log space.
    A degenerate inner filter counts as a rejection (with a warning).
    On acceptance a latent trajectory is drawn from the inner filter's
    final weighted cloud; rejections keep the previous trajectory.
    """
    if config.iterations < 1:
        raise ConfigError("iterations must be at least 1")
    if config.thin < 1:
        raise ConfigError("thin must be at least 1")
    if config.burn_in < 0:
        raise ConfigError("burn_in must not be negative")
    if not config.targets:
        raise ConfigError("pmmh needs at least one target parameter")

    target_names = tuple(config.targets)
    targets = []
    for name in target_names:
        try:
            node = graph.node(name)
        except KeyError:
            raise ConfigError(f"unknown parameter node {name!r}") from None
        if node.role != "parameter":
            raise ConfigError(f"node {name} is not a top-level parameter")
        targets.append(node)
    dim = len(targets)

    root = RngState(seed)
    chain_rng = root.stream(STREAM_PMMH, _CHAIN)
    inner = _InnerLikelihood(graph, latent, config, target_names)

    # fixed environment: data, inits, untargeted parameters
    base_env = graph.base_values()
    ordered = [graph.nodes[i] for i in graph.order]
    param_nodes = [n for n in ordered if n.role == "parameter"]
    with np.errstate(all="ignore"):
        for i, node in enumerate(param_nodes):
            if node.name in target_names:
                continue
            if node.init is None and not np.isfinite(base_env[node.name]):
                params = {k: fn(base_env) for k, fn in node.param_fns.items()}
                base_env[node.name] = float(
                    dists.sample(node.dist, root.stream(STREAM_INIT, i), params)
                )
            for d_node in ordered:
                if d_node.kind == "deterministic":
                    base_env[d_node.name] = float(d_node.expr_fn(base_env))

    transforms = [_transform_for(n, base_env, config.transform) for n in targets]

    determ_names = [n.name for n in ordered if n.kind == "deterministic"]

    def log_prior(theta_raw, eta) -> float:
        """Joint prior of the targets plus the transform Jacobian."""
        state = runtime.ModelState(graph, dict(base_env))
        for name, value in zip(target_names, theta_raw):
            state[name] = value
        try:
            with np.errstate(all="ignore"):
                total = runtime.calculate(
                    graph, state, determ_names + list(target_names)
                )
        except ParameterDomainError:
            return -np.inf
        for j, tr in enumerate(transforms):
            if tr.kind == "log":
                total += eta[j]
            elif tr.kind == "logit":
                total += float(np.log(theta_raw[j]) + np.log1p(-theta_raw[j]))
        return total

    # initial state: inits where given, otherwise a seeded prior draw
    theta = np.empty(dim)
    init_env = dict(base_env)
    for j, node in enumerate(targets):
        if node.init is not None:
            theta[j] = float(node.init)
        else:
            params = {k: fn(init_env) for k, fn in node.param_fns.items()}
            theta[j] = float(
                dists.sample(
                    node.dist, root.stream(STREAM_PMMH, _CHAIN, 0, j), params
                )
            )
        init_env[node.name] = theta[j]
        with np.errstate(all="ignore"):
            for d_node in ordered:
                if d_node.kind == "deterministic":
                    init_env[d_node.name] = float(d_node.expr_fn(init_env))
    eta = np.array([tr.forward(theta[j]) for j, tr in enumerate(transforms)])

    lp_curr = log_prior(theta, eta)
    if not np.isfinite(lp_curr):
        raise ConfigError("initial parameter values have zero prior density")
    ll_curr, traj_cloud, cloud_w = inner(
        theta, root.stream(STREAM_PMMH, _PROPOSAL_RUN, 0), base_env
    )
    if not np.isfinite(ll_curr):
        raise ConfigError("initial parameter values give -inf log-likelihood")

    T = len(graph.latent_nodes(latent))
    keep_traj = config.save_trajectories and inner.particle_based

    def draw_trajectory(cloud, w):
        u = chain_rng.random()
        idx = int(np.searchsorted(np.cumsum(w), u, side="right"))
        return cloud[min(idx, cloud.shape[0] - 1)].copy()

    traj_curr = draw_trajectory(traj_cloud, cloud_w) if keep_traj else None

    base_cov, L = _prop_chol(config.prop_cov, dim)
    sigma = base_cov
    running = _RunningCov(dim)
    scale = proposal_scale(dim)
    eye = np.eye(dim)

    n_kept = config.iterations // config.thin
    thetas = np.empty((n_kept, dim))
    logliks = np.empty(n_kept)
    accepted_flags = np.zeros(n_kept, dtype=bool)
    trajectories = np.empty((n_kept, T)) if keep_traj else None
    n_accepted = 0

    for i in range(1, config.iterations + 1):
        if config.pf_resample and inner.particle_based:
            try:
                refreshed, _, _ = inner(
                    theta, root.stream(STREAM_PMMH, _REFRESH_RUN, i), base_env
                )
                ll_curr = refreshed
            except (DegenerateWeightsError, NumericalError, ParameterDomainError):
                warnings.warn(
                    f"iteration {i}: likelihood refresh degenerate, "
                    "keeping previous estimate",
                    RuntimeWarning,
                    stacklevel=2,
                )

        z = chain_rng.standard_normal(dim)
        eta_prop = eta + L @ z
        theta_prop = np.array(
            [tr.inverse(eta_prop[j]) for j, tr in enumerate(transforms)]
        )
        lp_prop = log_prior(theta_prop, eta_prop)
        accept = False
        if np.isfinite(lp_prop):
            try:
                ll_prop, cloud, cloud_w = inner(
                    theta_prop, root.stream(STREAM_PMMH, _PROPOSAL_RUN, i), base_env
                )
            except (DegenerateWeightsError, NumericalError, ParameterDomainError) as exc:
                warnings.warn(
                    f"iteration {i}: inner filter failed ({exc}), proposal rejected",
                    RuntimeWarning,
                    stacklevel=2,
                )
                ll_prop = -np.inf
            if np.isfinite(ll_prop):
                log_ratio = (ll_prop + lp_prop) - (ll_curr + lp_curr)
                accept = np.log(chain_rng.random()) < log_ratio
        if accept:
            theta, eta = theta_prop, eta_prop
            ll_curr, lp_curr = ll_prop, lp_prop
            n_accepted += 1
            if keep_traj:
                traj_curr = draw_trajectory(cloud, cloud_w)

        running.update(eta)
        if config.adaptive and i > 100:
            frozen = config.burn_in > 0 and i > config.burn_in
            if not frozen:
                sigma = scale * (running.cov() + 1e-6 * eye)
                L = np.linalg.cholesky(sigma)

        if i % config.thin == 0:
            row = i // config.thin - 1
            thetas[row] = theta
            logliks[row] = ll_curr
            accepted_flags[row] = accept
            if keep_traj:
                trajectories[row] = traj_curr

    return PmmhChain(
        param_names=target_names,
        thetas=thetas,
        logliks=logliks,
        accepted=accepted_flags,
        trajectories=trajectories,
        acceptance_rate=n_accepted / config.iterations,
        proposal_cov=np.asarray(sigma, dtype=np.float64),
        iterations=config.iterations,
        thin=config.thin,
    )
