"""Particle filtering engines running model-generically over a graph.

Four engines share one vectorized core: particles live in an
environment dict mapping node names to (K,) arrays (scalars for fixed
quantities), so the compiled per-node closures evaluate whole
populations at once.

* bootstrap: transition-prior proposal, conditional ESS-threshold
  resampling, likelihood accumulated as log sum(pi_prev * g_t).
* auxiliary: lookahead first-stage weights (transition mean or a
  simulated draw), one resampling step every time point, second-stage
  weights g / g_hat.
* liu_west: joint state + parameter filtering with kernel shrinkage on
  transformed scales; no likelihood estimate.
* ensemble_kalman: perturbed-observation ensemble update; unweighted
  cloud, no likelihood.

All random draws go through purpose-keyed RNG streams on the main
thread, and observation scoring is chunked at a fixed size regardless
of worker count, so results are bit-identical for any ``threads``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import dists, resampling
from .errors import ConfigError, DegenerateWeightsError, NumericalError
from .exprs import expr_keys
from .graph import ModelGraph
from .kernels import weighted_quantiles
from .rng import (
    RngState,
    STREAM_CONTAINER,
    STREAM_INIT,
    STREAM_LOOKAHEAD,
    STREAM_OBS_NOISE,
    STREAM_PERTURB,
    STREAM_PROPAGATE,
    STREAM_RESAMPLE,
)

QUANTILE_LEVELS = (0.025, 0.5, 0.975)
LOOKAHEADS = ("mean", "simulate")


def shrinkage(discount: float) -> tuple[float, float]:
    """Kernel shrinkage factor a and variance h^2 for a discount in (0, 1]."""
    if not 0.0 < discount <= 1.0:
        raise ConfigError("discount must lie in (0, 1]")
    a = (3.0 * discount - 1.0) / (2.0 * discount)
    h2 = 1.0 - a * a
    if h2 < 0.0:
        raise ConfigError("discount below 0.2 gives a negative kernel variance")
    return a, h2

# chunk size for elementwise observation scoring; fixed so that the
# grouping of elements never depends on the worker count
_SCORE_CHUNK = 8192


@dataclass
class FilterResult:
    """Output of one filtering run.

    Per-time summary arrays always have length T.  The cloud arrays
    (``samples``, ``weights``, ``ew_samples``, parameter clouds) have T
    rows when ``save_all`` was set and a single row holding the final
    time point otherwise.  ``trajectories`` holds the K surviving
    ancestral paths, row-aligned with ``final_weights``.
    """

    algorithm: str
    times: np.ndarray
    means: np.ndarray
    sds: np.ndarray
    ess: np.ndarray | None
    quantiles: np.ndarray | None  # (T, 3): 2.5%, 50%, 97.5%
    loglik: float | None
    step_logliks: np.ndarray | None
    resampled: np.ndarray
    samples: np.ndarray
    weights: np.ndarray | None
    ew_samples: np.ndarray
    trajectories: np.ndarray
    final_weights: np.ndarray
    save_all: bool
    gains: np.ndarray | None = None
    param_names: tuple = ()
    param_samples: dict = field(default_factory=dict)
    param_ew_samples: dict = field(default_factory=dict)
    param_means: np.ndarray | None = None

    @property
    def n_particles(self) -> int:
        return self.trajectories.shape[0]

    @property
    def n_steps(self) -> int:
        return self.trajectories.shape[1]


def _claim_observations(graph: ModelGraph, chain) -> list:
    """Assign each observation node to the latest latent time it uses."""
    latest: dict = {}
    for t, node in enumerate(chain):
        for dep in graph.dependencies(node.name, "data"):
            latest[dep.name] = t
    obs_at: list = [[] for _ in chain]
    for name, t in latest.items():
        obs_at[t].append(graph.node(name))
    claimed = set(latest)
    for node in graph.nodes_by_role("observation"):
        if node.name not in claimed:
            raise ConfigError(
                f"observation node {node.name} does not depend on the latent chain"
            )
    return [
        tuple(sorted(nodes, key=lambda n: graph.node_id(n.name))) for nodes in obs_at
    ]


def _psd_factor(C: np.ndarray) -> np.ndarray:
    """A matrix L with L L^T = C, tolerating semidefinite C."""
    try:
        return np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        w, U = np.linalg.eigh((C + C.T) / 2.0)
        return U * np.sqrt(np.clip(w, 0.0, None))


class _Transform:
    """Map one parameter between its prior support and the real line."""

    def __init__(self, node, kind: str, lo: float = -np.inf, hi: float = np.inf):
        self.name = node.name
        self.kind = kind
        self.lo = lo
        self.hi = hi

    def forward(self, raw):
        if self.kind == "log":
            return np.log(raw)
        if self.kind == "logit":
            return np.log(raw) - np.log1p(-raw)
        return np.asarray(raw, dtype=np.float64)

    def inverse(self, eta):
        if self.kind == "log":
            return np.exp(eta)
        if self.kind == "logit":
            return expit(eta)
        return np.asarray(eta, dtype=np.float64)

    def valid(self, raw):
        if self.kind != "identity":
            return np.ones_like(raw, dtype=bool)
        return (raw > self.lo) & (raw < self.hi)


def _transform_for(node, env: dict, use_transform: bool) -> _Transform:
    support = dists.support_of(node.dist)
    if support == "interval":
        lo = node.param_fns["min"](env)
        hi = node.param_fns["max"](env)
        if np.ndim(lo) or np.ndim(hi):
            raise ConfigError(
                f"node {node.name}: interval prior bounds must be fixed scalars"
            )
        return _Transform(node, "identity", float(lo), float(hi))
    if not use_transform:
        if support == "positive":
            return _Transform(node, "identity", 0.0, np.inf)
        if support == "unit":
            return _Transform(node, "identity", 0.0, 1.0)
        return _Transform(node, "identity")
    if support == "positive":
        return _Transform(node, "log")
    if support == "unit":
        return _Transform(node, "logit")
    if support == "real":
        return _Transform(node, "identity")
    raise ConfigError(f"node {node.name}: unsupported prior support {support!r}")


class _Engine:
    """Shared particle-population state for one filtering run."""

    def __init__(self, graph, latent, n_particles, seed, method, save_all, threads):
        if n_particles < 1:
            raise ConfigError("n_particles must be at least 1")
        if method not in resampling.METHODS:
            raise ConfigError(
                f"unknown resampling method {method!r}; choose from {resampling.METHODS}"
            )
        if threads < 1:
            raise ConfigError("threads must be at least 1")
        self.graph = graph
        self.chain = graph.latent_nodes(latent)
        self.T = len(self.chain)
        indices = [n.index for n in self.chain]
        if indices != list(range(1, self.T + 1)):
            raise ConfigError(
                f"latent chain {latent!r} must be indexed 1..T without gaps"
            )
        self.K = int(n_particles)
        self.method = method
        self.save_all = bool(save_all)
        self.threads = int(threads)
        self.obs_at = _claim_observations(graph, self.chain)
        ordered = [graph.nodes[i] for i in graph.order]
        self.determ = [n for n in ordered if n.kind == "deterministic"]
        self.param_nodes = [n for n in ordered if n.role == "parameter"]
        self.env = graph.base_values()
        self.particle_keys: set = set()
        self.row_keys: set = set()
        self.traj = np.empty((self.K, self.T), dtype=np.float64)
        self.rng = seed if isinstance(seed, RngState) else RngState(seed)
        self.logpi = np.full(self.K, -np.log(self.K))

        T = self.T
        self.times = np.arange(1, T + 1, dtype=np.int64)
        self.means = np.empty(T)
        self.sds = np.empty(T)
        self.ess = np.empty(T)
        self.quants = np.empty((T, len(QUANTILE_LEVELS)))
        self.resampled = np.zeros(T, dtype=bool)
        rows = T if self.save_all else 1
        self.samples = np.empty((rows, self.K))
        self.weights = np.empty((rows, self.K))
        self.ew_samples = np.empty((rows, self.K))
        self._pool = None
        self._chunks = [
            (lo, min(lo + _SCORE_CHUNK, self.K))
            for lo in range(0, self.K, _SCORE_CHUNK)
        ]

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    # population plumbing -------------------------------------------------

    def refresh(self) -> None:
        """Recompute every deterministic node from current values."""
        with np.errstate(all="ignore"):
            for node in self.determ:
                val = node.expr_fn(self.env)
                self.env[node.name] = val
                if np.ndim(val):
                    self.particle_keys.add(node.name)

    def init_fixed_params(self, overrides: dict | None = None) -> None:
        """Parameters held fixed: overrides, declared inits, else a prior draw."""
        overrides = overrides or {}
        for name in overrides:
            if self.graph.node(name).role != "parameter":
                raise ConfigError(f"node {name} is not a top-level parameter")
        for i, node in enumerate(self.param_nodes):
            if node.name in overrides:
                self.env[node.name] = float(overrides[node.name])
            elif node.init is not None:
                self.env[node.name] = float(node.init)
            else:
                params = {k: fn(self.env) for k, fn in node.param_fns.items()}
                draw = dists.sample(
                    node.dist, self.rng.stream(STREAM_INIT, i), params
                )
                self.env[node.name] = float(draw)
            self.refresh()

    def propagate(self, node, rng) -> np.ndarray:
        params = {k: fn(self.env) for k, fn in node.param_fns.items()}
        draws = dists.sample(node.dist, rng, params, size=self.K)
        return np.asarray(draws, dtype=np.float64)

    def set_latent(self, t: int, values) -> None:
        self.traj[:, t - 1] = values
        key = self.chain[t - 1].name
        self.env[key] = self.traj[:, t - 1]
        self.particle_keys.add(key)
        self.refresh()

    def reorder(self, ids: np.ndarray, upto: int) -> None:
        """Whole-row ancestry reorder of the first `upto` time columns."""
        if upto > 0:
            self.traj[:, :upto] = self.traj[ids, :upto]
        for key in self.row_keys:
            self.env[key][:] = self.env[key][ids]
        self.refresh()

    # observation scoring -------------------------------------------------

    def _score_chunk(self, nodes, lo, hi, out) -> None:
        env = {
            k: (v[lo:hi] if k in self.particle_keys else v)
            for k, v in self.env.items()
        }
        total = np.zeros(hi - lo)
        for node in nodes:
            params = {k: fn(env) for k, fn in node.param_fns.items()}
            total += dists.log_density(
                node.dist, self.env[node.name], params, strict=False
            )
        out[lo:hi] = total

    def score(self, nodes) -> np.ndarray:
        """Summed observation log densities, one value per particle."""
        out = np.zeros(self.K)
        if not nodes:
            return out
        with np.errstate(all="ignore"):
            if self.threads == 1 or len(self._chunks) == 1:
                for lo, hi in self._chunks:
                    self._score_chunk(nodes, lo, hi, out)
            else:
                if self._pool is None:
                    self._pool = ThreadPoolExecutor(max_workers=self.threads)
                futures = [
                    self._pool.submit(self._score_chunk, nodes, lo, hi, out)
                    for lo, hi in self._chunks
                ]
                for f in futures:
                    f.result()
        return out

    def normalize(self, logw, t: int):
        try:
            return resampling.normalize(logw)
        except DegenerateWeightsError as exc:
            raise DegenerateWeightsError(f"t={t}: {exc}") from None

    # summaries and containers -------------------------------------------

    def snapshot(self, t: int, values, probs) -> None:
        self.ess[t - 1] = resampling.ess(probs)
        mean = float(probs @ values)
        self.means[t - 1] = mean
        self.sds[t - 1] = float(np.sqrt(max(probs @ (values - mean) ** 2, 0.0)))
        self.quants[t - 1] = weighted_quantiles(values, probs, QUANTILE_LEVELS)

    def container_ids(self, t: int, probs) -> np.ndarray:
        rng = self.rng.stream(STREAM_CONTAINER, t)
        return resampling.resample(probs, self.K, self.method, rng)

    def store(self, t: int, values, probs, ew_values) -> None:
        if not (self.save_all or t == self.T):
            return
        row = t - 1 if self.save_all else 0
        self.samples[row] = values
        self.weights[row] = probs
        self.ew_samples[row] = ew_values


def _result(engine: _Engine, algorithm: str, probs, **extra) -> FilterResult:
    base = dict(
        algorithm=algorithm,
        times=engine.times,
        means=engine.means,
        sds=engine.sds,
        ess=engine.ess,
        quantiles=engine.quants,
        loglik=None,
        step_logliks=None,
        resampled=engine.resampled,
        samples=engine.samples,
        weights=engine.weights,
        ew_samples=engine.ew_samples,
        trajectories=engine.traj,
        final_weights=np.asarray(probs, dtype=np.float64),
        save_all=engine.save_all,
    )
    base.update(extra)
    return FilterResult(**base)


def bootstrap_filter(
    graph: ModelGraph,
    latent: str,
    *,
    n_particles: int,
    seed: int = 0,
    thresh: float = 0.8,
    method: str = "systematic",
    save_all: bool = False,
    threads: int = 1,
    fixed_params: dict | None = None,
) -> FilterResult:
    """Transition-prior particle filter with conditional resampling.

    Resamples whenever ESS/K < thresh (strictly); carries log-weights
    across skipped resampling steps.  Returns a log-likelihood estimate
    accumulated as sum_t log sum_k pi_prev_k g_t_k.
    """
    if not 0.0 <= thresh <= 1.0:
        raise ConfigError("thresh must lie in [0, 1]")
    eng = _Engine(graph, latent, n_particles, seed, method, save_all, threads)
    try:
        eng.init_fixed_params(fixed_params)
        step_logliks = np.empty(eng.T)
        loglik = 0.0
        log_k = np.log(eng.K)
        probs = None
        for t in range(1, eng.T + 1):
            node = eng.chain[t - 1]
            draws = eng.propagate(node, eng.rng.stream(STREAM_PROPAGATE, t))
            eng.set_latent(t, draws)
            logw = eng.logpi + eng.score(eng.obs_at[t - 1])
            probs, log_mean = eng.normalize(logw, t)
            incr = log_mean + log_k
            loglik += incr
            step_logliks[t - 1] = incr
            eng.snapshot(t, draws, probs)
            if resampling.should_resample(probs, thresh):
                ids = resampling.resample(
                    probs, eng.K, method, eng.rng.stream(STREAM_RESAMPLE, t)
                )
                eng.reorder(ids, t)
                eng.logpi = np.full(eng.K, -log_k)
                eng.resampled[t - 1] = True
                eng.store(t, draws, probs, eng.traj[:, t - 1].copy())
                probs = np.full(eng.K, 1.0 / eng.K)
            else:
                with np.errstate(divide="ignore"):
                    eng.logpi = np.log(probs)
                if eng.save_all or t == eng.T:
                    ids = eng.container_ids(t, probs)
                    eng.store(t, draws, probs, draws[ids])
        return _result(
            eng, "bootstrap", probs, loglik=float(loglik), step_logliks=step_logliks
        )
    finally:
        eng.close()


def auxiliary_filter(
    graph: ModelGraph,
    latent: str,
    *,
    n_particles: int,
    seed: int = 0,
    method: str = "systematic",
    lookahead: str = "mean",
    save_all: bool = False,
    threads: int = 1,
    fixed_params: dict | None = None,
) -> FilterResult:
    """Auxiliary particle filter: lookahead weights, one resampling per step.

    First-stage weights pi_prev * g(y_t | lookahead value); after
    resampling, propagation and second-stage weights g / g_hat.  The
    per-step likelihood factor is (sum w2 / K) * (sum w1).
    """
    if lookahead not in LOOKAHEADS:
        raise ConfigError(f"lookahead must be one of {LOOKAHEADS}")
    eng = _Engine(graph, latent, n_particles, seed, method, save_all, threads)
    try:
        eng.init_fixed_params(fixed_params)
        step_logliks = np.empty(eng.T)
        loglik = 0.0
        log_k = np.log(eng.K)
        probs = None
        for t in range(1, eng.T + 1):
            node = eng.chain[t - 1]
            if lookahead == "mean":
                if node.dist != "dnorm":
                    raise ConfigError(
                        f"node {node.name}: mean lookahead needs a normal "
                        "transition; use lookahead='simulate'"
                    )
                with np.errstate(all="ignore"):
                    la = np.broadcast_to(
                        np.asarray(node.param_fns["mean"](eng.env), dtype=np.float64),
                        (eng.K,),
                    ).copy()
            else:
                la = eng.propagate(node, eng.rng.stream(STREAM_LOOKAHEAD, t))
            eng.set_latent(t, la)
            log_ghat = eng.score(eng.obs_at[t - 1])
            logw1 = eng.logpi + log_ghat
            probs1, lm1 = eng.normalize(logw1, t)
            ids = resampling.resample(
                probs1, eng.K, method, eng.rng.stream(STREAM_RESAMPLE, t)
            )
            eng.reorder(ids, t - 1)
            draws = eng.propagate(node, eng.rng.stream(STREAM_PROPAGATE, t))
            eng.set_latent(t, draws)
            logg = eng.score(eng.obs_at[t - 1])
            logw2 = logg - log_ghat[ids]
            probs, lm2 = eng.normalize(logw2, t)
            incr = lm2 + lm1 + log_k  # log[(sum w2)/K] + log[sum w1]
            loglik += incr
            step_logliks[t - 1] = incr
            eng.snapshot(t, draws, probs)
            eng.resampled[t - 1] = True
            with np.errstate(divide="ignore"):
                eng.logpi = np.log(probs)
            if eng.save_all or t == eng.T:
                cids = eng.container_ids(t, probs)
                eng.store(t, draws, probs, draws[cids])
        return _result(
            eng, "auxiliary", probs, loglik=float(loglik), step_logliks=step_logliks
        )
    finally:
        eng.close()


def liu_west_filter(
    graph: ModelGraph,
    latent: str,
    params,
    *,
    n_particles: int,
    seed: int = 0,
    discount: float = 0.99,
    method: str = "systematic",
    lookahead: str = "mean",
    save_all: bool = False,
    threads: int = 1,
    transform: bool = True,
) -> FilterResult:
    """Joint state and parameter filtering with kernel shrinkage.

    Parameter particles are shrunk toward their weighted mean with
    a = (3d-1)/(2d) and perturbed with kernel variance h^2 = 1 - a^2,
    on transformed scales by default (log for positive support, logit
    for (0,1)).  With ``transform=False`` perturbation happens on the
    raw scale and draws landing outside the prior support are kept but
    given weight zero.  No likelihood estimate is produced.
    """
    a, h2 = shrinkage(discount)
    if lookahead not in LOOKAHEADS:
        raise ConfigError(f"lookahead must be one of {LOOKAHEADS}")
    if not params:
        raise ConfigError("liu_west_filter needs at least one parameter node")

    eng = _Engine(graph, latent, n_particles, seed, method, save_all, threads)
    try:
        targets = []
        for name in params:
            try:
                pnode = eng.graph.node(name)
            except KeyError:
                raise ConfigError(f"unknown parameter node {name!r}") from None
            if pnode.role != "parameter":
                raise ConfigError(f"node {name} is not a top-level parameter")
            targets.append(pnode)
        target_names = tuple(n.name for n in targets)
        d_par = len(targets)

        # per-particle parameter init: targets always from their priors,
        # untargeted parameters ride along (fixed when an init is given)
        for i, pnode in enumerate(eng.param_nodes):
            targeted = pnode.name in target_names
            if targeted or pnode.init is None:
                pparams = {k: fn(eng.env) for k, fn in pnode.param_fns.items()}
                draws = dists.sample(
                    pnode.dist, eng.rng.stream(STREAM_INIT, i), pparams, size=eng.K
                )
                eng.env[pnode.name] = np.asarray(draws, dtype=np.float64)
                eng.particle_keys.add(pnode.name)
                eng.row_keys.add(pnode.name)
            else:
                eng.env[pnode.name] = float(pnode.init)
            eng.refresh()
        transforms = [_transform_for(n, eng.env, transform) for n in targets]

        eta = np.empty((d_par, eng.K))
        for j, (pnode, tr) in enumerate(zip(targets, transforms)):
            eta[j] = tr.forward(eng.env[pnode.name])

        rows = eng.T if eng.save_all else 1
        param_samples = {n: np.empty((rows, eng.K)) for n in target_names}
        param_ew = {n: np.empty((rows, eng.K)) for n in target_names}
        param_means = np.empty((eng.T, d_par))

        probs = None
        for t in range(1, eng.T + 1):
            node = eng.chain[t - 1]
            pi = np.exp(eng.logpi)
            theta_bar = eta @ pi
            centered = eta - theta_bar[:, None]
            V = (centered * pi) @ centered.T
            m = a * eta + (1.0 - a) * theta_bar[:, None]

            for j, (pnode, tr) in enumerate(zip(targets, transforms)):
                eng.env[pnode.name] = np.asarray(tr.inverse(m[j]), dtype=np.float64)
            eng.refresh()
            if lookahead == "mean":
                if node.dist != "dnorm":
                    raise ConfigError(
                        f"node {node.name}: mean lookahead needs a normal "
                        "transition; use lookahead='simulate'"
                    )
                with np.errstate(all="ignore"):
                    la = np.broadcast_to(
                        np.asarray(node.param_fns["mean"](eng.env), dtype=np.float64),
                        (eng.K,),
                    ).copy()
            else:
                la = eng.propagate(node, eng.rng.stream(STREAM_LOOKAHEAD, t))
            eng.set_latent(t, la)
            log_ghat = eng.score(eng.obs_at[t - 1])
            probs1, _ = eng.normalize(eng.logpi + log_ghat, t)
            ids = resampling.resample(
                probs1, eng.K, method, eng.rng.stream(STREAM_RESAMPLE, t)
            )
            eng.reorder(ids, t - 1)
            eta = m[:, ids]
            if h2 > 0.0:
                L = _psd_factor(h2 * V)
                z = eng.rng.stream(STREAM_PERTURB, t).standard_normal((d_par, eng.K))
                perturbed = eta + L @ z
                raw = np.empty_like(perturbed)
                valid = np.ones(eng.K, dtype=bool)
                for j, tr in enumerate(transforms):
                    raw[j] = tr.inverse(perturbed[j])
                    valid &= tr.valid(raw[j])
                # out-of-support draws keep their pre-perturbation value
                # and are zero-weighted below
                eta = np.where(valid, perturbed, eta)
            else:
                valid = np.ones(eng.K, dtype=bool)
            for j, (pnode, tr) in enumerate(zip(targets, transforms)):
                eng.env[pnode.name] = np.asarray(tr.inverse(eta[j]), dtype=np.float64)
            eng.refresh()

            draws = eng.propagate(node, eng.rng.stream(STREAM_PROPAGATE, t))
            eng.set_latent(t, draws)
            logg = eng.score(eng.obs_at[t - 1])
            logw2 = logg - log_ghat[ids]
            logw2[~valid] = -np.inf
            probs, _ = eng.normalize(logw2, t)
            eng.snapshot(t, draws, probs)
            eng.resampled[t - 1] = True
            with np.errstate(divide="ignore"):
                eng.logpi = np.log(probs)
            for j, name in enumerate(target_names):
                param_means[t - 1, j] = float(probs @ eng.env[name])
            if eng.save_all or t == eng.T:
                row = t - 1 if eng.save_all else 0
                cids = eng.container_ids(t, probs)
                eng.store(t, draws, probs, draws[cids])
                for name in target_names:
                    param_samples[name][row] = eng.env[name]
                    param_ew[name][row] = eng.env[name][cids]

        return _result(
            eng,
            "liu_west",
            probs,
            param_names=target_names,
            param_samples=param_samples,
            param_ew_samples=param_ew,
            param_means=param_means,
        )
    finally:
        eng.close()


def ensemble_kalman_filter(
    graph: ModelGraph,
    latent: str,
    *,
    n_particles: int,
    seed: int = 0,
    save_all: bool = False,
    threads: int = 1,
) -> FilterResult:
    """Perturbed-observation ensemble filter.

    Needs normal observations with state-independent noise variance; the
    transition may be anything simulable.  The ensemble stays equally
    weighted, so no ESS, weighted quantiles, or likelihood are produced.
    """
    eng = _Engine(graph, latent, n_particles, seed, "systematic", save_all, threads)
    try:
        if eng.K < 2:
            raise ConfigError("ensemble update needs at least 2 particles")
        latent_keys = {n.name for n in eng.chain}
        obs_nodes = []
        for t, here in enumerate(eng.obs_at, start=1):
            if len(here) != 1:
                raise ConfigError(
                    f"ensemble update needs exactly one observation node per "
                    f"time step, found {len(here)} at t={t}"
                )
            obs = here[0]
            if obs.dist != "dnorm":
                raise ConfigError(
                    f"node {obs.name}: ensemble update needs normal observations"
                )
            for key in ("var", "sd", "tau"):
                if key in obs.params:
                    if expr_keys(obs.params[key]) & latent_keys:
                        raise ConfigError(
                            f"node {obs.name}: observation noise variance must "
                            "not depend on the latent state"
                        )
                    break
            obs_nodes.append(obs)

        eng.init_fixed_params()
        gains = np.empty(eng.T)
        uniform = np.full(eng.K, 1.0 / eng.K)
        for t in range(1, eng.T + 1):
            node = eng.chain[t - 1]
            obs = obs_nodes[t - 1]
            draws = eng.propagate(node, eng.rng.stream(STREAM_PROPAGATE, t))
            eng.set_latent(t, draws)
            for key in ("var", "sd", "tau"):
                if key in obs.param_fns:
                    r_t = float(
                        dists.convert_scale(obs.param_fns[key](eng.env), key, "var")
                    )
                    break
            if not (np.isfinite(r_t) and r_t > 0):
                raise NumericalError(
                    "observation noise variance is not positive", time_step=t
                )
            ytilde = np.broadcast_to(
                np.asarray(obs.param_fns["mean"](eng.env), dtype=np.float64),
                (eng.K,),
            )
            ex = draws - draws.mean()
            ey = ytilde - ytilde.mean()
            pxy = float(ex @ ey) / (eng.K - 1)
            pyy = float(ey @ ey) / (eng.K - 1) + r_t
            if not (np.isfinite(pyy) and pyy > 0):
                raise NumericalError(
                    "ensemble observation variance is not positive", time_step=t
                )
            gain = pxy / pyy
            gains[t - 1] = gain
            noise = dists.sample(
                "dnorm",
                eng.rng.stream(STREAM_OBS_NOISE, t),
                {"mean": 0.0, "var": r_t},
                size=eng.K,
            )
            y = float(eng.env[obs.name])
            updated = draws + gain * (y + noise - ytilde)
            eng.set_latent(t, updated)
            eng.snapshot(t, updated, uniform)
            eng.store(t, updated, uniform, updated)

        result = _result(eng, "ensemble_kalman", uniform, gains=gains)
        result.ess = None
        result.quantiles = None
        result.weights = None
        return result
    finally:
        eng.close()
