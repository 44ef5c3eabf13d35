"""Batch command line front end.

Three subcommands: ``run`` executes one filtering pass (or the exact
recursion for linear-Gaussian models), ``pmmh`` runs the parameter
sampler, and ``rerun`` replays a saved run.json manifest.  Every run
writes its manifest next to its outputs, and a replayed manifest
reproduces output files byte for byte.

Exit codes: 0 success, 2 configuration or compilation problems, 3
numerical failure during a run.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import filters, kalman, output
from .errors import (
    CompileError,
    ConfigError,
    ContractViolationError,
    DegenerateWeightsError,
    NumericalError,
    ParameterDomainError,
    ParseError,
)
from .graph import compile_model
from .pmmh import INNER_FILTERS, PmmhConfig, pmmh_run
from .resampling import METHODS

FILTER_CHOICES = ("bootstrap", "auxiliary", "liu_west", "enkf", "kalman")

_FILTER_KEYS = (
    "model", "data", "constants", "inits", "latent", "filter", "particles",
    "thresh", "method", "lookahead", "discount", "target", "raw_scale",
    "save_all", "threads", "seed",
)
_PMMH_KEYS = (
    "model", "data", "constants", "inits", "latent", "target", "iterations",
    "thin", "burn_in", "prop_cov", "adaptive", "pf_resample", "inner",
    "inner_particles", "thresh", "method", "lookahead", "raw_scale",
    "save_trajectories", "threads", "seed",
)


def load_data_csv(path) -> dict:
    """Header row names the variables; row t is time t; empty cell = NaN."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [name.strip() for name in next(reader)]
        except StopIteration:
            raise ConfigError(f"data file {path} is empty") from None
        cols: list = [[] for _ in header]
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ConfigError(
                    f"data file {path} line {lineno}: expected "
                    f"{len(header)} cells, found {len(row)}"
                )
            for j, cell in enumerate(row):
                cell = cell.strip()
                cols[j].append(float(cell) if cell else float("nan"))
    return {
        name: np.asarray(col, dtype=np.float64) for name, col in zip(header, cols)
    }


def load_json_map(path) -> dict:
    data = output.read_manifest(path)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object of name -> number")
    return data


def _targets(raw) -> list:
    if raw is None:
        return []
    if isinstance(raw, str):
        raw = [raw]
    names = []
    for item in raw:
        names.extend(s.strip() for s in str(item).split(",") if s.strip())
    return names


def _parse_prop_cov(value):
    """Scalar scale, inline JSON matrix, or a path to a JSON matrix file."""
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, list):
        return np.asarray(value, dtype=np.float64)
    text = str(value)
    try:
        return float(text)
    except ValueError:
        pass
    try:
        matrix = output.read_manifest(text)
    except FileNotFoundError:
        raise ConfigError(
            f"--prop-cov {text!r} is neither a number nor a readable JSON file"
        ) from None
    return np.asarray(matrix, dtype=np.float64)


def _build_graph(opts):
    model_path = opts.get("model")
    if not model_path:
        raise ConfigError("--model is required")
    with open(model_path) as fh:
        source = fh.read()
    constants = load_json_map(opts["constants"]) if opts.get("constants") else {}
    inits = load_json_map(opts["inits"]) if opts.get("inits") else {}
    data = load_data_csv(opts["data"]) if opts.get("data") else {}
    latent = opts.get("latent")
    if not latent:
        raise ConfigError("--latent is required")
    return compile_model(
        source, constants=constants, data=data, inits=inits, latent=latent
    )


def _manifest(command, opts, keys, outputs, **extra) -> dict:
    config = {}
    for key in keys:
        value = opts.get(key)
        if isinstance(value, np.ndarray):
            value = value.tolist()
        config[key] = value
    from . import __version__

    manifest = {
        "tool": "smckit",
        "version": __version__,
        "command": command,
        "config": config,
        "outputs": outputs,
    }
    manifest.update(extra)
    return manifest


def cmd_run(opts) -> int:
    graph = _build_graph(opts)
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    alg = opts["filter"]
    latent = opts["latent"]
    outputs = {"filter_summary": "filter_summary.csv"}
    loglik = None

    if alg == "kalman":
        ssm, report = kalman.extract_gaussian(graph, latent)
        if ssm is None:
            raise ConfigError(f"model is not linear-Gaussian: {report}")
        structure, _ = kalman._gaussian_structure(graph, latent)
        _, observations = structure
        y = np.array([o.observed for o in observations], dtype=np.float64)
        res = kalman.kalman_filter(ssm, y)
        output.write_kalman_summary(
            out / "filter_summary.csv", res, range(1, len(y) + 1)
        )
        loglik = res.loglik
    else:
        if opts.get("particles") is None:
            raise ConfigError("--particles is required for particle filters")
        common = dict(
            n_particles=int(opts["particles"]),
            seed=int(opts.get("seed") or 0),
            save_all=bool(opts.get("save_all")),
            threads=int(opts.get("threads") or 1),
        )
        method = opts.get("method") or "systematic"
        lookahead = opts.get("lookahead") or "mean"
        if alg == "bootstrap":
            res = filters.bootstrap_filter(
                graph,
                latent,
                thresh=float(opts.get("thresh", 0.8)),
                method=method,
                **common,
            )
        elif alg == "auxiliary":
            res = filters.auxiliary_filter(
                graph, latent, method=method, lookahead=lookahead, **common
            )
        elif alg == "liu_west":
            targets = _targets(opts.get("target"))
            if not targets:
                raise ConfigError("--filter liu_west needs --target parameters")
            res = filters.liu_west_filter(
                graph,
                latent,
                targets,
                discount=float(opts.get("discount", 0.99)),
                method=method,
                lookahead=lookahead,
                transform=not opts.get("raw_scale"),
                **common,
            )
        elif alg == "enkf":
            res = filters.ensemble_kalman_filter(graph, latent, **common)
        else:
            raise ConfigError(f"unknown filter {alg!r}")
        output.write_filter_summary(out / "filter_summary.csv", res)
        if common["save_all"]:
            outputs.update(output.write_samples(out, res))
        if alg == "liu_west":
            outputs.update(output.write_param_histograms(out, res))
        loglik = res.loglik

    manifest = _manifest("run", opts, _FILTER_KEYS, outputs, loglik=loglik)
    output.write_manifest(out / "run.json", manifest)
    return 0


def cmd_pmmh(opts) -> int:
    graph = _build_graph(opts)
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    targets = _targets(opts.get("target"))
    if not targets:
        raise ConfigError("--target is required")
    prop_cov = _parse_prop_cov(opts.get("prop_cov", 0.1))
    config = PmmhConfig(
        targets=tuple(targets),
        iterations=int(opts["iterations"]),
        prop_cov=prop_cov,
        thin=int(opts.get("thin") or 1),
        burn_in=int(opts.get("burn_in") or 0),
        adaptive=bool(opts.get("adaptive")),
        pf_resample=bool(opts.get("pf_resample")),
        inner=opts.get("inner") or "bootstrap",
        n_particles=int(opts.get("inner_particles") or 1000),
        inner_thresh=float(opts.get("thresh", 0.8)),
        inner_method=opts.get("method") or "systematic",
        inner_lookahead=opts.get("lookahead") or "mean",
        transform=not opts.get("raw_scale"),
        threads=int(opts.get("threads") or 1),
        save_trajectories=bool(opts.get("save_trajectories")),
    )
    chain = pmmh_run(graph, opts["latent"], config, seed=int(opts.get("seed") or 0))

    outputs = {"chain": "chain.csv"}
    output.write_chain(out / "chain.csv", chain)
    if chain.trajectories is not None:
        output.write_trajectories(out / "trajectories.csv", chain)
        outputs["trajectories"] = "trajectories.csv"

    opts = dict(opts)
    opts["prop_cov"] = prop_cov
    manifest = _manifest(
        "pmmh",
        opts,
        _PMMH_KEYS,
        outputs,
        acceptance_rate=chain.acceptance_rate,
    )
    output.write_manifest(out / "run.json", manifest)
    return 0


def cmd_rerun(manifest_path, out_override=None) -> int:
    manifest = output.read_manifest(manifest_path)
    command = manifest.get("command")
    opts = dict(manifest.get("config") or {})
    opts["out"] = out_override or str(Path(manifest_path).parent)
    if command == "run":
        return cmd_run(opts)
    if command == "pmmh":
        return cmd_pmmh(opts)
    raise ConfigError(f"manifest command {command!r} is not replayable")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smckit",
        description="Sequential Monte Carlo filtering and parameter sampling "
        "for declarative state-space models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--model", required=True, help="model file")
        p.add_argument("--data", help="observations CSV (header = variable names)")
        p.add_argument("--constants", help="JSON map of constants")
        p.add_argument("--inits", help="JSON map of initial values")
        p.add_argument("--latent", required=True, help="latent chain variable")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out", required=True, help="output directory")

    run = sub.add_parser("run", help="run one filter over a model")
    add_common(run)
    run.add_argument("--filter", required=True, choices=FILTER_CHOICES)
    run.add_argument("--particles", type=int)
    run.add_argument("--thresh", type=float, default=0.8,
                     help="resampling threshold tau (bootstrap)")
    run.add_argument("--method", choices=METHODS, default="systematic")
    run.add_argument("--lookahead", choices=filters.LOOKAHEADS, default="mean")
    run.add_argument("--discount", type=float, default=0.99,
                     help="Liu-West discount d")
    run.add_argument("--target", action="append",
                     help="parameter nodes (Liu-West); repeat or comma-separate")
    run.add_argument("--raw-scale", action="store_true",
                     help="perturb parameters on the raw scale")
    run.add_argument("--save-all", action="store_true",
                     help="store per-time clouds and write sample dumps")

    pm = sub.add_parser("pmmh", help="particle marginal Metropolis-Hastings")
    add_common(pm)
    pm.add_argument("--target", action="append", required=True,
                    help="target parameter nodes; repeat or comma-separate")
    pm.add_argument("--iterations", type=int, required=True)
    pm.add_argument("--thin", type=int, default=1)
    pm.add_argument("--burn-in", type=int, default=0)
    pm.add_argument("--prop-cov", default="0.1",
                    help="proposal scale or JSON matrix file")
    pm.add_argument("--adaptive", action="store_true")
    pm.add_argument("--pf-resample", action="store_true")
    pm.add_argument("--inner", choices=INNER_FILTERS[:3], default="bootstrap")
    pm.add_argument("--inner-particles", type=int, default=1000)
    pm.add_argument("--thresh", type=float, default=0.8)
    pm.add_argument("--method", choices=METHODS, default="systematic")
    pm.add_argument("--lookahead", choices=filters.LOOKAHEADS, default="mean")
    pm.add_argument("--raw-scale", action="store_true")
    pm.add_argument("--save-trajectories", action="store_true")

    rr = sub.add_parser("rerun", help="replay a saved run.json manifest")
    rr.add_argument("manifest")
    rr.add_argument("--out", help="output directory (default: manifest's)")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(vars(args))
        if args.command == "pmmh":
            return cmd_pmmh(vars(args))
        return cmd_rerun(args.manifest, args.out)
    except (NumericalError, DegenerateWeightsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (
        ConfigError,
        CompileError,
        ParseError,
        ParameterDomainError,
        ContractViolationError,
        KeyError,
        ValueError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
