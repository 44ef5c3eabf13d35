"""Tabular result writers: summary/sample CSVs and the run manifest.

All floats are serialized with 17 significant digits so a rerun can be
compared byte for byte.  Files use '\\n' line endings and a plain comma
separator (no field ever contains one).
"""

from __future__ import annotations

import json

import numpy as np


def fmt(x) -> str:
    """One CSV cell: round-trip-exact for floats, plain digits for ints."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(x) for x in row) + "\n")


def write_filter_summary(path, result) -> None:
    """Per-time summary table.

    Weighted filters: t, ESS, mean, 2.5%/50%/97.5% weighted quantiles.
    The ensemble filter has no weights, so its table is t, mean, sd.
    """
    if result.quantiles is None:
        write_csv(
            path,
            ("t", "mean", "sd"),
            (
                (t, result.means[i], result.sds[i])
                for i, t in enumerate(result.times)
            ),
        )
        return
    write_csv(
        path,
        ("t", "ESS", "mean", "q2.5", "q50", "q97.5"),
        (
            (
                t,
                result.ess[i],
                result.means[i],
                result.quantiles[i, 0],
                result.quantiles[i, 1],
                result.quantiles[i, 2],
            )
            for i, t in enumerate(result.times)
        ),
    )


def write_kalman_summary(path, kresult, times) -> None:
    write_csv(
        path,
        ("t", "mean", "sd", "gain"),
        (
            (t, kresult.means[i], np.sqrt(kresult.variances[i]), kresult.gains[i])
            for i, t in enumerate(times)
        ),
    )


def _stored_times(result):
    if result.save_all:
        return list(result.times)
    return [int(result.times[-1])]


def write_samples(out_dir, result) -> dict:
    """Particle dumps in long format; returns {label: filename}.

    Weighted filters get samples_w.csv (t, particle, value, weight and
    any parameter columns) plus samples_ew.csv without the weight.  The
    ensemble filter's single cloud goes to samples.csv.
    """
    times = _stored_times(result)
    pnames = list(result.param_names)
    written = {}
    if result.weights is None:
        path = out_dir / "samples.csv"
        write_csv(
            path,
            ("t", "particle", "value"),
            (
                (t, k + 1, result.samples[row, k])
                for row, t in enumerate(times)
                for k in range(result.samples.shape[1])
            ),
        )
        written["samples"] = path.name
        return written

    w_path = out_dir / "samples_w.csv"
    write_csv(
        w_path,
        ("t", "particle", "value", "weight", *pnames),
        (
            (
                t,
                k + 1,
                result.samples[row, k],
                result.weights[row, k],
                *(result.param_samples[p][row, k] for p in pnames),
            )
            for row, t in enumerate(times)
            for k in range(result.samples.shape[1])
        ),
    )
    written["samples_w"] = w_path.name

    ew_path = out_dir / "samples_ew.csv"
    write_csv(
        ew_path,
        ("t", "particle", "value", *pnames),
        (
            (
                t,
                k + 1,
                result.ew_samples[row, k],
                *(result.param_ew_samples[p][row, k] for p in pnames),
            )
            for row, t in enumerate(times)
            for k in range(result.ew_samples.shape[1])
        ),
    )
    written["samples_ew"] = ew_path.name
    return written


def write_param_histograms(out_dir, result, bins: int = 50) -> dict:
    """Weighted posterior histogram per parameter from the final cloud."""
    written = {}
    probs = result.weights[-1]
    for name in result.param_names:
        values = result.param_samples[name][-1]
        density, edges = np.histogram(values, bins=bins, weights=probs, density=True)
        path = out_dir / f"hist_{name}.csv"
        write_csv(
            path,
            ("bin_lo", "bin_hi", "density"),
            (
                (edges[i], edges[i + 1], density[i])
                for i in range(len(density))
            ),
        )
        written[f"hist_{name}"] = path.name
    return written


def write_chain(path, chain) -> None:
    write_csv(
        path,
        ("iteration", *chain.param_names, "loglik", "accepted"),
        (
            (
                (row + 1) * chain.thin,
                *chain.thetas[row],
                chain.logliks[row],
                chain.accepted[row],
            )
            for row in range(chain.n_kept)
        ),
    )


def write_trajectories(path, chain) -> None:
    n_kept, T = chain.trajectories.shape
    write_csv(
        path,
        ("iteration", "t", "value"),
        (
            ((row + 1) * chain.thin, t + 1, chain.trajectories[row, t])
            for row in range(n_kept)
            for t in range(T)
        ),
    )


def write_manifest(path, manifest: dict) -> None:
    with open(path, "w", newline="") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
