"""Time the compiled kernels against the pure-numpy fallback.

Both backends are imported side by side, checked for bit-identical
output on the benchmark inputs, and timed per call:

    python3 benchmarks/bench_kernels.py --particles 100000 --repeat 200
"""

import argparse
import timeit

import numpy as np

from smckit import _kernels_py as pure

try:
    from smckit import _kernels as compiled
except ImportError:
    compiled = None


def make_inputs(n: int, rng: np.random.Generator) -> dict:
    logw = rng.normal(-1.0, 2.0, n)
    probs = np.exp(logw - logw.max())
    probs /= probs.sum()
    return {
        "logw": logw,
        "probs": probs,
        "values": rng.normal(size=n),
        "qs": np.array([0.025, 0.5, 0.975]),
        "u0": float(rng.random()),
        "uniforms": np.sort(rng.random(n)),
    }


def cases(n: int, d: dict) -> list:
    return [
        ("normalize_logw", lambda m: m.normalize_logw(d["logw"])),
        ("ess", lambda m: m.ess(d["probs"])),
        ("systematic_ids", lambda m: m.systematic_ids(d["probs"], n, d["u0"])),
        ("multinomial_ids", lambda m: m.multinomial_ids(d["probs"], d["uniforms"])),
        (
            "weighted_quantiles",
            lambda m: m.weighted_quantiles(d["values"], d["probs"], d["qs"]),
        ),
    ]


def check_parity(n: int, d: dict) -> None:
    for name, call in cases(n, d):
        a, b = call(pure), call(compiled)
        if name == "normalize_logw":
            assert np.array_equal(a[0], b[0]) and a[1] == b[1], name
        else:
            assert np.array_equal(np.asarray(a), np.asarray(b)), name


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--particles", type=int, default=100000)
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    n = args.particles
    d = make_inputs(n, np.random.default_rng(args.seed))

    if compiled is None:
        print("compiled backend not importable; timing the fallback only")
    else:
        check_parity(n, d)
        print(f"parity check passed at K={n}")

    print(f"\n{'kernel':<20}{'pure (us)':>12}{'compiled (us)':>15}{'speedup':>9}")
    for name, call in cases(n, d):
        t_pure = timeit.timeit(lambda: call(pure), number=args.repeat)
        row = f"{name:<20}{1e6 * t_pure / args.repeat:>12.1f}"
        if compiled is not None:
            t_comp = timeit.timeit(lambda: call(compiled), number=args.repeat)
            row += f"{1e6 * t_comp / args.repeat:>15.1f}{t_pure / t_comp:>9.2f}"
        print(row)


if __name__ == "__main__":
    main()
