"""Time the numba kernels against their numpy counterparts.

    python benchmarks/bench_kernels.py [--n 600] [--m 400] [--d 5] [--repeat 5]

Each pair is first checked for identical output, then timed (best of
``repeat``; the numba functions are called once beforehand so compilation is
not counted).
"""

import argparse
import time

import numpy as np

from mutualknn import _kernels as K


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--n", type=int, default=600, help="training points")
    ap.add_argument("--m", type=int, default=400, help="query points")
    ap.add_argument("--d", type=int, default=5)
    ap.add_argument("--classes", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if not K.HAVE_NUMBA:
        raise SystemExit("numba is not available (or MUTUALKNN_DISABLE_NUMBA is set)")

    rng = np.random.default_rng(args.seed)
    X = rng.normal(size=(args.n, args.d))
    Q = rng.normal(size=(args.m, args.d))
    labels0 = rng.integers(0, args.classes, size=args.n)

    D = K.pairwise_distances_numpy(X, X)
    np.fill_diagonal(D, np.inf)
    sorted_rows = np.ascontiguousarray(np.sort(D, axis=1)[:, : args.n - 1])
    DQ = K.pairwise_distances_numpy(Q, X)
    ranks = K.forward_ranks_numpy(DQ)
    active = ranks < 7
    tally = active.astype(float) @ np.eye(args.classes)[labels0]

    cases = [
        ("pairwise_distances", K._pairwise_distances_nb, K.pairwise_distances_numpy, (Q, X)),
        ("forward_ranks", K._forward_ranks_nb, K.forward_ranks_numpy, (DQ,)),
        ("reverse_counts", K._reverse_counts_nb, K.reverse_counts_numpy, (sorted_rows, DQ)),
        ("resolve_votes", K._resolve_votes_nb, K.resolve_votes_numpy, (tally, active, labels0, ranks)),
    ]
    print(f"n={args.n} m={args.m} d={args.d}  best of {args.repeat}")
    print(f"{'kernel':<20}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}  same")
    for name, nb, ref, a in cases:
        same = np.array_equal(nb(*a), ref(*a))
        t_nb = best_of(nb, a, args.repeat)
        t_np = best_of(ref, a, args.repeat)
        print(f"{name:<20}{1e3 * t_nb:>10.3f}{1e3 * t_np:>10.3f}{t_np / t_nb:>9.1f}  {same}")


if __name__ == "__main__":
    main()
