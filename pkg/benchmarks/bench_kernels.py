"""Time the numba kernels against the numpy fallback on the same inputs.

    python3 benchmarks/bench_kernels.py [--points 120000] [--repeat 5]

Each kernel is called once untimed first so compilation is excluded.
"""
import argparse
import time

import numpy as np

from sageicp.kernels import numba_backend, numpy_backend, pack_keys, voxel_coords
from sageicp.taxonomy import DEFAULT_TAXONOMY
from sageicp.voxel_map import AdaptiveVoxelMap

LABELS = np.array([0, 10, 40, 44, 48, 50, 70, 71, 80, 81])


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times) * 1e3


def inputs(n_points, seed=0):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-40, 40, size=(n_points, 3))
    pts[:, 2] *= 0.1
    labs = rng.choice(LABELS, n_points).astype(np.int32)
    m = AdaptiveVoxelMap(voxel_size=1.0)
    m.add_points(pts, labs)
    queries = np.ascontiguousarray(pts[: n_points // 5] + rng.normal(scale=0.1, size=(n_points // 5, 3)))
    qlabs = np.ascontiguousarray(labs[: n_points // 5].astype(np.int64))
    return rng, pts, labs, m, queries, qlabs


def cases(backend, n_points):
    rng, pts, labs, m, queries, qlabs = inputs(n_points)
    nn_args = (queries, qlabs, *m.kernel_args(), m.voxel_size, 0.4)
    targets = queries + rng.normal(scale=0.05, size=queries.shape)

    def insert():
        fresh = AdaptiveVoxelMap(voxel_size=1.0)
        rows = fresh._rows_for(pack_keys(voxel_coords(pts, 1.0)))
        roles = np.ascontiguousarray(DEFAULT_TAXONOMY.role_table[labs])
        backend.insert_points(rows, roles, labs, np.ascontiguousarray(pts), fresh._points, fresh._labels,
                              fresh._counts, fresh.n1, fresh.n2, fresh.adaptive)

    return {
        f"semantic_nn ({len(queries)} queries)": lambda: backend.semantic_nn(*nn_args),
        f"accumulate_system ({len(queries)} pairs)": lambda: backend.accumulate_system(queries, targets, 0.5),
        f"insert_points ({n_points} points)": insert,
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=120_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = [("numpy", numpy_backend)]
    if numba_backend is not None:
        backends.insert(0, ("numba", numba_backend))
    results = {name: {k: best_of(fn, args.repeat) for k, fn in cases(b, args.points).items()}
               for name, b in backends}
    kernels = list(next(iter(results.values())))
    print(f"{'kernel':<38}" + "".join(f"{name + ' ms':>12}" for name, _ in backends) + f"{'speedup':>10}")
    for k in kernels:
        row = [results[name][k] for name, _ in backends]
        speed = f"{row[-1] / row[0]:9.1f}x" if len(row) > 1 else ""
        print(f"{k:<38}" + "".join(f"{v:12.2f}" for v in row) + speed)


if __name__ == "__main__":
    main()
