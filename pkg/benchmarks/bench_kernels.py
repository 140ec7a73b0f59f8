"""Compare the compiled kernels with the numpy fallback.

Times ``batch_cosine`` (one query against a packed database of scans) and
``match_counts`` (NFM category matching) for a few database sizes, then
prints per-call times and the speedup.

Usage:
    python benchmarks/bench_kernels.py [--sizes 50 500 5000] [--repeat 200]
"""

import argparse
import timeit

import numpy as np

from collabloc import _kernels_py

try:
    from collabloc import _kernels as compiled
except ImportError:  # extension not built
    compiled = None


def packed_db(rng, rows, vocab=400, per_row=15):
    ids, mw, offsets = [], [], [0]
    for _ in range(rows):
        row = np.sort(rng.choice(vocab, size=per_row, replace=False))
        ids.extend(row)
        mw.extend(10 ** (rng.uniform(-90, -30, size=per_row) / 10))
        offsets.append(len(ids))
    return np.array(ids, dtype=np.int64), np.array(mw), np.array(offsets, dtype=np.int64)


def bench(fn, args, repeat):
    return min(timeit.repeat(lambda: fn(*args), number=repeat, repeat=3)) / repeat


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--sizes", type=int, nargs="+", default=[50, 500, 5000])
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    if compiled is None:
        raise SystemExit("compiled kernels not built; run `pip install -e . --no-build-isolation` first")

    rng = np.random.default_rng(0)
    print(f"{'kernel':14s} {'rows':>6s} {'python us':>10s} {'cython us':>10s} {'speedup':>8s}")
    for rows in args.sizes:
        ids, mw, offsets = packed_db(rng, rows)
        q_ids = np.sort(rng.choice(400, size=15, replace=False)).astype(np.int64)
        q_mw = 10 ** (rng.uniform(-90, -30, size=15) / 10)
        cos_args = (q_ids, q_mw, ids, mw, offsets)
        np.testing.assert_allclose(compiled.batch_cosine(*cos_args), _kernels_py.batch_cosine(*cos_args), rtol=1e-12)
        train = rng.integers(0, 4, size=(rows, 4)).astype(np.int64)
        query = rng.integers(0, 4, size=4).astype(np.int64)
        for name, cargs in (("batch_cosine", cos_args), ("match_counts", (train, query))):
            py = bench(getattr(_kernels_py, name), cargs, args.repeat)
            cy = bench(getattr(compiled, name), cargs, args.repeat)
            print(f"{name:14s} {rows:6d} {py * 1e6:10.1f} {cy * 1e6:10.1f} {py / cy:7.1f}x")


if __name__ == "__main__":
    main()
