"""Benchmark the compiled kernels against the pure-Python fallbacks.

Runs 3D thinning and fast marching on phantom workloads with both backends
and prints a timing table plus an equality check.

    python benchmarks/bench_kernels.py [--sizes small,medium]
"""
import argparse
import time

import numpy as np

from bronco._kernels import get_backend
from bronco.phantom import random_capsule_tree

WORKLOADS = {
    "small": {"tree_seed": 0, "fmm_dims": (32, 32, 32), "stop": 20.0},
    "medium": {"tree_seed": 1, "fmm_dims": (64, 64, 64), "stop": 40.0},
}


def _time(fn, *args, repeats=3):
    best = None
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        dt = time.perf_counter() - t0
        best = dt if best is None else min(best, dt)
    return best, out


def bench(size: str):
    cfg = WORKLOADS[size]
    pure = get_backend("pure")
    try:
        compiled = get_backend("compiled")
    except ImportError:
        print("compiled backend not built; run pip install -e . first")
        return

    mask, _, _ = random_capsule_tree(cfg["tree_seed"])
    img = mask.data.astype(np.uint8)
    t_pure, out_pure = _time(pure.thin_image, img, repeats=1)
    t_comp, out_comp = _time(compiled.thin_image, img)
    same_thin = np.array_equal(out_pure, out_comp)
    print(f"[{size}] thin_image      {img.shape} ({int(img.sum())} voxels)  "
          f"pure {t_pure:8.3f}s  compiled {t_comp:8.4f}s  "
          f"speedup {t_pure / t_comp:7.1f}x  identical={same_thin}")

    rng = np.random.default_rng(0)
    speed = 0.05 + 0.95 * rng.random(cfg["fmm_dims"])
    seed = tuple(d // 2 for d in cfg["fmm_dims"])
    t_pure, (Tp, kp) = _time(pure.fast_march, speed, (1.0, 1.0, 1.0), seed, cfg["stop"], repeats=1)
    t_comp, (Tc, kc) = _time(compiled.fast_march, speed, (1.0, 1.0, 1.0), seed, cfg["stop"])
    same_fmm = np.array_equal(Tp, Tc) and np.array_equal(kp, kc)
    print(f"[{size}] fast_march      {cfg['fmm_dims']}  "
          f"pure {t_pure:8.3f}s  compiled {t_comp:8.4f}s  "
          f"speedup {t_pure / t_comp:7.1f}x  identical={same_fmm}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="small,medium",
                    help="comma list from: " + ", ".join(WORKLOADS))
    args = ap.parse_args()
    for size in args.sizes.split(","):
        bench(size.strip())
