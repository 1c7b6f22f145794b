"""Time the compiled and numpy kernel backends on realistic inputs.

    python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from supportseg import kernels
from supportseg.cluster import ClusterConfig, run_pipeline
from supportseg.corrupt import NoiseConfig, corrupt
from supportseg.scene import SceneGenConfig, generate_scene
from supportseg.targets import make_targets


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def random_boxes(rng, n, size=256):
    lt = rng.uniform(0, size, (n, 2))
    wh = rng.uniform(4, 64, (n, 2))
    return np.hstack([lt, lt + wh])


def kernel_cases(rng):
    pixels = random_boxes(rng, 200_000)
    seeds = random_boxes(rng, 24)
    nms_boxes = random_boxes(rng, 3_000)
    labels = rng.integers(0, 40, (512, 1024))
    return {
        "vote 200k px x 24 seeds": lambda k: k.vote_assign(pixels, seeds, 0.05),
        "nms 3000 boxes": lambda k: k.greedy_nms(nms_boxes, 0.5),
        "tight boxes 512x1024": lambda k: k.tight_boxes(labels, 40),
    }


def pipeline_case():
    scene = generate_scene(SceneGenConfig(height=256, width=512, n_instances=(12, 12), rng_seed=1))
    bundle = corrupt(make_targets(scene), NoiseConfig(distance_sigma=1.0, rng_seed=1))
    return lambda k: run_full(k, bundle)


def run_full(backend, bundle):
    """The whole clustering stage with every kernel routed through ``backend``."""
    saved = {n: getattr(kernels, n) for n in ("vote_assign", "greedy_nms", "tight_boxes")}
    for n in saved:
        setattr(kernels, n, getattr(backend, n))
    try:
        run_pipeline(bundle, ClusterConfig())
    finally:
        for n, f in saved.items():
            setattr(kernels, n, f)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if kernels.compiled_backend is None:
        print("compiled extension not built; timing the numpy backend only")
    backends = [("numpy", kernels.python_backend)]
    if kernels.compiled_backend is not None:
        backends.append(("cython", kernels.compiled_backend))

    work = kernel_cases(np.random.default_rng(0))
    work["pipeline 256x512"] = pipeline_case()
    print(f"{'case':<26}" + "".join(f"{name:>12}" for name, _ in backends) + f"{'speedup':>10}")
    for case, fn in work.items():
        row = []
        for _, backend in backends:
            row.append(best_of(lambda: fn(backend), args.repeat))
        speed = f"{row[0] / row[1]:>9.1f}x" if len(row) == 2 else ""
        print(f"{case:<26}" + "".join(f"{t * 1e3:>10.2f}ms" for t in row) + speed)


if __name__ == "__main__":
    main()
