"""Time the compiled and pure-Python kernels on the same inputs.

    python benchmarks/bench_kernels.py [--rays 20000] [--triangles 10000] [--repeat 3]

Ray casting uses a random triangle soup; the cover search uses the bundled
T-junction at 6 m candidate spacing. Both backends must return identical
results, which is checked before timings are reported.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from coverplan import _backend
from coverplan.optmodel import build_instance, build_overlap, default_lambda
from coverplan.raycast import Bvh, SensorSpec, build_bvh, cast_candidates
from coverplan.scenarios import t_junction
from coverplan.scene import generate_candidates, generate_target_grid
from coverplan.solver import greedy_cover
from coverplan.visibility import build_visibility_matrix


def random_soup(n, rng):
    centers = rng.uniform([0, 0, 0.5], [100, 100, 5], (n, 1, 3))
    return centers + rng.normal(0, 1.0, (n, 3, 3))


def best_of(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_cast(args, backends):
    rng = np.random.default_rng(0)
    bvh = Bvh(random_soup(args.triangles, rng))
    origins = rng.uniform([0, 0, 1], [100, 100, 6], (args.rays, 3))
    dirs = rng.normal(size=(args.rays, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    results = {}
    for name in backends:
        t, (pos, _, kind) = best_of(lambda: bvh.intersect(origins, dirs, 100.0, backend=name), args.repeat)
        results[name] = (t, pos, kind)
        print(f"cast_rays     {name:7s} {args.rays} rays x {args.triangles} tris: {t * 1e3:9.1f} ms")
    if len(results) == 2:
        (_, pa, ka), (_, pb, kb) = results.values()
        assert np.array_equal(ka, kb) and np.array_equal(pa, pb), "backends disagree on ray hits"
    return results


def bench_search(args, backends):
    scene = t_junction(False)
    targets = generate_target_grid(scene, 1.0, 1.0)
    cands = generate_candidates(scene, args.spacing, args.height, 0.5, 5.0)
    v = build_visibility_matrix(cast_candidates(build_bvh(scene), SensorSpec(), cands), targets)
    ov = build_overlap(cands, args.spacing)
    inst = build_instance(v, ov, 1.0, default_lambda(ov))
    seed = greedy_cover(inst)
    results = {}
    for name in backends:
        fn = _backend.kernels(name, "cover_search")
        t, out = best_of(lambda: fn(v.bits, inst.degree, inst.lam, inst.min_cover_count,
                                    seed.objective_value, seed.selected), args.repeat)
        results[name] = (t, out)
        print(f"cover_search  {name:7s} {len(cands)} candidates, {out[2]} nodes: {t * 1e3:9.1f} ms")
    if len(results) == 2:
        (_, a), (_, b) = results.values()
        assert a == b, "backends disagree on the cover search"
    return results


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rays", type=int, default=20000)
    ap.add_argument("--triangles", type=int, default=10000)
    ap.add_argument("--spacing", type=float, default=6.0)
    ap.add_argument("--height", type=float, default=2.4)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    backends = ["cython", "python"] if _backend.BACKEND == "cython" else ["python"]
    if len(backends) == 1:
        print("compiled kernels unavailable; timing the Python fallback only")
    cast = bench_cast(args, backends)
    search = bench_search(args, backends)
    if len(backends) == 2:
        print(f"speedup: cast_rays x{cast['python'][0] / cast['cython'][0]:.0f}, "
              f"cover_search x{search['python'][0] / search['cython'][0]:.0f}")


if __name__ == "__main__":
    main()
