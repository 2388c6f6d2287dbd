"""Acceptance criteria, one test each. Every test prints a PASS/FAIL line,
also collected into the terminal summary by conftest."""
from __future__ import annotations

import math
import time
from pathlib import Path

import numpy as np

from coverplan.cli import load_config, run
from coverplan.metrics import coverage_stats
from coverplan.optmodel import (
    InfeasibleError,
    build_instance,
    build_overlap,
    coverage_indicators,
    default_lambda,
    linking_rows_hold,
)
from coverplan.raycast import Bvh, HitKind, SensorSpec, build_bvh, cast_candidates, cast_sensor, ray_direction
from coverplan.scenarios import CANDIDATE_MARGIN, CANDIDATE_MAX_OFFSET, t_junction
from coverplan.scene import CandidatePose, Extent, RoadPolygon, Scene, generate_candidates, generate_target_grid
from coverplan.solver import OPTIMAL, brute_force_solve, solve, verify
from coverplan.visibility import VisibilityMatrix, build_visibility_matrix, compute_cvr, min_cover_count

from conftest import ACCEPTANCE_LINES, box_mesh, tjunction_pipeline
from oracles import all_pairs_visibility, brute_cast

ROOT = Path(__file__).resolve().parents[1]


def report(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_01_ray_direction_closed_form():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for h, v in rng.uniform([-360, -90], [360, 90], (1000, 2)):
        hr, vr = math.radians(h), math.radians(v)
        want = np.array([math.sin(hr) * math.cos(vr), math.cos(hr) * math.cos(vr), math.sin(vr)])
        worst = max(worst, float(np.abs(ray_direction(h, v) - want).max()))
    exact = ray_direction(0.0, 0.0).tolist() == [0.0, 1.0, 0.0]
    dt = time.perf_counter() - t0
    report(1, "ray direction", worst <= 1e-12 and exact and dt < 1.0,
           f"max error {worst:.1e} over 1000 pairs, (0,0) exact={exact}, {dt:.2f} s")


def test_02_ground_reach_at_2_4_m():
    t0 = time.perf_counter()
    scene = Scene((), RoadPolygon([[-150, -150], [150, -150], [150, 150], [-150, 150]]), Extent([-200, -200], [200, 200]))
    cps = cast_sensor(build_bvh(scene), SensorSpec(), CandidatePose((0.0, 0.0, 2.4), 0))
    ground = cps.positions[cps.kinds == HitKind.GROUND]
    reach = float(np.hypot(ground[:, 0], ground[:, 1]).max())
    dt = time.perf_counter() - t0
    analytic = 2.4 / math.tan(math.radians(2))
    report(2, "ground reach", 66 <= reach <= 70 and dt < 5.0,
           f"max ground distance {reach:.3f} m (analytic {analytic:.3f} m), {len(ground)} ground hits, {dt:.2f} s")


def test_03_bvh_matches_brute_force():
    rng = np.random.default_rng(3)
    lib_time = oracle_time = 0.0
    worst, kinds_ok, n_tris = 0.0, True, []
    for s in range(50):
        n = 10_000 if s == 0 else int(rng.integers(1, 10_001))
        spread = float(rng.uniform(10, 100))
        centers = rng.uniform([0, 0, 0.2], [spread, spread, 5], (n, 1, 3))
        tris = centers + rng.normal(0, rng.uniform(0.3, 2.0), (n, 3, 3))
        o = rng.uniform([0, 0, 0.5], [spread, spread, 6], (1000, 3))
        d = rng.normal(size=(1000, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        t0 = time.perf_counter()
        _, t, kind = Bvh(tris).intersect(o, d, 100.0)
        t1 = time.perf_counter()
        bt, bk = brute_cast(o, d, 100.0, tris)
        oracle_time += time.perf_counter() - t1
        lib_time += t1 - t0
        kinds_ok &= bool(np.array_equal(kind, bk))
        worst = max(worst, float(np.abs(t - bt).max()))
        n_tris.append(n)
    report(3, "BVH vs brute force", kinds_ok and worst <= 1e-9 and lib_time < 60,
           f"50 scenes ({min(n_tris)}..{max(n_tris)} triangles) x 1000 rays, max |dt| {worst:.1e} m, "
           f"hit kinds equal={kinds_ok}, BVH {lib_time:.2f} s, oracle {oracle_time:.1f} s")


def random_small_scene(rng):
    w, length = rng.uniform(3, 8), rng.uniform(5, 11)
    x0, y0 = rng.uniform(8, 12, 2)
    road = RoadPolygon([[x0, y0], [x0 + length, y0], [x0 + length, y0 + w], [x0, y0 + w]])
    boxes = []
    for k in range(int(rng.integers(0, 4))):
        lo = rng.uniform([2, 2, 0], [26, 26, 0])
        hi = lo + rng.uniform([0.5, 0.5, 0.5], [4, 4, 4])
        boxes.append(box_mesh(tuple(lo), tuple(hi), f"box {k}"))
    return Scene(tuple(boxes), road, Extent([0, 0], [30, 30]))


def test_04_visibility_matches_all_pairs():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    equal, shapes = True, []
    for _ in range(20):
        scene = random_small_scene(rng)
        targets = generate_target_grid(scene, 1.0, float(rng.uniform(0.5, 1.5)))
        cands = generate_candidates(scene, 3.0, float(rng.uniform(2, 6)), 0.5)
        keep = np.sort(rng.choice(len(cands), size=min(10, len(cands)), replace=False))
        cands = [cands[i] for i in keep]
        casts = cast_candidates(build_bvh(scene), SensorSpec(), cands)
        v = build_visibility_matrix(casts, targets)
        want = all_pairs_visibility([c.hits() for c in casts], targets.points, targets.radius)
        equal &= bool(np.array_equal(v.bits, want))
        shapes.append(v.bits.shape)
    dt = time.perf_counter() - t0
    ok_sizes = all(ns <= 10 and nt <= 100 for ns, nt in shapes)
    report(4, "visibility vs all-pairs", equal and ok_sizes and dt < 30,
           f"20 scenes, N_S <= {max(s[0] for s in shapes)}, N_T <= {max(s[1] for s in shapes)}, "
           f"exact equality={equal}, {dt:.2f} s")


def random_feasible_instance(rng):
    while True:
        ns, nt = int(rng.integers(1, 13)), int(rng.integers(1, 41))
        bits = rng.random((ns, nt)) < rng.uniform(0.05, 0.5)
        pos = rng.uniform(0, 20, (ns, 3))
        ov = build_overlap(pos, float(rng.uniform(2, 8)))
        cvr = float(rng.choice([0.5, 0.8, 1.0]))
        lam = float(rng.choice([0.0, default_lambda(ov)]))
        try:
            return build_instance(VisibilityMatrix(bits), ov, cvr, lam), lam > 0
        except InfeasibleError:
            continue


def test_05_06_solver_exactness_and_linking_semantics():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    obj_eq = sel_eq = links = True
    n_auto = 0
    for _ in range(200):
        inst, auto = random_feasible_instance(rng)
        s, b = solve(inst), brute_force_solve(inst)
        obj_eq &= s.objective_value == b.objective_value and s.proof == b.proof == OPTIMAL and verify(s, inst)
        if auto:
            n_auto += 1
            sel_eq &= s.selected == b.selected
        c = coverage_indicators(inst, s.selected)
        seen = inst.visibility.bits[list(s.selected)].sum(axis=0) if s.selected else np.zeros(inst.n_t)
        links &= bool(np.array_equal(c, (seen >= 1).astype(int)))
        links &= linking_rows_hold(inst, s.selected, c) and int(c.sum()) >= min_cover_count(inst.n_t, inst.cvr)
    dt = time.perf_counter() - t0
    report(5, "solver exactness", obj_eq and sel_eq and dt < 120,
           f"200 instances ({n_auto} with auto lambda), objectives equal={obj_eq}, "
           f"auto-lambda selections equal={sel_eq}, {dt:.2f} s")
    report(6, "linking semantics", links,
           "c_k equals the coverage indicator and sum c_k >= ceil(N_T cvr) for every solved instance")


def test_07_tjunction_without_obstacles():
    rows, ok = [], True
    for name, spacing in [("A1", 4.0), ("B1", 5.0), ("C1", 6.0)]:
        t0 = time.perf_counter()
        scene = t_junction(False)
        targets = generate_target_grid(scene, 1.0, 1.0)
        cands = generate_candidates(scene, spacing, 2.4, CANDIDATE_MARGIN, CANDIDATE_MAX_OFFSET)
        v = build_visibility_matrix(cast_candidates(build_bvh(scene), SensorSpec(), cands, workers=1), targets)
        ov = build_overlap(cands, spacing)
        inst = build_instance(v, ov, 1.0, default_lambda(ov))
        p = solve(inst)
        dt = time.perf_counter() - t0
        cvr_max = compute_cvr(v).cvr
        cvr = p.covered_count / v.n_targets
        good = cvr_max == 1.0 and cvr == 1.0 and p.proof == OPTIMAL and len(p.selected) < len(cands) and dt < 600
        ok &= good
        rows.append(f"{name} {len(p.selected)}/{len(cands)} sensors, CVR {cvr:.3f}, {p.proof}, {dt:.1f} s")
    report(7, "T-junction, no obstacles, h 2.4 m, 7560 rays, 1003 targets", ok, "; ".join(rows))


def test_08_obstacles_lower_mean_coverage():
    ok, rows = True, []
    for spacing in (4.0, 5.0, 6.0):
        for h in (2.4, 4.0, 6.0):
            clear = coverage_stats(tjunction_pipeline(False, spacing, h)[2]).mean_pct
            busy = coverage_stats(tjunction_pipeline(True, spacing, h)[2]).mean_pct
            ok &= busy < clear
            rows.append(f"{spacing:g}m/{h:g}m {busy:.1f}<{clear:.1f}")
    report(8, "obstacles lower mean coverage", ok, ", ".join(rows))


def test_09_regularization_prefers_spread_out_sensors():
    t0 = time.perf_counter()
    # targets 0 and 1; candidates 0,1 are 1 m apart, candidates 2,3 are 10 m apart
    bits = np.array([[1, 0], [0, 1], [1, 0], [0, 1]], dtype=bool)
    pos = np.array([[0, 0, 3], [1, 0, 3], [10, 0, 3], [20, 0, 3]], dtype=float)
    ov = build_overlap(pos, 2.0)
    v = VisibilityMatrix(bits)
    auto = build_instance(v, ov, 1.0, default_lambda(ov))
    zero = build_instance(v, ov, 1.0, 0.0)
    pa, pz = solve(auto), solve(zero)
    ba, bz = brute_force_solve(auto), brute_force_solve(zero)
    dt = time.perf_counter() - t0
    ok = pa.selected == ba.selected == (2, 3) and pz.selected == bz.selected == (0, 1) and dt < 5
    report(9, "regularization", ok,
           f"lambda=auto picks {list(pa.selected)}, lambda=0 picks {list(pz.selected)} (tie-break), "
           f"brute force agrees, {dt:.3f} s")


def test_10_full_pipeline_is_deterministic(tmp_path):
    cfg = load_config(ROOT / "configs" / "A1.json")
    code_a, _ = run(cfg, tmp_path / "a")
    code_b, _ = run(cfg, tmp_path / "b")
    same, compared = True, 0
    for h in cfg.sensor_heights:
        for name in ("placement.json", "coverage.csv"):
            a = (tmp_path / "a" / f"h{h:g}" / name).read_bytes()
            b = (tmp_path / "b" / f"h{h:g}" / name).read_bytes()
            same &= a == b
            compared += 1
    report(10, "determinism", same and code_a == code_b == 0,
           f"config A1, {compared} placement/coverage files byte-identical={same}, exit codes {code_a}/{code_b}")
