"""Command-line driver: scene -> ray casting -> visibility -> solve -> metrics.

    coverplan run --config cfg.json [--out DIR]
    coverplan sweep --configs a.json b.json ... [--out sweep.csv]
    coverplan verify --placement placement.json --matrix visibility.bin

Exit codes are listed in ``EXIT_*`` below. ``COVERPLAN_THREADS`` caps the
ray-casting worker pool.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _backend
from .metrics import before_after_report, write_coverage_csv, write_summary_json
from .optmodel import InfeasibleError, build_instance, build_overlap, default_lambda
from .raycast import SensorSpec, build_bvh, cast_candidates, worker_count
from .scenarios import builtin_scene_path
from .scene import EmptyGridError, Scene, SceneError, candidate_positions, generate_candidates, generate_target_grid, load_scene
from .solver import INFEASIBLE, NONE, Placement, solve
from .visibility import (
    VisibilityMatrix,
    build_visibility_matrix,
    compute_cvr,
    load_matrix_bin,
    save_matrix_bin,
    save_matrix_csv,
)

log = logging.getLogger("coverplan")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SCENE = 3
EXIT_INFEASIBLE = 4
EXIT_SOLVER_CAP = 5
EXIT_VERIFY_FAILED = 6

# bump when anything that feeds the visibility matrix changes meaning
CACHE_VERSION = 1


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config


def _number(value, name: str, *, positive: bool = False, allow_zero: bool = True) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{name} must be a finite number, got {value!r}")
    if positive and (value < 0 or (value == 0 and not allow_zero)):
        raise ConfigError(f"{name} must be {'positive' if not allow_zero else 'non-negative'}, got {value!r}")
    return float(value)


def _section(data: dict, key: str, allowed: set[str]) -> dict:
    sec = data.get(key, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"{key} must be an object")
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {key}: {', '.join(sorted(unknown))}")
    return sec


@dataclass(frozen=True)
class RunConfig:
    scene_path: str  # file path or "builtin:<name>"
    sensor: SensorSpec
    sensor_heights: tuple[float, ...]
    candidate_spacing: float
    candidate_margin: float = 0.5
    candidate_max_offset: float | None = None
    target_spacing: float = 1.0
    target_radius: float = 1.0
    cvr: float | str = 1.0  # fraction or "max"
    lam: float | str = "auto"
    L: float | str = "auto"
    output_dir: str = "out"
    node_limit: int | None = None
    time_limit: float | None = None
    name: str = field(default="run", compare=False)

    KEYS = frozenset({"scene", "sensor", "sensor_heights", "candidates", "targets", "cvr", "lambda", "L", "output_dir", "solver", "name"})

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None, name: str = "run") -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - cls.KEYS
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        if "scene" not in data or not isinstance(data["scene"], str):
            raise ConfigError("scene must be a path string or builtin:<name>")
        scene = data["scene"]
        if not scene.startswith("builtin:") and base_dir is not None and not Path(scene).is_absolute():
            scene = str(base_dir / scene)

        sensor_sec = _section(data, "sensor", set(SensorSpec.__dataclass_fields__))
        for k, v in sensor_sec.items():
            _number(v, f"sensor.{k}")
        try:
            sensor = SensorSpec(**{k: float(v) for k, v in sensor_sec.items()})
        except ValueError as exc:
            raise ConfigError(f"sensor: {exc}") from exc

        heights = data.get("sensor_heights")
        if not isinstance(heights, list) or not heights:
            raise ConfigError("sensor_heights must be a non-empty list")
        heights = tuple(_number(h, "sensor_heights[]", positive=True, allow_zero=False) for h in heights)

        cand = _section(data, "candidates", {"spacing", "margin", "max_offset"})
        if "spacing" not in cand:
            raise ConfigError("candidates.spacing is required")
        spacing = _number(cand["spacing"], "candidates.spacing", positive=True, allow_zero=False)
        margin = _number(cand.get("margin", 0.5), "candidates.margin", positive=True)
        max_offset = cand.get("max_offset")
        if max_offset is not None:
            max_offset = _number(max_offset, "candidates.max_offset", positive=True)
            if max_offset < margin:
                raise ConfigError("candidates.max_offset must be at least candidates.margin")

        tg = _section(data, "targets", {"spacing", "radius"})
        t_spacing = _number(tg.get("spacing", 1.0), "targets.spacing", positive=True, allow_zero=False)
        t_radius = _number(tg.get("radius", 1.0), "targets.radius", positive=True, allow_zero=False)

        cvr = data.get("cvr", 1.0)
        if cvr != "max":
            cvr = _number(cvr, "cvr")
            if not 0.0 <= cvr <= 1.0:
                raise ConfigError(f"cvr must lie in [0, 1] or be \"max\", got {cvr!r}")
        lam = data.get("lambda", "auto")
        if lam != "auto":
            lam = _number(lam, "lambda", positive=True)
        L = data.get("L", "auto")
        if L != "auto":
            L = _number(L, "L", positive=True)

        solver = _section(data, "solver", {"node_limit", "time_limit"})
        node_limit = solver.get("node_limit")
        if node_limit is not None and (isinstance(node_limit, bool) or not isinstance(node_limit, int) or node_limit < 0):
            raise ConfigError("solver.node_limit must be a non-negative integer")
        time_limit = solver.get("time_limit")
        if time_limit is not None:
            time_limit = _number(time_limit, "solver.time_limit", positive=True)

        out = data.get("output_dir", f"out/{name}")
        if not isinstance(out, str) or not out:
            raise ConfigError("output_dir must be a non-empty string")
        return cls(
            scene, sensor, heights, spacing, margin, max_offset, t_spacing, t_radius,
            cvr, lam, L, out, node_limit, time_limit, str(data.get("name", name)),
        )


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"{path}: no such file") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        return RunConfig.from_dict(data, base_dir=path.parent, name=path.stem)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def resolve_scene(cfg: RunConfig) -> Scene:
    if cfg.scene_path.startswith("builtin:"):
        name = cfg.scene_path.split(":", 1)[1]
        path = builtin_scene_path(name)
        if not path.exists():
            raise SceneError(f"unknown builtin scene {name!r}")
        return load_scene(path)
    return load_scene(cfg.scene_path)


# ---------------------------------------------------------------- pipeline


@dataclass
class HeightResult:
    height: float
    status: int = EXIT_OK
    n_candidates: int = 0
    n_targets: int = 0
    cvr_max: float = float("nan")
    cvr_requested: float = float("nan")
    placement: Placement | None = None
    summary: dict = field(default_factory=dict)
    error: str = ""
    timings: dict = field(default_factory=dict)


def _height_dir(out: Path, height: float) -> Path:
    return out / f"h{height:g}"


def cache_key(scene: Scene, cfg: RunConfig, height: float) -> str:
    payload = {
        "version": CACHE_VERSION,
        "scene": scene.to_dict(),
        "sensor": cfg.sensor.to_dict(),
        "height": height,
        "candidates": [cfg.candidate_spacing, cfg.candidate_margin, cfg.candidate_max_offset],
        "targets": [cfg.target_spacing, cfg.target_radius],
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def _visibility(scene, cfg, height, candidates, targets, bvh, cache_dir: Path, timings: dict) -> VisibilityMatrix:
    path = cache_dir / f"{cache_key(scene, cfg, height)}.bin"
    if path.exists():
        try:
            v = load_matrix_bin(path)
        except ValueError:
            v = None
        if v is not None and v.bits.shape == (len(candidates), len(targets)):
            timings["cache_hit"] = True
            return v
    t0 = time.perf_counter()
    casts = cast_candidates(bvh, cfg.sensor, candidates)
    t1 = time.perf_counter()
    v = build_visibility_matrix(casts, targets)
    timings.update(cast=t1 - t0, visibility=time.perf_counter() - t1, cache_hit=False)
    cache_dir.mkdir(parents=True, exist_ok=True)
    save_matrix_bin(v, path)
    return v


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def run_height(cfg: RunConfig, scene: Scene, bvh, targets, height: float, out: Path) -> HeightResult:
    res = HeightResult(height)
    hdir = _height_dir(out, height)
    hdir.mkdir(parents=True, exist_ok=True)
    candidates = generate_candidates(scene, cfg.candidate_spacing, height, cfg.candidate_margin, cfg.candidate_max_offset)
    res.n_candidates, res.n_targets = len(candidates), len(targets)
    v = _visibility(scene, cfg, height, candidates, targets, bvh, out / "cache", res.timings)
    save_matrix_bin(v, hdir / "visibility.bin")
    save_matrix_csv(v, hdir / "visibility.csv")

    reach = compute_cvr(v)
    res.cvr_max = reach.cvr
    res.cvr_requested = reach.cvr if cfg.cvr == "max" else float(cfg.cvr)
    L = cfg.candidate_spacing if cfg.L == "auto" else float(cfg.L)
    overlap = build_overlap(candidates, L)
    lam = default_lambda(overlap) if cfg.lam == "auto" else float(cfg.lam)
    try:
        instance = build_instance(v, overlap, res.cvr_requested, lam)
    except InfeasibleError as exc:
        res.status, res.error = EXIT_INFEASIBLE, str(exc)
        _write_json(hdir / "infeasible.json", {
            "requested_cvr": res.cvr_requested,
            "max_cvr": reach.cvr,
            "uncovered_target_indices": exc.uncovered,
            "uncovered_targets": [[float(x), float(y)] for x, y, _ in targets.points[exc.uncovered]],
        })
        return res

    t0 = time.perf_counter()
    placement = solve(instance, node_limit=cfg.node_limit, time_limit=cfg.time_limit)
    res.timings.update(solve=time.perf_counter() - t0, nodes=placement.nodes_explored, backend=_backend.BACKEND)
    res.placement = placement
    if placement.proof == INFEASIBLE:  # pragma: no cover - build_instance already checked
        res.status = EXIT_INFEASIBLE
        return res
    if placement.proof == NONE:
        res.status, res.error = EXIT_SOLVER_CAP, "solver budget exhausted before proving optimality"

    report = before_after_report(v, placement)
    positions = candidate_positions(candidates)
    _write_json(hdir / "placement.json", {
        "height": height,
        "selected_indices": list(placement.selected),
        "positions": positions[list(placement.selected)].tolist(),
        "objective": placement.objective_value,
        "covered_count": placement.covered_count,
        "n_candidates": len(candidates),
        "n_targets": len(targets),
        "cvr_requested": res.cvr_requested,
        "cvr_achieved": placement.covered_count / len(targets),
        "min_cover_count": instance.min_cover_count,
        "lambda": lam,
        "L": L,
        "degree": [int(d) for d in instance.degree],
        "proof": placement.proof,
        # runtime and backend stay in run_log.json so this file is reproducible
        "solver_stats": {"nodes": placement.nodes_explored, "greedy_objective": placement.stats.get("greedy_objective")},
    })
    write_coverage_csv(report, targets, hdir / "coverage.csv")
    write_summary_json(report, hdir / "summary.json", height=height, proof=placement.proof)
    export_visuals(scene, targets, placement, report.after, hdir, candidates=positions)
    res.summary = report.summary()
    return res


def run(cfg: RunConfig, out: str | Path | None = None) -> tuple[int, list[HeightResult]]:
    """Run every height; return the exit status and per-height results."""
    out = Path(out if out is not None else cfg.output_dir)
    scene = resolve_scene(cfg)
    targets = generate_target_grid(scene, cfg.target_spacing, cfg.target_radius)
    bvh = build_bvh(scene)
    out.mkdir(parents=True, exist_ok=True)
    results = []
    for h in cfg.sensor_heights:
        r = run_height(cfg, scene, bvh, targets, h, out)
        if r.error:
            log.warning("height %g: %s", h, r.error)
        results.append(r)
    _write_json(out / "run_log.json", {
        "workers": worker_count(),
        "backend": _backend.BACKEND,
        "heights": [{"height": r.height, "status": r.status, **r.timings} for r in results],
    })
    return _overall(r.status for r in results), results


def _overall(codes) -> int:
    codes = set(codes)
    for c in (EXIT_CONFIG, EXIT_SCENE, EXIT_INFEASIBLE, EXIT_SOLVER_CAP):
        if c in codes:
            return c
    return EXIT_OK


# ---------------------------------------------------------------- visuals


def _ply(path: Path, xyz: np.ndarray, rgb: np.ndarray) -> None:
    lines = [
        "ply", "format ascii 1.0", f"element vertex {len(xyz)}",
        "property float x", "property float y", "property float z",
        "property uchar red", "property uchar green", "property uchar blue",
        "end_header",
    ]
    lines += [f"{x!r} {y!r} {z!r} {r} {g} {b}" for (x, y, z), (r, g, b) in zip(xyz.tolist(), rgb.tolist())]
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc


def redundancy_colors(counts: np.ndarray) -> np.ndarray:
    """Blue at the minimum count, red at the maximum, linear in between."""
    counts = np.asarray(counts, dtype=np.float64)
    if not len(counts):
        return np.zeros((0, 3), dtype=np.int64)
    lo, hi = counts.min(), counts.max()
    t = (counts - lo) / (hi - lo) if hi > lo else np.zeros_like(counts)
    return np.column_stack([np.rint(255 * t), np.zeros_like(t), np.rint(255 * (1 - t))]).astype(np.int64)


def export_visuals(scene, targets, placement: Placement, stats, output_dir: str | Path, candidates=None) -> None:
    """ASCII PLY point sets: targets colored by post-optimization redundancy,
    selected sensor markers and (if given) all candidate positions."""
    out = Path(output_dir)
    _ply(out / "targets.ply", np.asarray(targets.points), redundancy_colors(stats.per_target_count))
    if candidates is not None:
        cand = np.asarray(candidates, dtype=np.float64).reshape(-1, 3)
        _ply(out / "candidates.ply", cand, np.tile([128, 128, 128], (len(cand), 1)))
        sel = cand[list(placement.selected)]
        _ply(out / "selected.ply", sel, np.tile([0, 200, 0], (len(sel), 1)))


# ---------------------------------------------------------------- sweep

SWEEP_COLUMNS = [
    "config", "scene", "height", "candidates", "targets", "cvr_max", "cvr_requested", "selected", "proof",
    "objective", "mean_pct_before", "mean_pct_after", "median_pct_before", "median_pct_after",
    "mean_count_before", "mean_count_after", "status", "error",
]


def sweep_rows(config_paths) -> tuple[int, list[dict]]:
    rows, codes = [], []
    for p in config_paths:
        base = {"config": str(p)}
        try:
            cfg = load_config(p)
            base["scene"] = cfg.scene_path
            _, results = run(cfg)
        except ConfigError as exc:
            rows.append({**base, "status": EXIT_CONFIG, "error": str(exc)})
            codes.append(EXIT_CONFIG)
            continue
        except (SceneError, EmptyGridError) as exc:
            rows.append({**base, "status": EXIT_SCENE, "error": str(exc)})
            codes.append(EXIT_SCENE)
            continue
        for r in results:
            s = r.summary
            p_ = r.placement
            rows.append({
                **base, "height": r.height, "candidates": r.n_candidates, "targets": r.n_targets,
                "cvr_max": r.cvr_max, "cvr_requested": r.cvr_requested,
                "selected": len(p_.selected) if p_ else "", "proof": p_.proof if p_ else "",
                "objective": p_.objective_value if p_ else "",
                **{k: s[k] for k in SWEEP_COLUMNS if k in s},
                "status": r.status, "error": r.error,
            })
            codes.append(r.status)
    return _overall(codes), rows


def write_sweep_csv(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, SWEEP_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k, "") for k in SWEEP_COLUMNS})


# ---------------------------------------------------------------- verify


def verify_files(placement_path: str | Path, matrix_path: str | Path) -> list[str]:
    """Recount coverage from the matrix dump; returns a list of problems."""
    data = json.loads(Path(placement_path).read_text())
    v = load_matrix_bin(matrix_path)
    sel = data["selected_indices"]
    problems = []
    if sel != sorted(set(sel)) or any(not 0 <= i < v.n_sensors for i in sel):
        return [f"selected indices are not sorted, unique and within 0..{v.n_sensors - 1}"]
    if data.get("n_targets", v.n_targets) != v.n_targets:
        problems.append(f"placement has {data['n_targets']} targets, matrix has {v.n_targets}")
    covered = int(v.bits[sel].any(axis=0).sum()) if sel else 0
    if covered != data["covered_count"]:
        problems.append(f"covered_count {data['covered_count']} but the matrix gives {covered}")
    need = data.get("min_cover_count")
    if need is not None and covered < need:
        problems.append(f"covers {covered} targets, {need} required")
    if "cvr_achieved" in data and v.n_targets and abs(data["cvr_achieved"] - covered / v.n_targets) > 1e-12:
        problems.append(f"cvr_achieved {data['cvr_achieved']} but the matrix gives {covered / v.n_targets}")
    if "degree" in data and "lambda" in data:
        deg = data["degree"]
        if len(deg) != v.n_sensors:
            problems.append(f"degree list has {len(deg)} entries for {v.n_sensors} candidates")
        else:
            obj = float(len(sel)) + float(data["lambda"]) * float(sum(deg[i] for i in sel))
            if abs(obj - data["objective"]) > 1e-9:
                problems.append(f"objective {data['objective']} but recomputed {obj}")
    return problems


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coverplan", description="Minimum-count roadside sensor placement.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run the full pipeline for one config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p = sub.add_parser("sweep", help="run several configs and tabulate the results")
    p.add_argument("--configs", nargs="*", default=[])
    p.add_argument("--out", default="sweep.csv", help="summary CSV path")
    p = sub.add_parser("verify", help="check a placement against a visibility matrix dump")
    p.add_argument("--placement", required=True)
    p.add_argument("--matrix", required=True)
    return ap


def _fail(code: int, msg: str) -> int:
    print(f"coverplan: {msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    if args.command == "run":
        try:
            cfg = load_config(args.config)
            code, results = run(cfg, args.out)
        except ConfigError as exc:
            return _fail(EXIT_CONFIG, f"config error: {exc}")
        except (SceneError, EmptyGridError) as exc:
            return _fail(EXIT_SCENE, f"scene error: {exc}")
        for r in results:
            if r.placement is not None:
                print(f"h={r.height:g} m: {len(r.placement.selected)} of {r.n_candidates} sensors, "
                      f"CVR {r.placement.covered_count / r.n_targets:.4f}, {r.placement.proof}")
            else:
                print(f"h={r.height:g} m: {r.error}", file=sys.stderr)
        return code

    if args.command == "sweep":
        code, rows = sweep_rows(args.configs)
        write_sweep_csv(rows, args.out)
        print(f"{len(rows)} row(s) written to {args.out}")
        return code

    try:
        problems = verify_files(args.placement, args.matrix)
    except (OSError, ValueError, KeyError) as exc:
        return _fail(EXIT_CONFIG, f"cannot read inputs: {exc}")
    if problems:
        for msg in problems:
            print(f"FAIL {msg}", file=sys.stderr)
        return EXIT_VERIFY_FAILED
    print("OK placement is consistent with the matrix")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
