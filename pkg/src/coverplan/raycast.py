"""Sensor ray fans and nearest-hit ray casting against a scene.

Ray directions follow the horizontal coordinate convention: azimuth is
measured from +y towards +x, elevation up from the ground plane, so

    direction = [sin(az) cos(el), cos(az) cos(el), sin(el)]

The ground plane z = 0 is intersected analytically; obstacle triangles go
through a BVH whose traversal runs in the compiled kernel when available.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from . import _backend
from .scene import CandidatePose, Scene

LEAF_SIZE = 4
MAX_DEPTH = 60
# Boxes are padded so the barycentric slack of the triangle test can never
# place a hit outside its leaf box.
BOX_PAD = 1e-7


class HitKind(IntEnum):
    GROUND = 0
    OBSTACLE = 1
    MAX_RANGE = 2


@dataclass(frozen=True)
class SensorSpec:
    v_fov_min: float = -17.0
    v_fov_max: float = 3.0
    v_step: float = 1.0
    h_fov_min: float = 0.0
    h_fov_max: float = 360.0
    h_step: float = 1.0
    range: float = 100.0

    def __post_init__(self):
        if self.v_fov_min > self.v_fov_max or self.h_fov_min > self.h_fov_max:
            raise ValueError("field-of-view minimum exceeds maximum")
        if self.v_step <= 0 or self.h_step <= 0:
            raise ValueError("angular steps must be positive")
        if self.range <= 0:
            raise ValueError("sensor range must be positive")
        _steps(self.v_fov_max - self.v_fov_min, self.v_step, "vertical")
        _steps(self.h_fov_max - self.h_fov_min, self.h_step, "horizontal")

    def elevations(self) -> np.ndarray:
        n = _steps(self.v_fov_max - self.v_fov_min, self.v_step, "vertical")
        return self.v_fov_min + self.v_step * np.arange(n + 1)

    def azimuths(self) -> np.ndarray:
        span = self.h_fov_max - self.h_fov_min
        n = _steps(span, self.h_step, "horizontal")
        az = self.h_fov_min + self.h_step * np.arange(n + 1)
        if abs(span - 360.0) <= 1e-9:
            az = az[:-1]  # 360 deg closes onto the first azimuth
        return az

    @property
    def n_rays(self) -> int:
        return len(self.elevations()) * len(self.azimuths())

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _steps(span: float, step: float, label: str) -> int:
    q = span / step
    n = round(q)
    if abs(q - n) > 1e-9:
        raise ValueError(f"{label} field of view {span} is not a whole number of {step} deg steps")
    return int(n)


@dataclass(frozen=True)
class Ray:
    origin: tuple[float, float, float]
    direction: tuple[float, float, float]

    def __post_init__(self):
        if abs(math.hypot(*self.direction) - 1.0) > 1e-9:
            raise ValueError("ray direction must be a unit vector")


@dataclass(frozen=True)
class CastPoint:
    position: tuple[float, float, float]
    hit_kind: HitKind
    source_ray: tuple[float, float]  # (azimuth, elevation) in degrees


def ray_direction(alpha_h: float, alpha_v: float) -> np.ndarray:
    """Unit direction for azimuth ``alpha_h`` and elevation ``alpha_v`` (degrees)."""
    return ray_directions(np.array([alpha_h], dtype=float), np.array([alpha_v], dtype=float))[0]


def ray_directions(alpha_h: np.ndarray, alpha_v: np.ndarray) -> np.ndarray:
    h = np.radians(np.asarray(alpha_h, dtype=np.float64))
    v = np.radians(np.asarray(alpha_v, dtype=np.float64))
    cv = np.cos(v)
    return np.stack([np.sin(h) * cv, np.cos(h) * cv, np.sin(v)], axis=-1)


def fan_angles(spec: SensorSpec) -> np.ndarray:
    """(R, 2) array of (azimuth, elevation) with elevation outer, azimuth inner."""
    az = spec.azimuths()
    el = spec.elevations()
    return np.column_stack([np.tile(az, len(el)), np.repeat(el, len(az))])


def build_ray_fan(spec: SensorSpec, pose: CandidatePose) -> list[Ray]:
    angles = fan_angles(spec)
    dirs = ray_directions(angles[:, 0], angles[:, 1])
    origin = tuple(float(c) for c in pose.position)
    return [Ray(origin, tuple(d)) for d in dirs.tolist()]


class Bvh:
    """Median-split bounding volume hierarchy over obstacle triangles.

    Flattened into arrays: ``node_bounds`` (N, 6) as min xyz / max xyz,
    ``node_child`` (N, 2) child indices (-1 for leaves), ``node_tris`` (N, 2)
    leaf (start, count) into ``tris`` (T, 9), which is stored in BVH order.
    The ground plane is not part of the tree; the kernel handles it directly.
    """

    def __init__(self, triangles: np.ndarray, leaf_size: int = LEAF_SIZE):
        tris = np.asarray(triangles, dtype=np.float64).reshape(-1, 3, 3)
        self.n_triangles = len(tris)
        bounds: list[np.ndarray] = []
        child: list[list[int]] = []
        leaves: list[list[int]] = []
        order: list[np.ndarray] = []
        if len(tris):
            lo = tris.min(axis=1)
            hi = tris.max(axis=1)
            cen = tris.mean(axis=1)
            pad = BOX_PAD * (1.0 + float(np.abs(tris).max()))
            placed = 0

            def build(idx: np.ndarray, depth: int) -> int:
                nonlocal placed
                node = len(bounds)
                bounds.append(np.concatenate([lo[idx].min(axis=0) - pad, hi[idx].max(axis=0) + pad]))
                child.append([-1, -1])
                leaves.append([0, 0])
                c = cen[idx]
                spread = c.max(axis=0) - c.min(axis=0)
                if len(idx) <= leaf_size or depth >= MAX_DEPTH or not spread.any():
                    leaves[node] = [placed, len(idx)]
                    order.append(idx)
                    placed += len(idx)
                    return node
                axis = int(np.argmax(spread))
                ranked = idx[np.argsort(c[:, axis], kind="stable")]
                half = len(ranked) // 2
                left = build(ranked[:half], depth + 1)
                right = build(ranked[half:], depth + 1)
                child[node] = [left, right]
                return node

            build(np.arange(len(tris)), 0)
        self.node_bounds = np.array(bounds, dtype=np.float64).reshape(-1, 6)
        self.node_child = np.array(child, dtype=np.int64).reshape(-1, 2)
        self.node_tris = np.array(leaves, dtype=np.int64).reshape(-1, 2)
        perm = np.concatenate(order) if order else np.zeros(0, dtype=np.int64)
        self.tris = np.ascontiguousarray(tris[perm].reshape(-1, 9))

    @property
    def n_nodes(self) -> int:
        return len(self.node_bounds)

    def intersect(self, origins: np.ndarray, dirs: np.ndarray, max_range: float, backend: str | None = None):
        """Nearest hits for a batch: returns (positions, t, kind)."""
        origins = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
        dirs = np.ascontiguousarray(dirs, dtype=np.float64).reshape(-1, 3)
        if len(origins) == 1 and len(dirs) > 1:
            origins = np.ascontiguousarray(np.broadcast_to(origins, dirs.shape))
        kernel = _backend.kernels(backend)
        t, kind = kernel(origins, dirs, float(max_range), self.node_bounds, self.node_child, self.node_tris, self.tris)
        return origins + t[:, None] * dirs, t, kind


def build_bvh(scene: Scene) -> Bvh:
    return Bvh(scene.triangles())


def cast(bvh: Bvh, ray: Ray, range: float) -> CastPoint:
    pos, _, kind = bvh.intersect(np.array([ray.origin]), np.array([ray.direction]), range)
    d = ray.direction
    az = math.degrees(math.atan2(d[0], d[1])) % 360.0
    el = math.degrees(math.asin(max(-1.0, min(1.0, d[2]))))
    return CastPoint(tuple(pos[0].tolist()), HitKind(int(kind[0])), (az, el))


class CastPoints:
    """Cast points of one sensor, stored as parallel arrays in fan order.

    Behaves as a read-only sequence of :class:`CastPoint`.
    """

    def __init__(self, positions: np.ndarray, kinds: np.ndarray, angles: np.ndarray, origin):
        self.positions = positions
        self.kinds = kinds
        self.angles = angles
        self.origin = np.asarray(origin, dtype=np.float64)

    def __len__(self):
        return len(self.kinds)

    def __getitem__(self, i) -> CastPoint:
        return CastPoint(
            tuple(self.positions[i].tolist()),
            HitKind(int(self.kinds[i])),
            (float(self.angles[i, 0]), float(self.angles[i, 1])),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def hits(self) -> np.ndarray:
        """Positions of rays that struck the ground or an obstacle."""
        return self.positions[self.kinds != HitKind.MAX_RANGE]


def cast_sensor(bvh: Bvh, spec: SensorSpec, pose: CandidatePose, backend: str | None = None) -> CastPoints:
    angles = fan_angles(spec)
    dirs = ray_directions(angles[:, 0], angles[:, 1])
    pos, _, kind = bvh.intersect(np.array([pose.position], dtype=np.float64), dirs, spec.range, backend)
    return CastPoints(pos, kind, angles, pose.position)


def worker_count() -> int:
    env = os.environ.get("COVERPLAN_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def cast_candidates(
    bvh: Bvh,
    spec: SensorSpec,
    candidates: list[CandidatePose],
    workers: int | None = None,
    backend: str | None = None,
) -> list[CastPoints]:
    """Cast every candidate's fan; results keep candidate order regardless of scheduling."""
    workers = worker_count() if workers is None else max(1, workers)
    if workers == 1 or len(candidates) < 2:
        return [cast_sensor(bvh, spec, c, backend) for c in candidates]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda c: cast_sensor(bvh, spec, c, backend), candidates))
