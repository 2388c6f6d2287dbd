"""Scene geometry, road polygon and the target / candidate grids.

Coordinates are meters in a right-handed frame with z up; the ground is the
plane z = 0. Obstacles are triangle soups, the road is a simple polygon in the
ground plane and ``extent`` is the axis-aligned rectangle the candidate grid
is laid over.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

Point3 = tuple[float, float, float]

AREA_EPS = 1e-12
BOUNDARY_EPS = 1e-9


class SceneError(ValueError):
    """Malformed or invalid scene input."""


class EmptyGridError(ValueError):
    """A grid generator produced no points."""


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray  # (V, 3) float64
    triangles: np.ndarray  # (T, 3) int64
    name: str = ""

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        tris = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        verts.setflags(write=False)
        tris.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "triangles", tris)
        self.validate()

    def validate(self) -> None:
        label = self.name or "mesh"
        if not np.all(np.isfinite(self.vertices)):
            bad = int(np.flatnonzero(~np.isfinite(self.vertices).all(axis=1))[0])
            raise SceneError(f"{label}: vertex {bad} has non-finite coordinates")
        if self.triangles.size:
            if self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices):
                bad = int(np.flatnonzero(
                    ((self.triangles < 0) | (self.triangles >= len(self.vertices))).any(axis=1)
                )[0])
                raise SceneError(f"{label}: triangle {bad} references a missing vertex")
            areas = triangle_areas(self.vertices[self.triangles])
            if np.any(areas <= AREA_EPS):
                bad = int(np.flatnonzero(areas <= AREA_EPS)[0])
                raise SceneError(f"{label}: triangle {bad} is degenerate (zero area)")

    def soup(self) -> np.ndarray:
        """Triangles as a (T, 3, 3) array of corner coordinates."""
        return self.vertices[self.triangles]


def triangle_areas(tris: np.ndarray) -> np.ndarray:
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)


@dataclass(frozen=True)
class RoadPolygon:
    """Simple polygon in the ground plane; stored counter-clockwise.

    A clockwise boundary is accepted and reversed on construction.
    """

    boundary: np.ndarray  # (N, 2)

    def __post_init__(self):
        pts = np.asarray(self.boundary, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise SceneError("road: boundary must be a list of [x, y] points")
        if len(pts) > 1 and np.array_equal(pts[0], pts[-1]):
            pts = pts[:-1]
        if len(pts) < 3:
            raise SceneError(f"road: polygon needs at least 3 vertices, got {len(pts)}")
        if not np.all(np.isfinite(pts)):
            raise SceneError("road: non-finite vertex coordinates")
        area = signed_area(pts)
        if abs(area) <= AREA_EPS:
            raise SceneError("road: polygon has zero area")
        if area < 0:
            pts = pts[::-1].copy()
        crossing = _first_self_intersection(pts)
        if crossing is not None:
            raise SceneError(f"road: polygon is not simple (edges {crossing[0]} and {crossing[1]} intersect)")
        pts.setflags(write=False)
        object.__setattr__(self, "boundary", pts)

    @property
    def area(self) -> float:
        return signed_area(self.boundary)

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        a = self.boundary
        return a, np.roll(a, -1, axis=0)


def signed_area(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a, b, p) -> bool:
    return min(a[0], b[0]) <= p[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])


def _segments_intersect(p1, p2, q1, q2) -> bool:
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > 0 > d2) or (d1 < 0 < d2)) and ((d3 > 0 > d4) or (d3 < 0 < d4)):
        return True
    return (
        (d1 == 0 and _on_segment(q1, q2, p1))
        or (d2 == 0 and _on_segment(q1, q2, p2))
        or (d3 == 0 and _on_segment(p1, p2, q1))
        or (d4 == 0 and _on_segment(p1, p2, q2))
    )


def _first_self_intersection(pts: np.ndarray) -> tuple[int, int] | None:
    n = len(pts)
    for i in range(n):
        a1, a2 = pts[i], pts[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                # adjacent edges share a vertex; only a fold-back overlaps
                shared = a2 if j == i + 1 else a1
                other_a = a1 if j == i + 1 else a2
                b_far = pts[(j + 1) % n] if j == i + 1 else pts[j]
                if _orient(shared, other_a, b_far) == 0 and np.dot(other_a - shared, b_far - shared) > 0:
                    return i, j
                continue
            if _segments_intersect(a1, a2, pts[j], pts[(j + 1) % n]):
                return i, j
    return None


@dataclass(frozen=True)
class Extent:
    min: tuple[float, float]
    max: tuple[float, float]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.min)
        hi = tuple(float(v) for v in self.max)
        if len(lo) != 2 or len(hi) != 2 or not all(map(math.isfinite, lo + hi)):
            raise SceneError("extent: min and max must be finite [x, y] pairs")
        if hi[0] <= lo[0] or hi[1] <= lo[1]:
            raise SceneError("extent: max must exceed min on both axes")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    def contains(self, pts: np.ndarray) -> bool:
        pts = np.asarray(pts)
        return bool(np.all(pts >= np.array(self.min) - BOUNDARY_EPS) and np.all(pts <= np.array(self.max) + BOUNDARY_EPS))


@dataclass(frozen=True)
class Scene:
    obstacles: tuple[TriangleMesh, ...]
    road: RoadPolygon
    extent: Extent

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if not self.extent.contains(self.road.boundary):
            raise SceneError("road: boundary leaves the ground extent")

    def triangles(self) -> np.ndarray:
        """All obstacle triangles as one (T, 3, 3) soup."""
        if not self.obstacles:
            return np.zeros((0, 3, 3))
        return np.concatenate([m.soup() for m in self.obstacles], axis=0)

    def to_dict(self) -> dict:
        return {
            "obstacles": [
                {"name": m.name, "vertices": m.vertices.tolist(), "triangles": m.triangles.tolist()}
                for m in self.obstacles
            ],
            "road": {"boundary": self.road.boundary.tolist()},
            "extent": {"min": list(self.extent.min), "max": list(self.extent.max)},
        }


@dataclass(frozen=True)
class TargetGrid:
    points: np.ndarray  # (N_T, 3), z = 0
    spacing: float
    radius: float

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class CandidatePose:
    position: Point3
    index: int


# ---------------------------------------------------------------- loading


def scene_from_dict(data: dict) -> Scene:
    try:
        obstacles = []
        for k, ob in enumerate(data.get("obstacles", [])):
            obstacles.append(TriangleMesh(ob["vertices"], ob["triangles"], name=ob.get("name") or f"obstacle {k}"))
        road = RoadPolygon(data["road"]["boundary"])
        extent = Extent(data["extent"]["min"], data["extent"]["max"])
    except (KeyError, TypeError) as exc:
        raise SceneError(f"scene JSON is missing or mistypes a field: {exc}") from exc
    return Scene(tuple(obstacles), road, extent)


def parse_obj(text: str, source: str = "<obj>") -> list[TriangleMesh]:
    """Parse ``v``/``f`` records of a Wavefront OBJ; one mesh per ``o`` block.

    Faces must be triangles. Texture/normal references (``f 1/2/3 ...``) and
    negative indices are accepted; every other record type is ignored.
    """
    verts: list[list[float]] = []
    groups: list[tuple[str, list[list[int]]]] = [("", [])]
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *rest = line.split()
        if tag == "v":
            try:
                verts.append([float(c) for c in rest[:3]])
            except ValueError as exc:
                raise SceneError(f"{source}:{lineno}: bad vertex record") from exc
            if len(rest) < 3:
                raise SceneError(f"{source}:{lineno}: vertex needs 3 coordinates")
        elif tag == "f":
            if len(rest) != 3:
                raise SceneError(f"{source}:{lineno}: face has {len(rest)} vertices; only triangles are supported")
            idx = []
            for tok in rest:
                try:
                    i = int(tok.split("/")[0])
                except ValueError as exc:
                    raise SceneError(f"{source}:{lineno}: bad face index {tok!r}") from exc
                idx.append(i - 1 if i > 0 else len(verts) + i)
            groups[-1][1].append(idx)
        elif tag == "o":
            groups.append((" ".join(rest), []))
    all_verts = np.array(verts, dtype=np.float64).reshape(-1, 3)
    meshes = []
    for name, faces in groups:
        if not faces:
            continue
        faces_arr = np.array(faces, dtype=np.int64)
        if faces_arr.min() < 0 or faces_arr.max() >= len(all_verts):
            raise SceneError(f"{source}: object {name or len(meshes)} references a missing vertex")
        used, remap = np.unique(faces_arr, return_inverse=True)
        meshes.append(TriangleMesh(all_verts[used], remap.reshape(-1, 3), name=name or f"obstacle {len(meshes)}"))
    return meshes


def load_scene(path: str | Path, road_path: str | Path | None = None) -> Scene:
    """Load a native scene JSON, or an OBJ plus a road sidecar JSON.

    The sidecar defaults to ``<name>.road.json`` next to the OBJ and holds the
    ``road`` and ``extent`` keys of the native format.
    """
    path = Path(path)
    if not path.exists():
        raise SceneError(f"{path}: no such file")
    if path.suffix.lower() == ".obj":
        sidecar = Path(road_path) if road_path else path.with_suffix(".road.json")
        if not sidecar.exists():
            raise SceneError(f"{path}: OBJ scenes need a road sidecar at {sidecar}")
        meta = _read_json(sidecar)
        meshes = parse_obj(path.read_text(), source=str(path))
        try:
            return Scene(tuple(meshes), RoadPolygon(meta["road"]["boundary"]), Extent(meta["extent"]["min"], meta["extent"]["max"]))
        except (KeyError, TypeError) as exc:
            raise SceneError(f"{sidecar}: missing field {exc}") from exc
    return scene_from_dict(_read_json(path))


def _read_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SceneError(f"{path}: malformed JSON ({exc})") from exc


def save_scene(scene: Scene, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scene.to_dict(), indent=1) + "\n")


# ---------------------------------------------------------------- polygon queries


def point_in_polygon(p, poly: RoadPolygon) -> bool:
    """Strict interior test; points on the boundary are outside."""
    return bool(points_in_polygon(np.asarray(p, dtype=np.float64).reshape(1, 2), poly)[0])


def points_in_polygon(pts: np.ndarray, poly: RoadPolygon) -> np.ndarray:
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    a, b = poly.edges()
    x = pts[:, 0:1]
    y = pts[:, 1:2]
    ax, ay, bx, by = a[:, 0], a[:, 1], b[:, 0], b[:, 1]
    # even-odd crossing count with a half-open rule on edge y-ranges
    straddle = (ay > y) != (by > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = ax + (y - ay) * (bx - ax) / (by - ay)
    inside = (np.count_nonzero(straddle & (x < x_cross), axis=1) % 2) == 1
    on_edge = boundary_distance(pts, poly) <= BOUNDARY_EPS
    return inside & ~on_edge


def boundary_distance(pts: np.ndarray, poly: RoadPolygon) -> np.ndarray:
    """Euclidean distance from each 2D point to the polygon boundary."""
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    a, b = poly.edges()
    ab = b - a
    ap = pts[:, None, :] - a[None, :, :]
    t = np.clip((ap * ab).sum(-1) / (ab * ab).sum(-1), 0.0, 1.0)
    closest = a[None] + t[..., None] * ab[None]
    return np.sqrt(((pts[:, None, :] - closest) ** 2).sum(-1)).min(axis=1)


# ---------------------------------------------------------------- grids


def _axis(lo: float, hi: float, spacing: float) -> np.ndarray:
    n = int(math.floor((hi - lo) / spacing + 1e-9)) + 1
    return lo + spacing * np.arange(n)


def lattice(extent: Extent, spacing: float) -> np.ndarray:
    """Grid points over the extent anchored at its min corner, row-major by y then x."""
    xs = _axis(extent.min[0], extent.max[0], spacing)
    ys = _axis(extent.min[1], extent.max[1], spacing)
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def generate_target_grid(scene: Scene, spacing: float, radius: float) -> TargetGrid:
    if spacing <= 0 or radius <= 0:
        raise ValueError("target spacing and radius must be positive")
    pts = lattice(scene.extent, spacing)
    pts = pts[points_in_polygon(pts, scene.road)]
    if len(pts) == 0:
        raise EmptyGridError(f"no target points inside the road at spacing {spacing} m")
    points = np.column_stack([pts, np.zeros(len(pts))])
    points.setflags(write=False)
    return TargetGrid(points, float(spacing), float(radius))


def generate_candidates(
    scene: Scene,
    spacing: float,
    height: float,
    margin: float = 0.5,
    max_offset: float | None = None,
) -> list[CandidatePose]:
    """Candidate sensor poses on the extent grid, off the road.

    Points inside the road or nearer than ``margin`` to its edge are dropped.
    ``max_offset`` optionally restricts candidates to a roadside strip (poles
    and posts), dropping points farther than that from the road edge.
    """
    if spacing <= 0 or height <= 0 or margin < 0:
        raise ValueError("candidate spacing and height must be positive, margin non-negative")
    if max_offset is not None and max_offset < margin:
        raise ValueError("max_offset must be at least margin")
    pts = lattice(scene.extent, spacing)
    dist = boundary_distance(pts, scene.road)
    keep = ~points_in_polygon(pts, scene.road) & (dist >= margin - BOUNDARY_EPS)
    if max_offset is not None:
        keep &= dist <= max_offset + BOUNDARY_EPS
    pts = pts[keep]
    if len(pts) == 0:
        raise EmptyGridError(f"no candidate positions at spacing {spacing} m")
    return [CandidatePose((float(x), float(y), float(height)), i) for i, (x, y) in enumerate(pts)]


def candidate_positions(candidates: list[CandidatePose]) -> np.ndarray:
    return np.array([c.position for c in candidates], dtype=np.float64).reshape(-1, 3)
