"""Bundled T-junction scene and the six reference run configurations.

The junction: a 110 m main road running along x and a 40.5 m side road
branching north from its middle, both 7 m wide. Candidate sensors live in a
roadside strip 0.5 m to 5 m from the asphalt edge. The obstacle variant adds
two articulated trucks parked on the road and two sets of high-cube
containers on the corners either side of the side road.

Run ``python -m coverplan.scenarios <dir>`` to regenerate the scene JSONs and
configs.
"""
from __future__ import annotations

import argparse
import json
from importlib import resources
from pathlib import Path

import numpy as np

from .scene import Extent, RoadPolygon, Scene, TriangleMesh, save_scene

MAIN_LENGTH = 110.0
ROAD_WIDTH = 7.0
SOUTH_VERGE = 2.5
SIDE_AXIS_X = 55.5
NORTH_EDGE = 50.0

HEIGHTS = [2.4, 4.0, 6.0]
CANDIDATE_MARGIN = 0.5
CANDIDATE_MAX_OFFSET = 5.0

# name -> (candidate spacing, obstacles)
TABLE = {
    "A1": (4.0, False),
    "A2": (4.0, True),
    "B1": (5.0, False),
    "B2": (5.0, True),
    "C1": (6.0, False),
    "C2": (6.0, True),
}

_BOX_FACES = np.array([
    [0, 2, 1], [0, 3, 2],  # bottom
    [4, 5, 6], [4, 6, 7],  # top
    [0, 1, 5], [0, 5, 4],
    [1, 2, 6], [1, 6, 5],
    [2, 3, 7], [2, 7, 6],
    [3, 0, 4], [3, 4, 7],
])


def box(lo, hi) -> tuple[np.ndarray, np.ndarray]:
    (x0, y0, z0), (x1, y1, z1) = lo, hi
    verts = np.array([
        [x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0],
        [x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1],
    ], dtype=np.float64)
    return verts, _BOX_FACES.copy()


def boxes_mesh(name: str, boxes) -> TriangleMesh:
    verts, tris = [], []
    for lo, hi in boxes:
        v, t = box(lo, hi)
        tris.append(t + sum(len(x) for x in verts))
        verts.append(v)
    return TriangleMesh(np.concatenate(verts), np.concatenate(tris), name=name)


def road_polygon() -> RoadPolygon:
    y0, y1 = SOUTH_VERGE, SOUTH_VERGE + ROAD_WIDTH
    xl, xr = SIDE_AXIS_X - ROAD_WIDTH / 2, SIDE_AXIS_X + ROAD_WIDTH / 2
    return RoadPolygon([
        (0.0, y0), (MAIN_LENGTH, y0), (MAIN_LENGTH, y1), (xr, y1),
        (xr, NORTH_EDGE), (xl, NORTH_EDGE), (xl, y1), (0.0, y1),
    ])


def obstacles() -> list[TriangleMesh]:
    return [
        # truck parked eastbound in the south lane: trailer then cab
        boxes_mesh("truck south", [((14.0, 3.0, 0.0), (27.6, 5.5, 4.0)), ((28.0, 3.0, 0.0), (30.4, 5.5, 3.3))]),
        # truck parked in the side road's east lane, cab towards the junction
        boxes_mesh("truck side road", [((56.5, 20.0, 0.0), (59.0, 22.4, 3.3)), ((56.5, 22.8, 0.0), (59.0, 36.4, 4.0))]),
        boxes_mesh("containers west", [((30.0, 16.0, 0.0), (42.2, 18.44, 2.9)), ((30.0, 18.44, 0.0), (42.2, 20.88, 2.9))]),
        boxes_mesh("containers east", [((68.0, 16.0, 0.0), (80.2, 18.44, 2.9)), ((68.0, 18.44, 0.0), (80.2, 20.88, 2.9))]),
    ]


def t_junction(with_obstacles: bool = False) -> Scene:
    return Scene(
        tuple(obstacles()) if with_obstacles else (),
        road_polygon(),
        Extent((0.0, 0.0), (MAIN_LENGTH, NORTH_EDGE)),
    )


def builtin_scene_path(name: str) -> Path:
    return Path(str(resources.files("coverplan") / "data" / f"{name}.json"))


def reference_config(name: str) -> dict:
    spacing, with_obstacles = TABLE[name]
    return {
        "scene": "builtin:tjunction_obstacles" if with_obstacles else "builtin:tjunction_clear",
        "sensor": {
            "v_fov_min": -17.0, "v_fov_max": 3.0, "v_step": 1.0,
            "h_fov_min": 0.0, "h_fov_max": 360.0, "h_step": 1.0,
            "range": 100.0,
        },
        "sensor_heights": HEIGHTS,
        "candidates": {"spacing": spacing, "margin": CANDIDATE_MARGIN, "max_offset": CANDIDATE_MAX_OFFSET},
        "targets": {"spacing": 1.0, "radius": 1.0},
        # parked trucks hide the asphalt beneath them, so obstacle runs ask
        # for the best coverage the candidates can reach
        "cvr": "max" if with_obstacles else 1.0,
        "lambda": "auto",
        "L": "auto",
        "output_dir": f"out/{name}",
    }


def write_all(directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in TABLE:
        (directory / f"{name}.json").write_text(json.dumps(reference_config(name), indent=2) + "\n")


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description="Regenerate the bundled junction scenes and reference configs.")
    ap.add_argument("config_dir", nargs="?", help="also write A1..C2 configs here")
    args = ap.parse_args(argv)
    data = Path(__file__).with_name("data")
    save_scene(t_junction(False), data / "tjunction_clear.json")
    save_scene(t_junction(True), data / "tjunction_obstacles.json")
    if args.config_dir:
        write_all(args.config_dir)


if __name__ == "__main__":
    main()
