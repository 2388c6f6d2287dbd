from __future__ import annotations

import functools

import numpy as np
import pytest

from coverplan.raycast import SensorSpec, build_bvh, cast_candidates
from coverplan.scenarios import CANDIDATE_MARGIN, CANDIDATE_MAX_OFFSET, t_junction
from coverplan.scene import Extent, RoadPolygon, Scene, TriangleMesh, generate_candidates, generate_target_grid
from coverplan.visibility import build_visibility_matrix

ACCEPTANCE_LINES: list[str] = []


@functools.lru_cache(maxsize=None)
def tjunction_pipeline(obstacles: bool, spacing: float, height: float):
    """(candidates, targets, visibility) for the bundled junction, cached per session."""
    scene = t_junction(obstacles)
    targets = generate_target_grid(scene, 1.0, 1.0)
    cands = generate_candidates(scene, spacing, height, CANDIDATE_MARGIN, CANDIDATE_MAX_OFFSET)
    v = build_visibility_matrix(cast_candidates(build_bvh(scene), SensorSpec(), cands, workers=1), targets)
    return cands, targets, v


def box_mesh(lo, hi, name="box") -> TriangleMesh:
    (x0, y0, z0), (x1, y1, z1) = lo, hi
    verts = [[x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0],
             [x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1]]
    faces = [[0, 2, 1], [0, 3, 2], [4, 5, 6], [4, 6, 7], [0, 1, 5], [0, 5, 4],
             [1, 2, 6], [1, 6, 5], [2, 3, 7], [2, 7, 6], [3, 0, 4], [3, 4, 7]]
    return TriangleMesh(np.array(verts, dtype=float), np.array(faces), name=name)


def strip_scene(obstacles=()) -> Scene:
    """A 40 m x 6 m road in a 40 m x 20 m extent."""
    road = RoadPolygon([[0, 7], [40, 7], [40, 13], [0, 13]])
    return Scene(tuple(obstacles), road, Extent([0, 0], [40, 20]))


@pytest.fixture
def small_scene():
    return strip_scene()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
