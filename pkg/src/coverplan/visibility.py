"""Binary visibility matrix between candidate sensors and target points."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .raycast import CastPoints
from .scene import TargetGrid


@dataclass(frozen=True)
class VisibilityMatrix:
    """Row i is candidate i, column k is target k; ``bits`` is a bool array."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.ascontiguousarray(self.bits, dtype=bool)
        if bits.ndim != 2:
            raise ValueError("visibility matrix must be 2-dimensional")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def n_sensors(self) -> int:
        return self.bits.shape[0]

    @property
    def n_targets(self) -> int:
        return self.bits.shape[1]

    def rows(self, selected) -> "VisibilityMatrix":
        return VisibilityMatrix(self.bits[np.asarray(list(selected), dtype=np.int64)])

    def row_masks(self) -> list[int]:
        """Each row as a Python int bitset (bit k = target k)."""
        packed = np.packbits(self.bits, axis=1, bitorder="little")
        return [int.from_bytes(r.tobytes(), "little") for r in packed]

    def __eq__(self, other):
        return isinstance(other, VisibilityMatrix) and np.array_equal(self.bits, other.bits)

    __hash__ = None


@dataclass(frozen=True)
class CoverageSummary:
    cvr: float
    covered_targets: int
    uncovered_target_indices: list[int] = field(default_factory=list)


@dataclass(frozen=True)
class FeasibilityReport:
    ok: bool
    cvr: float
    requested_cvr: float
    uncovered_target_indices: list[int]

    def __bool__(self):
        return self.ok

    def message(self) -> str:
        if self.ok:
            return f"feasible: maximum CVR {self.cvr:.4f} >= requested {self.requested_cvr:.4f}"
        n = len(self.uncovered_target_indices)
        return (
            f"infeasible: maximum CVR {self.cvr:.4f} < requested {self.requested_cvr:.4f}; "
            f"{n} target(s) seen by no candidate"
        )


def visible_row(hits: np.ndarray, targets: np.ndarray, radius: float, tree: cKDTree | None = None) -> np.ndarray:
    """Targets within ``radius`` (3D, inclusive) of any hit point."""
    row = np.zeros(len(targets), dtype=bool)
    if not len(hits):
        return row
    tree = tree if tree is not None else cKDTree(targets)
    # the tree only proposes pairs; the exact squared-distance rule decides
    near = tree.query_ball_point(hits, radius * (1.0 + 1e-9) + 1e-12)
    lens = np.fromiter((len(n) for n in near), dtype=np.int64, count=len(near))
    if not lens.sum():
        return row
    ti = np.concatenate([np.asarray(n, dtype=np.int64) for n in near if n])
    hi = np.repeat(np.arange(len(hits)), lens)
    diff = hits[hi] - targets[ti]
    d2 = diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1] + diff[:, 2] * diff[:, 2]
    row[ti[d2 <= radius * radius]] = True
    return row


def build_visibility_matrix(cast_points_per_sensor: list[CastPoints], targets: TargetGrid) -> VisibilityMatrix:
    pts = np.asarray(targets.points, dtype=np.float64)
    tree = cKDTree(pts)
    bits = np.zeros((len(cast_points_per_sensor), len(pts)), dtype=bool)
    for i, cp in enumerate(cast_points_per_sensor):
        bits[i] = visible_row(cp.hits(), pts, targets.radius, tree)
    return VisibilityMatrix(bits)


def compute_cvr(v: VisibilityMatrix) -> CoverageSummary:
    covered = v.bits.any(axis=0)
    n_cov = int(covered.sum())
    cvr = n_cov / v.n_targets if v.n_targets else 1.0
    return CoverageSummary(cvr, n_cov, np.flatnonzero(~covered).tolist())


def check_feasibility(v: VisibilityMatrix, requested_cvr: float) -> FeasibilityReport:
    if not 0.0 <= requested_cvr <= 1.0:
        raise ValueError("requested CVR must lie in [0, 1]")
    summary = compute_cvr(v)
    need = min_cover_count(v.n_targets, requested_cvr)
    ok = summary.covered_targets >= need
    return FeasibilityReport(ok, summary.cvr, requested_cvr, [] if ok else summary.uncovered_target_indices)


def min_cover_count(n_targets: int, cvr: float) -> int:
    """ceil(n_targets * cvr), robust to representation error in ``cvr``."""
    x = n_targets * cvr
    r = round(x)
    if abs(x - r) <= 1e-9 * max(1.0, x):
        return int(r)
    return int(np.ceil(x))


# ---------------------------------------------------------------- export

_HEADER = struct.Struct("<II")


def save_matrix_bin(v: VisibilityMatrix, path: str | Path) -> None:
    """Header (N_S, N_T) as little-endian uint32, then the row-major bit
    stream packed MSB-first with no per-row padding."""
    data = _HEADER.pack(v.n_sensors, v.n_targets) + np.packbits(v.bits.ravel()).tobytes()
    Path(path).write_bytes(data)


def load_matrix_bin(path: str | Path) -> VisibilityMatrix:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated visibility matrix")
    ns, nt = _HEADER.unpack_from(raw)
    nbits = ns * nt
    body = np.frombuffer(raw, dtype=np.uint8, offset=_HEADER.size)
    if len(body) != (nbits + 7) // 8:
        raise ValueError(f"{path}: expected {(nbits + 7) // 8} payload bytes, found {len(body)}")
    bits = np.unpackbits(body, count=nbits).astype(bool).reshape(ns, nt)
    return VisibilityMatrix(bits)


def save_matrix_csv(v: VisibilityMatrix, path: str | Path) -> None:
    lines = [",".join("1" if b else "0" for b in row) for row in v.bits]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_matrix_csv(path: str | Path) -> VisibilityMatrix:
    rows = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    return VisibilityMatrix(np.array([[c == "1" for c in ln.split(",")] for ln in rows], dtype=bool))
