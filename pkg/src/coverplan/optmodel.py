"""Regularized binary program for minimum sensor count.

    minimize    sum_i s_i + lam * sum_i d_i s_i
    subject to  sum_i v_ik s_i >= c_k           (k = 1..N_T)
                sum_i v_ik s_i <= N_S c_k       (k = 1..N_T)
                sum_k c_k >= ceil(N_T * cvr)
                s, c binary

where d_i counts candidates within distance L of candidate i (itself
included). The two linking rows pin c_k to the coverage indicator of target
k, so c is a function of s and the solver only searches over s.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .scene import CandidatePose, candidate_positions
from .visibility import VisibilityMatrix, check_feasibility, min_cover_count


class InfeasibleError(ValueError):
    """Requested coverage exceeds what the candidate set can reach."""

    def __init__(self, message: str, uncovered: list[int] | None = None):
        super().__init__(message)
        self.uncovered = uncovered or []


@dataclass(frozen=True)
class OverlapMatrix:
    o: np.ndarray  # (N_S, N_S) bool, symmetric, unit diagonal
    d: np.ndarray  # (N_S,) int64 row sums


def build_overlap(candidates: list[CandidatePose] | np.ndarray, L: float) -> OverlapMatrix:
    if L < 0:
        raise ValueError("overlap distance L must be non-negative")
    pos = candidates if isinstance(candidates, np.ndarray) else candidate_positions(candidates)
    pos = np.asarray(pos, dtype=np.float64).reshape(-1, 3)
    diff = pos[:, None, :] - pos[None, :, :]
    o = np.sqrt((diff * diff).sum(-1)) <= L
    return OverlapMatrix(o, o.sum(axis=1).astype(np.int64))


def default_lambda(overlap: OverlapMatrix) -> float:
    """Largest round weight that keeps sensor count strictly dominant.

    0.99 / (N_S * max d) makes lam * sum(d over any selection) < 1, so the
    penalty term never outweighs removing one sensor.
    """
    n = len(overlap.d)
    if n == 0:
        return 0.0
    return 0.99 / (n * int(overlap.d.max()))


@dataclass(frozen=True)
class BipInstance:
    visibility: VisibilityMatrix
    degree: np.ndarray  # d_i
    cvr: float
    lam: float
    min_cover_count: int

    @property
    def n_s(self) -> int:
        return self.visibility.n_sensors

    @property
    def n_t(self) -> int:
        return self.visibility.n_targets

    @property
    def cost(self) -> np.ndarray:
        return 1.0 + self.lam * self.degree

    def objective(self, selected) -> float:
        sel = list(selected)
        return objective_value(len(sel), int(self.degree[sel].sum()) if sel else 0, self.lam)

    def __eq__(self, other):
        return (
            isinstance(other, BipInstance)
            and self.visibility == other.visibility
            and np.array_equal(self.degree, other.degree)
            and self.cvr == other.cvr
            and self.lam == other.lam
            and self.min_cover_count == other.min_cover_count
        )

    __hash__ = None


def objective_value(count: int, degree_sum: int, lam: float) -> float:
    """Canonical objective: |S| + lam * sum_{i in S} d_i.

    Every solver evaluates objectives through this one expression so values
    from different search paths compare exactly.
    """
    return float(count) + lam * float(degree_sum)


def build_instance(v: VisibilityMatrix, overlap: OverlapMatrix, cvr: float, lam: float) -> BipInstance:
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if len(overlap.d) != v.n_sensors:
        raise ValueError("overlap and visibility disagree on the candidate count")
    report = check_feasibility(v, cvr)
    if not report.ok:
        raise InfeasibleError(report.message(), report.uncovered_target_indices)
    degree = np.asarray(overlap.d, dtype=np.int64).copy()
    degree.setflags(write=False)
    return BipInstance(v, degree, float(cvr), float(lam), min_cover_count(v.n_targets, cvr))


def coverage_indicators(instance: BipInstance, selected) -> np.ndarray:
    """c_k implied by a selection: 1 iff some selected sensor sees target k."""
    sel = np.asarray(list(selected), dtype=np.int64)
    if not len(sel):
        return np.zeros(instance.n_t, dtype=np.int64)
    return instance.visibility.bits[sel].any(axis=0).astype(np.int64)


def linking_rows_hold(instance: BipInstance, selected, c: np.ndarray) -> bool:
    """Check both linking constraints and the coverage row for (s, c)."""
    s = np.zeros(instance.n_s, dtype=np.int64)
    s[list(selected)] = 1
    seen = s @ instance.visibility.bits.astype(np.int64)
    return bool(
        np.all(seen >= c)
        and np.all(seen <= instance.n_s * c)
        and c.sum() >= instance.min_cover_count
    )


# ---------------------------------------------------------------- text format


def save_instance(instance: BipInstance, path: str | Path) -> None:
    """Line format: ``NS NT MINCOVER LAMBDA``, the cost line, then one 0/1
    string per sensor. ``#`` lines carry d and cvr for exact reloading and
    can be skipped by other readers."""
    lines = [
        f"{instance.n_s} {instance.n_t} {instance.min_cover_count} {instance.lam!r}",
        " ".join(repr(float(c)) for c in instance.cost),
        "# degree " + " ".join(str(int(x)) for x in instance.degree),
        f"# cvr {instance.cvr!r}",
    ]
    lines += ["".join("1" if b else "0" for b in row) for row in instance.visibility.bits]
    Path(path).write_text("\n".join(lines) + "\n")


def load_instance(path: str | Path) -> BipInstance:
    lines = Path(path).read_text().splitlines()
    meta = [ln for ln in lines if ln.startswith("#")]
    body = [ln for ln in lines if ln.strip() and not ln.startswith("#")]
    ns, nt, need, lam = body[0].split()
    ns, nt, need, lam = int(ns), int(nt), int(need), float(lam)
    cost = np.array([float(c) for c in body[1].split()]) if ns else np.zeros(0)
    rows = body[2 : 2 + ns] if ns else []
    bits = np.array([[ch == "1" for ch in r] for r in rows], dtype=bool).reshape(ns, nt)
    degree = None
    cvr = need / nt if nt else 1.0
    for ln in meta:
        key, *vals = ln[1:].split()
        if key == "degree":
            degree = np.array([int(x) for x in vals], dtype=np.int64)
        elif key == "cvr":
            cvr = float(vals[0])
    if degree is None:
        degree = np.zeros(ns, dtype=np.int64) if lam == 0 else np.rint((cost - 1.0) / lam).astype(np.int64)
    degree.setflags(write=False)
    return BipInstance(VisibilityMatrix(bits), degree, cvr, lam, need)
