"""Exact solver for the sensor-selection program.

The search runs in the compiled kernel when available (see ``_backend``),
seeded with the greedy cover as incumbent. At each node:

* candidates with no marginal gain are dropped;
* the bound is the fewest remaining candidates whose gains (largest first)
  reach the coverage deficit, charged the smallest remaining degrees;
* nodes whose bound exceeds the incumbent are pruned. Equal bounds are kept
  so the lexicographically smallest optimal selection is found in one pass.

Branching depends on the slack, the number of reachable uncovered targets
beyond the deficit. With slack, branch include/exclude on the candidate of
largest marginal gain (lowest index on ties). Without slack every reachable
target must be covered, so branch on the target with the fewest candidates:
one child per candidate, earlier siblings excluded from later children.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .optmodel import BipInstance, objective_value

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
NONE = "none"  # budget exhausted; selection is the best found, not proven

BRUTE_FORCE_LIMIT = 25


class InstanceTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class Placement:
    selected: tuple[int, ...]
    objective_value: float
    covered_count: int
    proof: str
    nodes_explored: int = 0
    runtime: float = 0.0
    stats: dict = field(default_factory=dict, compare=False)

    @property
    def optimal(self) -> bool:
        return self.proof == OPTIMAL


def _placement(instance: BipInstance, masks: list[int], selected, proof: str, nodes=0, runtime=0.0, **stats) -> Placement:
    sel = tuple(sorted(selected))
    cov = 0
    for i in sel:
        cov |= masks[i]
    return Placement(sel, instance.objective(sel), cov.bit_count(), proof, nodes, runtime, stats)


def _infeasible(instance: BipInstance, masks: list[int], start: float) -> Placement | None:
    union = 0
    for m in masks:
        union |= m
    if union.bit_count() < instance.min_cover_count:
        return _placement(instance, masks, range(instance.n_s), INFEASIBLE, 0, time.perf_counter() - start)
    return None


def greedy_cover(instance: BipInstance) -> Placement:
    """Repeatedly take the candidate adding the most uncovered targets
    (lowest index on ties) until the coverage requirement is met."""
    start = time.perf_counter()
    masks = instance.visibility.row_masks()
    need = instance.min_cover_count
    covered = 0
    chosen: list[int] = []
    free = set(range(instance.n_s))
    while covered.bit_count() < need:
        best_gain, best_i = 0, -1
        for i in sorted(free):
            g = (masks[i] & ~covered).bit_count()
            if g > best_gain:
                best_gain, best_i = g, i
        if best_i < 0:
            return _placement(instance, masks, range(instance.n_s), INFEASIBLE, 0, time.perf_counter() - start)
        chosen.append(best_i)
        free.discard(best_i)
        covered |= masks[best_i]
    return _placement(instance, masks, chosen, OPTIMAL if need == 0 else NONE, 0, time.perf_counter() - start)


def solve(
    instance: BipInstance,
    node_limit: int | None = None,
    time_limit: float | None = None,
    backend: str | None = None,
) -> Placement:
    """Provably optimal selection, ties broken to the lexicographically smallest
    sorted index list. On budget exhaustion the best selection found so far is
    returned with ``proof == "none"``."""
    start = time.perf_counter()
    masks = instance.visibility.row_masks()
    bad = _infeasible(instance, masks, start)
    if bad is not None:
        return bad
    seed = greedy_cover(instance)
    search = _backend.kernels(backend, "cover_search")
    sel, _, nodes, exhausted = search(
        instance.visibility.bits,
        np.asarray(instance.degree, dtype=np.int64),
        instance.lam,
        instance.min_cover_count,
        seed.objective_value,
        seed.selected,
        -1 if node_limit is None else int(node_limit),
        -1.0 if time_limit is None else float(time_limit),
    )
    return _placement(
        instance, masks, sel, NONE if exhausted else OPTIMAL, nodes, time.perf_counter() - start,
        backend=backend or _backend.BACKEND, greedy_objective=seed.objective_value,
    )


def brute_force_solve(instance: BipInstance) -> Placement:
    """Exhaustive enumeration; minimal objective, ties to the lexicographically
    smallest sorted index list."""
    n = instance.n_s
    if n > BRUTE_FORCE_LIMIT:
        raise InstanceTooLarge(f"brute force is limited to {BRUTE_FORCE_LIMIT} candidates, got {n}")
    start = time.perf_counter()
    bits = instance.visibility.bits
    need = instance.min_cover_count
    degree = [int(x) for x in instance.degree]
    masks = [int("".join("1" if b else "0" for b in row[::-1]) or "0", 2) for row in bits]
    min_deg = sorted(degree)
    best, best_sel = np.inf, None
    count = 0
    for k in range(n + 1):
        floor = objective_value(k, sum(min_deg[:k]), instance.lam)
        if floor > best:
            break
        for combo in itertools.combinations(range(n), k):
            count += 1
            cov = 0
            for i in combo:
                cov |= masks[i]
            if bin(cov).count("1") < need:
                continue
            obj = objective_value(k, sum(degree[i] for i in combo), instance.lam)
            if obj < best or (obj == best and list(combo) < list(best_sel)):
                best, best_sel = obj, combo
    runtime = time.perf_counter() - start
    if best_sel is None:
        return _placement(instance, masks, range(n), INFEASIBLE, count, runtime)
    return _placement(instance, masks, best_sel, OPTIMAL, count, runtime)


def verify(placement: Placement, instance: BipInstance) -> bool:
    """Recompute coverage and objective from the raw matrix."""
    sel = list(placement.selected)
    if sel != sorted(set(sel)) or any(i < 0 or i >= instance.n_s for i in sel):
        return False
    covered = int(instance.visibility.bits[sel].any(axis=0).sum()) if sel else 0
    if covered != placement.covered_count:
        return False
    if placement.proof == INFEASIBLE:
        return int(instance.visibility.bits.any(axis=0).sum()) < instance.min_cover_count
    if covered < instance.min_cover_count:
        return False
    expected = len(sel) + instance.lam * float(sum(int(instance.degree[i]) for i in sel))
    return abs(expected - placement.objective_value) <= 1e-9
