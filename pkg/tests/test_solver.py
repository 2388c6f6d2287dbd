from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coverplan import _backend
from coverplan.optmodel import BipInstance, build_instance, build_overlap, default_lambda
from coverplan.solver import (
    INFEASIBLE,
    NONE,
    OPTIMAL,
    InstanceTooLarge,
    Placement,
    brute_force_solve,
    greedy_cover,
    solve,
    verify,
)
from coverplan.visibility import VisibilityMatrix, compute_cvr, min_cover_count

from conftest import tjunction_pipeline
from oracles import enumerate_cover

BACKENDS = ["python"] + (["cython"] if _backend.BACKEND == "cython" else [])


def instance(bits, cvr=1.0, lam=0.0, degree=None):
    bits = np.asarray(bits, dtype=bool)
    degree = np.ones(len(bits), np.int64) if degree is None else np.asarray(degree, np.int64)
    return BipInstance(VisibilityMatrix(bits), degree, cvr, lam, min_cover_count(bits.shape[1], cvr))


def random_instance(rng, max_ns=12, max_nt=40):
    ns, nt = int(rng.integers(1, max_ns + 1)), int(rng.integers(1, max_nt + 1))
    bits = rng.random((ns, nt)) < rng.uniform(0.05, 0.5)
    ov = build_overlap(rng.uniform(0, 20, (ns, 3)), float(rng.uniform(2, 8)))
    cvr = float(rng.choice([0.5, 0.8, 1.0]))
    lam = float(rng.choice([0.0, default_lambda(ov)]))
    return BipInstance(VisibilityMatrix(bits), ov.d, cvr, lam, min_cover_count(nt, cvr))


def test_identity_needs_every_sensor():
    p = solve(instance(np.eye(3)))
    assert p.selected == (0, 1, 2) and p.proof == OPTIMAL


def test_dominating_row_alone():
    bits = np.eye(5, dtype=bool)
    bits[3] = True
    assert solve(instance(bits)).selected == (3,)
    assert greedy_cover(instance(bits)).selected == (3,)


def test_zero_requirement_selects_nothing():
    for fn in (solve, greedy_cover, brute_force_solve):
        p = fn(instance(np.eye(3), cvr=0.0))
        assert p.selected == () and p.objective_value == 0.0


def test_empty_target_set():
    p = brute_force_solve(instance(np.zeros((2, 0))))
    assert p.selected == () and p.objective_value == 0.0
    assert solve(instance(np.zeros((2, 0)))).selected == ()


def test_identity_half_cover_breaks_tie_low():
    assert brute_force_solve(instance(np.eye(2), cvr=0.5)).selected == (0,)
    assert solve(instance(np.eye(2), cvr=0.5)).selected == (0,)


def test_infeasible_reported():
    bits = np.zeros((2, 3), bool)
    bits[0, 0] = True
    for fn in (solve, greedy_cover, brute_force_solve):
        assert fn(instance(bits)).proof == INFEASIBLE


def test_greedy_can_be_suboptimal():
    # targets 0..5; greedy takes the 4-set first and then needs two more
    sets = [{0, 1, 2, 3}, {0, 1, 4}, {2, 3, 5}]
    bits = np.array([[k in s for k in range(6)] for s in sets])
    g, opt = greedy_cover(instance(bits)), brute_force_solve(instance(bits))
    assert len(g.selected) == 3 and opt.selected == (1, 2)
    assert solve(instance(bits)).selected == (1, 2)


def test_brute_force_size_guard():
    with pytest.raises(InstanceTooLarge):
        brute_force_solve(instance(np.eye(26)))


def test_brute_force_twelve_candidates_is_quick():
    rng = np.random.default_rng(0)
    p = brute_force_solve(instance(rng.random((12, 40)) < 0.2, cvr=0.8))
    assert p.proof in (OPTIMAL, INFEASIBLE) and p.runtime < 10


def test_brute_force_matches_enumeration_oracle():
    rng = np.random.default_rng(1)
    for _ in range(40):
        inst = random_instance(rng, max_ns=8, max_nt=15)
        want = enumerate_cover(inst.visibility.bits, inst.degree, inst.lam, inst.min_cover_count)
        got = brute_force_solve(inst)
        if want is None:
            assert got.proof == INFEASIBLE
        else:
            assert (got.selected, got.objective_value) == want


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_solve_equals_brute_force(seed):
    inst = random_instance(np.random.default_rng(seed))
    b, s = brute_force_solve(inst), solve(inst)
    assert s.proof == b.proof
    assert s.objective_value == b.objective_value
    assert s.selected == b.selected
    assert verify(s, inst)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernels not built")
@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_backends_agree_including_node_counts(seed):
    inst = random_instance(np.random.default_rng(seed), max_ns=20, max_nt=80)
    a, b = solve(inst, backend="python"), solve(inst, backend="cython")
    assert (a.selected, a.objective_value, a.nodes_explored) == (b.selected, b.objective_value, b.nodes_explored)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernels not built")
def test_backends_agree_on_tjunction():
    cands, _, v = tjunction_pipeline(True, 6.0, 6.0)
    ov = build_overlap(cands, 6.0)
    inst = build_instance(v, ov, compute_cvr(v).cvr, default_lambda(ov))
    a, b = solve(inst, backend="python"), solve(inst, backend="cython")
    assert a.proof == b.proof == OPTIMAL
    assert (a.selected, a.nodes_explored) == (b.selected, b.nodes_explored)


def test_greedy_never_beats_optimum():
    rng = np.random.default_rng(2)
    for _ in range(50):
        inst = random_instance(rng)
        s = solve(inst)
        if s.proof == OPTIMAL:
            assert greedy_cover(inst).objective_value >= s.objective_value


def test_adding_a_candidate_never_hurts():
    rng = np.random.default_rng(3)
    for _ in range(40):
        inst = random_instance(rng, max_ns=10)
        extra = rng.random((1, inst.n_t)) < 0.3
        bits = np.vstack([inst.visibility.bits, extra])
        bigger = BipInstance(VisibilityMatrix(bits), np.append(inst.degree, 1), inst.cvr, 0.0, inst.min_cover_count)
        small = BipInstance(inst.visibility, inst.degree, inst.cvr, 0.0, inst.min_cover_count)
        if solve(small).proof == OPTIMAL:
            assert solve(bigger).objective_value <= solve(small).objective_value


def test_count_non_decreasing_in_cvr():
    rng = np.random.default_rng(4)
    for _ in range(30):
        bits = rng.random((10, 30)) < 0.2
        counts = []
        for cvr in (0.2, 0.4, 0.6, 0.8):
            p = solve(instance(bits, cvr=cvr))
            if p.proof != OPTIMAL:
                break
            counts.append(len(p.selected))
        assert counts == sorted(counts)


def test_lambda_scaling_keeps_min_overlap_choice():
    rng = np.random.default_rng(5)
    for _ in range(30):
        inst = random_instance(rng, max_ns=10)
        lam = 0.99 / (inst.n_s * int(inst.degree.max()))
        picks = set()
        for f in (1.0, 0.5, 0.01):
            p = solve(BipInstance(inst.visibility, inst.degree, inst.cvr, lam * f, inst.min_cover_count))
            if p.proof == OPTIMAL:
                picks.add((len(p.selected), int(inst.degree[list(p.selected)].sum())))
        assert len(picks) <= 1


def test_repeat_solves_identical():
    inst = random_instance(np.random.default_rng(6), max_ns=12)
    a, b = solve(inst), solve(inst)
    assert (a.selected, a.nodes_explored, a.objective_value) == (b.selected, b.nodes_explored, b.objective_value)


def test_node_cap_returns_incumbent_unproven():
    cands, _, v = tjunction_pipeline(False, 4.0, 2.4)
    inst = BipInstance(v, build_overlap(cands, 4.0).d, 1.0, 0.0, v.n_targets)
    p = solve(inst, node_limit=50)
    assert p.proof == NONE and not p.optimal
    assert p.covered_count == v.n_targets and verify(p, inst)


def test_time_cap_returns_incumbent_unproven():
    cands, _, v = tjunction_pipeline(False, 4.0, 2.4)
    inst = BipInstance(v, build_overlap(cands, 4.0).d, 1.0, 0.0, v.n_targets)
    p = solve(inst, time_limit=0.0)
    assert p.proof == NONE and verify(p, inst)


def test_verify_rejects_tampering():
    bits = np.eye(4, dtype=bool)
    bits[0, 1] = True
    inst = instance(bits)
    p = solve(inst)
    assert verify(p, inst)
    short = Placement(p.selected[:-1], p.objective_value - 1, p.covered_count - 1, OPTIMAL)
    assert not verify(short, inst)
    wrong = Placement(p.selected, p.objective_value + 0.5, p.covered_count, OPTIMAL)
    assert not verify(wrong, inst)
    unsorted = Placement(p.selected[::-1], p.objective_value, p.covered_count, OPTIMAL)
    assert not verify(unsorted, inst)
