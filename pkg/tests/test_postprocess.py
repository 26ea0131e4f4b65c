import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from discount_scheduling.decomposition import run_decomposition
from discount_scheduling.model import DiscountMatrix, DiscountScheme, check_constraints, cost, power_deviation
from discount_scheduling.postprocess import (
    PostProcessConfig,
    _limit,
    power_band,
    post_process,
    verify_power_feasibility,
    write_change_log,
)
from discount_scheduling.relaxation import solve_global
from discount_scheduling.solvers import SolverBudget

from conftest import make_instance, random_instance, random_z

PAIRS_ONLY = PostProcessConfig(repair=False, balance=False)


def test_fixed_point_has_no_moves():
    inst = make_instance([[1, 1], [1, 1]], [1, 2])
    z = DiscountMatrix.from_values([[0.5, -0.5], [-0.5, 0.5]], inst.scheme)
    res = post_process(inst, z, np.zeros(2))
    assert res.moves == []
    assert res.z == z
    np.testing.assert_allclose(res.deviation, 0.0)


def test_single_pair_exchange_hand_trace():
    # c0 has delta = +1 (> Delta/2 = 0.125), c1 has delta = -1 (< -0.375) from timestep 1.
    # At t=0, eps = 1.0 and the pair (up c1, down c0) moves p by 0.75 - 0.25 = 0.5.
    inst = make_instance([[1, 2], [3, 2]], [1, 2])
    z = DiscountMatrix.from_values([[0.0, 0.5], [0.0, -0.5]], inst.scheme)
    zeta = np.array([1.0 / 4.0, 0.0])
    res = post_process(inst, z, zeta, PAIRS_ONLY)
    assert len(res.moves) == 1
    mv = res.moves[0]
    assert (mv.timestep, mv.customer_up, mv.customer_down, mv.kind) == (0, 1, 0, "pair")
    assert mv.eps_before == pytest.approx(1.0)
    assert mv.eps_after == pytest.approx(0.5)
    np.testing.assert_allclose(res.z.values, [[-0.25, 0.5], [0.25, -0.5]])
    np.testing.assert_allclose(res.deviation, [1.0 - 0.25, -1.0 + 0.75])


def test_pair_rejected_when_it_would_overshoot():
    inst = make_instance([[1, 2], [3, 2]], [1, 2])
    z = DiscountMatrix.from_values([[0.0, 0.5], [0.0, -0.5]], inst.scheme)
    # eps = 0.4 < 0.5: every pair overshoots, so X <= 0 and nothing is applied
    res = post_process(inst, z, np.array([0.1, 0.0]), PAIRS_ONLY)
    assert res.moves == []


def test_saturated_at_top_has_no_up_candidates():
    inst = make_instance([[1, 2], [3, 2]], [1, 2])
    z = DiscountMatrix.constant((2, 2), 0.5, inst.scheme)
    res = post_process(inst, z, np.array([0.5, 0.5]), PAIRS_ONLY)
    assert res.moves == []


def test_zero_zeta_uses_positive_sign():
    inst = make_instance([[1, 1], [1, 1]], [1, 2])
    lo, hi = power_band(inst, np.array([0.0, -0.25]))
    np.testing.assert_allclose(lo, [-1e9, -0.5])
    np.testing.assert_allclose(hi, [0.0, 1e9])


def test_limit_keeps_largest_abs_delta_then_lowest_index():
    delta = np.array([0.5, -2.0, 2.0, 0.1, -0.5])
    cands = np.arange(5)
    np.testing.assert_array_equal(_limit(cands, delta, 2), [1, 2])
    np.testing.assert_array_equal(_limit(cands, delta, 3), [0, 1, 2])
    np.testing.assert_array_equal(_limit(cands, delta, 10), cands)


def test_verify_power_feasibility_examples():
    inst = make_instance([[2, 2], [2, 2]], [1, 2], dp=[10, 10])
    zeta = np.array([-0.25, 0.25])
    assert verify_power_feasibility(inst, np.zeros((2, 2)), zeta)
    # target at t=1 is +1.0; 1.5 lies past it on the positive side
    z = np.array([[0.0, 0.5], [0.0, 0.25]])
    assert power_deviation(inst, z)[1] == pytest.approx(1.5)
    assert not verify_power_feasibility(inst, z, zeta)
    # below the target on the same side is fine
    assert verify_power_feasibility(inst, np.array([[0.0, 0.25], [0.0, 0.0]]), zeta)


def test_repair_brings_power_back_into_band():
    inst = make_instance([[1, 1]] * 4, [1, 2], dp=[0.6, 0.6])
    z = DiscountMatrix.constant((4, 2), 0.5, inst.scheme)  # p = 2 at each step
    prof = solve_global(inst)
    res = post_process(inst, z, prof)
    assert verify_power_feasibility(inst, res.z, prof)
    assert check_constraints(inst, res.z).feasible
    assert any(m.kind == "repair" for m in res.moves)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), cutoff=st.integers(1, 6), passes=st.integers(1, 3))
def test_pair_moves_shrink_eps_and_bookkeeping_is_exact(seed, cutoff, passes):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, int(rng.integers(2, 9)), int(rng.integers(2, 7)))
    prof = solve_global(inst)
    z = random_z(rng, inst)
    res = post_process(inst, z, prof, PostProcessConfig(cutoff=cutoff, passes=passes))
    for mv in res.moves:
        if mv.kind == "pair":
            assert abs(mv.eps_after) < abs(mv.eps_before)
            assert mv.customer_up != mv.customer_down
    recomputed = (inst.elasticity[:, None] * inst.consumption * res.z.values).sum(axis=1)
    np.testing.assert_allclose(res.deviation, recomputed, rtol=0, atol=1e-9)
    assert res.max_candidates <= cutoff


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_single_pass_pair_moves_touch_two_cells_by_one_step(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, int(rng.integers(2, 9)), int(rng.integers(2, 7)))
    z = random_z(rng, inst)
    res = post_process(inst, z, solve_global(inst), PAIRS_ONLY)
    diff = res.z.index - z.index
    assert np.abs(diff).max(initial=0) <= 1
    assert np.count_nonzero(diff) == 2 * len(res.moves)
    assert len({m.timestep for m in res.moves}) == len(res.moves)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_full_post_process_is_power_feasible(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, int(rng.integers(2, 9)), int(rng.integers(2, 7)))
    prof = solve_global(inst)
    res = post_process(inst, random_z(rng, inst), prof)
    assert verify_power_feasibility(inst, res.z, prof)
    assert not check_constraints(inst, res.z).power_violations


def test_pipeline_output_is_feasible():
    rng = np.random.default_rng(11)
    for k in range(10):
        inst = random_instance(rng, 12, 8)
        res = run_decomposition(inst, 4, "sa", SolverBudget(sweep_count=200, seed=k))
        assert verify_power_feasibility(inst, res.z, res.profile)
        assert check_constraints(inst, res.z).feasible


def test_pair_exchange_rarely_raises_cost():
    # repair and balance trade cost for feasibility; the pair exchange alone should not
    rng = np.random.default_rng(11)
    kept = 0
    for k in range(20):
        inst = random_instance(rng, 12, 8)
        res = run_decomposition(inst, 4, "sa", SolverBudget(sweep_count=200, seed=k), postprocess_config=None)
        z = post_process(inst, res.raw, res.profile, PAIRS_ONLY).z
        kept += cost(inst, z) <= cost(inst, res.raw) + 1e-12
    assert kept >= 18


def test_post_process_is_deterministic():
    rng = np.random.default_rng(3)
    inst = random_instance(rng, 6, 5)
    z = random_z(rng, inst)
    prof = solve_global(inst)
    a, b = post_process(inst, z, prof), post_process(inst, z, prof)
    assert a.z == b.z and a.moves == b.moves


def test_change_log_csv(tmp_path):
    inst = make_instance([[1, 2], [3, 2]], [1, 2])
    z = DiscountMatrix.from_values([[0.0, 0.5], [0.0, -0.5]], inst.scheme)
    res = post_process(inst, z, np.array([0.25, 0.0]), PAIRS_ONLY)
    path = tmp_path / "log.csv"
    write_change_log(res.moves, path)
    rows = list(csv.DictReader(open(path)))
    assert list(rows[0])[:6] == ["pass", "timestep", "customer_up", "customer_down", "eps_before", "eps_after"]
    assert rows[0]["customer_up"] == "1" and rows[0]["customer_down"] == "0"
    assert float(rows[0]["eps_after"]) == res.moves[0].eps_after


def test_config_validation():
    with pytest.raises(ValueError):
        PostProcessConfig(cutoff=0)
    with pytest.raises(ValueError):
        PostProcessConfig(passes=0)


def test_works_with_coarser_grid():
    inst = make_instance([[1, 2, 1], [2, 1, 3]], [1, 3, 2], n_k=3, dp=[2, 2, 2])
    prof = solve_global(inst)
    z = DiscountMatrix.constant((2, 3), -0.5, DiscountScheme(0.5, 3))
    res = post_process(inst, z, prof)
    assert verify_power_feasibility(inst, res.z, prof)
