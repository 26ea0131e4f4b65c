import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from discount_scheduling.datagen import GeneratorConfig, generate_instance
from discount_scheduling.decomposition import build_chunk_qubo, chunk_targets, partition_customers, run_decomposition
from discount_scheduling.encoding import build_encoding
from discount_scheduling.errors import DegenerateReference
from discount_scheduling.metrics import (
    avg_discount_changes,
    co2_reduction_error,
    consumption_deviation_std,
    full_report,
    relative_cost_error,
    savings_distribution,
    write_report_csv,
)
from discount_scheduling.model import DiscountMatrix, PenaltyWeights, emissions, normalizations
from discount_scheduling.relaxation import solve_global
from discount_scheduling.solvers import SolverBudget, solve_exhaustive

from conftest import make_instance, random_instance, random_z


def two_step():
    # zeta* = (-0.5, +0.5): the whole band moves from the dirty step to the clean one
    return make_instance([[10, 10]], [1, 2], dp=[5, 5], penalties=PenaltyWeights(0.1, 0, 0))


def test_zero_discounts():
    inst = two_step()
    prof = solve_global(inst)
    z = np.zeros((1, 2))
    rep = full_report(inst, z, prof)
    assert rep.co2_reduction_error == 1.0
    assert rep.consumption_deviation_std == 0.0
    assert rep.avg_discount_changes == 0.0
    assert rep.mean_relative_savings == 0.0
    assert all(v == 0 for _, v in rep.savings_quantiles)
    assert rep.feasibility.feasible
    e0 = emissions(inst, z)
    e_star = 1 * 15 + 2 * 5
    n0 = normalizations(inst).n0
    assert rep.relative_cost_error == pytest.approx(abs(e0 / n0 - e_star / n0) / (e_star / n0), rel=1e-12)


def test_attaining_the_bound_gives_zero_errors():
    inst = two_step()
    prof = solve_global(inst)
    np.testing.assert_allclose(prof.zeta, [-0.5, 0.5])
    z = [[-0.5, 0.5]]
    assert co2_reduction_error(inst, z, prof) == pytest.approx(0.0, abs=1e-12)
    assert relative_cost_error(inst, z, prof) == pytest.approx(0.0, abs=1e-12)


def test_relative_cost_error_on_exhaustive_optimum_matches_direct_formula():
    inst = make_instance([[1, 2], [2, 1]], [1, 3], dp=[0.5, 0.5], n_k=3)
    prof = solve_global(inst)
    ch = partition_customers(inst, 2)
    tg = chunk_targets(inst, ch, prof)
    cq = build_chunk_qubo(inst, ch.chunks[0], tg.xi[0], build_encoding(inst.scheme), normalizations(inst))
    bits, _ = solve_exhaustive(cq.qubo, SolverBudget(sweep_count=1))
    idx = np.zeros((2, 2), dtype=int)
    idx[list(ch.chunks[0])] = cq.decode(bits)
    z = inst.scheme.values[idx]
    # direct evaluation with plain loops
    d, I, zm = [[1, 2], [2, 1]], [1, 3], 0.5
    e = sum(I[t] * (1 - z[c][t]) * d[c][t] for c in range(2) for t in range(2))
    e0 = sum(I[t] * d[c][t] for c in range(2) for t in range(2))
    e_min = sum(I[t] * (1 - (1 if I[t] > 2 else -1) * zm) * d[c][t] for c in range(2) for t in range(2))
    n0 = e0 - e_min
    dev = sum((sum(d[c][t] * z[c][t] for t in range(2)) / sum(d[c])) ** 2 for c in range(2))
    chg = sum((z[c][0] - z[c][1]) ** 2 for c in range(2))
    reg = sum(z[c][t] ** 2 for c in range(2) for t in range(2))
    c_z = e / n0 + 0.1 / (2 * zm**2) * dev + 1e-5 / (8 * zm**2) * chg + 1e-4 / (4 * zm**2) * reg
    dt = [3, 3]
    c_star = sum(I[t] * dt[t] * (1 - prof.zeta[t]) for t in range(2)) / n0
    assert relative_cost_error(inst, z, prof) == pytest.approx(abs(c_z - c_star) / c_star, rel=1e-12)


def test_co2_error_rejects_degenerate_reference():
    inst = two_step()
    with pytest.raises(DegenerateReference):
        co2_reduction_error(inst, np.zeros((1, 2)), np.zeros(2))


def test_deviation_std_single_customer():
    inst = make_instance([[1, 1]], [1, 2])
    assert consumption_deviation_std(inst, [[0.25, 0.25]]) == pytest.approx(0.25)
    assert consumption_deviation_std(inst, [[0.25, -0.25]]) == 0.0


def test_discount_changes_examples():
    inst = make_instance([[1] * 6] * 2, [1, 2, 3, 4, 5, 6])
    assert avg_discount_changes(inst, np.full((2, 6), 0.25)) == 0.0
    alt = np.tile([0.5, -0.5], (2, 3))
    assert avg_discount_changes(inst, alt) == 1.0
    assert avg_discount_changes(inst, DiscountMatrix.from_values(alt, inst.scheme)) == 1.0
    half = np.array([[0.5, 0.5, 0.5, -0.5, -0.5, -0.5]] * 2)
    assert avg_discount_changes(inst, half) == pytest.approx(1 / 5)


def test_random_extremal_matrices_match_closed_forms():
    rng = np.random.default_rng(0)
    inst = random_instance(rng, 60, 40)
    zm = inst.scheme.z_max
    d = inst.consumption
    analytic = zm * np.sqrt(np.mean((d**2).sum(axis=1) / d.sum(axis=1) ** 2))
    stds, changes, means = [], [], []
    for _ in range(100):
        z = zm * rng.choice([-1.0, 1.0], size=d.shape)
        stds.append(consumption_deviation_std(inst, z))
        changes.append(avg_discount_changes(inst, z))
        means.append(savings_distribution(inst, z)[1])
    assert np.sqrt(np.mean(np.square(stds))) == pytest.approx(analytic, rel=0.05)
    assert np.mean(changes) == pytest.approx(0.5, abs=0.02)
    chi_mean = inst.elasticity.mean()
    assert np.mean(means) == pytest.approx(zm**2 * chi_mean, rel=0.1)


def test_identical_customers_have_identical_savings():
    inst = make_instance([[1, 2, 3]] * 4, [1, 2, 3])
    z = np.tile([0.25, -0.5, 0.5], (4, 1))
    qs, mean = savings_distribution(inst, z, quantiles=(0.0, 0.5, 1.0))
    assert qs[0][1] == qs[1][1] == qs[2][1] == pytest.approx(mean)


def test_quantiles_use_linear_interpolation():
    inst = make_instance([[1, 1]] * 2, [1, 2])
    z = [[0.5, 0.5], [0.0, 0.0]]
    qs, _ = savings_distribution(inst, z, quantiles=(0.5,))
    s_top = 0.25 * 2 / (2 * 0.5)
    assert qs[0][1] == pytest.approx(s_top / 2)


def test_infeasible_matrix_still_reports():
    inst = make_instance([[1, 1]], [1, 2], dp=[0.1, 0.1])
    prof = solve_global(inst)
    rep = full_report(inst, [[0.5, 0.5]], prof)
    assert not rep.feasibility.feasible
    assert np.isfinite(rep.co2_reduction_error)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_metrics_invariant_under_customer_permutation(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, int(rng.integers(2, 7)), int(rng.integers(2, 6)))
    prof = solve_global(inst)
    z = random_z(rng, inst)
    perm = rng.permutation(inst.n_customers)
    inst_p = inst.replace(consumption=inst.consumption[perm], elasticity=inst.elasticity[perm])
    z_p = DiscountMatrix(z.index[perm], inst.scheme)
    a, b = full_report(inst, z, prof), full_report(inst_p, z_p, prof)
    for key in ("relative_cost_error", "co2_reduction_error", "consumption_deviation_std",
                "avg_discount_changes", "mean_relative_savings"):
        assert getattr(a, key) == pytest.approx(getattr(b, key), rel=1e-9, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.floats(0.01, 100))
def test_ratio_metrics_invariant_under_scaling(seed, k):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, int(rng.integers(1, 6)), int(rng.integers(2, 6)))
    z = random_z(rng, inst)
    scaled = inst.replace(consumption=inst.consumption * k, power_bound=inst.power_bound * k)
    assert consumption_deviation_std(scaled, z) == pytest.approx(consumption_deviation_std(inst, z), rel=1e-9, abs=1e-15)
    assert avg_discount_changes(scaled, z) == avg_discount_changes(inst, z)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_report_field_ranges(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, int(rng.integers(1, 6)), int(rng.integers(2, 6)))
    rep = full_report(inst, random_z(rng, inst), solve_global(inst))
    assert 0.0 <= rep.avg_discount_changes <= 1.0
    assert rep.consumption_deviation_std >= 0.0
    assert rep.mean_relative_savings >= 0.0


@pytest.mark.parametrize("seed", range(3))
def test_pipeline_output_report_is_finite_and_above_bound(seed):
    inst = generate_instance(GeneratorConfig(n_customers=12, n_timesteps=10, seed=seed))
    res = run_decomposition(inst, 4, "sa", SolverBudget(sweep_count=300, seed=seed))
    rep = full_report(inst, res.z, res.profile)
    assert rep.feasibility.feasible
    assert all(np.isfinite(v) for v in rep.flat_row().values())
    assert rep.co2_reduction_error >= -1e-9


def test_report_serialization(tmp_path):
    inst = two_step()
    rep = full_report(inst, [[-0.5, 0.5]], solve_global(inst))
    data = json.loads(rep.to_json())
    assert data["feasibility"]["feasible"] is True
    assert data["savings_quantiles"][0][0] == 0.0
    path = tmp_path / "r.csv"
    write_report_csv(rep, path)
    rows = list(csv.DictReader(open(path)))
    assert len(rows) == 1
    assert float(rows[0]["co2_reduction_error"]) == rep.co2_reduction_error
    assert "savings_q0.5" in rows[0]
