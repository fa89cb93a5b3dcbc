import numpy as np
import pytest

from dcattack.case_ingest import build_case
from dcattack.dc_model import build_feasibility, build_ptdf, solve_dcopf
from dcattack.errors import ModelError, PreconditionError


def test_ptdf_two_bus(desk2):
    ptdf = build_ptdf(desk2, ref_bus=0)
    # unit injection at bus 2 flows entirely toward bus 1, i.e. against the
    # from->to orientation of the single line
    np.testing.assert_allclose(ptdf.phi, [[0.0, -1.0]], atol=1e-12)
    assert ptdf.ref_bus == 0


def test_ptdf_three_bus_ring(desk3):
    # equal susceptances: an injection at bus 2 (withdrawn at ref bus 1)
    # splits 2/3 over the direct line and 1/3 around the ring
    ptdf = build_ptdf(desk3, ref_bus=0)
    np.testing.assert_allclose(ptdf.phi[:, 1], [-2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
                               atol=1e-12)
    # reference column is identically zero
    np.testing.assert_allclose(ptdf.phi[:, 0], 0.0, atol=0.0)


def test_ptdf_brute_force_oracle(desk3):
    # solve the reduced Laplacian by hand for each injection and compare
    ptdf = build_ptdf(desk3, ref_bus=2)
    b = np.array([br.b for br in desk3.branches])
    E = ptdf.incidence
    keep = [0, 1]
    L = E[:, keep].T @ (b[:, None] * E[:, keep])
    for bus in range(2):
        theta = np.linalg.solve(L, np.eye(2)[bus])
        flows = b * (E[:, keep] @ theta)
        np.testing.assert_allclose(ptdf.phi[:, bus], flows, atol=1e-12)


def test_feasibility_shape_and_labels(desk2_limited):
    mats = build_feasibility(desk2_limited, slack_gen=0)
    assert mats.m == 6  # 2 flow rows + 2 generators * 2 bounds
    assert mats.A.shape == (6, 1)
    assert mats.B.shape == (6, 1)
    assert mats.row_labels[0].startswith("flow-upper:")
    assert mats.row_labels[2] == "slack-gen-upper:g0@bus1"
    assert mats.row_labels[3] == "gen-upper:g1@bus2"
    assert mats.row_labels[4] == "slack-gen-lower:g0@bus1"
    # slack-gen-upper row: -1^T p + (total load + total delta) - pmax_slack <= 0
    np.testing.assert_allclose(mats.A[2], [-1.0])
    np.testing.assert_allclose(mats.B[2], [1.0])
    assert mats.c[2] == pytest.approx(3.0 - 2.0)
    # slack-gen-lower mirrors it
    np.testing.assert_allclose(mats.A[4], [1.0])
    np.testing.assert_allclose(mats.B[4], [-1.0])
    assert mats.c[4] == pytest.approx(0.0 - 3.0)


def test_unrated_branches_contribute_no_rows(desk2):
    mats = build_feasibility(desk2, slack_gen=0)
    assert mats.m == 4
    assert all(not lbl.startswith("flow") for lbl in mats.row_labels)


def test_reduction_matches_direct_model(desk3):
    """Core equivalence: reduced-system margins == raw dispatch-model margins
    for random reduced dispatches and perturbations."""
    mats = build_feasibility(desk3, slack_gen=0)
    rng = np.random.default_rng(42)
    for _ in range(100):
        p_hat = rng.normal(scale=2.0, size=mats.n_reduced)
        delta = rng.normal(scale=1.5, size=mats.n_delta)
        p_full = mats.full_dispatch(p_hat, delta)
        # power balance holds by construction of the slack injection
        assert p_full.sum() == pytest.approx(2.5 + delta.sum(), abs=1e-12)
        np.testing.assert_allclose(mats.margins(p_hat, delta),
                                   mats.model1_margins(p_full, delta),
                                   atol=1e-10)


def test_reduction_matches_direct_model_single_gen(desk2_single):
    mats = build_feasibility(desk2_single, slack_gen=0)
    assert mats.A.shape == (2, 0)
    rng = np.random.default_rng(3)
    for _ in range(20):
        delta = rng.normal(size=1)
        p_full = mats.full_dispatch(np.zeros(0), delta)
        np.testing.assert_allclose(mats.margins(np.zeros(0), delta),
                                   mats.model1_margins(p_full, delta),
                                   atol=1e-12)


def test_solve_dcopf_cheapest_first(desk2):
    res = solve_dcopf(build_feasibility(desk2, slack_gen=0))
    assert res.feasible
    # cheap unit (bus 1, $10) runs at its 2.0 cap, the $20 unit covers the rest
    np.testing.assert_allclose(res.p_full, [2.0, 1.0], atol=1e-9)
    assert res.cost == pytest.approx(40.0, abs=1e-7)


def test_solve_dcopf_respects_line_limit(desk3):
    mats = build_feasibility(desk3, slack_gen=0)
    res = solve_dcopf(mats)
    assert res.feasible
    assert np.max(mats.margins(res.p_hat, None)) <= 1e-8
    flows = mats.ptdf.phi @ (
        np.array([res.p_full[0], 0.0, res.p_full[1]]) - desk3.p_d())
    assert abs(flows[0]) <= 1.6 + 1e-9


def test_solve_dcopf_infeasible_is_certified(desk2):
    mats = build_feasibility(desk2, slack_gen=0)
    res = solve_dcopf(mats, delta=np.array([1.2]))  # headroom is only 1.0
    assert not res.feasible
    y = res.ray
    assert np.all(y >= 0) and y.sum() == pytest.approx(1.0)
    assert np.max(np.abs(mats.A.T @ y)) <= 1e-9
    assert y @ (mats.B @ np.array([1.2]) + mats.c) > 0


def test_slack_choice_invariance(desk3):
    costs = []
    for slack in range(desk3.n_gen):
        res = solve_dcopf(build_feasibility(desk3, slack_gen=slack))
        assert res.feasible
        costs.append(res.cost)
    assert abs(costs[0] - costs[1]) <= 1e-7


def test_no_perturbable_loads_rejected():
    case = build_case("noload", 100.0, buses=[(1, 0.0), (2, 0.0)],
                      branches=[(1, 2, 0.1, None)],
                      generators=[(1, 0.0, 2.0)])
    with pytest.raises(ModelError, match="nonzero loads"):
        build_feasibility(case)


def test_mismatched_ptdf_rejected(desk3):
    ptdf = build_ptdf(desk3, ref_bus=1)
    with pytest.raises(PreconditionError):
        build_feasibility(desk3, slack_gen=0, ptdf=ptdf)


def test_dump_dict_round_trip(desk2_limited):
    mats = build_feasibility(desk2_limited)
    doc = mats.to_json_dict()
    assert doc["rows"] == 6
    np.testing.assert_allclose(np.array(doc["A"]), mats.A)
    assert doc["row_labels"][2] == "slack-gen-upper:g0@bus1"
    assert doc["load_bus_ids"] == [2]
