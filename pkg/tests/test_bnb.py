import math

import numpy as np
import pytest

from rltconic.bnb import BnbConfig, BnbStatus, root_bound, run_variant_suite, solve_problem
from rltconic.instances import brute_force, ds_style_problem, random_problem
from rltconic.poly import check_feasible, parse_problem
from rltconic.strengthen import ALL_VARIANTS, Variant


def test_eq4_rlt(eq4):
    res = solve_problem(eq4, BnbConfig(variant=Variant.RLT))
    assert res.status is BnbStatus.OPTIMAL
    assert res.objective == pytest.approx(1.0, abs=1e-5)
    assert res.x[0] == pytest.approx(1.0, abs=1e-4)
    assert res.x[1] == pytest.approx(0.0, abs=1e-3)  # enters the objective quadratically
    assert res.x[0] * res.x[1] + res.x[0] * res.x[3] >= 1.0 - 1e-6


def test_eq4_all_variants(eq4):
    results = run_variant_suite(eq4, ALL_VARIANTS)
    assert set(results) == set(ALL_VARIANTS)
    for v, res in results.items():
        assert res.status is BnbStatus.OPTIMAL, v
        assert res.objective == pytest.approx(1.0, abs=1e-5), v
        assert check_feasible(eq4, res.x, 1e-6)


def test_linear_problem_one_node():
    res = solve_problem(parse_problem("var x in [0, 1]\nmin: x\n"))
    assert res.status is BnbStatus.OPTIMAL and res.nodes == 1
    assert res.objective == pytest.approx(0.0, abs=1e-7)


def test_infeasible_box():
    res = solve_problem(parse_problem("var x in [0, 1]\nmin: x\nst c: x >= 2\n"))
    assert res.status is BnbStatus.INFEASIBLE


def test_maximisation_reports_user_sense():
    res = solve_problem(parse_problem("var x in [0, 2]\nvar y in [0, 3]\nmax: x*y\n"))
    assert res.status is BnbStatus.OPTIMAL and res.objective == pytest.approx(6.0, abs=1e-5)


@pytest.mark.parametrize("kwargs", [dict(time_limit_s=0.0), dict(branch_guard=0.5), dict(branch_guard=0.0),
                                    dict(clock="cpu"), dict(variant="nope")])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        BnbConfig(**kwargs)


def test_empty_suite_rejected(eq4):
    with pytest.raises(ValueError):
        run_variant_suite(eq4, [])


def test_time_limit_records_root():
    prob = ds_style_problem(1, n=5, degree=3, density=0.3)
    res = solve_problem(prob, BnbConfig(time_limit_s=0.001, clock="work"))
    assert res.status is BnbStatus.TIME_LIMIT
    assert math.isfinite(res.lb_root) and res.lb_end >= res.lb_root


def _check_run(prob, res, cfg):
    lbs = [lb for _, lb, _, _ in res.trace]
    assert all(b >= a - 1e-7 for a, b in zip(lbs, lbs[1:]))
    if res.x is not None:
        assert check_feasible(prob, res.x, 1e-6)
        assert res.lb <= res.ub + cfg.abs_gap + 1e-6 * abs(res.ub)


@pytest.mark.parametrize("seed", range(6))
def test_matches_oracle(seed):
    rng = np.random.default_rng([11, seed])
    prob = random_problem(rng, n=int(rng.integers(2, 4)), degree=int(rng.integers(2, 4)),
                          constraints=int(rng.integers(0, 3)))
    oracle = brute_force(prob)
    for v in (Variant.RLT, Variant.SDPCUTS, Variant.SOCP_B, Variant.SDP2):
        cfg = BnbConfig(variant=v)
        res = solve_problem(prob, cfg)
        assert res.status is BnbStatus.OPTIMAL
        assert res.objective == pytest.approx(oracle.value, abs=1e-4)
        _check_run(prob, res, cfg)


def test_cut_separation_and_monotone_bound():
    prob = random_problem(5, n=3, degree=3, constraints=1)
    res = solve_problem(prob, BnbConfig(variant=Variant.SDPCUTS))
    assert all(v >= 1e-6 for v in res.cut_stats.violations)
    assert all(d >= -1e-7 for d in res.cut_stats.lb_changes)


def test_deterministic_under_work_clock():
    prob = random_problem(9, n=3, degree=3, constraints=1)
    cfg = BnbConfig(variant=Variant.SOCP, clock="work")
    a, b = solve_problem(prob, cfg), solve_problem(prob, cfg)
    assert (a.nodes, a.ub, a.lb, a.time_s, a.trace) == (b.nodes, b.ub, b.lb, b.time_s, b.trace)


def test_root_bound_ordering(eq4):
    rlt = root_bound(eq4, Variant.RLT)
    socp = root_bound(eq4, Variant.SOCP)
    sdp2 = root_bound(eq4, Variant.SDP2)
    assert rlt <= socp + 1e-6 and socp <= sdp2 + 1e-6
    socp_b = root_bound(eq4, Variant.SOCP_B, retained_only=True)
    assert rlt - 1e-6 <= socp_b <= socp + 1e-6


def test_degenerate_node_lps_stay_accurate():
    # small boxes late in this search produce LPs whose normal equations are
    # numerically singular; every node LP must still solve to full accuracy
    rng = np.random.default_rng([4, 2])
    prob = random_problem(rng, n=int(rng.integers(2, 5)), degree=int(rng.integers(2, 4)),
                          constraints=int(rng.integers(0, 3)))
    res = solve_problem(prob, BnbConfig(variant=Variant.RLT, time_limit_s=30))
    assert res.status is BnbStatus.OPTIMAL
    assert res.objective == pytest.approx(brute_force(prob).value, abs=1e-4)


def test_near_optimal_bound_is_conservative():
    from rltconic.bnb import _bound
    from rltconic.conic import ConicSolution, Status
    z = np.zeros(1)
    near = ConicSolution(Status.NEAR_OPTIMAL, z, z, z, -1.0, 0, 0, 0, 30, dual_obj=-1.1)
    assert _bound(near) == -1.1
    exact = ConicSolution(Status.OPTIMAL, z, z, z, -1.0, 0, 0, 0, 30, dual_obj=-1.1)
    assert _bound(exact) == -1.0
