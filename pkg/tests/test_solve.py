import numpy as np
import pytest

from hyoc.errors import SizeLimitError
from hyoc.lc import simulate as lc_simulate
from hyoc.lc import with_blocks
from hyoc.mpcc import QuadraticStageCost, assemble, certificate_lp, verify_certificate
from hyoc.pwa import Polytope, eval_dynamics, random_dc_system
from hyoc.solve import (
    SolveReport,
    assignment_from_point,
    branch_qp,
    initial_feasible_point,
    solve_global_oracle,
    solve_local,
    solve_local_multistart,
)
from hyoc.transform import build_compact, build_sparse, default_supports


def scalar_cost(N):
    return QuadraticStageCost(Q=np.zeros((N, 1, 1)), R=np.ones((N, 1, 1)),
                              q_lin=np.zeros((N, 1)), r_lin=np.zeros((N, 1)),
                              offsets=np.zeros(N), Q_N=np.eye(1), q_N=np.zeros(1))


@pytest.fixture
def hinge_problem(hinge_lc_model):
    return assemble(with_blocks(hinge_lc_model), scalar_cost(1), x0=[0.0], N=1)


def grid_search_best(x0, step_size=1e-4):
    us = np.arange(-5.0, 5.0 + 1e-12, step_size)
    xs = np.maximum(-(x0 + us + 2.0), -1.0)
    J = 0.5 * us ** 2 + 0.5 * xs ** 2
    k = int(np.argmin(J))
    return us[k], float(J[k])


def test_local_from_far_edge_branch_escapes(hinge_problem):
    # Pin w_1 = 0, complementarity row 2 active: the configuration whose
    # point at u = -1 is only M-stationary.  The solver must certify a point
    # strictly better than J = 1.
    init = np.array([False, True])
    report = solve_local(hinge_problem, init=init)
    assert report.status == "s_stationary"
    assert report.objective <= 1.0 - 1e-6
    assert verify_certificate(hinge_problem, report.v, report.certificate, regime="s")


def test_local_default_start_matches_global(hinge_problem):
    report = solve_local(hinge_problem)
    assert report.status == "s_stationary"
    u_best, j_best = grid_search_best(0.0)
    assert report.objective == pytest.approx(j_best, abs=1e-6)
    assert report.u[0, 0] == pytest.approx(u_best, abs=1e-4)


def test_local_report_invariants(hinge_problem):
    report = solve_local(hinge_problem)
    # The certificate must re-verify through an independent LP call.
    cert = certificate_lp(hinge_problem, report.v, regime="s")
    assert cert is not None
    assert hinge_problem.is_feasible(report.v)
    viol = hinge_problem.violations(report.v)
    assert viol["complementarity"] <= 1e-8


def test_local_started_from_point(hinge_problem):
    v0 = np.array([-1.0, -1.0, 0.0, 1.0])
    assert assignment_from_point(hinge_problem, v0).tolist() == [False, True]
    report = solve_local(hinge_problem, init=v0)
    assert report.status == "s_stationary"
    assert report.objective <= 1.0 - 1e-6


def test_local_no_complementarity_rows():
    from hyoc.lc import LcModel
    model = with_blocks(LcModel(A=[[0.5]], B_u=[[1.0]], B_w=np.zeros((1, 0)),
                                c=[0.0], E_w=np.zeros((0, 0)),
                                E_x=np.zeros((0, 1)), E_u=np.zeros((0, 1)),
                                e=np.zeros(0), domain=Polytope.box(-5, 5, 2)))
    p = assemble(model, QuadraticStageCost.tracking(1, 1, 2), x0=[1.0], N=2)
    report = solve_local(p)
    assert report.status == "s_stationary"
    assert report.iterations == 0
    # Unconstrained linear-quadratic problem: strictly convex in (u, x).
    assert report.mssosc is True


def test_branch_qp_matches_configuration(hinge_problem):
    qp, layout = branch_qp(hinge_problem, np.array([True, False]))
    assert qp.A_eq.shape[0] == 1 + 1 + 1  # dynamics + pinned G + pinned w
    assert layout["pinned_g"].tolist() == [0]
    assert layout["pinned_h"].tolist() == [1]


def test_initial_feasible_point(hinge_problem):
    v0 = initial_feasible_point(hinge_problem)
    assert v0 is not None
    assert hinge_problem.is_feasible(v0)


def test_oracle_hinge_global(hinge_system):
    u_best, j_best = grid_search_best(0.0)
    report = solve_global_oracle(hinge_system, scalar_cost(1), x0=[0.0], N=1)
    assert report.status == "global_optimal"
    assert report.objective == pytest.approx(j_best, abs=1e-6)
    assert report.u[0, 0] == pytest.approx(u_best, abs=1e-4)


def test_oracle_zero_horizon(hinge_system):
    cost = scalar_cost(1)
    report = solve_global_oracle(hinge_system, cost, x0=[2.0], N=0)
    assert report.status == "global_optimal"
    assert report.objective == pytest.approx(0.5 * 4.0)


def test_oracle_size_guard(pyramid_system):
    with pytest.raises(SizeLimitError):
        solve_global_oracle(pyramid_system, QuadraticStageCost.tracking(1, 1, 9),
                            x0=[0.0], N=9)


def test_oracle_time_limit(pyramid_system):
    report = solve_global_oracle(pyramid_system, QuadraticStageCost.tracking(1, 1, 4),
                                 x0=[0.0], N=4, time_limit=1e-4)
    assert report.status == "timed_out"


def test_oracle_respects_domain():
    # Domain box small enough that large inputs are cut off.
    sys = random_dc_system(1, 1, 2, 2, seed=3, box_half_width=0.5)
    cost = QuadraticStageCost(Q=np.zeros((1, 1, 1)), R=np.zeros((1, 1, 1)),
                              q_lin=np.zeros((1, 1)), r_lin=np.full((1, 1), 1.0),
                              offsets=np.zeros(1), Q_N=np.zeros((1, 1)),
                              q_N=np.zeros(1))
    report = solve_global_oracle(sys, cost, x0=[0.0], N=1)
    assert report.status == "global_optimal"
    # Linear cost in u is minimized at the domain edge u = -0.5.
    assert report.u[0, 0] == pytest.approx(-0.5, abs=1e-7)


def test_multistart_keeps_best(hinge_problem):
    single = solve_local(hinge_problem)
    multi = solve_local_multistart(hinge_problem, starts=4, seed=1)
    assert multi.status == "s_stationary"
    assert multi.objective <= single.objective + 1e-9
    assert multi.starts_used == 4


@pytest.mark.parametrize("seed", range(6))
def test_local_vs_oracle_random_systems(seed):
    sys = random_dc_system(1, 1, 2, 2, seed=seed)
    pair = default_supports(sys)
    cost = QuadraticStageCost.tracking(1, 1, 2)
    oracle = solve_global_oracle(sys, cost, x0=[0.3], N=2)
    assert oracle.status == "global_optimal"
    for model in (build_compact(sys, pair), build_sparse(sys, pair)):
        p = assemble(model, cost, x0=[0.3], N=2, stage_constraints=sys.domain)
        report = solve_local(p)
        assert report.status == "s_stationary", f"{type(model).__name__} failed"
        assert report.objective >= oracle.objective - 1e-6
        # Re-simulate the returned inputs through the original dynamics.
        x = np.array([0.3])
        total = 0.0
        for k in range(2):
            total += cost.stage_value(k, x, report.u[k])
            x = eval_dynamics(sys, x, report.u[k])
        total += cost.terminal_value(x)
        assert total == pytest.approx(report.objective, abs=1e-6)


def test_isolated_minimizer_attracts_perturbed_starts(hinge_problem, hinge_lc_model):
    # At the optimum u* = 0 the strong second-order condition holds, so
    # restarting the solver from feasible points within 1e-3 of the solution
    # must reproduce the same (u, x) trajectory.
    from hyoc.lc import step
    base = solve_local(hinge_problem)
    assert base.status == "s_stationary"
    from hyoc.mpcc import check_mssosc
    assert check_mssosc(hinge_problem, base.v)
    model = with_blocks(hinge_lc_model)
    for delta in (-1e-3, 1e-3):
        u_pert = base.u[0, 0] + delta
        x1, w = step(model, [0.0], [u_pert])
        v_pert = hinge_problem.join(np.array([[u_pert]]),
                                    np.array([[0.0], x1]), np.array([w]))
        report = solve_local(hinge_problem, init=v_pert)
        assert report.status == "s_stationary"
        assert report.u == pytest.approx(base.u, abs=1e-5)
        assert report.x == pytest.approx(base.x, abs=1e-5)


def test_determinism(hinge_problem):
    a = solve_local(hinge_problem)
    b = solve_local(hinge_problem)
    assert a.objective == b.objective
    assert a.v == pytest.approx(b.v, abs=0.0)


def test_report_serialization(hinge_problem):
    report = solve_local(hinge_problem)
    data = report.to_dict()
    assert data["status"] == "s_stationary"
    assert isinstance(data["u"], list)
    assert data["s_stationary"] is True
