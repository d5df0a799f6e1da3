import numpy as np
import pytest

from hyoc.errors import OutOfDomainError
from hyoc.lc import (
    LcModel,
    LcpInfeasibleError,
    check_assumption1,
    check_assumption3,
    detect_blocks,
    simulate,
    step,
    verify_assumptions,
    with_blocks,
)
from hyoc.pwa import Polytope


def tiny_model(E_w, B_w=None, E_x=None, E_u=None, e=None):
    n_w = np.atleast_2d(E_w).shape[0]
    return LcModel(
        A=np.array([[0.0]]),
        B_u=np.array([[0.0]]),
        B_w=np.zeros((1, n_w)) if B_w is None else B_w,
        c=np.array([0.0]),
        E_w=E_w,
        E_x=np.zeros((n_w, 1)) if E_x is None else E_x,
        E_u=np.zeros((n_w, 1)) if E_u is None else E_u,
        e=np.zeros(n_w) if e is None else e,
        domain=Polytope.box(-5.0, 5.0, 2),
    )


def test_detect_single_block(hinge_lc_model):
    det = detect_blocks(hinge_lc_model)
    assert det.ok
    assert len(det.blocks) == 1
    b = det.blocks[0]
    assert b.indices == (0, 1)
    assert b.m == pytest.approx([1.0, 1.0])
    assert b.e == pytest.approx([0.0, -1.0])


def test_identity_splits_into_unit_blocks():
    det = detect_blocks(tiny_model(np.eye(2)))
    assert det.ok
    assert [b.indices for b in det.blocks] == [(0,), (1,)]
    assert all(b.m == pytest.approx([1.0]) for b in det.blocks)


def test_zero_diagonal_entry_fails():
    det = detect_blocks(tiny_model(np.array([[1.0, 0.0], [0.0, 0.0]])))
    assert not det.ok
    assert "zero m entry" in det.reason


def test_asymmetric_and_full_rank_fail():
    det = detect_blocks(tiny_model(np.array([[1.0, 0.5], [0.0, 1.0]])))
    assert not det.ok and "symmetric" in det.reason
    det = detect_blocks(tiny_model(np.array([[2.0, 0.5], [0.5, 2.0]])))
    assert not det.ok and "rank-one" in det.reason
    det = detect_blocks(tiny_model(np.array([[1.0, -0.5], [-0.5, 1.0]])))
    assert not det.ok and "rank-one" in det.reason


def test_detect_blocks_permutation_invariant(hinge_lc_model):
    base = with_blocks(hinge_lc_model)
    # Extend with an independent scalar block, then permute w-coordinates.
    E_w = np.zeros((3, 3))
    E_w[:2, :2] = base.E_w
    E_w[2, 2] = 4.0
    model = LcModel(A=base.A, B_u=base.B_u, B_w=np.array([[1.0, 1.0, 0.0]]),
                    c=base.c, E_w=E_w,
                    E_x=np.vstack([base.E_x, [[0.0]]]),
                    E_u=np.vstack([base.E_u, [[0.0]]]),
                    e=np.concatenate([base.e, [1.0]]), domain=base.domain)
    perm = [2, 0, 1]
    P = np.eye(3)[perm]
    permuted = LcModel(A=model.A, B_u=model.B_u, B_w=model.B_w @ P.T, c=model.c,
                       E_w=P @ model.E_w @ P.T, E_x=P @ model.E_x,
                       E_u=P @ model.E_u, e=P @ model.e, domain=model.domain)
    det = detect_blocks(permuted)
    assert det.ok
    groups = sorted(sorted(b.indices) for b in det.blocks)
    assert groups == [[0], [1, 2]]
    two = next(b for b in det.blocks if len(b.indices) == 2)
    assert two.m == pytest.approx([1.0, 1.0])
    one = next(b for b in det.blocks if len(b.indices) == 1)
    assert one.m == pytest.approx([2.0])


def test_wellposedness_nullspace_cases(hinge_lc_model):
    assert check_assumption1(hinge_lc_model).holds
    assert check_assumption1(tiny_model(np.ones((2, 2)))).holds  # B_w = 0
    bad = tiny_model(np.ones((2, 2)), B_w=np.array([[1.0, 0.0]]))
    verdict = check_assumption1(bad)
    assert verdict.status == "fails"
    d = verdict.witness
    assert abs(d[0] + d[1]) <= 1e-9  # direction proportional to (1, -1)


def test_nontriviality_check(hinge_lc_model):
    model, report = verify_assumptions(hinge_lc_model)
    assert report.a2.ok and report.a1.holds and report.a3.holds
    assert report.all_hold
    # All-zero rows can never be strictly negative.
    degens = with_blocks(tiny_model(np.array([[1.0]])))
    verdict = check_assumption3(degens)
    assert verdict.status == "fails"
    assert verdict.witness is not None


def test_wellposedness_counterexample_found():
    # Identical rows make the solution set a segment wherever x + u < 1,
    # and B_w = (1, 0) tells the segment endpoints apart.
    bad = LcModel(A=[[0.0]], B_u=[[0.0]], B_w=[[1.0, 0.0]], c=[0.0],
                  E_w=np.ones((2, 2)), E_x=[[1.0], [1.0]], E_u=[[1.0], [1.0]],
                  e=np.array([-1.0, -1.0]), domain=Polytope.box(-5.0, 5.0, 2))
    _, report = verify_assumptions(bad)
    assert report.a1.status == "fails"
    assert report.a1.witness is not None


def test_wellposedness_unknown_when_no_counterexample():
    # Nullspace test fails, but multiple solutions exist only on the
    # measure-zero line x + u = -1, so sampling cannot decide.
    edge = LcModel(A=[[0.0]], B_u=[[0.0]], B_w=[[1.0, 0.0]], c=[0.0],
                   E_w=np.ones((2, 2)), E_x=[[1.0], [0.0]], E_u=[[1.0], [0.0]],
                   e=np.array([0.0, -1.0]), domain=Polytope.box(-5.0, 5.0, 2))
    _, report = verify_assumptions(edge)
    assert report.a1.status == "unknown"


def test_step_matches_hinge_dynamics(hinge_lc_model):
    model = with_blocks(hinge_lc_model)
    x_plus, w = step(model, [0.0], [-1.0])
    assert x_plus[0] == pytest.approx(-1.0, abs=1e-8)
    assert w.sum() == pytest.approx(1.0, abs=1e-8)
    x_plus, _ = step(model, [0.0], [0.0])
    assert x_plus[0] == pytest.approx(-1.0, abs=1e-8)
    with pytest.raises(OutOfDomainError):
        step(model, [9.0], [0.0])


def test_step_zero_solution_branch():
    model = with_blocks(tiny_model(np.array([[1.0]]), B_w=np.array([[3.0]]),
                                   e=np.array([1.0])))
    model = LcModel(A=np.array([[0.5]]), B_u=model.B_u, B_w=model.B_w,
                    c=np.array([0.7]), E_w=model.E_w, E_x=model.E_x,
                    E_u=model.E_u, e=model.e, domain=model.domain,
                    blocks=model.blocks)
    x_plus, w = step(model, [2.0], [0.0])
    assert w == pytest.approx([0.0])
    assert x_plus[0] == pytest.approx(0.5 * 2.0 + 0.7)


def test_step_infeasible_block():
    model = with_blocks(tiny_model(
        np.array([[1.0, -1.0], [-1.0, 1.0]]), e=np.array([-1.0, -1.0])))
    with pytest.raises(LcpInfeasibleError):
        step(model, [0.0], [0.0])


def test_successor_unique_across_solution_set(hinge_lc_model):
    model = with_blocks(hinge_lc_model)
    rng = np.random.default_rng(4)
    from hyoc.lcp import RankOneLcp, solution_set, vertices
    for p in model.domain.sample(rng, 10):
        x, u = p[:1], p[1:]
        x_plus, w = step(model, x, u)
        b = model.blocks[0]
        sset = solution_set(RankOneLcp(m=b.m, q=b.q(x, u)), w)
        for v in vertices(sset):
            alt = model.A @ x + model.B_u @ u + model.B_w @ v + model.c
            assert alt == pytest.approx(x_plus, abs=1e-8)


def test_simulate_and_json(hinge_lc_model):
    model = with_blocks(hinge_lc_model)
    xs, ws = simulate(model, [0.0], [[-1.0], [0.5]])
    assert xs.shape == (3, 1) and ws.shape == (2, 2)
    assert xs[1, 0] == pytest.approx(-1.0, abs=1e-8)
    back = LcModel.from_dict(model.to_dict())
    assert back.E_w == pytest.approx(model.E_w)
    assert back.blocks is not None
    x_plus, _ = step(back, [0.3], [0.2])
    x_ref, _ = step(model, [0.3], [0.2])
    assert x_plus == pytest.approx(x_ref)
