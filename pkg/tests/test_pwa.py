import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyoc.errors import OutOfDomainError
from hyoc.pwa import (
    MaxAffine,
    Polytope,
    PwaDcSystem,
    eval_dynamics,
    eval_max_affine,
    random_dc_system,
    simulate,
    strict_support_violation,
)


def brute_force_max(g, x, u):
    vals = []
    for j in range(g.n_pieces):
        vals.append(g.A[j] @ np.asarray(x) + g.B[j] @ np.asarray(u) + g.c[j])
    return np.array(vals).max(axis=0)


def test_pyramid_values_at_origin(pyramid_system):
    y, jy = eval_max_affine(pyramid_system.psi, [0.0], [0.0])
    z, jz = eval_max_affine(pyramid_system.phi, [0.0], [0.0])
    assert y[0] == pytest.approx(3.0)
    assert jy[0] == 0  # constant piece wins, lowest index
    assert z[0] == pytest.approx(6.0)
    assert eval_dynamics(pyramid_system, [0.0], [0.0])[0] == pytest.approx(-3.0)


def test_single_piece_is_affine():
    g = MaxAffine(A=np.array([[[2.0]]]), B=np.array([[[1.0]]]), c=np.array([[0.5]]))
    val, arg = eval_max_affine(g, [3.0], [-1.0])
    assert val[0] == pytest.approx(2 * 3 - 1 + 0.5)
    assert arg[0] == 0


def test_hinge_evaluation(hinge_system):
    assert eval_dynamics(hinge_system, [0.0], [-1.0])[0] == pytest.approx(-1.0)
    # max{-2, -1} at u = 0.
    assert eval_dynamics(hinge_system, [0.0], [0.0])[0] == pytest.approx(-1.0)


def test_identical_parts_cancel(pyramid_system):
    sys = PwaDcSystem(psi=pyramid_system.psi, phi=pyramid_system.psi,
                      domain=pyramid_system.domain)
    for p in [(0.0, 0.0), (1.5, -2.0), (-4.0, 4.0)]:
        assert eval_dynamics(sys, [p[0]], [p[1]])[0] == pytest.approx(0.0, abs=1e-12)


def test_simulate_hinge(hinge_system):
    traj = simulate(hinge_system, [0.0], [[-1.0]])
    assert traj == pytest.approx(np.array([[0.0], [-1.0]]))
    traj = simulate(hinge_system, [0.0], [[0.0]])
    assert traj == pytest.approx(np.array([[0.0], [-1.0]]))
    assert simulate(hinge_system, [0.0], []).shape == (1, 1)


def test_simulate_prefix_property():
    sys = random_dc_system(2, 1, 3, 2, seed=5)
    rng = np.random.default_rng(0)
    x0 = np.zeros(2)
    inputs = rng.uniform(-0.3, 0.3, size=(4, 1))
    full = simulate(sys, x0, inputs)
    head = simulate(sys, x0, inputs[:3])
    tail = eval_dynamics(sys, head[-1], inputs[3])
    assert full[:4] == pytest.approx(head)
    assert full[4] == pytest.approx(tail)


def test_out_of_domain_reports_step(hinge_system):
    with pytest.raises(OutOfDomainError) as err:
        simulate(hinge_system, [0.0], [[20.0]])
    assert err.value.step == 0
    with pytest.raises(OutOfDomainError):
        eval_dynamics(hinge_system, [6.0], [0.0])


def test_random_system_deterministic():
    a = random_dc_system(1, 1, 2, 2, seed=7)
    b = random_dc_system(1, 1, 2, 2, seed=7)
    assert a.psi.A == pytest.approx(b.psi.A)
    assert a.phi.c == pytest.approx(b.phi.c)
    c = random_dc_system(3, 1, 4, 4, seed=1)
    assert (c.n_x, c.n_u) == (3, 1)
    assert c.psi.n_pieces == 4 and c.phi.n_pieces == 4


def test_random_system_continuity_across_midpoints():
    sys = random_dc_system(2, 1, 3, 3, seed=11)
    rng = np.random.default_rng(2)
    pts = sys.domain.sample(rng, 20)
    # Max-affine minus max-affine is continuous: check small-perturbation stability.
    for p in pts:
        x, u = p[:2], p[2:]
        f0 = eval_dynamics(sys, x, u)
        f1 = eval_dynamics(sys, x + 1e-9, u)
        assert f1 == pytest.approx(f0, abs=1e-7)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_max_affine_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    g = MaxAffine(A=rng.normal(size=(4, 2, 2)), B=rng.normal(size=(4, 2, 1)),
                  c=rng.normal(size=(4, 2)))
    x, u = rng.normal(size=2), rng.normal(size=1)
    val, arg = eval_max_affine(g, x, u)
    assert val == pytest.approx(brute_force_max(g, x, u))
    per_piece = g.piece_values(x, u)
    for i in range(2):
        assert per_piece[arg[i], i] == val[i]
        assert not np.any(per_piece[:arg[i], i] >= val[i])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_components_are_convex(seed):
    rng = np.random.default_rng(seed)
    g = MaxAffine(A=rng.normal(size=(3, 2, 2)), B=rng.normal(size=(3, 2, 2)),
                  c=rng.normal(size=(3, 2)))
    p = rng.uniform(-5, 5, size=4)
    q = rng.uniform(-5, 5, size=4)
    mid = 0.5 * (p + q)
    f = lambda pt: eval_max_affine(g, pt[:2], pt[2:])[0]
    assert np.all(f(mid) <= 0.5 * (f(p) + f(q)) + 1e-9)


def test_strict_support_check(pyramid_system):
    dom = pyramid_system.domain
    psi = pyramid_system.psi
    # Constant 1 is strictly below the pyramid (min value 3).
    assert strict_support_violation(psi, [[0.0]], [[0.0]], [1.0], dom) is None
    # The pyramid's own first piece is not strictly below the max.
    bad = strict_support_violation(psi, psi.A[0], psi.B[0], psi.c[0], dom)
    assert bad is not None
    comp, point = bad
    assert comp == 0 and dom.contains(point)


def test_json_round_trip(pyramid_system):
    data = pyramid_system.to_dict()
    back = PwaDcSystem.from_dict(data)
    assert back.psi.A == pytest.approx(pyramid_system.psi.A)
    assert back.domain.k == pytest.approx(pyramid_system.domain.k)
    rng = np.random.default_rng(1)
    for p in pyramid_system.domain.sample(rng, 5):
        assert eval_dynamics(back, p[:1], p[1:]) == pytest.approx(
            eval_dynamics(pyramid_system, p[:1], p[1:]))


def test_polytope_validation():
    with pytest.raises(ValueError):
        Polytope(H=np.array([[1.0], [-1.0]]), k=np.array([-1.0, -1.0]))
    box = Polytope.box(-2.0, 2.0, 2)
    assert box.is_bounded()
    assert box.contains([2.0, -2.0])
    assert not box.contains([2.1, 0.0])
    half = Polytope(H=np.array([[1.0, 0.0]]), k=np.array([0.0]))
    assert not half.is_bounded()
