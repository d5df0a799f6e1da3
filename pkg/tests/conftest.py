import numpy as np
import pytest

from hyoc.lc import LcModel
from hyoc.pwa import MaxAffine, Polytope, PwaDcSystem


@pytest.fixture
def pyramid_system() -> PwaDcSystem:
    """1-state, 1-input system whose convex part is a pyramid over (x, u).

    psi(x,u) = max{3, x+2, -x+2, u+2, -u+2}
    phi(x,u) = max{6, x+u+2, x-u+2, -x-u+2, -x+u+2}
    on the box [-5, 5]^2.
    """
    psi = MaxAffine(
        A=np.array([[[0.0]], [[1.0]], [[-1.0]], [[0.0]], [[0.0]]]),
        B=np.array([[[0.0]], [[0.0]], [[0.0]], [[1.0]], [[-1.0]]]),
        c=np.array([[3.0], [2.0], [2.0], [2.0], [2.0]]),
    )
    phi = MaxAffine(
        A=np.array([[[0.0]], [[1.0]], [[1.0]], [[-1.0]], [[-1.0]]]),
        B=np.array([[[0.0]], [[1.0]], [[-1.0]], [[-1.0]], [[1.0]]]),
        c=np.array([[6.0], [2.0], [2.0], [2.0], [2.0]]),
    )
    return PwaDcSystem(psi=psi, phi=phi, domain=Polytope.box(-5.0, 5.0, 2))


@pytest.fixture
def hinge_system() -> PwaDcSystem:
    """Scalar dynamics x+ = max{-(x+u+2), -1} as a DC pair (phi = 0)."""
    psi = MaxAffine(
        A=np.array([[[-1.0]], [[0.0]]]),
        B=np.array([[[-1.0]], [[0.0]]]),
        c=np.array([[-2.0], [-1.0]]),
    )
    phi = MaxAffine(A=np.zeros((1, 1, 1)), B=np.zeros((1, 1, 1)), c=np.zeros((1, 1)))
    return PwaDcSystem(psi=psi, phi=phi, domain=Polytope.box(-5.0, 5.0, 2))


@pytest.fixture
def hinge_lc_model() -> LcModel:
    """Native complementarity form of the hinge dynamics.

    x+ = w1 + w2 - 2
    0 <= w1 + w2 + x + u  perp  w1 >= 0
    0 <= w1 + w2 - 1      perp  w2 >= 0
    """
    return LcModel(
        A=np.array([[0.0]]),
        B_u=np.array([[0.0]]),
        B_w=np.array([[1.0, 1.0]]),
        c=np.array([-2.0]),
        E_w=np.array([[1.0, 1.0], [1.0, 1.0]]),
        E_x=np.array([[1.0], [0.0]]),
        E_u=np.array([[1.0], [0.0]]),
        e=np.array([0.0, -1.0]),
        domain=Polytope.box(-5.0, 5.0, 2),
    )
