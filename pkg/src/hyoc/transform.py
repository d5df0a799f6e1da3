"""From difference-of-convex PWA dynamics to linear-complementarity models.

The route: each convex part is written as the unique minimizer of a small
parametric QP (projection of a strictly-below affine support onto the
epigraph), the two QPs are replaced by their KKT systems, and the internal
multipliers become the complementarity variables.  Keeping the auxiliary
projection variables (y, z) explicit gives the sparse model; eliminating
them through the stationarity rows gives the compact model, whose E_w is
block diagonal with one all-ones rank-one block per state component.

Complementarity variables are ordered component-major: first all lambda
multipliers of state component 0 (one per psi piece), then component 1,
..., then the theta multipliers likewise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import HyocError
from .lc import LcModel, LcpBlock, with_blocks
from .pwa import MaxAffine, Polytope, PwaDcSystem, strict_support_violation
from .qp import QuadraticProgram, solve_qp


class SupportViolatedError(HyocError):
    def __init__(self, message, component=None, point=None):
        super().__init__(message)
        self.component = component
        self.point = point


def _as_diag(Q, n: int, name: str) -> np.ndarray:
    if Q is None:
        return np.ones(n)
    Q = np.asarray(Q, dtype=float)
    if Q.ndim == 2:
        if np.abs(Q - np.diag(np.diag(Q))).max() > 0:
            raise ValueError(f"{name} must be diagonal")
        Q = np.diag(Q)
    elif Q.ndim == 0:
        Q = np.full(n, float(Q))
    if Q.shape != (n,):
        raise ValueError(f"{name} must have {n} diagonal entries")
    if Q.min() < 1e-6:
        raise ValueError(f"{name} diagonal entries must be >= 1e-6")
    return Q


@dataclass(frozen=True)
class SupportPair:
    """Affine functions strictly below psi and phi on the domain."""

    A_psi: np.ndarray
    B_psi: np.ndarray
    c_psi: np.ndarray
    A_phi: np.ndarray
    B_phi: np.ndarray
    c_phi: np.ndarray
    eta: float | None = None
    zeta: float | None = None

    def __post_init__(self):
        for name in ("A_psi", "B_psi", "A_phi", "B_phi"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        for name in ("c_psi", "c_phi"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).ravel())

    def psi_bar(self, x, u) -> np.ndarray:
        return self.A_psi @ np.asarray(x, dtype=float) + self.B_psi @ np.asarray(u, dtype=float) + self.c_psi

    def phi_bar(self, x, u) -> np.ndarray:
        return self.A_phi @ np.asarray(x, dtype=float) + self.B_phi @ np.asarray(u, dtype=float) + self.c_phi

    def to_dict(self) -> dict:
        return {"A_psi": self.A_psi.tolist(), "B_psi": self.B_psi.tolist(),
                "c_psi": self.c_psi.tolist(), "A_phi": self.A_phi.tolist(),
                "B_phi": self.B_phi.tolist(), "c_phi": self.c_phi.tolist(),
                "eta": self.eta, "zeta": self.zeta}

    @classmethod
    def from_dict(cls, d: dict) -> "SupportPair":
        return cls(A_psi=np.array(d["A_psi"], dtype=float), B_psi=np.array(d["B_psi"], dtype=float),
                   c_psi=np.array(d["c_psi"], dtype=float), A_phi=np.array(d["A_phi"], dtype=float),
                   B_phi=np.array(d["B_phi"], dtype=float), c_phi=np.array(d["c_phi"], dtype=float),
                   eta=d.get("eta"), zeta=d.get("zeta"))


def verify_supports(sys: PwaDcSystem, supports: SupportPair) -> None:
    """Raise unless both affine supports stay strictly below their max-affine part."""
    for label, g, A, B, c in (("psi", sys.psi, supports.A_psi, supports.B_psi, supports.c_psi),
                              ("phi", sys.phi, supports.A_phi, supports.B_phi, supports.c_phi)):
        bad = strict_support_violation(g, A, B, c, sys.domain)
        if bad is not None:
            comp, point = bad
            raise SupportViolatedError(
                f"support for {label} touches or exceeds the max in component {comp}",
                component=comp, point=point)


def default_supports(sys: PwaDcSystem, eta: float = 0.5, zeta: float = 0.5) -> SupportPair:
    """First piece of each part shifted down by eta resp. zeta, then verified."""
    pair = SupportPair(A_psi=sys.psi.A[0], B_psi=sys.psi.B[0], c_psi=sys.psi.c[0] - eta,
                       A_phi=sys.phi.A[0], B_phi=sys.phi.B[0], c_phi=sys.phi.c[0] - zeta,
                       eta=float(eta), zeta=float(zeta))
    verify_supports(sys, pair)
    return pair


@dataclass
class PointSolution:
    y: np.ndarray
    z: np.ndarray
    lam: np.ndarray    # component-major internal multipliers of the psi projection
    theta: np.ndarray  # likewise for phi

    @property
    def x_plus(self) -> np.ndarray:
        return self.y - self.z

    @property
    def w(self) -> np.ndarray:
        return np.concatenate([self.lam, self.theta])


@dataclass(frozen=True)
class InverseOptModel:
    """Per-point projection QPs whose unique optimizers reproduce the dynamics."""

    sys: PwaDcSystem
    supports: SupportPair
    q_y: np.ndarray
    q_z: np.ndarray

    def _projection(self, g: MaxAffine, bar_val: np.ndarray, q_diag: np.ndarray,
                    x, u) -> tuple[np.ndarray, np.ndarray]:
        n = g.n_out
        vals = g.piece_values(x, u)  # (pieces, n)
        rows = np.zeros((n * g.n_pieces, n))
        offs = np.zeros(n * g.n_pieces)
        for c in range(n):
            for k in range(g.n_pieces):
                rows[c * g.n_pieces + k, c] = -1.0
                offs[c * g.n_pieces + k] = vals[k, c]
        qp = QuadraticProgram(P=np.diag(q_diag), r=-q_diag * bar_val,
                              A_in=rows, b_in=offs)
        sol = solve_qp(qp)
        if not sol.optimal:
            raise HyocError(f"projection QP ended with status {sol.status}")
        return sol.v, sol.lambda_in

    def solve(self, x, u) -> PointSolution:
        x = np.asarray(x, dtype=float).ravel()
        u = np.asarray(u, dtype=float).ravel()
        y, lam = self._projection(self.sys.psi, self.supports.psi_bar(x, u), self.q_y, x, u)
        z, theta = self._projection(self.sys.phi, self.supports.phi_bar(x, u), self.q_z, x, u)
        return PointSolution(y=y, z=z, lam=lam, theta=theta)


def build_inverse_opt(sys: PwaDcSystem, supports: SupportPair,
                      Q_y=None, Q_z=None) -> InverseOptModel:
    q_y = _as_diag(Q_y, sys.n_x, "Q_y")
    q_z = _as_diag(Q_z, sys.n_x, "Q_z")
    return InverseOptModel(sys=sys, supports=supports, q_y=q_y, q_z=q_z)


def build_compact(sys: PwaDcSystem, supports: SupportPair,
                  Q_y=None, Q_z=None, verify: bool = True) -> LcModel:
    """Compact LC model: internal multipliers are the complementarity variables.

    E_w has one (1/q) * ones block per state component for each of the two
    convex parts; stepping it reproduces psi - phi exactly.
    """
    if verify:
        verify_supports(sys, supports)
    q_y = _as_diag(Q_y, sys.n_x, "Q_y")
    q_z = _as_diag(Q_z, sys.n_x, "Q_z")
    n_x, n_u = sys.n_x, sys.n_u
    n_ry, n_rz = sys.psi.n_pieces, sys.phi.n_pieces
    n_w = n_x * (n_ry + n_rz)
    theta_off = n_x * n_ry

    A = supports.A_psi - supports.A_phi
    B_u = supports.B_psi - supports.B_phi
    c = supports.c_psi - supports.c_phi
    B_w = np.zeros((n_x, n_w))
    E_w = np.zeros((n_w, n_w))
    E_x = np.zeros((n_w, n_x))
    E_u = np.zeros((n_w, n_u))
    e = np.zeros(n_w)
    blocks = []
    for cidx in range(n_x):
        sl = slice(cidx * n_ry, (cidx + 1) * n_ry)
        B_w[cidx, sl] = 1.0 / q_y[cidx]
        E_w[sl, sl] = 1.0 / q_y[cidx]
        E_x[sl] = supports.A_psi[cidx] - sys.psi.A[:, cidx, :]
        E_u[sl] = supports.B_psi[cidx] - sys.psi.B[:, cidx, :]
        e[sl] = supports.c_psi[cidx] - sys.psi.c[:, cidx]
        blocks.append((sl, np.full(n_ry, 1.0 / np.sqrt(q_y[cidx]))))
    for cidx in range(n_x):
        sl = slice(theta_off + cidx * n_rz, theta_off + (cidx + 1) * n_rz)
        B_w[cidx, sl] = -1.0 / q_z[cidx]
        E_w[sl, sl] = 1.0 / q_z[cidx]
        E_x[sl] = supports.A_phi[cidx] - sys.phi.A[:, cidx, :]
        E_u[sl] = supports.B_phi[cidx] - sys.phi.B[:, cidx, :]
        e[sl] = supports.c_phi[cidx] - sys.phi.c[:, cidx]
        blocks.append((sl, np.full(n_rz, 1.0 / np.sqrt(q_z[cidx]))))

    lcp_blocks = tuple(
        LcpBlock(indices=tuple(range(sl.start, sl.stop)), m=m,
                 C=E_x[sl], D=E_u[sl], e=e[sl])
        for sl, m in blocks)
    return LcModel(A=A, B_u=B_u, B_w=B_w, c=c, E_w=E_w, E_x=E_x, E_u=E_u, e=e,
                   domain=sys.domain, blocks=lcp_blocks)


@dataclass(frozen=True)
class SparseLcModel:
    """Complementarity model with the projection variables (y, z) kept explicit.

    Per step the structure over (x, u, w, aux) with aux = (y, z) is

        x+ = [I -I] aux
        stat_aux @ aux + stat_w @ w + stat_x @ x + stat_u @ u + stat_c = 0
        0 <= comp_aux @ aux + comp_x @ x + comp_u @ u + comp_c  perp  w >= 0

    The w ordering matches the compact model, so eliminating aux through
    the stationarity rows reproduces it matrix-for-matrix.
    """

    sys: PwaDcSystem
    supports: SupportPair
    q_y: np.ndarray
    q_z: np.ndarray

    @property
    def n_x(self) -> int:
        return self.sys.n_x

    @property
    def n_u(self) -> int:
        return self.sys.n_u

    @property
    def n_w(self) -> int:
        return self.n_x * (self.sys.psi.n_pieces + self.sys.phi.n_pieces)

    @property
    def n_aux(self) -> int:
        return 2 * self.n_x

    @property
    def domain(self) -> Polytope:
        return self.sys.domain

    def matrices(self) -> dict:
        sys, supports = self.sys, self.supports
        n_x, n_u = self.n_x, self.n_u
        n_ry, n_rz = sys.psi.n_pieces, sys.phi.n_pieces
        n_w, n_aux = self.n_w, self.n_aux
        theta_off = n_x * n_ry

        stat_aux = np.zeros((n_aux, n_aux))
        stat_aux[:n_x, :n_x] = np.diag(self.q_y)
        stat_aux[n_x:, n_x:] = np.diag(self.q_z)
        stat_w = np.zeros((n_aux, n_w))
        for c in range(n_x):
            stat_w[c, c * n_ry:(c + 1) * n_ry] = -1.0
            stat_w[n_x + c, theta_off + c * n_rz:theta_off + (c + 1) * n_rz] = -1.0
        stat_x = np.vstack([-np.diag(self.q_y) @ supports.A_psi,
                            -np.diag(self.q_z) @ supports.A_phi])
        stat_u = np.vstack([-np.diag(self.q_y) @ supports.B_psi,
                            -np.diag(self.q_z) @ supports.B_phi])
        stat_c = np.concatenate([-self.q_y * supports.c_psi, -self.q_z * supports.c_phi])

        comp_aux = np.zeros((n_w, n_aux))
        comp_x = np.zeros((n_w, n_x))
        comp_u = np.zeros((n_w, n_u))
        comp_c = np.zeros(n_w)
        for c in range(n_x):
            for k in range(n_ry):
                row = c * n_ry + k
                comp_aux[row, c] = 1.0
                comp_x[row] = -sys.psi.A[k, c, :]
                comp_u[row] = -sys.psi.B[k, c, :]
                comp_c[row] = -sys.psi.c[k, c]
            for k in range(n_rz):
                row = theta_off + c * n_rz + k
                comp_aux[row, n_x + c] = 1.0
                comp_x[row] = -sys.phi.A[k, c, :]
                comp_u[row] = -sys.phi.B[k, c, :]
                comp_c[row] = -sys.phi.c[k, c]

        trans_aux = np.hstack([np.eye(n_x), -np.eye(n_x)])
        return {"stat_aux": stat_aux, "stat_w": stat_w, "stat_x": stat_x,
                "stat_u": stat_u, "stat_c": stat_c, "comp_aux": comp_aux,
                "comp_x": comp_x, "comp_u": comp_u, "comp_c": comp_c,
                "trans_aux": trans_aux}

    def to_compact(self) -> LcModel:
        """Eliminate (y, z) through the stationarity rows."""
        mats = self.matrices()
        inv = np.linalg.inv(mats["stat_aux"])
        M_x = -inv @ mats["stat_x"]
        M_u = -inv @ mats["stat_u"]
        M_w = -inv @ mats["stat_w"]
        m_0 = -inv @ mats["stat_c"]
        T = mats["trans_aux"]
        model = LcModel(
            A=T @ M_x, B_u=T @ M_u, B_w=T @ M_w, c=T @ m_0,
            E_w=mats["comp_aux"] @ M_w,
            E_x=mats["comp_x"] + mats["comp_aux"] @ M_x,
            E_u=mats["comp_u"] + mats["comp_aux"] @ M_u,
            e=mats["comp_c"] + mats["comp_aux"] @ m_0,
            domain=self.sys.domain)
        return with_blocks(model)

    def step(self, x, u) -> tuple[np.ndarray, np.ndarray]:
        """Solve the per-point projections; duals are the complementarity variables."""
        sol = build_inverse_opt(self.sys, self.supports, self.q_y, self.q_z).solve(x, u)
        return sol.x_plus, sol.w

    def to_dict(self) -> dict:
        return {"system": self.sys.to_dict(), "supports": self.supports.to_dict(),
                "q_y": self.q_y.tolist(), "q_z": self.q_z.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "SparseLcModel":
        return cls(sys=PwaDcSystem.from_dict(d["system"]),
                   supports=SupportPair.from_dict(d["supports"]),
                   q_y=np.array(d["q_y"], dtype=float),
                   q_z=np.array(d["q_z"], dtype=float))


def build_sparse(sys: PwaDcSystem, supports: SupportPair,
                 Q_y=None, Q_z=None, verify: bool = True) -> SparseLcModel:
    if verify:
        verify_supports(sys, supports)
    return SparseLcModel(sys=sys, supports=supports,
                         q_y=_as_diag(Q_y, sys.n_x, "Q_y"),
                         q_z=_as_diag(Q_z, sys.n_x, "Q_z"))
