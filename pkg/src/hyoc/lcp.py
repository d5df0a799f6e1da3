"""Structured linear complementarity problems 0 <= m m'w + q  perp  w >= 0.

With the rank-one positive semidefinite matrix M = m m', the LCP is the KKT
system of the convex program min 1/2 (m'w)^2 + q'w over w >= 0, and its
solution set is the polytope {w >= 0 : m'(w - wbar) = 0, q'(w - wbar) = 0}
around any solution wbar.  Everything here exploits that structure:
solving, describing the solution set, classifying active/biactive indices,
and walking to a strictly complementary solution by two-index moves.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import HyocError, SizeLimitError
from .qp import QuadraticProgram, lp_maximize, solve_qp

TAU_ACT = 1e-8
VERTEX_DIM_LIMIT = 12


class NotASolutionError(HyocError):
    pass


class DegenerateExhaustedError(HyocError):
    """The two-index desingularization move has no pivot index available."""


@dataclass(frozen=True)
class RankOneLcp:
    """LCP data with M = m m' implied; m must be elementwise nonzero.

    `nontrivial` marks instances guaranteed to have some q[j] < 0 (so the
    zero vector never solves them); the flag is validated when set.
    """

    m: np.ndarray
    q: np.ndarray
    nontrivial: bool = False

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float).ravel()
        q = np.asarray(self.q, dtype=float).ravel()
        if m.size != q.size or m.size == 0:
            raise ValueError("m and q must be nonempty vectors of equal length")
        if np.abs(m).min() <= 1e-12:
            raise ValueError("m must be elementwise nonzero (minimal decomposition)")
        if self.nontrivial and q.min() >= 0:
            raise ValueError("nontrivial flag requires some q[j] < 0")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "q", q)

    @property
    def n(self) -> int:
        return self.m.size

    def lhs(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float).ravel()
        return self.m * (self.m @ w) + self.q

    def residual(self, w) -> float:
        """Max violation of w >= 0, Mw + q >= 0 and the orthogonality."""
        w = np.asarray(w, dtype=float).ravel()
        lhs = self.lhs(w)
        return max(float((-w).max()), float((-lhs).max()), abs(float(w @ lhs)))

    def is_solution(self, w, tol: float = TAU_ACT) -> bool:
        return self.residual(w) <= tol


@dataclass(frozen=True)
class LcpIndexSets:
    alpha: tuple[int, ...]
    beta: tuple[int, ...]
    gamma: tuple[int, ...]


@dataclass(frozen=True)
class LcpSolutionSet:
    """Polytope of all solutions, anchored at a verified solution w_bar."""

    w_bar: np.ndarray
    m: np.ndarray
    q: np.ndarray

    @property
    def n(self) -> int:
        return self.m.size

    def lcp(self) -> RankOneLcp:
        return RankOneLcp(m=self.m, q=self.q)

    def contains(self, w, tol: float = TAU_ACT) -> bool:
        w = np.asarray(w, dtype=float).ravel()
        d = w - self.w_bar
        scale = 1.0 + float(np.abs(self.w_bar).max())
        return (float((-w).max()) <= tol
                and abs(float(self.m @ d)) <= tol * scale
                and abs(float(self.q @ d)) <= tol * scale)


def solve_lcp(lcp: RankOneLcp):
    """Solve the LCP as its equivalent convex QP; None when no solution exists."""
    n = lcp.n
    qp = QuadraticProgram(P=np.outer(lcp.m, lcp.m), r=lcp.q,
                          A_in=-np.eye(n), b_in=np.zeros(n))
    sol = solve_qp(qp)
    if sol.status == "unbounded":
        return None
    if not sol.optimal:
        raise HyocError(f"LCP subproblem ended with QP status {sol.status}")
    w = np.maximum(sol.v, 0.0)
    if not lcp.is_solution(w, tol=1e-7):
        raise HyocError("QP returned a point violating the LCP residuals")
    return w


def solution_set(lcp: RankOneLcp, w_bar) -> LcpSolutionSet:
    w_bar = np.asarray(w_bar, dtype=float).ravel()
    if not lcp.is_solution(w_bar, tol=1e-7):
        raise NotASolutionError(f"w_bar residual {lcp.residual(w_bar):g} too large")
    return LcpSolutionSet(w_bar=w_bar, m=lcp.m.copy(), q=lcp.q.copy())


def index_sets(lcp: RankOneLcp, w, tol: float = TAU_ACT) -> LcpIndexSets:
    w = np.asarray(w, dtype=float).ravel()
    if not lcp.is_solution(w, tol=max(tol, 1e-7)):
        raise NotASolutionError(f"residual {lcp.residual(w):g} too large")
    lhs = lcp.lhs(w)
    w_zero = np.abs(w) <= tol
    lhs_zero = np.abs(lhs) <= tol
    alpha = tuple(int(i) for i in np.flatnonzero(lhs_zero & ~w_zero))
    beta = tuple(int(i) for i in np.flatnonzero(lhs_zero & w_zero))
    gamma = tuple(int(i) for i in np.flatnonzero(~lhs_zero & w_zero))
    if len(alpha) + len(beta) + len(gamma) != lcp.n:
        raise NotASolutionError("index classification does not partition the support")
    return LcpIndexSets(alpha=alpha, beta=beta, gamma=gamma)


def nondegenerate_solution(sset: LcpSolutionSet) -> np.ndarray:
    """A solution with empty biactive set, built by two-index interior moves.

    Each move keeps the solution inside the set: the step is supported on
    one alpha-index i and one beta-index j, lies in the nullspace of
    [m q]', and moves j strictly into alpha.
    """
    lcp = sset.lcp()
    w = sset.w_bar.copy()
    for _ in range(lcp.n + 1):
        idx = index_sets(lcp, w)
        if not idx.beta:
            return w
        if not idx.alpha:
            raise DegenerateExhaustedError(
                "no strictly positive index to pivot against; "
                "nontriviality assumption violated for this instance")
        i, j = idx.alpha[0], idx.beta[0]
        delta_i = -0.5 * w[i] * np.sign(lcp.m[i] / lcp.m[j])
        delta_j = -(lcp.m[i] / lcp.m[j]) * delta_i
        w[i] += delta_i
        w[j] += delta_j
        if not lcp.is_solution(w, tol=1e-7):
            raise DegenerateExhaustedError("interior move left the solution set")
    raise DegenerateExhaustedError("biactive set did not empty out")


def is_singleton(sset: LcpSolutionSet, tol: float = 1e-9) -> bool:
    """True iff the solution set has affine dimension zero.

    LP probe: a second solution exists iff some nonzero d with
    m'd = 0, q'd = 0 and d >= 0 on the active bounds of w_bar is feasible.
    """
    w = sset.w_bar
    at_bound = np.abs(w) <= TAU_ACT
    A_eq = np.vstack([sset.m, sset.q])
    b_eq = np.zeros(2)
    A_in = -np.eye(sset.n)[at_bound]
    b_in = np.zeros(int(at_bound.sum()))
    for j in range(sset.n):
        e = np.zeros(sset.n)
        e[j] = 1.0
        signs = (1.0,) if at_bound[j] else (1.0, -1.0)
        for s in signs:
            _, val, _ = lp_maximize(s * e, A_eq=A_eq, b_eq=b_eq,
                                    A_in=A_in if A_in.size else None,
                                    b_in=b_in if A_in.size else None, box=1.0)
            if val is not None and val > tol:
                return False
    return True


def vertices(sset: LcpSolutionSet) -> np.ndarray:
    """All vertices of the solution-set polytope (small n only).

    Vertices are basic feasible points of {w >= 0 : m'w = a, q'w = b}, so
    their support size is at most the rank of [m; q].
    """
    n = sset.n
    if n > VERTEX_DIM_LIMIT:
        raise SizeLimitError(f"vertex enumeration limited to n <= {VERTEX_DIM_LIMIT}")
    R = np.vstack([sset.m, sset.q])
    t = R @ sset.w_bar
    rank = int(np.linalg.matrix_rank(R, tol=1e-11 * max(1.0, float(np.abs(R).max()))))
    found = []
    supports = [()] if rank == 0 else []
    for size in range(1, rank + 1):
        supports.extend(combinations(range(n), size))
    scale = 1.0 + float(np.abs(sset.w_bar).max())
    for sup in supports:
        sup = list(sup)
        if sup:
            Rs = R[:, sup]
            if np.linalg.matrix_rank(Rs, tol=1e-11) < len(sup):
                continue
            ws, *_ = np.linalg.lstsq(Rs, t, rcond=None)
            if float(np.abs(Rs @ ws - t).max()) > 1e-9 * scale or ws.min() < -1e-9:
                continue
            w = np.zeros(n)
            w[sup] = np.maximum(ws, 0.0)
        else:
            if float(np.abs(t).max()) > 1e-9 * scale:
                continue
            w = np.zeros(n)
        if not any(np.allclose(w, f, atol=1e-8) for f in found):
            found.append(w)
    return np.array(found) if found else np.zeros((0, n))
