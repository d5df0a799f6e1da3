"""Dense convex quadratic programming and LP feasibility.

The QP solver is a primal active-set method over equality-constrained
subproblems:

    min  1/2 v' P v + r' v + const
    s.t. A_eq v + b_eq  = 0
         A_in v + b_in <= 0

with P symmetric positive semidefinite.  Each subproblem is solved by
reducing onto the nullspace of the working-set rows and eigendecomposing
the reduced Hessian; eigenvalues below the pivot threshold are treated as
zero curvature, which gives exact detection of unbounded rays for singular
P.  Tie-breaking is by lowest index everywhere (Bland-style), so the
returned active set is deterministic.

LP feasibility (phase 1) is delegated to scipy's HiGHS front end; an
explicit Farkas certificate is computed for infeasible systems.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import linprog

FEAS_TOL = 1e-9
STAT_TOL = 1e-8
ACTIVE_TOL = 1e-8
PIVOT_TOL = 1e-11
COND_LIMIT = 1e12

_HIGHS_OPTS = {"presolve": True, "primal_feasibility_tolerance": 1e-10,
               "dual_feasibility_tolerance": 1e-10}


class QpError(Exception):
    pass


class DegenerateError(QpError):
    """Anti-cycling rule exhausted: iteration cap reached."""


class IllConditionedError(QpError):
    """Condition estimate of a KKT subsystem exceeded the limit."""


def _as_matrix(a, rows: int | None, cols: int) -> np.ndarray:
    if a is None:
        return np.zeros((0 if rows is None else rows, cols))
    a = np.atleast_2d(np.asarray(a, dtype=float))
    return a


def _as_vector(b, n: int | None) -> np.ndarray:
    if b is None:
        return np.zeros(0 if n is None else n)
    return np.asarray(b, dtype=float).ravel()


@dataclass(frozen=True)
class QuadraticProgram:
    """Convex QP data.  Inequalities are `A_in v + b_in <= 0`."""

    P: np.ndarray
    r: np.ndarray
    constant: float = 0.0
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_in: np.ndarray | None = None
    b_in: np.ndarray | None = None

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        r = _as_vector(self.r, None)
        n = r.size
        if P.shape != (n, n):
            raise ValueError(f"P has shape {P.shape}, expected ({n}, {n})")
        scale = max(1.0, float(np.abs(P).max()) if P.size else 0.0)
        asym = float(np.abs(P - P.T).max()) if P.size else 0.0
        if asym > 1e-12 * scale:
            raise ValueError("P is not symmetric")
        if P.size:
            eigmin = float(np.linalg.eigvalsh(P).min())
            if eigmin < -1e-9 * scale:
                raise ValueError(f"P is not positive semidefinite (eigmin={eigmin:g})")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "A_eq", _as_matrix(self.A_eq, None, n))
        object.__setattr__(self, "b_eq", _as_vector(self.b_eq, self.A_eq.shape[0]))
        object.__setattr__(self, "A_in", _as_matrix(self.A_in, None, n))
        object.__setattr__(self, "b_in", _as_vector(self.b_in, self.A_in.shape[0]))
        if self.A_eq.shape[0] != self.b_eq.size or self.A_in.shape[0] != self.b_in.size:
            raise ValueError("constraint dimensions are inconsistent")

    @property
    def n_var(self) -> int:
        return self.r.size

    def objective(self, v: np.ndarray) -> float:
        v = np.asarray(v, dtype=float)
        return float(0.5 * v @ self.P @ v + self.r @ v + self.constant)


@dataclass
class QpSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    v: np.ndarray | None = None
    objective: float | None = None
    lambda_eq: np.ndarray | None = None
    lambda_in: np.ndarray | None = None
    active_set: list[int] = field(default_factory=list)
    infeasibility_witness: "FarkasWitness | None" = None
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


@dataclass
class FarkasWitness:
    """Certificate (y >= 0, z) with A_in'y + A_eq'z = 0 and y'b_in + z'b_eq > 0."""

    y: np.ndarray
    z: np.ndarray
    gap: float


@dataclass
class Feasibility:
    feasible: bool
    point: np.ndarray | None = None
    margin: float | None = None
    witness: FarkasWitness | None = None


def _solve_lp(c, A_eq, b_eq, A_in, b_in, bounds=(None, None)):
    res = linprog(c, A_ub=A_in if A_in is not None and len(A_in) else None,
                  b_ub=-b_in if b_in is not None and len(b_in) else None,
                  A_eq=A_eq if A_eq is not None and len(A_eq) else None,
                  b_eq=-b_eq if b_eq is not None and len(b_eq) else None,
                  bounds=bounds, method="highs", options=_HIGHS_OPTS)
    return res


def lp_feasible(A_eq=None, b_eq=None, A_in=None, b_in=None) -> Feasibility:
    """Decide feasibility of {v : A_eq v + b_eq = 0, A_in v + b_in <= 0}.

    Solves min t s.t. A_in v + b_in <= t, so a feasible system comes back
    with a point of maximal margin (capped), and an infeasible one with a
    Farkas witness from the alternative LP.
    """
    n = None
    for a in (A_eq, A_in):
        if a is not None and np.size(a):
            n = np.atleast_2d(np.asarray(a, dtype=float)).shape[1]
            break
    if n is None:
        return Feasibility(feasible=True, point=np.zeros(0), margin=np.inf)
    A_eq = _as_matrix(A_eq, None, n)
    b_eq = _as_vector(b_eq, A_eq.shape[0])
    A_in = _as_matrix(A_in, None, n)
    b_in = _as_vector(b_in, A_in.shape[0])

    m_in = A_in.shape[0]
    if m_in == 0:
        # Equalities only: least-squares point, exactness checked below.
        v, *_ = np.linalg.lstsq(A_eq, -b_eq, rcond=None)
        resid = float(np.abs(A_eq @ v + b_eq).max()) if A_eq.size else 0.0
        if resid <= FEAS_TOL:
            return Feasibility(feasible=True, point=v, margin=np.inf)
        return Feasibility(feasible=False, witness=_farkas_witness(A_eq, b_eq, A_in, b_in))

    # Variables (v, t): minimize t with A_in v - t <= -b_in.
    c = np.zeros(n + 1)
    c[-1] = 1.0
    A_ub = np.hstack([A_in, -np.ones((m_in, 1))])
    Ae = np.hstack([A_eq, np.zeros((A_eq.shape[0], 1))]) if A_eq.shape[0] else None
    bounds = [(None, None)] * n + [(-1e6, None)]
    res = linprog(c, A_ub=A_ub, b_ub=-b_in, A_eq=Ae,
                  b_eq=-b_eq if Ae is not None else None,
                  bounds=bounds, method="highs", options=_HIGHS_OPTS)
    if res.status == 2:
        return Feasibility(feasible=False, witness=_farkas_witness(A_eq, b_eq, A_in, b_in))
    if res.status != 0:
        raise IllConditionedError(f"phase-1 LP failed with HiGHS status {res.status}")
    t = float(res.x[-1])
    v = np.asarray(res.x[:n])
    if t > FEAS_TOL:
        return Feasibility(feasible=False, witness=_farkas_witness(A_eq, b_eq, A_in, b_in))
    v = _polish_point(v, A_eq, b_eq, A_in, b_in)
    return Feasibility(feasible=True, point=v, margin=-t)


def _polish_point(v, A_eq, b_eq, A_in, b_in):
    """Squeeze equality/near-active residuals below FEAS_TOL by a lstsq correction."""
    for _ in range(2):
        rows, rhs = [], []
        if A_eq.shape[0]:
            rows.append(A_eq)
            rhs.append(A_eq @ v + b_eq)
        if A_in.shape[0]:
            viol = A_in @ v + b_in
            bad = viol > FEAS_TOL * 0.1
            if np.any(bad):
                rows.append(A_in[bad])
                rhs.append(viol[bad])
        if not rows:
            return v
        resid = np.concatenate(rhs)
        if float(np.abs(resid).max()) <= FEAS_TOL * 0.1:
            return v
        delta, *_ = np.linalg.lstsq(np.vstack(rows), -resid, rcond=None)
        v = v + delta
    return v


def _farkas_witness(A_eq, b_eq, A_in, b_in) -> FarkasWitness:
    """Solve max y'b_in + z'b_eq s.t. A_in'y + A_eq'z = 0, y >= 0, |y|_1 + |z|_1 <= 1."""
    m_in, m_eq = A_in.shape[0], A_eq.shape[0]
    n = A_in.shape[1] if m_in else A_eq.shape[1]
    # Variables: y (m_in, >=0), z+ (m_eq, >=0), z- (m_eq, >=0).
    nv = m_in + 2 * m_eq
    c = -np.concatenate([b_in, b_eq, -b_eq])  # linprog minimizes
    A_cols = []
    if m_in:
        A_cols.append(A_in.T)
    if m_eq:
        A_cols.append(A_eq.T)
        A_cols.append(-A_eq.T)
    Ae = np.hstack(A_cols) if A_cols else np.zeros((n, 0))
    A_norm = np.ones((1, nv))
    res = linprog(c, A_eq=Ae, b_eq=np.zeros(n), A_ub=A_norm, b_ub=[1.0],
                  bounds=(0, None), method="highs", options=_HIGHS_OPTS)
    if res.status != 0 or -res.fun <= 1e-12:
        raise IllConditionedError("infeasible system but no Farkas witness found")
    y = res.x[:m_in]
    z = res.x[m_in:m_in + m_eq] - res.x[m_in + m_eq:]
    return FarkasWitness(y=y, z=z, gap=float(-res.fun))


def lp_maximize(c, A_eq=None, b_eq=None, A_in=None, b_in=None, box=None):
    """Maximize c'v over {A_eq v + b_eq = 0, A_in v + b_in <= 0, |v_i| <= box}.

    Returns (status, value, point) with status in {"optimal", "infeasible",
    "unbounded"}.  Used for cone-triviality and boundedness probes.
    """
    c = np.asarray(c, dtype=float)
    bounds = (None, None) if box is None else (-box, box)
    res = _solve_lp(-c, _as_matrix(A_eq, None, c.size), _as_vector(b_eq, None),
                    _as_matrix(A_in, None, c.size), _as_vector(b_in, None), bounds)
    if res.status == 2:
        return "infeasible", None, None
    if res.status == 3:
        return "unbounded", np.inf, None
    if res.status != 0:
        raise IllConditionedError(f"LP failed with HiGHS status {res.status}")
    return "optimal", float(-res.fun), np.asarray(res.x)


def _nullspace(A: np.ndarray):
    """Orthonormal nullspace basis plus a condition estimate of the kept rows."""
    if A.shape[0] == 0:
        return np.eye(A.shape[1]), 1.0
    u, s, vt = scipy.linalg.svd(A, full_matrices=True, lapack_driver="gesvd")
    smax = s[0] if s.size else 0.0
    cutoff = max(smax * 1e-13, 1e-300)
    rank = int(np.sum(s > cutoff))
    cond = smax / s[rank - 1] if rank else 1.0
    return vt[rank:].T.copy(), cond


def _reduced_step(P, g, Z):
    """EQP step on the nullspace basis Z.

    Returns (p, ray): `p` the Newton step Z pz (or None), `ray` a descent
    direction of zero curvature (or None).  Eigenvalues of the reduced
    Hessian at or below the pivot threshold count as zero pivots.
    """
    H = Z.T @ P @ Z
    gz = Z.T @ g
    if H.size == 0:
        return np.zeros(P.shape[0]), None
    H = 0.5 * (H + H.T)
    vals, vecs = np.linalg.eigh(H)
    scale = max(vals.max(), 0.0) if vals.size else 0.0
    tol = max(PIVOT_TOL, scale * 1e-13)
    pos = vals > tol
    gz_pos = vecs[:, pos].T @ gz
    pz = -vecs[:, pos] @ (gz_pos / vals[pos]) if np.any(pos) else np.zeros_like(gz)
    # Zero-curvature component of the gradient => unbounded ray in the EQP.
    gz_null = gz - vecs[:, pos] @ gz_pos if np.any(pos) else gz.copy()
    if float(np.abs(gz_null).max() if gz_null.size else 0.0) > 1e-10 * (1.0 + float(np.abs(g).max())):
        ray = -(Z @ gz_null)
        ray = ray / float(np.linalg.norm(ray))
        curv = float(ray @ P @ ray)
        if curv > max(PIVOT_TOL, scale * 1e-12):
            # Tiny but nonzero curvature along the pivot-regularized subspace.
            raise IllConditionedError("reduced Hessian pivot straddles the zero threshold")
        return None, ray
    return Z @ pz, None


def solve_qp(qp: QuadraticProgram, warm_start: list[int] | None = None,
             max_iter: int | None = None,
             feasible_point: np.ndarray | None = None) -> QpSolution:
    """Primal active-set solve of a convex QP.

    `warm_start` is an optional list of inequality indices to seed the
    working set; it is used only if the corresponding equality-constrained
    minimizer is feasible.  `feasible_point` skips the phase-1 LP when the
    caller already holds a point satisfying all constraints.
    """
    n = qp.n_var
    m_in = qp.A_in.shape[0]
    if max_iter is None:
        max_iter = 50 * (n + m_in) + 200

    v = None
    work: list[int] = []
    if warm_start is not None:
        v_ws = _try_warm_start(qp, sorted(set(int(i) for i in warm_start)))
        if v_ws is not None:
            v, work = v_ws

    if v is None and feasible_point is not None:
        cand = _polish_point(np.asarray(feasible_point, dtype=float).copy(),
                             qp.A_eq, qp.b_eq, qp.A_in, qp.b_in)
        ok_eq = not qp.A_eq.shape[0] or float(np.abs(qp.A_eq @ cand + qp.b_eq).max()) <= FEAS_TOL
        ok_in = not m_in or float((qp.A_in @ cand + qp.b_in).max()) <= FEAS_TOL
        if ok_eq and ok_in:
            v = cand

    if v is None:
        feas = lp_feasible(qp.A_eq, qp.b_eq, qp.A_in, qp.b_in)
        if not feas.feasible:
            return QpSolution(status="infeasible", infeasibility_witness=feas.witness)
        v = feas.point.copy()
    if v is not None and not work and m_in:
        work = [int(i) for i in np.flatnonzero(qp.A_in @ v + qp.b_in >= -ACTIVE_TOL)]

    last_removed = -1
    for it in range(max_iter):
        A_work = np.vstack([qp.A_eq, qp.A_in[work]]) if (qp.A_eq.shape[0] or work) \
            else np.zeros((0, n))
        Z, cond = _nullspace(A_work)
        if cond > COND_LIMIT:
            raise IllConditionedError("working-set rows condition estimate exceeds limit")
        g = qp.P @ v + qp.r
        p, ray = _reduced_step(qp.P, g, Z)

        if ray is not None:
            alpha, blocker = _max_step(qp, v, ray, work)
            if blocker is None:
                return QpSolution(status="unbounded", v=v, iterations=it)
            v = v + alpha * ray
            work = sorted(work + [blocker])
            continue

        if float(np.abs(p).max() if p.size else 0.0) <= 1e-11 * (1.0 + float(np.abs(v).max())):
            lam_eq, lam_work = _multipliers(qp, v, work)
            negative = [k for k, lam in enumerate(lam_work) if lam < -FEAS_TOL]
            if not negative:
                return _finish(qp, v, work, lam_eq, lam_work, it)
            # Bland: drop the lowest constraint index among negative multipliers.
            drop = min(negative, key=lambda k: work[k])
            if work[drop] == last_removed and len(negative) > 1:
                negative.remove(drop)
                drop = min(negative, key=lambda k: work[k])
            last_removed = work[drop]
            work = work[:drop] + work[drop + 1:]
            continue

        alpha, blocker = _max_step(qp, v, p, work)
        if alpha >= 1.0 or blocker is None:
            v = v + p
        else:
            v = v + alpha * p
            work = sorted(work + [blocker])
    raise DegenerateError(f"active-set iteration cap {max_iter} reached")


def _try_warm_start(qp, indices):
    try:
        A_work = np.vstack([qp.A_eq, qp.A_in[indices]])
        b_work = np.concatenate([qp.b_eq, qp.b_in[indices]])
    except IndexError:
        return None
    # Minimize over the affine set defined by the working rows.
    Z, cond = _nullspace(A_work)
    if cond > COND_LIMIT:
        return None
    v0, *_ = np.linalg.lstsq(A_work, -b_work, rcond=None)
    if A_work.size and float(np.abs(A_work @ v0 + b_work).max()) > FEAS_TOL:
        return None
    p, ray = _reduced_step(qp.P, qp.P @ v0 + qp.r, Z)
    if ray is not None or p is None:
        v = v0
    else:
        v = v0 + p
    if qp.A_in.shape[0] and float((qp.A_in @ v + qp.b_in).max()) > FEAS_TOL:
        return None
    if qp.A_eq.shape[0] and float(np.abs(qp.A_eq @ v + qp.b_eq).max()) > FEAS_TOL:
        return None
    return v, list(indices)


def _max_step(qp, v, d, work):
    """Largest step along d before an inactive inequality blocks (lowest index wins)."""
    if qp.A_in.shape[0] == 0:
        return np.inf, None
    Ad = qp.A_in @ d
    res = qp.A_in @ v + qp.b_in
    mask = np.ones(qp.A_in.shape[0], dtype=bool)
    mask[work] = False
    scale = 1.0 + float(np.abs(d).max())
    cand = np.flatnonzero(mask & (Ad > 1e-13 * scale))
    if cand.size == 0:
        return np.inf, None
    steps = -res[cand] / Ad[cand]
    steps = np.maximum(steps, 0.0)
    best = float(steps.min())
    ties = cand[np.flatnonzero(steps <= best + 1e-14 * (1.0 + best))]
    return best, int(ties.min())


def _multipliers(qp, v, work):
    g = qp.P @ v + qp.r
    A_work = np.vstack([qp.A_eq, qp.A_in[work]]) if (qp.A_eq.shape[0] or work) \
        else np.zeros((0, qp.n_var))
    if A_work.shape[0] == 0:
        return np.zeros(0), np.zeros(0)
    lam, *_ = np.linalg.lstsq(A_work.T, -g, rcond=None)
    m_eq = qp.A_eq.shape[0]
    return lam[:m_eq], lam[m_eq:]


def _finish(qp, v, work, lam_eq, lam_work, iterations):
    lam_in = np.zeros(qp.A_in.shape[0])
    for k, idx in enumerate(work):
        lam_in[idx] = lam_work[k]
    if qp.A_in.shape[0]:
        active = [int(i) for i in np.flatnonzero(qp.A_in @ v + qp.b_in >= -ACTIVE_TOL)]
    else:
        active = []
    return QpSolution(status="optimal", v=v, objective=qp.objective(v),
                      lambda_eq=lam_eq, lambda_in=lam_in, active_set=active,
                      iterations=iterations)


def kkt_residuals(qp: QuadraticProgram, sol: QpSolution) -> dict:
    """Stationarity, feasibility and complementarity residuals of an optimal solution."""
    v = sol.v
    grad = qp.P @ v + qp.r
    if qp.A_eq.shape[0]:
        grad = grad + qp.A_eq.T @ sol.lambda_eq
    if qp.A_in.shape[0]:
        grad = grad + qp.A_in.T @ sol.lambda_in
    out = {"stationarity": float(np.abs(grad).max()) if grad.size else 0.0}
    out["eq_feasibility"] = float(np.abs(qp.A_eq @ v + qp.b_eq).max()) if qp.A_eq.shape[0] else 0.0
    if qp.A_in.shape[0]:
        slack = qp.A_in @ v + qp.b_in
        out["in_feasibility"] = float(slack.max())
        out["complementarity"] = float(np.abs(sol.lambda_in * slack).max())
        out["dual_feasibility"] = float(sol.lambda_in.min())
    else:
        out["in_feasibility"] = 0.0
        out["complementarity"] = 0.0
        out["dual_feasibility"] = 0.0
    return out
