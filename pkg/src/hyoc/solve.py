"""Solvers for the assembled optimal control MPCC.

`solve_local` pivots over complementarity branches: fix for every
complementarity index which side is pinned to zero, solve the resulting
convex QP, and stop as soon as the multiplier-existence LP certifies the
point (a certified point is a local optimum, so the test doubles as the
termination rule).  When the certificate fails, the lowest-index biactive
constraint whose branch-QP multiplier has the wrong sign is flipped, with a
visited-set guard against cycling.

`solve_global_oracle` is the ground-truth baseline: depth-first enumeration
of argmax-piece sequences of the difference-of-convex dynamics, one convex
QP per sequence, with LP pruning of infeasible prefixes.  Exact but
exponential; guarded by a size cap and an optional wall-clock budget.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import HyocError, SizeLimitError
from .lc import LcModel
from .lc import simulate as lc_simulate
from .mpcc import (
    MpccProblem,
    QuadraticStageCost,
    StationarityCertificate,
    active_sets,
    certificate_lp,
    check_mssosc,
)
from .pwa import PwaDcSystem, eval_max_affine
from .qp import QuadraticProgram, lp_feasible, solve_qp
from .transform import SparseLcModel

TAU_ACT = 1e-8
ORACLE_SEQUENCE_CAP = 10 ** 6


@dataclass
class SolveReport:
    status: str  # s_stationary | global_optimal | infeasible | unbounded |
    #              iteration_limit | size_limit | timed_out
    objective: float | None = None
    u: np.ndarray | None = None
    x: np.ndarray | None = None
    w: np.ndarray | None = None
    v: np.ndarray | None = None
    certificate: StationarityCertificate | None = None
    s_stationary: bool = False
    global_certificate: bool = False
    mssosc: bool | None = None
    iterations: int = 0
    starts_used: int = 1
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status in ("s_stationary", "global_optimal")

    def to_dict(self) -> dict:
        out = {"status": self.status, "objective": self.objective,
               "iterations": self.iterations, "starts_used": self.starts_used,
               "s_stationary": self.s_stationary,
               "global_certificate": self.global_certificate,
               "mssosc": self.mssosc, "detail": self.detail}
        for name in ("u", "x", "w"):
            val = getattr(self, name)
            out[name] = None if val is None else np.asarray(val).tolist()
        return out


def branch_qp(p: MpccProblem, assign: np.ndarray) -> tuple[QuadraticProgram, dict]:
    """Convex QP of one complementarity branch.

    assign[i] True pins the G row of index i to zero (w_i stays >= 0 free);
    False pins w_i to zero (the G row stays >= 0).
    """
    pinned_g = np.flatnonzero(assign)
    pinned_h = np.flatnonzero(~assign)
    A_eq = np.vstack([p.F_eq, p.G[pinned_g], p.H[pinned_h]])
    b_eq = np.concatenate([p.f_eq, p.g[pinned_g], p.h[pinned_h]])
    A_in = np.vstack([p.F_in, -p.H[pinned_g], -p.G[pinned_h]])
    b_in = np.concatenate([p.f_in, -p.h[pinned_g], -p.g[pinned_h]])
    layout = {"m_eq": p.F_eq.shape[0], "pinned_g": pinned_g, "pinned_h": pinned_h,
              "m_in": p.F_in.shape[0]}
    qp = QuadraticProgram(P=p.P, r=p.r, constant=p.const,
                          A_eq=A_eq, b_eq=b_eq, A_in=A_in, b_in=b_in)
    return qp, layout


def _branch_multipliers(p, sol, layout):
    """Map branch-QP multipliers onto MPCC-style (nu_G, nu_H)."""
    nu_G = np.zeros(p.m_comp)
    nu_H = np.zeros(p.m_comp)
    m_eq = layout["m_eq"]
    npg = layout["pinned_g"].size
    nu_G[layout["pinned_g"]] = -sol.lambda_eq[m_eq:m_eq + npg]
    nu_H[layout["pinned_h"]] = -sol.lambda_eq[m_eq + npg:]
    m_in = layout["m_in"]
    nu_H[layout["pinned_g"]] = sol.lambda_in[m_in:m_in + npg]
    nu_G[layout["pinned_h"]] = sol.lambda_in[m_in + npg:]
    return nu_G, nu_H


def assignment_from_point(p: MpccProblem, v) -> np.ndarray:
    """Pin the G side wherever w is strictly positive, the w side elsewhere."""
    v = np.asarray(v, dtype=float)
    return (p.H @ v + p.h) > TAU_ACT


def initial_feasible_point(p: MpccProblem, attempts: int = 25,
                           seed: int = 0) -> np.ndarray | None:
    """A feasible trajectory point, found by simulating candidate input sequences."""
    rng = np.random.default_rng(seed)
    candidates = [np.zeros((p.N, p.n_u))]
    for _ in range(attempts):
        candidates.append(rng.uniform(-1.0, 1.0, size=(p.N, p.n_u)))
    model = p.model
    for us in candidates:
        try:
            if isinstance(model, SparseLcModel):
                xs, ws, auxs = [np.asarray(p.x0, dtype=float)], [], []
                for k in range(p.N):
                    x_plus, w = model.step(xs[-1], us[k])
                    xs.append(x_plus)
                    ws.append(w)
                    auxs.append(sparse_stage_aux(model, xs[-2], us[k], w))
                v = p.join(us, np.array(xs), np.array(ws), np.array(auxs))
            else:
                xs, ws = lc_simulate(model, p.x0, us)
                v = p.join(us, xs, ws)
        except HyocError:
            continue
        if p.is_feasible(v):
            return v
    return None


def sparse_stage_aux(model: SparseLcModel, x, u, w) -> np.ndarray:
    """(y, z) implied by the stationarity rows at given internal multipliers."""
    n_x = model.n_x
    n_ry = model.sys.psi.n_pieces
    lam = w[:n_x * n_ry].reshape(n_x, n_ry)
    theta = w[n_x * n_ry:].reshape(n_x, model.sys.phi.n_pieces)
    y = model.supports.psi_bar(x, u) + lam.sum(axis=1) / model.q_y
    z = model.supports.phi_bar(x, u) + theta.sum(axis=1) / model.q_z
    return np.concatenate([y, z])


def solve_local(p: MpccProblem, init=None, max_flips: int = 500,
                seed: int = 0, compute_mssosc: bool = True) -> SolveReport:
    """Branch-pivoting local solve, terminated by the certificate LP."""
    if init is None:
        assign = np.zeros(p.m_comp, dtype=bool)
    elif isinstance(init, np.ndarray) and init.dtype == bool:
        assign = init.copy()
    else:
        v0 = np.asarray(init, dtype=float)
        if not p.is_feasible(v0):
            raise HyocError("initial point is not feasible for the MPCC")
        assign = assignment_from_point(p, v0)

    visited = {assign.tobytes()}
    repaired = False
    flips = 0
    while True:
        qp, layout = branch_qp(p, assign)
        sol = solve_qp(qp)
        if sol.status == "unbounded":
            return SolveReport(status="unbounded", iterations=flips)
        if sol.status == "infeasible":
            if not repaired:
                repaired = True
                v0 = initial_feasible_point(p, seed=seed)
                if v0 is None:
                    return SolveReport(status="infeasible", iterations=flips,
                                       detail="no feasible trajectory found")
                assign = assignment_from_point(p, v0)
                visited.add(assign.tobytes())
                continue
            moved = False
            for i in range(p.m_comp):
                cand = assign.copy()
                cand[i] = ~cand[i]
                if cand.tobytes() not in visited:
                    assign = cand
                    visited.add(assign.tobytes())
                    moved = True
                    flips += 1
                    break
            if not moved or flips > max_flips:
                return SolveReport(status="infeasible", iterations=flips,
                                   detail="all neighboring branches infeasible")
            continue

        v = sol.v
        act = active_sets(p, v)
        cert = certificate_lp(p, v, regime="s", active=act)
        if cert is not None:
            return _certified_report(p, v, cert, flips, compute_mssosc)

        nu_G, nu_H = _branch_multipliers(p, sol, layout)
        beta = list(act.beta)
        violating = [i for i in beta
                     if (assign[i] and nu_G[i] < -TAU_ACT)
                     or (not assign[i] and nu_H[i] < -TAU_ACT)]
        candidates = sorted(violating) + [i for i in sorted(beta) if i not in violating]
        moved = False
        for i in candidates:
            cand = assign.copy()
            cand[i] = ~cand[i]
            if cand.tobytes() not in visited:
                assign = cand
                visited.add(assign.tobytes())
                moved = True
                break
        flips += 1
        if not moved or flips > max_flips:
            return SolveReport(status="iteration_limit", objective=sol.objective,
                               v=v, iterations=flips,
                               detail="no unvisited neighboring branch")


def _certified_report(p, v, cert, flips, compute_mssosc=True) -> SolveReport:
    glob = certificate_lp(p, v, regime="global")
    mssosc = None
    if compute_mssosc:
        try:
            mssosc = check_mssosc(p, v)
        except SizeLimitError:
            mssosc = None
    u, x, w = p.split(v)
    return SolveReport(status="s_stationary", objective=p.objective(v),
                       u=u, x=x, w=w, v=np.asarray(v, dtype=float),
                       certificate=cert, s_stationary=True,
                       global_certificate=glob is not None,
                       mssosc=mssosc, iterations=flips)


def solve_local_multistart(p: MpccProblem, starts: int = 1, seed: int = 0,
                           compute_mssosc: bool = True) -> SolveReport:
    """Best S-stationary result over the default start plus random branches."""
    rng = np.random.default_rng(seed)
    best: SolveReport | None = None
    used = 0
    for s in range(max(1, starts)):
        init = None if s == 0 else rng.random(p.m_comp) < 0.5
        report = solve_local(p, init=init, seed=seed + s,
                             compute_mssosc=compute_mssosc)
        used += 1
        if report.status == "s_stationary":
            if best is None or best.status != "s_stationary" \
                    or report.objective < best.objective - 1e-12:
                best = report
        elif best is None:
            best = report
    best.starts_used = used
    return best


# ---------------------------------------------------------------------------
# Global enumeration oracle
# ---------------------------------------------------------------------------


class _OracleTimeout(Exception):
    pass


def _box_bounds(T, t, u_lo, u_hi):
    """Componentwise range of T u + t over the box [u_lo, u_hi]."""
    Tp = np.maximum(T, 0.0)
    Tn = np.minimum(T, 0.0)
    return t + Tp @ u_lo + Tn @ u_hi, t + Tp @ u_hi + Tn @ u_lo


class _PieceFilter:
    """Box-relaxation pruning of argmax-piece choices.

    For a candidate piece j of component c to attain the max somewhere in a
    state box, every difference piece_l - piece_j must admit a nonpositive
    value over (state box) x (input box).  The input-dependent part of each
    difference is constant per system and precomputed.
    """

    def __init__(self, g, u_lo, u_hi):
        A, B, c = g.A, g.B, g.c
        self.dA = A[:, None] - A[None, :]          # (L, L, n_x, n_x)
        dB = B[:, None] - B[None, :]               # (L, L, n_x, n_u)
        dc = c[:, None] - c[None, :]               # (L, L, n_x)
        self.lo_const = (np.minimum(dB * u_lo, dB * u_hi).sum(axis=-1) + dc)

    def allowed(self, x_lo, x_hi):
        lo_x = np.minimum(self.dA * x_lo, self.dA * x_hi).sum(axis=-1)
        lo = self.lo_const + lo_x                  # (L, L, n_x)
        ok = np.all(lo <= 1e-9, axis=0)            # min over l of row-lo must allow <= 0
        return [list(np.flatnonzero(ok[:, c])) for c in range(ok.shape[1])]


def _stage_choice_rows(sys, jy, jz, T, t, k, n_u, n_uflat, include_domain):
    """Constraint rows (A u_flat + b <= 0) for one stage's piece choice."""
    rows, offs = [], []
    u_cols = slice(k * n_u, (k + 1) * n_u)

    def add(ax, bu, const):
        row = np.zeros(n_uflat)
        row += ax @ T
        row[u_cols] += bu
        rows.append(row)
        offs.append(const + float(ax @ t))

    for g, choice in ((sys.psi, jy), (sys.phi, jz)):
        for c in range(sys.n_x):
            j_star = choice[c]
            for l in range(g.n_pieces):
                if l == j_star:
                    continue
                add(g.A[l, c, :] - g.A[j_star, c, :],
                    g.B[l, c, :] - g.B[j_star, c, :],
                    float(g.c[l, c] - g.c[j_star, c]))
    if include_domain:
        H = sys.domain.H
        Hx, Hu = H[:, :sys.n_x], H[:, sys.n_x:]
        for row_i in range(H.shape[0]):
            add(Hx[row_i], Hu[row_i], -float(sys.domain.k[row_i]))
    return np.array(rows), np.array(offs)


def _chosen_dynamics(sys, jy, jz):
    A = np.array([sys.psi.A[jy[c], c, :] - sys.phi.A[jz[c], c, :]
                  for c in range(sys.n_x)])
    B = np.array([sys.psi.B[jy[c], c, :] - sys.phi.B[jz[c], c, :]
                  for c in range(sys.n_x)])
    c = np.array([sys.psi.c[jy[c_], c_] - sys.phi.c[jz[c_], c_]
                  for c_ in range(sys.n_x)])
    return A, B, c


def _extend_witness(witness, rows, offs, k, n_u, u_lo, u_hi):
    """Try to extend a feasible input prefix through the new stage rows.

    With the prefix fixed, the rows are affine in u_k alone; for scalar
    inputs the admissible interval is exact, otherwise a few candidate
    points are probed.  Returns the extended witness or None.
    """
    u_cols = slice(k * n_u, (k + 1) * n_u)
    base = rows[:, :k * n_u] @ witness[:k * n_u] + offs if k else offs.copy()
    B = rows[:, u_cols]
    if n_u == 1:
        b = B[:, 0]
        lb, ub = u_lo[0], u_hi[0]
        for bi, ci in zip(b, base):
            if bi > 1e-12:
                ub = min(ub, -ci / bi)
            elif bi < -1e-12:
                lb = max(lb, -ci / bi)
            elif ci > 1e-9:
                return None
        if lb > ub + 1e-12:
            return None
        u_k = min(max(0.0, lb), ub)
        out = witness.copy()
        out[u_cols] = u_k
        return out
    for cand in (np.zeros(n_u), 0.5 * (u_lo + u_hi)):
        if float((B @ cand + base).max()) <= 1e-9:
            out = witness.copy()
            out[u_cols] = cand
            return out
    return None


def _suffix_cost_floors(cost: QuadraticStageCost, N: int) -> np.ndarray:
    """floors[k] lower-bounds the cost of stages k..N over unconstrained points."""
    def quad_min(Q, q):
        Q = np.atleast_2d(Q)
        if not Q.size:
            return 0.0
        q = np.asarray(q, dtype=float)
        sol = np.linalg.pinv(Q) @ q
        if float(np.abs(Q @ sol - q).max()) > 1e-9 * (1 + float(np.abs(q).max())):
            return -np.inf  # linear term escapes the curvature range
        return float(-0.5 * q @ sol)

    floors = np.zeros(N + 1)
    floors[N] = quad_min(cost.Q_N, -cost.q_N) + cost.offset_N
    for k in range(N - 1, -1, -1):
        stage = (quad_min(cost.Q[k], -cost.q_lin[k])
                 + quad_min(cost.R[k], -cost.r_lin[k]) + cost.offsets[k])
        floors[k] = floors[k + 1] + stage
    return floors


def solve_global_oracle(sys: PwaDcSystem, cost: QuadraticStageCost, x0, N: int,
                        include_domain: bool = True,
                        time_limit: float | None = None) -> SolveReport:
    """Exact enumeration over per-component argmax-piece sequences.

    Every stage fixes one psi piece and one phi piece per state component;
    the induced dynamics are affine and piece validity (plus domain
    membership) becomes linear rows over the input prefix.  The tree is
    explored best-bound-first with exact prefix-cost QPs as lower bounds, so
    pruning never cuts an optimal sequence: subtrees are dropped only when
    provably infeasible, box-incompatible, or strictly worse than the
    incumbent.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    if N == 0:
        return SolveReport(status="global_optimal", objective=cost.terminal_value(x0),
                           u=np.zeros((0, sys.n_u)), x=x0[None, :].copy(),
                           iterations=0)
    n_seq = (sys.psi.n_pieces * sys.phi.n_pieces) ** N
    if n_seq > ORACLE_SEQUENCE_CAP:
        raise SizeLimitError(f"{n_seq} piece sequences exceed the oracle cap")
    n_u = sys.n_u
    n_uflat = N * n_u
    dom_lo, dom_hi = sys.domain.bounding_box()
    u_lo, u_hi = dom_lo[sys.n_x:], dom_hi[sys.n_x:]
    u_lo_flat = np.tile(u_lo, N)
    u_hi_flat = np.tile(u_hi, N)
    filt_y = _PieceFilter(sys.psi, u_lo, u_hi)
    filt_z = _PieceFilter(sys.phi, u_lo, u_hi)
    floors = _suffix_cost_floors(cost, N)
    deadline = None if time_limit is None else time.monotonic() + time_limit
    best: dict = {"objective": np.inf, "u": None, "leaves": 0, "nodes": 0, "qps": 0}

    def recurse(k, T, t, blocks_A, blocks_b, witness, P_acc, r_acc, c_acc):
        if deadline is not None and time.monotonic() > deadline:
            raise _OracleTimeout
        if k == N:
            best["leaves"] += 1
            _finish_leaf(T, t, blocks_A, blocks_b, witness, P_acc, r_acc, c_acc)
            return
        # Stage-k running cost, identical for every child of this node.
        P_k = P_acc + T.T @ cost.Q[k] @ T
        r_k = r_acc + T.T @ (cost.Q[k] @ t + cost.q_lin[k])
        c_k = c_acc + 0.5 * float(t @ cost.Q[k] @ t) + float(cost.q_lin[k] @ t) \
            + float(cost.offsets[k])
        cols = slice(k * n_u, (k + 1) * n_u)
        P_k = P_k.copy()
        P_k[cols, cols] += cost.R[k]
        r_k = r_k.copy()
        r_k[cols] += cost.r_lin[k]

        if k:
            x_lo, x_hi = _box_bounds(T[:, :k * n_u], t, u_lo_flat[:k * n_u],
                                     u_hi_flat[:k * n_u])
        else:
            x_lo, x_hi = t, t
        allowed_y = filt_y.allowed(x_lo, x_hi)
        allowed_z = filt_z.allowed(x_lo, x_hi)
        if any(not a for a in allowed_y) or any(not a for a in allowed_z):
            return
        used = (k + 1) * n_u
        survivors = []
        for jy in itertools.product(*allowed_y):
            for jz in itertools.product(*allowed_z):
                best["nodes"] += 1
                rows, offs = _stage_choice_rows(sys, jy, jz, T, t, k, n_u,
                                                n_uflat, include_domain)
                wit = None
                if witness is not None:
                    wit = _extend_witness(witness, rows, offs, k, n_u, u_lo, u_hi)
                A_all = np.vstack(blocks_A + [rows])[:, :used]
                b_all = np.concatenate(blocks_b + [offs])
                qp = QuadraticProgram(P=P_k[:used, :used], r=r_k[:used], constant=c_k,
                                      A_in=A_all, b_in=b_all)
                best["qps"] += 1
                sol = solve_qp(qp, feasible_point=None if wit is None else wit[:used])
                if sol.status != "optimal":
                    continue
                bound = sol.objective + floors[k + 1]
                child_wit = np.zeros(n_uflat)
                child_wit[:used] = sol.v
                survivors.append((bound, jy, jz, rows, offs, child_wit))
        survivors.sort(key=lambda item: item[0])
        for bound, jy, jz, rows, offs, child_wit in survivors:
            if bound >= best["objective"] + 1e-12:
                break  # sorted: every later child is at least as costly
            A_dyn, B_dyn, c_dyn = _chosen_dynamics(sys, jy, jz)
            T_next = A_dyn @ T
            T_next[:, cols] += B_dyn
            t_next = A_dyn @ t + c_dyn
            recurse(k + 1, T_next, t_next, blocks_A + [rows], blocks_b + [offs],
                    child_wit, P_k, r_k, c_k)

    def _finish_leaf(T, t, blocks_A, blocks_b, witness, P_acc, r_acc, c_acc):
        P = P_acc + T.T @ cost.Q_N @ T
        r = r_acc + T.T @ (cost.Q_N @ t + cost.q_N)
        const = c_acc + 0.5 * float(t @ cost.Q_N @ t) + float(cost.q_N @ t) \
            + float(cost.offset_N)
        qp = QuadraticProgram(P=0.5 * (P + P.T), r=r, constant=const,
                              A_in=np.vstack(blocks_A), b_in=np.concatenate(blocks_b))
        sol = solve_qp(qp, feasible_point=witness)
        if sol.status != "optimal":
            return
        if sol.objective < best["objective"] - 1e-12:
            best["objective"] = sol.objective
            best["u"] = sol.v.copy()

    try:
        recurse(0, np.zeros((sys.n_x, n_uflat)), x0.copy(), [], [], None,
                np.zeros((n_uflat, n_uflat)), np.zeros(n_uflat), 0.0)
    except _OracleTimeout:
        return SolveReport(status="timed_out", iterations=best["nodes"],
                           detail=f"{best['leaves']} sequences solved before the deadline")

    if best["u"] is None:
        return SolveReport(status="infeasible", iterations=best["nodes"],
                           detail="no piece sequence admits a feasible trajectory")
    u = best["u"].reshape(N, n_u)
    xs = [x0]
    for k in range(N):
        y, _ = eval_max_affine(sys.psi, xs[-1], u[k])
        z, _ = eval_max_affine(sys.phi, xs[-1], u[k])
        xs.append(y - z)
    return SolveReport(status="global_optimal", objective=float(best["objective"]),
                       u=u, x=np.array(xs), iterations=best["nodes"],
                       detail=f"{best['leaves']} leaves, {best['qps']} bound QPs")
