"""Horizon-N optimal control MPCC assembly and stationarity certificates.

The decision vector is laid out as v = (u_0..u_{N-1}, x_1..x_N, w_0..w_{N-1})
with x_0 folded in as data, plus trailing per-stage auxiliary variables for
models that keep their projection variables explicit.  The problem is stored
in general affine MPCC form

    min 1/2 v'Pv + r'v + const
    s.t. F_in v + f_in <= 0,  F_eq v + f_eq = 0,
         Gv + g >= 0,  Hv + h >= 0,  (Gv+g)'(Hv+h) = 0

where H selects the complementarity coordinates (h = 0).  All certificate
checks (classical KKT, S- and M-stationarity, the global sufficiency sign
condition, the strong second-order condition, and the face sweep over
consistent complementarity variables) work on this general form.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space

from .errors import HyocError, SizeLimitError
from .lc import LcModel, LcpBlock
from .lcp import RankOneLcp, solution_set, vertices
from .pwa import Polytope
from .qp import lp_feasible, lp_maximize
from .transform import SparseLcModel

TAU_ACT = 1e-8
FEAS_CHECK_TOL = 1e-7
MSSOSC_BETA_LIMIT = 16
MSTAT_BETA_LIMIT = 8
FACE_LIMIT = 10_000


class InfeasiblePointError(HyocError):
    def __init__(self, message, violation=None):
        super().__init__(message)
        self.violation = violation


@dataclass(frozen=True)
class QuadraticStageCost:
    """Convex quadratic stage costs 1/2 x'Q_k x + q_k'x + 1/2 u'R_k u + r_k'u
    plus a terminal term; none of them touch the complementarity variables."""

    Q: np.ndarray        # (N, n_x, n_x)
    R: np.ndarray        # (N, n_u, n_u)
    q_lin: np.ndarray    # (N, n_x)
    r_lin: np.ndarray    # (N, n_u)
    offsets: np.ndarray  # (N,)
    Q_N: np.ndarray      # (n_x, n_x)
    q_N: np.ndarray      # (n_x,)
    offset_N: float = 0.0

    def __post_init__(self):
        for name in ("Q", "R", "q_lin", "r_lin", "offsets", "Q_N", "q_N"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        stacked = list(self.Q) + list(self.R) + [self.Q_N]
        for M in stacked:
            M = np.atleast_2d(M)
            sym = 0.5 * (M + M.T)
            if M.size and float(np.linalg.eigvalsh(sym).min()) < -1e-9 * max(1.0, float(np.abs(M).max())):
                raise ValueError("stage cost matrices must be positive semidefinite")

    @property
    def N(self) -> int:
        return self.Q.shape[0]

    @classmethod
    def tracking(cls, n_x: int, n_u: int, N: int) -> "QuadraticStageCost":
        """The default 1/2 (|x|^2 + |u|^2) running cost with 1/2 |x_N|^2 terminal."""
        return cls(Q=np.broadcast_to(np.eye(n_x), (N, n_x, n_x)).copy(),
                   R=np.broadcast_to(np.eye(n_u), (N, n_u, n_u)).copy(),
                   q_lin=np.zeros((N, n_x)), r_lin=np.zeros((N, n_u)),
                   offsets=np.zeros(N), Q_N=np.eye(n_x), q_N=np.zeros(n_x))

    def stage_value(self, k: int, x, u) -> float:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        return float(0.5 * x @ self.Q[k] @ x + self.q_lin[k] @ x
                     + 0.5 * u @ self.R[k] @ u + self.r_lin[k] @ u + self.offsets[k])

    def terminal_value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.Q_N @ x + self.q_N @ x + self.offset_N)

    def trajectory_value(self, xs, us) -> float:
        total = self.terminal_value(xs[-1])
        for k in range(self.N):
            total += self.stage_value(k, xs[k], us[k])
        return total


@dataclass(frozen=True)
class ActiveSets:
    alpha: tuple[int, ...]
    beta: tuple[int, ...]
    gamma: tuple[int, ...]
    inequalities: tuple[int, ...]


@dataclass
class StationarityCertificate:
    kind: str  # "mpcc" | "classical"
    eta: np.ndarray
    mu: np.ndarray
    nu_G: np.ndarray
    nu_H: np.ndarray
    xi: float = 0.0


@dataclass(frozen=True)
class MpccProblem:
    P: np.ndarray
    r: np.ndarray
    const: float
    F_in: np.ndarray
    f_in: np.ndarray
    F_eq: np.ndarray
    f_eq: np.ndarray
    G: np.ndarray
    g: np.ndarray
    H: np.ndarray
    h: np.ndarray
    N: int
    n_x: int
    n_u: int
    n_w: int
    n_aux: int
    x0: np.ndarray
    model: object = field(repr=False)
    cost: QuadraticStageCost = field(repr=False, default=None)
    dyn_row_offsets: tuple[int, ...] = ()  # first transition row per stage

    @property
    def n_v(self) -> int:
        return self.r.size

    @property
    def m_comp(self) -> int:
        return self.G.shape[0]

    def u_slice(self, k: int) -> slice:
        return slice(k * self.n_u, (k + 1) * self.n_u)

    def x_slice(self, k: int) -> slice:
        if k < 1:
            raise ValueError("x_0 is data, not a decision variable")
        base = self.N * self.n_u
        return slice(base + (k - 1) * self.n_x, base + k * self.n_x)

    def w_slice(self, k: int) -> slice:
        base = self.N * (self.n_u + self.n_x)
        return slice(base + k * self.n_w, base + (k + 1) * self.n_w)

    def aux_slice(self, k: int) -> slice:
        base = self.N * (self.n_u + self.n_x + self.n_w)
        return slice(base + k * self.n_aux, base + (k + 1) * self.n_aux)

    def comp_rows(self, k: int) -> slice:
        return slice(k * self.n_w, (k + 1) * self.n_w)

    def dyn_rows(self, k: int) -> slice:
        return slice(self.dyn_row_offsets[k], self.dyn_row_offsets[k] + self.n_x)

    def split(self, v) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(u (N, n_u), x (N+1, n_x) including x_0, w (N, n_w))."""
        v = np.asarray(v, dtype=float)
        u = np.stack([v[self.u_slice(k)] for k in range(self.N)])
        x = np.vstack([self.x0[None, :]] + [v[self.x_slice(k)][None, :]
                                            for k in range(1, self.N + 1)])
        w = np.stack([v[self.w_slice(k)] for k in range(self.N)])
        return u, x, w

    def join(self, u, x, w, aux=None) -> np.ndarray:
        v = np.zeros(self.n_v)
        for k in range(self.N):
            v[self.u_slice(k)] = u[k]
            v[self.w_slice(k)] = w[k]
            if self.n_aux:
                v[self.aux_slice(k)] = aux[k]
        for k in range(1, self.N + 1):
            v[self.x_slice(k)] = x[k]
        return v

    def objective(self, v) -> float:
        v = np.asarray(v, dtype=float)
        return float(0.5 * v @ self.P @ v + self.r @ v + self.const)

    def gradient(self, v) -> np.ndarray:
        return self.P @ np.asarray(v, dtype=float) + self.r

    def violations(self, v) -> dict:
        v = np.asarray(v, dtype=float)
        out = {"eq": float(np.abs(self.F_eq @ v + self.f_eq).max()) if self.F_eq.size else 0.0,
               "in": float((self.F_in @ v + self.f_in).max()) if self.F_in.size else 0.0}
        Gv = self.G @ v + self.g
        Hv = self.H @ v + self.h
        out["g_nonneg"] = float((-Gv).max()) if Gv.size else 0.0
        out["h_nonneg"] = float((-Hv).max()) if Hv.size else 0.0
        out["complementarity"] = float(np.abs(Gv * Hv).max()) if Gv.size else 0.0
        return out

    def is_feasible(self, v, tol: float = FEAS_CHECK_TOL) -> bool:
        viol = self.violations(v)
        scale = 1.0 + float(np.abs(np.asarray(v)).max())
        return all(val <= tol * scale for val in viol.values())

    def stagewise(self, cert: StationarityCertificate):
        """Per-stage view (mu_k, nu_k, lambda_k) of the multipliers."""
        out = []
        for k in range(self.N):
            out.append((cert.mu[self.dyn_rows(k)],
                        cert.nu_G[self.comp_rows(k)],
                        cert.nu_H[self.comp_rows(k)]))
        return out


def _stage_polytopes(stage_constraints, N: int) -> list[Polytope] | None:
    if stage_constraints is None:
        return None
    if isinstance(stage_constraints, Polytope):
        return [stage_constraints] * N
    gammas = list(stage_constraints)
    if len(gammas) != N:
        raise ValueError(f"need one stage polytope per step, got {len(gammas)} for N={N}")
    return gammas


def assemble(model, cost: QuadraticStageCost, x0, N: int,
             stage_constraints=None) -> MpccProblem:
    """Build the horizon-N MPCC for a compact LC model or a sparse model."""
    if N < 1:
        raise ValueError("horizon must be >= 1")
    if cost.N != N:
        raise ValueError(f"cost has {cost.N} stages, horizon is {N}")
    x0 = np.asarray(x0, dtype=float).ravel()
    if isinstance(model, SparseLcModel):
        return _assemble_sparse(model, cost, x0, N, stage_constraints)
    if isinstance(model, LcModel):
        return _assemble_compact(model, cost, x0, N, stage_constraints)
    raise TypeError(f"cannot assemble from {type(model).__name__}")


def _cost_blocks(n_v, cost, x0, N, u_slice, x_slice):
    P = np.zeros((n_v, n_v))
    r = np.zeros(n_v)
    const = 0.5 * x0 @ cost.Q[0] @ x0 + cost.q_lin[0] @ x0 + float(cost.offsets.sum()) + cost.offset_N
    for k in range(N):
        P[u_slice(k), u_slice(k)] = cost.R[k]
        r[u_slice(k)] = cost.r_lin[k]
    for k in range(1, N):
        P[x_slice(k), x_slice(k)] = cost.Q[k]
        r[x_slice(k)] = cost.q_lin[k]
    P[x_slice(N), x_slice(N)] = cost.Q_N
    r[x_slice(N)] = cost.q_N
    return P, r, const


def _stage_inequalities(gammas, p, x0):
    if gammas is None:
        return np.zeros((0, p.n_v)), np.zeros(0)
    rows, offs = [], []
    for k, gam in enumerate(gammas):
        Hx, Hu = gam.H[:, :p.n_x], gam.H[:, p.n_x:]
        block = np.zeros((gam.H.shape[0], p.n_v))
        block[:, p.u_slice(k)] = Hu
        off = -gam.k
        if k == 0:
            off = off + Hx @ x0
        else:
            block[:, p.x_slice(k)] = Hx
        rows.append(block)
        offs.append(off)
    return np.vstack(rows), np.concatenate(offs)


def _assemble_compact(model: LcModel, cost, x0, N, stage_constraints):
    n_x, n_u, n_w = model.n_x, model.n_u, model.n_w
    if x0.size != n_x:
        raise ValueError("x0 dimension mismatch")
    n_v = N * (n_u + n_x + n_w)
    p = MpccProblem(P=np.zeros((0, 0)), r=np.zeros(n_v), const=0.0,
                    F_in=np.zeros((0, n_v)), f_in=np.zeros(0),
                    F_eq=np.zeros((0, n_v)), f_eq=np.zeros(0),
                    G=np.zeros((0, n_v)), g=np.zeros(0),
                    H=np.zeros((0, n_v)), h=np.zeros(0),
                    N=N, n_x=n_x, n_u=n_u, n_w=n_w, n_aux=0, x0=x0,
                    model=model, cost=cost)  # layout helper only

    P, r, const = _cost_blocks(n_v, cost, x0, N, p.u_slice, p.x_slice)

    F_eq = np.zeros((N * n_x, n_v))
    f_eq = np.zeros(N * n_x)
    for k in range(N):
        rows = slice(k * n_x, (k + 1) * n_x)
        F_eq[rows, p.x_slice(k + 1)] = np.eye(n_x)
        F_eq[rows, p.u_slice(k)] = -model.B_u
        F_eq[rows, p.w_slice(k)] = -model.B_w
        f_eq[rows] = -model.c
        if k == 0:
            f_eq[rows] -= model.A @ x0
        else:
            F_eq[rows, p.x_slice(k)] = -model.A

    G = np.zeros((N * n_w, n_v))
    g = np.zeros(N * n_w)
    H = np.zeros((N * n_w, n_v))
    for k in range(N):
        rows = p.comp_rows(k)
        G[rows, p.w_slice(k)] = model.E_w
        G[rows, p.u_slice(k)] = model.E_u
        g[rows] = model.e
        if k == 0:
            g[rows] += model.E_x @ x0
        else:
            G[rows, p.x_slice(k)] = model.E_x
        H[rows, p.w_slice(k)] = np.eye(n_w)

    F_in, f_in = _stage_inequalities(_stage_polytopes(stage_constraints, N), p, x0)
    return MpccProblem(P=P, r=r, const=const, F_in=F_in, f_in=f_in,
                       F_eq=F_eq, f_eq=f_eq, G=G, g=g, H=H, h=np.zeros(N * n_w),
                       N=N, n_x=n_x, n_u=n_u, n_w=n_w, n_aux=0, x0=x0,
                       model=model, cost=cost,
                       dyn_row_offsets=tuple(k * n_x for k in range(N)))


def _assemble_sparse(model: SparseLcModel, cost, x0, N, stage_constraints):
    n_x, n_u, n_w, n_aux = model.n_x, model.n_u, model.n_w, model.n_aux
    if x0.size != n_x:
        raise ValueError("x0 dimension mismatch")
    mats = model.matrices()
    n_v = N * (n_u + n_x + n_w + n_aux)
    p = MpccProblem(P=np.zeros((0, 0)), r=np.zeros(n_v), const=0.0,
                    F_in=np.zeros((0, n_v)), f_in=np.zeros(0),
                    F_eq=np.zeros((0, n_v)), f_eq=np.zeros(0),
                    G=np.zeros((0, n_v)), g=np.zeros(0),
                    H=np.zeros((0, n_v)), h=np.zeros(0),
                    N=N, n_x=n_x, n_u=n_u, n_w=n_w, n_aux=n_aux, x0=x0,
                    model=model, cost=cost)

    P, r, const = _cost_blocks(n_v, cost, x0, N, p.u_slice, p.x_slice)

    rows_per_stage = n_x + n_aux  # transition + stationarity of both projections
    F_eq = np.zeros((N * rows_per_stage, n_v))
    f_eq = np.zeros(N * rows_per_stage)
    dyn_offsets = []
    for k in range(N):
        base = k * rows_per_stage
        dyn_offsets.append(base)
        trans = slice(base, base + n_x)
        F_eq[trans, p.x_slice(k + 1)] = np.eye(n_x)
        F_eq[trans, p.aux_slice(k)] = -mats["trans_aux"]
        stat = slice(base + n_x, base + n_x + n_aux)
        F_eq[stat, p.aux_slice(k)] = mats["stat_aux"]
        F_eq[stat, p.w_slice(k)] = mats["stat_w"]
        F_eq[stat, p.u_slice(k)] = mats["stat_u"]
        f_eq[stat] = mats["stat_c"]
        if k == 0:
            f_eq[stat] += mats["stat_x"] @ x0
        else:
            F_eq[stat, p.x_slice(k)] = mats["stat_x"]

    G = np.zeros((N * n_w, n_v))
    g = np.zeros(N * n_w)
    H = np.zeros((N * n_w, n_v))
    for k in range(N):
        rows = p.comp_rows(k)
        G[rows, p.aux_slice(k)] = mats["comp_aux"]
        G[rows, p.u_slice(k)] = mats["comp_u"]
        g[rows] = mats["comp_c"]
        if k == 0:
            g[rows] += mats["comp_x"] @ x0
        else:
            G[rows, p.x_slice(k)] = mats["comp_x"]
        H[rows, p.w_slice(k)] = np.eye(n_w)

    F_in, f_in = _stage_inequalities(_stage_polytopes(stage_constraints, N), p, x0)
    return MpccProblem(P=P, r=r, const=const, F_in=F_in, f_in=f_in,
                       F_eq=F_eq, f_eq=f_eq, G=G, g=g, H=H, h=np.zeros(N * n_w),
                       N=N, n_x=n_x, n_u=n_u, n_w=n_w, n_aux=n_aux, x0=x0,
                       model=model, cost=cost, dyn_row_offsets=tuple(dyn_offsets))


def active_sets(p: MpccProblem, v, tol: float = TAU_ACT) -> ActiveSets:
    v = np.asarray(v, dtype=float)
    viol = p.violations(v)
    scale = 1.0 + float(np.abs(v).max())
    worst = max(viol.values())
    if worst > FEAS_CHECK_TOL * scale:
        raise InfeasiblePointError(f"point violates constraints by {worst:g}",
                                   violation=worst)
    Gv = p.G @ v + p.g
    Hv = p.H @ v + p.h
    g_zero = Gv <= tol
    h_zero = Hv <= tol
    alpha = tuple(int(i) for i in np.flatnonzero(g_zero & ~h_zero))
    beta = tuple(int(i) for i in np.flatnonzero(g_zero & h_zero))
    gamma = tuple(int(i) for i in np.flatnonzero(~g_zero & h_zero))
    if len(alpha) + len(beta) + len(gamma) != p.m_comp:
        raise InfeasiblePointError("complementarity violated beyond tolerance")
    if p.F_in.shape[0]:
        act = tuple(int(i) for i in np.flatnonzero(np.abs(p.F_in @ v + p.f_in) <= tol))
    else:
        act = ()
    return ActiveSets(alpha=alpha, beta=beta, gamma=gamma, inequalities=act)


def certificate_lp(p: MpccProblem, v, regime: str = "s", beta_pattern=None,
                   active: ActiveSets | None = None) -> StationarityCertificate | None:
    """Multiplier-existence LP for a stationarity system at feasible v.

    regime "s": biactive multipliers on both sides nonnegative.
    regime "global": every complementarity multiplier nonnegative.
    regime "m": one branch of the disjunctive biactive condition, given by
    `beta_pattern`, a sequence over the biactive set with entries in
    {"both", "g_zero", "h_zero"}.
    """
    v = np.asarray(v, dtype=float)
    act = active if active is not None else active_sets(p, v)
    alpha, beta, gamma = list(act.alpha), list(act.beta), list(act.gamma)
    if regime == "m":
        if beta_pattern is None or len(beta_pattern) != len(beta):
            raise ValueError("m-regime needs one branch label per biactive index")
    elif regime not in ("s", "global"):
        raise ValueError(f"unknown regime {regime!r}")

    act_in = list(act.inequalities)
    cols = []          # (matrix column block, sign) sign: +1 >=0, 0 free
    col_meta = []      # (name, indices)

    def add(mat, signs, name, idxs):
        cols.append((mat, signs))
        col_meta.append((name, idxs))

    if act_in:
        add(p.F_in[act_in].T, ["+"] * len(act_in), "eta", act_in)
    m_eq = p.F_eq.shape[0]
    if m_eq:
        add(p.F_eq.T, ["0"] * m_eq, "mu", list(range(m_eq)))
    if alpha:
        sign = "+" if regime == "global" else "0"
        add(-p.G[alpha].T, [sign] * len(alpha), "nu_G", alpha)
    if gamma:
        sign = "+" if regime == "global" else "0"
        add(-p.H[gamma].T, [sign] * len(gamma), "nu_H", gamma)
    for pos, i in enumerate(beta):
        g_sign = h_sign = "+"
        if regime == "m":
            branch = beta_pattern[pos]
            if branch == "g_zero":
                g_sign = None  # variable dropped: nu_G[i] = 0
                h_sign = "0"
            elif branch == "h_zero":
                h_sign = None
                g_sign = "0"
            elif branch != "both":
                raise ValueError(f"unknown branch label {branch!r}")
        if g_sign is not None:
            add(-p.G[[i]].T, [g_sign], "nu_G", [i])
        if h_sign is not None:
            add(-p.H[[i]].T, [h_sign], "nu_H", [i])

    if not cols:
        grad = p.gradient(v)
        if float(np.abs(grad).max() if grad.size else 0.0) <= 1e-7:
            return StationarityCertificate(kind="mpcc", eta=np.zeros(p.F_in.shape[0]),
                                           mu=np.zeros(0), nu_G=np.zeros(p.m_comp),
                                           nu_H=np.zeros(p.m_comp))
        return None

    A_eq = np.hstack([m for m, _ in cols])
    b_eq = p.gradient(v)  # A_eq mult + grad = 0
    signs = [s for _, ss in cols for s in ss]
    nonneg = [j for j, s in enumerate(signs) if s == "+"]
    A_in = -np.eye(A_eq.shape[1])[nonneg] if nonneg else None
    b_in = np.zeros(len(nonneg)) if nonneg else None
    feas = lp_feasible(A_eq=A_eq, b_eq=b_eq, A_in=A_in, b_in=b_in)
    if not feas.feasible:
        return None
    mult = feas.point
    cert = StationarityCertificate(kind="mpcc", eta=np.zeros(p.F_in.shape[0]),
                                   mu=np.zeros(m_eq), nu_G=np.zeros(p.m_comp),
                                   nu_H=np.zeros(p.m_comp))
    pos = 0
    for name, idxs in col_meta:
        chunk = mult[pos:pos + len(idxs)]
        pos += len(idxs)
        if name == "eta":
            cert.eta[idxs] = chunk
        elif name == "mu":
            cert.mu = chunk
        elif name == "nu_G":
            cert.nu_G[idxs] = chunk
        else:
            cert.nu_H[idxs] = chunk
    return cert


def is_m_stationary(p: MpccProblem, v) -> tuple[StationarityCertificate, tuple] | None:
    """Try every branch of the disjunctive biactive condition (small beta only)."""
    act = active_sets(p, v)
    if len(act.beta) > MSTAT_BETA_LIMIT:
        raise SizeLimitError(f"{len(act.beta)} biactive indices exceed the "
                             f"M-stationarity branch cap {MSTAT_BETA_LIMIT}")
    for pattern in itertools.product(("both", "g_zero", "h_zero"),
                                     repeat=len(act.beta)):
        cert = certificate_lp(p, v, regime="m", beta_pattern=pattern, active=act)
        if cert is not None:
            return cert, pattern
    return None


def verify_certificate(p: MpccProblem, v, cert: StationarityCertificate,
                       regime: str = "s", tol: float = TAU_ACT) -> bool:
    """Check an MPCC-multiplier certificate against the stationarity system."""
    v = np.asarray(v, dtype=float)
    act = active_sets(p, v)
    resid = p.gradient(v)
    if p.F_in.shape[0]:
        resid = resid + p.F_in.T @ cert.eta
    if p.F_eq.shape[0]:
        resid = resid + p.F_eq.T @ cert.mu
    resid = resid - p.G.T @ cert.nu_G - p.H.T @ cert.nu_H
    scale = 1.0 + float(np.abs(p.gradient(v)).max())
    if float(np.abs(resid).max() if resid.size else 0.0) > 1e-7 * scale:
        return False
    off_active = np.setdiff1d(np.arange(p.F_in.shape[0]), act.inequalities)
    if off_active.size and float(np.abs(cert.eta[off_active]).max()) > tol:
        return False
    if len(act.inequalities) and float(cert.eta[list(act.inequalities)].min()) < -tol:
        return False
    if act.gamma and float(np.abs(cert.nu_G[list(act.gamma)]).max()) > tol:
        return False
    if act.alpha and float(np.abs(cert.nu_H[list(act.alpha)]).max()) > tol:
        return False
    beta = list(act.beta)
    if regime == "s" and beta:
        if float(cert.nu_G[beta].min()) < -tol or float(cert.nu_H[beta].min()) < -tol:
            return False
    if regime == "m":
        for i in beta:
            both = cert.nu_G[i] >= -tol and cert.nu_H[i] >= -tol
            prod = abs(cert.nu_G[i] * cert.nu_H[i]) <= tol
            if not (both or prod):
                return False
    if regime == "global":
        if float(cert.nu_G.min(initial=0.0)) < -tol or float(cert.nu_H.min(initial=0.0)) < -tol:
            return False
        if beta and (float(cert.nu_G[beta].min()) < -tol or float(cert.nu_H[beta].min()) < -tol):
            return False
    return True


def check_classical_kkt(p: MpccProblem, v, cert: StationarityCertificate,
                        tol: float = TAU_ACT) -> bool:
    """Classical KKT conditions with the scalar orthogonality multiplier xi."""
    if cert.kind != "classical":
        raise ValueError("expected a classical-KKT certificate")
    v = np.asarray(v, dtype=float)
    act = active_sets(p, v)
    Gv = p.G @ v + p.g
    Hv = p.H @ v + p.h
    resid = p.gradient(v)
    if p.F_in.shape[0]:
        resid = resid + p.F_in.T @ cert.eta
    if p.F_eq.shape[0]:
        resid = resid + p.F_eq.T @ cert.mu
    resid = resid - p.G.T @ cert.nu_G - p.H.T @ cert.nu_H
    resid = resid + cert.xi * (p.G.T @ Hv + p.H.T @ Gv)
    scale = 1.0 + float(np.abs(p.gradient(v)).max())
    if float(np.abs(resid).max() if resid.size else 0.0) > 1e-7 * scale:
        return False
    off_active = np.setdiff1d(np.arange(p.F_in.shape[0]), act.inequalities)
    if off_active.size and float(np.abs(cert.eta[off_active]).max()) > tol:
        return False
    if len(act.inequalities) and float(cert.eta[list(act.inequalities)].min()) < -tol:
        return False
    gamma, alpha, beta = list(act.gamma), list(act.alpha), list(act.beta)
    if gamma and float(np.abs(cert.nu_G[gamma]).max()) > tol:
        return False
    if alpha and float(np.abs(cert.nu_H[alpha]).max()) > tol:
        return False
    if (alpha + beta) and float(cert.nu_G[alpha + beta].min()) < -tol:
        return False
    if (beta + gamma) and float(cert.nu_H[beta + gamma].min()) < -tol:
        return False
    return True


def convert_multipliers(p: MpccProblem, v,
                        cert: StationarityCertificate) -> StationarityCertificate:
    """Classical KKT multipliers -> MPCC multipliers at the same point."""
    if cert.kind != "classical":
        raise ValueError("conversion starts from a classical-KKT certificate")
    v = np.asarray(v, dtype=float)
    Gv = p.G @ v + p.g
    Hv = p.H @ v + p.h
    return StationarityCertificate(kind="mpcc", eta=cert.eta.copy(),
                                   mu=cert.mu.copy(),
                                   nu_G=cert.nu_G - cert.xi * Hv,
                                   nu_H=cert.nu_H - cert.xi * Gv)


def to_classical(p: MpccProblem, v, cert: StationarityCertificate,
                 xi: float | None = None) -> StationarityCertificate:
    """MPCC multipliers -> classical KKT multipliers, choosing xi large enough
    to push the singularly-active multipliers back to nonnegativity."""
    if cert.kind != "mpcc":
        raise ValueError("expected MPCC multipliers")
    v = np.asarray(v, dtype=float)
    Gv = p.G @ v + p.g
    Hv = p.H @ v + p.h
    if xi is None:
        xi = 0.0
        for i in range(p.m_comp):
            if cert.nu_G[i] < 0 and Hv[i] > TAU_ACT:
                xi = max(xi, -cert.nu_G[i] / Hv[i])
            if cert.nu_H[i] < 0 and Gv[i] > TAU_ACT:
                xi = max(xi, -cert.nu_H[i] / Gv[i])
    return StationarityCertificate(kind="classical", eta=cert.eta.copy(),
                                   mu=cert.mu.copy(),
                                   nu_G=cert.nu_G + xi * Hv,
                                   nu_H=cert.nu_H + xi * Gv, xi=float(xi))


def check_global_sufficient(p: MpccProblem, v, cert: StationarityCertificate,
                            tol: float = TAU_ACT) -> bool:
    """Sign test on a verified S-certificate: every complementarity multiplier
    nonnegative makes the point globally optimal (convex cost, affine rows)."""
    if not verify_certificate(p, v, cert, regime="s", tol=tol):
        return False
    lo_G = float(cert.nu_G.min()) if cert.nu_G.size else 0.0
    lo_H = float(cert.nu_H.min()) if cert.nu_H.size else 0.0
    return lo_G >= -tol and lo_H >= -tol


def check_mssosc(p: MpccProblem, v) -> bool:
    """Strong second-order condition over the piecewise-polyhedral critical cone.

    With a constant PSD Hessian the condition fails exactly when some branch
    cone meets the Hessian nullspace nontrivially; each branch assigns every
    biactive index to its G-side-zero or H-side-zero piece.
    """
    v = np.asarray(v, dtype=float)
    act = active_sets(p, v)
    if len(act.beta) > MSSOSC_BETA_LIMIT:
        raise SizeLimitError(f"{len(act.beta)} biactive indices exceed the "
                             f"branch cap {MSSOSC_BETA_LIMIT}")
    Z = null_space(p.P, rcond=1e-12)
    if Z.shape[1] == 0:
        return True
    grad = p.gradient(v)
    alpha, gamma, beta = list(act.alpha), list(act.gamma), list(act.beta)
    act_in = list(act.inequalities)

    base_eq = [p.F_eq @ Z]
    if alpha:
        base_eq.append(p.G[alpha] @ Z)
    if gamma:
        base_eq.append(p.H[gamma] @ Z)
    base_in = [np.atleast_2d(grad @ Z)]  # grad'd <= 0: descent or flat directions
    if act_in:
        base_in.append(p.F_in[act_in] @ Z)

    for branch in itertools.product((0, 1), repeat=len(beta)):
        eq_rows = list(base_eq)
        in_rows = list(base_in)
        for choice, i in zip(branch, beta):
            if choice == 0:  # G-side zero, H-side >= 0
                eq_rows.append(p.G[[i]] @ Z)
                in_rows.append(-p.H[[i]] @ Z)
            else:
                eq_rows.append(p.H[[i]] @ Z)
                in_rows.append(-p.G[[i]] @ Z)
        A_eq = np.vstack(eq_rows) if eq_rows else None
        A_in = np.vstack(in_rows) if in_rows else None
        dim = Z.shape[1]
        for j in range(dim):
            e = np.zeros(dim)
            e[j] = 1.0
            for s in (1.0, -1.0):
                _, val, _ = lp_maximize(s * e,
                                        A_eq=A_eq, b_eq=np.zeros(A_eq.shape[0]) if A_eq is not None else None,
                                        A_in=A_in, b_in=np.zeros(A_in.shape[0]) if A_in is not None else None,
                                        box=1.0)
                if val is not None and val > 1e-7:
                    return False
    return True


@dataclass
class InputTrajectoryResult:
    verdict: str  # "locally_optimal" | "not_locally_optimal" | "size_limit"
    witness_w: np.ndarray | None = None
    faces_checked: int = 0
    path: str = "sweep"  # "singleton" | "global" | "sweep"

    @property
    def locally_optimal(self) -> bool:
        return self.verdict == "locally_optimal"


def _model_blocks(p: MpccProblem) -> tuple[LcpBlock, ...]:
    model = p.model
    if isinstance(model, SparseLcModel):
        model = model.to_compact()
    if not isinstance(model, LcModel) or model.blocks is None:
        raise HyocError("face sweep needs a block-structured complementarity model")
    return model.blocks


def _block_face_points(block: LcpBlock, x, u, w_block) -> list[np.ndarray]:
    """Representative point per face of one stage-block solution set.

    Faces are cut by pinning subsets of the active-row coordinates to zero;
    the representative is the barycenter of the face's vertices, which sits
    in the face's relative interior for bounded solution sets.
    """
    lcp = RankOneLcp(m=block.m, q=block.q(x, u))
    sset = solution_set(lcp, w_block)
    lhs = lcp.lhs(w_block)
    strict_rows = np.flatnonzero(lhs > TAU_ACT)  # w pinned to zero on these
    free = [i for i in range(lcp.n) if i not in set(strict_rows.tolist())]
    verts = vertices(sset)
    if len(verts) == 0:
        raise HyocError("solution set has no vertices; unbounded face sweep unsupported")
    if len(verts) == 1:
        return [verts[0]]
    reps: list[np.ndarray] = []
    seen_patterns = set()
    for size in range(0, len(free) + 1):
        for S in itertools.combinations(free, size):
            mask = np.ones(len(verts), dtype=bool)
            for i in S:
                mask &= verts[:, i] <= 1e-9
            if not mask.any():
                continue
            bary = verts[mask].mean(axis=0)
            pattern = tuple(bary > TAU_ACT)
            if pattern in seen_patterns:
                continue
            seen_patterns.add(pattern)
            reps.append(bary)
    return reps


def check_input_trajectory(p: MpccProblem, v) -> InputTrajectoryResult:
    """Decide whether the (u, x) part of v is a locally optimal input trajectory.

    The input trajectory is locally optimal iff the point is S-stationary for
    every complementarity trajectory consistent with (u, x); the sweep visits
    one representative per face of the per-stage solution polytopes.  Fast
    paths: all-singleton solution sets need only the given point, and a
    certificate with all-nonnegative multipliers settles global optimality.
    """
    v = np.asarray(v, dtype=float)
    if not p.is_feasible(v):
        raise InfeasiblePointError("trajectory point is not feasible")
    u, x, w = p.split(v)
    blocks = _model_blocks(p)

    glob = certificate_lp(p, v, regime="global")
    if glob is not None:
        return InputTrajectoryResult(verdict="locally_optimal", path="global",
                                     faces_checked=0)

    stage_reps: list[list[np.ndarray]] = []
    total = 1
    all_singleton = True
    for k in range(p.N):
        reps_per_block = []
        for b in blocks:
            reps = _block_face_points(b, x[k], u[k], w[k][list(b.indices)])
            reps_per_block.append(reps)
            if len(reps) > 1:
                all_singleton = False
        combos = 1
        for reps in reps_per_block:
            combos *= len(reps)
        total *= combos
        if total > FACE_LIMIT:
            return InputTrajectoryResult(verdict="size_limit", faces_checked=0)
        stage_reps.append(reps_per_block)

    if all_singleton:
        cert = certificate_lp(p, v, regime="s")
        verdict = "locally_optimal" if cert is not None else "not_locally_optimal"
        return InputTrajectoryResult(verdict=verdict,
                                     witness_w=None if cert else w.copy(),
                                     faces_checked=1, path="singleton")

    checked = 0
    witness = None
    for combo in itertools.product(*[itertools.product(*reps_per_block)
                                     for reps_per_block in stage_reps]):
        w_rep = np.zeros_like(w)
        for k in range(p.N):
            for b, rep in zip(blocks, combo[k]):
                w_rep[k][list(b.indices)] = rep
        aux = None
        if p.n_aux:
            aux = np.stack([v[p.aux_slice(k)] for k in range(p.N)])
        v_rep = p.join(u, x, w_rep, aux)
        checked += 1
        if certificate_lp(p, v_rep, regime="s") is None:
            witness = w_rep
            break
    if witness is not None:
        return InputTrajectoryResult(verdict="not_locally_optimal",
                                     witness_w=witness, faces_checked=checked)
    return InputTrajectoryResult(verdict="locally_optimal", faces_checked=checked)
