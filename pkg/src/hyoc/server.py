"""FastAPI service wrapping the toolkit.

Every CLI subcommand maps onto one endpoint; error responses carry a
machine-readable code ("bad_input" for malformed payloads, "internal" for
unexpected failures).  Long computations (solve, bench) run synchronously
in this process, which is acceptable for a compute service whose clients
wait for results.
"""

from __future__ import annotations

import math

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse

from . import __version__, schemas
from .bench import BenchConfig, emit_csv, gap_stats, parse_csv, performance_profile, run_bench
from .errors import HyocError
from .lc import LcModel, simulate as lc_simulate, verify_assumptions, with_blocks
from .mpcc import (
    InfeasiblePointError,
    QuadraticStageCost,
    assemble,
    certificate_lp,
    check_classical_kkt,
    check_input_trajectory,
    check_mssosc,
    is_m_stationary,
    to_classical,
)
from .pwa import PwaDcSystem
from .pwa import simulate as pwa_simulate
from .solve import solve_global_oracle, solve_local_multistart, sparse_stage_aux
from .transform import SparseLcModel, build_compact, build_sparse, default_supports

app = FastAPI(title="hyoc", version=__version__,
              description="Optimal control for hybrid systems in "
                          "linear-complementarity form")


class ApiError(Exception):
    def __init__(self, code: str, message: str, status_code: int = 422):
        self.code = code
        self.message = message
        self.status_code = status_code


@app.exception_handler(ApiError)
async def _api_error(_, exc: ApiError):
    return JSONResponse(status_code=exc.status_code,
                        content={"code": exc.code, "message": exc.message})


@app.exception_handler(HyocError)
async def _hyoc_error(_, exc: HyocError):
    return JSONResponse(status_code=422,
                        content={"code": "bad_input", "message": str(exc)})


@app.exception_handler(ValueError)
async def _value_error(_, exc: ValueError):
    return JSONResponse(status_code=422,
                        content={"code": "bad_input", "message": str(exc)})


def _load_model(payload):
    data = payload.model_dump()
    kind = data.pop("kind")
    if kind == "pwa_dc":
        return PwaDcSystem.from_dict(data)
    if kind == "lc":
        model = LcModel.from_dict(data)
        return model if model.blocks is not None else with_blocks(model)
    return SparseLcModel.from_dict(data)


def _dump_model(model) -> dict:
    if isinstance(model, PwaDcSystem):
        return {"kind": "pwa_dc", **model.to_dict()}
    if isinstance(model, LcModel):
        return {"kind": "lc", **model.to_dict()}
    return {"kind": "sparse_lc", **model.to_dict()}


def _cost_from_schema(cost: schemas.CostSchema | None, n_x: int, n_u: int,
                      N: int) -> QuadraticStageCost:
    if cost is None:
        return QuadraticStageCost.tracking(n_x, n_u, N)
    Q = np.array(cost.Q, dtype=float)
    R = np.array(cost.R, dtype=float)
    return QuadraticStageCost(
        Q=np.broadcast_to(Q, (N, n_x, n_x)).copy(),
        R=np.broadcast_to(R, (N, n_u, n_u)).copy(),
        q_lin=np.broadcast_to(np.array(cost.q or [0.0] * n_x), (N, n_x)).copy(),
        r_lin=np.broadcast_to(np.array(cost.r or [0.0] * n_u), (N, n_u)).copy(),
        offsets=np.zeros(N),
        Q_N=np.array(cost.Q_N, dtype=float) if cost.Q_N is not None else Q.copy(),
        q_N=np.array(cost.q_N or [0.0] * n_x, dtype=float))


def _clean(value):
    """NaN-free JSON payloads: NaN/inf become None."""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_clean(v) for v in value]
    return value


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__}


@app.post("/transform", response_model=schemas.TransformResponse)
def transform(req: schemas.TransformRequest):
    sys = PwaDcSystem.from_dict(req.system.model_dump())
    supports = default_supports(sys, eta=req.eta, zeta=req.zeta)
    if req.form == "compact":
        model = build_compact(sys, supports, Q_y=req.q_y, Q_z=req.q_z, verify=False)
    else:
        model = build_sparse(sys, supports, Q_y=req.q_y, Q_z=req.q_z, verify=False)
    return {"model": _dump_model(model)}


@app.post("/verify", response_model=schemas.VerifyResponse)
def verify(model: schemas.LcModelSchema):
    lc = LcModel.from_dict(model.model_dump())
    _, report = verify_assumptions(lc)
    return {"report": {"wellposedness": report.a1.status,
                       "block_structure": "holds" if report.a2.ok else "fails",
                       "nontriviality": report.a3.status,
                       "details": report.details
                       + ([report.a2.reason] if report.a2.reason else [])},
            "all_hold": report.all_hold}


@app.post("/simulate", response_model=schemas.SimulateResponse)
def simulate(req: schemas.SimulateRequest):
    model = _load_model(req.model)
    inputs = [np.asarray(u, dtype=float) for u in req.inputs]
    if isinstance(model, PwaDcSystem):
        states = pwa_simulate(model, req.x0, inputs)
        return {"states": states.tolist(), "complementarity": None}
    if isinstance(model, SparseLcModel):
        xs, ws = [np.asarray(req.x0, dtype=float)], []
        for u in inputs:
            x_plus, w = model.step(xs[-1], u)
            xs.append(x_plus)
            ws.append(w)
        return {"states": np.array(xs).tolist(),
                "complementarity": np.array(ws).tolist() if ws else []}
    states, ws = lc_simulate(model, req.x0, inputs)
    return {"states": states.tolist(), "complementarity": ws.tolist()}


@app.post("/solve", response_model=schemas.SolveResponse)
def solve(req: schemas.SolveRequest):
    model = _load_model(req.model)
    if req.method == "oracle":
        sys = model.sys if isinstance(model, SparseLcModel) else model
        if not isinstance(sys, PwaDcSystem):
            raise ApiError("bad_input", "the enumeration oracle needs the "
                                        "piecewise-affine system, not a bare LC model")
        cost = _cost_from_schema(req.cost, sys.n_x, sys.n_u, req.N)
        report = solve_global_oracle(sys, cost, req.x0, req.N,
                                     include_domain=True,
                                     time_limit=req.time_limit_s)
        return {"report": _clean(report.to_dict())}
    if isinstance(model, PwaDcSystem):
        raise ApiError("bad_input", "local solve expects a complementarity model; "
                                    "run /transform first")
    cost = _cost_from_schema(req.cost, model.n_x, model.n_u, req.N)
    constraints = model.domain if req.constrain_to_domain else None
    problem = assemble(model, cost, req.x0, req.N, stage_constraints=constraints)
    report = solve_local_multistart(problem, starts=req.starts, seed=req.seed)
    return {"report": _clean(report.to_dict())}


def _trajectory_point(problem, model, traj: schemas.TrajectorySchema):
    N = problem.N
    u = np.array(traj.u, dtype=float).reshape(N, problem.n_u)
    x0 = np.asarray(traj.x0, dtype=float)
    if traj.x is None or traj.w is None:
        if isinstance(model, SparseLcModel):
            xs, ws = [x0], []
            for k in range(N):
                x_plus, w = model.step(xs[-1], u[k])
                xs.append(x_plus)
                ws.append(w)
            auxs = [sparse_stage_aux(model, xs[k], u[k], ws[k]) for k in range(N)]
            return problem.join(u, np.array(xs), np.array(ws), np.array(auxs))
        xs, ws = lc_simulate(model, x0, u)
        return problem.join(u, xs, ws)
    xs = np.vstack([x0[None, :], np.array(traj.x, dtype=float)])
    ws = np.array(traj.w, dtype=float).reshape(N, problem.n_w)
    aux = None
    if problem.n_aux:
        aux = np.array([sparse_stage_aux(model, xs[k], u[k], ws[k]) for k in range(N)])
    return problem.join(u, xs, ws, aux)


@app.post("/check", response_model=schemas.CheckResponse)
def check(req: schemas.CheckRequest):
    model = _load_model(req.model)
    if isinstance(model, PwaDcSystem):
        raise ApiError("bad_input", "certificate checks run on complementarity "
                                    "models; run /transform first")
    N = len(req.trajectory.u)
    cost = _cost_from_schema(req.cost, model.n_x, model.n_u, N)
    constraints = model.domain if req.constrain_to_domain else None
    problem = assemble(model, cost, req.trajectory.x0, N,
                       stage_constraints=constraints)
    try:
        v = _trajectory_point(problem, model, req.trajectory)
    except HyocError as err:
        raise ApiError("bad_input", f"trajectory could not be completed: {err}")
    try:
        if req.level == "s":
            cert = certificate_lp(problem, v, regime="s")
            verdict, details = cert is not None, _cert_details(problem, cert)
        elif req.level == "global":
            cert = certificate_lp(problem, v, regime="global")
            verdict, details = cert is not None, _cert_details(problem, cert)
        elif req.level == "m":
            found = is_m_stationary(problem, v)
            verdict = found is not None
            details = _cert_details(problem, found[0]) if found else {}
            if found:
                details["branch"] = list(found[1])
        elif req.level == "kkt":
            cert = certificate_lp(problem, v, regime="s")
            if cert is None:
                verdict, details = False, {}
            else:
                classical = to_classical(problem, v, cert)
                verdict = check_classical_kkt(problem, v, classical)
                details = _cert_details(problem, classical)
        elif req.level == "mssosc":
            verdict, details = check_mssosc(problem, v), {}
        else:
            res = check_input_trajectory(problem, v)
            verdict = res.locally_optimal
            details = {"path": res.path, "faces_checked": res.faces_checked}
            if res.witness_w is not None:
                details["witness_w"] = res.witness_w.tolist()
    except InfeasiblePointError as err:
        return {"level": req.level, "verdict": False, "status": "infeasible_point",
                "objective": None, "details": {"message": str(err)}}
    return {"level": req.level, "verdict": bool(verdict), "status": "checked",
            "objective": problem.objective(v), "details": _clean(details)}


def _cert_details(problem, cert) -> dict:
    if cert is None:
        return {}
    out = {"kind": cert.kind, "eta": cert.eta.tolist(), "mu": cert.mu.tolist(),
           "nu_G": cert.nu_G.tolist(), "nu_H": cert.nu_H.tolist()}
    if cert.kind == "classical":
        out["xi"] = cert.xi
    stages = problem.stagewise(cert)
    out["stagewise"] = [{"mu": m.tolist(), "nu": n.tolist(), "lambda": l.tolist()}
                        for m, n, l in stages]
    return out


@app.post("/bench", response_model=schemas.BenchResponse)
def bench(req: schemas.BenchRequest):
    cfg = BenchConfig.from_dict(req.config) if req.config else BenchConfig()
    records = run_bench(cfg)
    failed = sum(1 for r in records if r.status == "error")
    return {"records_csv": emit_csv(records), "n_records": len(records),
            "n_failed": failed}


@app.post("/profile", response_model=schemas.ProfileResponse)
def profile(req: schemas.ProfileRequest):
    table = performance_profile(parse_csv(req.records_csv), methods=req.methods)
    return {"taus": table.taus.tolist(),
            "rho": {m: r.tolist() for m, r in table.rho.items()},
            "n_instances": table.n_instances}


@app.post("/gaps", response_model=schemas.GapsResponse)
def gaps(req: schemas.GapsRequest):
    stats = gap_stats(parse_csv(req.records_csv))
    return {"summaries": {m: {
        "method": s.method, "n_compared": s.n_compared,
        "fraction_global": s.fraction_global,
        "fraction_within_10pct": s.fraction_within_10pct,
        "max_gap": None if s.n_compared == 0 or not math.isfinite(s.max_gap) else s.max_gap,
        "n_absolute_flagged": s.n_absolute_flagged} for m, s in stats.items()}}
