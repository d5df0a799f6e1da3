"""Randomized benchmark harness: local branch solver vs the enumeration oracle.

Instances are (system, horizon, initial state) triples; each configured
method produces one record with wall time measured around the solver call
only (model building and problem assembly excluded; one warm-up solve per
method is discarded).  All randomness flows from the single config seed
through named SeedSequence splits:

    (seed, 0, i)        system i generation (pieces counts, then the draw)
    (seed, 1, i, N)     initial states for system i at horizon N
    (seed, 2)           multistart branch draws

Outputs are CSV rows `system,N,x0,method,status,time_s,objective,
s_stationary,global_cert` plus performance-profile and objective-gap
summaries over the records.
"""

from __future__ import annotations

import io
import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import HyocError, OutOfDomainError, SizeLimitError
from .mpcc import QuadraticStageCost, assemble
from .pwa import PwaDcSystem, eval_dynamics, random_dc_system
from .solve import solve_global_oracle, solve_local_multistart
from .transform import build_compact, build_sparse, default_supports

OK_STATUSES = ("s_stationary", "global_optimal")
DEFAULT_METHODS = ("local_sparse", "local_compact", "oracle")


class MissingRecordsError(HyocError):
    pass


@dataclass
class BenchConfig:
    """Desk-scale defaults: small systems, short horizons, exact oracle."""

    n_systems: int = 10
    dims: tuple = ((1, 1), (1, 1), (1, 1), (1, 1), (1, 1),
                   (1, 1), (1, 1), (1, 1), (2, 1), (2, 1))
    pieces_range: tuple = (2, 3)
    pieces_range_multi: tuple = (2, 2)  # systems with n_x >= 2
    horizons: tuple = (2, 3, 4)
    n_initial_states: int = 20
    seed: int = 0
    methods: tuple = DEFAULT_METHODS
    time_limit_s: float = 20.0
    eta: float = 0.5
    zeta: float = 0.5
    starts: int = 1
    systems: list = None  # explicit PwaDcSystem list overrides generation

    def validate(self) -> None:
        if self.n_systems < 1 or self.n_initial_states < 1 or not self.horizons:
            raise ValueError("all instance counts must be >= 1")
        if self.pieces_range[0] < 1 or self.pieces_range[1] < self.pieces_range[0]:
            raise ValueError("invalid pieces range")
        unknown = set(self.methods) - set(DEFAULT_METHODS)
        if unknown:
            raise ValueError(f"unknown methods: {sorted(unknown)}")
        if "oracle" in self.methods and self.systems is None:
            hi = max(self.pieces_range[1], self.pieces_range_multi[1])
            if (hi * hi) ** max(self.horizons) > 10 ** 6:
                raise ValueError("pieces^N exceeds the oracle sequence cap")

    def to_dict(self) -> dict:
        out = {"n_systems": self.n_systems, "dims": [list(d) for d in self.dims],
               "pieces_range": list(self.pieces_range),
               "pieces_range_multi": list(self.pieces_range_multi),
               "horizons": list(self.horizons),
               "n_initial_states": self.n_initial_states, "seed": self.seed,
               "methods": list(self.methods), "time_limit_s": self.time_limit_s,
               "eta": self.eta, "zeta": self.zeta, "starts": self.starts}
        if self.systems is not None:
            out["systems"] = [s.to_dict() for s in self.systems]
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "BenchConfig":
        kwargs = dict(d)
        if "dims" in kwargs:
            kwargs["dims"] = tuple(tuple(x) for x in kwargs["dims"])
        for key in ("pieces_range", "pieces_range_multi", "horizons", "methods"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        if kwargs.get("systems") is not None:
            kwargs["systems"] = [PwaDcSystem.from_dict(s) for s in kwargs["systems"]]
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


@dataclass
class BenchRecord:
    system: str
    N: int
    x0: np.ndarray
    method: str
    status: str
    time_s: float
    objective: float
    s_stationary: bool
    global_cert: bool

    @property
    def ok(self) -> bool:
        return self.status in OK_STATUSES

    def instance_key(self) -> tuple:
        return (self.system, self.N, ";".join(repr(float(t)) for t in self.x0))


CSV_HEADER = ["system", "N", "x0", "method", "status", "time_s", "objective",
              "s_stationary", "global_cert"]


def emit_csv(records: list[BenchRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(CSV_HEADER)
    for rec in records:
        writer.writerow([rec.system, rec.N,
                         ";".join(repr(float(t)) for t in rec.x0),
                         rec.method, rec.status, repr(rec.time_s),
                         repr(rec.objective), str(rec.s_stationary).lower(),
                         str(rec.global_cert).lower()])
    return buf.getvalue()


def parse_csv(text: str) -> list[BenchRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != CSV_HEADER:
        raise ValueError("unrecognized records header")
    out = []
    for row in rows[1:]:
        if not row:
            continue
        out.append(BenchRecord(
            system=row[0], N=int(row[1]),
            x0=np.array([float(t) for t in row[2].split(";")]),
            method=row[3], status=row[4], time_s=float(row[5]),
            objective=float(row[6]), s_stationary=row[7] == "true",
            global_cert=row[8] == "true"))
    return out


def _child_seed(*key) -> int:
    return int(np.random.SeedSequence(list(key)).generate_state(1)[0])


def _make_systems(cfg: BenchConfig) -> list[PwaDcSystem]:
    if cfg.systems is not None:
        return list(cfg.systems)
    systems = []
    for i in range(cfg.n_systems):
        n_x, n_u = cfg.dims[i % len(cfg.dims)]
        lo, hi = cfg.pieces_range if n_x == 1 else cfg.pieces_range_multi
        rng = np.random.default_rng(_child_seed(cfg.seed, 0, i))
        pieces_y = int(rng.integers(lo, hi + 1))
        pieces_z = int(rng.integers(lo, hi + 1))
        systems.append(random_dc_system(n_x, n_u, pieces_y, pieces_z,
                                        seed=_child_seed(cfg.seed, 0, i, 1)))
    return systems


def _feasible_x0(sys: PwaDcSystem, N: int, rng: np.random.Generator,
                 max_draws: int = 50):
    """Initial state with a witness input sequence that stays in the domain."""
    for _ in range(max_draws):
        point = sys.domain.sample(rng, 1)[0]
        x0 = point[:sys.n_x]
        x = x0.copy()
        feasible = True
        for _k in range(N):
            found = False
            for u in [np.zeros(sys.n_u)] + [rng.uniform(-1, 1, sys.n_u) for _ in range(8)]:
                if not sys.domain.contains(np.concatenate([x, u])):
                    continue
                try:
                    x_next = eval_dynamics(sys, x, u)
                except OutOfDomainError:
                    continue
                x, found = x_next, True
                break
            if not found:
                feasible = False
                break
        if feasible:
            return x0
    return None


def _run_method(method: str, sys, models, cost, x0, N, cfg) -> tuple:
    """One solve; returns (report-ish status, objective, s_flag, g_flag, seconds)."""
    if method == "oracle":
        t0 = time.monotonic()
        rep = solve_global_oracle(sys, cost, x0, N, include_domain=True,
                                  time_limit=cfg.time_limit_s)
        dt = time.monotonic() - t0
        return rep.status, rep.objective, False, rep.status == "global_optimal", dt, rep
    model = models["sparse" if method == "local_sparse" else "compact"]
    p = assemble(model, cost, x0, N, stage_constraints=sys.domain)
    t0 = time.monotonic()
    rep = solve_local_multistart(p, starts=cfg.starts, seed=_child_seed(cfg.seed, 2),
                                 compute_mssosc=False)
    dt = time.monotonic() - t0
    return rep.status, rep.objective, rep.s_stationary, rep.global_certificate, dt, rep


def _verified_objective(sys, cost, x0, N, rep) -> bool:
    """Re-simulate the returned inputs through the original dynamics."""
    if rep.u is None:
        return False
    try:
        x = np.asarray(x0, dtype=float)
        total = 0.0
        for k in range(N):
            total += cost.stage_value(k, x, rep.u[k])
            x = eval_dynamics(sys, x, rep.u[k])
        total += cost.terminal_value(x)
    except HyocError:
        return False
    return abs(total - rep.objective) <= 1e-7 * (1.0 + abs(total))


def run_bench(cfg: BenchConfig, progress=None) -> list[BenchRecord]:
    """All (system, horizon, x0, method) records in deterministic order."""
    cfg.validate()
    systems = _make_systems(cfg)
    records: list[BenchRecord] = []
    warmed: set[str] = set()
    for i, sys in enumerate(systems):
        pair = default_supports(sys, eta=cfg.eta, zeta=cfg.zeta)
        models = {"sparse": build_sparse(sys, pair),
                  "compact": build_compact(sys, pair)}
        name = f"sys{i:02d}"
        for N in cfg.horizons:
            cost = QuadraticStageCost.tracking(sys.n_x, sys.n_u, N)
            rng_x0 = np.random.default_rng(_child_seed(cfg.seed, 1, i, N))
            for j in range(cfg.n_initial_states):
                x0 = _feasible_x0(sys, N, rng_x0)
                if x0 is None:
                    continue  # no witness trajectory found; skip the draw
                for method in cfg.methods:
                    rec = _one_record(name, sys, models, cost, x0, N, method,
                                      cfg, warmed)
                    records.append(rec)
                    if progress is not None:
                        progress(rec)
    return records


def _one_record(name, sys, models, cost, x0, N, method, cfg, warmed):
    try:
        if method not in warmed:
            _run_method(method, sys, models, cost, x0, N, cfg)  # warm-up, discarded
            warmed.add(method)
        status, objective, s_flag, g_flag, dt, rep = _run_method(
            method, sys, models, cost, x0, N, cfg)
        if status in OK_STATUSES and not _verified_objective(sys, cost, x0, N, rep):
            status, objective = "error", float("nan")
    except SizeLimitError:
        status, objective, s_flag, g_flag, dt = "size_limit", float("nan"), False, False, 0.0
    except HyocError as err:
        status, objective, s_flag, g_flag, dt = "error", float("nan"), False, False, 0.0
        _ = err
    return BenchRecord(system=name, N=N, x0=np.asarray(x0, dtype=float),
                       method=method, status=status, time_s=max(dt, 1e-9),
                       objective=objective if objective is not None else float("nan"),
                       s_stationary=bool(s_flag), global_cert=bool(g_flag))


@dataclass
class ProfileTable:
    taus: np.ndarray
    rho: dict  # method -> array aligned with taus
    n_instances: int

    def rows(self) -> list[dict]:
        out = []
        for i, tau in enumerate(self.taus):
            row = {"tau": float(tau)}
            row.update({m: float(self.rho[m][i]) for m in self.rho})
            out.append(row)
        return out


def performance_profile(records: list[BenchRecord],
                        methods: list[str] | None = None) -> ProfileTable:
    """Fraction of instances each method solves within factor tau of the best.

    Failed records count as infinite time; instances where every method
    failed are dropped.  Sampled at every finite ratio, so the table is the
    full step function.
    """
    if methods is None:
        methods = sorted({r.method for r in records})
    by_instance: dict[tuple, dict] = {}
    for rec in records:
        by_instance.setdefault(rec.instance_key(), {})[rec.method] = rec
    ratios: dict[str, list[float]] = {m: [] for m in methods}
    n_used = 0
    for key, recs in sorted(by_instance.items()):
        missing = [m for m in methods if m not in recs]
        if missing:
            raise MissingRecordsError(f"instance {key} lacks methods {missing}")
        times = {m: (recs[m].time_s if recs[m].ok else np.inf) for m in methods}
        t_min = min(times.values())
        if not np.isfinite(t_min):
            continue
        n_used += 1
        for m in methods:
            ratios[m].append(times[m] / t_min)
    if n_used == 0:
        raise MissingRecordsError("no instance has a successful record")
    finite = sorted({r for rs in ratios.values() for r in rs if np.isfinite(r)})
    taus = np.array(finite if finite else [1.0])
    rho = {m: np.array([np.mean(np.asarray(ratios[m]) <= tau) for tau in taus])
           for m in methods}
    return ProfileTable(taus=taus, rho=rho, n_instances=n_used)


@dataclass
class GapSummary:
    method: str
    n_compared: int
    fraction_global: float
    fraction_within_10pct: float
    max_gap: float
    n_absolute_flagged: int
    gaps: list = field(default_factory=list)


def gap_stats(records: list[BenchRecord], global_tol: float = 1e-6) -> dict:
    """Objective gaps of each local method against the oracle, per instance.

    gap = (J_method - J_oracle) / |J_oracle|; when |J_oracle| < 1e-12 the
    absolute difference is used instead and the instance is flagged.
    """
    by_instance: dict[tuple, dict] = {}
    for rec in records:
        by_instance.setdefault(rec.instance_key(), {})[rec.method] = rec
    methods = sorted({r.method for r in records if r.method != "oracle"})
    out = {}
    for m in methods:
        gaps, flagged = [], 0
        for recs in by_instance.values():
            oracle = recs.get("oracle")
            local = recs.get(m)
            if oracle is None or local is None or not oracle.ok or not local.ok:
                continue
            diff = local.objective - oracle.objective
            if abs(oracle.objective) < 1e-12:
                gaps.append(diff)
                flagged += 1
            else:
                gaps.append(diff / abs(oracle.objective))
        if not gaps:
            out[m] = GapSummary(method=m, n_compared=0, fraction_global=0.0,
                                fraction_within_10pct=0.0, max_gap=float("nan"),
                                n_absolute_flagged=0)
            continue
        arr = np.array(gaps)
        out[m] = GapSummary(method=m, n_compared=len(gaps),
                            fraction_global=float(np.mean(arr <= global_tol)),
                            fraction_within_10pct=float(np.mean(arr <= 0.10 + 1e-12)),
                            max_gap=float(arr.max()),
                            n_absolute_flagged=flagged, gaps=arr.tolist())
    return out
