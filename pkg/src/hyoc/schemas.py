"""Pydantic request/response models for the HTTP service.

Matrices travel as row-major nested lists of doubles.  Model payloads are a
tagged union on `kind`: a difference-of-convex system ("pwa_dc"), a compact
complementarity model ("lc"), or a sparse one that keeps its projection
variables ("sparse_lc", serialized through its constructor data).
"""

from __future__ import annotations

from typing import Literal, Optional, Union

from pydantic import BaseModel, Field

Matrix = list[list[float]]
Vector = list[float]


class PieceSchema(BaseModel):
    A: Matrix
    B: Matrix
    c: Vector


class MaxAffineSchema(BaseModel):
    pieces: list[PieceSchema]


class DomainSchema(BaseModel):
    H: Matrix
    k: Vector


class SystemSchema(BaseModel):
    kind: Literal["pwa_dc"] = "pwa_dc"
    n_x: int
    n_u: int
    psi: MaxAffineSchema
    phi: MaxAffineSchema
    domain: DomainSchema


class BlockSchema(BaseModel):
    indices: list[int]
    m: Vector
    C: Matrix
    D: Matrix
    e: Vector


class LcModelSchema(BaseModel):
    kind: Literal["lc"] = "lc"
    A: Matrix
    B_u: Matrix
    B_w: Matrix
    c: Vector
    E_w: Matrix
    E_x: Matrix
    E_u: Matrix
    e: Vector
    domain: DomainSchema
    blocks: Optional[list[BlockSchema]] = None


class SupportsSchema(BaseModel):
    A_psi: Matrix
    B_psi: Matrix
    c_psi: Vector
    A_phi: Matrix
    B_phi: Matrix
    c_phi: Vector
    eta: Optional[float] = None
    zeta: Optional[float] = None


class SparseModelSchema(BaseModel):
    kind: Literal["sparse_lc"] = "sparse_lc"
    system: SystemSchema
    supports: SupportsSchema
    q_y: Vector
    q_z: Vector


ModelPayload = Union[SystemSchema, LcModelSchema, SparseModelSchema]


class TransformRequest(BaseModel):
    system: SystemSchema
    form: Literal["sparse", "compact"] = "compact"
    eta: float = 0.5
    zeta: float = 0.5
    q_y: Optional[Vector] = None
    q_z: Optional[Vector] = None


class TransformResponse(BaseModel):
    model: ModelPayload = Field(discriminator="kind")


class AssumptionReportSchema(BaseModel):
    wellposedness: str
    block_structure: str
    nontriviality: str
    details: list[str] = []


class VerifyResponse(BaseModel):
    report: AssumptionReportSchema
    all_hold: bool


class SimulateRequest(BaseModel):
    model: ModelPayload = Field(discriminator="kind")
    x0: Vector
    inputs: list[Vector]


class SimulateResponse(BaseModel):
    states: Matrix
    complementarity: Optional[Matrix] = None


class CostSchema(BaseModel):
    """Uniform stage cost; defaults to 1/2(|x|^2 + |u|^2) when omitted."""

    Q: Matrix
    R: Matrix
    Q_N: Optional[Matrix] = None
    q: Optional[Vector] = None
    r: Optional[Vector] = None
    q_N: Optional[Vector] = None


class SolveRequest(BaseModel):
    model: ModelPayload = Field(discriminator="kind")
    x0: Vector
    N: int
    method: Literal["local", "oracle"] = "local"
    starts: int = 1
    seed: int = 0
    time_limit_s: Optional[float] = None
    constrain_to_domain: bool = False
    cost: Optional[CostSchema] = None


class SolveReportSchema(BaseModel):
    status: str
    objective: Optional[float] = None
    u: Optional[Matrix] = None
    x: Optional[Matrix] = None
    w: Optional[Matrix] = None
    s_stationary: bool = False
    global_certificate: bool = False
    mssosc: Optional[bool] = None
    iterations: int = 0
    starts_used: int = 1
    detail: str = ""


class SolveResponse(BaseModel):
    report: SolveReportSchema


class TrajectorySchema(BaseModel):
    x0: Vector
    u: Matrix
    x: Optional[Matrix] = None  # states x_1..x_N; simulated when omitted
    w: Optional[Matrix] = None  # one row per stage; simulated when omitted


class CheckRequest(BaseModel):
    model: ModelPayload = Field(discriminator="kind")
    trajectory: TrajectorySchema
    level: Literal["kkt", "s", "m", "global", "mssosc", "inputs"] = "s"
    constrain_to_domain: bool = False
    cost: Optional[CostSchema] = None


class CheckResponse(BaseModel):
    level: str
    verdict: bool
    status: str
    objective: Optional[float] = None
    details: dict = {}


class BenchRequest(BaseModel):
    config: dict = {}


class BenchResponse(BaseModel):
    records_csv: str
    n_records: int
    n_failed: int


class ProfileRequest(BaseModel):
    records_csv: str
    methods: Optional[list[str]] = None


class ProfileResponse(BaseModel):
    taus: Vector
    rho: dict[str, Vector]
    n_instances: int


class GapsRequest(BaseModel):
    records_csv: str


class GapSummarySchema(BaseModel):
    method: str
    n_compared: int
    fraction_global: float
    fraction_within_10pct: float
    max_gap: Optional[float] = None
    n_absolute_flagged: int


class GapsResponse(BaseModel):
    summaries: dict[str, GapSummarySchema]


class ErrorBody(BaseModel):
    code: Literal["bad_input", "verification_failure", "internal"]
    message: str
