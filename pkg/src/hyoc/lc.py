"""Linear-complementarity system models and their structural checks.

A model is

    x+ = A x + B_u u + B_w w + c
    0 <= E_w w + E_x x + E_u u + e  perp  w >= 0

The checks cover the three structural properties the downstream optimal
control machinery relies on: well-posedness via the nullspace test
N(E_w) subset-of N(B_w), decomposability of E_w into rank-one positive
semidefinite diagonal blocks (up to an index permutation), and blockwise
nontriviality of the complementarity solutions over the model domain.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space

from .errors import HyocError, OutOfDomainError
from .lcp import RankOneLcp, solution_set, solve_lcp, vertices
from .pwa import Polytope
from .qp import lp_feasible

RANK_TOL = 1e-10
BLOCK_TOL = 1e-10


class LcpInfeasibleError(HyocError):
    pass


@dataclass(frozen=True)
class LcpBlock:
    """One decoupled complementarity subproblem 0 <= m m' w_i + C x + D u + e perp w_i."""

    indices: tuple[int, ...]
    m: np.ndarray
    C: np.ndarray
    D: np.ndarray
    e: np.ndarray

    def q(self, x, u) -> np.ndarray:
        return self.C @ np.asarray(x, dtype=float) + self.D @ np.asarray(u, dtype=float) + self.e


@dataclass(frozen=True)
class LcModel:
    A: np.ndarray
    B_u: np.ndarray
    B_w: np.ndarray
    c: np.ndarray
    E_w: np.ndarray
    E_x: np.ndarray
    E_u: np.ndarray
    e: np.ndarray
    domain: Polytope
    blocks: tuple[LcpBlock, ...] | None = None

    def __post_init__(self):
        arrays = {}
        for name in ("A", "B_u", "B_w", "c", "E_w", "E_x", "E_u", "e"):
            val = np.asarray(getattr(self, name), dtype=float)
            val = np.atleast_1d(val) if name in ("c", "e") else np.atleast_2d(val)
            arrays[name] = val
            object.__setattr__(self, name, val)
        n_x, n_w = arrays["A"].shape[0], arrays["E_w"].shape[0]
        n_u = arrays["B_u"].shape[1]
        expect = {"A": (n_x, n_x), "B_u": (n_x, n_u), "B_w": (n_x, n_w),
                  "c": (n_x,), "E_w": (n_w, n_w), "E_x": (n_w, n_x),
                  "E_u": (n_w, n_u), "e": (n_w,)}
        for name, shape in expect.items():
            if arrays[name].shape != shape:
                raise ValueError(f"{name} has shape {arrays[name].shape}, expected {shape}")
        if self.domain.dim != n_x + n_u:
            raise ValueError("domain must live in (x, u) space")
        if self.blocks is not None:
            object.__setattr__(self, "blocks", tuple(self.blocks))
            covered = sorted(i for b in self.blocks for i in b.indices)
            if covered != list(range(n_w)):
                raise ValueError("blocks do not partition the complementarity indices")

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B_u.shape[1]

    @property
    def n_w(self) -> int:
        return self.E_w.shape[0]

    def complementarity_q(self, x, u) -> np.ndarray:
        return self.E_x @ np.asarray(x, dtype=float) + self.E_u @ np.asarray(u, dtype=float) + self.e

    def to_dict(self) -> dict:
        out = {name: getattr(self, name).tolist()
               for name in ("A", "B_u", "B_w", "c", "E_w", "E_x", "E_u", "e")}
        out["domain"] = {"H": self.domain.H.tolist(), "k": self.domain.k.tolist()}
        if self.blocks is not None:
            out["blocks"] = [{"indices": list(b.indices), "m": b.m.tolist(),
                              "C": b.C.tolist(), "D": b.D.tolist(), "e": b.e.tolist()}
                             for b in self.blocks]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "LcModel":
        blocks = None
        if data.get("blocks"):
            blocks = tuple(LcpBlock(indices=tuple(b["indices"]),
                                    m=np.array(b["m"], dtype=float),
                                    C=np.array(b["C"], dtype=float),
                                    D=np.array(b["D"], dtype=float),
                                    e=np.array(b["e"], dtype=float))
                           for b in data["blocks"])
        return cls(A=np.array(data["A"], dtype=float),
                   B_u=np.array(data["B_u"], dtype=float),
                   B_w=np.array(data["B_w"], dtype=float),
                   c=np.array(data["c"], dtype=float),
                   E_w=np.array(data["E_w"], dtype=float),
                   E_x=np.array(data["E_x"], dtype=float),
                   E_u=np.array(data["E_u"], dtype=float),
                   e=np.array(data["e"], dtype=float),
                   domain=Polytope(H=np.array(data["domain"]["H"], dtype=float),
                                   k=np.array(data["domain"]["k"], dtype=float)),
                   blocks=blocks)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass
class BlockDetection:
    ok: bool
    blocks: tuple[LcpBlock, ...] | None = None
    reason: str | None = None


def detect_blocks(model: LcModel) -> BlockDetection:
    """Decompose E_w into rank-one PSD diagonal blocks under index permutation.

    Blocks are the connected components of the nonzero pattern of E_w;
    each component must equal m m' with m elementwise nonzero.
    """
    E = model.E_w
    n = E.shape[0]
    if n == 0:
        return BlockDetection(ok=True, blocks=())
    scale = max(1.0, float(np.abs(E).max()) if E.size else 0.0)
    if float(np.abs(E - E.T).max()) > BLOCK_TOL * scale:
        return BlockDetection(ok=False, reason="E_w is not symmetric")
    adjacency = np.abs(E) > BLOCK_TOL * scale * 1e-2
    np.fill_diagonal(adjacency, True)
    seen = np.zeros(n, dtype=bool)
    components: list[list[int]] = []
    for start in range(n):
        if seen[start]:
            continue
        stack, comp = [start], []
        seen[start] = True
        while stack:
            i = stack.pop()
            comp.append(i)
            for j in np.flatnonzero(adjacency[i]):
                if not seen[j]:
                    seen[j] = True
                    stack.append(int(j))
        components.append(sorted(comp))
    components.sort(key=lambda c: c[0])

    blocks = []
    for comp in components:
        S = E[np.ix_(comp, comp)]
        diag = np.diag(S)
        if diag.min() < -BLOCK_TOL * scale:
            return BlockDetection(ok=False,
                                  reason=f"negative diagonal entry in block {comp}")
        kmax = int(np.argmax(diag))
        if diag[kmax] <= 1e-12:
            return BlockDetection(ok=False,
                                  reason=f"zero m entry in block {comp}")
        m = S[:, kmax] / np.sqrt(diag[kmax])
        if float(np.abs(S - np.outer(m, m)).max()) > BLOCK_TOL * max(1.0, float(np.abs(S).max())):
            return BlockDetection(ok=False,
                                  reason=f"block {comp} is not rank-one PSD")
        if np.abs(m).min() <= 1e-12:
            return BlockDetection(ok=False, reason=f"zero m entry in block {comp}")
        idx = list(comp)
        blocks.append(LcpBlock(indices=tuple(idx), m=m,
                               C=model.E_x[idx], D=model.E_u[idx], e=model.e[idx]))
    return BlockDetection(ok=True, blocks=tuple(blocks))


def with_blocks(model: LcModel) -> LcModel:
    det = detect_blocks(model)
    if not det.ok:
        raise HyocError(f"block structure not detected: {det.reason}")
    return LcModel(A=model.A, B_u=model.B_u, B_w=model.B_w, c=model.c,
                   E_w=model.E_w, E_x=model.E_x, E_u=model.E_u, e=model.e,
                   domain=model.domain, blocks=det.blocks)


@dataclass
class Verdict:
    status: str  # "holds" | "fails" | "unknown"
    witness: np.ndarray | None = None
    note: str = ""

    @property
    def holds(self) -> bool:
        return self.status == "holds"


def check_assumption1(model: LcModel) -> Verdict:
    """Sufficient well-posedness test: N(E_w) must map to zero under B_w.

    Passing implies every complementarity solution yields the same
    successor state; failing only means the sufficient test failed, with a
    violating nullspace direction as witness.
    """
    bw_scale = float(np.abs(model.B_w).max()) if model.B_w.size else 0.0
    if bw_scale == 0.0:
        return Verdict(status="holds", note="B_w = 0")
    N = null_space(model.E_w, rcond=RANK_TOL)
    if N.shape[1] == 0:
        return Verdict(status="holds", note="E_w has trivial nullspace")
    images = model.B_w @ N
    bad = np.flatnonzero(np.abs(images).max(axis=0) > 1e-9 * bw_scale)
    if bad.size:
        return Verdict(status="fails", witness=N[:, int(bad[0])],
                       note="nullspace direction escapes N(B_w)")
    return Verdict(status="holds")


def check_assumption3(model: LcModel) -> Verdict:
    """Blockwise nontriviality over the domain.

    For each block the set {(x,u) in domain : C x + D u + e >= 0
    componentwise} must be empty, so some row is strictly negative at every
    admissible (x, u) and the zero vector never solves the block.
    """
    if model.blocks is None:
        return Verdict(status="unknown", note="blocks not detected")
    if not model.domain.is_bounded():
        return Verdict(status="unknown", note="domain unbounded; LP check undefined")
    for b in model.blocks:
        rows = np.hstack([b.C, b.D])
        feas = lp_feasible(A_in=np.vstack([-rows, model.domain.H]),
                           b_in=np.concatenate([-b.e, -model.domain.k]))
        if feas.feasible:
            return Verdict(status="fails", witness=feas.point,
                           note=f"all rows of block {b.indices} nonnegative at witness")
    return Verdict(status="holds")


@dataclass
class AssumptionReport:
    a1: Verdict
    a2: BlockDetection
    a3: Verdict
    details: list[str] = field(default_factory=list)

    @property
    def all_hold(self) -> bool:
        return self.a1.holds and self.a2.ok and self.a3.holds


def verify_assumptions(model: LcModel, samples: int = 5,
                       seed: int = 0) -> tuple[LcModel, AssumptionReport]:
    """Run all three structural checks; returns the model with blocks attached.

    The nullspace test is sufficient but not necessary for well-posedness,
    so on failure a handful of domain points are probed for two
    complementarity solutions with different successor states: a concrete
    counterexample downgrades the verdict to "fails", otherwise "unknown".
    """
    details: list[str] = []
    a2 = detect_blocks(model)
    if a2.ok:
        model = LcModel(A=model.A, B_u=model.B_u, B_w=model.B_w, c=model.c,
                        E_w=model.E_w, E_x=model.E_x, E_u=model.E_u, e=model.e,
                        domain=model.domain, blocks=a2.blocks)
    else:
        details.append(f"block detection failed: {a2.reason}")

    a1 = check_assumption1(model)
    if a1.status == "fails":
        counter = _wellposedness_counterexample(model, samples, seed)
        if counter is None:
            a1 = Verdict(status="unknown", witness=a1.witness,
                         note="nullspace test failed; no sampled counterexample")
            details.append("well-posedness undecided: test is sufficient only")
        else:
            a1 = Verdict(status="fails", witness=counter,
                         note="two complementarity solutions map to different states")

    a3 = check_assumption3(model) if a2.ok else Verdict(status="unknown",
                                                        note="requires blocks")
    return model, AssumptionReport(a1=a1, a2=a2, a3=a3, details=details)


def _wellposedness_counterexample(model: LcModel, samples: int, seed: int):
    if model.blocks is None:
        return None
    rng = np.random.default_rng(seed)
    try:
        points = model.domain.sample(rng, samples)
    except HyocError:
        return None
    for p in points:
        x, u = p[:model.n_x], p[model.n_x:]
        try:
            _, w = step(model, x, u, check_domain=False)
        except LcpInfeasibleError:
            continue
        for b in model.blocks:
            idx = list(b.indices)
            sset = solution_set(RankOneLcp(m=b.m, q=b.q(x, u)), w[idx])
            for v in vertices(sset):
                w2 = w.copy()
                w2[idx] = v
                if float(np.abs(model.B_w @ (w2 - w)).max()) > 1e-8:
                    return np.concatenate([x, u])
    return None


def step(model: LcModel, x, u, check_domain: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """One transition: solve each block LCP, assemble w, apply the affine map."""
    if model.blocks is None:
        raise HyocError("model blocks not detected; run verify_assumptions first")
    x = np.asarray(x, dtype=float).ravel()
    u = np.asarray(u, dtype=float).ravel()
    if check_domain and not model.domain.contains(np.concatenate([x, u])):
        raise OutOfDomainError("(x, u) outside the model domain",
                               point=np.concatenate([x, u]))
    w = np.zeros(model.n_w)
    for b in model.blocks:
        wi = solve_lcp(RankOneLcp(m=b.m, q=b.q(x, u)))
        if wi is None:
            raise LcpInfeasibleError(f"block {b.indices} has no solution at this (x, u)")
        w[list(b.indices)] = wi
    x_plus = model.A @ x + model.B_u @ u + model.B_w @ w + model.c
    return x_plus, w


def simulate(model: LcModel, x0, inputs) -> tuple[np.ndarray, np.ndarray]:
    """Forward rollout; returns (states (N+1, n_x), complementarity vars (N, n_w))."""
    x = np.asarray(x0, dtype=float).ravel()
    xs, ws = [x], []
    for k, u in enumerate(inputs):
        try:
            x, w = step(model, x, u)
        except OutOfDomainError as err:
            raise OutOfDomainError(f"trajectory left the domain at step {k}",
                                   step=k, point=err.point) from None
        xs.append(x)
        ws.append(w)
    return np.array(xs), np.array(ws) if ws else np.zeros((0, model.n_w))
