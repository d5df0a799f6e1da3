"""Continuous piecewise-affine dynamics in difference-of-convex form.

A system is stored as a pair of vector max-affine functions (psi, phi) over
a bounded polytopic domain in (x, u); the dynamics are
f(x, u) = psi(x, u) - phi(x, u), which is continuous by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import HyocError, OutOfDomainError
from .qp import lp_feasible, lp_maximize

DOMAIN_TOL = 1e-9


class GenerationFailedError(HyocError):
    pass


@dataclass(frozen=True)
class MaxAffine:
    """Componentwise max of affine pieces A_j x + B_j u + c_j.

    Shapes: A (n_pieces, n_out, n_x), B (n_pieces, n_out, n_u),
    c (n_pieces, n_out).  Every component function is convex.
    """

    A: np.ndarray
    B: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float)
        c = np.asarray(self.c, dtype=float)
        if A.ndim != 3 or B.ndim != 3 or c.ndim != 2:
            raise ValueError("expected A, B with 3 axes (piece, out, in) and c with 2")
        if not (A.shape[0] == B.shape[0] == c.shape[0] >= 1):
            raise ValueError("need at least one piece, consistently across A, B, c")
        if not (A.shape[1] == B.shape[1] == c.shape[1]):
            raise ValueError("output dimensions of A, B, c differ")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "c", c)

    @property
    def n_pieces(self) -> int:
        return self.A.shape[0]

    @property
    def n_out(self) -> int:
        return self.A.shape[1]

    @property
    def n_x(self) -> int:
        return self.A.shape[2]

    @property
    def n_u(self) -> int:
        return self.B.shape[2]

    def piece_values(self, x, u) -> np.ndarray:
        """All affine pieces evaluated at (x, u); shape (n_pieces, n_out)."""
        x = np.asarray(x, dtype=float).ravel()
        u = np.asarray(u, dtype=float).ravel()
        if x.size != self.n_x or u.size != self.n_u:
            raise ValueError("(x, u) dimensions do not match the pieces")
        return self.A @ x + self.B @ u + self.c


def eval_max_affine(g: MaxAffine, x, u) -> tuple[np.ndarray, np.ndarray]:
    """Componentwise max and the lowest piece index attaining it."""
    vals = g.piece_values(x, u)
    return vals.max(axis=0), vals.argmax(axis=0)


@dataclass(frozen=True)
class Polytope:
    """H-polytope {p : H p <= k}; nonemptiness is certified at construction."""

    H: np.ndarray
    k: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        k = np.asarray(self.k, dtype=float).ravel()
        if H.shape[0] != k.size:
            raise ValueError("H rows and k length differ")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "k", k)
        if H.shape[0] and not lp_feasible(A_in=H, b_in=-k).feasible:
            raise ValueError("polytope is empty")

    @property
    def dim(self) -> int:
        return self.H.shape[1]

    @classmethod
    def box(cls, lo: float, hi: float, dim: int) -> "Polytope":
        H = np.vstack([np.eye(dim), -np.eye(dim)])
        k = np.concatenate([np.full(dim, hi), np.full(dim, -lo)])
        return cls(H=H, k=k)

    def contains(self, p, tol: float = DOMAIN_TOL) -> bool:
        p = np.asarray(p, dtype=float).ravel()
        if not self.H.shape[0]:
            return True
        return float((self.H @ p - self.k).max()) <= tol

    def is_bounded(self) -> bool:
        for j in range(self.dim):
            e = np.zeros(self.dim)
            e[j] = 1.0
            for sign in (1.0, -1.0):
                status, _, _ = lp_maximize(sign * e, A_in=self.H, b_in=-self.k)
                if status == "unbounded":
                    return False
        return True

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = np.zeros(self.dim), np.zeros(self.dim)
        for j in range(self.dim):
            e = np.zeros(self.dim)
            e[j] = 1.0
            _, vmax, _ = lp_maximize(e, A_in=self.H, b_in=-self.k)
            _, vmin, _ = lp_maximize(-e, A_in=self.H, b_in=-self.k)
            hi[j], lo[j] = vmax, -vmin
        return lo, hi

    def sample(self, rng: np.random.Generator, count: int = 1,
               max_tries: int = 10_000) -> np.ndarray:
        """Uniform rejection samples from the bounding box; shape (count, dim)."""
        lo, hi = self.bounding_box()
        out = []
        tries = 0
        while len(out) < count and tries < max_tries:
            p = rng.uniform(lo, hi)
            tries += 1
            if self.contains(p):
                out.append(p)
        if len(out) < count:
            raise HyocError("rejection sampling from polytope failed")
        return np.array(out)


@dataclass(frozen=True)
class PwaDcSystem:
    """PWA dynamics f = psi - phi with convex max-affine psi, phi."""

    psi: MaxAffine
    phi: MaxAffine
    domain: Polytope

    def __post_init__(self):
        if (self.psi.n_x, self.psi.n_u) != (self.phi.n_x, self.phi.n_u):
            raise ValueError("psi and phi input dimensions differ")
        if self.psi.n_out != self.phi.n_out or self.psi.n_out != self.psi.n_x:
            raise ValueError("psi and phi must map into the state space")
        if self.domain.dim != self.psi.n_x + self.psi.n_u:
            raise ValueError("domain must live in (x, u) space")

    @property
    def n_x(self) -> int:
        return self.psi.n_x

    @property
    def n_u(self) -> int:
        return self.psi.n_u

    def to_dict(self) -> dict:
        def ma(g):
            return {"pieces": [{"A": g.A[j].tolist(), "B": g.B[j].tolist(),
                                "c": g.c[j].tolist()} for j in range(g.n_pieces)]}
        return {"n_x": self.n_x, "n_u": self.n_u, "psi": ma(self.psi),
                "phi": ma(self.phi),
                "domain": {"H": self.domain.H.tolist(), "k": self.domain.k.tolist()}}

    @classmethod
    def from_dict(cls, data: dict) -> "PwaDcSystem":
        def ma(d):
            pieces = d["pieces"]
            return MaxAffine(A=np.array([p["A"] for p in pieces], dtype=float),
                             B=np.array([p["B"] for p in pieces], dtype=float),
                             c=np.array([p["c"] for p in pieces], dtype=float))
        return cls(psi=ma(data["psi"]), phi=ma(data["phi"]),
                   domain=Polytope(H=np.array(data["domain"]["H"], dtype=float),
                                   k=np.array(data["domain"]["k"], dtype=float)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def eval_dynamics(sys: PwaDcSystem, x, u) -> np.ndarray:
    """Successor state psi(x,u) - phi(x,u); (x,u) must lie in the domain."""
    x = np.asarray(x, dtype=float).ravel()
    u = np.asarray(u, dtype=float).ravel()
    if not sys.domain.contains(np.concatenate([x, u])):
        raise OutOfDomainError(f"point (x={x}, u={u}) outside the system domain",
                               point=np.concatenate([x, u]))
    y, _ = eval_max_affine(sys.psi, x, u)
    z, _ = eval_max_affine(sys.phi, x, u)
    return y - z


def simulate(sys: PwaDcSystem, x0, inputs) -> np.ndarray:
    """Roll the dynamics forward; returns states of shape (N+1, n_x)."""
    x = np.asarray(x0, dtype=float).ravel()
    traj = [x]
    for k, u in enumerate(inputs):
        try:
            x = eval_dynamics(sys, x, u)
        except OutOfDomainError as err:
            raise OutOfDomainError(f"trajectory left the domain at step {k}",
                                   step=k, point=err.point) from None
        traj.append(x)
    return np.array(traj)


def strict_support_violation(g: MaxAffine, A_bar, B_bar, c_bar,
                             domain: Polytope):
    """Find (x,u) in the domain where an affine function is >= all pieces of g.

    Checks the strict-support condition componentwise: the affine candidate
    must stay strictly below the componentwise max of the pieces.  Returns
    (component, point) for the first violation, or None.
    """
    A_bar = np.atleast_2d(np.asarray(A_bar, dtype=float))
    B_bar = np.atleast_2d(np.asarray(B_bar, dtype=float))
    c_bar = np.asarray(c_bar, dtype=float).ravel()
    for i in range(g.n_out):
        # Rows: piece_j - bar >= 0 is violation; as A_in p + b_in <= 0 we need
        # (bar - piece_j) >= 0 for all j, i.e. (piece_j - bar) <= 0.
        rows = np.hstack([g.A[:, i, :] - A_bar[i], g.B[:, i, :] - B_bar[i]])
        offs = g.c[:, i] - c_bar[i]
        feas = lp_feasible(A_in=np.vstack([rows, domain.H]),
                           b_in=np.concatenate([offs, -domain.k]))
        if feas.feasible:
            return i, feas.point
    return None


def random_dc_system(n_x: int, n_u: int, pieces_y: int, pieces_z: int,
                     seed: int, box_half_width: float = 5.0,
                     max_redraws: int = 100) -> PwaDcSystem:
    """Draw a random DC system with entries in [-1, 1] over a centered box.

    Deterministic for a fixed seed.  Each draw is kept only if the default
    strict-support construction (first piece shifted down by 0.5) verifies
    on the domain, so the downstream complementarity models always satisfy
    the nontriviality assumption.
    """
    if min(n_x, n_u, pieces_y, pieces_z) < 1:
        raise ValueError("all dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    domain = Polytope.box(-box_half_width, box_half_width, n_x + n_u)
    for _ in range(max_redraws):
        psi = MaxAffine(A=rng.uniform(-1, 1, (pieces_y, n_x, n_x)),
                        B=rng.uniform(-1, 1, (pieces_y, n_x, n_u)),
                        c=rng.uniform(-1, 1, (pieces_y, n_x)))
        phi = MaxAffine(A=rng.uniform(-1, 1, (pieces_z, n_x, n_x)),
                        B=rng.uniform(-1, 1, (pieces_z, n_x, n_u)),
                        c=rng.uniform(-1, 1, (pieces_z, n_x)))
        ok = True
        for g in (psi, phi):
            if strict_support_violation(g, g.A[0], g.B[0], g.c[0] - 0.5, domain) is not None:
                ok = False
                break
        if ok:
            return PwaDcSystem(psi=psi, phi=phi, domain=domain)
    raise GenerationFailedError(f"no valid system after {max_redraws} draws")
