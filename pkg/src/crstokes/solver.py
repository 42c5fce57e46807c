"""Direct solution of the bordered saddle-point system

    [ A   B^T  0 ] [u]   [rhs_u]
    [ B   0    m ] [p] = [rhs_p]
    [ 0   m^T  0 ] [l]   [  0  ]

where ``m`` holds the element areas, so that the pressure has zero mean.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import CRVectorField, P0Scalar, StokesSystem


class SolverError(RuntimeError):
    """Singular factorization or residual above tolerance."""


@dataclass(frozen=True)
class SolveReport:
    residual_norm: float
    n_unknowns: int
    factor_time: float
    solve_time: float


class Factorization:
    """Sparse LU of the block operator of a ``StokesSystem``.

    Systems that differ only in their right-hand side (CR against CR-RT on
    the same mesh) can share one factorization.
    """

    def __init__(self, system: StokesSystem):
        self.n_u = system.A.shape[0]
        self.n_p = system.B.shape[0]
        m = sp.csr_matrix(system.mean_row.reshape(-1, 1))
        self.K = sp.bmat(
            [
                [system.A, system.B.T, None],
                [system.B, None, m],
                [None, m.T, None],
            ],
            format="csc",
        )
        t0 = time.perf_counter()
        try:
            self.lu = spla.splu(self.K, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SolverError(f"factorization failed: {exc}") from exc
        self.factor_time = time.perf_counter() - t0

    def rhs(self, system: StokesSystem) -> np.ndarray:
        return np.concatenate([system.rhs_u, system.rhs_p, [0.0]])


def solve(
    system: StokesSystem, tol: float = 1e-10, factorization: Factorization | None = None
) -> tuple[CRVectorField, P0Scalar, SolveReport]:
    """Solve and return velocity (boundary lifting included), mean-zero pressure and a report."""
    if factorization is None:
        factorization = Factorization(system)
    fac = factorization
    b = fac.rhs(system)
    if not np.all(np.isfinite(b)):
        raise SolverError("non-finite right-hand side")
    t0 = time.perf_counter()
    x = fac.lu.solve(b)
    # one step of iterative refinement removes most of the pivoting roundoff
    x += fac.lu.solve(b - fac.K @ x)
    solve_time = time.perf_counter() - t0
    if not np.all(np.isfinite(x)):
        raise SolverError("non-finite solution, singular system")
    bnorm = np.linalg.norm(b)
    r = np.linalg.norm(fac.K @ x - b)
    residual = float(r / bnorm) if bnorm > 0.0 else float(r)
    if residual > tol:
        raise SolverError(f"relative residual {residual:.3e} above tolerance {tol:.1e}")

    mesh = system.mesh
    u = system.lift.copy()
    u[system.interior] = x[: fac.n_u]
    p = x[fac.n_u : fac.n_u + fac.n_p].copy()
    # safety net, the multiplier row already enforces this
    p -= p @ mesh.areas / mesh.areas.sum()
    report = SolveReport(
        residual_norm=residual,
        n_unknowns=len(b),
        factor_time=fac.factor_time,
        solve_time=solve_time,
    )
    return CRVectorField.from_flat(mesh, u), P0Scalar(mesh, p), report
