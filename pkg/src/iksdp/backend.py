"""Clarabel boundary for the lifted conic programs.

Cone layout handed to the solver, in order:

1. zero cone for ``A_eq x = b_eq``
2. nonnegative cone for ``A_in x <= b_in``
3. one PSD-triangle cone per lifted block, via ``-x_block + s = 0``

Clarabel's PSD triangle uses the same upper-triangular, column-major,
sqrt(2)-scaled vectorisation as :mod:`iksdp.assembly`, so the block slice of
``x`` is passed through unchanged.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import clarabel
import numpy as np
import scipy.sparse as sp

from .assembly import ConicProgram, LinearObjective, QuadraticObjective, smat, svec_size
from .lifting import TOL_PSD

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
NUMERICAL_FAILURE = "NumericalFailure"
ITERATION_LIMIT = "IterationLimit"


@dataclass
class SolverSettings:
    max_iter: int = 200
    tol: float = 1e-8
    verbose: bool = False


@dataclass
class SolverResult:
    status: str
    x: np.ndarray | None = None
    blocks: dict = field(default_factory=dict)
    objective: float = float("nan")
    iterations: int = 0
    wall_time: float = 0.0
    raw_status: str = ""
    certificate: dict | None = None

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def _certificate(A: sp.csc_matrix, b: np.ndarray, z: np.ndarray, tol: float) -> dict | None:
    """Check a Farkas-type dual ray: ``A'z = 0``, ``b'z < 0`` with ``z`` in the dual cone."""
    nz = np.linalg.norm(z)
    if not np.isfinite(nz) or nz == 0:
        return None
    z = z / nz
    gap = float(b @ z)
    resid = float(np.linalg.norm(A.T @ z))
    if gap < 0 and resid <= 1e-5 and resid < 1e-2 * abs(gap):
        return {"dual_residual": resid, "b_dot_z": gap}
    return None


def solve(prog: ConicProgram, settings: SolverSettings | None = None) -> SolverResult:
    """Solve ``prog`` and map the outcome onto the four public statuses."""
    settings = settings or SolverSettings()
    L = prog.layout
    n = L.n
    Ae, be = prog.eq_system
    Ai, bi = prog.ineq_system
    if Ae.shape[1] != n or Ai.shape[1] != n:
        raise ValueError("row dimension does not match the variable layout")

    obj = prog.objective
    if isinstance(obj, QuadraticObjective):
        P = np.asarray(obj.P, dtype=float)
        if P.shape != (n, n):
            raise ValueError("objective matrix has the wrong shape")
        if np.linalg.eigvalsh(0.5 * (P + P.T))[0] < -TOL_PSD * max(1.0, np.abs(P).max()):
            raise ValueError("objective matrix is not positive semidefinite")
        # Clarabel minimises x'Px/2 + q'x
        Pc = sp.triu(sp.csc_matrix(2.0 * P)).tocsc()
        qc, r0 = np.asarray(obj.q, dtype=float), obj.r
    elif isinstance(obj, LinearObjective):
        Pc, qc, r0 = sp.csc_matrix((n, n)), np.asarray(obj.q, dtype=float), obj.r
    else:
        Pc, qc, r0 = sp.csc_matrix((n, n)), np.zeros(n), 0.0

    psd_rows, cones = [], []
    if Ae.shape[0]:
        cones.append(clarabel.ZeroConeT(Ae.shape[0]))
    if Ai.shape[0]:
        cones.append(clarabel.NonnegativeConeT(Ai.shape[0]))
    soc_rows, soc_b = [], []
    for cone in prog.soc:
        # s = M x + c in the cone  <=>  -M x + s = c
        soc_rows.append(sp.csr_matrix(-cone.M))
        soc_b.append(cone.c)
        cones.append(clarabel.SecondOrderConeT(len(cone.c)))
    for blk in L.blocks:
        m = svec_size(blk.size)
        sel = sp.csr_matrix((-np.ones(m), (np.arange(m), blk.offset + np.arange(m))), shape=(m, n))
        psd_rows.append(sel)
        cones.append(clarabel.PSDTriangleConeT(blk.size))
    A = sp.vstack([Ae, Ai] + soc_rows + psd_rows).tocsc()
    b = np.concatenate([be, bi] + soc_b + [np.zeros(sum(r.shape[0] for r in psd_rows))])

    s = clarabel.DefaultSettings()
    s.verbose = settings.verbose
    s.max_iter = settings.max_iter
    s.tol_gap_abs = s.tol_gap_rel = settings.tol
    s.tol_feas = settings.tol
    s.tol_infeas_abs = s.tol_infeas_rel = settings.tol
    s.presolve_enable = False

    t0 = time.perf_counter()
    try:
        sol = clarabel.DefaultSolver(Pc, qc, A, b, cones, s).solve()
    except (KeyboardInterrupt, SystemExit):
        raise
    except BaseException as exc:  # rejected data, or a panic inside the Rust core
        return SolverResult(NUMERICAL_FAILURE, raw_status=f"exception: {exc}",
                            wall_time=time.perf_counter() - t0)
    wall = time.perf_counter() - t0
    raw = str(sol.status)
    x = np.asarray(sol.x, dtype=float)
    res = SolverResult(NUMERICAL_FAILURE, raw_status=raw, iterations=int(sol.iterations),
                       wall_time=wall)

    if raw in ("Solved", "AlmostSolved"):
        blocks = {k: 0.5 * (M + M.T) for k, M in L.unpack(x).items()}
        x = L.pack(blocks)
        res.x, res.blocks = x, blocks
        res.objective = (obj.value(x) if obj is not None else 0.0)
        # trust the point only if it is feasible to a loose multiple of tol
        req, rin = prog.residuals(x)
        worst_psd = min((np.linalg.eigvalsh(M)[0] for M in blocks.values()), default=0.0)
        feas_tol = max(1e-6, 1e3 * settings.tol)
        if req <= feas_tol and rin <= feas_tol and worst_psd >= -feas_tol:
            res.status = OPTIMAL
        reported = float(sol.obj_val) + r0
        if obj is not None and abs(reported - res.objective) > 1e-5 * (1 + abs(res.objective)):
            res.raw_status += " (objective mismatch)"
    elif raw in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        cert = _certificate(A, b, np.asarray(sol.z, dtype=float), settings.tol)
        if cert is not None:
            res.status, res.certificate = INFEASIBLE, cert
    elif raw == "MaxIterations":
        res.status = ITERATION_LIMIT
    return res


def block_matrix(x, layout, name: str) -> np.ndarray:
    blk = layout[name]
    return smat(np.asarray(x)[blk.offset:blk.offset + svec_size(blk.size)], blk.size)
