"""Iterative rank minimisation of the relaxed solution.

Two update rules are available.  ``eigenmax`` keeps the cost frozen through
stationarity rows and pushes each block's top eigenvalue up along its
eigenvector gradient.  ``costrelax`` minimises the cost while forcing the
rank deficiency ``W = sum(trace - lambda_1)`` to shrink by a factor ``c`` per
step.  Stalled runs can be restarted from another point of the relaxed set.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .assembly import (ConicProgram, GoalSpec, LinearObjective, RowBlock,
                       assemble_relaxation, assemble_stationarity)
from .backend import INFEASIBLE, OPTIMAL, SolverResult, SolverSettings, solve
from .lifting import QUAT, ROT
from .robot_model import RobotGraph

EIGENMAX, COSTRELAX, AUTO = "eigenmax", "costrelax", "auto"
RANK_ONE, STALLED, INFEASIBLE_STATUS, FAILED = "RankOne", "Stalled", "Infeasible", "Failed"
F_ZERO_TOL = 1e-7
MEMBERSHIP_TOL = 1e-8
CONTRACTION_SLACK = 1e-9


class DegenerateEigenvalue(ArithmeticError):
    pass


@dataclass
class RankMinConfig:
    eps1: float = 1e-3
    eps2: float = 1e-7
    k_max: int = 200
    variant: str = AUTO
    c0: float | None = None           # None -> 0.2 (rotation) or 0.05 (quaternion)
    adaptive_c: bool = True
    max_c_retries: int = 25
    restart_delta: float = 1e-2
    restart_attempts: int = 10
    restart_reach: float = 1.0
    polish_tol: float = 1e-10         # keep iterating past eps1 until lambda_2 is this small
    polish_max: int = 5
    reset_c: bool = True              # each CostRelax step starts again from c0
    gap_tol: float = 1e-8
    stall_window: int = 5             # 0 disables the no-progress test
    stall_progress: float = 0.1       # required relative decrease of W over the window
    mode: str = ROT
    m_dirs: int = 42
    limits: str = "polyhedron"
    seed: int = 0
    solver: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        if self.eps1 <= 0 or self.eps2 <= 0:
            raise ValueError("eps1 and eps2 must be positive")
        if self.c0 is not None and not 0.0 < self.c0 < 1.0:
            raise ValueError("c0 must lie in (0, 1)")
        if self.restart_delta <= 0:
            raise ValueError("restart delta must be positive")
        if self.variant not in (EIGENMAX, COSTRELAX, AUTO):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.k_max < 0 or self.restart_attempts < 0:
            raise ValueError("iteration and restart budgets must be nonnegative")

    @property
    def c_initial(self) -> float:
        if self.c0 is not None:
            return self.c0
        return 0.05 if self.mode == QUAT else 0.2


# ---------------------------------------------------------------------------
# eigen utilities
# ---------------------------------------------------------------------------

def eig_top(M) -> tuple[float, np.ndarray]:
    M = np.asarray(M, dtype=float)
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    v = V[:, -1]
    # fix the sign so repeated calls agree
    i = int(np.argmax(np.abs(v)))
    return float(w[-1]), (v if v[i] >= 0 else -v)


def eig_gradient(M, gap_tol: float = 1e-8, strict: bool = True) -> np.ndarray:
    """``v_1 v_1^T``, the gradient of the top eigenvalue.

    When the top eigenvalue is repeated the gradient does not exist; with
    ``strict`` a :class:`DegenerateEigenvalue` is raised, otherwise the
    outer product of one top eigenvector (a subgradient) is returned.
    """
    M = np.asarray(M, dtype=float)
    w = np.linalg.eigvalsh(0.5 * (M + M.T))
    if strict and len(w) > 1 and w[-1] - w[-2] <= gap_tol:
        raise DegenerateEigenvalue(f"top eigenvalue gap {w[-1] - w[-2]:.3g} <= {gap_tol:g}")
    _, v = eig_top(M)
    return np.outer(v, v)


def adapt_c(c: float, p: int) -> float:
    if not 0.0 < c < 1.0 or p < 1:
        raise ValueError("need c in (0, 1) and p >= 1")
    return 1.0 - (1.0 - c) ** (p + 1)


# ---------------------------------------------------------------------------
# trace
# ---------------------------------------------------------------------------

TRACE_COLUMNS = ("k", "block", "lambda1", "lambda2", "f", "step_norm", "c")


@dataclass
class IterationTrace:
    rows: list[dict] = field(default_factory=list)
    events: list[tuple[int, str]] = field(default_factory=list)

    def record(self, k: int, blocks: dict, f: float, step_norm: float, c: float | None):
        for name, M in blocks.items():
            w = np.linalg.eigvalsh(M)
            self.rows.append({"k": k, "block": name, "lambda1": float(w[-1]),
                              "lambda2": float(w[-2]), "f": float(f),
                              "step_norm": float(step_norm),
                              "c": float("nan") if c is None else float(c)})

    @property
    def iterations(self) -> list[int]:
        return sorted({r["k"] for r in self.rows})

    def at(self, k: int) -> list[dict]:
        return [r for r in self.rows if r["k"] == k]

    def lambda_sum(self, k: int) -> float:
        return sum(r["lambda1"] for r in self.at(k))

    def f(self, k: int) -> float:
        rows = self.at(k)
        return rows[0]["f"] if rows else float("nan")

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=TRACE_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


# ---------------------------------------------------------------------------
# state helpers
# ---------------------------------------------------------------------------

def rank_threshold(kind: str, trace: float, eps1: float) -> float:
    """Top-eigenvalue level at which a block counts as rank one.

    Quaternion blocks have trace 1, so their tolerance is scaled by 1/3 to
    keep the same relative accuracy as the trace-3 rotation blocks.
    """
    return trace - (eps1 / 3.0 if kind == QUAT else eps1)


def deficiency(prog: ConicProgram, blocks: dict) -> dict[str, float]:
    """Per-group ``W = sum(trace - lambda_1)``, groups ``rot`` (rotation or quaternion) and ``tau``."""
    out = {"rot": 0.0, "tau": 0.0}
    for b in prog.layout.blocks:
        lam = np.linalg.eigvalsh(blocks[b.name])[-1]
        out["tau" if b.kind == "tau" else "rot"] += b.trace - lam
    return out


def is_rank_one(prog: ConicProgram, blocks: dict, eps1: float) -> bool:
    return all(np.linalg.eigvalsh(blocks[b.name])[-1] >= rank_threshold(b.kind, b.trace, eps1)
               for b in prog.layout.blocks)


def max_second_eigenvalue(blocks: dict) -> float:
    return max((float(np.linalg.eigvalsh(M)[-2]) for M in blocks.values()), default=0.0)


def violation(prog: ConicProgram, x) -> float:
    """Largest violation of the rows and PSD cones at ``x`` (0 inside the set)."""
    req, rin = prog.residuals(x)
    psd = max((-np.linalg.eigvalsh(M)[0] for M in prog.layout.unpack(x).values()), default=0.0)
    return max(req, rin, psd, 0.0)


def is_member(prog: ConicProgram, x, tol: float = MEMBERSHIP_TOL) -> bool:
    return violation(prog, x) <= tol


def _gradient_rows(prog: ConicProgram, blocks: dict, gap_tol: float):
    """Per-group rows ``a`` with ``a . x = sum <Y_i, v_i v_i^T>`` and the current ``lambda_1`` sums."""
    L = prog.layout
    rows = {"rot": np.zeros(L.n), "tau": np.zeros(L.n)}
    lam = {"rot": 0.0, "tau": 0.0}
    degenerate = []
    for b in L.blocks:
        M = blocks[b.name]
        try:
            G = eig_gradient(M, gap_tol, strict=True)
        except DegenerateEigenvalue:
            degenerate.append(b.name)
            G = eig_gradient(M, gap_tol, strict=False)
        grp = "tau" if b.kind == "tau" else "rot"
        rows[grp] += L.inner(b.name, G)
        lam[grp] += float(np.linalg.eigvalsh(M)[-1])
    return rows, lam, degenerate


# ---------------------------------------------------------------------------
# update steps
# ---------------------------------------------------------------------------

def step_eigenmax(prog: ConicProgram, x, settings: SolverSettings, gap_tol: float = 1e-8,
                  stationarity: RowBlock | None = None) -> SolverResult:
    """Maximise the linearised top-eigenvalue sum at frozen cost.

    ``prog`` should already carry the stationarity rows unless they are passed
    separately.  The returned result holds the new point ``Y^{k-1} + U``.
    """
    blocks = prog.layout.unpack(x)
    rows, _, _ = _gradient_rows(prog, blocks, gap_tol)
    q = -(rows["rot"] + rows["tau"])
    sub = prog.with_rows(eq=[stationarity] if stationarity is not None else [],
                         objective=LinearObjective(q))
    return solve(sub, settings)


def step_costrelax(prog: ConicProgram, x, c: float, settings: SolverSettings,
                   gap_tol: float = 1e-8) -> SolverResult:
    """Minimise the cost while forcing ``W`` to contract by ``c`` in each block group."""
    if not 0.0 < c < 1.0:
        raise ValueError("c must lie in (0, 1)")
    blocks = prog.layout.unpack(x)
    rows, lam, _ = _gradient_rows(prog, blocks, gap_tol)
    W = deficiency(prog, blocks)
    A, b = [], []
    for grp in ("rot", "tau"):
        if not np.any(rows[grp]):
            continue
        # sum <Y_new, G_i> >= sum lambda_i + (1 - c) W_grp
        A.append(-rows[grp])
        b.append(-(lam[grp] + (1.0 - c) * W[grp]))
    ineq = RowBlock(np.array(A), np.array(b), "eigen_gradient")
    return solve(prog.with_rows(ineq=[ineq]), settings)


def restart(prog: ConicProgram, x, delta: float, rng: np.random.Generator,
            settings: SolverSettings, reach: float = 1.0) -> np.ndarray | None:
    """Move to another point of the relaxed set, close to its boundary.

    A random linear objective over all blocks is minimised on the same
    constraint set to get a target ``Z``; the walk ``Y + j delta (Z - Y)``
    continues while the iterate stays in the set and the last member is
    returned.  Returns None when no usable target is found.
    """
    L = prog.layout
    q = np.zeros(L.n)
    for b in L.blocks:
        G = rng.normal(size=(b.size, b.size))
        q += L.inner(b.name, 0.5 * (G + G.T))
    res = solve(prog.with_rows(objective=LinearObjective(q)), settings)
    if res.status != OPTIMAL:
        return None
    x = np.asarray(x, dtype=float)
    D = res.x - x
    if np.linalg.norm(D) < 1e-12:
        return None
    # solver points carry residuals of order tol; judge membership relative
    # to how well the current point itself satisfies the rows
    tol = max(MEMBERSHIP_TOL, 2.0 * violation(prog, x))
    best, j = None, 1
    while j * delta <= reach + 1e-12:
        cand = x + j * delta * D
        if not is_member(prog, cand, tol):
            break
        best, j = cand, j + 1
    return best


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    status: str
    x: np.ndarray | None
    prog: ConicProgram
    trace: IterationTrace
    variant: str
    iterations: int = 0
    restarts: int = 0
    f0: float = float("nan")
    c_final: float | None = None
    certificate: dict | None = None
    message: str = ""
    _stationarity: RowBlock | None = None

    @property
    def blocks(self) -> dict:
        return {} if self.x is None else self.prog.layout.unpack(self.x)

    @property
    def objective(self) -> float:
        return float("nan") if self.x is None else self.prog.objective.value(self.x)


def certify(g: RobotGraph, goal: GoalSpec, mode: str = ROT, m_dirs: int = 42,
            settings: SolverSettings | None = None) -> SolverResult:
    """Solve the relaxation with stationarity rows; Infeasible proves the goal unreachable."""
    prog = assemble_relaxation(g, goal, mode, m_dirs, stationarity=True)
    return solve(prog, settings)


def _lambda_sum(prog: ConicProgram, x: np.ndarray) -> float:
    return sum(float(np.linalg.eigvalsh(M)[-1]) for M in prog.layout.unpack(x).values())


def _iterate(res: RunResult, cfg: RankMinConfig, k_start: int) -> RunResult:
    """Main rank-minimisation loop from ``res.x``; mutates and returns ``res``."""
    prog, trace = res.prog, res.trace
    settings = cfg.solver
    base = prog if res._stationarity is None else prog.with_rows(eq=[res._stationarity])
    c = res.c_final if res.c_final is not None else cfg.c_initial
    x = res.x
    k = k_start
    budget_end = k_start + cfg.k_max
    history = []
    res.message = ""
    polished = 0
    while True:
        blocks = prog.layout.unpack(x)
        if is_rank_one(prog, blocks, cfg.eps1):
            res.status = RANK_ONE
            if (polished >= cfg.polish_max or k >= budget_end
                    or max_second_eigenvalue(blocks) <= cfg.polish_tol):
                break
            polished += 1
        W = sum(deficiency(prog, blocks).values())
        history.append(W)
        if (cfg.stall_window and not polished and len(history) > cfg.stall_window
                and history[-cfg.stall_window - 1] - W
                < cfg.stall_progress * history[-cfg.stall_window - 1]):
            res.status = STALLED
            res.message = f"no progress in the last {cfg.stall_window} iterations"
            break
        if k >= budget_end:
            res.status, res.message = STALLED, "iteration budget exhausted"
            break
        k += 1
        if res.variant == EIGENMAX:
            step = step_eigenmax(base, x, settings, cfg.gap_tol)
            c_used = None
        else:
            if cfg.reset_c:
                c = cfg.c_initial
            step, c_used, p = None, c, 0
            while True:
                step = step_costrelax(prog, x, c_used, settings, cfg.gap_tol)
                if step.status == OPTIMAL or not cfg.adaptive_c or p >= cfg.max_c_retries:
                    break
                c_next = adapt_c(c, p + 1)
                if c_next >= 1.0:        # rounded up to 1: no weaker c exists
                    break
                p += 1
                c_used = c_next
            if step.status == OPTIMAL:
                c = c_used
        if step.status != OPTIMAL:
            k -= 1
            if not polished:
                res.status, res.message = FAILED, f"update step returned {step.status} at k={k + 1}"
            break
        x_new = step.x
        if res.variant == EIGENMAX and _lambda_sum(prog, x_new) < _lambda_sum(prog, x):
            # the exact update never lowers the sum; a drop is solver noise near
            # the rank-one face, so keep the previous iterate
            k -= 1
            res.status = RANK_ONE if is_rank_one(prog, blocks, cfg.eps1) else STALLED
            res.message = "update did not raise the top eigenvalue sum"
            break
        if res.variant != EIGENMAX and (sum(deficiency(prog, prog.layout.unpack(x_new)).values())
                                        > c_used * W + CONTRACTION_SLACK):
            # the subproblem imposes this contraction; missing it means the
            # solver answer is not accurate enough to use
            k -= 1
            res.status = RANK_ONE if is_rank_one(prog, blocks, cfg.eps1) else STALLED
            res.message = "update missed the required contraction"
            break
        norm = float(np.linalg.norm(x_new - x))
        x = x_new
        trace.record(k, prog.layout.unpack(x), prog.objective.value(x), norm, c_used)
        if norm < cfg.eps2:
            blocks = prog.layout.unpack(x)
            res.status = RANK_ONE if is_rank_one(prog, blocks, cfg.eps1) else STALLED
            res.message = "step norm below eps2"
            break
    res.x, res.iterations, res.c_final = x, k, c
    return res


def resume(res: RunResult, cfg: RankMinConfig, attempts: int | None = None) -> RunResult:
    """Restart a stalled or failed run up to ``attempts`` times."""
    attempts = cfg.restart_attempts if attempts is None else attempts
    rng = np.random.default_rng(cfg.seed + 7919)
    base = res.prog if res._stationarity is None else res.prog.with_rows(eq=[res._stationarity])
    while res.status in (STALLED, FAILED) and res.x is not None and attempts > 0:
        attempts -= 1
        new_x = restart(base, res.x, cfg.restart_delta, rng, cfg.solver, cfg.restart_reach)
        res.restarts += 1
        if new_x is None:
            res.trace.events.append((res.iterations, "restart-failed"))
            continue
        res.trace.events.append((res.iterations, "restart"))
        res.x = new_x
        res.iterations += 1
        res.trace.record(res.iterations, res.prog.layout.unpack(new_x),
                         res.prog.objective.value(new_x), float("nan"), res.c_final)
        _iterate(res, cfg, res.iterations)
    return res


def run(g: RobotGraph, goal: GoalSpec, cfg: RankMinConfig | None = None,
        restarts: bool = True) -> RunResult:
    """Relax, then iterate until every lifted block is rank one."""
    cfg = cfg or RankMinConfig()
    prog = assemble_relaxation(g, goal, cfg.mode, cfg.m_dirs, limits=cfg.limits)
    trace = IterationTrace()
    res = RunResult(FAILED, None, prog, trace, cfg.variant)

    stat = None
    if cfg.variant in (EIGENMAX, AUTO):
        try:
            stat = assemble_stationarity(prog)
        except ValueError:
            stat = None
    if cfg.variant == EIGENMAX:
        if stat is None:
            res.status = INFEASIBLE_STATUS
            res.message = "stationarity rows inconsistent"
            return res
        first = solve(prog.with_rows(eq=[stat]), cfg.solver)
    else:
        first = solve(prog, cfg.solver)

    if first.status == INFEASIBLE:
        res.status, res.certificate = INFEASIBLE_STATUS, first.certificate
        res.message = "relaxation infeasible"
        return res
    if first.status != OPTIMAL:
        res.message = f"initial relaxation returned {first.status}"
        return res

    x0 = first.x
    res.f0 = prog.objective.value(x0)
    if cfg.variant == AUTO:
        res.variant = EIGENMAX if res.f0 <= F_ZERO_TOL and stat is not None else COSTRELAX
        if res.variant == EIGENMAX:
            again = solve(prog.with_rows(eq=[stat]), cfg.solver)
            if again.status == OPTIMAL:
                x0 = again.x
                res.f0 = prog.objective.value(x0)
            else:
                res.variant = COSTRELAX
    if res.variant == EIGENMAX:
        res._stationarity = stat
    res.x = x0
    trace.record(0, prog.layout.unpack(x0), res.f0, float("nan"),
                 None if res.variant == EIGENMAX else cfg.c_initial)
    _iterate(res, cfg, 0)
    if restarts and cfg.restart_attempts > 0:
        resume(res, cfg)
    return res


def with_overrides(cfg: RankMinConfig, **kw) -> RankMinConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
