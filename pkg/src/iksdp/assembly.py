"""Assembly of the relaxed inverse-kinematics conic program.

Decision vector ``x`` is the concatenation of the symmetric vectorisations of
every lifted block (upper triangle, column major, off-diagonal entries scaled
by sqrt(2) so that ``svec(A) . svec(B) = <A, B>``).  Every kinematic quantity
(rotation columns, link translations, extensions) is an affine function of
``x``; constraints and the cost are built from those affine maps.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .lifting import BLOCK_SIZE, QUAT, ROT, TRACE, lift_quaternion
from .robot_model import (PRISMATIC, REVOLUTE, JointEdge, ModelError, Pose,
                          RobotGraph)

SQRT2 = np.sqrt(2.0)
E1, E3 = np.eye(3)[0], np.eye(3)[2]


# ---------------------------------------------------------------------------
# variable layout
# ---------------------------------------------------------------------------

def svec_size(n: int) -> int:
    return n * (n + 1) // 2


def svec(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    r, c = np.triu_indices(n)
    order = np.lexsort((r, c))
    r, c = r[order], c[order]
    return np.where(r == c, 1.0, SQRT2) * M[r, c]


def smat(v, n: int) -> np.ndarray:
    r, c = np.triu_indices(n)
    order = np.lexsort((r, c))
    r, c = r[order], c[order]
    M = np.zeros((n, n))
    vals = np.asarray(v, dtype=float) / np.where(r == c, 1.0, SQRT2)
    M[r, c] = vals
    M[c, r] = vals
    return M


@dataclass(frozen=True)
class Block:
    name: str
    size: int
    kind: str   # "rot", "quat" or "tau"
    offset: int

    @property
    def trace(self) -> float:
        return TRACE[self.kind]


def tau_block_name(e: JointEdge) -> str:
    return f"tau:{e.parent}->{e.child}"


class Layout:
    """Block structure of the decision vector for a robot and lift mode."""

    def __init__(self, g: RobotGraph, mode: str = ROT):
        if mode not in BLOCK_SIZE:
            raise ValueError(f"unknown lift mode {mode!r}")
        self.mode = mode
        blocks, off = [], 0
        for v in g.free_links:
            n = BLOCK_SIZE[mode]
            blocks.append(Block(v, n, mode, off))
            off += svec_size(n)
        for e in g.edges_of(PRISMATIC):
            blocks.append(Block(tau_block_name(e), 8, "tau", off))
            off += svec_size(8)
        self.blocks: list[Block] = blocks
        self.n = off
        self._by_name = {b.name: b for b in blocks}

    @classmethod
    def from_blocks(cls, spec, mode: str = ROT) -> "Layout":
        """Layout from ``(name, size, kind)`` triples, without a robot."""
        self = cls.__new__(cls)
        self.mode = mode
        blocks, off = [], 0
        for name, size, kind in spec:
            blocks.append(Block(name, int(size), kind, off))
            off += svec_size(int(size))
        self.blocks, self.n = blocks, off
        self._by_name = {b.name: b for b in blocks}
        return self

    def __contains__(self, name):
        return name in self._by_name

    def __getitem__(self, name) -> Block:
        return self._by_name[name]

    def slot(self, name: str, r: int, c: int) -> tuple[int, float]:
        """Index into ``x`` holding entry ``(r, c)`` and its svec scale."""
        b = self._by_name[name]
        if r > c:
            r, c = c, r
        return b.offset + c * (c + 1) // 2 + r, (1.0 if r == c else SQRT2)

    def entry(self, name: str, r: int, c: int) -> np.ndarray:
        row = np.zeros(self.n)
        k, s = self.slot(name, r, c)
        row[k] = 1.0 / s
        return row

    def inner(self, name: str, C) -> np.ndarray:
        """Row ``a`` with ``a . x = <C, M_name>`` for symmetric ``C``."""
        b = self._by_name[name]
        row = np.zeros(self.n)
        C = 0.5 * (np.asarray(C, dtype=float) + np.asarray(C, dtype=float).T)
        row[b.offset:b.offset + svec_size(b.size)] = svec(C)
        return row

    def pack(self, mats: dict) -> np.ndarray:
        x = np.zeros(self.n)
        for b in self.blocks:
            x[b.offset:b.offset + svec_size(b.size)] = svec(mats[b.name])
        return x

    def unpack(self, x) -> dict[str, np.ndarray]:
        x = np.asarray(x, dtype=float)
        return {b.name: smat(x[b.offset:b.offset + svec_size(b.size)], b.size)
                for b in self.blocks}


class Affine:
    """Affine map ``x -> M x + c`` with ``m`` outputs."""

    __slots__ = ("M", "c")
    __array_ufunc__ = None  # let ``ndarray @ Affine`` reach __rmatmul__

    def __init__(self, M, c):
        self.M = np.atleast_2d(np.asarray(M, dtype=float))
        self.c = np.atleast_1d(np.asarray(c, dtype=float))

    @classmethod
    def zeros(cls, m: int, n: int) -> "Affine":
        return cls(np.zeros((m, n)), np.zeros(m))

    @classmethod
    def const(cls, c, n: int) -> "Affine":
        c = np.atleast_1d(np.asarray(c, dtype=float))
        return cls(np.zeros((len(c), n)), c)

    def __len__(self):
        return len(self.c)

    def __add__(self, o: "Affine") -> "Affine":
        return Affine(self.M + o.M, self.c + o.c)

    def __sub__(self, o: "Affine") -> "Affine":
        return Affine(self.M - o.M, self.c - o.c)

    def __neg__(self) -> "Affine":
        return Affine(-self.M, -self.c)

    def __mul__(self, s: float) -> "Affine":
        return Affine(s * self.M, s * self.c)

    __rmul__ = __mul__

    def __rmatmul__(self, K) -> "Affine":
        K = np.asarray(K, dtype=float)
        return Affine(K @ self.M, K @ self.c)

    def __call__(self, x) -> np.ndarray:
        return self.M @ np.asarray(x, dtype=float) + self.c

    @staticmethod
    def stack(parts) -> "Affine":
        parts = list(parts)
        return Affine(np.vstack([p.M for p in parts]), np.concatenate([p.c for p in parts]))


# ---------------------------------------------------------------------------
# affine kinematic maps
# ---------------------------------------------------------------------------

class KinematicMaps:
    """Affine expressions of rotations and translations in the lifted variables."""

    def __init__(self, g: RobotGraph, layout: Layout):
        self.g = g
        self.layout = layout
        self.n = layout.n
        self._rot_cache: dict[str, Affine] = {}

    def rotation_vec(self, link: str) -> Affine:
        """``vec(R_link)`` (column major, 9 outputs)."""
        if link in self._rot_cache:
            return self._rot_cache[link]
        L, n = self.layout, self.n
        if link in self.g.bases:
            out = Affine.const(self.g.bases[link].R.reshape(-1, order="F"), n)
        elif L.mode == ROT:
            rows = [L.entry(link, r, 6) for r in range(3)]
            rows += [L.entry(link, 3 + r, 6) for r in range(3)]
            rows += [L.entry(link, 1, 5) - L.entry(link, 2, 4),
                     L.entry(link, 2, 3) - L.entry(link, 0, 5),
                     L.entry(link, 0, 4) - L.entry(link, 1, 3)]
            out = Affine(np.array(rows), np.zeros(9))
        else:
            out = self._quaternion_rotation(link)
        self._rot_cache[link] = out
        return out

    def _quaternion_rotation(self, link: str) -> Affine:
        L = self.layout
        e = lambda r, c: L.entry(link, r, c)  # noqa: E731
        # R[row, col] as (coefficient row, constant); quaternion index r,x,y,z = 0..3
        R = [[(-2 * (e(2, 2) + e(3, 3)), 1.0), (2 * (e(1, 2) - e(0, 3)), 0.0),
              (2 * (e(1, 3) + e(0, 2)), 0.0)],
             [(2 * (e(1, 2) + e(0, 3)), 0.0), (-2 * (e(1, 1) + e(3, 3)), 1.0),
              (2 * (e(2, 3) - e(0, 1)), 0.0)],
             [(2 * (e(1, 3) - e(0, 2)), 0.0), (2 * (e(2, 3) + e(0, 1)), 0.0),
              (-2 * (e(1, 1) + e(2, 2)), 1.0)]]
        rows, consts = [], []
        for col in range(3):
            for row in range(3):
                a, c0 = R[row][col]
                rows.append(a)
                consts.append(c0)
        return Affine(np.array(rows), np.array(consts))

    def rotate(self, link: str, v) -> Affine:
        """``R_link @ v`` for a constant vector ``v``."""
        v = np.asarray(v, dtype=float)
        return np.kron(v[None, :], np.eye(3)) @ self.rotation_vec(link)

    def rotation_times(self, link: str, K) -> Affine:
        """``vec(R_link @ K)`` for a constant 3x3 ``K``."""
        K = np.asarray(K, dtype=float)
        return np.kron(K.T, np.eye(3)) @ self.rotation_vec(link)

    def slide_axis(self, e: JointEdge) -> Affine:
        return self.rotate(e.parent, e.zero_rotation @ E3)

    def tau_column(self, e: JointEdge) -> Affine:
        """``W[0:3, 6]``, equal to ``tau * axis`` at rank one."""
        name = tau_block_name(e)
        return Affine(np.array([self.layout.entry(name, r, 6) for r in range(3)]), np.zeros(3))

    def joint_increment(self, e: JointEdge) -> Affine:
        """``T_child - T_parent`` across one joint."""
        if e.kind == PRISMATIC:
            lo, hi = e.extension_limits
            return lo * self.slide_axis(e) + (hi - lo) * self.tau_column(e)
        return self.rotate(e.parent, e.offset)

    def path_increment(self, path) -> Affine:
        """``T_end - T_start`` along a link path, edges in either direction."""
        out = Affine.zeros(3, self.n)
        for a, b in zip(path[:-1], path[1:]):
            e, fwd = self.g.edge_between(a, b)
            inc = self.joint_increment(e)
            out = out + inc if fwd else out - inc
        return out

    def translation(self, link: str) -> Affine:
        path = self.g.path_from_base(link)
        return Affine.const(self.g.bases[path[0]].T, self.n) + self.path_increment(path)

    def lifted_entry(self, link: str, r: int, c: int) -> Affine:
        """Entry of a quaternion lift, constant for fixed links."""
        if link in self.g.bases:
            Q = lift_quaternion(self.g.bases[link].R)
            return Affine.const([Q[r, c]], self.n)
        return Affine(self.layout.entry(link, r, c)[None, :], [0.0])


# ---------------------------------------------------------------------------
# program containers
# ---------------------------------------------------------------------------

@dataclass
class GoalSpec:
    target: Pose
    weight_rotation: float = 1.0
    weight_translation: float = 1.0

    def __post_init__(self):
        if self.weight_rotation < 0 or self.weight_translation < 0:
            raise ValueError("goal weights must be nonnegative")
        if self.weight_rotation == 0 and self.weight_translation == 0:
            raise ValueError("goal weights cannot both be zero")


@dataclass
class QuadraticObjective:
    """``f(x) = x'Px + q'x + r``; ``residual`` (if set) gives ``f = |residual(x)|^2``."""

    P: np.ndarray
    q: np.ndarray
    r: float = 0.0
    residual: Affine | None = None

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if self.residual is not None:
            res = self.residual(x)
            return float(res @ res)
        return float(x @ self.P @ x + self.q @ x + self.r)

    def gradient(self, x) -> np.ndarray:
        return 2.0 * self.P @ np.asarray(x, dtype=float) + self.q


@dataclass
class LinearObjective:
    q: np.ndarray
    r: float = 0.0

    def value(self, x) -> float:
        return float(self.q @ np.asarray(x, dtype=float) + self.r)


@dataclass
class RowBlock:
    """Rows ``A x (=|<=) b`` with a label used for statistics."""

    A: np.ndarray
    b: np.ndarray
    label: str

    @classmethod
    def from_affine(cls, expr: Affine, label: str) -> "RowBlock":
        # expr(x) = 0  <=>  M x = -c   (or <= 0)
        return cls(expr.M, -expr.c, label)


@dataclass
class ConicProgram:
    """Rows, cones and objective over the concatenated block vectorisations.

    ``soc`` holds affine maps ``t(x)`` (length >= 2) constrained to the
    second-order cone ``t[0] >= |t[1:]|``.
    """

    layout: Layout
    eq: list[RowBlock] = field(default_factory=list)
    ineq: list[RowBlock] = field(default_factory=list)
    objective: QuadraticObjective | LinearObjective | None = None
    soc: list[Affine] = field(default_factory=list)

    @staticmethod
    def _stack(rows: list[RowBlock], n: int):
        rows = [r for r in rows if len(r.b)]
        if not rows:
            return sp.csr_matrix((0, n)), np.zeros(0)
        A = np.vstack([r.A for r in rows])
        b = np.concatenate([r.b for r in rows])
        A[np.abs(A) < 1e-15] = 0.0
        return sp.csr_matrix(A), b

    @property
    def n(self) -> int:
        return self.layout.n

    @cached_property
    def eq_system(self):
        return self._stack(self.eq, self.n)

    @cached_property
    def ineq_system(self):
        return self._stack(self.ineq, self.n)

    def with_rows(self, eq=(), ineq=(), objective=None, soc=()) -> "ConicProgram":
        return ConicProgram(self.layout, self.eq + list(eq), self.ineq + list(ineq),
                            self.objective if objective is None else objective,
                            self.soc + list(soc))

    def stats(self) -> dict:
        sizes = [b.size for b in self.layout.blocks]
        return {
            "mode": self.layout.mode,
            "blocks": len(sizes),
            "block_sizes": {str(s): sizes.count(s) for s in sorted(set(sizes))},
            "variables": self.n,
            "eq_rows": int(sum(len(r.b) for r in self.eq)),
            "ineq_rows": int(sum(len(r.b) for r in self.ineq)),
            "soc_cones": len(self.soc),
            "rows_by_label": {r.label: len(r.b) for r in self.eq + self.ineq},
        }

    def residuals(self, x) -> tuple[float, float]:
        """Max equality residual and max inequality (and cone) violation at ``x``."""
        x = np.asarray(x, dtype=float)
        Ae, be = self.eq_system
        Ai, bi = self.ineq_system
        req = float(np.abs(Ae @ x - be).max()) if len(be) else 0.0
        rin = float(np.maximum(Ai @ x - bi, 0.0).max()) if len(bi) else 0.0
        for cone in self.soc:
            t = cone(x)
            rin = max(rin, float(np.linalg.norm(t[1:]) - t[0]))
        return req, rin


def _drop_trivial(rb: RowBlock, tol: float = 1e-14) -> RowBlock:
    keep = (np.abs(rb.A).max(axis=1) > tol) | (np.abs(rb.b) > 1e-12) if len(rb.b) else []
    return RowBlock(rb.A[keep], rb.b[keep], rb.label)


# ---------------------------------------------------------------------------
# constraint groups
# ---------------------------------------------------------------------------

def _maps(g, layout, mode=ROT) -> KinematicMaps:
    return KinematicMaps(g, layout if layout is not None else Layout(g, mode))


def assemble_structure(g: RobotGraph, layout: Layout | None = None) -> RowBlock:
    """Trace/structure equalities of every rotation or quaternion block."""
    km = _maps(g, layout)
    L = km.layout
    rows, rhs = [], []
    for b in L.blocks:
        if b.kind == ROT:
            rows += [L.inner(b.name, np.diag([1, 1, 1, 0, 0, 0, 0.0])),
                     L.inner(b.name, np.diag([0, 0, 0, 1, 1, 1, 0.0]))]
            C = np.zeros((7, 7))
            C[0:3, 3:6] = np.eye(3)
            rows += [L.inner(b.name, C), L.entry(b.name, 6, 6)]
            rhs += [1.0, 1.0, 0.0, 1.0]
        elif b.kind == QUAT:
            rows.append(L.inner(b.name, np.eye(4)))
            rhs.append(1.0)
    A = np.array(rows) if rows else np.zeros((0, L.n))
    return RowBlock(A, np.array(rhs), "structure")


def assemble_axis(g: RobotGraph, layout: Layout | None = None) -> RowBlock:
    """Shared z-axis of every revolute pair: ``R_i R_e e3 - R_j e3 = 0``."""
    km = _maps(g, layout)
    parts = [km.rotate(e.parent, e.zero_rotation @ E3) - km.rotate(e.child, E3)
             for e in g.edges_of(REVOLUTE)]
    if not parts:
        return RowBlock(np.zeros((0, km.n)), np.zeros(0), "axis")
    return _drop_trivial(RowBlock.from_affine(Affine.stack(parts), "axis"))


def _icosphere(subdivisions: int) -> np.ndarray:
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
             (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache, new_faces = {}, []

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return np.array(verts)


def sphere_directions(m: int) -> np.ndarray:
    """``m`` unit directions covering the sphere.

    Subdivided icosahedra are used for m in {12, 42, 162, 642}; other counts
    fall back to a Fibonacci lattice.
    """
    if m < 4:
        raise ValueError("need at least 4 directions")
    for k, count in enumerate((12, 42, 162, 642)):
        if m == count:
            return _icosphere(k)
    i = np.arange(m) + 0.5
    z = 1.0 - 2.0 * i / m
    phi = np.pi * (1.0 + np.sqrt(5.0)) * i
    rxy = np.sqrt(1.0 - z * z)
    return np.column_stack([rxy * np.cos(phi), rxy * np.sin(phi), z])


def joint_limit_vectors(km: KinematicMaps, e: JointEdge) -> Affine:
    """``w_i - w_j = R_i R_e e1 - R_j e1``."""
    return km.rotate(e.parent, e.zero_rotation @ E1) - km.rotate(e.child, E1)


def assemble_angle_polyhedron(g: RobotGraph, m: int = 42,
                              layout: Layout | None = None) -> tuple[RowBlock, RowBlock]:
    """Tangent-plane outer approximation of the joint-limit balls.

    Returns ``(ineq_rows, eq_rows)``; joints with ``alpha == 0`` are locked by
    equalities, joints with ``alpha >= pi`` contribute nothing.
    """
    km = _maps(g, layout)
    D = sphere_directions(m)
    ineq, eq = [], []
    for e in g.edges_of(REVOLUTE):
        if e.alpha >= np.pi:
            continue
        w = joint_limit_vectors(km, e)
        if e.alpha == 0.0:
            eq.append(w)
            continue
        ineq.append(D @ w - Affine.const(np.full(len(D), e.limit_radius), km.n))
    n = km.n
    rin = (_drop_trivial(RowBlock.from_affine(Affine.stack(ineq), "angle"))
           if ineq else RowBlock(np.zeros((0, n)), np.zeros(0), "angle"))
    req = (_drop_trivial(RowBlock.from_affine(Affine.stack(eq), "angle_lock"))
           if eq else RowBlock(np.zeros((0, n)), np.zeros(0), "angle_lock"))
    return rin, req


def assemble_angle_balls(g: RobotGraph, layout: Layout | None = None) -> list[Affine]:
    """Exact joint-limit balls ``|w_i - w_j| <= rho`` as second-order cones.

    Locked joints (``alpha == 0``) are left to the equality rows of
    :func:`assemble_angle_polyhedron`.
    """
    km = _maps(g, layout)
    out = []
    for e in g.edges_of(REVOLUTE):
        if e.alpha >= np.pi or e.alpha == 0.0:
            continue
        w = joint_limit_vectors(km, e)
        out.append(Affine.stack([Affine.const([e.limit_radius], km.n), w]))
    return out


def assemble_parallel(g: RobotGraph, layout: Layout | None = None) -> RowBlock:
    """Orientation coupling across prismatic joints, ``R_j = R_i R_p``."""
    km = _maps(g, layout)
    parts = []
    for e in g.edges_of(PRISMATIC):
        if km.layout.mode == ROT:
            parts.append(km.rotation_vec(e.child) - km.rotation_times(e.parent, e.zero_rotation))
            continue
        # Q_child = K Q_parent K^T with K the right-multiplication matrix of q_p
        w, x, y, z = _unit_quaternion(e.zero_rotation)
        K = np.array([[w, -x, -y, -z], [x, w, z, -y], [y, -z, w, x], [z, y, -x, w]])
        for c in range(4):
            for r in range(c + 1):
                rhs = Affine.zeros(1, km.n)
                for a in range(4):
                    for b in range(4):
                        coef = K[r, a] * K[c, b]
                        if coef != 0.0:
                            rhs = rhs + coef * km.lifted_entry(e.parent, a, b)
                parts.append(km.lifted_entry(e.child, r, c) - rhs)
    if not parts:
        return RowBlock(np.zeros((0, km.n)), np.zeros(0), "parallel")
    return _drop_trivial(RowBlock.from_affine(Affine.stack(parts), "parallel"))


def _unit_quaternion(R) -> np.ndarray:
    from .lifting import quaternion_from_rotation
    return quaternion_from_rotation(R)


def assemble_prismatic(g: RobotGraph, layout: Layout | None = None) -> tuple[RowBlock, RowBlock]:
    """Linear relations of every prismatic lift; returns ``(eq_rows, ineq_rows)``."""
    km = _maps(g, layout)
    L = km.layout
    eq_rows, eq_rhs, in_rows, in_rhs = [], [], [], []
    eq_aff = []
    for e in g.edges_of(PRISMATIC):
        t = tau_block_name(e)
        eq_rows.append(L.inner(t, np.eye(8)))
        eq_rhs.append(2.0)
        eq_rows.append(L.inner(t, np.diag([1, 1, 1, 0, 0, 0, 0, 0.0])) - L.entry(t, 6, 6))
        eq_rows.append(L.inner(t, np.diag([0, 0, 0, 1, 1, 1, 0, 0.0])) - L.entry(t, 7, 7))
        eq_rhs += [0.0, 0.0]
        for r in range(3):
            eq_rows.append(L.entry(t, 3 + r, 6) - L.entry(t, r, 7))
            eq_rhs.append(0.0)
        C = np.zeros((8, 8))
        C[0:3, 3:6] = np.eye(3)
        eq_rows.append(L.inner(t, C) - L.entry(t, 6, 7))
        eq_rhs.append(0.0)
        in_rows += [-L.entry(t, 6, 6), L.entry(t, 6, 6), -L.entry(t, 6, 7)]
        in_rhs += [0.0, 1.0, 0.0]
        lhs = Affine(np.array([L.entry(t, r, 6) + L.entry(t, 3 + r, 7) for r in range(3)]),
                     np.zeros(3))
        eq_aff.append(lhs - km.slide_axis(e))
    n = L.n
    eq = RowBlock(np.array(eq_rows).reshape(-1, n), np.array(eq_rhs), "prismatic")
    if eq_aff:
        link = RowBlock.from_affine(Affine.stack(eq_aff), "prismatic")
        eq = RowBlock(np.vstack([eq.A, link.A]), np.concatenate([eq.b, link.b]), "prismatic")
    ineq = RowBlock(np.array(in_rows).reshape(-1, n), np.array(in_rhs), "prismatic_bounds")
    return eq, ineq


def assemble_closure(g: RobotGraph, layout: Layout | None = None) -> RowBlock:
    """Both paths of every closure must reach the same relative end pose."""
    km = _maps(g, layout)
    parts = []
    for cl in g.closures:
        if cl.path_a[0] != cl.path_b[0]:
            raise ModelError("closure paths must start at the same link")
        a_end, b_end = cl.path_a[-1], cl.path_b[-1]
        if a_end == b_end and not cl.relative.allclose(Pose.identity()):
            raise ModelError("closure paths end at the same link with a non-identity offset")
        parts.append(km.path_increment(cl.path_b) - km.path_increment(cl.path_a)
                     - km.rotate(a_end, cl.relative.T))
        parts.append(km.rotation_vec(b_end) - km.rotation_times(a_end, cl.relative.R))
    if not parts:
        return RowBlock(np.zeros((0, km.n)), np.zeros(0), "closure")
    return _drop_trivial(RowBlock.from_affine(Affine.stack(parts), "closure"))


def pose_residual(g: RobotGraph, goal: GoalSpec, layout: Layout | None = None) -> Affine:
    """Weighted stacked residual whose squared norm is the pose cost."""
    km = _maps(g, layout)
    ee = g.end_effector
    try:
        T = km.translation(ee)
    except ModelError as exc:
        raise ModelError(f"no path from a base to end effector {ee!r}") from exc
    rR = km.rotation_vec(ee) - Affine.const(goal.target.R.reshape(-1, order="F"), km.n)
    rT = T - Affine.const(goal.target.T, km.n)
    return Affine.stack([np.sqrt(goal.weight_rotation) * rR,
                         np.sqrt(goal.weight_translation) * rT])


def assemble_cost(g: RobotGraph, goal: GoalSpec, layout: Layout | None = None) -> QuadraticObjective:
    res = pose_residual(g, goal, layout)
    M, c = res.M, res.c
    return QuadraticObjective(M.T @ M, 2.0 * M.T @ c, float(c @ c), residual=res)


def assemble_stationarity(prog: ConicProgram, tol: float = 1e-10) -> RowBlock:
    """Rows equivalent to ``2 P x + q = 0`` in orthonormal reduced form."""
    obj = prog.objective
    if not isinstance(obj, QuadraticObjective):
        raise TypeError("stationarity requires a quadratic objective")
    if obj.residual is not None:
        # grad = 2 M'(Mx + c) = 0  <=>  Mx + c in null(M')  <=>  U_r'(Mx + c) = 0
        U, s, Vt = np.linalg.svd(obj.residual.M, full_matrices=False)
        r = int(np.sum(s > tol * max(s.max(initial=0.0), 1.0)))
        # U_r'(M x + c) = 0  <=>  S_r V_r' x = -U_r' c; divide through by S_r
        A = Vt[:r]
        b = -(U[:, :r].T @ obj.residual.c) / s[:r]
        return RowBlock(A, b, "stationarity")
    w, V = np.linalg.eigh(obj.P)
    keep = w > tol * max(abs(w).max(initial=0.0), 1.0)
    Vr = V[:, keep]
    outside = obj.q - Vr @ (Vr.T @ obj.q)
    if np.abs(outside).max(initial=0.0) > 1e-12:
        raise ValueError("stationarity rows are inconsistent: q is outside range(P)")
    A = Vr.T
    b = -(Vr.T @ obj.q) / (2.0 * w[keep])
    return RowBlock(A, b, "stationarity")


LIMIT_MODELS = ("polyhedron", "ball")


def assemble_relaxation(g: RobotGraph, goal: GoalSpec, mode: str = ROT, m_dirs: int = 42,
                        stationarity: bool = False, limits: str = "polyhedron") -> ConicProgram:
    """The full relaxed IK program over the lifted blocks.

    ``limits`` selects how joint-angle limits enter: the tangent-plane
    polyhedron with ``m_dirs`` faces, or the exact ball as a second-order cone.
    """
    if limits not in LIMIT_MODELS:
        raise ValueError(f"unknown limit model {limits!r}")
    layout = Layout(g, mode)
    angle_in, angle_eq = assemble_angle_polyhedron(g, m_dirs, layout)
    balls = []
    if limits == "ball":
        balls = assemble_angle_balls(g, layout)
        angle_in = RowBlock(np.zeros((0, layout.n)), np.zeros(0), "angle")
    p_eq, p_in = assemble_prismatic(g, layout)
    eq = [assemble_structure(g, layout), assemble_axis(g, layout), angle_eq,
          assemble_parallel(g, layout), p_eq, assemble_closure(g, layout)]
    prog = ConicProgram(layout, [r for r in eq if len(r.b)],
                        [r for r in (angle_in, p_in) if len(r.b)],
                        assemble_cost(g, goal, layout), balls)
    if stationarity:
        prog = prog.with_rows(eq=[assemble_stationarity(prog)])
    return prog


def lift_configuration(g: RobotGraph, q, layout: Layout) -> np.ndarray:
    """Decision vector of the exact lifts of a joint configuration."""
    from .lifting import lift_prismatic, lift_rotation
    from .robot_model import forward_kinematics

    poses = forward_kinematics(g, q)
    mats = {}
    for b in layout.blocks:
        if b.kind == ROT:
            mats[b.name] = lift_rotation(poses[b.name].R)
        elif b.kind == QUAT:
            mats[b.name] = lift_quaternion(poses[b.name].R)
    for e in g.edges_of(PRISMATIC):
        mats[tau_block_name(e)] = lift_prismatic(poses[e.child].R, q.extensions[e.key])
    return layout.pack(mats)
