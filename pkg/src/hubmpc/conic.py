"""Second-order cone programs: container, residual checks and interior-point solve.

A :class:`ConicProgram` holds a linear objective, sparse equality and
inequality rows, second-order cone blocks (first row is the cone's t entry)
and per-variable box bounds.  Solving is delegated to Clarabel, a primal-dual
interior-point method on the homogeneous embedding with Ruiz equilibration,
which meets the determinism and accuracy contract required here; feasibility
residuals and the duality gap are recomputed independently from the returned
iterate so callers never rely on the backend's self-report.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

import clarabel

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITERS = "max_iters"

_STATUS_MAP = {
    "Solved": OPTIMAL,
    "PrimalInfeasible": INFEASIBLE,
    "DualInfeasible": INFEASIBLE,
    "AlmostPrimalInfeasible": INFEASIBLE,
    "AlmostDualInfeasible": INFEASIBLE,
}


class RowBlock:
    """Accumulates sparse rows ``sum_j coef*x[col] (= | <=) rhs`` in batches."""

    def __init__(self) -> None:
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._data: list[np.ndarray] = []
        self._rhs: list[np.ndarray] = []
        self.n_rows = 0

    def add(self, cols, coefs, rhs) -> None:
        """Add a batch of rows with a common entry count.

        ``cols`` and ``coefs`` have shape (n_rows, n_entries); ``rhs`` has
        shape (n_rows,).  Scalars/1-d inputs describe a single row.
        """
        cols = np.atleast_2d(np.asarray(cols, dtype=np.int64))
        coefs = np.atleast_2d(np.asarray(coefs, dtype=float))
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        n, width = cols.shape
        if coefs.shape == (1, width) and n > 1:
            coefs = np.broadcast_to(coefs, (n, width))
        if coefs.shape != (n, width) or rhs.shape != (n,):
            raise ValueError("inconsistent batch shapes")
        rows = np.repeat(np.arange(self.n_rows, self.n_rows + n), width)
        self._rows.append(rows)
        self._cols.append(cols.ravel())
        self._data.append(np.asarray(coefs, dtype=float).ravel())
        self._rhs.append(rhs)
        self.n_rows += n

    def build(self, n_vars: int) -> tuple[sp.csr_matrix, np.ndarray]:
        if self.n_rows == 0:
            return sp.csr_matrix((0, n_vars)), np.zeros(0)
        rows = np.concatenate(self._rows)
        cols = np.concatenate(self._cols)
        data = np.concatenate(self._data)
        if cols.size and (cols.min() < 0 or cols.max() >= n_vars):
            raise ValueError("column index out of range")
        mat = sp.csr_matrix((data, (rows, cols)), shape=(self.n_rows, n_vars))
        return mat, np.concatenate(self._rhs)


@dataclass(frozen=True)
class ConicProgram:
    """min c'x  s.t.  A_eq x = b_eq,  A_ineq x <= b_ineq,
    (t_j(x), v_j(x)) in SOC per block,  lb <= x <= ub.

    Cone blocks are stored stacked: rows ``soc_offsets[j] : soc_offsets[j+1]``
    of ``(soc_mat, soc_vec)`` are the affine entries of block ``j``, the first
    row being t.
    """

    n_vars: int
    objective: np.ndarray
    eq_mat: sp.csr_matrix
    eq_vec: np.ndarray
    ineq_mat: sp.csr_matrix
    ineq_vec: np.ndarray
    soc_mat: sp.csr_matrix
    soc_vec: np.ndarray
    soc_dims: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    def __post_init__(self) -> None:
        if self.objective.shape != (self.n_vars,):
            raise ValueError("objective length mismatch")
        for mat in (self.eq_mat, self.ineq_mat, self.soc_mat):
            if mat.shape[1] != self.n_vars:
                raise ValueError("row block column count mismatch")
        if int(self.soc_dims.sum()) != self.soc_mat.shape[0]:
            raise ValueError("cone dimensions do not cover the soc rows")
        if np.any(self.soc_dims < 2):
            raise ValueError("each cone block needs a t row and at least one vector row")
        if np.any(self.lb > self.ub):
            raise ValueError("empty box bound")

    @property
    def n_eq(self) -> int:
        return self.eq_mat.shape[0]

    @property
    def n_ineq(self) -> int:
        return self.ineq_mat.shape[0]

    @property
    def n_soc(self) -> int:
        return len(self.soc_dims)


class ProgramBuilder:
    """Incremental construction of a :class:`ConicProgram`."""

    def __init__(self, n_vars: int) -> None:
        self.n_vars = n_vars
        self.objective = np.zeros(n_vars)
        self.eq = RowBlock()
        self.ineq = RowBlock()
        self._soc = RowBlock()
        self._soc_dims: list[int] = []
        self.lb = np.full(n_vars, -np.inf)
        self.ub = np.full(n_vars, np.inf)

    def add_objective(self, cols, coefs) -> None:
        np.add.at(self.objective, np.asarray(cols, dtype=np.int64).ravel(),
                  np.asarray(coefs, dtype=float).ravel())

    def add_soc_rows(self, cols, coefs, consts, dim: int, n_blocks: int) -> None:
        """Append ``n_blocks`` cone blocks of ``dim`` affine rows each.

        Rows are interleaved block-major: rows [j*dim, (j+1)*dim) belong to
        block j with the t row first.  Affine value of a row is
        ``sum coef*x + const``.
        """
        self._soc.add(cols, coefs, consts)
        self._soc_dims.extend([dim] * n_blocks)

    def set_bounds(self, idx, lower=None, upper=None) -> None:
        idx = np.asarray(idx, dtype=np.int64)
        if lower is not None:
            self.lb[idx] = lower
        if upper is not None:
            self.ub[idx] = upper

    def build(self) -> ConicProgram:
        eq_mat, eq_vec = self.eq.build(self.n_vars)
        ineq_mat, ineq_vec = self.ineq.build(self.n_vars)
        soc_mat, soc_vec = self._soc.build(self.n_vars)
        return ConicProgram(
            n_vars=self.n_vars,
            objective=self.objective,
            eq_mat=eq_mat, eq_vec=eq_vec,
            ineq_mat=ineq_mat, ineq_vec=ineq_vec,
            soc_mat=soc_mat, soc_vec=soc_vec,
            soc_dims=np.asarray(self._soc_dims, dtype=np.int64),
            lb=self.lb, ub=self.ub,
        )


@dataclass(frozen=True)
class Residuals:
    """Feasibility residuals of an iterate, computed without the backend."""

    eq_abs: float
    ineq_violation: float
    cone_violation: float
    bound_violation: float
    duality_gap: float


@dataclass(frozen=True)
class Solution:
    status: str
    primal: np.ndarray
    objective_value: float
    iterations: int
    solve_seconds: float
    residuals: Residuals
    raw_status: str

    def soc_residuals(self, program: ConicProgram) -> np.ndarray:
        """Per-block cone residual t - ||v|| at the solution (>= 0 feasible)."""
        return _soc_residuals(program, self.primal)


def _soc_residuals(program: ConicProgram, x: np.ndarray) -> np.ndarray:
    if program.n_soc == 0:
        return np.zeros(0)
    vals = program.soc_mat @ x + program.soc_vec
    dims = program.soc_dims
    if np.all(dims == dims[0]):
        blocks = vals.reshape(program.n_soc, int(dims[0]))
        return blocks[:, 0] - np.linalg.norm(blocks[:, 1:], axis=1)
    out = np.empty(program.n_soc)
    off = 0
    for j, dim in enumerate(dims):
        out[j] = vals[off] - np.linalg.norm(vals[off + 1 : off + dim])
        off += dim
    return out


def evaluate_residuals(program: ConicProgram, x: np.ndarray, gap: float) -> Residuals:
    eq_abs = 0.0
    if program.n_eq:
        eq_abs = float(np.max(np.abs(program.eq_mat @ x - program.eq_vec)))
    ineq_violation = 0.0
    if program.n_ineq:
        ineq_violation = float(np.max(program.ineq_mat @ x - program.ineq_vec, initial=0.0))
    cone_violation = 0.0
    if program.n_soc:
        cone_violation = float(max(0.0, -np.min(_soc_residuals(program, x))))
    bv = 0.0
    finite_lb = np.isfinite(program.lb)
    finite_ub = np.isfinite(program.ub)
    if finite_lb.any():
        bv = max(bv, float(np.max(program.lb[finite_lb] - x[finite_lb], initial=0.0)))
    if finite_ub.any():
        bv = max(bv, float(np.max(x[finite_ub] - program.ub[finite_ub], initial=0.0)))
    return Residuals(eq_abs=eq_abs, ineq_violation=ineq_violation,
                     cone_violation=cone_violation, bound_violation=bv,
                     duality_gap=gap)


def _to_backend(program: ConicProgram):
    """Stack blocks into the backend's A x + s = b, s in K form."""
    blocks = []
    vecs = []
    cones = []
    if program.n_eq:
        blocks.append(program.eq_mat)
        vecs.append(program.eq_vec)
        cones.append(clarabel.ZeroConeT(program.n_eq))
    n_nonneg = program.n_ineq
    if program.n_ineq:
        blocks.append(program.ineq_mat)
        vecs.append(program.ineq_vec)
    fin_ub = np.flatnonzero(np.isfinite(program.ub))
    fin_lb = np.flatnonzero(np.isfinite(program.lb))
    nb = len(fin_ub) + len(fin_lb)
    if nb:
        data = np.concatenate([np.ones(len(fin_ub)), -np.ones(len(fin_lb))])
        rows = np.arange(nb)
        cols = np.concatenate([fin_ub, fin_lb])
        blocks.append(sp.csr_matrix((data, (rows, cols)), shape=(nb, program.n_vars)))
        vecs.append(np.concatenate([program.ub[fin_ub], -program.lb[fin_lb]]))
        n_nonneg += nb
    if n_nonneg:
        cones.append(clarabel.NonnegativeConeT(n_nonneg))
    if program.n_soc:
        blocks.append(-program.soc_mat)
        vecs.append(program.soc_vec)
        cones.extend(clarabel.SecondOrderConeT(int(d)) for d in program.soc_dims)
    if not blocks:
        blocks.append(sp.csr_matrix((0, program.n_vars)))
        vecs.append(np.zeros(0))
    A = sp.vstack(blocks, format="csc")
    b = np.concatenate(vecs)
    return A, b, cones


class ConicSolver:
    """Stateless interior-point solve with independent residual verification.

    Instances are immutable and may be shared across threads; each call builds
    its own backend workspace, and a fixed iteration schedule makes repeated
    solves of the same program bit-identical on one platform.
    """

    def __init__(self, tol: float = 1e-6, max_iter: int = 200) -> None:
        if tol <= 0.0:
            raise ValueError("tolerance must be positive")
        self.tol = tol
        self.max_iter = max_iter

    def solve(self, program: ConicProgram, tol: float | None = None) -> Solution:
        tol = self.tol if tol is None else tol
        A, b, cones = _to_backend(program)
        P = sp.csc_matrix((program.n_vars, program.n_vars))
        settings = clarabel.DefaultSettings()
        settings.verbose = False
        settings.max_iter = self.max_iter
        # solve an order tighter than the contract so recomputed residuals clear it
        inner = min(1e-9, tol * 1e-3)
        settings.tol_feas = inner
        settings.tol_gap_abs = inner
        settings.tol_gap_rel = inner
        t0 = time.perf_counter()
        solver = clarabel.DefaultSolver(P, program.objective, A.tocsc(), b, cones, settings)
        raw = solver.solve()
        seconds = time.perf_counter() - t0
        raw_status = str(raw.status)
        status = _STATUS_MAP.get(raw_status, MAX_ITERS)
        x = np.asarray(raw.x, dtype=float)
        z = np.asarray(raw.z, dtype=float)
        # gap for min c'x with Ax + s = b: dual objective is -b'z
        gap = abs(float(program.objective @ x) + float(b @ z))
        residuals = evaluate_residuals(program, x, gap)
        return Solution(
            status=status,
            primal=x,
            objective_value=float(program.objective @ x),
            iterations=int(raw.iterations),
            solve_seconds=seconds,
            residuals=residuals,
            raw_status=raw_status,
        )


def _fmt_row(mat: sp.csr_matrix, vec: np.ndarray, r: int) -> str:
    lo, hi = mat.indptr[r], mat.indptr[r + 1]
    ent = " ".join(f"{mat.indices[j]}:{float(mat.data[j])!r}" for j in range(lo, hi))
    return f"{float(vec[r])!r} {ent}".rstrip()


def dump_program(program: ConicProgram, path) -> None:
    """Write the program in the line-oriented text format (see docs/program_format.md)."""
    lines = ["CONICPROGRAM 1", f"VARS {program.n_vars}"]
    nz = np.flatnonzero(program.objective)
    lines.append("MIN " + " ".join(f"{j}:{float(program.objective[j])!r}" for j in nz))
    lines.append(f"EQ {program.n_eq}")
    for r in range(program.n_eq):
        lines.append(_fmt_row(program.eq_mat, program.eq_vec, r))
    lines.append(f"INEQ {program.n_ineq}")
    for r in range(program.n_ineq):
        lines.append(_fmt_row(program.ineq_mat, program.ineq_vec, r))
    lines.append(f"SOC {program.n_soc}")
    off = 0
    for dim in program.soc_dims:
        lines.append(f"BLOCK {dim}")
        for r in range(off, off + dim):
            lines.append(_fmt_row(program.soc_mat, program.soc_vec, r))
        off += dim
    fin = np.flatnonzero(np.isfinite(program.lb) | np.isfinite(program.ub))
    lines.append(f"BOUNDS {len(fin)}")
    for j in fin:
        lines.append(f"{j} {float(program.lb[j])!r} {float(program.ub[j])!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_rows(lines: list[str], start: int, count: int, block: RowBlock) -> int:
    for r in range(start, start + count):
        parts = lines[r].split()
        rhs = float(parts[0])
        if len(parts) > 1:
            cols = [int(p.split(":")[0]) for p in parts[1:]]
            coefs = [float(p.split(":")[1]) for p in parts[1:]]
        else:
            cols, coefs = [0], [0.0]
        block.add([cols], [coefs], [rhs])
    return start + count


def parse_program(path) -> ConicProgram:
    """Read a program written by :func:`dump_program`."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if lines[0].split() != ["CONICPROGRAM", "1"]:
        raise ValueError("not a conic program dump (bad header)")
    n_vars = int(lines[1].split()[1])
    builder = ProgramBuilder(n_vars)
    for part in lines[2].split()[1:]:
        j, c = part.split(":")
        builder.add_objective([int(j)], [float(c)])
    pos = 3
    n_eq = int(lines[pos].split()[1]); pos += 1
    pos = _parse_rows(lines, pos, n_eq, builder.eq)
    n_in = int(lines[pos].split()[1]); pos += 1
    pos = _parse_rows(lines, pos, n_in, builder.ineq)
    n_soc = int(lines[pos].split()[1]); pos += 1
    for _ in range(n_soc):
        dim = int(lines[pos].split()[1]); pos += 1
        pos = _parse_rows(lines, pos, dim, builder._soc)
        builder._soc_dims.append(dim)
    n_b = int(lines[pos].split()[1]); pos += 1
    for r in range(pos, pos + n_b):
        j, lo, hi = lines[r].split()
        builder.set_bounds([int(j)], float(lo), float(hi))
    return builder.build()
