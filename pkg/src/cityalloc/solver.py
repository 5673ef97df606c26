"""Deterministic LP and binary-MILP solving.

The LP path is a bounded-variable revised simplex: the basis is held as
a sparse LU factorization (SuperLU) refreshed every few dozen pivots,
with product-form eta updates in between.  The starting basis comes
from a singleton-column crash extended by a greedy triangular pass, so
slack-rich and network-like problems begin without artificial
variables.  Pricing is devex (reference-weight steepest-edge estimates)
with reduced costs updated incrementally from the pivot row; whenever
the objective stalls on degenerate pivots the rule switches to Bland's,
which rules out cycling, and every remaining tie is broken by lowest
column index, so repeated solves of the same problem are bit-identical.
The ratio test is a two-pass bound-relaxation test that prefers large
pivot elements.  Binary programs run depth-first branch and bound on
top of the LP, bounding with the relaxation objective.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

LE = "<="
EQ = "="
GE = ">="

_RELATIONS = (LE, EQ, GE)

# Nonbasic/basic variable states.  The first four double as the public
# basis codes used by BasisStart and SolveResult.*_status; _FIXED is
# internal and reported as at-lower.
BASIS_BASIC = _BASIC = 0
BASIS_AT_LOWER = _AT_LOWER = 1
BASIS_AT_UPPER = _AT_UPPER = 2
BASIS_FREE = _FREE = 3
_FIXED = 4

_REFACTOR_EVERY = 64
_PIVOT_TOL = 1e-9
_MAX_ITERS = 500_000


class SolverError(Exception):
    """Numerical failure or malformed problem inside the solver."""


def _as_matrix(rows, n: int) -> sp.csr_matrix:
    if sp.issparse(rows):
        mat = rows.tocsr().astype(np.float64, copy=False)
    else:
        arr = np.asarray(rows, dtype=np.float64)
        if arr.size == 0:
            return sp.csr_matrix((0, n))
        mat = sp.csr_matrix(np.atleast_2d(arr))
    if mat.shape[0] == 0:
        return sp.csr_matrix((0, n))
    if mat.shape[1] != n:
        raise ValueError(f"constraint matrix has {mat.shape[1]} columns, expected {n}")
    return mat


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """Immutable LP in the form sense c'x subject to rows and bounds.

    ``relations`` holds one of '<=', '=', '>=' per row.  Bounds default
    to x >= 0; use -inf/inf for free or one-sided variables.
    """

    sense: str
    objective: np.ndarray
    rows: sp.csr_matrix
    relations: np.ndarray
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __init__(self, sense, objective, rows, relations, rhs, lower=None, upper=None):
        c = np.asarray(objective, dtype=np.float64).ravel()
        n = c.size
        mat = _as_matrix(rows, n)
        rel = np.asarray(relations, dtype="U2").ravel()
        b = np.asarray(rhs, dtype=np.float64).ravel()
        lo = np.zeros(n) if lower is None else np.asarray(lower, dtype=np.float64).ravel()
        hi = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=np.float64).ravel()
        if sense not in ("min", "max"):
            raise ValueError(f"sense must be 'min' or 'max', got {sense!r}")
        if mat.shape[0] != rel.size or rel.size != b.size:
            raise ValueError("rows, relations and rhs disagree on the row count")
        if lo.size != n or hi.size != n:
            raise ValueError("bound arrays must match the variable count")
        bad = [r for r in rel if r not in _RELATIONS]
        if bad:
            raise ValueError(f"unknown relation {bad[0]!r}")
        if not np.all(np.isfinite(c)):
            raise ValueError("objective coefficients must be finite")
        if mat.nnz and not np.all(np.isfinite(mat.data)):
            raise ValueError("constraint coefficients must be finite")
        if not np.all(np.isfinite(b)):
            raise ValueError("constraint right-hand sides must be finite")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise ValueError("bounds may be infinite but not NaN")
        if np.any(lo > hi):
            j = int(np.argmax(lo > hi))
            raise ValueError(f"empty bound interval on variable {j}")
        for name, value in (("sense", sense), ("objective", c), ("rows", mat),
                            ("relations", rel), ("rhs", b), ("lower", lo), ("upper", hi)):
            object.__setattr__(self, name, value)
        for arr in (c, rel, b, lo, hi):
            arr.setflags(write=False)

    @property
    def n_variables(self) -> int:
        return self.objective.size

    @property
    def n_rows(self) -> int:
        return self.rhs.size


@dataclass(frozen=True, eq=False)
class MixedIntegerProgram:
    """LP plus a set of variable indices restricted to {0, 1}."""

    lp: LinearProgram
    binary_indices: tuple[int, ...]

    def __init__(self, lp: LinearProgram, binary_indices):
        idx = tuple(sorted(int(j) for j in binary_indices))
        n = lp.n_variables
        if len(set(idx)) != len(idx):
            raise ValueError("duplicate binary indices")
        for j in idx:
            if not 0 <= j < n:
                raise ValueError(f"binary index {j} out of range")
            if lp.lower[j] < -1e-12 or lp.upper[j] > 1 + 1e-12:
                raise ValueError(f"binary variable {j} must have bounds within [0, 1]")
        object.__setattr__(self, "lp", lp)
        object.__setattr__(self, "binary_indices", idx)


@dataclass(frozen=True, eq=False)
class BasisStart:
    """Starting basis for a warm LP solve.

    ``column_status`` holds one BASIS_* code per variable and
    ``row_status`` one per constraint row (a basic row means its slack
    is basic).  Invalid or singular starts fall back to a cold solve,
    so feeding a stale basis is never unsafe, just slower.
    """

    column_status: np.ndarray
    row_status: np.ndarray

    def __init__(self, column_status, row_status):
        cs = np.asarray(column_status, dtype=np.int8)
        rs = np.asarray(row_status, dtype=np.int8)
        for arr in (cs, rs):
            if arr.size and (arr.min() < BASIS_BASIC or arr.max() > BASIS_FREE):
                raise ValueError("basis codes must be BASIS_BASIC..BASIS_FREE")
            arr.setflags(write=False)
        object.__setattr__(self, "column_status", cs)
        object.__setattr__(self, "row_status", rs)


@dataclass(frozen=True, eq=False)
class SolveResult:
    """Solver outcome.

    ``dual_values`` holds one multiplier per constraint row, oriented so
    that it approximates the change in ``objective_value`` per unit
    increase of that row's right-hand side (None for integer programs
    and non-optimal statuses).  ``column_status``/``row_status`` give the
    optimal basis in BASIS_* codes for LPs, reusable via basis_start().
    """

    status: str  # "optimal" | "infeasible" | "unbounded"
    primal_values: np.ndarray
    objective_value: float
    iteration_count: int
    dual_values: np.ndarray | None = None
    column_status: np.ndarray | None = None
    row_status: np.ndarray | None = None

    def __post_init__(self):
        self.primal_values.setflags(write=False)
        for arr in (self.dual_values, self.column_status, self.row_status):
            if arr is not None:
                arr.setflags(write=False)

    def basis_start(self) -> BasisStart:
        if self.column_status is None or self.row_status is None:
            raise ValueError(f"no basis available on a {self.status!r} result")
        return BasisStart(self.column_status, self.row_status)


def _failed(status: str, n: int, iters: int) -> SolveResult:
    return SolveResult(status, np.full(n, np.nan), np.nan, iters)


class _Simplex:
    """One bounded-variable revised simplex solve on a scaled problem."""

    def __init__(self, lp: LinearProgram, tolerance: float, start: BasisStart | None = None):
        self.tol = float(tolerance)
        self.start = start
        self.n = lp.n_variables
        self.sense_sign = 1.0 if lp.sense == "min" else -1.0
        self.c_orig = lp.objective

        rows = lp.rows.tocsr()
        rel = lp.relations
        b = lp.rhs.astype(np.float64).copy()

        # Rows with no coefficients cannot enter the basis system; they are
        # constant assertions checked here and dropped.
        norms = np.zeros(rows.shape[0])
        if rows.nnz:
            absrows = abs(rows)
            norms = np.asarray(absrows.max(axis=1).todense()).ravel()
        self.trivially_infeasible = False
        keep = norms > 0.0
        for i in np.nonzero(~keep)[0]:
            r, bi = rel[i], b[i]
            ok = (r == LE and bi >= -self.tol) or (r == GE and bi <= self.tol) \
                or (r == EQ and abs(bi) <= self.tol)
            if not ok:
                self.trivially_infeasible = True
        self.n_rows_orig = rows.shape[0]
        self.keep = keep
        rows, rel, b = rows[keep], rel[keep], b[keep]
        m = rows.shape[0]

        # Unit max-norm row scaling; feasibility tolerances apply after it.
        scale = 1.0 / norms[keep] if m else np.ones(0)
        A = sp.diags(scale) @ rows if m else rows
        self.b = scale * b
        self.m = m
        self.rel = rel
        self.scale = scale

        ineq = np.nonzero(rel != EQ)[0]
        slack_sign = np.where(rel[ineq] == LE, 1.0, -1.0)
        n_slack = ineq.size
        slack_mat = sp.csc_matrix((slack_sign, (ineq, np.arange(n_slack))), shape=(m, n_slack))
        self.ineq_rows = ineq

        self.A_struct = A.tocsc()
        self.slack_mat = slack_mat
        self.n_slack = n_slack
        # Core bounds/costs cover structural variables plus slacks; _crash
        # extends them with artificials and may run twice, so keep these pristine.
        self.lo_core = np.concatenate([lp.lower, np.zeros(n_slack)])
        self.hi_core = np.concatenate([lp.upper, np.full(n_slack, np.inf)])
        self.c_core = np.concatenate([self.sense_sign * lp.objective, np.zeros(n_slack)])
        self.iters = 0

    # -- basis linear algebra ------------------------------------------------

    def _refactor(self):
        B = self.A_ext[:, self.basis]
        try:
            self.lu = splu(B.tocsc())
        except RuntimeError as exc:  # singular basis: numerical breakdown
            raise SolverError(f"basis factorization failed: {exc}") from None
        self.etas = []
        # Recompute basic values from scratch to shed accumulated drift.
        vals = self.x.copy()
        vals[self.basis] = 0.0
        rhs = self.b - self.A_ext @ vals
        self.x[self.basis] = self.lu.solve(rhs)

    def _ftran(self, v: np.ndarray) -> np.ndarray:
        x = self.lu.solve(v)
        for r, d, dr in self.etas:
            xr = x[r] / dr
            x -= d * xr
            x[r] = xr
        return x

    def _btran(self, c: np.ndarray) -> np.ndarray:
        u = c.astype(np.float64, copy=True)
        for r, d, dr in reversed(self.etas):
            u[r] = (u[r] - d @ u + d[r] * u[r]) / dr
        return self.lu.solve(u, trans="T")

    def _column(self, j: int) -> np.ndarray:
        col = np.zeros(self.m)
        a, bb = self.A_ext.indptr[j], self.A_ext.indptr[j + 1]
        col[self.A_ext.indices[a:bb]] = self.A_ext.data[a:bb]
        return col

    # -- crash basis and artificials ------------------------------------------

    def _crash(self, triangular: bool = True):
        n_core = self.n + self.n_slack
        lo, hi = self.lo_core, self.hi_core
        x = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
        status = np.where(np.isfinite(lo), _AT_LOWER,
                          np.where(np.isfinite(hi), _AT_UPPER, _FREE)).astype(np.int8)
        status[np.isfinite(lo) & np.isfinite(hi) & (lo == hi)] = _FIXED

        core = sp.hstack([self.A_struct, self.slack_mat]).tocsc() if self.n_slack \
            else self.A_struct.tocsc()
        resid = self.b - core @ x

        # Columns touching exactly one row can absorb that row's residual
        # directly; quantile-regression deviation variables and plain slacks
        # both land here, so those problems start primal feasible.
        nnz_per_col = np.diff(core.indptr)
        singleton_rows: dict[int, list[tuple[int, float]]] = {}
        for j in np.nonzero(nnz_per_col == 1)[0]:
            p = core.indptr[j]
            singleton_rows.setdefault(int(core.indices[p]), []).append(
                (int(j), float(core.data[p])))

        basis = np.full(self.m, -1, dtype=np.int64)
        for i in range(self.m):
            for j, a_ij in singleton_rows.get(i, ()):
                if status[j] == _BASIC or status[j] == _FIXED:
                    continue
                v = x[j] + resid[i] / a_ij
                if lo[j] - 1e-12 <= v <= hi[j] + 1e-12:
                    basis[i] = j
                    x[j] = min(max(v, lo[j]), hi[j])
                    status[j] = _BASIC
                    break

        if triangular:
            self._triangular_extend(core, x, status, basis)

        art_rows = [i for i in range(self.m) if basis[i] < 0]
        art_signs = [1.0 if resid[i] >= 0 else -1.0 for i in art_rows]
        n_art = len(art_rows)
        if n_art:
            art_mat = sp.csc_matrix((art_signs, (art_rows, np.arange(n_art))),
                                    shape=(self.m, n_art))
            self.A_ext = sp.hstack([core, art_mat]).tocsc()
        else:
            self.A_ext = core
        self.AT = self.A_ext.T.tocsr()
        self.n_ext = n_core + n_art
        self.lo = np.concatenate([lo, np.zeros(n_art)])
        self.hi = np.concatenate([hi, np.full(n_art, np.inf)])
        self.x = np.concatenate([x, np.zeros(n_art)])
        self.status = np.concatenate([status, np.full(n_art, _BASIC, dtype=np.int8)])
        self.artificial = np.zeros(self.n_ext, dtype=bool)
        self.artificial[n_core:] = True
        for k, i in enumerate(art_rows):
            basis[i] = n_core + k
            self.x[n_core + k] = abs(resid[i])
        self.basis = basis
        self.c_phase2 = np.concatenate([self.c_core, np.zeros(n_art)])

    def _triangular_extend(self, core: sp.csc_matrix, x, status, basis):
        """Pivot columns into uncovered rows while the basis stays triangular.

        A column qualifies once it has exactly one nonzero left in
        uncovered rows; taking it keeps the basis permuted-triangular,
        so LU factorization is cheap and exact.  Values are not assigned
        here: the refactor pass solves for all basics jointly, and the
        caller falls back to a singleton-plus-artificial start if any
        basic lands outside its bounds.
        """
        covered = basis >= 0
        mask = ~covered[core.indices]
        cs = np.concatenate([[0], np.cumsum(mask)])
        uncov = cs[core.indptr[1:]] - cs[core.indptr[:-1]]
        core_csr = core.tocsr()

        usable = (status != _BASIC) & (status != _FIXED)
        heap = [int(j) for j in np.nonzero((uncov == 1) & usable)[0]]
        heapq.heapify(heap)
        while heap:
            j = heapq.heappop(heap)
            if uncov[j] != 1 or not usable[j]:
                continue
            a0, a1 = core.indptr[j], core.indptr[j + 1]
            rows_j = core.indices[a0:a1]
            vals_j = core.data[a0:a1]
            open_pos = np.nonzero(~covered[rows_j])[0]
            i = int(rows_j[open_pos[0]])
            if abs(vals_j[open_pos[0]]) < 1e-2:
                continue  # rows are unit max-norm; refuse small triangular pivots
            basis[i] = j
            covered[i] = True
            status[j] = _BASIC
            usable[j] = False
            b0, b1 = core_csr.indptr[i], core_csr.indptr[i + 1]
            for j2 in core_csr.indices[b0:b1]:
                uncov[j2] -= 1
                if uncov[j2] == 1 and usable[j2]:
                    heapq.heappush(heap, int(j2))

    def _start_from_basis(self, start: BasisStart) -> bool:
        """Install a caller-supplied basis; False means fall back to cold.

        The start is rejected unless it names exactly m basic variables,
        respects bound finiteness, factorizes, and yields basic values
        inside their bounds, so a stale or mismatched basis costs one
        factorization attempt and nothing else.
        """
        cs = start.column_status
        rs = start.row_status
        if cs.size != self.n or rs.size != self.n_rows_orig:
            raise ValueError("starting basis sizes do not match the problem")
        rs = rs[self.keep]
        n_core = self.n + self.n_slack
        lo, hi = self.lo_core, self.hi_core
        status = np.empty(n_core, dtype=np.int8)
        status[: self.n] = cs
        status[self.n:] = rs[self.ineq_rows]
        if np.any((rs == BASIS_BASIC) & (self.rel == EQ)):
            return False  # equality rows have no slack to make basic
        nb = status != _BASIC
        at_lo = nb & (status == _AT_LOWER)
        at_hi = nb & (status == _AT_UPPER)
        free = nb & (status == _FREE)
        if np.any(at_lo & ~np.isfinite(lo)) or np.any(at_hi & ~np.isfinite(hi)) \
                or np.any(free & (np.isfinite(lo) | np.isfinite(hi))):
            return False
        fixed = np.isfinite(lo) & np.isfinite(hi) & (lo == hi)
        status[nb & fixed] = _FIXED
        basis = np.nonzero(status == _BASIC)[0]
        if basis.size != self.m:
            return False

        x = np.zeros(n_core)
        x[at_lo] = lo[at_lo]
        x[at_hi] = hi[at_hi]
        x[nb & fixed] = lo[nb & fixed]
        core = sp.hstack([self.A_struct, self.slack_mat]).tocsc() if self.n_slack \
            else self.A_struct.tocsc()
        self.A_ext = core
        self.AT = core.T.tocsr()
        self.n_ext = n_core
        self.lo = lo.copy()
        self.hi = hi.copy()
        self.x = x
        self.status = status
        self.artificial = np.zeros(n_core, dtype=bool)
        self.basis = basis
        self.c_phase2 = self.c_core
        self.etas = []
        try:
            self._refactor()
        except SolverError:
            return False
        xb = self.x[self.basis]
        if np.any(xb < self.lo[self.basis] - self.tol) \
                or np.any(xb > self.hi[self.basis] + self.tol):
            return False
        return True

    # -- core iteration --------------------------------------------------------

    def _reduced_costs(self, cost: np.ndarray) -> np.ndarray:
        y = self._btran(cost[self.basis])
        return cost - self.AT @ y

    def _optimize(self, cost: np.ndarray, phase: int) -> str:
        bland = False
        stall = 0
        stall_limit = max(100, self.m)
        z = self._reduced_costs(cost)
        z_fresh = len(self.etas) == 0
        weight = np.ones(self.n_ext)  # devex reference weights
        while True:
            if self.iters >= _MAX_ITERS:
                raise SolverError("iteration limit exceeded")
            if len(self.etas) >= _REFACTOR_EVERY:
                self._refactor()
                z = self._reduced_costs(cost)
                z_fresh = True
            if bland:
                # Bland's rule needs reduced costs consistent with the
                # current basis, so skip the incremental shortcut here.
                z = self._reduced_costs(cost)

            st = self.status
            can_up = ((st == _AT_LOWER) | (st == _FREE)) & (z < -self.tol)
            can_dn = ((st == _AT_UPPER) | (st == _FREE)) & (z > self.tol)
            eligible = can_up | can_dn
            if not eligible.any():
                if z_fresh or bland:
                    return "optimal"
                # Optimality seen on incrementally updated costs: refactor,
                # reprice exactly, and only then trust the verdict.
                self._refactor()
                z = self._reduced_costs(cost)
                z_fresh = True
                continue

            if bland:
                q = int(np.nonzero(eligible)[0][0])
            else:
                score = np.where(eligible, z * z / weight, -1.0)
                q = int(np.argmax(score))
            delta = 1.0 if can_up[q] else -1.0

            d = self._ftran(self._column(q))
            eff = delta * d
            xB = self.x[self.basis]
            loB = self.lo[self.basis]
            hiB = self.hi[self.basis]
            pos = eff > _PIVOT_TOL
            neg = eff < -_PIVOT_TOL
            blocking = pos | neg
            dist = np.full(self.m, np.inf)
            dist[pos] = xB[pos] - loB[pos]
            dist[neg] = hiB[neg] - xB[neg]
            np.maximum(dist, 0.0, out=dist)
            aeff = np.abs(eff)
            with np.errstate(invalid="ignore"):
                theta_exact = np.where(blocking, dist / aeff, np.inf)
            theta_basic = theta_exact.min() if self.m else np.inf
            flip_range = self.hi[q] - self.lo[q]

            if not np.isfinite(min(theta_basic, flip_range)):
                return "unbounded"

            if flip_range <= theta_basic + 1e-12:
                # Bound flip: the entering variable crosses its own range
                # first.  No basis change, so costs and weights stand.
                self.x[self.basis] = xB - flip_range * eff
                self.x[q] = self.hi[q] if delta > 0 else self.lo[q]
                self.status[q] = _AT_UPPER if delta > 0 else _AT_LOWER
                self.iters += 1
                continue

            if bland:
                cands = np.nonzero(theta_exact <= theta_basic + 1e-12)[0]
                r = int(cands[np.argmin(self.basis[cands])])
            else:
                # Two-pass ratio test: relax each blocking bound by a hair,
                # then take the largest pivot element among the survivors.
                with np.errstate(invalid="ignore"):
                    relaxed = np.where(blocking, (dist + 1e-9) / aeff, np.inf)
                tmax = relaxed.min()
                cands = np.nonzero(theta_exact <= tmax)[0]
                order = np.lexsort((self.basis[cands], -aeff[cands]))
                r = int(cands[order[0]])
            leaving = int(self.basis[r])

            step = theta_exact[r]
            self.x[self.basis] = xB - step * eff
            bound = loB[r] if eff[r] > 0 else hiB[r]
            self.x[leaving] = bound
            if self.lo[leaving] == self.hi[leaving]:
                self.status[leaving] = _FIXED
            else:
                self.status[leaving] = _AT_LOWER if eff[r] > 0 else _AT_UPPER
            self.x[q] = self.x[q] + delta * step

            # Pivot row through the current basis inverse, shared by the
            # devex weight update and the incremental reduced-cost update.
            rho = np.zeros(self.m)
            rho[r] = 1.0
            alpha_row = self.AT @ self._btran(rho)
            pivot = d[r]
            w_enter = weight[q]
            np.maximum(weight, (alpha_row / pivot) ** 2 * w_enter, out=weight)
            weight[leaving] = max(w_enter / (pivot * pivot), 1.0)
            if weight.max() > 1e8:
                weight[:] = 1.0  # reset the reference framework
            z -= (z[q] / pivot) * alpha_row
            z[q] = 0.0
            z_fresh = False

            self.status[q] = _BASIC
            self.basis[r] = q
            self.etas.append((r, d, d[r]))
            self.iters += 1

            if step <= 1e-12:
                stall += 1
                if stall > stall_limit:
                    bland = True
            else:
                stall = 0
                bland = False

    # -- driver -----------------------------------------------------------------

    def solve(self) -> SolveResult:
        if self.trivially_infeasible:
            return _failed("infeasible", self.n, 0)
        if self.m == 0:
            return self._solve_unconstrained()

        warm = False
        if self.start is not None:
            warm = self._start_from_basis(self.start)
        if not warm:
            # Triangular crash first; it assigns basic values only via the
            # factorization, so fall back to the always-feasible singleton
            # start if any basic lands outside its bounds (or the basis is bad).
            self._crash(triangular=True)
            self.etas = []
            try:
                self._refactor()
                xb = self.x[self.basis]
                bad = np.any(xb < self.lo[self.basis] - self.tol) \
                    or np.any(xb > self.hi[self.basis] + self.tol)
            except SolverError:
                bad = True
            if bad:
                self._crash(triangular=False)
                self.etas = []
                self._refactor()

        if self.artificial.any():
            c1 = np.where(self.artificial, 1.0, 0.0)
            status = self._optimize(c1, phase=1)
            if status != "optimal":
                raise SolverError("phase-1 subproblem reported unbounded")
            if float(self.x[self.artificial].sum()) > self.tol:
                return _failed("infeasible", self.n, self.iters)
            self.lo[self.artificial] = 0.0
            self.hi[self.artificial] = 0.0
            nonbasic_art = self.artificial & (self.status != _BASIC)
            self.status[nonbasic_art] = _FIXED
            self.x[self.artificial & (self.status != _BASIC)] = 0.0

        status = self._optimize(self.c_phase2, phase=2)
        if status == "unbounded":
            return _failed("unbounded", self.n, self.iters)

        self._refactor()
        x = self.x[: self.n].copy()
        lo, hi = self.lower_view(), self.upper_view()
        drift = float(np.maximum(lo - x, x - hi).max(initial=0.0))
        if drift > 1e-6:
            raise SolverError(f"basic variable left its bounds by {drift:.2e}")
        np.clip(x, lo, hi, out=x)
        self._verify(x)
        objective = float(self.c_orig @ x)
        y = self._btran(self.c_phase2[self.basis])
        duals = np.zeros(self.n_rows_orig)
        duals[self.keep] = self.sense_sign * self.scale * y
        col_stat = self.status[: self.n].astype(np.int8, copy=True)
        col_stat[col_stat == _FIXED] = _AT_LOWER
        slack_stat = self.status[self.n + 0: self.n + self.n_slack].astype(np.int8, copy=True)
        slack_stat[slack_stat == _FIXED] = _AT_LOWER
        row_stat = np.full(self.n_rows_orig, _AT_LOWER, dtype=np.int8)
        row_stat[np.nonzero(self.keep)[0][self.ineq_rows]] = slack_stat
        return SolveResult("optimal", x, objective, self.iters, duals, col_stat, row_stat)

    def lower_view(self):
        return self.lo[: self.n]

    def upper_view(self):
        return self.hi[: self.n]

    def _verify(self, x: np.ndarray):
        resid = self.A_struct @ x - self.b
        ok = np.ones(self.m, dtype=bool)
        le = self.rel == LE
        ge = self.rel == GE
        eq = self.rel == EQ
        tol = self.tol + 1e-9
        ok[le] = resid[le] <= tol
        ok[ge] = resid[ge] >= -tol
        ok[eq] = np.abs(resid[eq]) <= tol
        if not ok.all():
            worst = float(np.max(np.abs(resid[~ok])))
            raise SolverError(f"optimal basis violates a row by {worst:.2e} after scaling")

    def _solve_unconstrained(self) -> SolveResult:
        c = self.sense_sign * self.c_orig
        lo, hi = self.lo_core[: self.n], self.hi_core[: self.n]
        x = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
        take_hi = c < 0
        x[take_hi] = hi[take_hi]
        if np.any((c < 0) & ~np.isfinite(hi)) or np.any((c > 0) & ~np.isfinite(lo)):
            return _failed("unbounded", self.n, 0)
        x = np.where(np.isfinite(x), x, 0.0)
        col_stat = np.where(np.isfinite(lo), _AT_LOWER,
                            np.where(np.isfinite(hi), _AT_UPPER, _FREE)).astype(np.int8)
        col_stat[take_hi & np.isfinite(hi)] = _AT_UPPER
        return SolveResult("optimal", x, float(self.c_orig @ x), 0,
                           np.zeros(self.n_rows_orig),
                           col_stat, np.full(self.n_rows_orig, _AT_LOWER, dtype=np.int8))


def solve_lp(problem: LinearProgram, tolerance: float = 1e-7,
             start: BasisStart | None = None) -> SolveResult:
    """Solve an LP to a vertex optimum; statuses are returned, never raised.

    ``start`` warm-starts from a basis of a related problem (same rows,
    possibly different columns remapped by the caller); anything invalid
    about it silently degrades to a cold solve.
    """
    return _Simplex(problem, tolerance, start).solve()


def _node_lp(lp: LinearProgram, tight: dict[int, tuple[float, float]]) -> LinearProgram:
    if not tight:
        return lp
    lo = lp.lower.copy()
    hi = lp.upper.copy()
    for j, (a, b) in tight.items():
        lo[j] = a
        hi[j] = b
    return LinearProgram(lp.sense, lp.objective, lp.rows, lp.relations, lp.rhs, lo, hi)


def solve_integer(lp: LinearProgram, integer_indices, tolerance: float = 1e-7) -> SolveResult:
    """Depth-first branch and bound over general integer variables.

    Nodes are bounded by their LP relaxation and pruned against the
    incumbent; branching picks the most fractional variable, tightens
    its bounds to the floor or ceiling, and explores the nearer side
    first.  Every integer variable needs finite bounds that are already
    integral, which also bounds the search depth.
    """
    ints = np.array(sorted(int(j) for j in integer_indices), dtype=np.int64)
    for j in ints:
        lo_j, hi_j = lp.lower[j], lp.upper[j]
        if not (np.isfinite(lo_j) and np.isfinite(hi_j)):
            raise ValueError(f"integer variable {j} needs finite bounds")
        if abs(lo_j - round(lo_j)) > 1e-9 or abs(hi_j - round(hi_j)) > 1e-9:
            raise ValueError(f"integer variable {j} needs integral bounds")
    sign = 1.0 if lp.sense == "min" else -1.0  # scores are minimized

    total_iters = 0
    incumbent = None
    incumbent_score = np.inf
    saw_unbounded = False

    stack: list[dict[int, tuple[float, float]]] = [{}]
    while stack:
        tight = stack.pop()
        res = solve_lp(_node_lp(lp, tight), tolerance)
        total_iters += res.iteration_count
        if res.status == "infeasible":
            continue
        if res.status == "unbounded":
            saw_unbounded = True
            break
        score = sign * res.objective_value
        if score >= incumbent_score - 1e-12:
            continue
        xb = res.primal_values[ints] if ints.size else np.zeros(0)
        frac = np.abs(xb - np.round(xb))
        if ints.size == 0 or frac.max() <= 1e-9:
            incumbent = res
            incumbent_score = score
            continue
        j = int(ints[np.argmax(frac)])
        v = res.primal_values[j]
        lo_j, hi_j = tight.get(j, (lp.lower[j], lp.upper[j]))
        down = (lo_j, np.floor(v))
        up = (np.ceil(v), hi_j)
        near, far = (up, down) if v - np.floor(v) >= 0.5 else (down, up)
        stack.append({**tight, j: far})
        stack.append({**tight, j: near})

    n = lp.n_variables
    if saw_unbounded:
        return _failed("unbounded", n, total_iters)
    if incumbent is None:
        return _failed("infeasible", n, total_iters)
    x = incumbent.primal_values.copy()
    x[ints] = np.round(x[ints])
    return SolveResult("optimal", x, float(lp.objective @ x), total_iters)


def solve_milp(problem: MixedIntegerProgram, tolerance: float = 1e-7) -> SolveResult:
    """Depth-first branch and bound over the binary variables.

    Binaries are integer variables with [0, 1] bounds; see
    ``solve_integer`` for the search itself.
    """
    return solve_integer(problem.lp, problem.binary_indices, tolerance)


def _fmt(v: float) -> str:
    return repr(float(v))


def _terms(coeffs: np.ndarray, indices: np.ndarray) -> str:
    parts = [f"{_fmt(c)} x{j}" for j, c in zip(indices, coeffs) if c != 0.0]
    return " + ".join(parts) if parts else "0"


def write_lp_text(problem, path) -> None:
    """Dump a problem to a plain-text LP-style file for debugging.

    One objective line, one line per constraint row, a bounds section,
    and a trailing binary line for integer programs.
    """
    lp = problem.lp if isinstance(problem, MixedIntegerProgram) else problem
    lines = [f"{lp.sense}: {_terms(lp.objective, np.arange(lp.n_variables))};"]
    mat = lp.rows.tocsr()
    for i in range(lp.n_rows):
        lo_, hi_ = mat.indptr[i], mat.indptr[i + 1]
        body = _terms(mat.data[lo_:hi_], mat.indices[lo_:hi_])
        lines.append(f"r{i}: {body} {lp.relations[i]} {_fmt(lp.rhs[i])};")
    lines.append("bounds:")
    for j in range(lp.n_variables):
        lo_, hi_ = lp.lower[j], lp.upper[j]
        if not np.isfinite(lo_) and not np.isfinite(hi_):
            lines.append(f"x{j} free;")
        else:
            lines.append(f"{_fmt(lo_)} <= x{j} <= {_fmt(hi_)};")
    if isinstance(problem, MixedIntegerProgram) and problem.binary_indices:
        names = " ".join(f"x{j}" for j in problem.binary_indices)
        lines.append(f"binary: {names};")
    text = "\n".join(lines) + "\n"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
