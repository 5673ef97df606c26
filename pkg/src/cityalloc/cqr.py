"""Shape-constrained quantile production frontiers.

Fits, for one cross-section of observations, a monotone concave
piecewise-linear quantile frontier: every observation carries its own
supporting hyperplane (alpha_i, beta_i >= 0), cross-observation rows
alpha_i + beta_i.x_i <= alpha_h + beta_h.x_i force the planes to
envelope a common concave surface, and the pinball loss
tau*sum(eps+) + (1-tau)*sum(eps-) is minimized.

The full program has N^2 cross rows but only a handful bind at the
optimum, so the solve runs on the LP dual with delayed generation:
start from the regression and sign structure alone, add the columns of
the most violated cross rows in batches, and re-solve warm from the
previous basis until no violation exceeds 1e-6. Slack nonbasic columns
are dropped while the working set is large; dropping switches off for
good once progress stalls, after which the working set only grows and
termination is guaranteed.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .solver import (
    BASIS_AT_LOWER,
    BASIS_BASIC,
    EQ,
    LE,
    BasisStart,
    LinearProgram,
    SolverError,
    solve_lp,
)

DEFAULT_QUANTILES = np.arange(1, 20, 2) / 20.0

_VIOL_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class QuantileFit:
    """One fitted frontier: per-observation hyperplanes plus residual split."""

    year: int
    tau: float
    alpha: np.ndarray
    beta: np.ndarray
    eps_plus: np.ndarray
    eps_minus: np.ndarray
    crs: bool = False
    objective: float = 0.0

    @property
    def n_obs(self) -> int:
        return self.alpha.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.beta.shape[1]

    def frontier(self, x) -> np.ndarray:
        """Lower envelope min_h(alpha_h + beta_h.x) at the given inputs."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.min(self.alpha[None, :] + x @ self.beta.T, axis=1)

    def hyperplanes(self, tol: float = 1e-6):
        """Deduplicated (alpha, beta) pairs, first occurrence kept."""
        return dedup_hyperplanes(self.alpha, self.beta, tol)


@dataclass(frozen=True, eq=False)
class DecileAssignment:
    """Efficiency deciles for one year; decile d pairs with tau=(2d-1)/20."""

    year: int
    city_id: np.ndarray
    decile: np.ndarray
    score: np.ndarray

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.decile, minlength=11)[1:]

    @staticmethod
    def tau_of(d: int) -> float:
        return (2 * d - 1) / 20.0

    def members(self, d: int) -> np.ndarray:
        """Positional indices of decile d, ascending score order preserved."""
        idx = np.nonzero(self.decile == d)[0]
        order = np.lexsort((self.city_id[idx], self.score[idx]))
        return idx[order]


def _check_inputs(x, y, tau):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2:
        raise ValueError("x must be a 2-d array, one row per observation")
    if y.shape != (x.shape[0],):
        raise ValueError("y length does not match x rows")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("inputs must be finite")
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    return x, y


def _dual_master(x, y, tau, pairs, crs):
    """Restricted dual of the frontier LP.

    Dual variables: u_i in [-(1-tau), tau] for the regression equalities
    and w >= 0, one per generated cross row (i, h). Row blocks: one
    equality per alpha_i (absent under crs) and one inequality per
    beta_{i,f}. Primal planes are read back off the row duals.
    """
    n, d = x.shape
    base = 0 if crs else n
    nw = len(pairs)
    cost = np.concatenate([y, np.zeros(nw)])
    lower = np.concatenate([np.full(n, -(1.0 - tau)), np.zeros(nw)])
    upper = np.concatenate([np.full(n, tau), np.full(nw, np.inf)])
    rows = []
    cols = []
    vals = []
    if not crs:
        rows.append(np.arange(n))
        cols.append(np.arange(n))
        vals.append(np.ones(n))
    rows.append(base + np.arange(n * d))
    cols.append(np.repeat(np.arange(n), d))
    vals.append(x.ravel())
    if nw:
        i, h = pairs[:, 0], pairs[:, 1]
        wid = n + np.arange(nw)
        if not crs:
            rows.append(i)
            cols.append(wid)
            vals.append(np.full(nw, -1.0))
            rows.append(h)
            cols.append(wid)
            vals.append(np.ones(nw))
        for f in range(d):
            rows.append(base + i * d + f)
            cols.append(wid)
            vals.append(-x[i, f])
            rows.append(base + h * d + f)
            cols.append(wid)
            vals.append(x[i, f])
    a = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(base + n * d, n + nw),
    )
    rel = np.array([EQ] * base + [LE] * (n * d))
    return LinearProgram("max", cost, a, rel, np.zeros(base + n * d),
                         lower=lower, upper=upper)


def _generate(x, y, tau, crs, tolerance, max_rounds):
    """Delayed cross-row generation; returns (alpha, beta, objective)."""
    n, d = x.shape
    base = 0 if crs else n
    cap = 5 * n
    per_obs = 3
    pairs = np.zeros((0, 2), dtype=np.int64)
    start = None
    dropping = True
    stall = 0
    prev_obj = -np.inf
    hist = []
    for _ in range(max_rounds):
        res = solve_lp(_dual_master(x, y, tau, pairs, crs),
                       tolerance=tolerance, start=start)
        if res.status != "optimal":
            raise SolverError(f"frontier master came back {res.status}")
        alpha = np.zeros(n) if crs else res.dual_values[:n]
        beta = res.dual_values[base:].reshape(n, d)
        fit_at = alpha[None, :] + x @ beta.T
        own = fit_at.diagonal()
        viol = own[:, None] - fit_at
        np.fill_diagonal(viol, 0.0)
        open_ = viol.copy()
        if len(pairs):
            open_[pairs[:, 0], pairs[:, 1]] = -np.inf
        nviol = int((open_ > _VIOL_TOL).sum())
        if nviol == 0:
            return alpha, beta, res.objective_value
        # Two stall signals disable dropping permanently: the objective
        # creeping below 1e-7 relative for 3 rounds, or the violation
        # count failing to fall 25% over a 20-round window. Either one
        # means drop/re-add churn; with dropping off the working set
        # grows strictly and the loop must terminate.
        hist.append(nviol)
        if dropping:
            if res.objective_value - prev_obj <= 1e-7 * (1 + abs(res.objective_value)):
                stall += 1
            else:
                stall = 0
            if stall >= 3 or (len(hist) > 20 and nviol > 0.75 * hist[-21]):
                dropping = False
        prev_obj = res.objective_value
        batch = []
        seen = set()
        for i in range(n):
            vi = open_[i]
            k = min(per_obs, n - 1)
            if k == 0:
                continue
            idx = np.argpartition(vi, -k)[-k:]
            idx = idx[vi[idx] > _VIOL_TOL]
            idx = idx[np.argsort(-vi[idx], kind="stable")]
            for h in idx:
                h = int(h)
                if (i, h) not in seen:
                    seen.add((i, h))
                    batch.append((i, h))
                # cross rows tend to bind in groups sharing a plane, so
                # pull in the violated reverse pair as well
                if open_[h, i] > _VIOL_TOL and (h, i) not in seen:
                    seen.add((h, i))
                    batch.append((h, i))
        batch = np.asarray(batch[:cap], dtype=np.int64)
        cs = res.column_status
        cs_u, cs_w = cs[:n], cs[n:]
        if dropping and len(pairs) > 4 * n:
            # only nonbasic strictly-slack columns leave: the surviving
            # basis stays optimal, so master objectives never regress
            slack = -viol[pairs[:, 0], pairs[:, 1]]
            keep = (cs_w == BASIS_BASIC) | (slack <= 1e-7 * (1 + np.abs(own).mean()))
            pairs = pairs[keep]
            cs_w = cs_w[keep]
        if len(batch):
            pairs = np.vstack([pairs, batch])
        cs_new = np.concatenate(
            [cs_u, cs_w, np.full(len(batch), BASIS_AT_LOWER, dtype=np.int8)])
        start = BasisStart(cs_new, res.row_status)
    raise SolverError(
        f"cross-row generation did not converge within {max_rounds} rounds")


def fit_cqr(x, y, tau, crs=False, year=0, tolerance=1e-7,
            max_rounds=5000) -> QuantileFit:
    """Fit the shape-constrained quantile frontier for one year.

    Parameters
    ----------
    x : (n, d) array of positive inputs, one row per observation.
    y : (n,) array of outputs.
    tau : quantile level in (0, 1).
    crs : force constant returns to scale (all intercepts zero).
    year : label stamped on the result.

    Returns a QuantileFit whose planes satisfy every cross-observation
    inequality to within 1e-6 and whose residual split reproduces the
    pinball objective.
    """
    x, y = _check_inputs(x, y, tau)
    alpha, beta, obj = _generate(x, y, tau, crs, tolerance, max_rounds)
    beta = np.clip(beta, 0.0, None)  # scrub dual roundoff at the sign bound
    resid = y - (alpha + np.sum(x * beta, axis=1))
    return QuantileFit(
        year=year,
        tau=float(tau),
        alpha=alpha,
        beta=beta,
        eps_plus=np.clip(resid, 0.0, None),
        eps_minus=np.clip(-resid, 0.0, None),
        crs=bool(crs),
        objective=float(obj),
    )


def fit_linear_qr(x, y, tau, year=0, tolerance=1e-7) -> QuantileFit:
    """Single shared hyperplane fit (all cross rows collapsed).

    The degenerate one-plane variant of the frontier program: quantile
    regression on a common intercept and nonnegative slope vector. Used
    as a diagnostic bound; its loss can never fall below the frontier
    fit's, which nests it.
    """
    x, y = _check_inputs(x, y, tau)
    n, d = x.shape
    # columns: a0 (split as a+ - a- to stay nonnegative), b (d), eps+ (n), eps- (n)
    ncol = 2 + d + 2 * n
    cost = np.concatenate(
        [np.zeros(2 + d), np.full(n, tau), np.full(n, 1.0 - tau)])
    rows = np.repeat(np.arange(n), 2 + d + 2)
    cols = np.empty((n, 2 + d + 2), dtype=np.int64)
    vals = np.empty((n, 2 + d + 2))
    cols[:, 0] = 0
    vals[:, 0] = 1.0
    cols[:, 1] = 1
    vals[:, 1] = -1.0
    cols[:, 2:2 + d] = np.arange(2, 2 + d)[None, :]
    vals[:, 2:2 + d] = x
    cols[:, 2 + d] = 2 + d + np.arange(n)
    vals[:, 2 + d] = 1.0
    cols[:, 3 + d] = 2 + d + n + np.arange(n)
    vals[:, 3 + d] = -1.0
    a = sp.csr_matrix((vals.ravel(), (rows, cols.ravel())), shape=(n, ncol))
    lp = LinearProgram("min", cost, a, np.array([EQ] * n), y)
    res = solve_lp(lp, tolerance=tolerance)
    if res.status != "optimal":
        raise SolverError(f"shared-plane fit came back {res.status}")
    v = res.primal_values
    a0 = v[0] - v[1]
    b = v[2:2 + d]
    return QuantileFit(
        year=year,
        tau=float(tau),
        alpha=np.full(n, a0),
        beta=np.tile(b, (n, 1)),
        eps_plus=v[2 + d:2 + d + n].copy(),
        eps_minus=v[2 + d + n:].copy(),
        crs=False,
        objective=float(res.objective_value),
    )


def fit_all_quantiles(x, y, quantile_grid=None, crs=False, year=0,
                      tolerance=1e-7):
    """Fit one frontier per grid value; default grid 0.05, 0.15, ..., 0.95."""
    grid = DEFAULT_QUANTILES if quantile_grid is None else np.asarray(
        quantile_grid, dtype=float)
    if grid.ndim != 1 or len(grid) == 0:
        raise ValueError("quantile grid must be a nonempty 1-d sequence")
    if np.any(grid <= 0.0) or np.any(grid >= 1.0) or np.any(np.diff(grid) <= 0):
        raise ValueError("quantile grid must be strictly increasing within (0, 1)")
    return [fit_cqr(x, y, t, crs=crs, year=year, tolerance=tolerance)
            for t in grid]


def assign_deciles(x, y, median_fit: QuantileFit, city_id=None,
                   year=None) -> DecileAssignment:
    """Rank cities by residual efficiency and cut into ten deciles.

    Score is y_i minus the median-frontier envelope at x_i; ranking is
    ascending with ties broken by city_id ascending. Decile sizes differ
    by at most one, the leftover observations going to the low deciles.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(y)
    if city_id is None:
        city_id = np.arange(n)
    city_id = np.asarray(city_id)
    if len(city_id) != n:
        raise ValueError("city_id length does not match observations")
    score = y - median_fit.frontier(x)
    order = np.lexsort((city_id, score))
    decile = np.empty(n, dtype=np.int64)
    for d, chunk in enumerate(np.array_split(order, 10), start=1):
        decile[chunk] = d
    return DecileAssignment(
        year=median_fit.year if year is None else year,
        city_id=city_id,
        decile=decile,
        score=score,
    )


def dedup_hyperplanes(alpha, beta, tol: float = 1e-6):
    """Collapse planes equal within tol in every coefficient.

    Greedy first-occurrence pass; order is deterministic. The envelope
    is unchanged, only duplicates handed to downstream row builders go.
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    coef = np.column_stack([alpha, beta])
    keep = []
    for i, row in enumerate(coef):
        if not any(np.max(np.abs(row - coef[j])) <= tol for j in keep):
            keep.append(i)
    return alpha[keep], beta[keep].reshape(len(keep), -1)


def fits_to_csv(fits, path):
    """Write fitted planes to CSV, one row per (year, tau, observation).

    Header: year,tau,obs_index,alpha,beta_1..beta_d,eps_plus,eps_minus.
    """
    fits = list(fits)
    if not fits:
        raise ValueError("no fits to write")
    d = fits[0].n_inputs
    if any(f.n_inputs != d for f in fits):
        raise ValueError("fits mix input dimensions")
    cols = ["year", "tau", "obs_index", "alpha"]
    cols += [f"beta_{f + 1}" for f in range(d)]
    cols += ["eps_plus", "eps_minus"]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for fit in fits:
            for i in range(fit.n_obs):
                row = [str(fit.year), repr(float(fit.tau)), str(i),
                       repr(float(fit.alpha[i]))]
                row += [repr(float(b)) for b in fit.beta[i]]
                row += [repr(float(fit.eps_plus[i])),
                        repr(float(fit.eps_minus[i]))]
                fh.write(",".join(row) + "\n")


def fits_from_csv(path):
    """Reload fits written by fits_to_csv, grouped by (year, tau).

    The table does not carry the returns-to-scale flag; reloaded fits
    report crs=False. Objectives are rebuilt from the residual columns.
    """
    data = np.genfromtxt(path, delimiter=",", names=True)
    data = np.atleast_1d(data)
    names = data.dtype.names
    d = sum(1 for nm in names if nm.startswith("beta_"))
    if d == 0:
        raise ValueError("no beta columns found")
    fits = []
    keys = np.unique(np.column_stack([data["year"], data["tau"]]), axis=0)
    for yr, tau in keys:
        sel = data[(data["year"] == yr) & (data["tau"] == tau)]
        sel = sel[np.argsort(sel["obs_index"])]
        beta = np.column_stack([sel[f"beta_{f + 1}"] for f in range(d)])
        ep, em = sel["eps_plus"], sel["eps_minus"]
        fits.append(QuantileFit(
            year=int(yr),
            tau=float(tau),
            alpha=np.asarray(sel["alpha"], dtype=float),
            beta=beta,
            eps_plus=np.asarray(ep, dtype=float),
            eps_minus=np.asarray(em, dtype=float),
            crs=False,
            objective=float(tau * ep.sum() + (1 - tau) * em.sum()),
        ))
    fits.sort(key=lambda f: (f.year, f.tau))
    return fits
