"""Weighted quantile regression by a vertex-to-vertex simplex method.

The objective ``sum_i w_i * rho_tau(y_i - u_i' theta)`` is piecewise linear
and convex; its minimum is attained at a vertex where ``m`` observations are
fitted exactly.  Starting from such a vertex the solver picks an edge of
steepest descent (release one interpolated observation above or below the
fit), walks along it to the minimizing breakpoint and swaps the observation
hit there into the basis.  Observations with zero residual outside the basis
are booked on one side of the fit, which makes degenerate vertices ordinary
bounded-simplex bases; a run of zero-length steps switches to Bland's rule.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

OPTIMAL = "optimal"
MAX_ITER = "max_iter"
DEGENERATE = "degenerate"

_REFACTOR_EVERY = 64


def check_loss(u, tau):
    """Quantile (check) loss ``u * (tau - 1{u < 0})``, elementwise."""
    u = np.asarray(u, dtype=float)
    out = u * (tau - (u < 0))
    return out if out.ndim else float(out)


def zero_tolerance(y):
    return 1e-8 * (1.0 + np.abs(y))


@dataclass(frozen=True)
class WqrProblem:
    """``min_theta sum_i w_i rho_tau(Y_i - U_i' theta)``.

    ``U`` may be a dense array or a scipy sparse matrix; sparse storage pays
    off for augmented designs whose pseudo-observations have one nonzero.
    """

    Y: np.ndarray
    U: object
    w: np.ndarray = None
    tau: float = 0.5

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=float).ravel()
        U = self.U if sp.issparse(self.U) else np.atleast_2d(np.asarray(self.U, dtype=float))
        if U.shape[0] != Y.size:
            raise ValueError("U and Y disagree on the number of observations")
        w = np.ones_like(Y) if self.w is None else np.asarray(self.w, dtype=float).ravel()
        if w.shape != Y.shape:
            raise ValueError("w must have one weight per observation")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "w", w)

    @property
    def n(self):
        return self.Y.size

    @property
    def m(self):
        return self.U.shape[1]

    def residuals(self, theta):
        return self.Y - self.U @ theta

    def objective(self, theta):
        return float(self.w @ check_loss(self.residuals(theta), self.tau))


@dataclass(frozen=True)
class WqrSolution:
    theta: np.ndarray
    objective: float
    interpolated: np.ndarray
    iterations: int
    status: str
    basis: np.ndarray = field(repr=False)
    # per-observation subgradient weights: tau or tau-1 off the fit, the dual
    # value in [tau-1, tau] on it
    dual: np.ndarray = field(repr=False)


def _dense_rows(U, rows):
    sub = U[rows]
    return sub.toarray() if sp.issparse(sub) else np.array(sub, dtype=float)


def _greedy_rows(U, candidates, m, tol=1e-9):
    """Pick up to ``m`` linearly independent rows, scanning ``candidates`` in order."""
    Q = np.zeros((m, U.shape[1]))
    chosen = []
    for i in candidates:
        row = _dense_rows(U, [i])[0]
        norm = np.linalg.norm(row)
        if norm == 0.0:
            continue
        v = row - Q[:len(chosen)].T @ (Q[:len(chosen)] @ row)
        v -= Q[:len(chosen)].T @ (Q[:len(chosen)] @ v)
        vn = np.linalg.norm(v)
        if vn > tol * norm:
            Q[len(chosen)] = v / vn
            chosen.append(i)
            if len(chosen) == m:
                break
    return chosen


def _independent_columns(U, tol=1e-9):
    """Lowest-index maximal set of linearly independent columns."""
    dense = U.toarray() if sp.issparse(U) else np.asarray(U)
    return _greedy_rows(dense.T, range(dense.shape[1]), dense.shape[1], tol)


def _unit_rows(U):
    """Column index and value of rows with a single nonzero (-1 otherwise)."""
    if sp.issparse(U):
        U = U.tocsr()
        counts = np.diff(U.indptr)
        col = np.full(U.shape[0], -1)
        val = np.zeros(U.shape[0])
        one = np.flatnonzero(counts == 1)
        col[one] = U.indices[U.indptr[one]]
        val[one] = U.data[U.indptr[one]]
        return col, val
    nz = U != 0
    one = nz.sum(axis=1) == 1
    col = np.where(one, np.argmax(nz, axis=1), -1)
    val = np.where(one, U[np.arange(U.shape[0]), np.maximum(col, 0)], 0.0)
    return col, val


def _start_rows(U, start, m):
    """Initial basis rows and inverse: the seed rows if they already form a
    basis, else a greedy completion."""
    seed = list(dict.fromkeys(start))
    if len(seed) >= m:
        B = _dense_rows(U, seed[:m])
        try:
            Binv = np.linalg.inv(B)
            if np.all(np.isfinite(Binv)) and np.abs(B @ Binv - np.eye(m)).max() < 1e-8:
                return seed[:m], Binv
        except np.linalg.LinAlgError:
            pass
    h = _greedy_rows(U, list(dict.fromkeys(seed + list(range(U.shape[0])))), m)
    return h, None


def _simplex(Y, U, w, tau, start, max_iter, pivot_rule):
    n, m = U.shape
    tol = zero_tolerance(Y)
    h, Binv = _start_rows(U, start, m)
    if len(h) < m:
        return None
    h = np.array(h)
    Ut = U.T.tocsr() if sp.issparse(U) else U.T
    unit_col, unit_val = _unit_rows(U)
    is_unit = unit_col >= 0

    def factor(h):
        Binv = np.linalg.inv(_dense_rows(U, h))
        return Binv, Binv @ Y[h]

    def zero_point_terms(Binv, zi, psi):
        """Sums over zero-residual nonbasic points of ``w A``, ``w psi A`` and ``w |A|``.

        ``A`` holds their rows of ``U B^-1``; single-nonzero rows (the
        pseudo-observations) are aggregated per column so ``A`` is never formed.
        """
        wz = w[zi]
        u = is_unit[zi]
        zu, zo = zi[u], zi[~u]
        cols, vals = unit_col[zu], unit_val[zu]
        lin = np.zeros((m, 2))
        np.add.at(lin[:, 0], cols, wz[u] * vals)
        np.add.at(lin[:, 1], cols, wz[u] * psi[zu] * vals)
        mag = np.bincount(cols, wz[u] * np.abs(vals), minlength=m)
        used = np.flatnonzero(mag)
        S = mag[used] @ np.abs(Binv[used])
        if zo.size:
            Uo = _dense_rows(U, zo)
            lin[:, 0] += wz[~u] @ Uo
            lin[:, 1] += (wz[~u] * psi[zo]) @ Uo
            S = S + wz[~u] @ np.abs(Uo @ Binv)
        proj = Binv.T @ lin
        return proj[:, 0], proj[:, 1], S

    if Binv is None:
        Binv, theta = factor(h)
    else:
        theta = Binv @ Y[h]
    r = Y - U @ theta
    in_basis = np.zeros(n, dtype=bool)
    in_basis[h] = True
    # side of the fit each nonbasic point is booked on; decides its
    # subgradient weight when its residual is (numerically) zero
    side = np.where(r < 0, -1.0, 1.0)
    status = MAX_ITER
    it = 0
    while it < max_iter:
        r[h] = 0.0
        off = np.abs(r) > tol
        side[off] = np.sign(r[off])
        psi = np.where(side > 0, tau, tau - 1.0)
        psi[in_basis] = 0.0
        z = Binv.T @ (Ut @ (w * psi))
        wh = w[h]
        thresh = -1e-11 * (1.0 + wh)

        # exact directional derivatives: zero-residual points cost
        # rho_tau of their own displacement instead of their booking
        zi = np.flatnonzero(~off & ~in_basis)
        d_up = wh * (1 - tau) - z     # basic point released below the fit
        d_dn = wh * tau + z           # basic point released above the fit
        if zi.size:
            # with A = U_Z B^-1: (1-tau) A+ + tau A- = |A|/2 + (1/2 - tau) A
            wa, wpa, S = zero_point_terms(Binv, zi, psi)
            zt = z - wpa
            e_up = wh * (1 - tau) - zt + 0.5 * S + (0.5 - tau) * wa
            e_dn = wh * tau + zt + 0.5 * S - (0.5 - tau) * wa
        else:
            e_up, e_dn = d_up, d_dn

        descent = (e_up < thresh).any() or (e_dn < thresh).any()
        if descent and pivot_rule != "bland":
            k_up, k_dn = int(np.argmin(e_up)), int(np.argmin(e_dn))
            k, sign = (k_up, 1.0) if e_up[k_up] <= e_dn[k_dn] else (k_dn, -1.0)
            slope0 = e_up[k] if sign > 0 else e_dn[k]
            degenerate = False
        else:
            neg_up, neg_dn = d_up < thresh, d_dn < thresh
            if not (neg_up.any() or neg_dn.any()):
                status = OPTIMAL
                break
            # lowest row index enters (Bland), ties between sides go to "up"
            k_up = np.argmax(neg_up) if neg_up.any() else m
            k_dn = np.argmax(neg_dn) if neg_dn.any() else m
            if k_up < m and (k_dn == m or h[k_up] <= h[k_dn]):
                k, sign = k_up, 1.0
            else:
                k, sign = k_dn, -1.0
            slope0 = d_up[k] if sign > 0 else d_dn[k]
            degenerate = True

        delta = sign * Binv[:, k]
        c = U @ delta
        # residual of point i along the ray is r_i - t c_i; booked zero
        # residuals block at t = 0 in a degenerate pivot, and are already
        # priced into slope0 otherwise
        moving = ~in_basis & (np.abs(c) > 1e-12 * (1.0 + np.abs(r)))
        if degenerate:
            moving &= side * c > 0
        else:
            moving &= off & (r * c > 0)
        cand = np.flatnonzero(moving)
        if cand.size == 0:
            raise RuntimeError("unbounded descent direction; objective is not bounded below")
        # tiny pivots would make the next basis numerically singular
        cand = cand[np.abs(c[cand]) >= 1e-9 * np.abs(c[cand]).max()]
        t_cand = np.where(off[cand], r[cand] / c[cand], 0.0)
        order = np.lexsort((cand, t_cand))
        cand, t_cand = cand[order], t_cand[order]
        if degenerate or pivot_rule == "bland":
            stop = 0
        else:
            slopes = slope0 + np.cumsum(w[cand] * np.abs(c[cand]))
            reached = slopes >= -1e-13 * (1.0 + abs(slope0))
            stop = int(np.argmax(reached)) if reached.any() else cand.size - 1
        enter, step = cand[stop], t_cand[stop]

        leave = h[k]
        theta = theta + step * delta
        r = r - step * c
        side[cand[:stop]] *= -1.0
        side[leave] = -sign
        row_new = _dense_rows(U, [enter])[0]
        col = Binv[:, k].copy()
        v = row_new @ Binv
        v[k] -= 1.0
        Binv -= np.outer(col, v) / (row_new @ col)
        h[k] = enter
        in_basis[leave], in_basis[enter] = False, True
        it += 1
        if it % _REFACTOR_EVERY == 0:
            Binv, theta = factor(h)
            r = Y - U @ theta

    Binv, theta = factor(h)
    r = Y - U @ theta
    r[h] = 0.0
    off = np.abs(r) > tol
    side[off] = np.sign(r[off])
    dual = np.where(side > 0, tau, tau - 1.0)
    dual[in_basis] = 0.0
    g = Ut @ (w * dual)
    dual[h] = -(Binv.T @ g) / np.where(w[h] > 0, w[h], 1.0)
    return theta, h, it, status, dual


def solve_wqr(problem, start=(), pivot_rule="dantzig", max_iter=None,
              rank_convention="least_norm"):
    """Solve a :class:`WqrProblem` to an optimal vertex.

    Parameters
    ----------
    start : observation indices to seed the initial basis (warm start).
        The basis is completed with the lowest-index independent rows.
    pivot_rule : ``"dantzig"`` (steepest edge) or ``"bland"`` (lowest index).
    rank_convention : what to do when the weighted design is column-rank
        deficient.  Dependent columns are dropped (lowest index kept); with
        ``"least_norm"`` the fit is then projected onto the row space of U,
        with ``"drop"`` the dropped coefficients stay at zero.
    """
    Y, U, w, tau = problem.Y, problem.U, problem.w, problem.tau
    n, m = problem.n, problem.m
    keep = np.flatnonzero(w > 0)
    Uk = U[keep] if sp.issparse(U) else U[keep]
    if sp.issparse(Uk):
        Uk = Uk.tocsr()
    pos = np.full(n, -1)
    pos[keep] = np.arange(keep.size)
    seed = [int(pos[i]) for i in start if 0 <= i < n and pos[i] >= 0]
    if max_iter is None:
        max_iter = 50 * (keep.size + m)

    status_override = None
    cols = np.arange(m)
    res = _simplex(Y[keep], Uk, w[keep], tau, seed, max_iter, pivot_rule) if keep.size >= m else None
    if res is None:
        cols = np.array(_independent_columns(Uk), dtype=int)
        if cols.size == 0:
            raise ValueError("design has no nonzero column on the weighted support")
        Ur = Uk[:, cols]
        res = _simplex(Y[keep], Ur.tocsr() if sp.issparse(Ur) else Ur,
                       w[keep], tau, seed, max_iter, pivot_rule)
        status_override = DEGENERATE
    theta_r, h, it, status, dual_k = res
    theta = np.zeros(m)
    theta[cols] = theta_r
    if status_override is not None and rank_convention == "least_norm":
        dense = Uk.toarray() if sp.issparse(Uk) else Uk
        theta = np.linalg.pinv(dense) @ (dense @ theta)
    if status_override is not None and status == OPTIMAL:
        status = status_override

    r = problem.residuals(theta)
    dual = np.where(r > 0, tau, tau - 1.0)
    dual[keep] = dual_k
    interpolated = np.flatnonzero(np.abs(r) <= zero_tolerance(Y))
    return WqrSolution(theta=theta, objective=problem.objective(theta),
                       interpolated=interpolated, iterations=it, status=status,
                       basis=keep[h], dual=dual)


def subgradient(problem, theta, tol=None):
    """Per-column interval of attainable subgradients of the mean weighted loss.

    Returns ``(lower, upper)``: observations fitted exactly may take any
    ``a_i`` in ``[tau - 1, tau]``, every other observation contributes
    ``-tau`` or ``1 - tau`` times its weighted covariate.
    """
    tau, n = problem.tau, problem.n
    r = problem.residuals(theta)
    tol = zero_tolerance(problem.Y) if tol is None else tol
    zero = np.abs(r) <= tol
    psi = np.where(r > 0, tau, tau - 1.0)
    psi[zero] = 0.0
    U = problem.U
    base = -(U.T @ (problem.w * psi)) / n
    wz = np.where(zero, problem.w, 0.0)
    # -a_i * w_i * u_ij over a_i in [tau-1, tau]: endpoints -tau*wu, (1-tau)*wu
    if sp.issparse(U):
        Uz = sp.diags(wz) @ U
        pos = Uz.maximum(0)
        neg = (-Uz).maximum(0)
        lo = -(tau * np.asarray(pos.sum(axis=0)).ravel() + (1 - tau) * np.asarray(neg.sum(axis=0)).ravel())
        hi = (1 - tau) * np.asarray(pos.sum(axis=0)).ravel() + tau * np.asarray(neg.sum(axis=0)).ravel()
    else:
        Uz = wz[:, None] * U
        pos, neg = np.maximum(Uz, 0).sum(axis=0), np.maximum(-Uz, 0).sum(axis=0)
        lo = -(tau * pos + (1 - tau) * neg)
        hi = (1 - tau) * pos + tau * neg
    return base + lo / n, base + hi / n
