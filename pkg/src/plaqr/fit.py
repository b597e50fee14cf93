"""Oracle and penalized fits of the partially linear additive quantile model.

The penalized fit runs the local linear approximation (LLA): each step
replaces ``p_lambda(|beta_j|)`` by its tangent at the previous iterate and
solves the resulting weighted-L1 problem as one weighted quantile regression
on data augmented with two pseudo-observations ``(0, +e_j)`` and
``(0, -e_j)`` per linear covariate, using ``|b| = rho_tau(b) + rho_tau(-b)``.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .penalties import PenaltySpec, penalty, penalty_deriv
from .splines import build_design, center_g, eval_components, make_basis
from .wqr import OPTIMAL, WqrProblem, _independent_columns, check_loss, solve_wqr, subgradient

log = logging.getLogger(__name__)

# pseudo-observation weights below this are dropped (coefficient is in the
# flat part of SCAD/MCP and stays unpenalized for the step)
WEIGHT_FLOOR = 1e-12
MAX_LLA_ITERS = 100
LLA_TOL = 1e-7


class RankDeficiencyError(ValueError):
    """More free coefficients than observations."""


def default_bases(Z, order=4, k_n=None, knot_rule="sample_quantile"):
    """One basis per column of ``Z``; ``k_n`` defaults to ``floor(n^(1/5))``."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if k_n is None:
        k_n = int(np.floor(Z.shape[0] ** 0.2))
    return tuple(make_basis(order, k_n, knot_rule, Z[:, j] if knot_rule == "sample_quantile" else None)
                 for j in range(Z.shape[1]))


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Data and model settings for one quantile level."""

    y: np.ndarray
    X: np.ndarray
    Z: np.ndarray = None
    tau: float = 0.5
    bases: tuple = None
    penalty: PenaltySpec = field(default_factory=PenaltySpec)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.size == 0:
            X = np.zeros((y.size, 0))
        Z = np.zeros((y.size, 0)) if self.Z is None else np.asarray(self.Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        if X.shape[0] != y.size or Z.shape[0] != y.size:
            raise ValueError("y, X and Z must have the same number of rows")
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        bases = default_bases(Z) if self.bases is None and Z.shape[1] else tuple(self.bases or ())
        if len(bases) != Z.shape[1]:
            raise ValueError("need one spline basis per nonlinear covariate")
        for name, value in (("y", y), ("X", X), ("Z", Z), ("bases", bases)):
            object.__setattr__(self, name, value)

    @property
    def n(self):
        return self.y.size

    @property
    def p(self):
        return self.X.shape[1]

    @cached_property
    def design(self):
        return build_design(self.bases, self.Z)

    @cached_property
    def spline_cols(self):
        """Identifiable spline columns.

        Each normalized B-spline block sums to one, duplicating the intercept;
        the lowest-index independent subset is kept.
        """
        return np.array(_independent_columns(self.design.matrix), dtype=int)

    @cached_property
    def real_design(self):
        return np.hstack([self.X, self.design.matrix[:, self.spline_cols]])

    @cached_property
    def augmented_design(self):
        p, k = self.p, self.spline_cols.size
        eye = np.hstack([np.eye(p), np.zeros((p, k))])
        U = np.vstack([self.real_design, eye, -eye])
        U.setflags(write=False)
        return U

    def replace(self, **changes):
        fields = dict(y=self.y, X=self.X, Z=self.Z, tau=self.tau, bases=self.bases,
                      penalty=self.penalty)
        fields.update(changes)
        return ModelSpec(**fields)

    def at_tau(self, tau):
        """Same data and bases at another quantile level, sharing cached designs."""
        out = self.replace(tau=tau)
        for name in ("design", "spline_cols", "real_design", "augmented_design"):
            if name in self.__dict__:
                out.__dict__[name] = self.__dict__[name]
        return out


@dataclass(frozen=True, eq=False)
class FitResult:
    beta: np.ndarray
    xi: np.ndarray
    g: object                 # CenteredComponents at the data
    residuals: np.ndarray
    objective: float
    tau: float
    lam: float = None
    lla_iterations: int = 0
    converged: bool = True
    status: str = OPTIMAL
    n_interpolated: int = 0
    objective_history: tuple = ()
    kkt_report: dict = None
    basis: np.ndarray = field(default=None, repr=False)
    bases: tuple = field(default=(), repr=False)

    @property
    def active_set(self):
        return np.flatnonzero(self.beta != 0)

    @property
    def check_loss_total(self):
        return float(check_loss(self.residuals, self.tau).sum())

    def g_at(self, Z):
        """Centered component values at new points (rows of ``Z``)."""
        return eval_components(self.xi, self.bases, self.g.means, Z)

    def predict(self, X, Z=None):
        X = np.atleast_2d(X)
        out = X @ self.beta + self.g.intercept
        if self.bases:
            out = out + self.g_at(Z).sum(axis=1)
        return out


def _expand_xi(spec, xi_reduced):
    xi = np.zeros(spec.design.L_n)
    xi[spec.spline_cols] = xi_reduced
    return xi


def penalized_objective(spec, beta, xi, pen=None):
    """``n^-1 sum rho_tau(residual) + sum_j p_lambda(|beta_j|)``."""
    pen = spec.penalty if pen is None else pen
    r = spec.y - spec.X @ beta - spec.design.matrix @ xi
    return float(check_loss(r, spec.tau).mean() + np.sum(penalty(pen, beta)))


def _result(spec, beta, xi, sol, **extra):
    resid = spec.y - spec.X @ beta - spec.design.matrix @ xi
    n_int = int(np.sum(sol.interpolated < spec.n)) if sol is not None else 0
    return FitResult(beta=beta, xi=xi, g=center_g(xi, spec.design), residuals=resid,
                     tau=spec.tau, n_interpolated=n_int,
                     status=sol.status if sol is not None else OPTIMAL,
                     basis=sol.basis if sol is not None else None,
                     bases=spec.bases, **extra)


def fit_oracle(spec, active=None):
    """Unpenalized fit on the linear columns ``active`` plus the spline design."""
    active = np.arange(spec.p) if active is None else np.asarray(sorted(set(int(j) for j in active)), dtype=int)
    if active.size and (active.min() < 0 or active.max() >= spec.p):
        raise IndexError("active index out of range")
    L = spec.spline_cols.size
    if active.size + L >= spec.n:
        raise RankDeficiencyError(f"{active.size} linear + {L} spline columns need more than {spec.n} rows")
    U = np.hstack([spec.X[:, active], spec.design.matrix[:, spec.spline_cols]])
    sol = solve_wqr(WqrProblem(spec.y, U, tau=spec.tau), rank_convention="drop")
    beta = np.zeros(spec.p)
    beta[active] = sol.theta[:active.size]
    xi = _expand_xi(spec, sol.theta[active.size:])
    return _result(spec, beta, xi, sol, objective=sol.objective / spec.n)


def lla_weights(spec, beta, pen=None):
    pen = spec.penalty if pen is None else pen
    wts = spec.n * penalty_deriv(pen, np.abs(beta))
    wts[wts < WEIGHT_FLOOR] = 0.0
    return np.r_[np.ones(spec.n), wts, wts]


def lla_step_objective_check(spec, prev_beta, beta, xi, pen=None):
    """The majorized LLA objective at ``(beta, xi)`` computed two ways.

    Returns ``(direct, augmented)``: the tangent-penalized objective and the
    weighted check loss of the augmented data divided by ``n``.  They agree
    when the augmentation is right.
    """
    pen = spec.penalty if pen is None else pen
    r = spec.y - spec.X @ beta - spec.design.matrix @ xi
    direct = check_loss(r, spec.tau).mean() + penalty_deriv(pen, np.abs(prev_beta)) @ np.abs(beta)
    theta = np.r_[beta, xi]
    eye = np.hstack([np.eye(spec.p), np.zeros((spec.p, xi.size))])
    U = np.vstack([np.hstack([spec.X, spec.design.matrix]), eye, -eye])
    y_aug = np.r_[spec.y, np.zeros(2 * spec.p)]
    aug = WqrProblem(y_aug, U, lla_weights(spec, prev_beta, pen), spec.tau)
    augmented = aug.objective(theta) / spec.n
    return float(direct), float(augmented)


def fit_penalized(spec, lam=None, warm_beta=None, warm_basis=None,
                  max_lla_iters=MAX_LLA_ITERS, tol=LLA_TOL, check_kkt=True):
    """Penalized fit by LLA starting at ``beta = 0`` (or ``warm_beta``)."""
    pen = spec.penalty if lam is None else spec.penalty.with_lambda(lam)
    n, p = spec.n, spec.p
    beta = np.zeros(p) if warm_beta is None else np.array(warm_beta, dtype=float)
    U = spec.augmented_design
    y_aug = np.r_[spec.y, np.zeros(2 * p)]
    start = np.arange(n, n + p) if warm_basis is None else warm_basis
    history = []
    converged = False
    sol = None
    it = 0
    for it in range(1, max_lla_iters + 1):
        w = lla_weights(spec, beta, pen)
        sol = solve_wqr(WqrProblem(y_aug, U, w, spec.tau), start=start, rank_convention="drop")
        new_beta = sol.theta[:p].copy()
        new_beta[np.abs(new_beta) < 1e-12] = 0.0
        xi = _expand_xi(spec, sol.theta[p:])
        history.append(penalized_objective(spec, new_beta, xi, pen))
        step = np.abs(new_beta - beta).sum()
        beta, start = new_beta, sol.basis
        if step < tol:
            converged = True
            break
    if not converged:
        log.warning("LLA did not converge in %d iterations (lambda=%g)", max_lla_iters, pen.lam)
    fit = _result(spec, beta, xi, sol, objective=history[-1], lam=pen.lam,
                  lla_iterations=it, converged=converged, objective_history=tuple(history))
    if check_kkt:
        object.__setattr__(fit, "kkt_report", kkt_check(spec, fit, pen.lam))
    return fit


def kkt_check(spec, fit, lam=None, tol=1e-6):
    """Local optimality conditions of the penalized objective at ``fit``.

    With ``s_j`` the subgradient interval of the mean check loss, an active
    coordinate needs ``0 in s_j + p'(|beta_j|) sign(beta_j)``, an inactive one
    needs ``|s_j| <= lambda`` for some attainable ``s_j``, and every spline
    coordinate needs ``0 in s_j``.
    """
    lam = fit.lam if lam is None else lam
    lam = 0.0 if lam is None else lam
    pen = spec.penalty.with_lambda(lam)
    U = np.hstack([spec.X, spec.design.matrix])
    theta = np.r_[fit.beta, fit.xi]
    lo, hi = subgradient(WqrProblem(spec.y, U, tau=spec.tau), theta)
    p = spec.p
    beta = fit.beta
    active = beta != 0
    shift = penalty_deriv(pen, np.abs(beta)) * np.sign(beta)
    blo, bhi = lo[:p] + shift, hi[:p] + shift
    beta_ok = np.where(active, (blo <= tol) & (bhi >= -tol),
                       (lo[:p] <= lam + tol) & (hi[:p] >= -lam - tol))
    # smallest attainable |s_j| relative to lambda, for inactive coordinates
    min_abs = np.where((lo <= 0) & (hi >= 0), 0.0, np.minimum(np.abs(lo), np.abs(hi)))
    ratio = np.where(active, np.nan, min_abs[:p] / lam if lam > 0 else np.inf)
    spline_ok = (lo[p:] <= tol) & (hi[p:] >= -tol)
    flat = active & (np.abs(beta) > pen.a * lam) if pen.a is not None else np.zeros(p, bool)
    return {
        "s_lower": lo, "s_upper": hi,
        "beta_ok": beta_ok, "spline_ok": spline_ok,
        "inactive_ratio": ratio,
        "flat_active": flat,
        "flat_active_zero_in_s": (lo[:p] <= tol) & (hi[:p] >= -tol) & flat,
        "violations": np.flatnonzero(~beta_ok).tolist(),
        "ok": bool(beta_ok.all() and spline_ok.all()),
    }
