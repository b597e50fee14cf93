"""Joint estimation at several quantile levels with a group penalty.

Covariate ``j`` is penalized through ``p_lambda(||b_j||_1)`` where ``b_j``
stacks its coefficients over the quantile levels.  Because the L1 norm is a
sum over levels, each LLA step splits into one augmented weighted quantile
regression per level, all sharing the same pseudo-observation weights.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .fit import (LLA_TOL, MAX_LLA_ITERS, WEIGHT_FLOOR, ModelSpec, _expand_xi, _result,
                  fit_oracle)
from .penalties import PenaltySpec, penalty, penalty_deriv
from .tuning import (DEFAULT_N_LAMBDA, LAMBDA_MIN_RATIO, DegenerateGridError, LambdaPath,
                     _check_grid, _select, default_max_size, lambda_max, qbic_value,
                     usable_fits)
from .wqr import WqrProblem, check_loss, solve_wqr

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class MultiTauSpec:
    """Shared data and bases at quantile levels ``taus``."""

    y: np.ndarray
    X: np.ndarray
    Z: np.ndarray = None
    taus: tuple = (0.5,)
    bases: tuple = None
    penalty: PenaltySpec = field(default_factory=PenaltySpec)

    def __post_init__(self):
        taus = np.atleast_1d(np.asarray(self.taus, dtype=float))
        if taus.size < 1:
            raise ValueError("need at least one quantile level")
        if np.any(np.diff(taus) <= 0):
            raise ValueError("taus must be strictly increasing")
        base = ModelSpec(self.y, self.X, self.Z, float(taus[0]), self.bases, self.penalty)
        object.__setattr__(self, "taus", tuple(float(t) for t in taus))
        object.__setattr__(self, "bases", base.bases)
        object.__setattr__(self, "_specs", tuple(base.at_tau(t) for t in taus))

    @property
    def specs(self):
        """One :class:`ModelSpec` per quantile level."""
        return self._specs

    @property
    def M(self):
        return len(self.taus)

    @property
    def n(self):
        return self._specs[0].n

    @property
    def p(self):
        return self._specs[0].p


@dataclass(frozen=True, eq=False)
class MultiFitResult:
    fits: tuple                     # one FitResult per level
    taus: tuple
    lam: float = None
    objective: float = None
    lla_iterations: int = 0
    converged: bool = True
    objective_history: tuple = ()

    @property
    def beta_by_tau(self):
        return np.array([f.beta for f in self.fits])

    @property
    def xi_by_tau(self):
        return np.array([f.xi for f in self.fits])

    @property
    def group_norms(self):
        return np.abs(self.beta_by_tau).sum(axis=0)

    @property
    def group_active_set(self):
        return np.flatnonzero(self.group_norms > 0)

    # lets a group fit sit in a LambdaPath
    @property
    def active_set(self):
        return self.group_active_set

    @property
    def check_loss_total(self):
        return float(sum(f.check_loss_total for f in self.fits))

    @property
    def n_interpolated(self):
        return int(sum(f.n_interpolated for f in self.fits))

    @property
    def status(self):
        bad = [f.status for f in self.fits if f.status != "optimal"]
        return bad[0] if bad else "optimal"


def group_objective(spec, beta_by_tau, xi_by_tau, pen=None):
    """``n^-1 sum_i sum_m rho_m(residual) + sum_j p_lambda(||b_j||_1)``."""
    pen = spec.penalty if pen is None else pen
    loss = 0.0
    for s, beta, xi in zip(spec.specs, beta_by_tau, xi_by_tau):
        r = s.y - s.X @ beta - s.design.matrix @ xi
        loss += float(np.sum(r * (s.tau - (r < 0))))
    norms = np.abs(np.asarray(beta_by_tau)).sum(axis=0)
    return loss / spec.n + float(np.sum(penalty(pen, norms)))


def group_weights(spec, beta_by_tau, pen):
    wts = spec.n * penalty_deriv(pen, np.abs(np.asarray(beta_by_tau)).sum(axis=0))
    wts[wts < WEIGHT_FLOOR] = 0.0
    return wts


def fit_group_penalized(spec, lam=None, warm_bases=None, max_lla_iters=MAX_LLA_ITERS,
                        tol=LLA_TOL):
    """Group-penalized fit across all levels by LLA, starting from zero."""
    pen = spec.penalty if lam is None else spec.penalty.with_lambda(lam)
    n, p, M = spec.n, spec.p, spec.M
    betas = np.zeros((M, p))
    starts = [np.arange(n, n + p)] * M if warm_bases is None else list(warm_bases)
    history, sols, xis = [], [None] * M, [None] * M
    converged = False
    it = 0
    for it in range(1, max_lla_iters + 1):
        wts = group_weights(spec, betas, pen)
        w = np.r_[np.ones(n), wts, wts]
        new = np.zeros_like(betas)
        for m, s in enumerate(spec.specs):
            y_aug = np.r_[s.y, np.zeros(2 * p)]
            sol = solve_wqr(WqrProblem(y_aug, s.augmented_design, w, s.tau),
                            start=starts[m], rank_convention="drop")
            b = sol.theta[:p].copy()
            b[np.abs(b) < 1e-12] = 0.0
            new[m], xis[m], sols[m], starts[m] = b, _expand_xi(s, sol.theta[p:]), sol, sol.basis
        history.append(group_objective(spec, new, xis, pen))
        step = np.abs(new - betas).sum()
        betas = new
        if step < tol:
            converged = True
            break
    if not converged:
        log.warning("group LLA did not converge in %d iterations (lambda=%g)", max_lla_iters, pen.lam)
    fits = []
    for m, s in enumerate(spec.specs):
        r = s.y - s.X @ betas[m] - s.design.matrix @ xis[m]
        fits.append(_result(s, betas[m], xis[m], sols[m], objective=float(check_loss(r, s.tau).mean()),
                            lam=pen.lam, lla_iterations=it, converged=converged))
    fits = tuple(fits)
    return MultiFitResult(fits, spec.taus, pen.lam, history[-1], it, converged, tuple(history))


def fit_multi_oracle(spec, active):
    """Unpenalized fits on a shared support, one per level."""
    fits = tuple(fit_oracle(s, active) for s in spec.specs)
    obj = float(sum(f.objective for f in fits))
    return MultiFitResult(fits, spec.taus, None, obj)


def union_selection(fits):
    """Union of the active sets of separately fitted levels."""
    sets = [np.asarray(f.active_set, dtype=int) for f in fits]
    return np.unique(np.concatenate(sets)) if sets else np.zeros(0, dtype=int)


def group_qbic(fit, p_n, n):
    """QBIC with check losses summed over levels and interpolations counted over levels."""
    return qbic_value(fit.check_loss_total, fit.n_interpolated, p_n, n)


def group_auto_grid(spec, n_lambda=DEFAULT_N_LAMBDA, min_ratio=LAMBDA_MIN_RATIO):
    lmax = max(lambda_max(s) for s in spec.specs)
    if lmax <= 0:
        raise DegenerateGridError("lambda_max is zero at every level")
    return np.geomspace(lmax, min_ratio * lmax, n_lambda)


def fit_group_path(spec, lambdas=None, n_lambda=DEFAULT_N_LAMBDA, max_size=None):
    """Group fits over a decreasing grid, selected by summed QBIC.

    Like :func:`plaqr.tuning.fit_path`, the path stops after the first fit
    with more than ``max_size`` active groups.
    """
    lambdas = group_auto_grid(spec, n_lambda) if lambdas is None else _check_grid(lambdas)
    max_size = default_max_size(spec.n) if max_size is None else max_size
    fits, bases = [], None
    for lam in lambdas:
        fit = fit_group_penalized(spec, lam, warm_bases=bases)
        bases = [f.basis for f in fit.fits]
        fits.append(fit)
        if fit.active_set.size > max_size:
            break
    lambdas = lambdas[:len(fits)]
    usable = usable_fits(fits, spec.n, max_size)
    scores = np.array([group_qbic(f, spec.p, spec.n) for f in fits])
    idx = _select(scores, usable)
    return LambdaPath(lambdas, fits, scores, idx, "qbic", np.flatnonzero(~usable))


def l2_error(beta_by_tau, truth_by_tau):
    """``M^-1 sum_m ||b_m - b0_m||^2``."""
    diff = np.asarray(beta_by_tau) - np.asarray(truth_by_tau)
    return float(np.mean(np.sum(diff**2, axis=1)))
