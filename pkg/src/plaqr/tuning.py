"""Lambda grids, QBIC model selection and K-fold cross-validation."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .fit import fit_oracle, fit_penalized
from .wqr import WqrProblem, check_loss, solve_wqr

log = logging.getLogger(__name__)

DEFAULT_N_LAMBDA = 50
LAMBDA_MIN_RATIO = 0.01
N_FOLDS = 5


class DegenerateGridError(ValueError):
    """Raised when no lambda grid can be built (e.g. a perfectly fitted null model)."""


def qbic_value(loss_total, nu, p_n, n):
    """``log(total check loss) + nu * log(p_n) * log(log(n)) / (2 n)``."""
    if loss_total <= 0:
        return -math.inf
    log_p = math.log(p_n) if p_n > 1 else 0.0
    return math.log(loss_total) + nu * log_p * math.log(math.log(n)) / (2 * n)


def qbic(fit, p_n, n):
    """QBIC of a fit; ``nu`` is the number of real observations it interpolates."""
    return qbic_value(fit.check_loss_total, fit.n_interpolated, p_n, n)


def null_dual(spec):
    """Subgradient weights of the fit with every linear coefficient at zero."""
    U = spec.design.matrix[:, spec.spline_cols]
    sol = solve_wqr(WqrProblem(spec.y, U, tau=spec.tau), rank_convention="drop")
    return sol


def lambda_max(spec):
    """Smallest lambda whose first LLA step (a LASSO step) keeps beta at zero."""
    sol = null_dual(spec)
    if sol.interpolated.size == spec.n or spec.p == 0:
        return 0.0
    s = -(spec.X.T @ sol.dual) / spec.n
    return float(np.max(np.abs(s)))


def auto_grid(spec, n_lambda=DEFAULT_N_LAMBDA, min_ratio=LAMBDA_MIN_RATIO):
    """Log-spaced decreasing grid from ``lambda_max`` down to ``min_ratio * lambda_max``."""
    if n_lambda < 2:
        raise ValueError("n_lambda must be at least 2")
    lmax = lambda_max(spec)
    if lmax <= 0:
        raise DegenerateGridError("lambda_max is zero: the null model already fits exactly")
    return np.geomspace(lmax, min_ratio * lmax, n_lambda)


@dataclass(frozen=True, eq=False)
class LambdaPath:
    lambdas: np.ndarray
    fits: list
    scores: np.ndarray
    selected_index: int
    criterion: str
    # fits excluded from selection (perfect fit or rank trouble)
    excluded: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def selected(self):
        return self.fits[self.selected_index]

    @property
    def selected_lambda(self):
        return float(self.lambdas[self.selected_index])

    def active_sizes(self):
        return np.array([f.active_set.size for f in self.fits])


def _check_grid(lambdas):
    lambdas = np.asarray(lambdas, dtype=float).ravel()
    if lambdas.size == 0 or np.any(lambdas < 0):
        raise ValueError("lambda grid must be nonempty and nonnegative")
    if np.any(np.diff(lambdas) >= 0):
        raise ValueError("lambda grid must be strictly decreasing")
    return lambdas


def _fit_grid(spec, lambdas, check_kkt=False, max_size=None):
    """Fits along the grid; stops after the first fit larger than ``max_size``."""
    fits, basis = [], None
    for lam in lambdas:
        # LLA restarts at beta = 0 for every lambda; only the simplex basis
        # is carried over
        fit = fit_penalized(spec, lam, warm_basis=basis, check_kkt=check_kkt)
        basis = fit.basis
        fits.append(fit)
        if max_size is not None and fit.active_set.size > max_size:
            break
    return fits


def default_max_size(n):
    """Largest candidate model considered by the selector, ``floor(n / log n)``."""
    return max(1, int(n / math.log(n)))


def usable_fits(fits, n, max_size=None):
    """Fits eligible for selection.

    Saturated fits (every observation interpolated or zero loss), rank
    trouble, and models with more than ``max_size`` linear covariates are
    left out: QBIC's log-loss term diverges as a fit approaches saturation.
    """
    max_size = default_max_size(n) if max_size is None else max_size
    return np.array([f.check_loss_total > 0 and f.status != "degenerate"
                     and all(g.n_interpolated < n for g in getattr(f, "fits", (f,)))
                     and f.active_set.size <= max_size
                     for f in fits])


def _select(scores, usable):
    scores = np.where(usable, scores, np.inf)
    if not np.isfinite(scores).any():
        raise RuntimeError("every fit on the path is degenerate")
    return int(np.argmin(scores))   # first minimum: ties go to the larger lambda


def cv_folds(n, k=N_FOLDS, seed=0):
    """Contiguous folds after one seeded shuffle."""
    perm = np.random.default_rng(seed).permutation(n)
    return np.array_split(perm, k)


def cv_scores(spec, lambdas, k=N_FOLDS, seed=0):
    """Held-out total check loss per lambda, summed over folds."""
    total = np.zeros(len(lambdas))
    for test in cv_folds(spec.n, k, seed):
        train = np.setdiff1d(np.arange(spec.n), test)
        sub = spec.replace(y=spec.y[train], X=spec.X[train], Z=spec.Z[train])
        # knots stay those of the full sample so every fold shares one basis
        for i, fit in enumerate(_fit_grid(sub, lambdas)):
            pred = fit.predict(spec.X[test], spec.Z[test])
            total[i] += check_loss(spec.y[test] - pred, spec.tau).sum()
    return total


def fit_path(spec, lambdas=None, n_lambda=DEFAULT_N_LAMBDA, criterion="qbic",
             cv_k=N_FOLDS, seed=0, check_kkt=False, max_size=None):
    """Fit every lambda on a decreasing grid and select one by QBIC or CV.

    ``max_size`` bounds the number of selected linear covariates among
    candidates (default ``floor(n / log n)``); the path stops after the
    first fit above it, so ``lambdas`` of the result may be a prefix of
    the grid.
    """
    lambdas = auto_grid(spec, n_lambda) if lambdas is None else _check_grid(lambdas)
    max_size = default_max_size(spec.n) if max_size is None else max_size
    fits = _fit_grid(spec, lambdas, check_kkt=check_kkt, max_size=max_size)
    lambdas = lambdas[:len(fits)]
    usable = usable_fits(fits, spec.n, max_size)
    if criterion == "qbic":
        scores = np.array([qbic(f, spec.p, spec.n) for f in fits])
    elif criterion == "cv":
        scores = cv_scores(spec, lambdas, cv_k, seed)
    else:
        raise ValueError(f"unknown criterion {criterion!r}")
    if not usable.all():
        log.info("%d of %d path fits excluded from selection", (~usable).sum(), usable.size)
    idx = _select(scores, usable)
    return LambdaPath(lambdas, fits, scores, idx, criterion, np.flatnonzero(~usable))


def refit_interpolated(spec, fit):
    """Interpolation count of the unpenalized refit on the fit's support."""
    return fit_oracle(spec, fit.active_set).n_interpolated
