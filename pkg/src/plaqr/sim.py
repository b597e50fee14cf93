"""Monte Carlo harness: data-generating processes, selection metrics, rate checks.

Covariates follow an AR(1)-correlated Gaussian vector ``Xt`` of length
``p + 2`` with ``corr(Xt_j, Xt_k) = 0.5 ** |j - k|``.  Linear covariates are
``X_1 = sqrt(12) * Phi(Xt_1)``, ``X_2..X_24 = Xt_2..Xt_24`` and
``X_25..X_p = Xt_27..Xt_{p+2}``; the nonlinear covariates are
``Z_1 = Phi(Xt_25)`` and ``Z_2 = Phi(Xt_26)``.  The response is

    Y = X_6 b_1 + X_12 b_2 + X_15 b_3 + X_20 b_4 + sin(2 pi Z_1) + Z_2**3 + eps

with ``b_j ~ U[0.5, 1.5]`` drawn per replication.  Heteroscedastic errors
are ``X_1 * zeta`` with ``zeta ~ N(0, sd=0.7)``; since ``X_1 >= 0`` the
tau-quantile of the error is ``0.7 Phi^-1(tau) X_1``, so ``X_1`` joins the
linear support at any ``tau != 0.5``.  (With ``Xt_1 * zeta`` the shift would
be ``0.7 q_tau |Xt_1|``, an even function of ``Xt_1`` with zero covariance
with ``X_1``.)
"""

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .fit import ModelSpec, default_bases, fit_oracle, kkt_check
from .multi import MultiTauSpec, fit_group_path, fit_multi_oracle, l2_error, union_selection
from .penalties import PenaltySpec
from .splines import make_basis
from .tuning import fit_path
from .wqr import check_loss

log = logging.getLogger(__name__)

GAUSSIAN = "gaussian"
T3 = "t3"
HETERO = "heteroscedastic"
ERROR_MODELS = (GAUSSIAN, T3, HETERO)

SIGNAL_COLS = np.array([5, 11, 14, 19])     # X_6, X_12, X_15, X_20
HETERO_SD = 0.7
RHO = 0.5


def n_workers():
    return max(1, int(os.environ.get("PLAQR_THREADS", "1")))


def rep_rng(seed, rep):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(rep)]))


@dataclass(frozen=True)
class SimConfig:
    n: int = 300
    p: int = 100
    error_model: str = GAUSSIAN
    tau: float = 0.5
    n_reps: int = 50
    seed: int = 20240601

    def __post_init__(self):
        if self.n < 10:
            raise ValueError("n must be at least 10")
        if self.p < 27:
            raise ValueError("p must be at least 27 (signal and nonlinear columns)")
        if self.n_reps < 1:
            raise ValueError("n_reps must be positive")
        if self.error_model not in ERROR_MODELS:
            raise ValueError(f"error_model must be one of {ERROR_MODELS}")
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class SimData:
    y: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    signal: np.ndarray          # U[0.5, 1.5] draws for the four signal columns
    g_centered: np.ndarray      # centered sin(2 pi z1) + z2^3 at the data
    error_model: str

    def true_beta(self, tau):
        """Linear coefficients of the conditional tau-quantile."""
        beta = np.zeros(self.X.shape[1])
        beta[SIGNAL_COLS] = self.signal
        if self.error_model == HETERO:
            beta[0] = HETERO_SD * stats.norm.ppf(tau)
        return beta

    def support(self, tau):
        return np.flatnonzero(np.abs(self.true_beta(tau)) > 1e-12)


def ar1_gaussian(rng, n, k, rho=RHO):
    out = np.empty((n, k))
    out[:, 0] = rng.standard_normal(n)
    scale = math.sqrt(1 - rho**2)
    for j in range(1, k):
        out[:, j] = rho * out[:, j - 1] + scale * rng.standard_normal(n)
    return out


def generate(config, rep=0, rng=None):
    rng = rep_rng(config.seed, rep) if rng is None else rng
    n, p = config.n, config.p
    Xt = ar1_gaussian(rng, n, p + 2)
    X = np.empty((n, p))
    X[:, 0] = math.sqrt(12.0) * stats.norm.cdf(Xt[:, 0])
    X[:, 1:24] = Xt[:, 1:24]
    X[:, 24:] = Xt[:, 26:]
    Z = stats.norm.cdf(Xt[:, 24:26])
    signal = rng.uniform(0.5, 1.5, size=SIGNAL_COLS.size)
    g = np.sin(2 * np.pi * Z[:, 0]) + Z[:, 1] ** 3
    if config.error_model == GAUSSIAN:
        eps = rng.standard_normal(n)
    elif config.error_model == T3:
        eps = rng.standard_t(3, size=n)
    else:
        eps = X[:, 0] * rng.normal(0.0, HETERO_SD, size=n)
    y = X[:, SIGNAL_COLS] @ signal + g + eps
    g_c = (np.sin(2 * np.pi * Z[:, 0]) - np.sin(2 * np.pi * Z[:, 0]).mean()
           + Z[:, 1] ** 3 - (Z[:, 1] ** 3).mean())
    return SimData(y, X, Z, signal, g_c, config.error_model)


def sim_bases(order=4, d=2):
    """Cubic splines without internal knots.

    Each coordinate has four B-splines summing to one; after the
    intercept absorbs that sum, three free basis functions remain.
    """
    return tuple(make_basis(order=order, k_n=0) for _ in range(d))


@dataclass
class MetricsReport:
    FV: float
    TV: float
    True_: float
    P: float
    AADE: float
    MSE: float
    n_reps: int
    L2_error: float = None
    extra: dict = field(default_factory=dict)

    def as_row(self):
        row = {"FV": self.FV, "TV": self.TV, "True": self.True_, "P": self.P,
               "AADE": self.AADE, "MSE": self.MSE}
        if self.L2_error is not None:
            row["L2_error"] = self.L2_error
        return row

    def to_dict(self):
        d = asdict(self)
        d["True"] = d.pop("True_")
        return d


def rep_metrics(selected, support, beta_hat, beta_true, g_hat=None, g_true=None):
    """Per-replication selection and estimation scores."""
    selected, support = set(int(j) for j in selected), set(int(j) for j in support)
    rec = {
        "FV": len(selected - support),
        "TV": len(selected & support),
        "True": float(selected == support),
        "P": float(0 in selected),
        "MSE": float(np.sum((np.asarray(beta_hat) - beta_true) ** 2)),
    }
    if g_hat is not None:
        rec["ADE"] = float(np.mean(np.abs(g_hat - g_true)))
    return rec


def score(records):
    """Average per-replication records into a :class:`MetricsReport`."""
    mean = lambda key: float(np.mean([r[key] for r in records])) if records and key in records[0] else float("nan")
    return MetricsReport(FV=mean("FV"), TV=mean("TV"), True_=mean("True"), P=mean("P"),
                         AADE=mean("ADE"), MSE=mean("MSE"), n_reps=len(records),
                         L2_error=mean("L2") if records and "L2" in records[0] else None)


def one_replication(config, rep, family="scad", criterion="qbic", n_lambda=50, a=None,
                    keep_fit=False):
    data = generate(config, rep)
    pen = PenaltySpec() if family == "oracle" else PenaltySpec(family, 0.0, a)
    spec = ModelSpec(data.y, data.X, data.Z, config.tau, sim_bases(), pen)
    if family == "oracle":
        fit = fit_oracle(spec, data.support(config.tau))
        path = None
    else:
        path = fit_path(spec, n_lambda=n_lambda, criterion=criterion,
                        seed=config.seed + rep)
        fit = path.selected
    beta_true = data.true_beta(config.tau)
    rec = rep_metrics(fit.active_set, data.support(config.tau), fit.beta, beta_true,
                      fit.g.components.sum(axis=1), data.g_centered)
    rec.update(rep=rep, n_active=int(fit.active_set.size),
               lam=None if path is None else path.selected_lambda,
               lla_iterations=fit.lla_iterations, converged=bool(fit.converged))
    if path is not None:
        rec["kkt"] = kkt_summary(kkt_check(spec, fit), fit, spec.penalty.with_lambda(path.selected_lambda))
        rec["objective_monotone"] = bool(np.all(np.diff(fit.objective_history) <= 1e-9))
    if keep_fit:
        rec["fit"] = fit
    return rec


def kkt_summary(report, fit, pen, tol=1e-6):
    """Condense a KKT report to the checks used in the acceptance runs."""
    flat = report["flat_active"]
    inactive = fit.beta == 0
    p = fit.beta.size
    lo, hi = report["s_lower"][:p], report["s_upper"][:p]
    min_abs = np.where((lo <= 0) & (hi >= 0), 0.0, np.minimum(np.abs(lo), np.abs(hi)))
    return {
        "flat_active_ok": bool(np.all(report["flat_active_zero_in_s"][flat])),
        "inactive_ok": bool(np.all(min_abs[inactive] <= pen.lam + tol)),
        "ok": report["ok"],
    }


def _run(args):
    config, rep, kwargs = args
    return one_replication(config, rep, **kwargs)


def run_simulation(config, family="scad", criterion="qbic", n_lambda=50, a=None,
                   workers=None, progress=None):
    """Run ``config.n_reps`` replications and return (report, per-rep records)."""
    workers = n_workers() if workers is None else workers
    kwargs = dict(family=family, criterion=criterion, n_lambda=n_lambda, a=a)
    jobs = [(config, rep, kwargs) for rep in range(config.n_reps)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            records = list(pool.map(_run, jobs))
    else:
        records = []
        for job in jobs:
            records.append(_run(job))
            if progress:
                progress(len(records), len(jobs))
    return score(records), records


def rate_check(ns, config, n_reps=None, q=None):
    """Oracle estimation error against sample size.

    Returns rows ``(n, mse_beta, mse_g)`` and the log-log slope of the
    coefficient MSE in ``n``.  The spline basis grows with the sample
    (cubic, ``floor(n^(1/5))`` quantile knots) so the approximation error of
    ``g`` shrinks along with the estimation error.
    """
    n_reps = config.n_reps if n_reps is None else n_reps
    rows = []
    for n in ns:
        cfg = SimConfig(n=n, p=config.p, error_model=config.error_model, tau=config.tau,
                        n_reps=n_reps, seed=config.seed)
        errs, gerrs = [], []
        for rep in range(n_reps):
            data = generate(cfg, rep)
            support = data.support(cfg.tau)
            if q is not None:
                support = support[:q]
            spec = ModelSpec(data.y, data.X, data.Z, cfg.tau, default_bases(data.Z))
            fit = fit_oracle(spec, support)
            beta_true = data.true_beta(cfg.tau)
            errs.append(np.sum((fit.beta[support] - beta_true[support]) ** 2))
            gerrs.append(np.mean((fit.g.components.sum(axis=1) - data.g_centered) ** 2))
        rows.append((n, float(np.mean(errs)), float(np.mean(gerrs))))
    rows = np.array(rows)
    slope = float(np.polyfit(np.log(rows[:, 0]), np.log(rows[:, 1]), 1)[0])
    return rows, slope


def qq_diagnostic(fits_by_tau, y, n_draws, rng=None):
    """Simulated-versus-observed response quantiles.

    Each draw takes ``tau ~ U(0, 1)`` snapped to the nearest fitted quantile
    level and a random observed covariate row, and returns that row's fitted
    conditional quantile.  Output columns: plotting position, simulated
    quantile, observed quantile.
    """
    rng = np.random.default_rng() if rng is None else rng
    taus = np.array(sorted(fits_by_tau))
    fitted = np.array([y - fits_by_tau[t].residuals for t in taus])
    u = rng.uniform(size=n_draws)
    level = np.abs(u[:, None] - taus[None, :]).argmin(axis=1)
    rows = rng.integers(0, y.size, size=n_draws)
    sim = np.sort(fitted[level, rows])
    probs = (np.arange(n_draws) + 0.5) / n_draws
    return np.column_stack([probs, sim, np.quantile(y, probs)])


def multi_replication(config, taus, rep, n_lambda=50):
    """One run of the joint-versus-separate comparison at levels ``taus``.

    Returns records for the group fit, the union of separate fits and the
    oracle, each with FV/TV/True and the L2 error averaged over levels.
    """
    data = generate(config, rep)
    taus = tuple(taus)
    pen = PenaltySpec("scad")
    mspec = MultiTauSpec(data.y, data.X, data.Z, taus, sim_bases(), pen)
    truth = np.array([data.true_beta(t) for t in taus])
    support = np.unique(np.concatenate([data.support(t) for t in taus]))

    group = fit_group_path(mspec, n_lambda=n_lambda).selected
    ind = [fit_path(s, n_lambda=n_lambda).selected for s in mspec.specs]
    oracle = fit_multi_oracle(mspec, support)
    out = {}
    for name, selected, betas in (
            ("group", group.group_active_set, group.beta_by_tau),
            ("ind", union_selection(ind), np.array([f.beta for f in ind])),
            ("oracle", oracle.group_active_set, oracle.beta_by_tau)):
        rec = rep_metrics(selected, support, betas[0], truth[0])
        rec.pop("MSE")
        rec["L2"] = l2_error(betas, truth)
        rec["rep"] = rep
        out[name] = rec
    return out


def _run_multi(args):
    config, taus, rep, n_lambda = args
    return multi_replication(config, taus, rep, n_lambda)


def run_multi_simulation(config, taus=(0.5, 0.7, 0.9), n_lambda=50, workers=None, progress=None):
    """Joint-versus-separate comparison over ``config.n_reps`` replications.

    Returns ``{method: MetricsReport}`` for ``group``, ``ind`` and ``oracle``.
    """
    workers = n_workers() if workers is None else workers
    jobs = [(config, tuple(taus), rep, n_lambda) for rep in range(config.n_reps)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            runs = list(pool.map(_run_multi, jobs))
    else:
        runs = []
        for job in jobs:
            runs.append(_run_multi(job))
            if progress:
                progress(len(runs), len(jobs))
    return {name: score([r[name] for r in runs]) for name in ("group", "ind", "oracle")}, runs


def qq_max_deviation(table, lo=0.1, hi=0.9):
    """Largest ``|simulated - observed|`` over plotting positions in ``[lo, hi]``,
    and the observed interquartile range.

    Draws beyond the outermost fitted levels all snap to them, so the tails
    outside the fitted range are left out.
    """
    table = np.asarray(table)
    keep = (table[:, 0] >= lo) & (table[:, 0] <= hi)
    dev = float(np.max(np.abs(table[keep, 1] - table[keep, 2])))
    q1, q3 = np.interp([0.25, 0.75], table[:, 0], table[:, 2])
    return dev, float(q3 - q1)
