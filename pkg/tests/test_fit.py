import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plaqr.fit import (ModelSpec, RankDeficiencyError, fit_oracle, fit_penalized, kkt_check,
                       lla_step_objective_check, penalized_objective)
from plaqr.penalties import LASSO, MCP, SCAD, PenaltySpec
from plaqr.splines import make_basis
from plaqr.tuning import fit_path, lambda_max


def small_spec(seed, n=30, p=3, d=1, family=SCAD, lam=0.1, tau=0.5):
    r = np.random.default_rng(seed)
    X = r.normal(size=(n, p))
    Z = r.uniform(size=(n, d))
    y = X @ np.r_[1.5, -1.0, np.zeros(p - 2)] + np.sin(2 * np.pi * Z[:, 0]) + r.standard_t(3, size=n)
    return ModelSpec(y, X, Z, tau, [make_basis(3, 1)] * d, PenaltySpec(family, lam))


def test_intercept_only_oracle_is_sample_quantile():
    y = np.array([3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0])
    fit = fit_oracle(ModelSpec(y, np.zeros((7, 0)), tau=0.5))
    assert fit.g.intercept == 3.0 and fit.beta.size == 0


def test_noiseless_linear_oracle():
    x = np.linspace(-1, 1, 9)
    fit = fit_oracle(ModelSpec(2 * x, x[:, None]), [0])
    assert fit.beta[0] == pytest.approx(2.0) and fit.objective == pytest.approx(0.0, abs=1e-14)


def test_oracle_rank_precondition():
    spec = small_spec(0, n=8, p=6)
    with pytest.raises(RankDeficiencyError):
        fit_oracle(spec)


def test_oracle_kkt_on_own_columns():
    spec = small_spec(1, n=60, p=5)
    fit = fit_oracle(spec, [0, 1])
    rep = kkt_check(spec, fit, lam=0.0)
    assert rep["beta_ok"][[0, 1]].all() and rep["spline_ok"].all()


def test_huge_lambda_gives_null_model():
    spec = small_spec(2)
    fit = fit_penalized(spec, 10 * lambda_max(spec))
    assert fit.active_set.size == 0
    # spline part matches the nonparametric-only fit
    null = fit_oracle(spec, [])
    assert fit.check_loss_total == pytest.approx(null.check_loss_total, rel=1e-12)


@pytest.mark.parametrize("family", [SCAD, MCP, LASSO])
def test_zero_lambda_matches_full_oracle(family):
    for seed in range(5):
        spec = small_spec(seed, family=family)
        pen = fit_penalized(spec, 0.0)
        orc = fit_oracle(spec)
        assert abs(pen.objective - orc.objective) < 1e-8


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1), st.sampled_from([SCAD, MCP, LASSO]))
def test_augmentation_matches_majorized_objective(seed, family):
    r = np.random.default_rng(seed)
    spec = small_spec(seed, family=family, lam=float(r.uniform(0.01, 1.0)))
    prev = r.normal(size=spec.p) * (r.random(spec.p) < 0.7)
    beta, xi = r.normal(size=spec.p), r.normal(size=spec.design.L_n)
    direct, aug = lla_step_objective_check(spec, prev, beta, xi)
    assert abs(direct - aug) <= 1e-9 * max(1.0, abs(direct))


def test_augmentation_trivial_cases():
    spec = small_spec(3, family=LASSO, lam=0.3)
    xi = np.random.default_rng(3).normal(size=spec.design.L_n)
    direct, aug = lla_step_objective_check(spec, np.zeros(3), np.zeros(3), xi)
    null = penalized_objective(spec, np.zeros(3), xi)
    assert direct == pytest.approx(null) and aug == pytest.approx(null)
    beta = np.array([0.5, -1.0, 2.0])
    direct, aug = lla_step_objective_check(spec, beta, beta, xi)
    assert aug == pytest.approx(penalized_objective(spec, beta, xi), abs=1e-12)


@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1), st.sampled_from([SCAD, MCP]), st.floats(0.02, 0.6))
def test_lla_objective_non_increasing(seed, family, lam):
    spec = small_spec(seed, n=50, p=8, family=family)
    fit = fit_penalized(spec, lam)
    h = np.array(fit.objective_history)
    assert np.all(np.diff(h) <= 1e-9)
    # starting from zero, the first iterate already beats the null point
    assert h[0] <= penalized_objective(spec, np.zeros(spec.p), fit_oracle(spec, []).xi) + 1e-9


@given(st.integers(0, 2**32 - 1))
def test_residual_identity_and_active_set(seed):
    spec = small_spec(seed, n=40, p=6)
    fit = fit_penalized(spec, 0.05)
    assert np.array_equal(fit.residuals, spec.y - spec.X @ fit.beta - spec.design.matrix @ fit.xi)
    assert np.array_equal(fit.active_set, np.flatnonzero(np.abs(fit.beta) > 0))


def test_converged_fit_passes_kkt():
    spec = small_spec(4, n=120, p=10)
    fit = fit_penalized(spec, 0.05)
    assert fit.converged
    rep = fit.kkt_report
    assert rep["ok"], rep["violations"]
    inactive = np.flatnonzero(fit.beta == 0)
    assert np.all(rep["inactive_ratio"][inactive] <= 1 + 1e-6)


def test_lasso_path_active_set_shrinks_with_lambda():
    r = np.random.default_rng(5)
    n, p = 200, 12
    X = r.normal(size=(n, p))
    y = X[:, :4] @ [2.0, -1.5, 1.0, 0.5] + r.normal(size=n)
    spec = ModelSpec(y, X, r.uniform(size=(n, 1)), 0.5, [make_basis(4, 0)],
                     PenaltySpec(LASSO, 0.0))
    lams = np.geomspace(lambda_max(spec), 1e-3, 25)
    sizes = [fit_penalized(spec, lam, check_kkt=False).active_set.size for lam in lams]
    assert sizes[0] == 0 and sizes[-1] == p
    assert np.all(np.diff(sizes) >= 0)


def test_oracle_recovery_with_qbic():
    # at p=20 the log(p) term is weak; see the ledger for the refit analysis
    hits = 0
    for rep in range(50):
        r = np.random.default_rng(1000 + rep)
        n, p = 400, 20
        X = r.normal(size=(n, p))
        beta = np.zeros(p)
        beta[[2, 7, 11, 16]] = r.choice([-1, 1], 4) * r.uniform(1.0, 1.5, 4)
        Z = r.uniform(size=(n, 1))
        y = X @ beta + np.sin(2 * np.pi * Z[:, 0]) + r.normal(size=n)
        spec = ModelSpec(y, X, Z, 0.5, [make_basis(4, 2)], PenaltySpec(SCAD))
        path = fit_path(spec, n_lambda=30)
        hits += np.array_equal(path.selected.active_set, np.flatnonzero(beta))
    assert hits >= 45, f"exact recovery in {hits} of 50"


def test_lla_step_solves_the_weighted_problem():
    spec = small_spec(6, n=40, p=4, lam=0.2)
    fit = fit_penalized(spec, 0.2, max_lla_iters=1, check_kkt=False)
    # a single step from zero is the LASSO problem with weight lambda
    lasso = fit_penalized(spec.replace(penalty=PenaltySpec(LASSO, 0.2)), 0.2, check_kkt=False)
    assert np.allclose(fit.beta, lasso.beta, atol=1e-10)
