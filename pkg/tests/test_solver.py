import warnings

import numpy as np
import pytest

from conftest import tiny_instance
from ccel.errors import (ConstraintInfeasibleError, IdentifiabilityError, InvalidInputError,
                         NonConvergenceError)
from ccel.model import CaseControlSample, ConstraintSpec, ExternalSummary, ThetaFull, constraint_terms
from ccel.simulation import case_control_draw
from ccel.solver import (BoundaryWarning, SolverConfig, fit_known_mu, fit_mele, init_theta,
                         make_problem, profile_objective, solve_dual, solve_nu)


def quiet(fn, *args, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fn(*args, **kw)


@pytest.fixture(scope="module")
def moderate():
    rng = np.random.default_rng(11)
    sample, _ = case_control_draw(-1.0, [1.0, -0.5], 200, 200, rng)
    mu = rng.standard_normal((400, 2)).mean(axis=0)
    return sample, ExternalSummary(mu, 400, np.eye(2)), ConstraintSpec.identity(2)


def check_constraints(fit, sample, spec, tol=1e-8):
    H, _, info = constraint_terms(sample.covariates, spec.apply(sample.covariates), fit.theta_hat)
    p = fit.weights
    assert np.all(p > 0) and p.max() < 1
    assert abs(p.sum() - 1) <= tol
    assert abs(p @ info["delta"] - 1) <= tol
    assert np.max(np.abs((p * info["w"]) @ spec.apply(sample.covariates) - fit.theta_hat.mu)) <= tol
    n = sample.n
    assert np.allclose(p, 1.0 / (n * (1 + H @ fit.nu_hat)), rtol=1e-12)


# configuration ------------------------------------------------------------------

@pytest.mark.parametrize("kw", [{"inner_tol": 0}, {"outer_tol": -1}, {"fd_step": 0},
                                {"ls_shrink": 1.0}, {"max_inner_iters": 0}])
def test_config_rejects_bad_values(kw):
    with pytest.raises(InvalidInputError):
        SolverConfig(**kw)


# inner problem ---------------------------------------------------------------

def test_two_point_dual():
    st = solve_dual(np.array([1.0, -0.5]))
    assert abs(st.nu[0] - 0.5) <= 1e-12
    assert np.allclose(st.weights, [1 / 3, 2 / 3], atol=1e-12)
    assert abs(st.weights @ np.array([1.0, -0.5])) <= 1e-12
    assert st.lam == 1.0


def test_balanced_moments_give_zero_multiplier():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((40, 1))
    y = np.r_[np.ones(20), np.zeros(20)]
    sample = CaseControlSample(y, X)
    spec = ConstraintSpec.identity(1)
    beta = np.array([0.6])
    a_star = -np.log(np.mean(np.exp(X @ beta)))
    gamma = 0.3
    s = 1 / (1 + np.exp(gamma))
    w = s * np.exp(a_star + X @ beta) + 1 - s
    mu = np.array([np.mean(w * X[:, 0])])
    th = ThetaFull(gamma, a_star, beta, mu)
    st = solve_nu(th, sample, spec)
    assert np.max(np.abs(st.nu)) <= 1e-10
    assert np.allclose(st.weights, 1 / 40, rtol=1e-10)
    ext = ExternalSummary(mu + 0.2, 50, np.eye(1) * 2.0)
    value, _ = profile_objective(th, sample, ext, spec)
    lin = np.sum(y * (a_star + X @ beta))
    assert abs(value - (lin - 0.5 * 50 * 0.2 ** 2 / 2.0)) <= 1e-9


def test_infeasible_constraints_are_named(moderate):
    sample, _, spec = moderate
    th = ThetaFull(0.0, 40.0, [0.0, 0.0], [0.0, 0.0])
    with pytest.raises(ConstraintInfeasibleError) as err:
        solve_nu(th, sample, spec)
    assert "constraint" in str(err.value)


def test_solve_nu_rejects_non_finite(moderate):
    sample, _, spec = moderate
    with pytest.raises(InvalidInputError):
        solve_nu(ThetaFull(np.nan, 0.0, [0.0, 0.0], [0.0, 0.0]), sample, spec)


# profiled objective ------------------------------------------------------------

def test_penalty_vanishes_at_mu_tilde(moderate):
    sample, ext, spec = moderate
    th = ThetaFull(1.0, -0.2, [0.8, -0.4], ext.mu_tilde)
    v1, _ = profile_objective(th, sample, ext, spec, W=np.eye(2))
    v2, _ = profile_objective(th, sample, ext, spec, W=np.diag([0.2, 2.0]))
    assert v1 == v2


def test_objective_reconstructed_from_weights():
    rng = np.random.default_rng(5)
    sample, _ = case_control_draw(0.0, [1.0], 10, 10, rng)
    spec = ConstraintSpec.identity(1)
    ext = ExternalSummary([0.05], 20, np.eye(1))
    th = ThetaFull(0.2, 0.1, [0.9], [0.02])
    value, nu = profile_objective(th, sample, ext, spec)
    st = solve_nu(th, sample, spec)
    X, y = sample.covariates, sample.outcomes
    # log(1 + nu'H_i) = -log(n p_i)
    recon = (np.sum(y * (th.alpha_star + X @ th.beta)) + np.sum(np.log(20 * st.weights))
             - 0.5 * 20 * (0.05 - 0.02) ** 2)
    assert abs(value - recon) <= 1e-10
    assert np.allclose(nu, st.nu)


def test_known_mean_mode_ignores_theta_mu(moderate):
    sample, ext, spec = moderate
    pop = ExternalSummary(ext.mu_tilde, None, "population")
    a = profile_objective(ThetaFull(1.0, -0.2, [0.8, -0.4], [5.0, 5.0]), sample, pop, spec)[0]
    b = profile_objective(ThetaFull(1.0, -0.2, [0.8, -0.4], ext.mu_tilde), sample, pop, spec)[0]
    assert a == b


# starting values ---------------------------------------------------------------

def _two_group_sample():
    y = [1, 1, 0, 0]
    X = [[0.5], [1.5], [-0.5], [0.5]]
    return CaseControlSample(y, X), ConstraintSpec.identity(1)


@pytest.mark.filterwarnings("ignore::ccel.solver.IdentifiabilityWarning")
def test_init_gamma_from_total_expectation():
    sample, spec = _two_group_sample()
    ini = init_theta(sample, ExternalSummary([0.25], 10, np.eye(1)), spec)
    assert np.allclose(ini.mu1_hat, [1.0]) and np.allclose(ini.mu0_hat, [0.0])
    assert abs(ini.gamma_init - np.log(3)) <= 1e-12
    assert not ini.clamped


@pytest.mark.filterwarnings("ignore::ccel.solver.IdentifiabilityWarning")
def test_init_gamma_clamped_at_case_mean():
    sample, spec = _two_group_sample()
    with pytest.warns(BoundaryWarning):
        ini = init_theta(sample, ExternalSummary([1.0], 10, np.eye(1)), spec)
    assert ini.gamma_init == -15.0 and ini.clamped


def test_init_rejects_equal_group_means():
    sample = CaseControlSample([1, 1, 0, 0], [[1.0], [-1.0], [2.0], [-2.0]])
    with pytest.raises(IdentifiabilityError):
        init_theta(sample, ExternalSummary([0.0], 10, np.eye(1)), ConstraintSpec.identity(1))


# outer fit ---------------------------------------------------------------------

def test_fit_contract(moderate):
    sample, ext, spec = moderate
    fit = fit_mele(sample, ext, spec)
    assert fit.converged and fit.gradient_norm <= SolverConfig().outer_tol
    check_constraints(fit, sample, spec)
    assert np.all(np.diff(fit.trace) >= 0)
    assert fit.alpha_hat == fit.theta_hat.alpha_star - fit.theta_hat.gamma
    assert abs(fit.case_prop_hat - 1 / (1 + np.exp(fit.theta_hat.gamma))) < 1e-15
    st = solve_nu(fit.theta_hat, sample, spec)
    assert np.allclose(st.nu, fit.nu_hat, atol=1e-9)


def test_profile_gradient_matches_differences(moderate):
    sample, ext, spec = moderate
    fit = fit_mele(sample, ext, spec)
    prob = make_problem(sample, ext, spec)
    rng = np.random.default_rng(6)
    for _ in range(20):
        v = fit.theta_hat.to_vector() + rng.normal(0, 0.05, 6)
        _, st, _ = prob.evaluate(v)
        g, _ = prob.derivatives(v, st.nu)
        fd = prob.gradient_fd(v, 1e-5)
        assert np.max(np.abs(g - fd)) / max(1.0, np.max(np.abs(fd))) <= 1e-4


def test_debug_gradient_check_recorded(moderate):
    sample, ext, spec = moderate
    fit = fit_mele(sample, ext, spec, cfg=SolverConfig(check_gradient=True))
    assert fit.diagnostics["fd_gradient_error"] < 1e-4


def test_replication_invariance(moderate):
    sample, ext, spec = moderate
    twice = sample.replicate(2)
    a = fit_known_mu(sample, ext.mu_tilde, spec)
    b = fit_known_mu(twice, ext.mu_tilde, spec)
    assert np.max(np.abs(a.theta_hat.to_vector() - b.theta_hat.to_vector())) <= 1e-6
    assert np.allclose(np.repeat(a.weights, 2) / 2, b.weights, atol=1e-10)
    # the penalized fit needs N doubled with n to keep the same objective shape
    c = fit_mele(sample, ext, spec)
    d = fit_mele(twice, ExternalSummary(ext.mu_tilde, 2 * ext.n_external, np.eye(2)), spec)
    assert np.max(np.abs(c.theta_hat.to_vector() - d.theta_hat.to_vector())) <= 1e-6


def test_affine_equivariance(moderate):
    sample, ext, spec = moderate
    shift = np.array([0.7, -1.3])
    moved = CaseControlSample(sample.outcomes, sample.covariates + shift)
    ext2 = ExternalSummary(ext.mu_tilde + shift, ext.n_external, np.eye(2))
    a = fit_mele(sample, ext, spec).theta_hat
    b = fit_mele(moved, ext2, spec).theta_hat
    assert np.allclose(a.beta, b.beta, atol=1e-6)
    assert abs(b.alpha_star - (a.alpha_star - a.beta @ shift)) <= 1e-6
    assert abs(a.gamma - b.gamma) <= 1e-6
    assert np.allclose(b.mu, a.mu + shift, atol=1e-6)


def test_known_mean_self_consistency(moderate):
    sample, _, spec = moderate
    h = spec.apply(sample.covariates)
    mu1 = h[sample.outcomes == 1].mean(axis=0)
    mu0 = h[sample.outcomes == 0].mean(axis=0)
    t = 0.8
    mu = t * mu0 + (1 - t) * mu1
    ini = init_theta(sample, ExternalSummary(mu, None, "population"), spec)
    fit = fit_known_mu(sample, mu, spec)
    assert abs(fit.theta_hat.gamma - ini.gamma_init) <= 1e-6
    assert abs(ini.gamma_init - np.log(t / (1 - t))) <= 1e-12
    assert np.allclose(fit.theta_hat.beta, ini.beta_init, atol=1e-6)
    check_constraints(fit, sample, spec)


def test_boundary_estimate_converges_with_warning():
    sample, ext, spec = tiny_instance(0)     # mu_tilde lies below the control mean
    with pytest.warns(BoundaryWarning):
        fit = fit_mele(sample, ext, spec, W=np.eye(1))
    assert fit.converged and fit.theta_hat.gamma == 15.0
    assert fit.diagnostics["gamma_at_bound"]
    check_constraints(fit, sample, spec)


def test_non_convergence_reports_best_iterate(moderate):
    sample, ext, spec = moderate
    with pytest.raises(NonConvergenceError) as err:
        fit_mele(sample, ext, spec, cfg=SolverConfig(max_outer_iters=1))
    assert isinstance(err.value.best, ThetaFull)
    assert err.value.residual > 0


def test_mismatched_dimensions(moderate):
    sample, ext, _ = moderate
    with pytest.raises(InvalidInputError):
        fit_mele(sample, ext, ConstraintSpec.subset(2, [0]))
    with pytest.raises(InvalidInputError):
        fit_known_mu(sample, [0.0], ConstraintSpec.identity(2))


def test_optimal_mode_delegates_to_reweighting(moderate):
    sample, ext, spec = moderate
    fit = quiet(fit_mele, sample, ext.with_weight("optimal"), spec)
    assert fit.diagnostics["optimal_weight"]
    pop = fit_mele(sample, ext.with_weight("population"), spec)
    assert pop.mode == "known_mu"
