"""Maximum empirical likelihood estimation.

For fixed ``theta`` the EL weights are ``p_i = 1 / (n (1 + nu'H_i))`` where
``nu`` minimizes the convex dual ``-sum log(1 + nu'H_i)``. Profiling ``nu``
out leaves

    l(theta) = sum_i y_i (alpha_star + beta'x_i) - sum_i log(1 + nu(theta)'H_i)
               - N/2 (mu_tilde - mu)' W^{-1} (mu_tilde - mu)

which is maximized by damped Newton ascent. The gradient uses the envelope
property of ``nu(theta)``; the Hessian comes from implicit differentiation of
the inner stationarity condition.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg, stats

from .baselines import fit_prospective_mle
from .errors import (ConstraintInfeasibleError, IdentifiabilityError,
                     InvalidInputError, NonConvergenceError)
from .model import (CaseControlSample, ConstraintSpec, ExternalSummary,
                    ThetaFull, check_weight_matrix, constraint_terms)

log = logging.getLogger(__name__)


class IdentifiabilityWarning(UserWarning):
    """Case and control means of ``h`` are statistically indistinguishable."""


class BoundaryWarning(UserWarning):
    """An estimate sits on the clamp used to keep ``gamma`` finite."""


@dataclass(frozen=True)
class SolverConfig:
    inner_tol: float = 1e-10
    outer_tol: float = 1e-8
    max_inner_iters: int = 100
    max_outer_iters: int = 500
    fd_step: float = 1e-6
    ls_shrink: float = 0.5
    ls_sufficient: float = 1e-4
    gamma_bound: float = 15.0
    check_gradient: bool = False

    def __post_init__(self):
        for name in ("inner_tol", "outer_tol", "fd_step", "gamma_bound"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive")
        if not 0 < self.ls_shrink < 1 or not 0 < self.ls_sufficient < 0.5:
            raise InvalidInputError("line search parameters out of range")
        if self.max_inner_iters < 1 or self.max_outer_iters < 1:
            raise InvalidInputError("iteration limits must be >= 1")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


DEFAULT_CONFIG = SolverConfig()


@dataclass(frozen=True)
class LagrangeState:
    nu: np.ndarray
    weights: np.ndarray
    residual: float
    iterations: int
    lam: float = 1.0


@dataclass(frozen=True)
class InitEstimates:
    mu1_hat: np.ndarray
    mu0_hat: np.ndarray
    gamma_init: float
    alpha_star_init: float
    beta_init: np.ndarray
    clamped: bool = False


@dataclass
class FitResult:
    theta_hat: ThetaFull
    nu_hat: np.ndarray
    weights: np.ndarray
    objective: float
    converged: bool
    iterations: int
    inner_iterations: int
    gradient_norm: float
    mode: str                         # "W" or "known_mu"
    mu_tilde: np.ndarray
    n_external: int | None = None
    W: np.ndarray | None = None
    hessian: np.ndarray | None = None
    trace: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def alpha_hat(self) -> float:
        return self.theta_hat.alpha

    @property
    def case_prop_hat(self) -> float:
        return self.theta_hat.case_prop


# ---------------------------------------------------------------------------
# inner problem

def _log_star(z, eps):
    """Pseudo-logarithm log*: log above ``eps``, quadratic continuation below.

    Returns value, first derivative and minus the second derivative.
    """
    val = np.empty_like(z)
    d1 = np.empty_like(z)
    d2 = np.empty_like(z)
    ok = z >= eps
    zo = z[ok]
    val[ok] = np.log(zo)
    d1[ok] = 1.0 / zo
    d2[ok] = 1.0 / (zo * zo)
    zl = z[~ok] / eps
    val[~ok] = np.log(eps) - 1.5 + 2.0 * zl - 0.5 * zl * zl
    d1[~ok] = (2.0 - zl) / eps
    d2[~ok] = 1.0 / eps ** 2
    return val, d1, d2


def _component_name(k):
    return "tilt mass (sum p_i delta_i = 1)" if k == 0 else f"mean of h component {k}"


def check_hull_signs(H):
    """Cheap necessary condition for 0 to lie inside the convex hull of rows."""
    for k in range(H.shape[1]):
        col = H[:, k]
        if np.all(col > 0) or np.all(col < 0):
            side = "above" if col[0] > 0 else "below"
            raise ConstraintInfeasibleError(
                f"constraint {k} ({_component_name(k)}) cannot be met: every "
                f"observation lies {side} zero", component=k)


def solve_dual(H, nu0=None, cfg: SolverConfig = DEFAULT_CONFIG) -> LagrangeState:
    """Solve ``sum_i H_i / (1 + nu'H_i) = 0`` for ``nu``.

    Damped Newton on ``D(nu) = -sum log*(1 + nu'H_i)`` with ``log*``
    continued quadratically below ``1/n`` so that ``D`` is convex and finite
    everywhere. Convergence is declared when every ``1 + nu'H_i >= 1/n`` and
    the weighted moment ``sum p_i H_i`` is below ``inner_tol`` in max norm;
    one further Newton step is then taken to push the residual to the
    rounding floor, since outer gradients inherit its error times ``n``.
    """
    H = np.asarray(H, dtype=float)
    if H.ndim == 1:
        H = H[:, None]
    n, m = H.shape
    if n < 2:
        raise InvalidInputError("need at least two observations")
    check_hull_signs(H)
    eps = 1.0 / n
    nu = np.zeros(m) if nu0 is None else np.array(nu0, dtype=float)

    def dual(v):
        z = 1.0 + H @ v
        val, d1, d2 = _log_star(z, eps)
        return -val.sum(), z, d1, d2

    D, z, d1, d2 = dual(nu)
    if nu0 is not None:
        D0, z0, a0, b0 = dual(np.zeros(m))
        if not np.isfinite(D) or D0 < D:
            nu, D, z, d1, d2 = np.zeros(m), D0, z0, a0, b0

    def moment(zv, d1v):
        # max-norm of sum p_i H_i; inf while any z_i is in the log* region
        if np.all(zv >= eps):
            return float(np.max(np.abs(H.T @ d1v))) / n
        return np.inf

    residual = moment(z, d1)
    polished = False
    for it in range(1, cfg.max_inner_iters + 1):
        if residual <= cfg.inner_tol and polished:
            return LagrangeState(nu, 1.0 / (n * z), residual, it - 1)
        grad = -(H.T @ d1)
        hess = (H * d2[:, None]).T @ H
        try:
            step = linalg.solve(hess, -grad, assume_a="pos")
        except (linalg.LinAlgError, ValueError):
            step = np.linalg.lstsq(hess, -grad, rcond=None)[0]
        slope = float(grad @ step)
        t = 1.0
        while True:
            cand = nu + t * step
            Dc, zc, d1c, d2c = dual(cand)
            rc = moment(zc, d1c)
            # Armijo on D, or plain residual decrease once D is at rounding level
            if Dc <= D + cfg.ls_sufficient * t * slope or rc <= 0.5 * residual:
                break
            t *= 0.5
            if t < 1e-10:
                break
        if t < 1e-10 or (residual <= cfg.inner_tol and rc >= residual):
            if residual <= cfg.inner_tol:
                return LagrangeState(nu, 1.0 / (n * z), residual, it - 1)
            raise NonConvergenceError(
                f"inner line search failed (residual {residual:.3g})", best=nu,
                residual=residual)
        polished = residual <= cfg.inner_tol
        nu, D, z, d1, d2, residual = cand, Dc, zc, d1c, d2c, rc
        if np.max(np.abs(z)) > 1e12:
            # dual unbounded below: no interior point of the hull at zero
            k = int(np.argmax(np.abs(nu)))
            raise ConstraintInfeasibleError(
                f"empirical likelihood constraints are infeasible (dual unbounded); "
                f"largest multiplier on constraint {k} ({_component_name(k)})",
                component=k)
    raise NonConvergenceError(
        f"inner solve did not converge in {cfg.max_inner_iters} iterations "
        f"(residual {residual:.3g})", best=nu, residual=residual)


# ---------------------------------------------------------------------------
# profiled objective

class ProfileProblem:
    """Profiled EL objective over the free parameters.

    ``W_inv=None`` selects the known-mean problem: ``mu`` is pinned to
    ``mu_tilde``, there is no penalty, and the free parameters are
    ``(gamma, alpha_star, beta)``.
    """

    def __init__(self, sample: CaseControlSample, spec: ConstraintSpec, mu_tilde,
                 n_external=None, W_inv=None, cfg: SolverConfig = DEFAULT_CONFIG):
        if spec.p != sample.p:
            raise InvalidInputError(f"constraint expects p={spec.p}, sample has p={sample.p}")
        self.X = sample.covariates
        self.y = sample.outcomes
        self.hX = spec.apply(self.X)
        self.mu_tilde = np.asarray(mu_tilde, dtype=float).reshape(-1)
        if self.mu_tilde.shape[0] != spec.q:
            raise InvalidInputError(
                f"mu_tilde has length {self.mu_tilde.shape[0]}, constraint has q={spec.q}")
        self.n, self.p, self.q = sample.n, sample.p, spec.q
        self.n1 = sample.n1
        self.known_mu = W_inv is None
        self.N = None if self.known_mu else float(n_external)
        self.W_inv = None if self.known_mu else np.asarray(W_inv, dtype=float)
        self.cfg = cfg
        self.d_full = 2 + self.p + self.q
        self.d = 2 + self.p if self.known_mu else self.d_full
        self.case_sum = self.X[self.y == 1].sum(axis=0)
        self.nu_init = np.zeros(1 + self.q)
        self.nu_init[0] = sample.n1 / sample.n

    def full(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return np.concatenate([v, self.mu_tilde]) if self.known_mu else v

    def clamp(self, v):
        v = np.array(v, dtype=float)
        b = self.cfg.gamma_bound
        v[0] = min(max(v[0], -b), b)
        return v

    def _linear(self, th):
        return th[1] * self.n1 + th[2:2 + self.p] @ self.case_sum

    def _penalty(self, th):
        if self.known_mu:
            return 0.0
        r = self.mu_tilde - th[2 + self.p:]
        return 0.5 * self.N * float(r @ self.W_inv @ r)

    def evaluate(self, v, nu_start=None):
        """Objective value and inner state at free parameters ``v``."""
        th = self.full(v)
        H, _, info = constraint_terms(self.X, self.hX, th)
        st = solve_dual(H, self.nu_init if nu_start is None else nu_start, self.cfg)
        z = 1.0 + H @ st.nu
        value = self._linear(th) - np.log(z).sum() - self._penalty(th)
        return float(value), st, info["saturated"]

    def derivatives(self, v, nu):
        """Gradient and Hessian of the profiled objective at ``v``.

        ``nu`` must be the inner solution at ``v``.
        """
        th = self.full(v)
        X, hX, p, q = self.X, self.hX, self.p, self.q
        H, J, info = constraint_terms(X, hX, th, jacobian=True)
        delta, s = info["delta"], info["s"]
        z = 1.0 + H @ nu
        iz = 1.0 / z
        iz2 = iz * iz
        Jnu = np.einsum("imd,m->id", J, nu)
        d = self.d_full
        grad = np.zeros(d)
        grad[1] = self.n1
        grad[2:2 + p] = self.case_sum
        grad -= Jnu.T @ iz

        # second derivatives of nu'H_i, contracted with 1/z_i
        ch = hX @ nu[1:]
        U = np.column_stack([np.ones(self.n), X])
        kab = iz * delta * (nu[0] + s * ch)
        K = np.zeros((d, d))
        K[1:2 + p, 1:2 + p] = (U * kab[:, None]).T @ U
        K[0, 0] = float(np.sum(iz * ch * (1.0 - delta))) * s * (1 - s) * (2 * s - 1)
        kg = -(iz * ch * delta) @ U * s * (1 - s)
        K[0, 1:2 + p] = kg
        K[1:2 + p, 0] = kg
        L_tt = -K + (Jnu * iz2[:, None]).T @ Jnu
        L_tn = -(np.einsum("imd,i->dm", J, iz) - (Jnu * iz2[:, None]).T @ H)
        L_nn = (H * iz2[:, None]).T @ H
        if not self.known_mu:
            r = self.mu_tilde - th[2 + p:]
            grad[2 + p:] += self.N * (self.W_inv @ r)
            L_tt[2 + p:, 2 + p:] -= self.N * self.W_inv
        # implicit differentiation of nu(theta); the same solve also removes the
        # first-order effect of the inner residual from the envelope gradient
        L_n = -(H.T @ iz)
        sol = linalg.solve(L_nn, np.column_stack([L_tn.T, L_n]), assume_a="pos")
        hess = L_tt - L_tn @ sol[:, :-1]
        grad -= L_tn @ sol[:, -1]
        hess = 0.5 * (hess + hess.T)
        if self.known_mu:
            grad = grad[:self.d]
            hess = hess[:self.d, :self.d]
        return grad, hess

    def gradient_fd(self, v, step=1e-6):
        """Central finite differences of the profiled objective."""
        v = np.asarray(v, dtype=float)
        g = np.empty_like(v)
        for j in range(v.size):
            e = np.zeros_like(v)
            e[j] = step
            g[j] = (self.evaluate(v + e)[0] - self.evaluate(v - e)[0]) / (2 * step)
        return g


def _ascent_direction(g, hess):
    A = -hess
    try:
        c = linalg.cho_factor(A)
        return linalg.cho_solve(c, g), False
    except linalg.LinAlgError:
        lam, Q = np.linalg.eigh(A)
        floor = 1e-8 * max(1.0, np.max(np.abs(lam)))
        lam = np.maximum(np.abs(lam), floor)
        return Q @ ((Q.T @ g) / lam), True


def maximize_profile(problem: ProfileProblem, v0) -> FitResult:
    """Damped Newton ascent with backtracking (Armijo) line search."""
    cfg = problem.cfg
    v = problem.clamp(v0)
    try:
        f, st, sat = problem.evaluate(v)
    except ConstraintInfeasibleError as exc:
        raise ConstraintInfeasibleError(f"starting point infeasible: {exc}",
                                        component=exc.component) from exc
    inner_total = st.iterations
    trace = [f]
    diagnostics = {"saturated": sat, "modified_newton_steps": 0}
    converged = False
    gnorm = np.inf
    for it in range(cfg.max_outer_iters + 1):
        g, hess = problem.derivatives(v, st.nu)
        # gamma on the clamp with the gradient pointing outward: freeze it
        pinned = abs(v[0]) >= cfg.gamma_bound and g[0] * v[0] > 0
        if pinned:
            g = g.copy()
            g[0] = 0.0
        gnorm = float(np.linalg.norm(g))
        if gnorm <= cfg.outer_tol:
            converged = True
            break
        if it == cfg.max_outer_iters:
            break
        if pinned:
            sub, modified = _ascent_direction(g[1:], hess[1:, 1:])
            step = np.concatenate([[0.0], sub])
        else:
            step, modified = _ascent_direction(g, hess)
        diagnostics["modified_newton_steps"] += int(modified)
        t = 1.0
        accepted = False
        if not modified and 0.5 * float(g @ step) < 1e-11 * max(1.0, abs(f)):
            # predicted gain is below the rounding level of f: judge the full
            # Newton step by the gradient norm instead of by f
            cand = problem.clamp(v + step)
            try:
                fc, stc, satc = problem.evaluate(cand, st.nu)
                inner_total += stc.iterations
                gc = problem.derivatives(cand, stc.nu)[0]
                if pinned:
                    gc[0] = 0.0
                accepted = np.linalg.norm(gc) < gnorm
            except (ConstraintInfeasibleError, NonConvergenceError):
                pass
            if not accepted:
                t = 0.0
        while 0 < t and t >= 1e-14 and not accepted:
            cand = problem.clamp(v + t * step)
            try:
                fc, stc, satc = problem.evaluate(cand, st.nu)
                inner_total += stc.iterations
            except (ConstraintInfeasibleError, NonConvergenceError):
                fc = -np.inf
            gain = max(float(g @ (cand - v)), 0.0)
            if fc >= f + cfg.ls_sufficient * gain and fc >= f:
                accepted = True
                break
            t *= cfg.ls_shrink
        if not accepted:
            # no ascent from here: precision floor of the objective
            diagnostics["line_search_stalled"] = True
            if gnorm <= 1e3 * cfg.outer_tol:
                converged = True
            break
        v, f, st, sat = cand, fc, stc, satc
        diagnostics["saturated"] |= sat
        trace.append(f)
    th = ThetaFull.from_vector(problem.full(v), problem.p, problem.q)
    if abs(th.gamma) >= cfg.gamma_bound:
        diagnostics["gamma_at_bound"] = True
        warnings.warn(f"gamma estimate sits on the clamp +/-{cfg.gamma_bound}",
                      BoundaryWarning, stacklevel=3)
    if not converged:
        raise NonConvergenceError(
            f"profile maximization stopped after {it} iterations with gradient norm "
            f"{gnorm:.3g}", best=th, residual=gnorm, trace=trace)
    if np.linalg.norm(th.beta) < 1e-4:
        warnings.warn("|beta_hat| < 1e-4: intercept is weakly identified",
                      IdentifiabilityWarning, stacklevel=3)
    if cfg.check_gradient:
        g_fd = problem.gradient_fd(v, cfg.fd_step)
        diagnostics["fd_gradient_error"] = float(np.max(np.abs(g_fd - g)))
    return FitResult(
        theta_hat=th, nu_hat=st.nu, weights=st.weights, objective=f,
        converged=converged, iterations=it, inner_iterations=inner_total,
        gradient_norm=gnorm, mode="known_mu" if problem.known_mu else "W",
        mu_tilde=problem.mu_tilde, n_external=None if problem.N is None else int(problem.N),
        W=None if problem.W_inv is None else np.linalg.inv(problem.W_inv),
        hessian=hess, trace=trace, diagnostics=diagnostics)


# ---------------------------------------------------------------------------
# public entry points

def solve_nu(theta: ThetaFull, sample: CaseControlSample, spec: ConstraintSpec,
             cfg: SolverConfig = DEFAULT_CONFIG) -> LagrangeState:
    """Inner Lagrange solve at ``theta``, started from ``(n1/n, 0, ..., 0)``."""
    if not np.all(np.isfinite(theta.to_vector())):
        raise InvalidInputError("theta must be finite")
    H, _, _ = constraint_terms(sample.covariates, spec.apply(sample.covariates), theta)
    nu0 = np.zeros(1 + spec.q)
    nu0[0] = sample.n1 / sample.n
    return solve_dual(H, nu0, cfg)


def _weight_inverse(W, q):
    W = np.atleast_2d(np.asarray(W, dtype=float))
    check_weight_matrix(W, q)
    W_inv = np.linalg.inv(W)
    return 0.5 * (W_inv + W_inv.T)


def make_problem(sample, external: ExternalSummary, spec, cfg=DEFAULT_CONFIG, W=None):
    if external.q != spec.q:
        raise InvalidInputError(f"mu_tilde has length {external.q}, constraint has q={spec.q}")
    if W is None and external.mode == "population":
        return ProfileProblem(sample, spec, external.mu_tilde, cfg=cfg)
    if W is None:
        if external.mode != "given":
            raise InvalidInputError("optimal weighting needs an explicit W for a single fit")
        W = external.weight
    return ProfileProblem(sample, spec, external.mu_tilde, external.n_external,
                          _weight_inverse(W, spec.q), cfg)


def profile_objective(theta: ThetaFull, sample, external: ExternalSummary, spec,
                      cfg: SolverConfig = DEFAULT_CONFIG, W=None):
    """``l_W(theta, nu(theta))``; returns ``(value, nu)``.

    In population mode ``mu`` is pinned to ``mu_tilde`` (the value in
    ``theta`` is ignored) and no penalty is added.
    """
    prob = make_problem(sample, external, spec, cfg, W)
    v = theta.to_vector()
    if prob.known_mu:
        v = v[:prob.d]
    value, st, _ = prob.evaluate(v)
    return value, st.nu


def init_theta(sample: CaseControlSample, external: ExternalSummary,
               spec: ConstraintSpec, cfg: SolverConfig = DEFAULT_CONFIG) -> InitEstimates:
    """Starting values from the prospective fit and the total-expectation identity.

    ``mu_tilde = t mu0 + (1 - t) mu1`` with ``t = P(Y=0)`` is solved for ``t``
    by least squares across the ``q`` components; ``gamma = logit(t)``.
    """
    hX = spec.apply(sample.covariates)
    mu1 = hX[sample.outcomes == 1].mean(axis=0)
    mu0 = hX[sample.outcomes == 0].mean(axis=0)
    diff = mu0 - mu1
    scale = 1.0 + np.linalg.norm(mu1) + np.linalg.norm(mu0)
    if np.linalg.norm(diff) <= 1e-10 * scale:
        raise IdentifiabilityError(
            "case and control means of h coincide; the total expectation identity "
            "cannot determine gamma")
    _warn_if_indistinct(hX, sample.outcomes, mu1, mu0)
    mle = fit_prospective_mle(sample)
    t = float(diff @ (external.mu_tilde - mu1) / (diff @ diff))
    b = cfg.gamma_bound
    clamped = False
    if t <= 0.0 or t >= 1.0:
        gamma = -b if t <= 0.0 else b
        clamped = True
    else:
        gamma = float(np.log(t) - np.log1p(-t))
        if abs(gamma) > b:
            gamma, clamped = float(np.clip(gamma, -b, b)), True
    if clamped:
        warnings.warn(f"initial gamma clamped to {gamma:+.0f}; mu_tilde lies at or "
                      "beyond the case or control mean", BoundaryWarning, stacklevel=2)
    return InitEstimates(mu1, mu0, gamma, mle.alpha_hat - np.log(sample.rho),
                         mle.beta_hat, clamped)


def _warn_if_indistinct(hX, y, mu1, mu0, level=0.05):
    # two-sample Hotelling statistic for mu1 == mu0
    h1, h0 = hX[y == 1], hX[y == 0]
    n1, n0 = len(h1), len(h0)
    if n1 < 2 or n0 < 2:
        return
    S = np.atleast_2d(np.cov(h1, rowvar=False)) / n1 + np.atleast_2d(np.cov(h0, rowvar=False)) / n0
    d = mu1 - mu0
    try:
        t2 = float(d @ np.linalg.solve(S, d))
    except np.linalg.LinAlgError:
        return
    if t2 < stats.chi2.ppf(1 - level, df=len(d)):
        warnings.warn(
            f"case and control means of h are not significantly different "
            f"(Hotelling T2 = {t2:.2f}); the intercept is poorly identified",
            IdentifiabilityWarning, stacklevel=3)


def _start_vector(sample, external, spec, cfg, start, known_mu):
    if start is not None:
        v = start.to_vector() if isinstance(start, ThetaFull) else np.asarray(start, float)
    else:
        ini = init_theta(sample, external, spec, cfg)
        v = np.concatenate([[ini.gamma_init, ini.alpha_star_init], ini.beta_init,
                            external.mu_tilde])
    return v[:2 + sample.p] if known_mu else v


def fit_mele(sample: CaseControlSample, external: ExternalSummary, spec: ConstraintSpec,
             cfg: SolverConfig = DEFAULT_CONFIG, W=None, start=None) -> FitResult:
    """Maximum EL estimate with external summary ``mu_tilde``.

    ``W`` overrides the weight in ``external``. Optimal mode delegates to the
    iterated reweighting in :func:`ccel.inference.algorithm1`; population mode
    to :func:`fit_known_mu`.
    """
    if W is None and external.mode == "optimal":
        from .inference import algorithm1
        return algorithm1(sample, external, spec, cfg)[0]
    if W is None and external.mode == "population":
        return fit_known_mu(sample, external.mu_tilde, spec, cfg, start=start)
    prob = make_problem(sample, external, spec, cfg, W)
    v0 = _start_vector(sample, external, spec, cfg, start, known_mu=False)
    return maximize_profile(prob, v0)


def fit_known_mu(sample: CaseControlSample, mu_tilde, spec: ConstraintSpec,
                 cfg: SolverConfig = DEFAULT_CONFIG, start=None) -> FitResult:
    """Estimate treating ``mu_tilde`` as the exact population mean of ``h``."""
    external = ExternalSummary(mu_tilde, None, "population")
    if external.q != spec.q:
        raise InvalidInputError(f"mu_tilde has length {external.q}, constraint has q={spec.q}")
    prob = ProfileProblem(sample, spec, external.mu_tilde, cfg=cfg)
    v0 = _start_vector(sample, external, spec, cfg, start, known_mu=True)
    return maximize_profile(prob, v0)


def with_tolerances(cfg: SolverConfig, **kw) -> SolverConfig:
    return replace(cfg, **kw)
