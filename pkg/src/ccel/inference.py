"""Plug-in asymptotic covariance and the iterated optimal-weight fit.

Block notation follows the parameter layout ``(gamma, alpha_star, beta, mu)``
for rows and ``(alpha_star, beta, mu, nu)`` for the columns of ``U`` and
``M``. Every expectation under the control density is replaced by the mean
over control rows, evaluated at the fitted parameters.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import (DiagnosticsError, InvalidInputError, NonConvergenceError,
                     SingularBlockError)
from .model import (CaseControlSample, ConstraintSpec, ExternalSummary,
                    ThetaFull, constraint_terms)
from .solver import DEFAULT_CONFIG, FitResult, SolverConfig, fit_mele

MAX_CONDITION = 1e12


def _inv_sym(A, name):
    """Inverse of a symmetric matrix with a condition-number guard."""
    A = 0.5 * (A + A.T)
    lam, Q = np.linalg.eigh(A)
    amax = np.max(np.abs(lam))
    amin = np.min(np.abs(lam))
    cond = np.inf if amin == 0 else amax / amin
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularBlockError(f"block {name} is singular or ill-conditioned "
                                 f"(condition number {cond:.3g})", block=name, condition=cond)
    inv = (Q / lam) @ Q.T
    return 0.5 * (inv + inv.T)


def estimate_vhat(fit: FitResult, sample: CaseControlSample, spec: ConstraintSpec,
                  mu_tilde) -> np.ndarray:
    """Estimate of the covariance ``V`` of ``sqrt(N)(mu_tilde - mu)``.

    ``V_hat = sum_i w_i p_i (h(x_i) - mu_tilde)(h(x_i) - mu_tilde)'`` with the
    mixture weight ``w_i = (delta_i + e^gamma)/(1 + e^gamma)`` and the fitted
    EL weights ``p_i``: the population second moment of ``h`` about
    ``mu_tilde``, reconstructed from the case-control sample.
    """
    if not fit.converged:
        raise InvalidInputError("V_hat needs a converged fit")
    mu_tilde = np.asarray(mu_tilde, dtype=float).reshape(-1)
    hX = spec.apply(sample.covariates)
    _, _, info = constraint_terms(sample.covariates, hX, fit.theta_hat)
    R = hX - mu_tilde
    V = (R * (info["w"] * fit.weights)[:, None]).T @ R
    V = 0.5 * (V + V.T)
    lam = np.linalg.eigvalsh(V)
    if lam.min() < -1e-10:
        raise DiagnosticsError(f"V_hat is not positive semi-definite (min eigenvalue {lam.min():.3g})")
    return V


@dataclass
class AsymptoticBlocks:
    A: dict
    U: np.ndarray
    M: np.ndarray
    J: np.ndarray
    c: np.ndarray
    D: np.ndarray
    rho: float
    n: int
    internal: bool
    p: int
    q: int
    n_external: int | None = None
    W: np.ndarray | None = None
    V: np.ndarray | None = None
    asymmetry: float = 0.0
    correction: str = "exact"

    @property
    def d(self) -> int:
        return self.J.shape[0]


def _control_blocks(theta, X0, h0, rho):
    H, J, info = constraint_terms(X0, h0, theta, jacobian=True)
    p = X0.shape[1]
    delta = info["delta"]
    Delta = 1.0 + rho * delta
    r = rho / (1.0 + rho)
    dD = delta / Delta
    A = {}
    A["15"] = J[:, :, 0].mean(axis=0)
    A["22"] = np.array([[r * dD.mean()]])
    A["23"] = (r * (dD[:, None] * X0).mean(axis=0))[None, :]
    A["H_Delta"] = (H / Delta[:, None]).mean(axis=0)
    A["25"] = J[:, :, 1].mean(axis=0) + A["H_Delta"]
    A["33"] = r * (X0 * dD[:, None]).T @ X0 / len(X0)
    A["35"] = (J[:, :, 2:2 + p].mean(axis=0).T
               - rho * (X0 * dD[:, None]).T @ H / len(X0))
    A["45"] = J[:, :, 2 + p:].mean(axis=0).T
    A["55"] = (1.0 + rho) * (H / Delta[:, None]).T @ H / len(X0)
    return A


def assemble_blocks(fit: FitResult, sample: CaseControlSample, spec: ConstraintSpec,
                    n_external=None, W=None, vhat=None, correction="exact") -> AsymptoticBlocks:
    """Plug-in blocks ``A_ij``, ``U``, ``M``, ``J = U M^-1 U'``, ``c``, ``D``.

    For a known-mean fit (``fit.mode == "known_mu"``) the reduced blocks for
    ``(gamma, alpha_star, beta)`` are built and ``n_external``/``W`` are
    ignored. Otherwise ``W`` defaults to the weight used by the fit and
    ``vhat`` (needed for ``D``) to :func:`estimate_vhat`.

    ``c`` is the scaled difference between the mean case and mean control
    contributions to the estimating equations; it drives the correction for
    fixed case and control counts. With ``correction="exact"`` its
    multiplier block is the control mean of ``H/Delta``. ``correction="block_sum"``
    uses ``A52 + A51`` instead, which adds ``E0[dH/d alpha_star + dH/d gamma]``
    to that block; under that choice ``U M^-1 c = J e`` and the optimal-weight
    covariance reduces to ``J^-1 - k e e'``, which can have negative variances
    when ``rho`` is near one (see :func:`sigma_hat`).
    """
    if correction not in ("exact", "block_sum"):
        raise InvalidInputError("correction must be 'exact' or 'block_sum'")
    if not fit.converged:
        raise InvalidInputError("covariance blocks need a converged fit")
    p, q = sample.p, spec.q
    rho = sample.rho
    X0 = sample.controls
    theta = fit.theta_hat
    A = _control_blocks(theta, X0, spec.apply(X0), rho)
    internal = fit.mode == "known_mu"
    one = 1 + q                       # constraint count
    if internal:
        cols = 1 + p + one
        d = 2 + p
    else:
        N = fit.n_external if n_external is None else n_external
        W = fit.W if W is None else np.atleast_2d(np.asarray(W, dtype=float))
        if N is None or W is None:
            raise InvalidInputError("W-mode blocks need n_external and W")
        W_inv = _inv_sym(W, "W")
        A["44"] = (N / sample.n) * W_inv
        cols = 1 + p + q + one
        d = 2 + p + q
    nu0 = cols - one                  # first nu column
    U = np.zeros((d, cols))
    U[0, nu0:] = A["15"]
    U[1, 0] = A["22"][0, 0]
    U[1, 1:1 + p] = A["23"][0]
    U[1, nu0:] = A["25"]
    U[2:2 + p, 0] = A["23"][0]
    U[2:2 + p, 1:1 + p] = A["33"]
    U[2:2 + p, nu0:] = A["35"]
    M = np.zeros((cols, cols))
    M[0, 0] = A["22"][0, 0]
    M[0, 1:1 + p] = A["23"][0]
    M[1:1 + p, 0] = A["23"][0]
    M[1:1 + p, 1:1 + p] = A["33"]
    M[nu0:, nu0:] = A["55"]
    c = np.zeros(cols)
    c[0] = A["22"][0, 0]
    c[1:1 + p] = A["23"][0]
    c[nu0:] = A["25"] + A["15"] if correction == "block_sum" else A["H_Delta"]
    D = np.zeros((cols, cols))
    V = None
    if not internal:
        U[2 + p:, 1 + p:1 + p + q] = A["44"]
        U[2 + p:, nu0:] = A["45"]
        M[1 + p:1 + p + q, 1 + p:1 + p + q] = A["44"]
        V = estimate_vhat(fit, sample, spec, fit.mu_tilde) if vhat is None else np.asarray(vhat)
        D[1 + p:1 + p + q, 1 + p:1 + p + q] = (N / sample.n) * (W_inv @ V @ W_inv - W_inv)
    M_inv = _m_inverse(M, p, q, internal)
    J = U @ M_inv @ U.T
    asym = float(np.max(np.abs(J - J.T)))
    if asym > 1e-10 * max(1.0, float(np.max(np.abs(J)))):
        raise DiagnosticsError(f"J is asymmetric before symmetrization ({asym:.3g})")
    J = 0.5 * (J + J.T)
    return AsymptoticBlocks(A=A, U=U, M=M, J=J, c=c, D=D, rho=rho, n=sample.n,
                            internal=internal, p=p, q=q,
                            n_external=None if internal else int(N),
                            W=None if internal else W, V=V, asymmetry=asym,
                            correction=correction)


def _m_inverse(M, p, q, internal):
    ab = slice(0, 1 + p)
    out = np.zeros_like(M)
    out[ab, ab] = _inv_sym(M[ab, ab], "M[alpha_star, beta]")
    if not internal:
        mu = slice(1 + p, 1 + p + q)
        out[mu, mu] = _inv_sym(M[mu, mu], "A44")
        nu = slice(1 + p + q, None)
    else:
        nu = slice(1 + p, None)
    out[nu, nu] = _inv_sym(M[nu, nu], "A55")
    return out


@dataclass
class CovarianceEstimate:
    """Asymptotic covariance of ``sqrt(n)(theta_hat - theta)`` and derived SEs."""

    sigma: np.ndarray
    n: int
    form: str
    labels: list
    case_prop: float
    se_theta: np.ndarray = field(init=False)
    se_alpha: float = field(init=False)
    se_case_prop: float = field(init=False)

    def __post_init__(self):
        diag = np.diag(self.sigma)
        self.se_theta = np.sqrt(np.maximum(diag, 0.0) / self.n)
        var_alpha = (self.sigma[0, 0] + self.sigma[1, 1] - 2 * self.sigma[0, 1]) / self.n
        self.se_alpha = float(np.sqrt(max(var_alpha, 0.0)))
        pi = self.case_prop
        self.se_case_prop = float(pi * (1.0 - pi) * self.se_theta[0])

    def se(self, name) -> float:
        if name == "alpha":
            return self.se_alpha
        if name == "case_prop":
            return self.se_case_prop
        return float(self.se_theta[self.labels.index(name)])


FORMS = ("general_W", "optimal_V", "internal_I")


def sigma_hat(blocks: AsymptoticBlocks, form: str = "general_W", rho=None,
              case_prop=0.5) -> CovarianceEstimate:
    """Assemble the asymptotic covariance from plug-in blocks.

    ``general_W``: ``(J^-1 U M^-1)(M + D - k c c')(M^-1 U' J^-1)``;
    ``optimal_V`` and ``internal_I``: ``J^-1 - k g g'`` with
    ``g = J^-1 U M^-1 c``, the general form once ``D`` vanishes. Here
    ``k = (1 + rho)^2 / rho``. For blocks built with ``correction="block_sum"``,
    ``g`` is identically ``e`` (ones in the gamma and alpha_star slots) and
    ``e`` is used directly.
    """
    if form not in FORMS:
        raise InvalidInputError(f"form must be one of {FORMS}")
    if (form == "internal_I") != blocks.internal:
        raise InvalidInputError(f"form {form!r} does not match the assembled blocks")
    rho = blocks.rho if rho is None else rho
    k = (1.0 + rho) ** 2 / rho
    J_inv = _inv_sym(blocks.J, "J")
    if form == "general_W":
        M_inv = _m_inverse(blocks.M, blocks.p, blocks.q, blocks.internal)
        B = J_inv @ blocks.U @ M_inv
        middle = blocks.M + blocks.D - k * np.outer(blocks.c, blocks.c)
        sigma = B @ middle @ B.T
    elif blocks.correction == "block_sum":
        e = np.zeros(blocks.d)
        e[:2] = 1.0
        sigma = J_inv - k * np.outer(e, e)
    else:
        M_inv = _m_inverse(blocks.M, blocks.p, blocks.q, blocks.internal)
        g = J_inv @ blocks.U @ M_inv @ blocks.c
        sigma = J_inv - k * np.outer(g, g)
    sigma = 0.5 * (sigma + sigma.T)
    diag = np.diag(sigma)
    if diag.min() < -1e-10:
        raise DiagnosticsError(f"negative asymptotic variance {diag.min():.3g} ({form})")
    labels = ["gamma", "alpha_star"] + [f"beta{j + 1}" for j in range(blocks.p)]
    if not blocks.internal:
        labels += [f"mu{k + 1}" for k in range(blocks.q)]
    return CovarianceEstimate(sigma, blocks.n, form, labels, case_prop)


def covariance(fit: FitResult, sample, spec, form=None, vhat=None,
               correction="exact") -> CovarianceEstimate:
    """Covariance for a fit with the form matching how it was produced."""
    if form is None:
        form = "internal_I" if fit.mode == "known_mu" else (
            "optimal_V" if fit.diagnostics.get("optimal_weight") else "general_W")
    blocks = assemble_blocks(fit, sample, spec, vhat=vhat, correction=correction)
    return sigma_hat(blocks, form, case_prop=fit.case_prop_hat)


def algorithm1(sample: CaseControlSample, external: ExternalSummary, spec: ConstraintSpec,
               cfg: SolverConfig = DEFAULT_CONFIG, max_iter=20, tol=1e-8, W0=None,
               correction="exact"):
    """Iterated optimal-weight fit.

    Start from ``W0`` (identity by default), then alternate between refitting
    with ``W = V_hat`` and re-estimating ``V_hat`` until successive estimates
    agree to ``tol`` in max norm.

    Returns
    -------
    (FitResult, CovarianceEstimate)
    """
    if external.n_external is None:
        raise InvalidInputError("optimal weighting needs the external sample size")
    W = np.eye(spec.q) if W0 is None else np.asarray(W0, dtype=float)
    fit = fit_mele(sample, external, spec, cfg, W=W)
    trace = [fit.theta_hat.to_vector()]
    V = estimate_vhat(fit, sample, spec, external.mu_tilde)
    for it in range(1, max_iter + 1):
        fit = fit_mele(sample, external, spec, cfg, W=V, start=fit.theta_hat)
        trace.append(fit.theta_hat.to_vector())
        change = float(np.max(np.abs(trace[-1] - trace[-2])))
        if change <= tol:
            break
        V = estimate_vhat(fit, sample, spec, external.mu_tilde)
    else:
        raise NonConvergenceError(
            f"optimal-weight iteration did not settle in {max_iter} refits "
            f"(last change {change:.3g})", best=fit, residual=change, trace=trace)
    fit.diagnostics["optimal_weight"] = True
    fit.diagnostics["algorithm1_iterations"] = it
    fit.diagnostics["algorithm1_trace"] = [t.tolist() for t in trace]
    blocks = assemble_blocks(fit, sample, spec, vhat=V, correction=correction)
    cov = sigma_hat(blocks, "optimal_V", case_prop=fit.case_prop_hat)
    return fit, cov


def wald_ci(estimate, se, level=0.95):
    """Normal-theory interval ``estimate -/+ z se``."""
    if se < 0 or not 0 < level < 1:
        raise InvalidInputError("need se >= 0 and level in (0, 1)")
    z = stats.norm.ppf(0.5 * (1.0 + level))
    return estimate - z * se, estimate + z * se


def summary_rows(fit: FitResult, cov: CovarianceEstimate, level=0.95):
    """Estimate, SE and Wald interval for each parameter and the derived ones."""
    th = fit.theta_hat
    values = dict(zip(th.labels(), th.to_vector()))
    rows = []
    for name in cov.labels + ["alpha", "case_prop"]:
        est = th.alpha if name == "alpha" else th.case_prop if name == "case_prop" else values[name]
        se = cov.se(name)
        lo, hi = wald_ci(est, se, level)
        rows.append({"parameter": name, "estimate": float(est), "se": float(se),
                     "ci_low": float(lo), "ci_high": float(hi)})
    return rows
