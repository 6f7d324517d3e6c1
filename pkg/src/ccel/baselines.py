"""Prospective logistic maximum likelihood on case-control data.

Fitting the ordinary logistic likelihood to a case-control sample gives a
consistent slope; the intercept absorbs the sampling offset
``log(n1/n0) - log(P(Y=1)/P(Y=0))`` and is therefore biased for the
population intercept. This is the comparator the integrated estimator is
measured against.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import NonConvergenceError, SeparationError
from .model import CaseControlSample


@dataclass(frozen=True)
class MleResult:
    alpha_hat: float
    beta_hat: np.ndarray
    se: np.ndarray                 # (1 + p,), intercept first
    cov: np.ndarray
    naive_case_prop: float
    iterations: int
    score_norm: float

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([[self.alpha_hat], self.beta_hat])


def fit_prospective_mle(sample: CaseControlSample, tol=1e-8, max_iter=100) -> MleResult:
    """Newton-Raphson on the prospective logistic log-likelihood.

    Raises
    ------
    SeparationError
        If fitted probabilities pile up at 0/1 while the coefficients keep
        growing (complete or quasi-complete separation).
    """
    y = sample.outcomes.astype(float)
    Z = np.column_stack([np.ones(sample.n), sample.covariates])
    # start at the sample log odds for the intercept
    coef = np.zeros(Z.shape[1])
    coef[0] = np.log(sample.n1 / sample.n0)

    def loglik(c):
        eta = Z @ c
        return float(y @ eta - np.logaddexp(0.0, eta).sum())

    ll = loglik(coef)
    for it in range(1, max_iter + 1):
        mu = expit(Z @ coef)
        score = Z.T @ (y - mu)
        wts = mu * (1.0 - mu)
        info = (Z * wts[:, None]).T @ Z
        if np.max(np.abs(score)) <= tol:
            break
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            raise SeparationError("information matrix became singular; data look separable")
        t = 1.0
        while True:
            cand = coef + t * step
            ll_new = loglik(cand)
            if ll_new >= ll - 1e-12 * abs(ll) or t < 1e-10:
                break
            t *= 0.5
        coef, ll = cand, ll_new
        extreme = np.mean((mu < 1e-8) | (mu > 1 - 1e-8))
        if extreme > 0 and np.linalg.norm(coef[1:]) > 30:
            raise SeparationError(
                f"fitted probabilities within 1e-8 of 0/1 for {extreme:.1%} of rows "
                f"and |beta| = {np.linalg.norm(coef[1:]):.1f} still growing")
    else:
        raise NonConvergenceError("prospective logistic fit did not converge",
                                  best=coef, residual=float(np.max(np.abs(score))))

    mu = expit(Z @ coef)
    info = (Z * (mu * (1.0 - mu))[:, None]).T @ Z
    cov = np.linalg.inv(info)
    cov = 0.5 * (cov + cov.T)
    return MleResult(
        alpha_hat=float(coef[0]),
        beta_hat=coef[1:].copy(),
        se=np.sqrt(np.diag(cov)),
        cov=cov,
        naive_case_prop=sample.n1 / sample.n,
        iterations=it,
        score_norm=float(np.max(np.abs(Z.T @ (y - mu)))),
    )
