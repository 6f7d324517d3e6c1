"""Domain types and elementary model evaluations.

The parameter vector is always laid out as ``(gamma, alpha_star, beta, mu)``:

* ``gamma``      log odds of control vs case, ``log P(Y=0)/P(Y=1)``
* ``alpha_star`` intercept of the exponential tilt, ``gamma + alpha``
* ``beta``       log odds ratio slopes (length ``p``)
* ``mu``         population mean of ``h(X)`` (length ``q``)

The constraint vector for a covariate row ``x`` is::

    H(x; theta) = ( delta(x) - 1,
                    w(x) * h(x) - mu )

with ``delta(x) = exp(alpha_star + beta'x)`` and
``w(x) = (delta(x) + e^gamma) / (1 + e^gamma)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import InvalidInputError

# log(1e300); tilts are clamped to [1e-300, 1e300]
LOG_TILT_BOUND = float(np.log(1e300))


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def _check_finite(name, a):
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} contains non-finite values")


@dataclass(frozen=True)
class CaseControlSample:
    """Internal case-control data.

    Parameters
    ----------
    outcomes : array of {0, 1}, shape (n,)
    covariates : array, shape (n, p)
    """

    outcomes: np.ndarray
    covariates: np.ndarray
    check_rank: bool = field(default=True, repr=False)

    def __post_init__(self):
        y = np.asarray(self.outcomes)
        X = np.asarray(self.covariates, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if y.ndim != 1 or X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise InvalidInputError(
                f"outcomes {y.shape} and covariates {X.shape} do not align")
        if not np.all((y == 0) | (y == 1)):
            raise InvalidInputError("outcomes must be coded 0 (control) / 1 (case)")
        _check_finite("covariates", X)
        object.__setattr__(self, "outcomes", _frozen(y, dtype=np.int8))
        object.__setattr__(self, "covariates", _frozen(X))
        if self.n1 < 1 or self.n0 < 1:
            raise InvalidInputError(
                f"need at least one case and one control (n1={self.n1}, n0={self.n0})")
        if self.check_rank:
            centered = X - X.mean(axis=0)
            rank = np.linalg.matrix_rank(centered)
            if rank < X.shape[1]:
                raise InvalidInputError(
                    f"covariates lie on a hyperplane: centered rank {rank} < p={X.shape[1]}")

    @property
    def n(self) -> int:
        return int(self.outcomes.shape[0])

    @property
    def p(self) -> int:
        return int(self.covariates.shape[1])

    @property
    def n1(self) -> int:
        return int(self.outcomes.sum())

    @property
    def n0(self) -> int:
        return self.n - self.n1

    @property
    def rho(self) -> float:
        return self.n1 / self.n0

    @property
    def cases(self) -> np.ndarray:
        return self.covariates[self.outcomes == 1]

    @property
    def controls(self) -> np.ndarray:
        return self.covariates[self.outcomes == 0]

    def replicate(self, times: int) -> "CaseControlSample":
        """Each row repeated ``times`` times (same order of first appearance)."""
        return CaseControlSample(np.repeat(self.outcomes, times),
                                 np.repeat(self.covariates, times, axis=0))


@dataclass(frozen=True)
class ConstraintSpec:
    """Affine map ``h(x) = A x + b`` from covariates to summary statistics.

    ``kind`` records how the map was declared (``identity``, ``subset`` or
    ``affine``) so it can be serialized back the same way.
    """

    matrix: np.ndarray
    offset: np.ndarray
    kind: str = "affine"
    indices: tuple | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        b = np.asarray(self.offset, dtype=float).reshape(-1)
        if b.shape[0] != A.shape[0]:
            raise InvalidInputError(f"offset length {b.shape[0]} != rows of matrix {A.shape[0]}")
        _check_finite("constraint matrix", A)
        _check_finite("constraint offset", b)
        if A.shape[0] < 1:
            raise InvalidInputError("constraint needs q >= 1 components")
        if np.linalg.matrix_rank(A) < A.shape[0]:
            raise InvalidInputError(
                "constraint matrix has dependent rows; some h component is constant "
                "or redundant")
        if self.kind not in ("identity", "subset", "affine"):
            raise InvalidInputError(f"unknown constraint kind {self.kind!r}")
        object.__setattr__(self, "matrix", _frozen(A))
        object.__setattr__(self, "offset", _frozen(b))

    @classmethod
    def identity(cls, p: int) -> "ConstraintSpec":
        return cls(np.eye(p), np.zeros(p), kind="identity")

    @classmethod
    def subset(cls, p: int, indices) -> "ConstraintSpec":
        idx = tuple(int(i) for i in indices)
        if not idx or min(idx) < 0 or max(idx) >= p or len(set(idx)) != len(idx):
            raise InvalidInputError(f"bad subset indices {idx} for p={p}")
        return cls(np.eye(p)[list(idx)], np.zeros(len(idx)), kind="subset", indices=idx)

    @classmethod
    def affine(cls, matrix, offset=None) -> "ConstraintSpec":
        A = np.atleast_2d(np.asarray(matrix, dtype=float))
        b = np.zeros(A.shape[0]) if offset is None else offset
        return cls(A, b, kind="affine")

    @property
    def q(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def p(self) -> int:
        return int(self.matrix.shape[1])

    def apply(self, X) -> np.ndarray:
        """``h`` evaluated row-wise; accepts shape (p,) or (n, p)."""
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.p:
            raise InvalidInputError(f"covariate dimension {X.shape[-1]} != p={self.p}")
        return X @ self.matrix.T + self.offset

    def leading(self, k: int) -> "ConstraintSpec":
        """The first ``k`` components of ``h``."""
        if not 1 <= k <= self.q:
            raise InvalidInputError(f"cannot keep {k} of {self.q} components")
        if self.kind == "identity":
            return ConstraintSpec.subset(self.p, range(k))
        if self.kind == "subset":
            return ConstraintSpec.subset(self.p, self.indices[:k])
        return ConstraintSpec.affine(self.matrix[:k], self.offset[:k])

    def to_dict(self) -> dict:
        if self.kind == "identity":
            return {"kind": "identity"}
        if self.kind == "subset":
            return {"kind": "subset", "indices": list(self.indices)}
        return {"kind": "affine", "matrix": self.matrix.tolist(),
                "offset": self.offset.tolist()}

    @classmethod
    def from_dict(cls, d: dict, p: int) -> "ConstraintSpec":
        kind = d.get("kind", "identity")
        if kind == "identity":
            return cls.identity(p)
        if kind == "subset":
            return cls.subset(p, d["indices"])
        if kind == "affine":
            return cls.affine(d["matrix"], d.get("offset"))
        raise InvalidInputError(f"unknown constraint kind {kind!r}")


@dataclass(frozen=True)
class ExternalSummary:
    """Summary statistic from an external study.

    ``weight`` is a positive-definite ``q x q`` matrix, ``"optimal"`` (iterate
    with the estimated covariance of ``mu_tilde``) or ``"population"`` (treat
    ``mu_tilde`` as the exact population mean).
    """

    mu_tilde: np.ndarray
    n_external: int | None = None
    weight: object = "optimal"

    def __post_init__(self):
        mu = np.asarray(self.mu_tilde, dtype=float).reshape(-1)
        _check_finite("mu_tilde", mu)
        object.__setattr__(self, "mu_tilde", _frozen(mu))
        w = self.weight
        if isinstance(w, str):
            if w not in ("optimal", "population"):
                raise InvalidInputError(f"unknown weight mode {w!r}")
        else:
            W = np.atleast_2d(np.asarray(w, dtype=float))
            check_weight_matrix(W, mu.shape[0])
            object.__setattr__(self, "weight", _frozen(W))
        if self.mode != "population":
            if self.n_external is None or int(self.n_external) < 1:
                raise InvalidInputError("n_external must be >= 1 unless weight='population'")
        if self.n_external is not None:
            object.__setattr__(self, "n_external", int(self.n_external))

    @property
    def q(self) -> int:
        return int(self.mu_tilde.shape[0])

    @property
    def mode(self) -> str:
        return self.weight if isinstance(self.weight, str) else "given"

    def with_weight(self, weight) -> "ExternalSummary":
        return ExternalSummary(self.mu_tilde, self.n_external, weight)

    def leading(self, k: int) -> "ExternalSummary":
        w = self.weight if isinstance(self.weight, str) else self.weight[:k, :k]
        return ExternalSummary(self.mu_tilde[:k], self.n_external, w)


def check_weight_matrix(W, q, tol=1e-12):
    if W.shape != (q, q):
        raise InvalidInputError(f"weight matrix shape {W.shape} != ({q}, {q})")
    _check_finite("weight matrix", W)
    if not np.allclose(W, W.T, rtol=1e-10, atol=1e-12):
        raise InvalidInputError("weight matrix is not symmetric")
    eig = np.linalg.eigvalsh(W)
    if eig.min() <= tol * max(1.0, abs(eig.max())):
        raise InvalidInputError(f"weight matrix is not positive definite (min eigenvalue {eig.min():.3g})")


@dataclass(frozen=True)
class ThetaFull:
    gamma: float
    alpha_star: float
    beta: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "alpha_star", float(self.alpha_star))
        object.__setattr__(self, "beta", _frozen(np.reshape(self.beta, -1)))
        object.__setattr__(self, "mu", _frozen(np.reshape(self.mu, -1)))

    @property
    def p(self) -> int:
        return int(self.beta.shape[0])

    @property
    def q(self) -> int:
        return int(self.mu.shape[0])

    @property
    def d(self) -> int:
        return 2 + self.p + self.q

    @property
    def alpha(self) -> float:
        """Logistic intercept recovered from the tilt intercept."""
        return self.alpha_star - self.gamma

    @property
    def case_prop(self) -> float:
        """Marginal case proportion ``P(Y=1) = 1 / (1 + e^gamma)``."""
        return float(expit(-self.gamma))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([[self.gamma, self.alpha_star], self.beta, self.mu])

    @classmethod
    def from_vector(cls, v, p: int, q: int) -> "ThetaFull":
        v = np.asarray(v, dtype=float)
        if v.shape != (2 + p + q,):
            raise InvalidInputError(f"parameter vector shape {v.shape} != ({2 + p + q},)")
        return cls(v[0], v[1], v[2:2 + p], v[2 + p:])

    @classmethod
    def from_logistic(cls, alpha, beta, case_prop, mu) -> "ThetaFull":
        gamma = float(np.log((1 - case_prop) / case_prop))
        return cls(gamma, alpha + gamma, beta, mu)

    def labels(self) -> list[str]:
        return (["gamma", "alpha_star"] + [f"beta{j + 1}" for j in range(self.p)]
                + [f"mu{k + 1}" for k in range(self.q)])


@dataclass(frozen=True)
class HValue:
    value: np.ndarray
    jacobian: np.ndarray | None = None


def logistic_prob(x, alpha, beta) -> float:
    """``P(Y=1 | x)`` under the logistic model."""
    x = np.asarray(x, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(beta)) and np.isfinite(alpha)):
        raise InvalidInputError("logistic_prob needs finite inputs")
    return float(expit(alpha + x @ beta))


def log_tilt(X, alpha_star, beta):
    """``alpha_star + X beta`` clamped to the representable range.

    Returns the clamped log tilt and a flag telling whether clamping occurred.
    """
    eta = alpha_star + np.asarray(X, dtype=float) @ np.asarray(beta, dtype=float)
    saturated = bool(np.any(np.abs(eta) > LOG_TILT_BOUND))
    if saturated:
        eta = np.clip(eta, -LOG_TILT_BOUND, LOG_TILT_BOUND)
    return eta, saturated


def tilt(x, alpha_star, beta) -> float:
    """Density ratio ``f1(x)/f0(x) = exp(alpha_star + beta'x)``.

    Saturates at 1e300 (and 1e-300 from below) instead of overflowing.
    """
    x = np.asarray(x, dtype=float)
    if not (np.all(np.isfinite(x)) and np.isfinite(alpha_star)
            and np.all(np.isfinite(beta))):
        raise InvalidInputError("tilt needs finite inputs")
    eta, _ = log_tilt(x, alpha_star, beta)
    return float(np.exp(eta))


def _unpack(theta, p, q):
    if isinstance(theta, ThetaFull):
        if theta.p != p or theta.q != q:
            raise InvalidInputError(
                f"theta has (p, q)=({theta.p}, {theta.q}), data need ({p}, {q})")
        return theta.gamma, theta.alpha_star, theta.beta, theta.mu
    v = np.asarray(theta, dtype=float)
    if v.shape != (2 + p + q,):
        raise InvalidInputError(f"parameter vector shape {v.shape} != ({2 + p + q},)")
    return v[0], v[1], v[2:2 + p], v[2 + p:]


def constraint_terms(X, hX, theta, jacobian=False):
    """Vectorized ``H(x_i; theta)`` for all rows.

    Parameters
    ----------
    X : (n, p) covariates
    hX : (n, q) values of ``h`` at the rows of ``X``
    theta : ThetaFull or parameter vector

    Returns
    -------
    H : (n, 1 + q)
    J : (n, 1 + q, d) or None
        ``dH/dtheta`` with columns ordered (gamma, alpha_star, beta, mu).
    info : dict with ``delta`` (n,), ``s`` = 1/(1+e^gamma) and ``saturated``.
    """
    n, p = X.shape
    q = hX.shape[1]
    gamma, a, b, mu = _unpack(theta, p, q)
    eta, saturated = log_tilt(X, a, b)
    delta = np.exp(eta)
    s = float(expit(-gamma))          # 1/(1+e^gamma)
    w = s * delta + (1.0 - s)         # (delta + e^gamma)/(1 + e^gamma)
    H = np.empty((n, 1 + q))
    H[:, 0] = delta - 1.0
    H[:, 1:] = w[:, None] * hX - mu
    info = {"delta": delta, "s": s, "w": w, "saturated": saturated}
    if not jacobian:
        return H, None, info
    d = 2 + p + q
    J = np.zeros((n, 1 + q, d))
    J[:, 0, 1] = delta
    J[:, 0, 2:2 + p] = delta[:, None] * X
    dw_dgamma = s * (1.0 - s) * (1.0 - delta)     # e^g (1 - delta)/(1+e^g)^2
    J[:, 1:, 0] = dw_dgamma[:, None] * hX
    sd_h = (s * delta)[:, None] * hX              # d w h / d alpha_star
    J[:, 1:, 1] = sd_h
    J[:, 1:, 2:2 + p] = sd_h[:, :, None] * X[:, None, :]
    J[:, 1:, 2 + p:] = -np.eye(q)
    return H, J, info


def eval_H(x, theta: ThetaFull, spec: ConstraintSpec, jacobian=False) -> HValue:
    """``H(x; theta)`` at a single covariate row."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != spec.p:
        raise InvalidInputError(f"x has length {x.shape[0]}, constraint expects p={spec.p}")
    if theta.p != spec.p or theta.q != spec.q:
        raise InvalidInputError(
            f"theta (p={theta.p}, q={theta.q}) does not match constraint (p={spec.p}, q={spec.q})")
    _check_finite("x", x)
    H, J, _ = constraint_terms(x[None, :], spec.apply(x)[None, :], theta, jacobian)
    return HValue(H[0], None if J is None else J[0])
