import numpy as np
import pytest

from ccel.errors import InvalidInputError
from ccel.model import (LOG_TILT_BOUND, CaseControlSample, ConstraintSpec, ExternalSummary,
                        ThetaFull, constraint_terms, eval_H, log_tilt, logistic_prob, tilt)


# logistic_prob ----------------------------------------------------------------

def test_logistic_at_zero():
    assert logistic_prob([0, 0], 0.0, [0, 0]) == 0.5


def test_logistic_closed_form():
    assert abs(logistic_prob([0, 0], -5.0, [-2, 2]) - 1 / (1 + np.exp(5))) < 1e-15
    assert abs(logistic_prob([0, 0], -5.0, [-2, 2]) - 0.0066929) < 1e-7


def test_logistic_saturates_without_overflow():
    with np.errstate(over="raise"):
        v = logistic_prob([400.0, 0.0], 0.0, [2.0, 0.0])
        w = logistic_prob([-400.0, 0.0], 0.0, [2.0, 0.0])
    assert 0 < v <= 1 and np.isfinite(v)
    assert 0 <= w < 1


def test_logistic_rejects_non_finite():
    with pytest.raises(InvalidInputError):
        logistic_prob([np.nan], 0.0, [1.0])
    with pytest.raises(InvalidInputError):
        logistic_prob([0.0], np.inf, [1.0])


# tilt -------------------------------------------------------------------------

def test_tilt_examples():
    assert tilt([3.0, -1.0], 0.0, [0.0, 0.0]) == 1.0
    assert abs(tilt([5.0], np.log(2), [0.0]) - 2.0) < 1e-15
    assert abs(tilt([1.0], 1.0, [1.0]) - np.exp(2)) < 1e-12
    assert abs(tilt([1.0], 1.0, [1.0]) - 7.389056) < 1e-6


def test_tilt_round_trip():
    rng = np.random.default_rng(0)
    for _ in range(200):
        x = rng.normal(0, 3, 3)
        a, b = rng.normal(0, 3), rng.normal(0, 3, 3)
        eta, _ = log_tilt(x, a, b)
        assert abs(np.exp(eta) / tilt(x, a, b) - 1) <= 1e-12
        assert abs(np.log(tilt(x, a, b)) - (a + x @ b)) <= 1e-12 * max(1, abs(a + x @ b))


def test_tilt_saturation_is_flagged():
    eta, sat = log_tilt(np.array([[1000.0]]), 0.0, [1.0])
    assert sat and eta[0] == LOG_TILT_BOUND
    assert np.isfinite(tilt([1000.0], 0.0, [1.0]))
    assert tilt([-1000.0], 0.0, [1.0]) > 0


# H ----------------------------------------------------------------------------

def test_H_identity_tilt():
    spec = ConstraintSpec.identity(2)
    x = np.array([0.3, -1.2])
    mu = np.array([0.1, 0.2])
    hv = eval_H(x, ThetaFull(0.7, 0.0, [0.0, 0.0], mu), spec, jacobian=True)
    assert np.allclose(hv.value, np.r_[0.0, x - mu], atol=1e-15)
    # delta = 1 kills the gamma column of the second block
    assert np.all(hv.jacobian[1:, 0] == 0.0)


def test_H_definition_and_jacobian_blocks():
    rng = np.random.default_rng(1)
    spec = ConstraintSpec.affine([[1.0, 2.0], [0.5, -1.0]], [1.0, -2.0])
    for _ in range(20):
        x = rng.standard_normal(2)
        th = ThetaFull(rng.normal(), rng.normal(), rng.normal(size=2), rng.normal(size=2))
        hv = eval_H(x, th, spec, jacobian=True)
        d = np.exp(th.alpha_star + x @ th.beta)
        eg = np.exp(th.gamma)
        h = spec.apply(x)
        assert np.isclose(hv.value[0], d - 1)
        assert np.allclose(hv.value[1:], (d + eg) / (1 + eg) * h - th.mu)
        Jm = hv.jacobian
        assert Jm.shape == (3, th.d)
        assert np.allclose(Jm[1:, 4:], -np.eye(2))
        assert np.allclose(Jm[1:, 0], eg * (1 - d) / (1 + eg) ** 2 * h)
        # first component does not depend on gamma or mu
        assert Jm[0, 0] == 0 and np.all(Jm[0, 4:] == 0)


def test_H_jacobian_central_differences():
    rng = np.random.default_rng(2)
    spec = ConstraintSpec.identity(3)
    for _ in range(100):
        x = rng.standard_normal((1, 3))
        th = rng.normal(0, 1, 2 + 3 + 3)
        _, J, _ = constraint_terms(x, spec.apply(x), th, jacobian=True)
        fd = np.empty_like(J[0])
        for k in range(th.size):
            e = np.zeros_like(th)
            e[k] = 1e-6
            fd[:, k] = (constraint_terms(x, spec.apply(x), th + e)[0][0]
                        - constraint_terms(x, spec.apply(x), th - e)[0][0]) / 2e-6
        assert np.max(np.abs(J[0] - fd)) / max(1.0, np.max(np.abs(fd))) <= 1e-5


def test_H_residual_zero_at_weighted_mean():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((25, 2))
    spec = ConstraintSpec.identity(2)
    th = ThetaFull(0.4, -0.2, [0.3, -0.1], [0.0, 0.0])
    H, _, info = constraint_terms(X, spec.apply(X), th)
    p = rng.random(25)
    p /= p.sum()
    mu = (p * info["w"]) @ spec.apply(X)
    H2, _, _ = constraint_terms(X, spec.apply(X), ThetaFull(0.4, -0.2, [0.3, -0.1], mu))
    assert np.allclose(p @ H2[:, 1:], 0.0, atol=1e-15)


def test_eval_H_dimension_mismatch():
    spec = ConstraintSpec.identity(2)
    with pytest.raises(InvalidInputError):
        eval_H([1.0, 2.0, 3.0], ThetaFull(0, 0, [0, 0], [0, 0]), spec)
    with pytest.raises(InvalidInputError):
        eval_H([1.0, 2.0], ThetaFull(0, 0, [0, 0], [0]), spec)


# data types -------------------------------------------------------------------

def test_sample_counts():
    s = CaseControlSample([1, 1, 0, 0], [[0.1], [0.5], [-0.2], [0.7]])
    assert (s.n, s.n1, s.n0, s.rho, s.p) == (4, 2, 2, 1.0, 1)
    r = s.replicate(2)
    assert r.n == 8 and r.rho == 1.0


@pytest.mark.parametrize("y, X", [
    ([1, 1, 1], [[0.0], [1.0], [2.0]]),          # no controls
    ([1, 2, 0], [[0.0], [1.0], [2.0]]),          # non-binary
    ([1, 0, 0], [[0.0], [np.nan], [2.0]]),       # non-finite
    ([1, 0, 0], [[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]),  # constant columns
    ([1, 0, 0, 1], [[1, 2], [2, 4], [3, 6], [4, 8]]),   # collinear columns
])
def test_sample_rejects(y, X):
    with pytest.raises(InvalidInputError):
        CaseControlSample(y, X)


def test_sample_is_read_only():
    s = CaseControlSample([1, 0], [[0.0], [1.0]])
    with pytest.raises(ValueError):
        s.covariates[0, 0] = 5.0


def test_constraint_spec_forms():
    X = np.array([[1.0, 2.0, 3.0]])
    assert np.allclose(ConstraintSpec.identity(3).apply(X), X)
    sub = ConstraintSpec.subset(3, [2, 0])
    assert np.allclose(sub.apply(X), [[3.0, 1.0]])
    aff = ConstraintSpec.affine([[1, 1, 0]], [0.5])
    assert np.allclose(aff.apply(X), [[3.5]])
    for spec in (ConstraintSpec.identity(3), sub, aff):
        assert ConstraintSpec.from_dict(spec.to_dict(), 3).to_dict() == spec.to_dict()
    assert ConstraintSpec.identity(3).leading(2).apply(X).tolist() == [[1.0, 2.0]]
    with pytest.raises(InvalidInputError):
        ConstraintSpec.affine([[0.0, 0.0, 0.0]], [1.0])    # constant h
    with pytest.raises(InvalidInputError):
        ConstraintSpec.subset(3, [3])


def test_external_summary_validation():
    e = ExternalSummary([0.1, 0.2], 100, np.diag([0.2, 2.0]))
    assert e.mode == "given" and e.q == 2
    assert ExternalSummary([0.1], None, "population").mode == "population"
    with pytest.raises(InvalidInputError):
        ExternalSummary([0.1, 0.2], 100, [[1.0, 2.0], [2.0, 1.0]])   # indefinite
    with pytest.raises(InvalidInputError):
        ExternalSummary([0.1, 0.2], 100, [[1.0, 0.5], [0.0, 1.0]])   # asymmetric
    with pytest.raises(InvalidInputError):
        ExternalSummary([0.1], 0, "optimal")
    with pytest.raises(InvalidInputError):
        ExternalSummary([0.1], 10, "bogus")


def test_theta_derived_quantities():
    th = ThetaFull.from_logistic(-5.0, [-2.0, 2.0], 0.067, [0.0, 0.0])
    assert th.d == 6
    assert abs(th.alpha + 5.0) < 1e-12
    assert abs(th.case_prop - 0.067) < 1e-12
    assert abs(th.gamma - np.log(0.933 / 0.067)) < 1e-12
    v = th.to_vector()
    assert np.array_equal(ThetaFull.from_vector(v, 2, 2).to_vector(), v)
    assert th.labels() == ["gamma", "alpha_star", "beta1", "beta2", "mu1", "mu2"]
    for g in (-15.0, 0.0, 15.0):
        assert 0 < ThetaFull(g, 0, [0], [0]).case_prop < 1
