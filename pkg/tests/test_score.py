from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import multivariate_normal, norm

from umnicrl.graph import Dag, random_dag
from umnicrl.scm import (
    EnvironmentSpec,
    LinearGaussianSem,
    analytic_latent_covariance,
    environment_parameters,
    intervention_signature,
    random_interventions,
    random_sem,
    random_transform,
    sample_latent,
)
from umnicrl.score import (
    AffineScoreFn,
    IdentifiabilityInputError,
    analytic_latent_score,
    analytic_observed_score,
    estimate_gaussian_score,
    lambda_matrix,
    lambda_oracle,
    oracle_scores,
    score_difference,
    select_basis,
    verify_score_transform,
)

OBS = EnvironmentSpec.observational()


def log_mechanism(sem, spec, j, z):
    a, v, mu = environment_parameters(sem, spec)
    return norm.logpdf(z[j], loc=a[j] @ z + mu[j], scale=np.sqrt(v[j]))


def fd_grad(f, z, h=1e-5):
    out = np.zeros_like(z)
    for k in range(z.size):
        e = np.zeros_like(z)
        e[k] = h
        out[k] = (f(z + e) - f(z - e)) / (2 * h)
    return out


def test_root_hard_lambda_is_minus_three_z_over_variance():
    sigma2 = 2.0
    sem = LinearGaussianSem(Dag(2, frozenset({(0, 1)})), np.array([[0.0, 0.0], [0.7, 0.0]]), np.array([sigma2, 1.0]))
    spec = EnvironmentSpec(frozenset({0}), "hard", {0: np.zeros(2)}, {0: sigma2 / 4})
    for z0 in (-1.3, 0.0, 2.0):
        lam = lambda_oracle(sem, spec, np.array([z0, 0.4]))
        assert lam[0, 0] == pytest.approx(-3 * z0 / sigma2, abs=1e-14)
        assert lam[1, 0] == 0.0
        np.testing.assert_array_equal(lam[:, 1], 0.0)


def test_soft_lambda_frozen_value():
    # Z1 = Z0 + N1 with unit variance; soft mechanism halves the weight and quarters the variance
    sem = LinearGaussianSem(Dag(2, frozenset({(0, 1)})), np.array([[0.0, 0.0], [1.0, 0.0]]), np.array([1.0, 1.0]))
    spec = EnvironmentSpec(frozenset({1}), "soft", {1: np.array([0.5, 0.0])}, {1: 0.25})
    np.testing.assert_allclose(lambda_oracle(sem, spec, np.array([1.0, 2.0]))[:, 1], [2.0, -5.0], atol=1e-14)


def test_lambda_matches_finite_difference_of_log_ratio():
    sem = random_sem(random_dag(4, 0.7, 8), 8)
    specs = random_interventions(4, "soft", sem, 8)
    rng = np.random.default_rng(0)
    for spec in specs:
        z = rng.standard_normal(4)
        lam = lambda_oracle(sem, spec, z)
        for j in range(4):
            if j in spec.targets:
                ratio = lambda u: log_mechanism(sem, spec, j, u) - log_mechanism(sem, OBS, j, u)
                np.testing.assert_allclose(lam[:, j], fd_grad(ratio, z), atol=1e-6)
                support = sem.dag.parents(j) | {j}
                assert all(lam[k, j] == 0 for k in range(4) if k not in support)
            else:
                np.testing.assert_array_equal(lam[:, j], 0.0)


def test_latent_score_is_gradient_of_log_density():
    sem = random_sem(random_dag(3, 0.7, 4), 4)
    spec = random_interventions(3, "hard", sem, 4)[0]
    dist = multivariate_normal(np.zeros(3), analytic_latent_covariance(sem, spec))
    z = np.array([0.3, -1.1, 0.8])
    np.testing.assert_allclose(analytic_latent_score(sem, spec)(z), fd_grad(dist.logpdf, z), atol=1e-6)


@pytest.mark.parametrize("kind", ["soft", "hard"])
def test_score_difference_factorizes_through_lambda(kind):
    sem = random_sem(random_dag(4, 0.5, 21), 21)
    specs = random_interventions(4, kind, sem, 21)
    model = random_transform(7, 4, 21)
    obs, envs = oracle_scores(sem, specs, model)
    d_int = intervention_signature(specs, 4)
    zs = np.random.default_rng(1).standard_normal((25, 4))
    for z in zs:
        x = model.transform @ z
        delta = np.stack([(s - obs)(x) for s in envs], axis=1)
        rhs = model.pinv.T @ lambda_matrix(sem, specs, z) @ d_int
        np.testing.assert_allclose(delta, rhs, atol=1e-9 * max(1.0, np.abs(rhs).max()))


def test_observed_score_transform_rule():
    sem = random_sem(random_dag(3, 0.5, 2), 2)
    model = random_transform(5, 3, 2)
    probes = np.random.default_rng(2).standard_normal((10, 3))
    assert verify_score_transform(sem, OBS, model, probes)
    wrong = analytic_observed_score(sem, OBS, random_transform(5, 3, 3))
    assert not verify_score_transform(sem, OBS, model, probes, observed_score=wrong)


def test_estimated_score_converges():
    sem = random_sem(random_dag(3, 0.5, 6), 6)
    model = random_transform(3, 3, 6)
    x = sample_latent(sem, OBS, 400_000, 6) @ model.transform.T
    est = estimate_gaussian_score(x)
    ref = analytic_observed_score(sem, OBS, model)
    np.testing.assert_allclose(est.coeff, ref.coeff, atol=0.02 * np.abs(ref.coeff).max())


def test_estimated_score_on_degenerate_support():
    # d > n: the score lives on the column space of G
    sem = random_sem(random_dag(2, 1.0, 7), 7)
    model = random_transform(4, 2, 7)
    x = sample_latent(sem, OBS, 50_000, 7) @ model.transform.T
    est = estimate_gaussian_score(x)
    assert np.linalg.matrix_rank(est.coeff, tol=1e-6 * np.abs(est.coeff).max()) == 2


def test_affine_arithmetic():
    f = AffineScoreFn(np.eye(2), np.array([1.0, 0.0]))
    g = AffineScoreFn(2 * np.eye(2), np.zeros(2))
    h = f - g
    np.testing.assert_array_equal(h(np.array([1.0, 1.0])), [0.0, -1.0])
    with pytest.raises(ValueError):
        score_difference(f, AffineScoreFn(np.eye(3), np.zeros(3)))


def test_select_basis_skips_dependent_differences():
    e = np.eye(3)
    diffs = [
        AffineScoreFn(np.outer(e[0], e[0]), np.zeros(3)),
        AffineScoreFn(2 * np.outer(e[0], e[0]), np.zeros(3)),
        AffineScoreFn(np.outer(e[1], e[1]), np.zeros(3)),
    ]
    probes = np.vstack([np.zeros(3), e])
    basis, stack = select_basis(diffs, probes, 1e-6, n=2)
    assert basis == [0, 2]
    assert stack.evaluate(probes).shape == (2, 3, 4)
    with pytest.raises(IdentifiabilityInputError):
        select_basis(diffs, probes, 1e-6, n=3)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 5), st.sampled_from(["soft", "hard"]), st.integers(0, 2**31))
def test_lambda_support_invariant(n, kind, seed):
    sem = random_sem(random_dag(n, 0.5, seed), seed)
    specs = random_interventions(n, kind, sem, seed)
    z = np.random.default_rng(seed).standard_normal(n)
    lam = lambda_matrix(sem, specs, z)
    for j in range(n):
        for k in range(n):
            if k != j and k not in sem.dag.parents(j):
                assert lam[k, j] == 0.0


def test_scalar_score_example():
    x = np.random.default_rng(0).standard_normal((100_000, 1))
    assert -1.07 <= estimate_gaussian_score(x).coeff[0, 0] <= -0.94
    with pytest.raises(ValueError):
        estimate_gaussian_score(x[:1])


def test_line_support_has_rank_one_score():
    t = np.random.default_rng(1).standard_normal((1000, 1))
    x = t @ np.array([[1.0, 2.0]])
    assert np.linalg.matrix_rank(estimate_gaussian_score(x).coeff) == 1


def test_pushforward_precision():
    sem = random_sem(random_dag(3, 0.5, 12), 12)
    model = random_transform(5, 3, 12)
    theta = -analytic_latent_score(sem, OBS).coeff
    expected = -model.pinv.T @ theta @ model.pinv
    x = sample_latent(sem, OBS, 400_000, 12) @ model.transform.T
    np.testing.assert_allclose(estimate_gaussian_score(x).coeff, expected, atol=0.03 * np.abs(expected).max())


def test_score_difference_examples():
    f = AffineScoreFn(-np.eye(2), np.zeros(2))
    np.testing.assert_array_equal((f - f).coeff, 0.0)
    t0, t1 = np.diag([1.0, 2.0]), np.diag([3.0, 1.0])
    d = score_difference(AffineScoreFn(-t1, np.zeros(2)), AffineScoreFn(-t0, np.zeros(2)))
    np.testing.assert_array_equal(d.coeff, t0 - t1)


def test_root_hard_difference_touches_one_latent_coordinate():
    sem = LinearGaussianSem(Dag(2, frozenset({(0, 1)})), np.array([[0.0, 0.0], [0.9, 0.0]]), np.array([1.0, 1.0]))
    model = random_transform(4, 2, 0)
    spec = EnvironmentSpec(frozenset({0}), "hard", {0: np.zeros(2)}, {0: 0.25})
    diff = analytic_observed_score(sem, spec, model) - analytic_observed_score(sem, OBS, model)
    pulled = model.transform.T @ diff.coeff @ model.transform
    np.testing.assert_allclose(pulled, np.diag([-3.0, 0.0]), atol=1e-10)


def test_select_basis_examples():
    sem = random_sem(random_dag(4, 0.5, 3), 3)
    specs = random_interventions(4, "soft", sem, 3)
    model = random_transform(5, 4, 3)
    obs, envs = oracle_scores(sem, specs, model)
    diffs = [s - obs for s in envs]
    probes = np.random.default_rng(3).standard_normal((5, 4)) @ model.transform.T
    basis, _ = select_basis(diffs + [diffs[0]], probes, 1e-6, n=4)
    assert basis == [0, 1, 2, 3]
    d_int = intervention_signature([specs[b] for b in basis], 4)
    assert round(abs(np.linalg.det(d_int))) >= 1


def test_finite_difference_at_twenty_points():
    sem = random_sem(random_dag(3, 1.0, 14), 14)
    spec = random_interventions(3, "hard", sem, 14)[0]
    for z in np.random.default_rng(14).standard_normal((20, 3)):
        lam = lambda_oracle(sem, spec, z)
        for j in spec.targets:
            ratio = lambda u: log_mechanism(sem, spec, j, u) - log_mechanism(sem, OBS, j, u)
            np.testing.assert_allclose(lam[:, j], fd_grad(ratio, z), atol=1e-5)


def test_verify_score_transform_examples():
    from umnicrl.scm import ObservationModel

    sem = random_sem(random_dag(4, 0.5, 5), 5)
    probes = np.random.default_rng(5).standard_normal((10, 4))
    assert verify_score_transform(sem, OBS, ObservationModel(np.eye(4)), probes)
    model = random_transform(5, 4, 5)
    assert verify_score_transform(sem, OBS, model, probes)
    g = model.transform.copy()
    g[2, 1] += 0.1
    corrupted = analytic_observed_score(sem, OBS, ObservationModel(g))
    assert not verify_score_transform(sem, OBS, model, probes, observed_score=corrupted)
