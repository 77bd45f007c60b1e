import numpy as np
import pytest
from fractions import Fraction

from rcclt import (
    Constant,
    EnvironmentSpec,
    TwoPoint,
    Uniform,
    chi_1d,
    d_mu_field,
    drift_field,
    generate_environment,
    sigma_mu_sq,
    solve_corrector,
    v_1d,
    v_mu_field,
    w_mu_field,
)
from rcclt.corrector import apply_generator, chi_harmonicity_residual
from rcclt.errors import ConvergenceError, UsageError

U = -3.0 / 11.0  # closed-form corrector value of the (1, 4) two-site torus


def test_constant_env_corrector_is_zero():
    env = generate_environment(EnvironmentSpec(d=2, L=4, distribution=Constant(2.0), seed=0))
    corr = solve_corrector(env, 0.7, [1.0, 0.0])
    assert np.all(corr.phi == 0.0)
    assert corr.iterations == 0
    assert sigma_mu_sq(env, corr) == pytest.approx(2 * 2.0 * 1.0, rel=0, abs=0)


def test_two_site_closed_form(two_site_env):
    corr = solve_corrector(two_site_env, 1.0, [1.0])
    assert corr.phi == pytest.approx([U, -U], abs=1e-12)
    assert sigma_mu_sq(two_site_env, corr) == pytest.approx(389.0 / 121.0, abs=1e-12)
    v = v_mu_field(two_site_env, corr)
    assert v.values == pytest.approx([389.0 / 121.0] * 2, abs=1e-12)
    w = w_mu_field(two_site_env, corr)
    assert w.values == pytest.approx([398.0 / 121.0] * 2, abs=1e-12)
    d = d_mu_field(two_site_env, corr)
    assert d.values == pytest.approx([23.0 / 11.0] * 2, abs=1e-12)


def test_two_site_mu_to_zero_reaches_harmonic_mean(two_site_env):
    corr = solve_corrector(two_site_env, 1e-8, [1.0], tol=1e-13)
    assert sigma_mu_sq(two_site_env, corr) == pytest.approx(16.0 / 5.0, abs=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_residual_invariant(seed):
    env = generate_environment(EnvironmentSpec(d=2, L=6, distribution=Uniform(4.0), seed=seed))
    tol = 1e-10
    corr = solve_corrector(env, 0.05, [1.0, -0.3], tol=tol)
    b = drift_field(env, [1.0, -0.3]).values
    res = corr.mu * corr.phi - apply_generator(env, corr.phi) - b
    bound = tol * max(1.0, np.abs(b).max())
    assert np.abs(res).max() <= bound
    assert corr.residual_norm <= bound


@pytest.mark.parametrize("seed", range(3))
def test_matches_dense_solve(seed):
    from rcclt.spectral import build_generator

    env = generate_environment(EnvironmentSpec(d=2, L=4, distribution=Uniform(4.0), seed=seed))
    corr = solve_corrector(env, 0.1, [1.0, 0.0], tol=1e-12)
    gen = build_generator(env)
    dense = np.linalg.solve(0.1 * np.eye(env.n_sites) - gen.matrix,
                            drift_field(env, [1.0, 0.0]).values)
    assert np.abs(corr.phi - dense).max() <= 1e-8


def test_mean_identity():
    env = generate_environment(EnvironmentSpec(d=3, L=4, distribution=Uniform(4.0), seed=2))
    corr = solve_corrector(env, 0.3, [1.0, 0.5, -0.5])
    v = v_mu_field(env, corr)
    assert v.values.min() >= 0.0
    s = sigma_mu_sq(env, corr)
    assert abs(v.mean() - s) <= 1e-12 * abs(s)


def test_w_dominates_v_pointwise():
    env = generate_environment(EnvironmentSpec(d=2, L=8, distribution=Uniform(4.0), seed=3))
    corr = solve_corrector(env, 0.4, [1.0, 0.0])
    v = v_mu_field(env, corr).values
    w = w_mu_field(env, corr).values
    assert np.all(w >= v)


def test_jump_bound_coupling():
    env = generate_environment(EnvironmentSpec(d=2, L=8, distribution=Uniform(4.0), seed=4))
    xi = np.array([1.0, 0.5])
    corr = solve_corrector(env, 0.2, xi)
    d = d_mu_field(env, corr).values
    phi = corr.phi
    for j in range(2 * env.d):
        inc = (1.0 if j % 2 == 0 else -1.0) * xi[j // 2] + phi[env.neighbors[j]] - phi
        assert np.all(np.abs(inc) <= d * (1 + 1e-12))


def test_mu_must_be_positive(two_site_env):
    with pytest.raises(UsageError):
        solve_corrector(two_site_env, 0.0, [1.0])


def test_max_iter_exceeded_raises():
    env = generate_environment(EnvironmentSpec(d=2, L=8, distribution=Uniform(4.0), seed=5))
    with pytest.raises(ConvergenceError) as err:
        solve_corrector(env, 0.01, [1.0, 0.0], tol=1e-14, max_iter=2)
    assert err.value.residual > 0


def test_mismatched_corrector_rejected(two_site_env):
    other = generate_environment(EnvironmentSpec(d=1, L=4, distribution=Constant(1.0), seed=0))
    corr = solve_corrector(other, 1.0, [1.0])
    with pytest.raises(UsageError):
        v_mu_field(two_site_env, corr)


def test_chi_constant_is_zero():
    chi = chi_1d(np.full(10, 3.0), 3.0)
    assert np.all(chi.chi == 0.0)


def test_chi_alternating_pattern():
    cond = np.array([1.0, 4.0] * 4)
    chi = chi_1d(cond, 8.0 / 5.0)
    expected = np.array([0.0, 0.6, 0.0, 0.6, 0.0, 0.6, 0.0, 0.6, 0.0])
    assert chi.chi == pytest.approx(expected, abs=1e-15)
    assert chi.chi[0] == 0.0


def test_chi_harmonicity_and_increment_bound():
    from rcclt.rng import PURPOSE_TEST, uniform_stream

    m = 4.0
    dist = TwoPoint(m, 0.5)
    inv_mean = dist.inv_mean()
    cond = dist.sample(uniform_stream(21, PURPOSE_TEST, 0, 500))
    chi = chi_1d(cond, inv_mean)
    assert chi_harmonicity_residual(chi, cond) <= 1e-12 * m
    incs = np.diff(chi.chi)
    assert np.abs(incs).max() <= max(inv_mean - 1.0, 1.0 - inv_mean / m) + 1e-15


def test_chi_empty_rejected():
    with pytest.raises(UsageError):
        chi_1d(np.array([]), 1.0)


def test_v_1d_values():
    assert v_1d(2.0, 2.0, 2.0) == pytest.approx(4.0)  # constant c: v = 2c
    assert v_1d(1.0, 4.0, 8.0 / 5.0) == pytest.approx(16.0 / 5.0)
    # exact expectation over the two-point law
    inv_mean = Fraction(8, 5)
    total = Fraction(0)
    for a in (1, 4):
        for b in (1, 4):
            total += Fraction(1, 4) * inv_mean**2 * (Fraction(1, a) + Fraction(1, b))
    assert total == Fraction(16, 5)
