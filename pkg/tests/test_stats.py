import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rcclt.errors import UsageError
from rcclt.experiments import ks_distance
from rcclt.rng import PURPOSE_TEST, uniform_stream
from rcclt.stats import erfc, normal_cdf, stderr_mean


def test_erfc_against_stdlib():
    xs = np.concatenate([np.linspace(-12.0, 12.0, 4001), [-40.0, -25.0, 25.0, 40.0]])
    ref = np.array([math.erfc(v) for v in xs])
    assert np.abs(erfc(xs) - ref).max() <= 1e-13


def test_normal_cdf_values():
    assert normal_cdf(0.0) == 0.5
    assert normal_cdf(1.0) == pytest.approx(0.8413447460685429, abs=1e-13)
    assert normal_cdf(-1.0) == pytest.approx(0.15865525393145705, abs=1e-13)
    assert normal_cdf(-10.0) == pytest.approx(7.619853024160527e-24, rel=1e-10)
    grid = normal_cdf(np.linspace(-8, 8, 1000))
    assert np.all(np.diff(grid) > 0)


def test_ks_single_zero():
    assert ks_distance([0.0]) == pytest.approx(0.5, abs=1e-15)


def test_ks_point_mass_far_right():
    assert ks_distance(np.full(50, 10.0)) >= 0.999


def test_ks_empty_rejected():
    with pytest.raises(UsageError):
        ks_distance([])


def test_ks_pinned_normal_draws_within_dkw():
    u1 = uniform_stream(123, PURPOSE_TEST, 0, 10_000)
    u2 = uniform_stream(123, PURPOSE_TEST, 1, 10_000)
    z = np.sqrt(-2 * np.log(1 - u1)) * np.cos(2 * np.pi * u2)
    assert ks_distance(z) <= 0.0272  # twice the 99% DKW envelope 1.358/sqrt(n)


def _brute_force_ks(xs):
    x = np.sort(np.asarray(xs, dtype=np.float64))
    n = x.size
    candidates = []
    points = list(x) + [0.5 * (a + b) for a, b in zip(x[:-1], x[1:])]
    for v in points:
        below = float(np.sum(x < v)) / n
        at = float(np.sum(x <= v)) / n
        phi = normal_cdf(v)
        candidates += [abs(at - phi), abs(below - phi)]
    return max(candidates)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-6, 6, allow_nan=False), min_size=1, max_size=100))
def test_ks_equals_brute_force_scan(xs):
    assert ks_distance(xs) == pytest.approx(_brute_force_ks(xs), abs=1e-12)


def test_stderr_equals_jackknife():
    rng = np.random.default_rng(4)
    x = rng.standard_normal(200)
    # explicit leave-one-out jackknife of the sample mean
    n = x.size
    loo = (x.sum() - x) / (n - 1)
    jack = math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    assert stderr_mean(x) == pytest.approx(jack, rel=1e-12)
    with pytest.raises(UsageError):
        stderr_mean([1.0])
