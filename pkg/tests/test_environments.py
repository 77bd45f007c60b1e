import json
import pathlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rcclt import (
    Constant,
    EnvironmentSpec,
    Site,
    TwoPoint,
    Uniform,
    conductance,
    drift_field,
    generate_environment,
    load_environment,
    parse_distribution,
    save_environment,
    translate,
)
from rcclt.errors import ConfigurationError
from rcclt.rng import PURPOSE_TEST, uniform_stream

GOLDEN = pathlib.Path(__file__).parent / "golden"


def test_constant_environment_all_ones():
    env = generate_environment(EnvironmentSpec(d=2, L=4, distribution=Constant(1.0), seed=1))
    assert env.conductances.shape == (2, 16)
    assert np.all(env.conductances == 1.0)


def test_golden_twopoint_sequence():
    spec = EnvironmentSpec(d=1, L=8, distribution=TwoPoint(4.0, 0.5), seed=7)
    env = generate_environment(spec)
    golden = json.loads((GOLDEN / "env_d1_L8_twopoint_seed7.json").read_text())
    assert list(env.conductances.ravel()) == golden["conductances"]
    assert set(golden["conductances"]) <= {1.0, 4.0}


def test_uniform_d3_mean():
    env = generate_environment(EnvironmentSpec(d=3, L=8, distribution=Uniform(10.0), seed=1))
    vals = env.conductances.ravel()
    assert vals.size == 1536
    assert vals.min() >= 1.0 and vals.max() <= 10.0
    assert abs(vals.mean() - 5.5) < 0.25  # Chebyshev bound on the sample mean


def test_generation_is_deterministic():
    spec = EnvironmentSpec(d=2, L=8, distribution=Uniform(4.0), seed=123)
    a = generate_environment(spec)
    b = generate_environment(spec)
    assert a.conductances.tobytes() == b.conductances.tobytes()


def test_million_draw_support():
    u = uniform_stream(5, PURPOSE_TEST, 0, 1_000_000)
    for dist in [TwoPoint(4.0, 0.5), Uniform(7.0), Constant(2.0)]:
        vals = dist.sample(u)
        assert vals.min() >= 1.0
        assert vals.max() <= dist.ceiling


@settings(max_examples=25, deadline=None)
@given(
    d=st.integers(1, 3),
    exp=st.integers(1, 3),
    seed=st.integers(0, 2**64 - 1),
    m=st.floats(1.5, 50.0),
)
def test_ellipticity_random_specs(d, exp, seed, m):
    spec = EnvironmentSpec(d=d, L=2 ** exp, distribution=Uniform(m), seed=seed)
    env = generate_environment(spec)
    assert env.conductances.min() >= 1.0
    assert env.conductances.max() <= m


def test_conductance_wrap_two_sites(two_site_env):
    a, b = 1.0, 4.0
    assert conductance(two_site_env, Site((0,)), (1,)) == a
    assert conductance(two_site_env, Site((0,)), (-1,)) == b
    assert conductance(two_site_env, Site((1,)), (1,)) == b
    assert conductance(two_site_env, Site((1,)), (-1,)) == a


def test_conductance_symmetry_random_env():
    env = generate_environment(EnvironmentSpec(d=2, L=4, distribution=Uniform(4.0), seed=6))
    for x0 in range(4):
        for x1 in range(4):
            for i, z in enumerate([(1, 0), (0, 1)]):
                here = conductance(env, Site((x0, x1)), z)
                mirrored = conductance(
                    env, Site(((x0 + z[0]) % 4, (x1 + z[1]) % 4)), tuple(-v for v in z))
                assert here == mirrored


def test_drift_constant_is_zero():
    env = generate_environment(EnvironmentSpec(d=2, L=4, distribution=Constant(3.0), seed=0))
    assert np.all(drift_field(env, [1.0, 2.0]).values == 0.0)


def test_drift_two_site(two_site_env):
    f = drift_field(two_site_env, [1.0])
    assert np.allclose(f.values, [-3.0, 3.0], rtol=0, atol=0)


def test_drift_mean_zero_many_specs():
    for seed in range(100):
        spec = EnvironmentSpec(d=1 + seed % 3, L=4, distribution=Uniform(8.0), seed=seed)
        env = generate_environment(spec)
        f = drift_field(env, np.arange(1.0, spec.d + 1))
        tol = 1e-10 * spec.d * spec.n_sites * 8.0 * spec.d
        assert abs(f.values.sum()) <= tol


def test_drift_translation_consistency():
    env = generate_environment(EnvironmentSpec(d=2, L=6, distribution=Uniform(4.0), seed=9))
    f = drift_field(env, [1.0, 0.5]).values
    for shift in [(1, 0), (2, 3), (5, 5)]:
        rerooted = drift_field(translate(env, shift), [1.0, 0.5]).values
        assert abs(f[env.site_index(shift)] - rerooted[0]) < 1e-14


def test_drift_rejects_zero_direction(two_site_env):
    with pytest.raises(ConfigurationError, match="xi"):
        drift_field(two_site_env, [0.0])


@pytest.mark.parametrize(
    "kwargs,field",
    [
        (dict(d=0), "d"),
        (dict(d=5), "d"),
        (dict(L=5), "L"),
        (dict(L=0), "L"),
        (dict(distribution=TwoPoint(0.5, 0.5)), "distribution.M"),
        (dict(distribution=TwoPoint(4.0, 1.5)), "distribution.p"),
        (dict(distribution=Constant(0.5)), "distribution.c"),
    ],
)
def test_invalid_specs_name_the_field(kwargs, field):
    base = dict(d=2, L=4, distribution=Uniform(4.0), seed=0)
    base.update(kwargs)
    with pytest.raises(ConfigurationError) as err:
        EnvironmentSpec(**base).validate()
    assert err.value.field == field


def test_parse_distribution_minilanguage():
    assert parse_distribution("constant:2") == Constant(2.0)
    assert parse_distribution("twopoint:4:0.5") == TwoPoint(4.0, 0.5)
    assert parse_distribution("uniform:10") == Uniform(10.0)
    with pytest.raises(ConfigurationError):
        parse_distribution("gauss:1:2")


def test_file_roundtrip(tmp_path):
    spec = EnvironmentSpec(d=2, L=4, distribution=TwoPoint(4.0, 0.25), seed=17)
    env = generate_environment(spec)
    path = tmp_path / "env.rcc1"
    save_environment(env, path)
    raw = path.read_bytes()
    assert raw[:4] == b"RCC1"
    assert raw[4] == 2  # d as u8
    assert len(raw) == len(spec.header_bytes()) + 8 * spec.n_edges
    loaded = load_environment(path)
    assert loaded == env
    sidecar = json.loads((tmp_path / "env.rcc1.json").read_text())
    assert sidecar["d"] == 2 and sidecar["L"] == 4 and sidecar["seed"] == 17
    assert sidecar["distribution"] == "twopoint:4:0.25"
