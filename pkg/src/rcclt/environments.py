"""Random environments on the d-dimensional discrete torus.

Conductances live on undirected nearest-neighbour edges of the torus
(Z/LZ)^d.  Storage is one float per undirected edge, axis-major: slot
``(i, x)`` holds the conductance of the edge {x, x + e_i mod L}, so the
symmetry of the medium holds structurally and the accessor for direction
-e_i at x reads slot ``(i, x - e_i mod L)``.

Directions are indexed j = 0..2d-1 with axis j // 2 and sign +1 for even
j, -1 for odd j; that order is shared with the walk kernels.
"""

import hashlib
import json
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, UsageError
from .rng import PURPOSE_EDGES, uniform_stream

_MAGIC = b"RCC1"
_HEADER = struct.Struct("<4sBIdBddQ")


@dataclass(frozen=True)
class Constant:
    """Degenerate conductance law: every edge equals c."""

    c: float

    tag = 0

    @property
    def ceiling(self):
        return float(self.c)

    @property
    def params(self):
        return (float(self.c), 0.0)

    def validate(self):
        if not (self.c >= 1.0 and np.isfinite(self.c)):
            raise ConfigurationError("distribution.c", "constant value must lie in [1, M]")

    def sample(self, u):
        return np.full(u.shape, float(self.c))

    def inv_mean(self):
        """The annealed constant E[1/w]^-1."""
        return float(self.c)

    def __str__(self):
        return f"constant:{self.c:g}"


@dataclass(frozen=True)
class TwoPoint:
    """Conductance 1 with probability p, else M."""

    M: float
    p: float

    tag = 1

    @property
    def ceiling(self):
        return float(self.M)

    @property
    def params(self):
        return (float(self.M), float(self.p))

    def validate(self):
        if not (self.M > 1.0 and np.isfinite(self.M)):
            raise ConfigurationError("distribution.M", "ellipticity ceiling must be > 1")
        if not (0.0 <= self.p <= 1.0):
            raise ConfigurationError("distribution.p", "probability must lie in [0, 1]")

    def sample(self, u):
        return np.where(u < self.p, 1.0, float(self.M))

    def inv_mean(self):
        return 1.0 / (self.p + (1.0 - self.p) / self.M)

    def __str__(self):
        return f"twopoint:{self.M:g}:{self.p:g}"


@dataclass(frozen=True)
class Uniform:
    """Conductance uniform on [1, M]."""

    M: float

    tag = 2

    @property
    def ceiling(self):
        return float(self.M)

    @property
    def params(self):
        return (float(self.M), 0.0)

    def validate(self):
        if not (self.M > 1.0 and np.isfinite(self.M)):
            raise ConfigurationError("distribution.M", "ellipticity ceiling must be > 1")

    def sample(self, u):
        return 1.0 + (self.M - 1.0) * u

    def inv_mean(self):
        return (self.M - 1.0) / np.log(self.M)

    def __str__(self):
        return f"uniform:{self.M:g}"


_TAGS = {0: Constant, 1: TwoPoint, 2: Uniform}


def parse_distribution(text):
    """Parse the ``constant:c | twopoint:M:p | uniform:M`` minilanguage."""
    parts = text.strip().lower().split(":")
    try:
        if parts[0] == "constant" and len(parts) == 2:
            dist = Constant(float(parts[1]))
        elif parts[0] == "twopoint" and len(parts) == 3:
            dist = TwoPoint(float(parts[1]), float(parts[2]))
        elif parts[0] == "uniform" and len(parts) == 2:
            dist = Uniform(float(parts[1]))
        else:
            raise ValueError
    except ValueError:
        raise ConfigurationError(
            "distribution", f"cannot parse {text!r}; expected constant:c, twopoint:M:p or uniform:M"
        ) from None
    dist.validate()
    return dist


def _dist_from_tag(tag, a, b):
    if tag == 0:
        return Constant(a)
    if tag == 1:
        return TwoPoint(a, b)
    if tag == 2:
        return Uniform(a)
    raise ConfigurationError("distribution.tag", f"unknown tag {tag}")


@dataclass(frozen=True)
class EnvironmentSpec:
    """Everything needed to regenerate an environment bit for bit."""

    d: int
    L: int
    distribution: object
    seed: int

    def validate(self):
        if not (1 <= self.d <= 4):
            raise ConfigurationError("d", "lattice dimension must be in 1..4")
        if self.L < 2 or self.L % 2 != 0:
            raise ConfigurationError("L", "torus side must be an even integer >= 2")
        if not (0 <= self.seed < 2 ** 64):
            raise ConfigurationError("seed", "seed must fit in 64 unsigned bits")
        self.distribution.validate()

    @property
    def n_sites(self):
        return self.L ** self.d

    @property
    def n_edges(self):
        return self.d * self.L ** self.d

    def header_bytes(self):
        a, b = self.distribution.params
        return _HEADER.pack(
            _MAGIC, self.d, self.L, self.distribution.ceiling,
            self.distribution.tag, a, b, self.seed,
        )

    def spec_hash(self):
        return hashlib.sha256(self.header_bytes()).hexdigest()[:16]

    def header_dict(self):
        a, b = self.distribution.params
        return {
            "magic": _MAGIC.decode(),
            "d": self.d,
            "L": self.L,
            "M": self.distribution.ceiling,
            "distribution": str(self.distribution),
            "distribution_tag": self.distribution.tag,
            "distribution_params": [a, b],
            "seed": self.seed,
        }


@dataclass(frozen=True)
class Site:
    """A torus site; coordinates wrap modulo L under translation."""

    coords: tuple

    def shifted(self, z, L):
        return Site(tuple((c + dz) % L for c, dz in zip(self.coords, z)))


@dataclass
class FieldScalar:
    """A scalar field over torus sites in row-major order."""

    values: np.ndarray
    label: str = ""

    def mean(self):
        return float(self.values.mean())


class Environment:
    """An immutable draw of edge conductances plus cached index tables."""

    def __init__(self, spec: EnvironmentSpec, conductances: np.ndarray):
        spec.validate()
        cond = np.ascontiguousarray(conductances, dtype=np.float64)
        if cond.shape != (spec.d, spec.n_sites):
            raise ConfigurationError(
                "conductances", f"expected shape {(spec.d, spec.n_sites)}, got {cond.shape}"
            )
        lo, hi = cond.min(), cond.max()
        if lo < 1.0 or hi > spec.distribution.ceiling * (1 + 1e-15):
            raise ConfigurationError("conductances", f"values [{lo}, {hi}] leave [1, M]")
        self.spec = spec
        self.conductances = cond
        self.conductances.setflags(write=False)

    @property
    def d(self):
        return self.spec.d

    @property
    def L(self):
        return self.spec.L

    @property
    def n_sites(self):
        return self.spec.n_sites

    @cached_property
    def neighbors(self):
        """(2d, n) site indices: neighbors[j, x] = x + z_j with wraparound."""
        d, L = self.d, self.L
        grid = np.arange(self.n_sites, dtype=np.int64).reshape((L,) * d)
        out = np.empty((2 * d, self.n_sites), dtype=np.int64)
        for i in range(d):
            out[2 * i] = np.roll(grid, -1, axis=i).ravel()
            out[2 * i + 1] = np.roll(grid, 1, axis=i).ravel()
        return out

    @cached_property
    def direction_weights(self):
        """(2d, n) jump rates: weights[j, x] = conductance on edge (x, x+z_j)."""
        out = np.empty((2 * self.d, self.n_sites))
        for i in range(self.d):
            out[2 * i] = self.conductances[i]
            out[2 * i + 1] = self.conductances[i][self.neighbors[2 * i + 1]]
        return out

    @cached_property
    def total_rate(self):
        """(n,) total jump rate out of each site."""
        return self.direction_weights.sum(axis=0)

    @cached_property
    def cum_weights(self):
        """(n, 2d) cumulative direction weights, C-contiguous for the kernels."""
        return np.ascontiguousarray(np.cumsum(self.direction_weights, axis=0).T)

    def site_index(self, coords):
        d, L = self.d, self.L
        idx = 0
        for c in coords:
            idx = idx * L + (int(c) % L)
        return idx

    def __eq__(self, other):
        return (
            isinstance(other, Environment)
            and self.spec == other.spec
            and np.array_equal(self.conductances, other.conductances)
        )


def generate_environment(spec: EnvironmentSpec) -> Environment:
    """Draw i.i.d. edge conductances; a pure function of the spec."""
    spec.validate()
    u = uniform_stream(spec.seed, PURPOSE_EDGES, 0, spec.n_edges)
    values = spec.distribution.sample(u).reshape(spec.d, spec.n_sites)
    return Environment(spec, values)


def conductance(env: Environment, x: Site, z) -> float:
    """Jump rate across the edge {x, x+z}, z = +-e_i."""
    zs = tuple(int(v) for v in z)
    axes = [i for i, v in enumerate(zs) if v != 0]
    if len(axes) != 1 or abs(zs[axes[0]]) != 1:
        raise UsageError(f"direction {z} is not a signed unit vector")
    i = axes[0]
    if zs[i] == 1:
        return float(env.conductances[i, env.site_index(x.coords)])
    return float(env.conductances[i, env.site_index(x.shifted(zs, env.L).coords)])


def drift_field(env: Environment, xi) -> FieldScalar:
    """Local drift in direction xi: sum over unit z of w_(x,x+z) (xi . z)."""
    xi = np.asarray(xi, dtype=np.float64)
    if xi.shape != (env.d,) or not np.all(np.isfinite(xi)):
        raise ConfigurationError("xi", f"expected a finite vector of length {env.d}")
    if np.all(xi == 0.0):
        raise ConfigurationError("xi", "direction must not be the zero vector")
    w = env.direction_weights
    values = np.zeros(env.n_sites)
    for i in range(env.d):
        values += xi[i] * (w[2 * i] - w[2 * i + 1])
    return FieldScalar(values, label="drift")


def translate(env: Environment, shift) -> Environment:
    """The environment re-rooted at `shift`: conductance slots pulled back."""
    shift = tuple(int(s) for s in shift)
    if len(shift) != env.d:
        raise UsageError(f"shift must have length {env.d}")
    grid = np.arange(env.n_sites, dtype=np.int64).reshape((env.L,) * env.d)
    perm = np.roll(grid, tuple(-s for s in shift), axis=tuple(range(env.d))).ravel()
    return Environment(env.spec, env.conductances[:, perm])


def save_environment(env: Environment, path):
    """Write the binary RCC1 file plus a JSON sidecar mirroring the header."""
    path = str(path)
    with open(path, "wb") as fh:
        fh.write(env.spec.header_bytes())
        fh.write(env.conductances.astype("<f8").tobytes())
    with open(path + ".json", "w") as fh:
        json.dump(env.spec.header_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_environment(path) -> Environment:
    path = str(path)
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        magic, d, L, M, tag, a, b, seed = _HEADER.unpack(head)
        if magic != _MAGIC:
            raise ConfigurationError("file", f"{path} is not an RCC1 environment file")
        dist = _dist_from_tag(tag, a, b)
        if abs(dist.ceiling - M) > 1e-12 * max(1.0, M):
            raise ConfigurationError("file", "header M disagrees with distribution parameters")
        spec = EnvironmentSpec(d=d, L=L, distribution=dist, seed=seed)
        data = np.frombuffer(fh.read(8 * spec.n_edges), dtype="<f8").astype(np.float64)
    return Environment(spec, data.reshape(spec.d, spec.n_sites))
