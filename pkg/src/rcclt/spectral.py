"""Exact finite-dimensional linear algebra on the torus.

The torus orbit of environment translations is the finite analogue of the
environment seen from the walker, and the conductance Laplacian acting on
site fields is its generator.  Everything here is exact up to dense
eigendecomposition: spectral measures of scalar fields, the closed-form
second moment of the martingale remainder, resolvent functionals, heat
semigroup evolution, and the variance-decay experiment built on it.
"""

import dataclasses
from dataclasses import dataclass

import numpy as np

from .corrector import solve_corrector, v_mu_field
from .eigh import symmetric_eigh
from .environments import Environment, EnvironmentSpec, FieldScalar, generate_environment
from .errors import CapacityError, UsageError
from .rng import derive_env_seeds
from .utils import resolve_threads, run_slots

DENSE_BUDGET = 4096


@dataclass
class GeneratorMatrix:
    """Dense generator Q of the walk on one torus environment."""

    env_ref: str
    matrix: np.ndarray

    _eig: tuple = None

    @property
    def dim(self):
        return self.matrix.shape[0]

    def eigensystem(self):
        """Eigenvalues of -Q (ascending, clamped at 0) and eigenvectors."""
        if self._eig is None:
            lam, vec = symmetric_eigh(-self.matrix)
            self._eig = (np.maximum(lam, 0.0), vec)
        return self._eig


@dataclass
class SpectralMeasure:
    """Atoms (lambda_i, w_i) of -Q projected on a field, ascending."""

    lambdas: np.ndarray
    weights: np.ndarray

    def total(self):
        return float(self.weights.sum())


def build_generator(env: Environment) -> GeneratorMatrix:
    """Assemble Q with Q[x, y] = conductance(x, y) and zero row sums."""
    n = env.n_sites
    if n > DENSE_BUDGET:
        raise CapacityError(
            f"torus has {n} sites, above the dense budget {DENSE_BUDGET}; "
            f"use the Monte Carlo path instead"
        )
    q = np.zeros((n, n))
    sites = np.arange(n)
    for i in range(env.d):
        w = env.conductances[i]
        nbr = env.neighbors[2 * i]
        np.add.at(q, (sites, nbr), w)
        np.add.at(q, (nbr, sites), w)
    q[sites, sites] = -q.sum(axis=1)
    return GeneratorMatrix(env_ref=env.spec.spec_hash(), matrix=q)


def spectral_measure(gen: GeneratorMatrix, f: FieldScalar) -> SpectralMeasure:
    """Spectral measure of -Q projected on f.

    Weights are squared projections in the uniform probability inner
    product (1/n) sum g h, so the total mass is the spatial mean of f^2
    and the atom at 0 carries the squared spatial mean.
    """
    values = np.asarray(f.values, dtype=np.float64)
    if values.shape != (gen.dim,):
        raise UsageError(f"field has length {values.shape}, generator dim {gen.dim}")
    lam, vec = gen.eigensystem()
    proj = vec.T @ values
    return SpectralMeasure(lambdas=lam.copy(), weights=proj * proj / gen.dim)


def _remainder_bracket(lam, mu, t):
    """1 - e^(-lt) + mu^2 (e^(-lt) - 1 + lt)/l^2, series-protected near 0."""
    x = lam * t
    out = np.empty_like(lam)
    small = x < 1e-6
    xs = x[small]
    out[small] = (xs - 0.5 * xs * xs) + mu * mu * (0.5 * t * t - lam[small] * t ** 3 / 6.0)
    xl = x[~small]
    out[~small] = 1.0 - np.exp(-xl) + mu * mu * (np.expm1(-xl) + xl) / lam[~small] ** 2
    return out


def remainder_second_moment_exact(sm: SpectralMeasure, mu, t) -> float:
    """Closed-form annealed second moment of the remainder at horizon t."""
    if mu <= 0 or t < 0:
        raise UsageError("need mu > 0 and t >= 0")
    lam = sm.lambdas
    bracket = _remainder_bracket(lam, mu, float(t))
    return float(2.0 * np.sum(sm.weights / (lam + mu) ** 2 * bracket))


def phi_second_moment_exact(sm: SpectralMeasure, mu) -> float:
    """Resolvent functional sum w_i / (lambda_i + mu)^2."""
    if mu <= 0:
        raise UsageError("need mu > 0")
    return float(np.sum(sm.weights / (sm.lambdas + mu) ** 2))


def semigroup_evolve(gen: GeneratorMatrix, f: FieldScalar, t) -> FieldScalar:
    """Heat semigroup e^(tQ) f via the eigendecomposition."""
    if t < 0:
        raise UsageError("need t >= 0")
    values = np.asarray(f.values, dtype=np.float64)
    if values.shape != (gen.dim,):
        raise UsageError(f"field has length {values.shape}, generator dim {gen.dim}")
    lam, vec = gen.eigensystem()
    coef = vec.T @ values
    return FieldScalar(vec @ (np.exp(-lam * t) * coef), label=f"{f.label}_t{t:g}")


@dataclass
class DecayCurve:
    """Ensemble variance of the semigroup-evolved QV density."""

    t_grid: np.ndarray
    var_hat: np.ndarray
    per_env: np.ndarray
    gaps: np.ndarray
    mu: float
    n_env: int
    spec: EnvironmentSpec

    def mean_gap(self):
        return float(self.gaps.mean())

    def knee_time(self):
        """Relaxation time 1/gap, past which exponential decay takes over."""
        return 1.0 / self.mean_gap()

    def fit_window(self):
        """Grid points before the spectral-gap knee (at least three)."""
        knee = self.knee_time()
        mask = self.t_grid <= knee
        if mask.sum() < 3:
            mask = np.zeros_like(mask)
            mask[:3] = True
        return mask

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write("t,var_hat,n_env,mu\n")
            for i in range(self.t_grid.size):
                fh.write(f"{self.t_grid[i]!r},{self.var_hat[i]!r},{self.n_env},{self.mu!r}\n")

    def check(self, slope_lo=-1.0, slope_hi=-0.3):
        """Per-environment monotonicity plus the polynomial-window slope."""
        from .experiments import rate_fit

        scale = np.abs(self.per_env).max(initial=0.0)
        mono = bool(np.all(np.diff(self.per_env, axis=1) <= 1e-12 * max(scale, 1e-300)))
        results = [("decay-monotone", mono, f"{self.n_env} per-environment curves")]
        mask = self.fit_window()
        pts = [(t, v) for t, v in zip(self.t_grid[mask], self.var_hat[mask]) if t > 0 and v > 0]
        if len(pts) < 2:
            pts = [(t, v) for t, v in zip(self.t_grid, self.var_hat) if t > 0 and v > 0]
        fit = rate_fit(pts)
        ok = slope_lo <= fit.slope <= slope_hi
        results.append(("decay-slope", ok,
                        f"slope {fit.slope:.3f} on t<= {self.knee_time():.1f} "
                        f"(gap {self.mean_gap():.4f}; needs [{slope_lo:g}, {slope_hi:g}])"))
        return results


def variance_decay_curve(spec: EnvironmentSpec, n_env, mu, t_grid, xi=None,
                         threads=None, tol=1e-10) -> DecayCurve:
    """Spatial variance of e^(tQ) v-bar, averaged over fresh environments.

    Per environment the curve is exactly non-increasing in t (semigroup
    contraction on centered fields); the ensemble curve is the mean.
    """
    t_grid = np.asarray(sorted(float(t) for t in t_grid))
    if t_grid.size == 0 or t_grid[0] < 0:
        raise UsageError("need a nonempty grid of t >= 0")
    if xi is None:
        xi = np.eye(spec.d)[0]
    seeds = derive_env_seeds(spec.seed, n_env)
    per_env = np.empty((n_env, t_grid.size))
    gaps = np.empty(n_env)

    def task(k):
        env_spec = dataclasses.replace(spec, seed=int(seeds[k]))
        env = generate_environment(env_spec)
        gen = build_generator(env)
        corr = solve_corrector(env, mu, xi, tol=tol)
        v = v_mu_field(env, corr).values
        vbar = FieldScalar(v - v.mean(), label="v_centered")
        lam, _ = gen.eigensystem()
        gaps[k] = lam[1] if gen.dim > 1 else 0.0
        for j, t in enumerate(t_grid):
            evolved = semigroup_evolve(gen, vbar, t).values
            per_env[k, j] = float(np.mean(evolved * evolved))

    run_slots(n_env, task, resolve_threads(threads))
    return DecayCurve(
        t_grid=t_grid, var_hat=per_env.mean(axis=0), per_env=per_env,
        gaps=gaps, mu=float(mu), n_env=int(n_env), spec=spec,
    )
