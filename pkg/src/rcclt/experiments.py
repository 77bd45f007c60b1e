"""Experiments composing simulation, correctors and exact spectra.

Each experiment returns a small result object with plot-ready rows, CSV
export, and a `check()` producing (name, passed, detail) triples; the CLI
--check flag and the acceptance suite run the same checks.  Every point
estimate travels with its standard error, and all randomness derives from
the master seed carried by the environment spec.
"""

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .corrector import chi_1d, sigma_mu_sq, solve_corrector, w_mu_field
from .environments import EnvironmentSpec, generate_environment
from .errors import UsageError
from .rng import PURPOSE_CHI, derive_env_seeds, uniform_stream
from .stats import mean_with_stderr, normal_cdf, stderr_mean
from .utils import resolve_threads, run_slots
from .walks import McConfig, run_monte_carlo

# Kolmogorov-distance decay exponents asserted by the bound checks.
KS_RATE_EXPONENT = {1: -0.1, 2: -0.1, 3: -0.2, 4: -0.2}


@dataclass
class RateFit:
    """Ordinary least squares on (log t, log y)."""

    slope: float
    intercept: float
    r2: float


def rate_fit(points) -> RateFit:
    """Fit y = e^intercept * t^slope; exact on exact power laws."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise UsageError("need at least two (t, y) points")
    if np.any(pts <= 0):
        raise UsageError("rate fits need strictly positive t and y")
    lx = np.log(pts[:, 0])
    ly = np.log(pts[:, 1])
    vx = lx - lx.mean()
    slope = float(vx @ (ly - ly.mean()) / (vx @ vx))
    intercept = float(ly.mean() - slope * lx.mean())
    resid = ly - (intercept + slope * lx)
    sstot = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 if sstot == 0.0 else 1.0 - float((resid ** 2).sum()) / sstot
    return RateFit(slope=slope, intercept=intercept, r2=r2)


def ks_distance(samples) -> float:
    """Kolmogorov distance between the sample ECDF and the standard normal."""
    x = np.sort(np.asarray(samples, dtype=np.float64))
    if x.size == 0:
        raise UsageError("need at least one sample")
    n = x.size
    c = normal_cdf(x)
    i = np.arange(1, n + 1, dtype=np.float64)
    return float(max((i / n - c).max(), (c - (i - 1.0) / n).max()))


@dataclass
class VJEstimate:
    """Normalized quadratic-variation fluctuation and fourth-power jump sum."""

    v_hat: float
    v_se: float
    j_hat: float
    j_se: float

    def hh_raw(self):
        """(V + J)^(1/5), the raw martingale Berry-Esseen combination."""
        return (self.v_hat + self.j_hat) ** 0.2

    def hh_raw_se(self):
        s = self.v_hat + self.j_hat
        if s <= 0:
            return 0.0
        return 0.2 * s ** -0.8 * math.hypot(self.v_se, self.j_se)


def estimate_V_J(samples, t, sigma_mu_sq) -> VJEstimate:
    """Estimate the unit-normalized martingale statistics at horizon t.

    `samples` is anything exposing qv and j4 arrays (an McResult) or an
    iterable of MartingaleSample.
    """
    if sigma_mu_sq <= 0:
        raise UsageError("sigma_mu_sq must be positive")
    if t <= 0:
        raise UsageError("horizon must be positive")
    qv = getattr(samples, "qv", None)
    if qv is None:
        qv = np.asarray([s.qv for s in samples])
        j4 = np.asarray([s.j4 for s in samples])
    else:
        j4 = samples.j4
    v_vals = (qv / (sigma_mu_sq * t) - 1.0) ** 2
    j_vals = j4 / (sigma_mu_sq ** 2 * t ** 2)
    v_hat, v_se = mean_with_stderr(v_vals)
    j_hat, j_se = mean_with_stderr(j_vals)
    return VJEstimate(v_hat=v_hat, v_se=v_se, j_hat=j_hat, j_se=j_se)


def _validate_geometric(grid, minimum, name):
    g = [float(x) for x in grid]
    if len(g) < minimum:
        raise UsageError(f"{name} needs at least {minimum} points")
    if any(x <= 0 for x in g):
        raise UsageError(f"{name} must be positive")
    g = sorted(g)
    if len(g) >= 3:
        ratios = [g[i + 1] / g[i] for i in range(len(g) - 1)]
        if max(ratios) / min(ratios) > 1 + 1e-9:
            raise UsageError(f"{name} must be geometrically spaced")
    return g


@dataclass
class CltRow:
    t: float
    mu: float
    n_samples: int
    ks: float
    ks_dkw99: float
    sigma_mu: float
    sigma_mu_se: float
    v_hat: float
    v_hat_se: float
    j_hat: float
    j_hat_se: float
    hh_raw: float
    hh_raw_se: float


@dataclass
class ExperimentReport:
    """Per-horizon Kolmogorov distances with the fitted log-log rate."""

    spec: EnvironmentSpec
    rows: list
    fit: RateFit
    n_env: int
    n_walks: int

    def write_csv(self, path):
        cols = [f.name for f in dataclasses.fields(CltRow)]
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for row in self.rows:
                vals = [getattr(row, c) for c in cols]
                fh.write(",".join(str(v) if isinstance(v, int) else repr(float(v)) for v in vals) + "\n")

    def check(self, slack=1.5, slope_max=-0.1):
        """Upper-bound semantics: the curve must lie below the rate line."""
        rate = KS_RATE_EXPONENT[self.spec.d]
        results = []
        first = self.rows[0]
        ok_bound = True
        detail = []
        for row in self.rows[1:]:
            bound = first.ks * (row.t / first.t) ** rate * slack
            detail.append(f"t={row.t:g}: ks={row.ks:.5f} bound={bound:.5f}")
            ok_bound = ok_bound and row.ks <= bound
        results.append(("ks-bound", ok_bound, "; ".join(detail)))
        results.append(
            ("ks-slope", self.fit.slope <= slope_max,
             f"fitted slope {self.fit.slope:.4f} (needs <= {slope_max:g})")
        )
        return results


def clt_experiment(spec: EnvironmentSpec, t_grid, n_env, n_walks, xi=None,
                   threads=None, tol=1e-10) -> ExperimentReport:
    """Kolmogorov distance of the normalized displacement along a t grid.

    For each horizon, mu = 1/t, fresh correctors are solved per
    environment, and the normalization uses the pooled sigma_mu estimate.
    The same master seed is reused across horizons (common random
    numbers), so rows are positively correlated but marginally exact.
    """
    grid = _validate_geometric(t_grid, 4, "t grid")
    rows = []
    for t in grid:
        cfg = McConfig(
            n_env=n_env, n_walks_per_env=n_walks, horizon=t, mu=1.0 / t,
            master_seed=spec.seed,
        )
        res = run_monte_carlo(cfg, spec, xi=xi, threads=threads, tol=tol)
        sig_sq = res.pooled_sigma_sq()
        sig_sq_se = stderr_mean(res.sigma_mu_sq) if n_env > 1 else 0.0
        normalized = res.xdotxi / math.sqrt(sig_sq * t)
        ks = ks_distance(normalized)
        vj = estimate_V_J(res, t, sig_sq)
        sigma_mu = math.sqrt(sig_sq)
        rows.append(CltRow(
            t=t, mu=1.0 / t, n_samples=res.n_samples, ks=ks,
            ks_dkw99=1.358 / math.sqrt(res.n_samples),
            sigma_mu=sigma_mu,
            sigma_mu_se=0.5 * sig_sq_se / sigma_mu,
            v_hat=vj.v_hat, v_hat_se=vj.v_se,
            j_hat=vj.j_hat, j_hat_se=vj.j_se,
            hh_raw=vj.hh_raw(), hh_raw_se=vj.hh_raw_se(),
        ))
    fit = rate_fit([(row.t, row.ks) for row in rows])
    return ExperimentReport(spec=spec, rows=rows, fit=fit, n_env=n_env, n_walks=n_walks)


@dataclass
class SigmaConvergence:
    """sigma_mu^2 along a mu grid, with the exact 1d limit when known."""

    spec: EnvironmentSpec
    mus: np.ndarray
    sigma_hat_sq: np.ndarray
    stderr: np.ndarray
    sigma_sq_exact: float = None

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write("mu,sigma_mu_sq,stderr,sigma_sq_exact\n")
            exact = "" if self.sigma_sq_exact is None else repr(self.sigma_sq_exact)
            for i in range(self.mus.size):
                fh.write(f"{self.mus[i]!r},{self.sigma_hat_sq[i]!r},{self.stderr[i]!r},{exact}\n")

    def check(self, final_gap=0.05):
        results = []
        if self.sigma_sq_exact is not None:
            gaps = np.abs(self.sigma_hat_sq - self.sigma_sq_exact)
            results.append(
                ("sigma-gaps-decreasing", bool(np.all(np.diff(gaps) < 0)),
                 "|sigma_mu^2 - sigma^2| = " + ", ".join(f"{g:.5f}" for g in gaps))
            )
            results.append(
                ("sigma-final-gap", gaps[-1] <= final_gap,
                 f"final gap {gaps[-1]:.5f} (needs <= {final_gap:g})")
            )
        else:
            diffs = np.abs(np.diff(self.sigma_hat_sq))
            results.append(
                ("sigma-diffs-decreasing", bool(np.all(np.diff(diffs) < 0)),
                 "successive |differences| = " + ", ".join(f"{g:.5f}" for g in diffs))
            )
        return results


def sigma_convergence_experiment(spec: EnvironmentSpec, mu_grid, n_env,
                                 xi=None, threads=None, tol=1e-10) -> SigmaConvergence:
    """Ensemble averages of sigma_mu^2 along a decreasing mu grid."""
    mus = sorted((float(m) for m in mu_grid), reverse=True)
    if len(mus) < 2 or mus[-1] <= 0:
        raise UsageError("need at least two positive mu values")
    if xi is None:
        xi = np.eye(spec.d)[0]
    seeds = derive_env_seeds(spec.seed, n_env)
    values = np.empty((len(mus), n_env))

    def task(k):
        env = generate_environment(dataclasses.replace(spec, seed=int(seeds[k])))
        for i, mu in enumerate(mus):
            corr = solve_corrector(env, mu, xi, tol=tol)
            values[i, k] = sigma_mu_sq(env, corr)

    run_slots(n_env, task, resolve_threads(threads))
    exact = None
    if spec.d == 1 and abs(float(np.linalg.norm(xi)) - 1.0) < 1e-12:
        exact = 2.0 * spec.distribution.inv_mean()
    return SigmaConvergence(
        spec=spec, mus=np.asarray(mus), sigma_hat_sq=values.mean(axis=1),
        stderr=np.array([stderr_mean(values[i]) for i in range(len(mus))]) if n_env > 1
        else np.zeros(len(mus)),
        sigma_sq_exact=exact,
    )


@dataclass
class BoxVariance:
    """Mean-square box averages of the centered energy density."""

    spec: EnvironmentSpec
    mu: float
    n_env: int
    ns: np.ndarray
    e_hat: np.ndarray
    stderr: np.ndarray

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write("n,e_hat,stderr,n_env,mu\n")
            for i in range(self.ns.size):
                fh.write(f"{int(self.ns[i])},{self.e_hat[i]!r},{self.stderr[i]!r},"
                         f"{self.n_env},{self.mu!r}\n")

    def check(self, band_width=0.6):
        target = 1.0 - self.spec.d
        lo, hi = target - band_width, target + band_width
        if self.spec.d == 2:
            lo, hi = -1.6, -0.6
        fit = rate_fit([(float(n), float(e)) for n, e in zip(self.ns, self.e_hat) if n > 0])
        ok = lo <= fit.slope <= hi
        return [("boxvar-slope", ok, f"fitted slope {fit.slope:.3f} (needs [{lo:g}, {hi:g}])")]


def _box_mean_square(field, L, d, n):
    """Mean over roots of the squared B_n box average, on the torus."""
    grid = field.reshape((L,) * d)
    acc = grid
    for axis in range(d):
        rolled = acc.copy()
        for k in range(1, n + 1):
            rolled = rolled + np.roll(acc, -k, axis=axis) + np.roll(acc, k, axis=axis)
        acc = rolled
    avg = acc.ravel() / (2 * n + 1) ** d
    return float(np.mean(avg * avg))


def spatial_average_variance(spec: EnvironmentSpec, n_env, mu, n_grid,
                             xi=None, threads=None, tol=1e-10) -> BoxVariance:
    """Variance scaling of box averages of the centered energy density."""
    ns = sorted(int(n) for n in n_grid)
    if ns and (2 * ns[-1] + 1 > spec.L):
        raise UsageError(f"box of size n={ns[-1]} does not fit in the torus (2n+1 <= L)")
    if any(n < 0 for n in ns):
        raise UsageError("box sizes must be nonnegative")
    if xi is None:
        xi = np.eye(spec.d)[0]
    seeds = derive_env_seeds(spec.seed, n_env)
    w_fields = np.empty((n_env, spec.n_sites))

    def task(k):
        env = generate_environment(dataclasses.replace(spec, seed=int(seeds[k])))
        corr = solve_corrector(env, mu, xi, tol=tol)
        w_fields[k] = w_mu_field(env, corr).values

    run_slots(n_env, task, resolve_threads(threads))
    centered = w_fields - w_fields.mean()
    e_vals = np.empty((len(ns), n_env))
    for i, n in enumerate(ns):
        for k in range(n_env):
            e_vals[i, k] = _box_mean_square(centered[k], spec.L, spec.d, n)
    return BoxVariance(
        spec=spec, mu=float(mu), n_env=n_env, ns=np.asarray(ns),
        e_hat=e_vals.mean(axis=1),
        stderr=np.array([stderr_mean(e_vals[i]) for i in range(len(ns))]) if n_env > 1
        else np.zeros(len(ns)),
    )


@dataclass
class PhiMoments:
    """Ensemble-and-space averages of phi^p along a mu grid."""

    spec: EnvironmentSpec
    p: int
    mus: np.ndarray
    moments: np.ndarray
    stderr: np.ndarray

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write("mu,phi_moment,stderr,p\n")
            for i in range(self.mus.size):
                fh.write(f"{self.mus[i]!r},{self.moments[i]!r},{self.stderr[i]!r},{self.p}\n")

    def check(self, max_ratio=3.0):
        ratios = self.moments[1:] / self.moments[:-1]
        ok = bool(np.all(ratios <= max_ratio))
        return [("phi-moment-ratios", ok,
                 "successive ratios " + ", ".join(f"{r:.3f}" for r in ratios)
                 + f" (needs <= {max_ratio:g})")]


def phi_moment_experiment(spec: EnvironmentSpec, mu_grid, p=4, n_env=32,
                          xi=None, threads=None, tol=1e-10) -> PhiMoments:
    """Boundedness probe for E[phi_mu^p] along a decreasing mu grid."""
    if p <= 0 or p % 2 != 0:
        raise UsageError("p must be a positive even integer")
    mus = sorted((float(m) for m in mu_grid), reverse=True)
    if not mus or mus[-1] <= 0:
        raise UsageError("mu grid must be positive")
    if xi is None:
        xi = np.eye(spec.d)[0]
    seeds = derive_env_seeds(spec.seed, n_env)
    values = np.empty((len(mus), n_env))

    def task(k):
        env = generate_environment(dataclasses.replace(spec, seed=int(seeds[k])))
        for i, mu in enumerate(mus):
            corr = solve_corrector(env, mu, xi, tol=tol)
            values[i, k] = float(np.mean(corr.phi ** p))

    run_slots(n_env, task, resolve_threads(threads))
    return PhiMoments(
        spec=spec, p=p, mus=np.asarray(mus), moments=values.mean(axis=1),
        stderr=np.array([stderr_mean(values[i]) for i in range(len(mus))]) if n_env > 1
        else np.zeros(len(mus)),
    )


@dataclass
class ChiTail:
    """Empirical exceedance of the 1d corrector over n^(1/2+eps)."""

    distribution: object
    eps: float
    n_paths: int
    ns: np.ndarray
    thresholds: np.ndarray
    exceed_rate: np.ndarray
    stderr: np.ndarray

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write("n,threshold,exceed_rate,stderr,n_paths\n")
            for i in range(self.ns.size):
                fh.write(f"{int(self.ns[i])},{self.thresholds[i]!r},"
                         f"{self.exceed_rate[i]!r},{self.stderr[i]!r},{self.n_paths}\n")

    def check(self, first_max=0.02, last_max=0.005):
        results = [
            ("chi-tail-all", bool(np.all(self.exceed_rate <= first_max)),
             "rates " + ", ".join(f"{r:.4f}" for r in self.exceed_rate)
             + f" (needs <= {first_max:g})"),
            ("chi-tail-final", self.exceed_rate[-1] <= last_max,
             f"final rate {self.exceed_rate[-1]:.4f} (needs <= {last_max:g})"),
        ]
        return results


def check_mc_result(res, rel_tol=1e-9) -> list:
    """Identity and consistency checks on one Monte Carlo run.

    Covers the decomposition identity, jump domination, the martingale
    mean, the quadratic-variation isometry, and (for a single environment
    within the dense budget) the exact spectral value of E[r^2].
    """
    from .environments import drift_field
    from .spectral import DENSE_BUDGET, build_generator, remainder_second_moment_exact, spectral_measure

    results = []
    scale = np.maximum(np.abs(res.xdotxi), 1.0)
    gap = np.abs(res.xdotxi - (res.m + res.r)) / scale
    results.append(("decomposition-identity", bool(np.all(gap <= rel_tol)),
                    f"max relative gap {gap.max():.2e}"))
    results.append(("jump-domination", res.violations == 0,
                    f"{res.violations} violations over {res.total_jumps()} jumps"))
    m_mean, m_se = mean_with_stderr(res.m)
    results.append(("martingale-mean", abs(m_mean) <= 3 * m_se,
                    f"mean(m) = {m_mean:.5f} +- {m_se:.5f}"))
    diff = res.m ** 2 - res.qv
    d_mean, d_se = mean_with_stderr(diff)
    results.append(("qv-isometry", abs(d_mean) <= 3 * d_se,
                    f"mean(m^2 - qv) = {d_mean:.5f} +- {d_se:.5f}"))
    if res.config.n_env == 1 and res.base_spec.n_sites <= DENSE_BUDGET:
        if not res.config.stationary_start:
            results.append(("remainder-exact", False,
                            "spectral cross-check needs --stationary-start"))
        else:
            spec = dataclasses.replace(res.base_spec, seed=int(res.env_seeds[0]))
            env = generate_environment(spec)
            sm = spectral_measure(build_generator(env), drift_field(env, np.asarray(res.xi)))
            exact = remainder_second_moment_exact(sm, res.config.resolved_mu(), res.config.horizon)
            r2_mean, r2_se = mean_with_stderr(res.r ** 2)
            results.append(("remainder-exact", abs(r2_mean - exact) <= 3 * r2_se,
                            f"mc {r2_mean:.5f} +- {r2_se:.5f} vs exact {exact:.5f}"))
    return results


def chi_tail_experiment(distribution, n_grid, eps, n_paths=10_000,
                        master_seed=0, chunk=512) -> ChiTail:
    """Tail frequencies of |chi(n)| over fresh i.i.d. conductance paths."""
    if not (0.0 < eps < 0.5):
        raise UsageError("eps must lie in (0, 1/2)")
    ns = sorted(int(n) for n in n_grid)
    if not ns or ns[0] <= 0:
        raise UsageError("n grid must be positive")
    inv_mean = distribution.inv_mean()
    n_max = ns[-1]
    thresholds = np.asarray([n ** (0.5 + eps) for n in ns])
    exceed = np.zeros(len(ns), dtype=np.int64)
    for lo in range(0, n_paths, chunk):
        hi = min(lo + chunk, n_paths)
        for path in range(lo, hi):
            u = uniform_stream(master_seed, PURPOSE_CHI, path, n_max)
            chi = chi_1d(distribution.sample(u), inv_mean).chi
            for i, n in enumerate(ns):
                if abs(chi[n]) >= thresholds[i]:
                    exceed[i] += 1
    rate = exceed / n_paths
    return ChiTail(
        distribution=distribution, eps=float(eps), n_paths=int(n_paths),
        ns=np.asarray(ns), thresholds=thresholds, exceed_rate=rate,
        stderr=np.sqrt(np.maximum(rate * (1 - rate), 0.0) / n_paths),
    )
