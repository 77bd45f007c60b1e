"""Continuous-time walk simulation and the martingale decomposition.

Walks carry unwrapped integer coordinates while reading the L-periodic
conductances, so the displacement observable is exact and the corrector
stays finite-dimensional.  Each walk owns one counter-based stream keyed
by (environment seed, walk index); draws interleave holding times and
direction choices on that stream, which makes every sample reproducible
at any parallelism level.

The fused numba kernel accumulates terminal statistics only; the
python-level `simulate_trajectory` replays the identical stream and keeps
the full path, and `accumulate_martingale` reduces a stored trajectory.
The two routes are cross-checked in the tests.
"""

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .corrector import Chi1D, CorrectorField, d_mu_field, sigma_mu_sq, solve_corrector, v_1d, v_mu_field
from .environments import Environment, EnvironmentSpec, generate_environment
from .errors import SegmentRangeError, UsageError
from .rng import PURPOSE_WALK, U64, derive_env_seeds, philox_block, philox_blocks, word_to_uniform
from .utils import resolve_threads, run_slots

_WALK_BLOCK = 2048  # walks per kernel task; scheduling only, never results


@dataclass
class Trajectory:
    """Full path of one walk: jump instants and unwrapped sites visited."""

    jump_times: np.ndarray
    sites_unwrapped: np.ndarray
    horizon: float
    start_site: int = 0

    @property
    def n_jumps(self):
        return len(self.jump_times)


@dataclass
class MartingaleSample:
    """Terminal statistics of one walk under the decomposition."""

    xdotxi: float
    m: float
    r: float
    qv: float
    j4: float
    jumps: int


@dataclass
class McConfig:
    """Monte Carlo layout over (environment, walk) pairs."""

    n_env: int
    n_walks_per_env: int
    horizon: float
    mu: float = None
    master_seed: int = 0
    stationary_start: bool = False

    def resolved_mu(self):
        if self.mu is not None:
            return float(self.mu)
        if self.horizon <= 0:
            raise UsageError("mu must be given explicitly when horizon is 0")
        return 1.0 / self.horizon

    def validate(self):
        if self.n_env <= 0 or self.n_walks_per_env <= 0:
            raise UsageError("environment and walk counts must be positive")
        if self.horizon < 0:
            raise UsageError("horizon must be nonnegative")
        if self.resolved_mu() <= 0:
            raise UsageError("mu must be positive")


@njit(cache=True, nogil=True, inline="always")
def _draw(blk, pos, b0, b1, b2, b3, lane, k0, k1):
    """Next buffered uniform of the stream; four words per Philox block."""
    if pos == 4:
        b0, b1, b2, b3 = philox_block(blk, lane, U64(0), U64(0), k0, k1)
        blk = blk + U64(1)
        pos = 0
    if pos == 0:
        w = b0
    elif pos == 1:
        w = b1
    elif pos == 2:
        w = b2
    else:
        w = b3
    return word_to_uniform(w), blk, pos + 1, b0, b1, b2, b3


@njit(cache=True, nogil=True)
def _walk_block(env_seed, walk_lo, walk_hi, horizon, mu, stationary,
                total_rate, cumw, nbr, phi, v, dfield, xi_dir,
                out_xdot, out_m, out_r, out_qv, out_j4, out_jumps):
    """Simulate walks [walk_lo, walk_hi) and fill their output slots.

    Returns the number of jump-domination violations observed (expected 0).
    """
    n_sites = total_rate.shape[0]
    n_dir = xi_dir.shape[0]
    violations = 0
    for wid in range(walk_lo, walk_hi):
        lane = U64(wid)
        blk = U64(0)
        pos = 4
        b0 = U64(0)
        b1 = U64(0)
        b2 = U64(0)
        b3 = U64(0)

        s = 0
        if stationary:
            u, blk, pos, b0, b1, b2, b3 = _draw(blk, pos, b0, b1, b2, b3, lane, env_seed, PURPOSE_WALK)
            s = int(u * n_sites)
            if s >= n_sites:
                s = n_sites - 1
        s_origin = s

        t_now = 0.0
        int_phi = 0.0
        qv = 0.0
        j4 = 0.0
        xdot = 0.0
        jumps = 0
        while True:
            rate = total_rate[s]
            u, blk, pos, b0, b1, b2, b3 = _draw(blk, pos, b0, b1, b2, b3, lane, env_seed, PURPOSE_WALK)
            hold = -math.log(1.0 - u) / rate
            if t_now + hold >= horizon:
                dt = horizon - t_now
                int_phi += dt * phi[s]
                qv += dt * v[s]
                break
            int_phi += hold * phi[s]
            qv += hold * v[s]
            t_now += hold
            u, blk, pos, b0, b1, b2, b3 = _draw(blk, pos, b0, b1, b2, b3, lane, env_seed, PURPOSE_WALK)
            target = u * rate
            j = 0
            while j < n_dir - 1 and cumw[s, j] < target:
                j += 1
            s_next = nbr[j, s]
            d_m = xi_dir[j] + phi[s_next] - phi[s]
            if abs(d_m) > dfield[s] * (1.0 + 1e-12):
                violations += 1
            j4 += d_m * d_m * d_m * d_m
            xdot += xi_dir[j]
            jumps += 1
            s = s_next
        m = xdot + phi[s] - phi[s_origin] - mu * int_phi
        out_xdot[wid] = xdot
        out_m[wid] = m
        out_r[wid] = xdot - m
        out_qv[wid] = qv
        out_j4[wid] = j4
        out_jumps[wid] = jumps
    return violations


class _StreamReplay:
    """Python mirror of the kernel's buffered stream, draw for draw."""

    def __init__(self, key0, key1, lane):
        self.key0, self.key1, self.lane = U64(key0), U64(key1), U64(lane)
        self.blk = 0
        self.buf = []

    def next(self):
        if not self.buf:
            words = philox_blocks(U64(self.blk), self.lane, U64(0), U64(0), self.key0, self.key1)
            self.buf = [int(words[0]), int(words[1]), int(words[2]), int(words[3])]
            self.blk += 1
        return float(self.buf.pop(0) >> 11) * 2.0 ** -53


def walk_stream(env_seed, walk_index):
    return _StreamReplay(env_seed, PURPOSE_WALK, walk_index)


def simulate_trajectory(env: Environment, horizon, stream, stationary_start=False) -> Trajectory:
    """Simulate one walk, keeping the full path.

    Consumes the stream exactly like the fused kernel: an optional start
    draw, then alternating holding-time and direction draws.
    """
    if horizon < 0:
        raise UsageError("horizon must be nonnegative")
    d, L, n = env.d, env.L, env.n_sites
    total_rate = env.total_rate
    cumw = env.cum_weights
    nbr = env.neighbors
    s = 0
    if stationary_start:
        s = min(int(stream.next() * n), n - 1)
    start = s
    coords = np.zeros(d, dtype=np.int64)
    times = []
    sites = [coords.copy()]
    t_now = 0.0
    while True:
        hold = -math.log(1.0 - stream.next()) / total_rate[s]
        if t_now + hold >= horizon:
            break
        t_now += hold
        target = stream.next() * total_rate[s]
        j = 0
        while j < 2 * d - 1 and cumw[s, j] < target:
            j += 1
        coords[j // 2] += 1 if j % 2 == 0 else -1
        s = nbr[j, s]
        times.append(t_now)
        sites.append(coords.copy())
    return Trajectory(
        jump_times=np.asarray(times),
        sites_unwrapped=np.asarray(sites, dtype=np.int64).reshape(len(sites), d),
        horizon=float(horizon),
        start_site=start,
    )


def accumulate_martingale(env: Environment, corr: CorrectorField, traj: Trajectory,
                          mu, xi) -> MartingaleSample:
    """Reduce a stored trajectory to its martingale statistics."""
    xi = np.asarray(xi, dtype=np.float64)
    if not corr.matches(env, xi) or abs(corr.mu - mu) > 0:
        raise UsageError("corrector does not match (env, mu, xi)")
    L = env.L
    coords = traj.sites_unwrapped
    base = np.asarray(np.unravel_index(traj.start_site, (L,) * env.d), dtype=np.int64)
    wrapped = np.zeros(coords.shape[0], dtype=np.int64)
    for a in range(env.d):
        wrapped = wrapped * L + ((coords[:, a] + base[a]) % L)
    phi = corr.phi
    v = v_mu_field(env, corr).values
    dfield = d_mu_field(env, corr).values
    bounds = np.concatenate(([0.0], traj.jump_times, [traj.horizon]))
    holds = np.diff(bounds)
    int_phi = float(holds @ phi[wrapped])
    qv = float(holds @ v[wrapped])
    xdot = float(xi @ (coords[-1] - coords[0]))
    if traj.n_jumps:
        dxi = (coords[1:] - coords[:-1]) @ xi
        dm = dxi + phi[wrapped[1:]] - phi[wrapped[:-1]]
        if np.any(np.abs(dm) > dfield[wrapped[:-1]] * (1.0 + 1e-12)):
            raise UsageError("jump increment exceeded the dominating field")
        j4 = float(np.sum(dm ** 4))
    else:
        j4 = 0.0
    m = xdot + float(phi[wrapped[-1]] - phi[wrapped[0]]) - mu * int_phi
    return MartingaleSample(
        xdotxi=xdot, m=m, r=xdot - m, qv=qv, j4=j4, jumps=traj.n_jumps,
    )


def simulate_trajectory_1d(conductances, horizon, stream) -> Trajectory:
    """Walk on a 1d segment of Z; edge k joins sites k-K and k-K+1.

    Raises SegmentRangeError when the walk reaches the segment boundary,
    where one of the two incident edges is no longer available.
    """
    cond = np.asarray(conductances, dtype=np.float64)
    if cond.size % 2 != 0:
        raise UsageError("segment must contain an even number of edges")
    half = cond.size // 2
    pos = 0
    times = []
    sites = [0]
    t_now = 0.0
    while True:
        if abs(pos) >= half:
            raise SegmentRangeError(half)
        w_right = cond[pos + half]
        w_left = cond[pos + half - 1]
        rate = w_right + w_left
        hold = -math.log(1.0 - stream.next()) / rate
        if t_now + hold >= horizon:
            break
        t_now += hold
        pos += 1 if stream.next() * rate < w_right else -1
        times.append(t_now)
        sites.append(pos)
    return Trajectory(
        jump_times=np.asarray(times),
        sites_unwrapped=np.asarray(sites, dtype=np.int64).reshape(len(sites), 1),
        horizon=float(horizon),
    )


def accumulate_martingale_1d(conductances, chi: Chi1D, traj: Trajectory) -> MartingaleSample:
    """Martingale statistics of a 1d walk under the explicit corrector.

    The corrector is re-anchored to vanish at the walk origin (it is a
    cumulative sum pinned at the segment's left end), which changes none
    of its increments.
    """
    cond = np.asarray(conductances, dtype=np.float64)
    half = cond.size // 2
    if chi.chi.size != cond.size + 1:
        raise UsageError("chi segment does not match the conductance segment")
    pos = traj.sites_unwrapped[:, 0]
    if np.any(np.abs(pos) >= half):
        raise SegmentRangeError(half)
    anchored = chi.chi - chi.chi[half]
    harm = pos + anchored[pos + half]
    v_site = v_1d_values(cond, chi.inv_mean)[pos + half]
    bounds = np.concatenate(([0.0], traj.jump_times, [traj.horizon]))
    holds = np.diff(bounds)
    qv = float(holds @ v_site)
    if traj.n_jumps:
        dm = np.diff(harm)
        j4 = float(np.sum(dm ** 4))
    else:
        j4 = 0.0
    x_end = float(pos[-1])
    m = float(harm[-1])
    return MartingaleSample(
        xdotxi=x_end, m=m, r=x_end - m, qv=qv, j4=j4, jumps=traj.n_jumps,
    )


def v_1d_values(conductances, inv_mean):
    """Site values of the 1d quadratic-variation density on the segment."""
    cond = np.asarray(conductances, dtype=np.float64)
    half = cond.size // 2
    sites = np.arange(-half, half + 1)
    out = np.full(sites.size, np.nan)
    inner = (sites > -half) & (sites < half)
    idx = sites[inner] + half
    out[inner] = inv_mean ** 2 * (1.0 / cond[idx] + 1.0 / cond[idx - 1])
    return out


def chi_segment_half_width(M, horizon):
    """Default segment half-width for 1d walks up to the given horizon."""
    return int(math.ceil(8.0 * math.sqrt(2.0 * M * max(horizon, 1.0))))


@dataclass
class McResult:
    """Samples of one Monte Carlo run, slot-ordered by (environment, walk)."""

    config: McConfig
    base_spec: EnvironmentSpec
    xi: tuple
    env_seeds: np.ndarray
    sigma_mu_sq: np.ndarray
    env_index: np.ndarray
    walk_index: np.ndarray
    xdotxi: np.ndarray
    m: np.ndarray
    r: np.ndarray
    qv: np.ndarray
    j4: np.ndarray
    jumps: np.ndarray
    violations: int
    corrector_iterations: np.ndarray
    corrector_residuals: np.ndarray

    @property
    def n_samples(self):
        return self.xdotxi.size

    def pooled_sigma_sq(self):
        return float(self.sigma_mu_sq.mean())

    def total_jumps(self):
        return int(self.jumps.sum())

    def write_csv(self, path):
        mu = self.config.resolved_mu()
        t = self.config.horizon
        with open(path, "w") as fh:
            fh.write("env_seed,walk_index,t,mu,xdotxi,m,r,qv,j4,jumps\n")
            for i in range(self.n_samples):
                fh.write(
                    f"{int(self.env_seeds[self.env_index[i]])},{self.walk_index[i]},"
                    f"{t!r},{mu!r},{self.xdotxi[i]!r},{self.m[i]!r},{self.r[i]!r},"
                    f"{self.qv[i]!r},{self.j4[i]!r},{self.jumps[i]}\n"
                )


def _env_dir_xi(env: Environment, xi):
    out = np.empty(2 * env.d)
    for j in range(2 * env.d):
        out[j] = xi[j // 2] if j % 2 == 0 else -xi[j // 2]
    return out


def run_monte_carlo(cfg: McConfig, base_spec: EnvironmentSpec, xi=None,
                    threads=None, tol=1e-10) -> McResult:
    """Independent trajectories over fresh environments, fully deterministic.

    Environment seeds derive from the master seed; each environment gets
    its own corrector solve; walks are dispatched in fixed blocks whose
    outputs land in preallocated slots, so any thread count produces
    byte-identical results.
    """
    cfg.validate()
    if xi is None:
        xi = np.eye(base_spec.d)[0]
    xi = np.asarray(xi, dtype=np.float64)
    mu = cfg.resolved_mu()
    threads = resolve_threads(threads)
    n_env, n_walks = cfg.n_env, cfg.n_walks_per_env
    env_seeds = derive_env_seeds(cfg.master_seed, n_env)

    total = n_env * n_walks
    out_xdot = np.empty(total)
    out_m = np.empty(total)
    out_r = np.empty(total)
    out_qv = np.empty(total)
    out_j4 = np.empty(total)
    out_jumps = np.empty(total, dtype=np.int64)
    sigma = np.empty(n_env)
    corr_iters = np.empty(n_env, dtype=np.int64)
    corr_res = np.empty(n_env)

    fields = [None] * n_env

    def prepare(k):
        spec = dataclasses.replace(base_spec, seed=int(env_seeds[k]))
        env = generate_environment(spec)
        corr = solve_corrector(env, mu, xi, tol=tol)
        sigma[k] = sigma_mu_sq(env, corr)
        corr_iters[k] = corr.iterations
        corr_res[k] = corr.residual_norm
        fields[k] = (
            env.total_rate, env.cum_weights, env.neighbors, corr.phi,
            v_mu_field(env, corr).values, d_mu_field(env, corr).values,
            _env_dir_xi(env, xi),
        )

    run_slots(n_env, prepare, threads)

    jobs = []
    for k in range(n_env):
        for lo in range(0, n_walks, _WALK_BLOCK):
            jobs.append((k, lo, min(lo + _WALK_BLOCK, n_walks)))
    violations = np.zeros(len(jobs), dtype=np.int64)

    def walk_job(idx):
        k, lo, hi = jobs[idx]
        rate, cumw, nbr, phi, v, dfield, xi_dir = fields[k]
        base = k * n_walks
        violations[idx] = _walk_block(
            U64(int(env_seeds[k])), lo, hi, float(cfg.horizon), mu,
            cfg.stationary_start, rate, cumw, nbr, phi, v, dfield, xi_dir,
            out_xdot[base:base + n_walks], out_m[base:base + n_walks],
            out_r[base:base + n_walks], out_qv[base:base + n_walks],
            out_j4[base:base + n_walks], out_jumps[base:base + n_walks],
        )

    run_slots(len(jobs), walk_job, threads)

    return McResult(
        config=cfg, base_spec=base_spec, xi=tuple(float(x) for x in xi),
        env_seeds=env_seeds, sigma_mu_sq=sigma,
        env_index=np.repeat(np.arange(n_env, dtype=np.int32), n_walks),
        walk_index=np.tile(np.arange(n_walks, dtype=np.int32), n_env),
        xdotxi=out_xdot, m=out_m, r=out_r, qv=out_qv, j4=out_j4,
        jumps=out_jumps, violations=int(violations.sum()),
        corrector_iterations=corr_iters, corrector_residuals=corr_res,
    )
