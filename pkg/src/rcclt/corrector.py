"""Regularized corrector solves and the stationary fields built from them.

The corrector phi solves (mu - L^w) phi = drift on the torus, where L^w is
the conductance Laplacian.  For mu > 0 the system is symmetric positive
definite and is solved matrix-free by Jacobi-preconditioned conjugate
gradients.  The derived fields (the quadratic-variation density v, the
energy density w = mu phi^2 + v, and the jump-dominating field d) are
plain pointwise formulas in phi and the edge weights.
"""

from dataclasses import dataclass

import numpy as np

from .environments import Environment, FieldScalar
from .errors import ConvergenceError, UsageError


@dataclass
class CorrectorField:
    """Solved corrector with enough metadata to audit the solve."""

    env_ref: str
    mu: float
    xi: tuple
    phi: np.ndarray
    residual_norm: float
    iterations: int

    def matches(self, env: Environment, xi=None):
        ok = self.env_ref == env.spec.spec_hash()
        if xi is not None:
            ok = ok and np.allclose(self.xi, np.asarray(xi, dtype=float), rtol=0, atol=0)
        return ok


@dataclass
class Chi1D:
    """Explicit one-dimensional corrector on a segment, chi[0] pinned to 0."""

    chi: np.ndarray
    inv_mean: float


def apply_generator(env: Environment, f: np.ndarray) -> np.ndarray:
    """L^w f, the conductance Laplacian applied to a site field."""
    w = env.direction_weights
    nbr = env.neighbors
    out = -env.total_rate * f
    for j in range(2 * env.d):
        out += w[j] * f[nbr[j]]
    return out


def solve_corrector(env: Environment, mu, xi, tol=1e-10, max_iter=None) -> CorrectorField:
    """Solve (mu - L^w) phi = drift by preconditioned conjugate gradients.

    Convergence is declared on the sup norm of the true residual,
    relative to max(1, ||drift||_inf).  Single-threaded and deterministic.
    """
    from .environments import drift_field

    if mu <= 0:
        raise UsageError("mu must be positive")
    if max_iter is None:
        max_iter = 20 * env.n_sites
    b = drift_field(env, xi).values
    target = tol * max(1.0, np.abs(b).max())

    def matvec(x):
        return mu * x - apply_generator(env, x)

    inv_diag = 1.0 / (mu + env.total_rate)
    x = np.zeros_like(b)
    r = b.copy()
    it = 0
    res = np.abs(r).max()
    if res > target:
        z = inv_diag * r
        p = z.copy()
        rz = float(r @ z)
        for it in range(1, max_iter + 1):
            ap = matvec(p)
            alpha = rz / float(p @ ap)
            x += alpha * p
            r -= alpha * ap
            res = np.abs(r).max()
            if res <= target:
                break
            z = inv_diag * r
            rz_new = float(r @ z)
            p = z + (rz_new / rz) * p
            rz = rz_new
        else:
            raise ConvergenceError(
                f"corrector solve did not reach tol={tol:g} (env {env.spec.spec_hash()})",
                residual=res, iterations=max_iter,
            )
        # report the re-evaluated residual, not the recurrence one
        res = np.abs(matvec(x) - b).max()
    return CorrectorField(
        env_ref=env.spec.spec_hash(),
        mu=float(mu),
        xi=tuple(float(v) for v in np.asarray(xi, dtype=float)),
        phi=x,
        residual_norm=float(res),
        iterations=it,
    )


def _check_pair(env: Environment, corr: CorrectorField):
    if not corr.matches(env):
        raise UsageError("corrector was solved on a different environment")


def v_mu_field(env: Environment, corr: CorrectorField) -> FieldScalar:
    """Quadratic-variation density: sum_z w_(x,x+z) (xi.z + grad_z phi)^2."""
    _check_pair(env, corr)
    phi = corr.phi
    w = env.direction_weights
    nbr = env.neighbors
    xi = np.asarray(corr.xi)
    values = np.zeros(env.n_sites)
    for j in range(2 * env.d):
        sign = 1.0 if j % 2 == 0 else -1.0
        inc = sign * xi[j // 2] + phi[nbr[j]] - phi
        values += w[j] * inc * inc
    return FieldScalar(values, label="v_mu")


def sigma_mu_sq(env: Environment, corr: CorrectorField) -> float:
    """Torus-spatial average of the quadratic-variation density."""
    return v_mu_field(env, corr).mean()


def w_mu_field(env: Environment, corr: CorrectorField) -> FieldScalar:
    """Energy density mu phi^2 + v, the spatially decorrelating field."""
    v = v_mu_field(env, corr)
    return FieldScalar(corr.mu * corr.phi ** 2 + v.values, label="w_mu")


def d_mu_field(env: Environment, corr: CorrectorField) -> FieldScalar:
    """Jump-dominating field: |xi| plus the sum of |grad phi| over directions."""
    _check_pair(env, corr)
    phi = corr.phi
    nbr = env.neighbors
    values = np.full(env.n_sites, float(np.linalg.norm(corr.xi)))
    for j in range(2 * env.d):
        values += np.abs(phi[nbr[j]] - phi)
    return FieldScalar(values, label="d_mu")


def chi_1d(conductances, inv_mean) -> Chi1D:
    """One-dimensional corrector via the exact increment recursion.

    ``conductances[k]`` is the edge {k, k+1}; the result has length n+1
    with chi[0] = 0 and chi[k+1] - chi[k] = inv_mean / w_k - 1, which makes
    x + chi(x) harmonic for the conductance Laplacian at interior sites.
    """
    cond = np.asarray(conductances, dtype=np.float64)
    if cond.ndim != 1 or cond.size == 0:
        raise UsageError("need a nonempty 1d conductance sequence")
    chi = np.zeros(cond.size + 1)
    np.cumsum(inv_mean / cond - 1.0, out=chi[1:])
    return Chi1D(chi=chi, inv_mean=float(inv_mean))


def chi_harmonicity_residual(chi: Chi1D, conductances) -> float:
    """Max over interior sites of |L^w (x + chi(x))|; zero up to roundoff."""
    cond = np.asarray(conductances, dtype=np.float64)
    h = np.arange(chi.chi.size) + chi.chi
    res = cond[1:] * (h[2:] - h[1:-1]) + cond[:-1] * (h[:-2] - h[1:-1])
    return float(np.abs(res).max()) if res.size else 0.0


def v_1d(w_right, w_left, inv_mean) -> float:
    """Quadratic-variation density of the 1d harmonic martingale at a site."""
    return float(inv_mean ** 2 * (1.0 / w_right + 1.0 / w_left))
