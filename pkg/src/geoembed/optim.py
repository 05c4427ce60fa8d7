"""Optimisation kernels: weighted stress majorisation and L-BFGS.

Stress majorisation (SMACOF) alternates a projection step, where each pair
direction ``q_i - q_j`` is rescaled to its target length, with a global
weighted least-squares solve. The global system matrix is the weighted graph
Laplacian of the pair weights, which never changes, so each solve is a
warm-started conjugate gradient run rather than a factorisation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import line_search
from scipy.spatial.distance import cdist

from .errors import SolverError


@dataclass(frozen=True)
class SolverOptions:
    """Stopping rules shared by both solvers.

    ``max_iterations=None`` picks the solver's own default (500 for stress
    majorisation, 200 for L-BFGS).
    """

    max_iterations: int | None = None
    gradient_tolerance: float = 1e-7
    relative_objective_tolerance: float = 1e-9
    memory: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.gradient_tolerance <= 0 or self.relative_objective_tolerance <= 0:
            raise ValueError("tolerances must be positive")
        if self.memory < 1:
            raise ValueError("memory must be at least 1")
        if self.max_iterations is not None and self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")

    def iterations(self, default: int) -> int:
        return default if self.max_iterations is None else self.max_iterations


STRESS_MAX_ITER = 500
QN_MAX_ITER = 200


@dataclass(frozen=True, eq=False)
class StressProblem:
    """Weighted stress ``sum_{i<j} W_ij (|q_i - q_j| - D_ij)^2``.

    Parameters
    ----------
    D : ndarray, shape (N, N)
        Symmetric target distances, zero diagonal, positive elsewhere.
    W : ndarray, shape (N, N), optional
        Pair weights; defaults to ``1 / D**2`` off the diagonal.
    m : int
        Embedding dimension.
    """

    D: np.ndarray
    m: int
    W: np.ndarray = field(default=None)

    def __post_init__(self):
        D = np.asarray(self.D, dtype=np.float64)
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise ValueError("D must be a square matrix")
        n = D.shape[0]
        off = ~np.eye(n, dtype=bool)
        if not np.all(np.isfinite(D)) or np.any(np.diag(D) != 0) or np.any(D[off] <= 0):
            raise ValueError("D needs a zero diagonal and positive finite off-diagonal entries")
        if not np.allclose(D, D.T, rtol=1e-12, atol=0):
            raise ValueError("D must be symmetric")
        if self.m < 1:
            raise ValueError("m must be at least 1")
        W = self.W
        if W is None:
            W = np.zeros_like(D)
            W[off] = 1.0 / D[off] ** 2
        W = np.asarray(W, dtype=np.float64)
        if W.shape != D.shape or not np.all(np.isfinite(W)) or np.any(W < 0):
            raise ValueError("W must be finite, non-negative and shaped like D")
        W = W.copy()
        np.fill_diagonal(W, 0.0)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "W", W)

    @property
    def n(self) -> int:
        return self.D.shape[0]


def pairwise_distances(X: np.ndarray) -> np.ndarray:
    return cdist(X, X)


def _pair_direction(i: int, j: int, n: int, m: int) -> np.ndarray:
    """Deterministic unit vector for a coincident pair, antisymmetric in (i, j)."""
    a, b = (i, j) if i < j else (j, i)
    u = np.random.default_rng(a * n + b).normal(size=m)
    u /= np.linalg.norm(u)
    return u if i < j else -u


def _guttman_rhs(problem: StressProblem, X: np.ndarray, Dx: np.ndarray) -> np.ndarray:
    """``B(X) X``: row i is ``sum_j W_ij D_ij (x_i - x_j) / |x_i - x_j|``."""
    W, D = problem.W, problem.D
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(Dx > 0, W * D / Dx, 0.0)
    out = ratio.sum(axis=1)[:, None] * X - ratio @ X
    # coincident points: any unit direction is a valid subgradient
    ii, jj = np.nonzero((Dx == 0) & (W > 0))
    for i, j in zip(ii, jj):
        out[i] += W[i, j] * D[i, j] * _pair_direction(i, j, problem.n, X.shape[1])
    return out


def stress(problem: StressProblem, X: np.ndarray) -> float:
    Dx = pairwise_distances(X)
    return 0.5 * float(np.sum(problem.W * (Dx - problem.D) ** 2))


def stress_gradient(problem: StressProblem, X: np.ndarray) -> np.ndarray:
    """Gradient of :func:`stress` with respect to ``X``."""
    Dx = pairwise_distances(X)
    W = problem.W
    lap_x = W.sum(axis=1)[:, None] * X - W @ X
    return 2.0 * (lap_x - _guttman_rhs(problem, X, Dx))


def _laplacian_solve(W: np.ndarray, wsum: np.ndarray, B: np.ndarray, X0: np.ndarray,
                     rtol: float = 1e-12, max_iter: int | None = None) -> np.ndarray:
    """Jacobi-preconditioned CG on ``(diag(wsum) - W) X = B``, all columns at once.

    The Laplacian is singular with the constant vector as kernel; ``B`` has
    zero column sums so the system is consistent and CG stays in the range.
    """
    n = B.shape[0]
    max_iter = max_iter or 4 * n
    X = X0 - X0.mean(axis=0)
    inv = 1.0 / np.where(wsum > 0, wsum, 1.0)

    def apply(Y):
        return wsum[:, None] * Y - W @ Y

    R = B - apply(X)
    Z = inv[:, None] * R
    P = Z.copy()
    rz = np.einsum("ij,ij->j", R, Z)
    bnorm = np.linalg.norm(B, axis=0)
    target = rtol * np.where(bnorm > 0, bnorm, 1.0)
    for _ in range(max_iter):
        if np.all(np.linalg.norm(R, axis=0) <= target):
            break
        AP = apply(P)
        pap = np.einsum("ij,ij->j", P, AP)
        alpha = np.where(pap > 0, rz / np.where(pap > 0, pap, 1.0), 0.0)
        X += alpha * P
        R -= alpha * AP
        Z = inv[:, None] * R
        rz_new = np.einsum("ij,ij->j", R, Z)
        beta = np.where(rz > 0, rz_new / np.where(rz > 0, rz, 1.0), 0.0)
        P = Z + beta * P
        rz = rz_new
    return X


@dataclass
class StressResult:
    X: np.ndarray
    stress: float
    iterations: int
    converged: bool
    history: list[float]


def minimize_stress(problem: StressProblem, Q0: np.ndarray,
                    opts: SolverOptions | None = None) -> StressResult:
    """Stress majorisation from ``Q0``; the stress never increases between iterates.

    Raises
    ------
    ValueError
        If ``Q0`` is not ``(N, m)``.
    """
    opts = opts or SolverOptions()
    X = np.array(Q0, dtype=np.float64)
    if X.shape != (problem.n, problem.m):
        raise ValueError(f"Q0 has shape {X.shape}, expected {(problem.n, problem.m)}")
    if not np.all(np.isfinite(X)):
        raise ValueError("Q0 contains non-finite values")
    W = problem.W
    wsum = W.sum(axis=1)
    Dx = pairwise_distances(X)
    value = 0.5 * float(np.sum(W * (Dx - problem.D) ** 2))
    history = [value]
    converged = False
    it = 0
    for it in range(1, opts.iterations(STRESS_MAX_ITER) + 1):
        rhs = _guttman_rhs(problem, X, Dx)
        grad = 2.0 * (wsum[:, None] * X - W @ X - rhs)
        if np.linalg.norm(grad) <= opts.gradient_tolerance:
            converged = True
            it -= 1
            break
        X_new = _laplacian_solve(W, wsum, rhs, X)
        Dx_new = pairwise_distances(X_new)
        new_value = 0.5 * float(np.sum(W * (Dx_new - problem.D) ** 2))
        if not np.isfinite(new_value):
            raise SolverError("stress became non-finite")
        if new_value > value:
            # inexact inner solve; keep the better iterate and stop
            converged = True
            break
        X, Dx = X_new, Dx_new
        done = value - new_value <= opts.relative_objective_tolerance * max(value, 1e-300)
        value = new_value
        history.append(value)
        if done:
            converged = True
            break
    return StressResult(X, value, it, converged, history)


# ----------------------------------------------------------------------
# L-BFGS


@dataclass
class QuasiNewtonResult:
    x: np.ndarray
    fun: float
    grad_norm: float
    iterations: int
    converged: bool
    line_search_failed: bool
    message: str


def quasi_newton_minimize(fun: Callable[[np.ndarray], tuple[float, np.ndarray]],
                          x0: np.ndarray, opts: SolverOptions | None = None) -> QuasiNewtonResult:
    """Limited-memory BFGS with a strong-Wolfe line search.

    Parameters
    ----------
    fun : callable
        Returns ``(f(x), grad f(x))``.
    x0 : ndarray
        Starting point (flattened internally).
    opts : SolverOptions

    Returns
    -------
    QuasiNewtonResult
        ``x`` is the best point seen, so ``fun(x)[0] <= fun(x0)[0]``. A failed
        line search ends the run with ``line_search_failed`` set.
    """
    opts = opts or SolverOptions()
    shape = np.shape(x0)
    x = np.array(x0, dtype=np.float64).ravel()
    cache: dict[bytes, tuple[float, np.ndarray]] = {}

    def evaluate(z):
        key = z.tobytes()
        hit = cache.get(key)
        if hit is None:
            f, g = fun(z.reshape(shape))
            hit = (float(f), np.asarray(g, dtype=np.float64).ravel())
            if len(cache) > 8:
                cache.clear()
            cache[key] = hit
        return hit

    f, g = evaluate(x)
    if not np.isfinite(f):
        raise SolverError("objective is not finite at the starting point")
    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    rho_hist: list[float] = []
    max_iter = opts.iterations(QN_MAX_ITER)
    gnorm = float(np.linalg.norm(g))
    failed = False
    converged = gnorm <= opts.gradient_tolerance
    message = "gradient tolerance reached" if converged else "iteration limit reached"
    it = 0
    while not converged and it < max_iter:
        # two-loop recursion
        q = -g
        alphas = []
        for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
            a = rho * (s @ q)
            alphas.append(a)
            q = q - a * y
        if s_hist:
            q *= (s_hist[-1] @ y_hist[-1]) / (y_hist[-1] @ y_hist[-1])
        else:
            q /= max(gnorm, 1.0)
        for (s, y, rho), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
            b = rho * (y @ q)
            q = q + (a - b) * s
        direction = q
        if direction @ g >= 0:
            # lost descent; restart from steepest descent
            s_hist.clear(), y_hist.clear(), rho_hist.clear()
            direction = -g / max(gnorm, 1.0)

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            step, *_rest, f_new, _, g_new = line_search(
                lambda z: evaluate(z)[0], lambda z: evaluate(z)[1], x, direction,
                gfk=g, old_fval=f, c1=1e-4, c2=0.9, maxiter=30)
        if step is None or f_new is None or not np.isfinite(f_new) or f_new > f:
            failed = True
            message = "line search failed"
            break
        x_new = x + step * direction
        if g_new is None:
            f_new, g_new = evaluate(x_new)
        it += 1
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / sy)
            if len(s_hist) > opts.memory:
                del s_hist[0], y_hist[0], rho_hist[0]
        small_change = f - f_new <= opts.relative_objective_tolerance * max(abs(f), abs(f_new))
        x, f, g = x_new, float(f_new), g_new
        gnorm = float(np.linalg.norm(g))
        if gnorm <= opts.gradient_tolerance:
            converged = True
            message = "gradient tolerance reached"
        elif small_change:
            converged = True
            message = "relative objective change below tolerance"
    if not math.isfinite(f):
        raise SolverError("objective became non-finite")
    return QuasiNewtonResult(x.reshape(shape), f, gnorm, it, converged, failed, message)
