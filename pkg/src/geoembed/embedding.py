"""Geodesic embedding of the saddle vertices.

Each saddle ``k`` gets a vector ``(q_k, s_k, t_k)``: ``q_k`` in R^m from a
weighted-stress Euclidean embedding, and one ``(s, t)`` coordinate pair per
cascade round. The embedding distance

    f(P_i, P_j) = |q_i - q_j| - |s_i - s_j|^2 + |t_i - t_j|^2

is not a metric. The squared terms let each round add or subtract a
pairwise correction to the residual left by the rounds before it.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.spatial.distance import cdist

from .geodesic import distance_matrix
from .mesh import Mesh, VertexClassification
from .optim import (SolverOptions, StressProblem, minimize_stress, quasi_newton_minimize)

log = logging.getLogger(__name__)

MAX_LANDMARKS = 500
INIT_JITTER = 1e-6
CASCADE_INIT = 1e-3
WEIGHT_FLOOR = 1e-6


@dataclass(frozen=True, eq=False)
class Embedding:
    """Per-saddle embedding vectors, one row per saddle in ``saddle_vertices`` order.

    Attributes
    ----------
    euclidean : ndarray, shape (N, m)
    s_block, t_block : ndarray, shape (N, l)
        Column ``p`` holds the coordinates added by cascade round ``p + 1``.
    saddle_vertices : ndarray of int64, shape (N,)
        Mesh vertex of each row.
    objective_history : ndarray, shape (l + 1,)
        Weighted squared error after the Euclidean stage and after each round.
    error_history : ndarray, shape (l + 1,)
        Mean relative error over all saddle pairs at the same checkpoints.
    metadata : dict
        Solver settings and seeds, JSON-serialisable.
    """

    euclidean: np.ndarray
    s_block: np.ndarray
    t_block: np.ndarray
    saddle_vertices: np.ndarray
    objective_history: np.ndarray
    error_history: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.saddle_vertices)
        if self.euclidean.shape[0] != n or self.s_block.shape[0] != n or self.t_block.shape[0] != n:
            raise ValueError("embedding blocks must have one row per saddle")
        if self.s_block.shape != self.t_block.shape:
            raise ValueError("s and t blocks must have the same shape")
        if len(self.objective_history) != self.l + 1 or len(self.error_history) != self.l + 1:
            raise ValueError("histories must have l + 1 entries")

    @property
    def n_saddles(self) -> int:
        return len(self.saddle_vertices)

    @property
    def m(self) -> int:
        return self.euclidean.shape[1]

    @property
    def l(self) -> int:  # noqa: E743
        return self.s_block.shape[1]

    @property
    def dimension(self) -> int:
        return self.m + 2 * self.l

    def point(self, k: int):
        """``(q, s, t)`` of row ``k``."""
        return self.euclidean[k], self.s_block[k], self.t_block[k]

    def distance(self, i: int, j: int) -> float:
        """Embedding distance between rows ``i`` and ``j``."""
        return embed_distance(self.point(i), self.point(j))

    def distance_matrix(self, rounds: int | None = None) -> np.ndarray:
        """All-pairs embedding distances using the first ``rounds`` cascade rounds."""
        p = self.l if rounds is None else rounds
        return _embedding_distances(self.euclidean, self.s_block[:, :p], self.t_block[:, :p])

    def truncated(self, rounds: int) -> "Embedding":
        """The same embedding with only the first ``rounds`` cascade rounds."""
        if not 0 <= rounds <= self.l:
            raise ValueError(f"rounds must lie in [0, {self.l}]")
        return Embedding(self.euclidean, self.s_block[:, :rounds], self.t_block[:, :rounds],
                         self.saddle_vertices, self.objective_history[:rounds + 1],
                         self.error_history[:rounds + 1], dict(self.metadata))


def embed_distance(p_i, p_j) -> float:
    """Embedding distance between two ``(q, s, t)`` points; may be negative."""
    qi, si, ti = (np.asarray(a, dtype=np.float64) for a in p_i)
    qj, sj, tj = (np.asarray(a, dtype=np.float64) for a in p_j)
    if qi.shape != qj.shape or si.shape != sj.shape or ti.shape != tj.shape or si.shape != ti.shape:
        raise ValueError("embedding points have mismatched dimensions")
    dq = qi - qj
    ds = si - sj
    dt = ti - tj
    return math.sqrt(float(dq @ dq)) - float(ds @ ds) + float(dt @ dt)


def _embedding_distances(Q, S, T) -> np.ndarray:
    F = cdist(Q, Q)
    if S.shape[1]:
        F -= cdist(S, S, "sqeuclidean")
        F += cdist(T, T, "sqeuclidean")
    return F


# ----------------------------------------------------------------------
# ground truth and weights


def ground_truth_saddle_distances(mesh: Mesh, classification: VertexClassification,
                                  threads: int = 1) -> np.ndarray:
    """Exact geodesic distances between all saddle pairs, shape (N, N).

    One full propagation per saddle; the result is symmetrised by averaging
    the two directions, which agree to rounding error.
    """
    saddles = np.asarray(classification.saddle_set, dtype=np.int64)
    if len(saddles) < 2:
        raise ValueError("need at least two saddle vertices")
    rows = distance_matrix(mesh, saddles, classification, threads=threads)
    D = rows[:, saddles]
    D = 0.5 * (D + D.T)
    np.fill_diagonal(D, 0.0)
    return D


def pair_weights(D: np.ndarray, scale: float) -> np.ndarray:
    """``1 / d^2`` with ``d`` floored at ``WEIGHT_FLOOR * scale``; zero diagonal."""
    floor = WEIGHT_FLOOR * scale
    W = 1.0 / np.maximum(D, floor) ** 2
    np.fill_diagonal(W, 0.0)
    return W


def mean_pair_error(F: np.ndarray, D: np.ndarray) -> float:
    """Mean of ``|F - D| / D`` over pairs ``i < j``."""
    iu = np.triu_indices(D.shape[0], 1)
    d = D[iu]
    return float(np.mean(np.abs(F[iu] - d) / d))


def weighted_objective(F: np.ndarray, D: np.ndarray, W: np.ndarray) -> float:
    """``sum_{i<j} W_ij (F_ij - D_ij)^2``."""
    iu = np.triu_indices(D.shape[0], 1)
    return float(np.sum(W[iu] * (F[iu] - D[iu]) ** 2))


# ----------------------------------------------------------------------
# Euclidean stage


def landmark_mds(D: np.ndarray, m: int, n_landmarks: int = MAX_LANDMARKS,
                 seed: int = 0) -> np.ndarray:
    """Classical MDS on a random landmark subset, extended to the other rows.

    Landmark rows are embedded from the double-centred squared distances;
    every row is then placed by the usual distance-to-landmark triangulation.
    Directions with non-positive eigenvalue get zero coordinates.
    """
    n = D.shape[0]
    rng = np.random.default_rng(seed)
    k = min(n, n_landmarks)
    land = np.sort(rng.choice(n, size=k, replace=False)) if k < n else np.arange(n)
    D2 = D[np.ix_(land, land)] ** 2
    J = np.eye(k) - 1.0 / k
    B = -0.5 * J @ D2 @ J
    vals, vecs = np.linalg.eigh(B)
    order = np.argsort(vals)[::-1][:m]
    vals, vecs = vals[order], vecs[:, order]
    pos = vals > 1e-12 * max(vals.max(initial=0.0), 1e-300)
    pinv = np.zeros((k, m))
    pinv[:, pos] = vecs[:, pos] / np.sqrt(vals[pos])
    mean_d2 = D2.mean(axis=0)
    X = -0.5 * (D[:, land] ** 2 - mean_d2) @ pinv
    if X.shape[1] < m:
        X = np.hstack([X, np.zeros((n, m - X.shape[1]))])
    return X


@dataclass
class EuclideanResult:
    Q: np.ndarray
    stress: float
    error: float
    iterations: int


def euclidean_embed(D: np.ndarray, m: int, opts: SolverOptions | None = None,
                    W: np.ndarray | None = None, init: np.ndarray | None = None,
                    scale: float | None = None) -> EuclideanResult:
    """Weighted-stress embedding of ``D`` in R^m.

    Parameters
    ----------
    D : ndarray, shape (N, N)
    m : int
    opts : SolverOptions
    W : ndarray, optional
        Pair weights; ``pair_weights(D, scale)`` by default.
    init : ndarray, optional
        Starting coordinates. With fewer than ``m`` columns the solution is
        warm-started from them; the extra columns take the matching landmark
        MDS components (padding with zeros or tiny noise would sit at a
        stationary point of the lower-dimensional optimum).
        Without it, landmark MDS plus ``1e-6 * scale`` noise is used.
    scale : float, optional
        Length scale for the noise and the weight floor; ``D.max()`` by default.

    Returns
    -------
    EuclideanResult
        Coordinates, final weighted stress and mean relative pair error.
    """
    opts = opts or SolverOptions()
    D = np.asarray(D, dtype=np.float64)
    scale = float(D.max()) if scale is None else float(scale)
    if W is None:
        W = pair_weights(D, scale)
    rng = np.random.default_rng(opts.seed)
    n = D.shape[0]
    if init is None:
        X0 = landmark_mds(D, m, seed=opts.seed)
        X0 += INIT_JITTER * scale * rng.uniform(-1.0, 1.0, X0.shape)
    else:
        init = np.asarray(init, dtype=np.float64)
        if init.shape[0] != n or init.shape[1] > m:
            raise ValueError("init must have N rows and at most m columns")
        k = init.shape[1]
        X0 = init.copy() if k == m else np.hstack([init, landmark_mds(D, m, seed=opts.seed)[:, k:]])
    res = minimize_stress(StressProblem(D, m, W), X0, opts)
    err = mean_pair_error(cdist(res.X, res.X), D)
    log.info("euclidean m=%d stress=%.6g error=%.4f%% in %d iterations",
             m, res.stress, 100 * err, res.iterations)
    return EuclideanResult(res.X, res.stress, err, res.iterations)


# ----------------------------------------------------------------------
# cascade rounds


def residuals(D: np.ndarray, Q: np.ndarray, S: np.ndarray | None = None,
              T: np.ndarray | None = None) -> np.ndarray:
    """Current embedding distance minus target, for every pair.

    ``S`` and ``T`` hold the cascade columns fitted so far (may be empty).
    """
    n = D.shape[0]
    S = np.zeros((n, 0)) if S is None else np.asarray(S, dtype=np.float64).reshape(n, -1)
    T = np.zeros((n, 0)) if T is None else np.asarray(T, dtype=np.float64).reshape(n, -1)
    R = _embedding_distances(np.asarray(Q, dtype=np.float64).reshape(n, -1), S, T) - D
    np.fill_diagonal(R, 0.0)
    return R


@njit(cache=True, nogil=True)
def _cascade_objective(x, R, W, grad):
    n = R.shape[0]
    total = 0.0
    grad[:] = 0.0
    for i in range(n):
        si = x[i]
        ti = x[n + i]
        acc = 0.0
        gsi = 0.0
        gti = 0.0
        for j in range(i + 1, n):
            w = W[i, j]
            if w == 0.0:
                continue
            a = si - x[j]
            b = ti - x[n + j]
            e = a * a - b * b - R[i, j]
            acc += w * e * e
            c = 4.0 * w * e
            gsi += c * a
            gti -= c * b
            grad[j] -= c * a
            grad[n + j] += c * b
        total += acc
        grad[i] += gsi
        grad[n + i] += gti
    return total


def cascade_objective(x: np.ndarray, R: np.ndarray, W: np.ndarray):
    """Round objective ``sum_{i<j} W_ij ((s_i-s_j)^2 - (t_i-t_j)^2 - R_ij)^2`` and gradient.

    ``x`` stacks the ``s`` column over the ``t`` column.
    """
    grad = np.empty(len(x))
    f = _cascade_objective(np.ascontiguousarray(x, dtype=np.float64), R, W, grad)
    return f, grad


@dataclass
class RoundResult:
    s: np.ndarray
    t: np.ndarray
    objective: float
    incoming: float
    reset: bool


def cascade_round(R: np.ndarray, W: np.ndarray, opts: SolverOptions | None = None,
                  delta: float = 1e-3, rng: np.random.Generator | None = None) -> RoundResult:
    """Fit one ``(s, t)`` column pair to the residual ``R``.

    ``s = t = 0`` is a stationary point of the quartic objective, so the
    solver starts from uniform noise in ``[-delta, delta]``. If the result is
    worse than the zero columns, zeros are returned (``reset``).
    """
    opts = opts or SolverOptions()
    R = np.ascontiguousarray(R, dtype=np.float64)
    W = np.ascontiguousarray(W, dtype=np.float64)
    n = R.shape[0]
    if R.shape != (n, n) or W.shape != (n, n):
        raise ValueError("R and W must be square and aligned")
    rng = rng if rng is not None else np.random.default_rng(opts.seed)
    incoming, _ = cascade_objective(np.zeros(2 * n), R, W)
    x0 = rng.uniform(-delta, delta, 2 * n)
    res = quasi_newton_minimize(lambda x: cascade_objective(x, R, W), x0, opts)
    if not res.fun <= incoming:
        return RoundResult(np.zeros(n), np.zeros(n), incoming, incoming, True)
    return RoundResult(res.x[:n].copy(), res.x[n:].copy(), res.fun, incoming, False)


def geodesic_embedding(mesh: Mesh, classification: VertexClassification, m: int = 8,
                       l: int = 46, opts: SolverOptions | None = None,
                       cascade_opts: SolverOptions | None = None, threads: int = 1,
                       D: np.ndarray | None = None) -> Embedding:
    """Full pipeline: ground truth, Euclidean stage, then ``l`` cascade rounds.

    Parameters
    ----------
    mesh, classification
    m : int
        Euclidean dimension.
    l : int
        Number of cascade rounds; 0 gives the pure Euclidean embedding.
    opts, cascade_opts : SolverOptions
        Settings for the stress and the round solvers. ``cascade_opts``
        defaults to ``opts``; its seed drives the round initialisation.
    threads : int
        Worker count for the ground-truth propagations.
    D : ndarray, optional
        Precomputed saddle distance matrix (skips the ground-truth stage).
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    if l < 0:
        raise ValueError("l must be non-negative")
    opts = opts or SolverOptions()
    cascade_opts = cascade_opts or opts
    if D is None:
        D = ground_truth_saddle_distances(mesh, classification, threads=threads)
    saddles = np.asarray(classification.saddle_set, dtype=np.int64)
    if D.shape != (len(saddles), len(saddles)):
        raise ValueError("D does not match the saddle set")
    scale = mesh.scale
    W = pair_weights(D, scale)

    eu = euclidean_embed(D, m, opts, W=W, scale=scale)
    R = residuals(D, eu.Q)
    objective = [weighted_objective(R + D, D, W)]
    errors = [mean_pair_error(R + D, D)]
    n = len(saddles)
    S = np.zeros((n, l))
    T = np.zeros((n, l))
    delta = CASCADE_INIT * math.sqrt(scale)
    rng = np.random.default_rng(cascade_opts.seed)
    resets = []
    for p in range(l):
        rr = cascade_round(R, W, cascade_opts, delta=delta, rng=rng)
        R_new = R - cdist(rr.s[:, None], rr.s[:, None], "sqeuclidean") \
            + cdist(rr.t[:, None], rr.t[:, None], "sqeuclidean")
        obj = weighted_objective(R_new + D, D, W)
        if rr.reset or obj > objective[-1]:
            # zero columns leave the residual, and so the objective, unchanged
            resets.append(p + 1)
            objective.append(objective[-1])
            errors.append(errors[-1])
            continue
        S[:, p] = rr.s
        T[:, p] = rr.t
        R = R_new
        objective.append(obj)
        errors.append(mean_pair_error(R + D, D))
        log.info("round %d objective=%.6g error=%.4f%%", p + 1, obj, 100 * errors[-1])

    metadata = {
        "m": m,
        "l": l,
        "euclidean_stress": eu.stress,
        "euclidean_iterations": eu.iterations,
        "weight_floor": WEIGHT_FLOOR * scale,
        "cascade_init_halfwidth": delta,
        "reset_rounds": resets,
        "stress_options": _options_dict(opts),
        "cascade_options": _options_dict(cascade_opts),
    }
    return Embedding(eu.Q, S, T, saddles, np.asarray(objective), np.asarray(errors), metadata)


def _options_dict(opts: SolverOptions) -> dict:
    return {
        "max_iterations": opts.max_iterations,
        "gradient_tolerance": opts.gradient_tolerance,
        "relative_objective_tolerance": opts.relative_objective_tolerance,
        "memory": opts.memory,
        "seed": opts.seed,
    }
