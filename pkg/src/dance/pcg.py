"""Subsampled-Hessian preconditioner and the distributed PCG inner solver."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from .distrib import WorkerPool
from .model import RiskView, dense_hessian, full_grad, sample_hessian_factor

__all__ = [
    "Preconditioner",
    "build_preconditioner",
    "apply_pinv",
    "PcgResult",
    "PcgNotConverged",
    "pcg_solve",
    "exact_newton_reference",
    "reference_minimizer",
    "DENSE_LIMIT",
]

DENSE_LIMIT = 512


class PcgNotConverged(RuntimeError):
    """PCG hit ``max_iter``; ``result`` holds the last iterate."""

    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class Preconditioner:
    """``P = a I + (1/|A|) sum_{i in A} s_i x_i x_i^T`` with ``a = cV_n + mu_n``.

    ``P^{-1}`` is applied through the Woodbury identity. With
    ``B = X_A^T diag(sqrt(s_i / |A|))`` (``d x |A|``) the core system is
    ``a I + B^T B``, which stays well conditioned even when some ``s_i``
    vanish.
    """

    subset: np.ndarray
    weights: np.ndarray
    rows: np.ndarray
    a: float
    mu: float
    B: np.ndarray
    core: tuple

    @property
    def d(self) -> int:
        return self.rows.shape[1]

    def dense(self) -> np.ndarray:
        P = self.B @ self.B.T
        P[np.diag_indices_from(P)] += self.a
        return P

    def solve(self, r: np.ndarray) -> np.ndarray:
        return apply_pinv(self, r)


def _factor(weights, rows, a, subset, mu):
    if not a > 0:
        raise ValueError(f"diagonal shift must be positive, got {a}")
    m = max(len(weights), 1)
    B = rows.T * np.sqrt(np.asarray(weights, dtype=np.float64) / m)
    core = B.T @ B
    core[np.diag_indices_from(core)] += a
    try:
        cf = linalg.cho_factor(core, lower=True, check_finite=True)
    except linalg.LinAlgError as exc:
        raise FloatingPointError("Woodbury core is not positive definite") from exc
    return Preconditioner(np.asarray(subset), np.asarray(weights, float), rows, float(a), float(mu), B, cf)


def preconditioner_from_factors(weights, rows, a, mu=0.0) -> Preconditioner:
    """Build ``P`` directly from rank-one factors (mostly for tests)."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    return _factor(np.atleast_1d(weights), rows, a, np.arange(rows.shape[0]), mu)


def build_preconditioner(view: RiskView, w, subset_size: int, mu: float, seed=None, pool: Optional[WorkerPool] = None) -> Preconditioner:
    """Draw ``A_n`` uniformly without replacement and factor ``P``.

    ``seed`` is anything :func:`numpy.random.default_rng` accepts.
    """
    if not 1 <= subset_size:
        raise ValueError(f"subset size must be >= 1, got {subset_size}")
    if mu < 0:
        raise ValueError(f"mu must be nonnegative, got {mu}")
    size = min(int(subset_size), view.n)
    rng = np.random.default_rng(seed)
    subset = np.sort(rng.choice(view.n, size=size, replace=False))
    s, rows = sample_hessian_factor(view, w, subset)
    if pool is not None:
        pool.note_samples(size)
    return _factor(s, rows, view.lam + mu, subset, mu)


def apply_pinv(P: Preconditioner, r) -> np.ndarray:
    """Solve ``P s = r``.

    ``P^{-1} r = (r - B (aI + B^T B)^{-1} B^T r) / a``.
    """
    r = np.asarray(r, dtype=np.float64)
    if not np.all(np.isfinite(r)):
        raise FloatingPointError("right-hand side has non-finite entries")
    if P.B.shape[1] == 0:
        return r / P.a
    return (r - P.B @ linalg.cho_solve(P.core, P.B.T @ r)) / P.a


@dataclass
class PcgResult:
    v: np.ndarray
    delta: float
    iterations: int
    rounds: int
    grad: np.ndarray
    grad_norm: float
    eps: float
    residual_norm: float
    clamped: bool = False
    residual_history: Optional[list] = None


def pcg_solve(
    pool: WorkerPool,
    view: RiskView,
    w,
    P: Preconditioner,
    eps: float,
    max_iter: int = 1000,
    stage: Optional[int] = None,
    track: bool = False,
) -> PcgResult:
    """Approximate Newton direction ``v`` with ``||H v - g|| <= eps``.

    One round reduces the gradient at ``w``; every loop pass broadcasts the
    search direction and the current iterate and reduces both Hessian
    products in a single round, so ``rounds == 1 + iterations``. The
    decrement ``sqrt(v^T H v)`` is assembled from the products of the last
    pass without another round.

    ``eps`` may also be a callable mapping the gradient norm to the
    tolerance. With ``track=True`` the recursive residual of every pass is
    kept in ``residual_history`` alongside the iterate.
    """
    start = pool.rounds
    g = pool.broadcast_reduce_grad(view, w)
    gnorm = float(np.linalg.norm(g))
    tol = float(eps(gnorm)) if callable(eps) else float(eps)
    if not tol > 0:
        raise ValueError(f"tolerance must be positive, got {tol}")

    r = g.copy()
    v = np.zeros_like(g)
    history = [] if track else None
    if gnorm == 0.0:
        rounds = pool.rounds - start
        pool.ledger.record(view.n if stage is None else stage, rounds)
        return PcgResult(v, 0.0, 0, rounds, g, gnorm, tol, 0.0, False, history)

    s = P.solve(r)
    u = s.copy()
    rs = float(r @ s)
    t = 0
    while True:
        Hu, Hv = pool.broadcast_reduce_hvp2(view, w, u, v)
        gamma = rs / float(u @ Hu)
        v_next = v + gamma * u
        r = r - gamma * Hu
        t += 1
        delta_sq = float(v_next @ Hv + gamma * (v_next @ Hu))
        rnorm = float(np.linalg.norm(r))
        if track:
            history.append((v_next.copy(), r.copy()))
        if rnorm <= tol or t >= max_iter:
            break
        s = P.solve(r)
        rs_next = float(r @ s)
        u = s + (rs_next / rs) * u
        rs = rs_next
        v = v_next

    clamped = delta_sq < 0
    if clamped:
        warnings.warn(f"negative decrement square {delta_sq:.3e} clamped to zero", RuntimeWarning)
    rounds = pool.rounds - start
    pool.ledger.record(view.n if stage is None else stage, rounds)
    result = PcgResult(v_next, math.sqrt(max(delta_sq, 0.0)), t, rounds, g, gnorm, tol, rnorm, clamped, history)
    if rnorm > tol:
        raise PcgNotConverged(f"PCG residual {rnorm:.3e} > {tol:.3e} after {t} iterations", result)
    return result


def exact_newton_reference(view: RiskView, w):
    """Exact Newton direction and decrement from a dense solve.

    Returns ``(H^{-1} g, sqrt(g^T H^{-1} g))``.
    """
    if view.d > DENSE_LIMIT:
        raise ValueError(f"dense reference limited to d <= {DENSE_LIMIT}, got {view.d}")
    H = dense_hessian(view, w)
    g = full_grad(view, w)
    cf = linalg.cho_factor(H, lower=True)
    u = linalg.cho_solve(cf, g)
    return u, math.sqrt(max(float(g @ u), 0.0))


def reference_minimizer(view: RiskView, w0=None, tol: float = 1e-12, max_iter: int = 200):
    """Minimize ``R_n`` by dense Newton steps until ``||grad|| <= tol``.

    Damped steps ``1/(1 + decrement)`` are used while the decrement is
    large, full steps afterwards. Returns ``(w*, R_n(w*))``.
    """
    from .model import risk_value

    w = np.zeros(view.d) if w0 is None else np.array(w0, dtype=np.float64)
    for _ in range(max_iter):
        g = full_grad(view, w)
        if np.linalg.norm(g) <= tol:
            break
        u, dec = exact_newton_reference(view, w)
        w = w - (u / (1.0 + dec) if dec > 0.25 else u)
    else:
        raise RuntimeError(f"reference Newton did not reach {tol:g} in {max_iter} steps")
    return w, risk_value(view, w)
