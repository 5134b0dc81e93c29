"""Regularized logistic risk on a sample window.

The risk on the first ``n`` samples is

    R_n(w) = (1/n) sum_i log(1 + exp(-y_i x_i.w)) + (c V_n / 2) ||w||^2,

with statistical accuracy ``V_n = n**-gamma``. Shard-level functions return
only the data part of the gradient or Hessian product, scaled by ``1/n``;
the reducer adds the ``c V_n`` term exactly once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit

from .data import SampleWindow

__all__ = [
    "RiskSpec",
    "RiskView",
    "accuracy",
    "log1pexp_neg",
    "estimate_M",
    "risk_value",
    "risk_grad",
    "full_grad",
    "hvp",
    "full_hvp",
    "sample_hessian_factor",
    "dense_hessian",
    "predict_accuracy",
]


@dataclass(frozen=True)
class RiskSpec:
    c: float = 0.1
    gamma: float = 0.5
    M: float = 0.0
    loss: str = "logistic"

    def __post_init__(self):
        if not self.c >= 0:
            raise ValueError(f"c must be nonnegative, got {self.c}")
        if not 0.5 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0.5, 1], got {self.gamma}")
        if not self.M >= 0:
            raise ValueError(f"M must be nonnegative, got {self.M}")
        if self.loss != "logistic":
            raise ValueError(f"unsupported loss {self.loss!r}")


def accuracy(spec: RiskSpec, n: int) -> float:
    """Statistical accuracy ``V_n = n**-gamma``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return float(n) ** -spec.gamma


@dataclass(frozen=True)
class RiskView:
    """A risk specification bound to a sample window."""

    spec: RiskSpec
    window: SampleWindow

    @property
    def n(self) -> int:
        return self.window.n

    @property
    def d(self) -> int:
        return self.window.d

    @property
    def V(self) -> float:
        return accuracy(self.spec, self.n)

    @property
    def lam(self) -> float:
        """Strong-convexity modulus ``c * V_n``."""
        return self.spec.c * self.V


def log1pexp_neg(t):
    """``log(1 + exp(-t))`` without overflow for large ``|t|``."""
    t = np.asarray(t, dtype=np.float64)
    return np.where(t > 0, np.log1p(np.exp(-np.abs(t))), -t + np.log1p(np.exp(-np.abs(t))))


def _check_w(w, d):
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (d,):
        raise ValueError(f"expected vector of length {d}, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise FloatingPointError("weight vector has non-finite entries")
    return w


def _shard(view: RiskView, shard: Optional[range]):
    if shard is None:
        return view.window.X, view.window.y
    return view.window.rows(shard.start, shard.stop)


def risk_value(view: RiskView, w) -> float:
    w = _check_w(w, view.d)
    X, y = view.window.X, view.window.y
    margins = y * (X @ w)
    return float(np.mean(log1pexp_neg(margins)) + 0.5 * view.lam * (w @ w))


def risk_grad(view: RiskView, w, shard: Optional[range] = None) -> np.ndarray:
    """Data part of the gradient over ``shard``: ``(1/n) sum_i grad f_i(w)``."""
    w = _check_w(w, view.d)
    X, y = _shard(view, shard)
    # d/dt log(1+exp(-t)) = -sigma(-t)
    coef = -y * expit(-y * (X @ w))
    return np.asarray(X.T @ coef).ravel() / view.n


def full_grad(view: RiskView, w) -> np.ndarray:
    return risk_grad(view, w) + view.lam * np.asarray(w, dtype=np.float64)


def _curvature(X, y, w):
    sig = expit(y * (X @ w))
    return sig * (1.0 - sig)


def hvp(view: RiskView, w, v, shard: Optional[range] = None) -> np.ndarray:
    """Data part of the Hessian product over ``shard``.

    ``v`` may be a vector or a ``d x k`` block of vectors.
    """
    w = _check_w(w, view.d)
    v = np.asarray(v, dtype=np.float64)
    X, y = _shard(view, shard)
    s = _curvature(X, y, w)
    Xv = X @ v
    Xv = s * Xv if Xv.ndim == 1 else s[:, None] * Xv
    return np.asarray(X.T @ Xv) / view.n


def full_hvp(view: RiskView, w, v) -> np.ndarray:
    return hvp(view, w, v) + view.lam * np.asarray(v, dtype=np.float64)


def sample_hessian_factor(view: RiskView, w, i):
    """Weight ``s_i`` and row ``x_i`` with ``hess f_i(w) = s_i x_i x_i^T``.

    ``i`` may be an integer or an index array; rows come back dense.
    """
    w = _check_w(w, view.d)
    idx = np.atleast_1d(np.asarray(i, dtype=np.int64))
    if np.any(idx < 0) or np.any(idx >= view.n):
        raise IndexError(f"sample index outside window of size {view.n}")
    X = view.window.X[idx]
    y = view.window.y[idx]
    s = _curvature(X, y, w)
    rows = X.toarray()
    if np.ndim(i) == 0:
        return float(s[0]), rows[0]
    return s, rows


def estimate_M(win: SampleWindow) -> float:
    """Largest per-sample logistic curvature bound ``max_i ||x_i||^2 / 4``."""
    X = win.X
    sq = np.asarray(X.multiply(X).sum(axis=1)).ravel()
    return float(sq.max()) / 4.0


def dense_hessian(view: RiskView, w, include_reg: bool = True) -> np.ndarray:
    w = _check_w(w, view.d)
    X, y = view.window.X, view.window.y
    s = _curvature(X, y, w)
    Xd = X.toarray()
    H = (Xd.T * s) @ Xd / view.n
    if include_reg:
        H[np.diag_indices_from(H)] += view.lam
    return H


def predict_accuracy(X, y, w) -> float:
    """Fraction of rows where ``sign(x.w)`` matches the label (0 counts as -1)."""
    pred = np.where(np.asarray(X @ w).ravel() > 0, 1.0, -1.0)
    return float(np.mean(pred == y))
