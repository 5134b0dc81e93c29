"""Adaptive-sample-size inexact damped Newton solver (DANCE).

Stages run at geometrically growing prefix sizes ``m0, ceil(alpha m0), ...``
capped at ``N``. Each stage warm-starts from the previous stage's output and
takes damped steps ``w <- w - v / (1 + delta)`` where ``v`` comes from
distributed PCG, until a stopping rule certifies ``V_n``-suboptimality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np

from . import theory
from .data import Dataset, window
from .distrib import WorkerPool
from .model import RiskSpec, RiskView, estimate_M
from .pcg import PcgNotConverged, build_preconditioner, pcg_solve

__all__ = [
    "DanceConfig",
    "StageReport",
    "StepResult",
    "StageFailure",
    "stage_sizes",
    "forcing_tolerance",
    "damped_step",
    "stop_check",
    "run_stage",
    "run_dance",
    "resolve_spec",
]

RULE_B_LIMIT = 0.68 ** 2


@dataclass(frozen=True)
class DanceConfig:
    alpha: float = 2.0
    m0: int = 128
    beta: float = 1.0 / 20.0
    stop_rule: str = "gradient"
    subset_size: int = 100
    mu: Optional[float] = None
    max_inner: int = 100
    max_pcg: Optional[int] = None
    seed: int = 0
    eps_floor: float = 1e-14

    def __post_init__(self):
        if not self.alpha > 1:
            raise ValueError(f"alpha must exceed 1, got {self.alpha}")
        if not 0 < self.beta <= 1.0 / 20.0:
            raise ValueError(f"beta must lie in (0, 1/20], got {self.beta}")
        if self.m0 < 1:
            raise ValueError(f"m0 must be >= 1, got {self.m0}")
        if self.stop_rule not in ("gradient", "decrement"):
            raise ValueError(f"stop_rule must be 'gradient' or 'decrement', got {self.stop_rule!r}")
        if self.subset_size < 1:
            raise ValueError("subset_size must be >= 1")
        if self.mu is not None and self.mu < 0:
            raise ValueError("mu must be nonnegative")


@dataclass
class StepResult:
    w: np.ndarray
    delta: float
    pcg_iters: int
    rounds: int
    eps: float
    grad_norm: float
    mu: float


@dataclass
class StageReport:
    n: int
    V: float
    lam: float
    mu: float
    subset_size: int
    pcg_bound: int
    steps: int = 0
    pcg_iters: list = field(default_factory=list)
    eps: list = field(default_factory=list)
    deltas: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    rounds: int = 0
    monitor_rounds: int = 0
    samples_touched: int = 0
    final_grad_norm: Optional[float] = None
    final_delta: Optional[float] = None
    stop_rule: str = "gradient"

    def predicted_inner(self, subopt: float) -> int:
        return theory.inner_bound(subopt, self.V)

    def predicted_rounds(self, subopt: float) -> int:
        return theory.stage_round_bound(self.predicted_inner(subopt), self.pcg_bound)


class StageFailure(RuntimeError):
    def __init__(self, message, report: StageReport, reports=None, w=None):
        super().__init__(message)
        self.report = report
        self.reports = reports if reports is not None else [report]
        self.w = w


def stage_sizes(m0: int, alpha: float, N: int) -> list[int]:
    n = min(int(m0), N)
    sizes = [n]
    while n < N:
        n = min(math.ceil(alpha * n), N)
        sizes.append(n)
    return sizes


def resolve_spec(spec: RiskSpec, ds: Dataset) -> RiskSpec:
    """Fill in ``M`` from the full dataset when the spec leaves it unset."""
    if spec.M:
        return spec
    return replace(spec, M=estimate_M(window(ds, ds.N)))


def forcing_tolerance(view: RiskView, grad_norm: float, beta: float, floor: float = 1e-14) -> float:
    lam = view.lam
    eps = beta * math.sqrt(lam / (view.spec.M + lam)) * grad_norm
    return max(eps, floor * (1.0 + grad_norm))


def _mu_for(view: RiskView, cfg: DanceConfig) -> tuple[float, int]:
    size = min(cfg.subset_size, view.n)
    mu = view.spec.M / math.sqrt(size) if cfg.mu is None else cfg.mu
    return mu, size


def _max_pcg(view: RiskView, cfg: DanceConfig, mu: float) -> int:
    if cfg.max_pcg is not None:
        return cfg.max_pcg
    C = theory.pcg_bound_reduced(view.spec.c, view.V, view.spec.M, mu, cfg.beta)
    return max(10, 10 * C)


def damped_step(pool: WorkerPool, view: RiskView, w, cfg: DanceConfig, k: int = 0) -> StepResult:
    """One inexact damped Newton step at ``w``."""
    w = np.asarray(w, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise FloatingPointError("iterate has non-finite entries")
    mu, size = _mu_for(view, cfg)
    P = build_preconditioner(view, w, size, mu, seed=[cfg.seed, view.n, k], pool=pool)
    eps = lambda gn: forcing_tolerance(view, gn, cfg.beta, cfg.eps_floor)  # noqa: E731
    res = pcg_solve(pool, view, w, P, eps, max_iter=_max_pcg(view, cfg, mu), stage=view.n)
    w_next = w - res.v / (1.0 + res.delta)
    return StepResult(w_next, res.delta, res.iterations, res.rounds, res.eps, res.grad_norm, mu)


def stop_check(view: RiskView, grad_norm: Optional[float], delta: Optional[float], cfg: DanceConfig) -> bool:
    """Whether the current iterate is certified ``V_n``-suboptimal.

    The gradient rule needs ``||grad R_n|| < sqrt(2c) V_n``. The decrement
    rule needs ``delta <= (1 - beta) sqrt(V_n)`` and is only valid while
    ``V_n <= 0.68**2``; above that it falls back to the gradient rule.
    ``None`` inputs mean the quantity is not available yet.
    """
    V = view.V
    if cfg.stop_rule == "decrement" and V <= RULE_B_LIMIT:
        return delta is not None and delta <= (1.0 - cfg.beta) * math.sqrt(V)
    return grad_norm is not None and grad_norm < math.sqrt(2.0 * view.spec.c) * V


def _needs_gradient(view: RiskView, cfg: DanceConfig) -> bool:
    return not (cfg.stop_rule == "decrement" and view.V <= RULE_B_LIMIT)


def run_stage(
    pool: WorkerPool,
    view: RiskView,
    w_warm,
    cfg: DanceConfig,
    callback: Optional[Callable] = None,
):
    """Run damped Newton on ``R_n`` from ``w_warm`` until the stop rule holds.

    Gradients used only by the stopping test are taken as monitor rounds
    and do not enter the round ledger. With the decrement rule, the step
    whose decrement passes the test is still applied; descent keeps the
    stepped iterate at least as good.

    Returns ``(w_n, report)``; raises :class:`StageFailure` after
    ``cfg.max_inner`` steps.
    """
    pool.configure(view.n)
    rounds0, mon0, touched0 = pool.rounds, pool.monitor_rounds, pool.samples_touched
    mu, size = _mu_for(view, cfg)
    report = StageReport(
        n=view.n,
        V=view.V,
        lam=view.lam,
        mu=mu,
        subset_size=size,
        pcg_bound=theory.pcg_bound_reduced(view.spec.c, view.V, view.spec.M, mu, cfg.beta),
        stop_rule=cfg.stop_rule if not _needs_gradient(view, cfg) else "gradient",
    )
    w = np.array(w_warm, dtype=np.float64)
    need_grad = _needs_gradient(view, cfg)

    def sync():
        report.rounds = pool.rounds - rounds0
        report.monitor_rounds = pool.monitor_rounds - mon0
        report.samples_touched = pool.samples_touched - touched0

    gnorm = None
    if need_grad:
        gnorm = float(np.linalg.norm(pool.broadcast_reduce_grad(view, w, monitor=True)))
    delta = None
    if callback:
        sync()
        callback("stage_start", report, w)
    k = 0
    while not stop_check(view, gnorm, delta, cfg):
        if k >= cfg.max_inner:
            sync()
            raise StageFailure(f"stage n={view.n}: no certificate after {k} steps", report, w=w)
        try:
            step = damped_step(pool, view, w, cfg, k)
        except PcgNotConverged as exc:
            sync()
            raise StageFailure(f"stage n={view.n}, step {k}: {exc}", report, w=w) from exc
        w = step.w
        delta = step.delta
        k += 1
        report.steps = k
        report.pcg_iters.append(step.pcg_iters)
        report.eps.append(step.eps)
        report.deltas.append(step.delta)
        report.grad_norms.append(step.grad_norm)
        if need_grad:
            gnorm = float(np.linalg.norm(pool.broadcast_reduce_grad(view, w, monitor=True)))
        if callback:
            sync()
            callback("step", report, w)
    report.final_grad_norm = gnorm
    report.final_delta = delta
    sync()
    if callback:
        callback("stage_end", report, w)
    return w, report


def run_dance(
    ds: Dataset,
    spec: RiskSpec,
    cfg: DanceConfig,
    pool: Optional[WorkerPool] = None,
    w0=None,
    callback: Optional[Callable] = None,
):
    """Solve ``R_N`` to its statistical accuracy through growing stages.

    The first stage starts from ``w0`` (zero by default). Returns
    ``(w_N, reports)``; on a stage failure the partial report list is
    attached to the raised :class:`StageFailure`.
    """
    spec = resolve_spec(spec, ds)
    own_pool = pool is None
    if own_pool:
        pool = WorkerPool(ds, 1)
    w = np.zeros(ds.d) if w0 is None else np.array(w0, dtype=np.float64)
    reports: list[StageReport] = []
    try:
        for n in stage_sizes(cfg.m0, cfg.alpha, ds.N):
            view = RiskView(spec, window(ds, n))
            try:
                w, rep = run_stage(pool, view, w, cfg, callback)
            except StageFailure as exc:
                exc.reports = reports + [exc.report]
                raise
            reports.append(rep)
    finally:
        if own_pool:
            pool.close()
    return w, reports
