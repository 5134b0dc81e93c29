"""Closed-form iteration and communication bounds.

All functions are pure. Ceilings follow the convention that ``ceil(t)`` is
the smallest *nonnegative* integer ``>= t``, so negative logarithms count
as zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

__all__ = [
    "omega",
    "omega_star",
    "OMEGA_SIXTH",
    "pcg_bound",
    "pcg_bound_reduced",
    "inner_bound",
    "stage_round_bound",
    "warmstart_bound",
    "warmstart_bound_general",
    "StageBoundInput",
    "total_round_bound",
    "doubling_round_bound",
    "doubling_round_order",
    "complexity_order",
]


def omega(t: float) -> float:
    """Self-concordant lower function ``t - log(1 + t)`` for ``t > -1``."""
    if not t > -1:
        raise ValueError(f"omega needs t > -1, got {t}")
    return t - math.log1p(t)


def omega_star(t: float) -> float:
    """Upper companion ``-t - log(1 - t)`` for ``0 <= t < 1``."""
    if not 0 <= t < 1:
        raise ValueError(f"omega_star needs 0 <= t < 1, got {t}")
    return -t - math.log1p(-t)


OMEGA_SIXTH = omega(1.0 / 6.0)


def _nonneg_ceil(x: float) -> int:
    return max(0, math.ceil(x))


def _positive(**kw):
    for name, val in kw.items():
        if not val > 0:
            raise ValueError(f"{name} must be positive, got {val}")


def pcg_bound(c: float, V_n: float, M: float, mu_n: float, grad_norm: float, eps_k: float, base: float = 2.0) -> int:
    """PCG iterations sufficient for an ``eps_k``-accurate Newton direction.

    ``ceil(sqrt(1 + 2 mu/(cV)) * log_base(2 sqrt((cV + M)/cV) ||g|| / eps))``.
    The default base 2 matches :func:`pcg_bound_reduced`; pass
    ``base=math.e`` for the natural-log variant, which is never larger.
    """
    _positive(c=c, V_n=V_n, grad_norm=grad_norm, eps_k=eps_k)
    if M < 0 or mu_n < 0:
        raise ValueError("M and mu_n must be nonnegative")
    lam = c * V_n
    arg = 2.0 * math.sqrt((lam + M) / lam) * grad_norm / eps_k
    return _nonneg_ceil(math.sqrt(1.0 + 2.0 * mu_n / lam) * math.log(arg, base))


def pcg_bound_reduced(c: float, V_n: float, M: float, mu_n: float, beta: float) -> int:
    """:func:`pcg_bound` after substituting the forcing rule for ``eps_k``.

    ``ceil(sqrt(1 + 2 mu/(cV)) * log2(2 (cV + M) / (beta cV)))``.
    """
    _positive(c=c, V_n=V_n, beta=beta)
    lam = c * V_n
    return _nonneg_ceil(math.sqrt(1.0 + 2.0 * mu_n / lam) * math.log2(2.0 * (lam + M) / (beta * lam)))


def inner_bound(subopt: float, V_n: float) -> int:
    """Damped Newton steps needed to go from ``subopt`` to ``V_n``-accuracy."""
    if subopt < 0:
        raise ValueError(f"suboptimality must be nonnegative, got {subopt}")
    _positive(V_n=V_n)
    return _nonneg_ceil(subopt / (0.5 * OMEGA_SIXTH)) + _nonneg_ceil(math.log2(2.0 * OMEGA_SIXTH / V_n))


def stage_round_bound(K_n: int, C_n: int) -> int:
    return K_n * (1 + C_n)


def warmstart_bound(V_m: float, gamma: float, c: float, wstar_norm_sq: float) -> float:
    """Upper bound on ``R_n(w_m) - R_n(w_n*)`` when the sample size doubles."""
    return (3.0 + (1.0 - 2.0 ** -gamma) * (2.0 + 0.5 * c * wstar_norm_sq)) * V_m


def warmstart_bound_general(m: int, n: int, gamma: float, c: float, wstar_norm_sq: float) -> float:
    """Warm-start bound for any ``m < n`` with ``V_k = k**-gamma``."""
    if not 0 < m < n:
        raise ValueError(f"need 0 < m < n, got m={m}, n={n}")
    V = lambda k: float(k) ** -gamma  # noqa: E731
    Vm, Vn = V(m), V(n)
    return Vm + 2.0 * (n - m) / n * (V(n - m) + Vm) + 2.0 * (Vm - Vn) + 0.5 * c * (Vm - Vn) * wstar_norm_sq


@dataclass(frozen=True)
class StageBoundInput:
    n: int
    subopt: float
    V_n: float
    c: float
    M: float
    mu_n: float
    beta: float = 1.0 / 20.0

    @property
    def K(self) -> int:
        return inner_bound(self.subopt, self.V_n)

    @property
    def C(self) -> int:
        return pcg_bound_reduced(self.c, self.V_n, self.M, self.mu_n, self.beta)

    @property
    def T(self) -> int:
        return stage_round_bound(self.K, self.C)


def total_round_bound(stages: Sequence[StageBoundInput]) -> int:
    """Sum of per-stage round bounds over every stage given.

    Unlike the textbook sum, which starts at the second stage because the
    first stage's solution is assumed, the first entry is included so the
    result can be compared with a run that starts from scratch.
    """
    return sum(s.T for s in stages)


def doubling_round_bound(N: int, m0: int, gamma: float, c: float, M: float, mu: float, beta: float, wstar_norm_sq: float) -> float:
    """Closed-form total-rounds expression for doubling stages.

    Keeps the constants that the big-O form hides; use it as an
    order-of-magnitude indicator only.
    """
    L = math.log2(N / m0)
    V = lambda k: float(k) ** -gamma  # noqa: E731
    q = 2.0 ** -gamma
    lead = 3.0 + (1.0 - q) * (2.0 + 0.5 * c * wstar_norm_sq)
    geometric = (1.0 - q ** L) / (1.0 - q)
    K_total = 2.0 * L + L * math.log2(2.0 * OMEGA_SIXTH / V(N)) + lead / (0.5 * OMEGA_SIXTH) * geometric * V(m0)
    C = math.ceil(math.sqrt(1.0 + 2.0 * mu / (c * V(N))) * math.log2(2.0 / beta + 2.0 * M / (beta * c) / V(N)))
    return K_total * (1 + C)


def doubling_round_order(N: int, gamma: float) -> float:
    """``gamma (log2 N)^2 sqrt(N^gamma) log2(N^gamma)``."""
    return gamma * math.log2(N) ** 2 * math.sqrt(N ** gamma) * math.log2(N ** gamma)


def complexity_order(N: int, d: int) -> float:
    """``(log2 N)^3 N^(1/4) d^2``."""
    return math.log2(N) ** 3 * N ** 0.25 * d ** 2
