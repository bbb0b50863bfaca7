"""Tempered weighted-and-shifted Grunwald (tempered-WSGD) weights."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError


def _check_beta(beta):
    if not 1.0 < beta < 2.0:
        raise DomainError(f"beta must lie in (1, 2), got {beta}")


@lru_cache(maxsize=32)
def _gl_weights_cached(beta: float, K: int) -> np.ndarray:
    w = np.empty(K + 1)
    w[0] = 1.0
    if K:
        k = np.arange(1, K + 1)
        w[1:] = np.cumprod(1.0 - (1.0 + beta) / k)
    w.setflags(write=False)
    return w


def gl_weights(beta: float, K: int) -> np.ndarray:
    """Grunwald weights w_0 = 1, w_k = (1 - (1 + beta)/k) w_{k-1}, k = 1..K.

    The returned array is read-only and shared between callers.
    """
    _check_beta(beta)
    if K < 0:
        raise DomainError(f"K must be >= 0, got {K}")
    return _gl_weights_cached(float(beta), int(K))


def solve_gammas(beta: float, gamma1: float) -> tuple[float, float, float]:
    """Complete (gamma1, gamma2, gamma3) from gamma1.

    The two constraints are gamma1 + gamma2 + gamma3 = 1 and
    gamma1 - gamma3 = beta / 2.
    """
    _check_beta(beta)
    gamma3 = gamma1 - beta / 2.0
    gamma2 = 1.0 - gamma1 - gamma3
    return gamma1, gamma2, gamma3


def gamma_bounds(beta: float) -> dict[int, tuple[float, float]]:
    """Open intervals for gamma1 (clause 1), gamma2 (clause 2), gamma3 (clause 3).

    Any one of them guarantees g_1 < 0, g_0 + g_2 > 0 and g_k > 0 for k >= 3.
    """
    _check_beta(beta)
    p2 = beta**2 + 3 * beta + 2
    p4 = beta**2 + 3 * beta + 4
    c1 = (max(2 * (beta**2 + 3 * beta - 4) / p2, (beta**2 + 3 * beta) / p4),
          3 * (beta**2 + 3 * beta - 2) / (2 * p2))
    c2 = (((beta - 4) * p2 + 24) / (2 * p2),
          min(((beta - 2) * p4 + 16) / (2 * p4), ((beta - 6) * p2 + 48) / (2 * p2)))
    c3 = (max((2 - beta) * (beta**2 + beta - 8) / p2,
              (1 - beta) * (beta**2 + 2 * beta) / (2 * p4)),
          (2 - beta) * (beta**2 + 2 * beta - 3) / (2 * p2))
    return {1: c1, 2: c2, 3: c3}


@dataclass(frozen=True)
class GammaCheck:
    admissible: bool
    clauses: tuple[int, ...]

    def __bool__(self):
        return self.admissible


def check_gamma_conditions(beta, gamma1, gamma2, gamma3) -> GammaCheck:
    """Report every clause whose strict interval contains its gamma."""
    bounds = gamma_bounds(beta)
    values = {1: gamma1, 2: gamma2, 3: gamma3}
    hits = tuple(i for i in (1, 2, 3) if bounds[i][0] < values[i] < bounds[i][1])
    return GammaCheck(bool(hits), hits)


@dataclass(frozen=True, eq=False)
class TemperedWeights:
    beta: float
    lam: float
    h: float
    gamma1: float
    gamma2: float
    gamma3: float
    w: np.ndarray
    g: np.ndarray
    rho: float

    @property
    def K(self) -> int:
        return self.g.size - 1

    @property
    def gammas(self):
        return self.gamma1, self.gamma2, self.gamma3


def tempered_weights(beta: float, lam: float, h: float, gammas, K: int) -> TemperedWeights:
    """Tempered weights g_0..g_K and the shift rho for step ``h``.

    g_0 = gamma1 w_0 e^{h lam}
    g_1 = gamma1 w_1 + gamma2 w_0
    g_k = (gamma1 w_k + gamma2 w_{k-1} + gamma3 w_{k-2}) e^{-(k-1) h lam},  k >= 2
    """
    _check_beta(beta)
    if not h > 0:
        raise DomainError(f"h must be positive, got {h}")
    if not lam >= 0:
        raise DomainError(f"lambda must be non-negative, got {lam}")
    if K < 2:
        raise DomainError(f"K must be >= 2, got {K}")
    g1, g2, g3 = (float(v) for v in gammas)
    w = gl_weights(beta, K)
    g = g1 * w
    g[1:] += g2 * w[:-1]
    g[2:] += g3 * w[:-2]
    # all three cases share the factor e^{-(k-1) h lam}
    g *= np.exp(-(np.arange(K + 1) - 1.0) * h * lam)
    hl = h * lam
    rho = (g1 * np.exp(hl) + g2 + g3 * np.exp(-hl)) * (-np.expm1(-hl)) ** beta
    g.setflags(write=False)
    return TemperedWeights(beta=float(beta), lam=float(lam), h=float(h),
                           gamma1=g1, gamma2=g2, gamma3=g3, w=w, g=g, rho=float(rho))
