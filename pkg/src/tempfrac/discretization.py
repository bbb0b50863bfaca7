"""Crank-Nicolson / tempered-WSGD discretization and the manufactured test problem.

Each time step solves ``(I + D G) u^{j+1} = (I - D G) u^j + dt f^{j+1/2}`` where
D = diag(d(x_i)) and G is a symmetric Toeplitz matrix built from the tempered
weights. The state vector holds interior values only; the homogeneous
Dirichlet boundary values are implicit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import gammaln

from .errors import (ContractViolation, DomainError, InsufficientWeightsError,
                     MarchFailure)
from .structured import (SineTransformPlan, SymmetricToeplitz, TauMatrix,
                         tau_from_toeplitz)
from .weights import TemperedWeights, solve_gammas, tempered_weights

# ---------------------------------------------------------------- test problem


def exact_solution(x, t, lam):
    """u(x, t) = t e^{-lam x} x^3 (1 - x)^3."""
    x = np.asarray(x, dtype=float)
    return t * np.exp(-lam * x) * x**3 * (1 - x) ** 3


def coefficient_d1(x):
    x = np.asarray(x, dtype=float)
    return np.exp(5 * x) / (1 + x)


def coefficient_d2(x):
    x = np.asarray(x, dtype=float)
    if np.any((x <= 0) | (x >= 1)):
        raise DomainError("d2 is singular at x = 0 and x = 1")
    return (np.exp(3 * x) + 0.2) / (x * (1 - x))


COEFFICIENTS = {"d1": coefficient_d1, "d2": coefficient_d2}

SERIES_TERMS = 30


def manufactured_source(x, t, lam, beta, d_at_x):
    """Source term that makes ``exact_solution`` solve the model problem on [0, 1].

    The right-derivative series expands e^{-2 lam x} about x = 1, giving the
    weights (2 lam)^j / j!, j = 0..30 (these are 3^j / j! at lam = 1.5).
    """
    x = np.asarray(x, dtype=float)
    d = np.asarray(d_at_x, dtype=float)
    bump = np.exp(-lam * x) * x**3 * (1 - x) ** 3

    left = np.zeros_like(x)
    right = np.zeros_like(x)
    for m in range(4):
        sign_binom = (-1) ** m * math.comb(3, m)
        ratio = math.exp(gammaln(4 + m) - gammaln(4 + m - beta))
        left += sign_binom * ratio * x ** (3 + m - beta)
        for j in range(SERIES_TERMS + 1):
            coef = (2 * lam) ** j / math.factorial(j)
            if coef == 0.0:
                continue
            ratio = math.exp(gammaln(4 + m + j) - gammaln(4 + m + j - beta))
            right += coef * sign_binom * ratio * (1 - x) ** (j + 3 + m - beta)
    left *= np.exp(-lam * x)
    right *= np.exp(lam * (x - 2))
    return bump - t * d * (left + right) + 2 * t * d * lam**beta * bump


# ---------------------------------------------------------------- configuration


def _zero_field(x, *args):
    return np.zeros_like(np.asarray(x, dtype=float))


@dataclass
class ProblemConfig:
    """Model problem on [a, b] x [0, T] with N interior points and M time steps.

    ``diffusion(x)``, ``source(x, t)`` and ``initial(x)`` must accept arrays.
    ``source`` may be the string ``"manufactured"`` to use the closed-form
    source for the current diffusion coefficient. When M is omitted the time
    step is matched to the space step (M = round(T / h)).
    """

    N: int
    a: float = 0.0
    b: float = 1.0
    T: float = 1.0
    M: int | None = None
    beta: float = 1.2
    lam: float = 1.5
    gamma1: float = 0.75
    diffusion: Callable = coefficient_d1
    source: Callable | str = "manufactured"
    initial: Callable = _zero_field
    exact: Callable | None = None

    def __post_init__(self):
        if self.N < 2:
            raise DomainError(f"N must be >= 2, got {self.N}")
        if not self.b > self.a:
            raise DomainError("need a < b")
        if not self.T > 0:
            raise DomainError("T must be positive")
        if self.M is None:
            self.M = max(1, int(round(self.T / self.h)))
        if self.M < 1:
            raise DomainError(f"M must be >= 1, got {self.M}")
        if isinstance(self.source, str):
            if self.source != "manufactured":
                raise DomainError(f"unknown source {self.source!r}")
            d, lam, beta = self.diffusion, self.lam, self.beta
            self.source = lambda x, t: manufactured_source(x, t, lam, beta, d(x))
            if self.exact is None:
                self.exact = lambda x, t: exact_solution(x, t, lam)

    @property
    def h(self) -> float:
        return (self.b - self.a) / (self.N + 1)

    @property
    def dt(self) -> float:
        return self.T / self.M

    @property
    def grid(self) -> np.ndarray:
        return self.a + self.h * np.arange(1, self.N + 1)

    def weights(self) -> TemperedWeights:
        gammas = solve_gammas(self.beta, self.gamma1)
        return tempered_weights(self.beta, self.lam, self.h, gammas, max(self.N, 2))


# ---------------------------------------------------------------- linear system


@dataclass(frozen=True, eq=False)
class DiscreteSystem:
    G: SymmetricToeplitz
    d: np.ndarray
    tau: TauMatrix
    grid: np.ndarray
    dt: float
    h: float
    diffusion: Callable = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.G.n

    def apply_A(self, v):
        return apply_A(self, v)

    def dense_A(self) -> np.ndarray:
        return np.eye(self.n) + self.d[:, None] * self.G.dense()


def g_first_column(weights: TemperedWeights, N: int, dt: float) -> np.ndarray:
    """-dt/(2 h^beta) * (2 (g_1 - rho), g_0 + g_2, g_3, ..., g_N)."""
    g = weights.g
    col = np.empty(N)
    col[0] = 2.0 * (g[1] - weights.rho)
    if N > 1:
        col[1] = g[0] + g[2]
    col[2:] = g[3:N + 1]
    return -dt / (2.0 * weights.h**weights.beta) * col


def build_system(config: ProblemConfig, weights: TemperedWeights | None = None) -> DiscreteSystem:
    weights = weights or config.weights()
    N = config.N
    if weights.K < N:
        raise InsufficientWeightsError(f"need K >= N = {N}, got K = {weights.K}")
    if not math.isclose(weights.h, config.h, rel_tol=1e-12):
        raise DomainError("weights were generated for a different step h")
    x = config.grid
    d = np.asarray(config.diffusion(x), dtype=float) * np.ones(N)
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise DomainError("diffusion coefficient must be finite and non-negative on the grid")
    d.setflags(write=False)
    G = SymmetricToeplitz(g_first_column(weights, N, config.dt))
    tau = tau_from_toeplitz(G, SineTransformPlan(N))
    return DiscreteSystem(G=G, d=d, tau=tau, grid=x, dt=config.dt, h=config.h,
                          diffusion=config.diffusion)


def _check_len(v, n, name):
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise ContractViolation(f"{name} must have length {n}, got shape {v.shape}")
    return v


def apply_A(sys: DiscreteSystem, v) -> np.ndarray:
    v = _check_len(v, sys.n, "v")
    return v + sys.d * sys.G.matvec(v)


def step_rhs(sys: DiscreteSystem, u_j, f_half, dt) -> np.ndarray:
    u_j = _check_len(u_j, sys.n, "u_j")
    f_half = _check_len(f_half, sys.n, "f_half")
    return u_j - sys.d * sys.G.matvec(u_j) + dt * f_half


@dataclass
class MarchResult:
    u: np.ndarray
    stats: list
    t_final: float

    @property
    def iterations(self) -> list[int]:
        return [s.iterations for s in self.stats]

    @property
    def avg_iterations(self) -> float:
        its = self.iterations
        return float(np.mean(its)) if its else 0.0


def time_march(config: ProblemConfig, sys: DiscreteSystem, linear_solver,
               observer=None) -> MarchResult:
    """Advance from u_0 to T.

    ``linear_solver(rhs)`` returns ``(x, stats)`` where ``stats`` has
    ``iterations`` and ``converged``. Non-convergence raises MarchFailure.
    ``observer(j, t, u)`` is called after each step if given.
    """
    x = sys.grid
    dt = config.dt
    u = np.asarray(config.initial(x), dtype=float) * np.ones(sys.n)
    all_stats = []
    for j in range(config.M):
        t_half = (j + 0.5) * dt
        rhs = step_rhs(sys, u, config.source(x, t_half), dt)
        u, stats = linear_solver(rhs)
        all_stats.append(stats)
        if not getattr(stats, "converged", True):
            raise MarchFailure(j, all_stats)
        if observer is not None:
            observer(j, (j + 1) * dt, u)
    return MarchResult(u=u, stats=all_stats, t_final=config.M * dt)


class DirectSolveStats:
    iterations = 0
    converged = True


def dense_direct_solver(sys: DiscreteSystem):
    """LU-factor the dense A once; used as an oracle for the time march."""
    import scipy.linalg

    lu = scipy.linalg.lu_factor(sys.dense_A())
    stats = DirectSolveStats()
    return lambda rhs: (scipy.linalg.lu_solve(lu, rhs), stats)
