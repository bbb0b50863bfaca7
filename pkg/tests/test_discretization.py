import math

import mpmath
import numpy as np
import pytest

from tempfrac.discretization import (ProblemConfig, apply_A, build_system,
                                     coefficient_d1, coefficient_d2,
                                     dense_direct_solver, exact_solution,
                                     manufactured_source, step_rhs, time_march)
from tempfrac.errors import (ContractViolation, DomainError,
                             InsufficientWeightsError, MarchFailure)
from tempfrac.krylov import GmresConfig, gmres
from tempfrac.preconditioners import build_tai
from tempfrac.weights import solve_gammas, tempered_weights


def scheme_matrix_oracle(N, beta, lam, gamma1, h, dt):
    """Dense G assembled row by row from the two shifted sums of the scheme."""
    g = tempered_weights(beta, lam, h, solve_gammas(beta, gamma1), N + 2)
    rho = g.rho
    L = np.zeros((N, N))
    for i in range(1, N + 1):
        for k in range(0, i + 2):          # left sum hits u_{i-k+1}
            j = i - k + 1
            if 1 <= j <= N:
                L[i - 1, j - 1] += g.g[k]
        for k in range(0, N - i + 3):      # right sum hits u_{i+k-1}
            j = i + k - 1
            if 1 <= j <= N:
                L[i - 1, j - 1] += g.g[k]
        L[i - 1, i - 1] -= 2 * rho
    return -dt / (2 * h**beta) * L


def test_build_system_matches_scheme_oracle():
    cfg = ProblemConfig(N=4, a=0.0, b=1.0, T=0.2, M=1, beta=1.2, lam=1.5, gamma1=0.75)
    assert cfg.h == pytest.approx(0.2) and cfg.dt == pytest.approx(0.2)
    sys = build_system(cfg)
    ref = scheme_matrix_oracle(4, 1.2, 1.5, 0.75, cfg.h, cfg.dt)
    np.testing.assert_allclose(sys.G.dense(), ref, rtol=0, atol=1e-13 * np.abs(ref).max())


@pytest.mark.parametrize("N", [5, 17, 64])
def test_build_system_matches_scheme_oracle_larger(N):
    cfg = ProblemConfig(N=N, beta=1.5, lam=0.7, gamma1=0.8)
    ref = scheme_matrix_oracle(N, 1.5, 0.7, 0.8, cfg.h, cfg.dt)
    np.testing.assert_allclose(build_system(cfg).G.dense(), ref, atol=1e-13 * np.abs(ref).max())


def test_zero_diffusion_gives_identity():
    cfg = ProblemConfig(N=8, diffusion=lambda x: 0 * x, source=lambda x, t: 0 * x)
    sys = build_system(cfg)
    np.testing.assert_array_equal(sys.dense_A(), np.eye(8))
    v = np.arange(8.0)
    np.testing.assert_array_equal(apply_A(sys, v), v)


def test_diagonal_of_g_positive():
    sys = build_system(ProblemConfig(N=16))
    assert sys.G.first_column[0] > 0


@pytest.mark.parametrize("N", [4, 16, 64])
@pytest.mark.parametrize("beta, gamma1", [(1.2, 0.75), (1.1, 0.554), (1.5, 0.72), (1.9, 0.954)])
def test_g_is_spd(N, beta, gamma1):
    G = build_system(ProblemConfig(N=N, beta=beta, gamma1=gamma1)).G.dense()
    assert np.linalg.eigvalsh(G).min() > 0


def test_row_identity():
    sys = build_system(ProblemConfig(N=64, diffusion=coefficient_d1))
    A = sys.dense_A()
    G = sys.G.dense()
    for i in range(sys.n):
        Ki = np.eye(sys.n) + sys.d[i] * G
        np.testing.assert_allclose(A[i], Ki[i], rtol=0, atol=1e-14 * np.abs(Ki[i]).max())


def test_apply_A_and_rhs_match_dense():
    sys = build_system(ProblemConfig(N=16, diffusion=coefficient_d1))
    rng = np.random.default_rng(4)
    v = rng.standard_normal(16)
    A = sys.dense_A()
    assert np.linalg.norm(apply_A(sys, v) - A @ v) <= 1e-12 * np.linalg.norm(A @ v)
    f = rng.standard_normal(16)
    ref = (2 * np.eye(16) - A) @ v + 0.3 * f
    np.testing.assert_allclose(step_rhs(sys, v, f, 0.3), ref, rtol=1e-12, atol=1e-12)
    assert not apply_A(sys, np.zeros(16)).any()
    assert not step_rhs(sys, np.zeros(16), np.zeros(16), 0.3).any()
    with pytest.raises(ContractViolation):
        apply_A(sys, np.ones(15))


def test_step_rhs_zero_diffusion():
    sys = build_system(ProblemConfig(N=6, diffusion=lambda x: 0 * x))
    u, f = np.arange(6.0), np.ones(6)
    np.testing.assert_array_equal(step_rhs(sys, u, f, 0.5), u + 0.5 * f)


def test_build_system_errors():
    with pytest.raises(DomainError):
        build_system(ProblemConfig(N=8, diffusion=lambda x: x - 0.5))
    cfg = ProblemConfig(N=8)
    short = tempered_weights(1.2, 1.5, cfg.h, solve_gammas(1.2, 0.75), 5)
    with pytest.raises(InsufficientWeightsError):
        build_system(cfg, short)


# ---------------------------------------------------------------- problem data

def test_exact_solution_values():
    assert exact_solution(0.0, 1.0, 1.5) == 0.0
    assert exact_solution(1.0, 1.0, 1.5) == 0.0
    assert exact_solution(0.3, 0.0, 1.5) == 0.0
    assert exact_solution(0.5, 1.0, 1.5) == pytest.approx(math.exp(-0.75) / 64, rel=1e-15)


def test_coefficients():
    assert coefficient_d1(0.0) == 1.0
    assert coefficient_d1(1.0) == pytest.approx(74.20657955128830, rel=1e-14)
    assert coefficient_d2(0.5) == pytest.approx(18.72675628135226, rel=1e-14)
    for x in (0.0, 1.0):
        with pytest.raises(DomainError):
            coefficient_d2(x)


def test_source_at_t0_is_time_derivative():
    x = np.linspace(0.05, 0.95, 7)
    np.testing.assert_allclose(manufactured_source(x, 0.0, 1.5, 1.2, coefficient_d1(x)),
                               np.exp(-1.5 * x) * x**3 * (1 - x) ** 3, rtol=1e-14)


def source_oracle(x, t, lam, beta, d):
    # 50-digit evaluation with the series constant written as 3^j (lam = 1.5)
    mpmath.mp.dps = 50
    x, t, lam, beta, d = (mpmath.mpf(v) for v in (x, t, lam, beta, d))
    bump = mpmath.e ** (-lam * x) * x**3 * (1 - x) ** 3
    left = sum((-1) ** m * mpmath.binomial(3, m) * mpmath.gamma(4 + m) / mpmath.gamma(4 + m - beta)
               * x ** (3 + m - beta) for m in range(4))
    right = sum(mpmath.mpf(3) ** j / mpmath.factorial(j)
                * sum((-1) ** m * mpmath.binomial(3, m) * mpmath.gamma(4 + m + j)
                      / mpmath.gamma(4 + m + j - beta) * (1 - x) ** (j + 3 + m - beta)
                      for m in range(4))
                for j in range(31))
    val = bump - t * d * (mpmath.e ** (-lam * x) * left + mpmath.e ** (lam * (x - 2)) * right) \
        + 2 * t * d * lam**beta * bump
    return float(val)


@pytest.mark.parametrize("x", [0.5, 0.1, 0.93])
def test_source_high_precision(x):
    d = float(coefficient_d1(x))
    ref = source_oracle(x, 0.5, 1.5, 1.2, d)
    assert manufactured_source(x, 0.5, 1.5, 1.2, d) == pytest.approx(ref, rel=1e-12, abs=1e-14)


# ---------------------------------------------------------------- time march

def test_march_single_step_no_dynamics():
    u0 = lambda x: np.sin(np.pi * x)
    cfg = ProblemConfig(N=10, M=1, diffusion=lambda x: 0 * x, source=lambda x, t: 0 * x,
                        initial=u0)
    sys = build_system(cfg)
    res = time_march(cfg, sys, lambda rhs: gmres(sys.apply_A, rhs))
    np.testing.assert_allclose(res.u, u0(cfg.grid), rtol=0, atol=1e-15)
    assert res.iterations == [1]


def test_march_matches_dense_direct():
    cfg = ProblemConfig(N=32, diffusion=coefficient_d1)
    sys = build_system(cfg)
    P = build_tai(sys, 8)
    tight = GmresConfig(tol=1e-13)
    res = time_march(cfg, sys, lambda rhs: gmres(sys.apply_A, rhs, apply_Pinv=P, config=tight))
    ref = time_march(cfg, sys, dense_direct_solver(sys))
    np.testing.assert_allclose(res.u, ref.u, rtol=0, atol=1e-8 * np.abs(ref.u).max())
    assert len(res.stats) == cfg.M and res.t_final == pytest.approx(1.0)


def test_march_failure_carries_step():
    cfg = ProblemConfig(N=16, diffusion=coefficient_d1)
    sys = build_system(cfg)
    observed = []
    with pytest.raises(MarchFailure) as info:
        time_march(cfg, sys, lambda rhs: gmres(sys.apply_A, rhs, config=GmresConfig(maxit=2)),
                   observer=lambda j, t, u: observed.append(j))
    assert info.value.step == 0 and observed == []


def test_constant_coefficient_symmetric_gmres_vs_direct():
    cfg = ProblemConfig(N=24, diffusion=lambda x: 3.0 + 0 * x)
    sys = build_system(cfg)
    A = sys.dense_A()
    np.testing.assert_allclose(A, A.T, atol=1e-14 * np.abs(A).max())
    b = np.random.default_rng(2).standard_normal(24)
    x, stats = gmres(sys.apply_A, b, config=GmresConfig(tol=1e-12))
    np.testing.assert_allclose(x, np.linalg.solve(A, b), rtol=1e-9, atol=1e-11)


def _max_error(N, coefficient):
    cfg = ProblemConfig(N=N, diffusion=coefficient)
    sys = build_system(cfg)
    P = build_tai(sys, 8)
    lefty = GmresConfig(side="left")
    res = time_march(cfg, sys, lambda rhs: gmres(sys.apply_A, rhs, apply_Pinv=P, config=lefty))
    return np.max(np.abs(res.u - cfg.exact(cfg.grid, res.t_final)))


def test_second_order_convergence_d1():
    errs = [_max_error(N, coefficient_d1) for N in (32, 64, 128, 256)]
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios >= 3.4) & (ratios <= 4.6)), ratios
